#include "ebm/sampler.hpp"

#include <cmath>

#include "ebm/csv.hpp"

namespace ebm::sampler {

void LmcConfig::validate() const {
  if (steps < 1) throw InvalidArgument("lmc: steps must be >= 1");
  auto check_len = [&](const std::vector<double>& s, const char* name) {
    if (s.size() != 1 && s.size() != steps) {
      throw InvalidArgument(std::string("lmc: ") + name + " must hold 1 or `steps` entries");
    }
  };
  check_len(alpha, "alpha");
  check_len(beta, "beta");
  for (std::size_t t = 0; t < steps; ++t) {
    if (!(alpha_at(t) > 0.0)) throw InvalidArgument("lmc: alpha must be positive");
    if (!(beta_at(t) >= 0.0)) throw InvalidArgument("lmc: beta must be non-negative");
    if (rho && std::abs(alpha_at(t) / beta_at(t) - *rho) >= 1e-12 * std::max(1.0, *rho)) {
      throw InvalidArgument("lmc: alpha/beta differs from the declared rho at step " + std::to_string(t));
    }
  }
  if (rho && !(*rho > 0.0)) throw InvalidArgument("lmc: rho must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw InvalidArgument("lmc: grad_clip must be positive");
}

std::size_t ChainBatch::diverged_count() const {
  std::size_t n = 0;
  for (auto d : diverged) n += d != 0;
  return n;
}

Points ChainBatch::healthy_positions() const {
  Points out(positions.rows(), static_cast<Eigen::Index>(size() - diverged_count()));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < size(); ++j) {
    if (!diverged[j]) out.col(k++) = positions.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

ChainBatch lmc_step(const model::EnergyModel& energy, ChainBatch batch, double alpha, double beta,
                    Rng& rng, const StepOptions& options) {
  if (!(alpha > 0.0) || !(beta >= 0.0)) throw InvalidArgument("lmc_step: need alpha > 0, beta >= 0");
  Points& x = batch.positions;
  // Frozen chains may hold non-finite coordinates; evaluate them at the origin
  // and ignore the result.
  Points eval = x;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (batch.diverged[j]) eval.col(static_cast<Eigen::Index>(j)).setZero();
  }
  const Points grad = energy.grad_x_batch(eval);
  const double half_alpha = alpha / 2.0;
  const double noise_scale = std::sqrt(beta);
  Vector next(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto jj = static_cast<std::size_t>(j);
    double clip = 1.0;
    if (options.grad_clip) {
      const double n = grad.col(j).norm();
      if (n > *options.grad_clip) clip = *options.grad_clip / n;
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      next(i) = x(i, j) - half_alpha * (clip * grad(i, j)) + noise_scale * rng.normal();
    }
    if (batch.diverged[jj]) continue;
    if (!grad.col(j).allFinite() || !next.allFinite()) {
      batch.diverged[jj] = 1;
      continue;
    }
    x.col(j) = next;
  }
  if (options.clamp != nullptr) options.clamp->project(x);
  return batch;
}

SrlmcResult run_srlmc(const model::EnergyModel& energy, ChainBatch init, const LmcConfig& config,
                      Rng& rng, std::vector<Points>* trace) {
  config.validate();
  const Points start = init.positions;
  StepOptions options;
  if (config.clamp) options.clamp = &*config.clamp;
  options.grad_clip = config.grad_clip;
  if (trace != nullptr) {
    trace->clear();
    trace->push_back(init.positions);
  }
  ChainBatch chains = std::move(init);
  for (std::size_t t = 0; t < config.steps; ++t) {
    chains = lmc_step(energy, std::move(chains), config.alpha_at(t), config.beta_at(t), rng, options);
    if (trace != nullptr) trace->push_back(chains.positions);
  }
  SrlmcResult result;
  result.displacement = (chains.positions - start).colwise().norm().transpose();
  result.diverged = chains.diverged_count();
  result.chains = std::move(chains);
  return result;
}

void write_chain_trace_csv(const std::string& path, const std::vector<Points>& trace) {
  if (trace.empty()) throw InvalidArgument("chain trace is empty");
  std::vector<std::string> header{"chain", "t"};
  for (Eigen::Index a = 0; a < trace.front().rows(); ++a) header.push_back("x" + std::to_string(a));
  CsvWriter csv(path, header);
  for (Eigen::Index c = 0; c < trace.front().cols(); ++c) {
    for (std::size_t t = 0; t < trace.size(); ++t) {
      csv.cell(static_cast<long long>(c)).cell(t);
      for (Eigen::Index a = 0; a < trace[t].rows(); ++a) csv.cell(trace[t](a, c));
      csv.end_row();
    }
  }
}

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t dim, double reinit_rate)
    : storage_(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(capacity)),
      reinit_rate_(reinit_rate) {
  if (capacity == 0) throw InvalidArgument("replay buffer: capacity must be positive");
  if (dim == 0) throw InvalidArgument("replay buffer: dim must be positive");
  if (!(reinit_rate >= 0.0 && reinit_rate <= 1.0)) {
    throw InvalidArgument("replay buffer: reinit_rate must lie in [0, 1]");
  }
}

void ReplayBuffer::push(const Points& batch) {
  if (batch.rows() != storage_.rows()) throw InvalidArgument("replay buffer: dimension mismatch");
  for (Eigen::Index j = 0; j < batch.cols(); ++j) {
    storage_.col(static_cast<Eigen::Index>(head_)) = batch.col(j);
    head_ = (head_ + 1) % capacity();
    if (count_ < capacity()) ++count_;
  }
}

void ReplayBuffer::push(const ChainBatch& batch) { push(batch.healthy_positions()); }

Points ReplayBuffer::contents() const {
  Points out(storage_.rows(), static_cast<Eigen::Index>(count_));
  const std::size_t oldest = (head_ + capacity() - count_) % capacity();
  for (std::size_t k = 0; k < count_; ++k) {
    out.col(static_cast<Eigen::Index>(k)) = storage_.col(static_cast<Eigen::Index>((oldest + k) % capacity()));
  }
  return out;
}

ChainBatch ReplayBuffer::draw_init(const dist::Proposal& proposal, std::size_t count, Rng& rng) const {
  if (proposal.dim() != dim()) throw InvalidArgument("replay buffer: proposal dimension mismatch");
  Points init(storage_.rows(), static_cast<Eigen::Index>(count));
  const std::size_t oldest = (head_ + capacity() - count_) % capacity();
  for (Eigen::Index j = 0; j < init.cols(); ++j) {
    if (count_ == 0 || rng.uniform() < reinit_rate_) {
      init.col(j) = proposal.sample(1, rng).col(0);
    } else {
      const std::size_t k = (oldest + rng.below(count_)) % capacity();
      init.col(j) = storage_.col(static_cast<Eigen::Index>(k));
    }
  }
  return ChainBatch(std::move(init));
}

// ---------------------------------------------------------------------------

Moments long_run_moments(const model::EnergyModel& energy, const Points& init, double alpha,
                         double beta, std::size_t steps, double burn_in_fraction, Rng& rng) {
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
    throw InvalidArgument("long_run_moments: burn-in fraction must lie in [0, 1)");
  }
  const auto burn_in = static_cast<std::size_t>(std::floor(burn_in_fraction * static_cast<double>(steps)));
  const Eigen::Index d = init.rows();
  const Eigen::Index chains = init.cols();
  // Per-chain Welford accumulators, merged at the end in chain order.
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(d, chains);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(d, chains);
  std::size_t kept = 0;
  ChainBatch batch(init);
  for (std::size_t t = 0; t < steps; ++t) {
    batch = lmc_step(energy, std::move(batch), alpha, beta, rng);
    if (t < burn_in) continue;
    ++kept;
    const double inv = 1.0 / static_cast<double>(kept);
    const Eigen::MatrixXd delta = batch.positions - mean;
    mean += delta * inv;
    m2.array() += delta.array() * (batch.positions - mean).array();
  }
  if (batch.diverged_count() > 0) throw Error("long_run_moments: chains diverged");
  Moments out;
  out.mean = Vector::Zero(d);
  out.variance = Vector::Zero(d);
  double n = 0.0;
  Vector total_m2 = Vector::Zero(d);
  for (Eigen::Index c = 0; c < chains; ++c) {
    const double nb = static_cast<double>(kept);
    const Vector delta = mean.col(c) - out.mean;
    const double nn = n + nb;
    out.mean += delta * (nb / nn);
    total_m2 += m2.col(c) + delta.cwiseProduct(delta) * (n * nb / nn);
    n = nn;
  }
  out.samples = kept * static_cast<std::size_t>(chains);
  out.variance = total_m2 / (n - 1.0);
  return out;
}

}  // namespace ebm::sampler
