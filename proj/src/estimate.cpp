#include "ebm/estimate.hpp"

#include <cmath>
#include <limits>

#include "ebm/csv.hpp"

namespace ebm::estimate {

WeightVector weights_from_energies(const Vector& energies) {
  if (energies.size() == 0) throw InvalidArgument("snis_weights: need at least one point");
  Vector logits(energies.size());
  bool any_finite = false;
  for (Eigen::Index i = 0; i < energies.size(); ++i) {
    if (std::isfinite(energies(i))) {
      logits(i) = -energies(i);
      any_finite = true;
    } else {
      logits(i) = -std::numeric_limits<double>::infinity();
    }
  }
  if (!any_finite) throw InvalidArgument("snis_weights: no point has a finite energy");
  const double lse = dist::log_sum_exp(logits);
  WeightVector w;
  w.log_weights = (logits.array() - lse).matrix();
  w.weights = w.log_weights.array().exp().matrix();
  return w;
}

WeightVector snis_weights(const model::EnergyModel& energy, const Points& points) {
  return weights_from_energies(energy.energy_batch(points));
}

WeightVector uniform_weights(std::size_t count) {
  if (count == 0) throw InvalidArgument("uniform_weights: count must be positive");
  const auto m = static_cast<Eigen::Index>(count);
  WeightVector w;
  w.weights = Vector::Constant(m, 1.0 / static_cast<double>(count));
  w.log_weights = Vector::Constant(m, -std::log(static_cast<double>(count)));
  return w;
}

model::ParamVector mle_gradient(const model::EnergyModel& energy, const WeightVector& weights,
                                const Points& points, const Points& data) {
  if (static_cast<Eigen::Index>(weights.size()) != points.cols()) {
    throw InvalidArgument("mle_gradient: weights are not aligned with points");
  }
  if (data.cols() == 0) throw InvalidArgument("mle_gradient: empty data batch");
  const Vector model_term = energy.grad_theta_weighted(points, weights.weights);
  const Vector data_term = energy.grad_theta_weighted(data, uniform_weights(static_cast<std::size_t>(data.cols())).weights);
  if (model_term.size() != data_term.size() ||
      model_term.size() != static_cast<Eigen::Index>(energy.params().size())) {
    throw InvalidArgument("mle_gradient: gradient layout mismatch");
  }
  return model::ParamVector(energy.params().layout(), model_term - data_term);
}

model::ParamVector mle_gradient(const model::EnergyModel& energy, const WeightVector& weights,
                                const Points& points, const Vector& data_weights, const Points& data) {
  if (static_cast<Eigen::Index>(weights.size()) != points.cols() || data_weights.size() != data.cols()) {
    throw InvalidArgument("mle_gradient: weights are not aligned with points");
  }
  if (data.cols() == 0) throw InvalidArgument("mle_gradient: empty data set");
  const Vector model_term = energy.grad_theta_weighted(points, weights.weights);
  const Vector data_term = energy.grad_theta_weighted(data, data_weights);
  return model::ParamVector(energy.params().layout(), model_term - data_term);
}

// ---------------------------------------------------------------------------
// Optimizers

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t parameter_count) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw InvalidArgument("optimizer: learning rate must be positive");
  if (config_.kind == OptimizerKind::adam) {
    if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) ||
        !(config_.epsilon > 0.0)) {
      throw InvalidArgument("optimizer: invalid adam coefficients");
    }
    first_moment_ = Vector::Zero(static_cast<Eigen::Index>(parameter_count));
    second_moment_ = Vector::Zero(static_cast<Eigen::Index>(parameter_count));
  }
}

bool Optimizer::step(model::ParamVector& params, const model::ParamVector& gradient) {
  if (!params.same_layout(gradient)) throw InvalidArgument("optimizer: layout mismatch");
  if (!gradient.all_finite()) {
    ++skipped_;
    return false;
  }
  const Vector& g = gradient.values();
  if (config_.kind == OptimizerKind::sgd) {
    params.values() += config_.learning_rate * g;
    return true;
  }
  ++steps_;
  first_moment_ = config_.beta1 * first_moment_ + (1.0 - config_.beta1) * g;
  second_moment_ = config_.beta2 * second_moment_ + (1.0 - config_.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  params.values().array() += config_.learning_rate * (first_moment_.array() / c1) /
                             ((second_moment_.array() / c2).sqrt() + config_.epsilon);
  return true;
}

// ---------------------------------------------------------------------------
// Training

std::string to_string(Method method) {
  switch (method) {
    case Method::srlmc: return "srlmc";
    case Method::riemann: return "riemann";
    case Method::psusp: return "psusp";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "srlmc") return Method::srlmc;
  if (name == "riemann") return Method::riemann;
  if (name == "psusp") return Method::psusp;
  throw InvalidArgument("unknown method '" + name + "'");
}

void TrainConfig::validate(std::size_t input_dim) const {
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (early_stop && plateau_window < 1) throw InvalidArgument("train: plateau_window must be >= 1");
  switch (method) {
    case Method::srlmc:
      srlmc.lmc.validate();
      if (srlmc.proposal.dim() != input_dim) throw InvalidArgument("train: proposal dimension mismatch");
      if (srlmc.use_buffer && srlmc.buffer_capacity < 1) throw InvalidArgument("train: buffer capacity must be >= 1");
      if (!(srlmc.reinit_rate >= 0.0 && srlmc.reinit_rate <= 1.0)) {
        throw InvalidArgument("train: reinit_rate must lie in [0, 1]");
      }
      break;
    case Method::riemann:
      if (riemann.domain.dim() != input_dim) throw InvalidArgument("train: riemann domain dimension mismatch");
      if (riemann.points < 1) throw InvalidArgument("train: riemann points must be >= 1");
      if (riemann.grid && input_dim != 1) throw InvalidArgument("train: riemann grid points are 1-D only");
      break;
    case Method::psusp:
      if (psusp.domain.dim() != input_dim) throw InvalidArgument("train: psusp domain dimension mismatch");
      if (psusp.init.dim() != input_dim) throw InvalidArgument("train: psusp init dimension mismatch");
      if (!(psusp.epsilon > 0.0)) throw InvalidArgument("train: psusp epsilon must be positive");
      psusp.usp.validate(psusp.particles);
      break;
  }
}

namespace {

Points gather(const Points& all, const std::vector<std::size_t>& idx) {
  Points out(all.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = all.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

bool snapshots_enabled(const TrainConfig& config, std::size_t dim) {
  return config.snapshot_every > 0 && dim <= 2 && config.eval_domain.dim() == dim &&
         config.eval_resolution.size() == dim;
}

}  // namespace

TrainResult train(const model::EnergyModel& initial, const dist::GaussianMixture& target,
                  const TrainConfig& config) {
  const std::size_t dim = initial.input_dim();
  if (target.dim() != dim) throw InvalidArgument("train: target/model dimension mismatch");
  config.validate(dim);

  TrainResult result;
  result.model = initial.clone();
  model::EnergyModel& energy = *result.model;
  Optimizer optimizer(config.optimizer, energy.params().size());

  Rng data_rng(config.seed, 1);
  Rng chain_rng(config.seed, 2);
  Rng usp_rng(config.seed, 3);
  Rng point_rng(config.seed, 4);

  std::optional<dist::DensityGrid> target_grid;
  if (snapshots_enabled(config, dim)) {
    target_grid = dist::mixture_grid(target, config.eval_domain, config.eval_resolution);
  }
  auto take_snapshot = [&](std::size_t iteration) {
    if (!target_grid) return;
    const auto q = dist::quadrature_normalize(energy, 1.0, config.eval_domain, config.eval_resolution);
    result.trace.snapshots.push_back({iteration, dist::tv_distance(q.grid, *target_grid), q.log_z});
  };

  Points fixed_points;
  switch (config.method) {
    case Method::srlmc:
      if (config.srlmc.use_buffer) {
        result.buffer.emplace(config.srlmc.buffer_capacity, dim, config.srlmc.reinit_rate);
      }
      break;
    case Method::riemann:
      if (config.riemann.grid) {
        fixed_points = dist::grid_cell_centers(config.riemann.domain, {config.riemann.points});
      }
      break;
    case Method::psusp:
      result.particles.emplace(config.psusp.init.sample(config.psusp.particles, usp_rng), config.psusp.epsilon,
                               config.psusp.domain);
      break;
  }
  const std::size_t chains = config.srlmc.chains == 0 ? config.batch_size : config.srlmc.chains;

  take_snapshot(0);
  // Finite gradient norms only, for the plateau test.
  std::vector<double> norms;
  double window_sum = 0.0, previous_window_sum = 0.0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Points data = target.sample(config.batch_size, data_rng);
    Points points;
    WeightVector weights;
    std::size_t diverged = 0;
    switch (config.method) {
      case Method::srlmc: {
        if (config.srlmc.data_noise) {
          for (Eigen::Index j = 0; j < data.cols(); ++j) {
            for (Eigen::Index i = 0; i < data.rows(); ++i) data(i, j) += *config.srlmc.data_noise * data_rng.normal();
          }
        }
        sampler::ChainBatch init = result.buffer
                                       ? result.buffer->draw_init(config.srlmc.proposal, chains, chain_rng)
                                       : sampler::ChainBatch(config.srlmc.proposal.sample(chains, chain_rng));
        auto run = sampler::run_srlmc(energy, std::move(init), config.srlmc.lmc, chain_rng);
        diverged = run.diverged;
        if (result.buffer) result.buffer->push(run.chains);
        points = run.chains.healthy_positions();
        break;
      }
      case Method::riemann:
        points = config.riemann.grid ? fixed_points : config.riemann.domain.sample(config.riemann.points, point_rng);
        break;
      case Method::psusp: {
        auto stats = usp::psusp_round(energy, *result.particles, config.psusp.usp, usp_rng);
        result.trace.usp_non_finite += stats.maximization.non_finite;
        result.trace.usp_coincident += stats.repulsion.coincident;
        const auto idx = usp::select_estimation_points(*result.particles, config.psusp.usp.estimation_size, usp_rng);
        points = gather(result.particles->points, idx);
        break;
      }
    }
    result.trace.diverged_total += diverged;

    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    if (points.cols() > 0) {
      weights = config.method == Method::srlmc ? uniform_weights(static_cast<std::size_t>(points.cols()))
                                               : snis_weights(energy, points);
      const model::ParamVector gradient = mle_gradient(energy, weights, points, data);
      grad_norm = gradient.values().norm();
      model::ParamVector params = energy.params();
      if (optimizer.step(params, gradient)) energy.set_params(params);
    } else {
      ++result.trace.skipped_updates;
    }
    result.trace.rows.push_back({it + 1, grad_norm, diverged});
    result.trace.iterations_run = it + 1;
    result.last_points = std::move(points);
    if ((it + 1) % std::max<std::size_t>(config.snapshot_every, 1) == 0) take_snapshot(it + 1);

    if (config.early_stop && std::isfinite(grad_norm)) {
      const std::size_t w = config.plateau_window;
      norms.push_back(grad_norm);
      const std::size_t n = norms.size();
      window_sum += grad_norm;
      if (n > w) {
        window_sum -= norms[n - 1 - w];
        previous_window_sum += norms[n - 1 - w];
      }
      if (n > 2 * w) previous_window_sum -= norms[n - 1 - 2 * w];
      if (n >= 2 * w && n % w == 0 && previous_window_sum > 0.0 &&
          std::abs(window_sum - previous_window_sum) / previous_window_sum < config.plateau_tol) {
        result.trace.stopped_early = true;
        break;
      }
    }
  }
  result.trace.skipped_updates += optimizer.skipped();
  return result;
}

void write_trace_csv(const std::string& path, const TrainTrace& trace) {
  CsvWriter csv(path, {"iteration", "grad_norm", "diverged"});
  for (const auto& r : trace.rows) csv.cell(r.iteration).cell(r.grad_norm).cell(r.diverged).end_row();
}

void write_snapshots_csv(const std::string& path, const TrainTrace& trace) {
  CsvWriter csv(path, {"iteration", "tv_to_target", "log_z"});
  for (const auto& s : trace.snapshots) csv.cell(s.iteration).cell(s.tv_to_target).cell(s.log_z).end_row();
}

}  // namespace ebm::estimate
