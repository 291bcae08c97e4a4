#include "ebm/usp.hpp"

#include <algorithm>
#include <cmath>

#include "ebm/csv.hpp"

namespace ebm::usp {

namespace {

constexpr double kCoincident = 1e-12;

Vector random_unit(Rng& rng, Eigen::Index dim) {
  Vector v(dim);
  double n = 0.0;
  do {
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.normal();
    n = v.norm();
  } while (n == 0.0);
  return v / n;
}

// Uniform-grid bucketing of a fixed point subset with cell edge epsilon.
// Lookups return candidate indices in ascending order, so sums over them
// match a brute-force scan of the sorted neighbor list exactly.
class NeighborGrid {
 public:
  NeighborGrid(const ParticleSet& particles, std::span<const std::size_t> members)
      : particles_(particles) {
    const auto& box = particles.domain;
    dims_ = box.dim();
    cells_per_axis_.resize(dims_);
    std::size_t total = 1;
    for (std::size_t a = 0; a < dims_; ++a) {
      const double extent = box.hi()(static_cast<Eigen::Index>(a)) - box.lo()(static_cast<Eigen::Index>(a));
      const auto c = static_cast<std::size_t>(std::ceil(extent / particles.epsilon));
      cells_per_axis_[a] = std::max<std::size_t>(c, 1);
      total *= cells_per_axis_[a];
    }
    buckets_.resize(total);
    for (std::size_t j : members) buckets_[cell_of(j)].push_back(j);
    for (auto& b : buckets_) std::sort(b.begin(), b.end());
  }

  static bool usable(const ParticleSet& particles) {
    if (particles.dim() > 3) return false;
    double cells = 1.0;
    for (std::size_t a = 0; a < particles.dim(); ++a) {
      const auto i = static_cast<Eigen::Index>(a);
      cells *= std::ceil((particles.domain.hi()(i) - particles.domain.lo()(i)) / particles.epsilon);
    }
    return cells <= 4e6;
  }

  std::vector<std::size_t> candidates(std::size_t i) const {
    std::vector<std::size_t> out;
    std::vector<std::size_t> coord = coords_of(i);
    std::vector<long> offset(dims_, -1);
    while (true) {
      bool valid = true;
      std::size_t flat = 0, stride = 1;
      for (std::size_t a = 0; a < dims_; ++a) {
        const long c = static_cast<long>(coord[a]) + offset[a];
        if (c < 0 || c >= static_cast<long>(cells_per_axis_[a])) {
          valid = false;
          break;
        }
        flat += static_cast<std::size_t>(c) * stride;
        stride *= cells_per_axis_[a];
      }
      if (valid) out.insert(out.end(), buckets_[flat].begin(), buckets_[flat].end());
      std::size_t a = 0;
      while (a < dims_ && offset[a] == 1) offset[a++] = -1;
      if (a == dims_) break;
      ++offset[a];
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::vector<std::size_t> coords_of(std::size_t j) const {
    std::vector<std::size_t> c(dims_);
    for (std::size_t a = 0; a < dims_; ++a) {
      const auto i = static_cast<Eigen::Index>(a);
      const double u = (particles_.points(i, static_cast<Eigen::Index>(j)) - particles_.domain.lo()(i)) /
                       particles_.epsilon;
      const long k = static_cast<long>(std::floor(u));
      c[a] = static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(cells_per_axis_[a]) - 1));
    }
    return c;
  }

  std::size_t cell_of(std::size_t j) const {
    const auto c = coords_of(j);
    std::size_t flat = 0, stride = 1;
    for (std::size_t a = 0; a < dims_; ++a) {
      flat += c[a] * stride;
      stride *= cells_per_axis_[a];
    }
    return flat;
  }

  const ParticleSet& particles_;
  std::size_t dims_ = 0;
  std::vector<std::size_t> cells_per_axis_;
  std::vector<std::vector<std::size_t>> buckets_;
};

void check_indices(std::span<const std::size_t> idx, std::size_t n, const char* what) {
  for (auto i : idx) {
    if (i >= n) throw InvalidArgument(std::string(what) + ": particle index out of range");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ParticleSet::ParticleSet(Points initial, double eps, dist::BoxDomain box)
    : points(std::move(initial)), epsilon(eps), domain(std::move(box)) {
  if (points.cols() < 1) throw InvalidArgument("particles: need at least one point");
  if (static_cast<std::size_t>(points.rows()) != domain.dim()) {
    throw InvalidArgument("particles: point/domain dimension mismatch");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("particles: epsilon must be positive");
  domain.project(points);
}

bool ParticleSet::inside_domain() const {
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    if (!domain.contains(points.col(j))) return false;
  }
  return true;
}

void UspConfig::validate(std::size_t n) const {
  if (max_steps < 1) throw InvalidArgument("usp: max_steps (n_m) must be >= 1");
  if (repel_steps < 1) throw InvalidArgument("usp: repel_steps (n_r) must be >= 1");
  if (combined && (max_steps != 1 || repel_steps != 1)) {
    throw InvalidArgument("usp: combined mode needs max_steps = repel_steps = 1");
  }
  if (lambda_size < 1 || lambda_size > n) throw InvalidArgument("usp: lambda_size must lie in [1, n]");
  if (estimation_size < 1 || estimation_size > n) throw InvalidArgument("usp: estimation_size must lie in [1, n]");
  if (gamma_size && *gamma_size > n - lambda_size) {
    throw InvalidArgument("usp: gamma_size exceeds n - lambda_size");
  }
  if (step_max && !(*step_max > 0.0)) throw InvalidArgument("usp: step_max must be positive");
  if (step_rep && !(*step_rep > 0.0)) throw InvalidArgument("usp: step_rep must be positive");
}

std::size_t UspConfig::resolved_gamma_size(std::size_t n) const {
  return gamma_size.value_or(std::min(lambda_size, n - lambda_size));
}

double UspConfig::resolved_step_max(const dist::BoxDomain& domain) const {
  return step_max.value_or(1e-3 * domain.diameter());
}

double UspConfig::resolved_step_rep(double epsilon) const { return step_rep.value_or(epsilon / 10.0); }

// ---------------------------------------------------------------------------

StepStats maximization_step(const model::EnergyModel& energy, ParticleSet& particles,
                            std::span<const std::size_t> indices, double step, std::size_t count) {
  if (!(step > 0.0)) throw InvalidArgument("maximization_step: step must be positive");
  check_indices(indices, particles.size(), "maximization_step");
  StepStats stats;
  if (indices.empty()) return stats;
  Points selected(particles.points.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    selected.col(static_cast<Eigen::Index>(k)) = particles.points.col(static_cast<Eigen::Index>(indices[k]));
  }
  for (std::size_t it = 0; it < count; ++it) {
    const Points grad = energy.grad_x_batch(selected);
    for (Eigen::Index k = 0; k < selected.cols(); ++k) {
      if (!grad.col(k).allFinite()) {
        ++stats.non_finite;
        continue;
      }
      selected.col(k) -= step * grad.col(k);
    }
    particles.domain.project(selected);
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    particles.points.col(static_cast<Eigen::Index>(indices[k])) = selected.col(static_cast<Eigen::Index>(k));
  }
  return stats;
}

Vector repulsion_gradient(const ParticleSet& particles, std::size_t i, std::span<const std::size_t> neighbors,
                          uint64_t tie_seed, std::size_t* coincident) {
  const Eigen::Index d = particles.points.rows();
  Vector g = Vector::Zero(d);
  const auto ui = particles.points.col(static_cast<Eigen::Index>(i));
  for (std::size_t j : neighbors) {
    if (j == i) continue;
    const Vector diff = ui - particles.points.col(static_cast<Eigen::Index>(j));
    const double dist = diff.norm();
    if (dist >= particles.epsilon) continue;
    if (dist < kCoincident) {
      const std::size_t lo = std::min(i, j), hi = std::max(i, j);
      Rng pair_rng(tie_seed, (static_cast<uint64_t>(lo) << 32) ^ static_cast<uint64_t>(hi));
      const Vector dir = random_unit(pair_rng, d);
      g += (i == lo) ? dir : Vector(-dir);
      if (coincident != nullptr) ++*coincident;
      continue;
    }
    g += diff / dist;
  }
  return g;
}

StepStats repulsion_step(ParticleSet& particles, std::span<const std::size_t> lambda,
                         std::span<const std::size_t> gamma, double step, std::size_t count, Rng& rng) {
  if (!(step > 0.0)) throw InvalidArgument("repulsion_step: step must be positive");
  check_indices(lambda, particles.size(), "repulsion_step");
  check_indices(gamma, particles.size(), "repulsion_step");
  std::vector<std::size_t> moving(lambda.begin(), lambda.end());
  std::sort(moving.begin(), moving.end());
  if (std::adjacent_find(moving.begin(), moving.end()) != moving.end()) {
    throw InvalidArgument("repulsion_step: duplicate index in Lambda");
  }
  std::vector<std::size_t> members = moving;
  for (auto g : gamma) {
    if (std::binary_search(moving.begin(), moving.end(), g)) {
      throw InvalidArgument("repulsion_step: Lambda and Gamma must be disjoint");
    }
    members.push_back(g);
  }
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());

  StepStats stats;
  const bool use_grid = members.size() > 64 && NeighborGrid::usable(particles);
  Points update(particles.points.rows(), static_cast<Eigen::Index>(moving.size()));
  for (std::size_t it = 0; it < count; ++it) {
    const uint64_t tie_seed = rng.next_u64();
    std::optional<NeighborGrid> grid;
    if (use_grid) grid.emplace(particles, members);
    for (std::size_t k = 0; k < moving.size(); ++k) {
      const std::size_t i = moving[k];
      Vector g;
      if (grid) {
        const auto cand = grid->candidates(i);
        g = repulsion_gradient(particles, i, cand, tie_seed, &stats.coincident);
      } else {
        g = repulsion_gradient(particles, i, members, tie_seed, &stats.coincident);
      }
      update.col(static_cast<Eigen::Index>(k)) = g;
    }
    for (std::size_t k = 0; k < moving.size(); ++k) {
      auto col = particles.points.col(static_cast<Eigen::Index>(moving[k]));
      col += step * update.col(static_cast<Eigen::Index>(k));
      for (Eigen::Index a = 0; a < col.size(); ++a) {
        col(a) = std::clamp(col(a), particles.domain.lo()(a), particles.domain.hi()(a));
      }
    }
  }
  return stats;
}

StepStats combined_step(const model::EnergyModel& energy, ParticleSet& particles,
                        std::span<const std::size_t> lambda, std::span<const std::size_t> gamma, double step_max,
                        double step_rep, Rng& rng) {
  if (!(step_max > 0.0) || !(step_rep > 0.0)) throw InvalidArgument("combined_step: steps must be positive");
  check_indices(lambda, particles.size(), "combined_step");
  check_indices(gamma, particles.size(), "combined_step");
  std::vector<std::size_t> moving(lambda.begin(), lambda.end());
  std::sort(moving.begin(), moving.end());
  if (std::adjacent_find(moving.begin(), moving.end()) != moving.end()) {
    throw InvalidArgument("combined_step: duplicate index in Lambda");
  }
  std::vector<std::size_t> members = moving;
  for (auto g : gamma) {
    if (std::binary_search(moving.begin(), moving.end(), g)) {
      throw InvalidArgument("combined_step: Lambda and Gamma must be disjoint");
    }
    members.push_back(g);
  }
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());

  StepStats stats;
  if (moving.empty()) return stats;
  Points selected(particles.points.rows(), static_cast<Eigen::Index>(moving.size()));
  for (std::size_t k = 0; k < moving.size(); ++k) {
    selected.col(static_cast<Eigen::Index>(k)) = particles.points.col(static_cast<Eigen::Index>(moving[k]));
  }
  const Points grad = energy.grad_x_batch(selected);
  const uint64_t tie_seed = rng.next_u64();
  std::optional<NeighborGrid> grid;
  if (members.size() > 64 && NeighborGrid::usable(particles)) grid.emplace(particles, members);
  const double eps = particles.epsilon;
  Points update = Points::Zero(selected.rows(), selected.cols());
  for (std::size_t k = 0; k < moving.size(); ++k) {
    const std::size_t i = moving[k];
    const auto kk = static_cast<Eigen::Index>(k);
    std::vector<std::size_t> cand;
    if (grid) {
      cand = grid->candidates(i);
    } else {
      cand = members;
    }
    bool violated = false;
    for (auto j : cand) {
      if (j != i && (particles.points.col(static_cast<Eigen::Index>(j)) - selected.col(kk)).norm() < eps) {
        violated = true;
        break;
      }
    }
    if (violated) {
      update.col(kk) = step_rep * repulsion_gradient(particles, i, cand, tie_seed, &stats.coincident);
    } else if (grad.col(kk).allFinite()) {
      update.col(kk) = -step_max * grad.col(kk);
    } else {
      ++stats.non_finite;
    }
  }
  selected += update;
  particles.domain.project(selected);
  for (std::size_t k = 0; k < moving.size(); ++k) {
    particles.points.col(static_cast<Eigen::Index>(moving[k])) = selected.col(static_cast<Eigen::Index>(k));
  }
  return stats;
}

RoundStats psusp_round(const model::EnergyModel& energy, ParticleSet& particles, const UspConfig& config,
                       Rng& rng) {
  const std::size_t n = particles.size();
  config.validate(n);
  const double step_max = config.resolved_step_max(particles.domain);
  const double step_rep = config.resolved_step_rep(particles.epsilon);
  const std::size_t gamma_size = config.resolved_gamma_size(n);
  RoundStats stats;
  std::vector<uint8_t> in_lambda(n);
  for (std::size_t r = 0; r < config.rounds; ++r) {
    const auto lambda = sample_without_replacement(n, config.lambda_size, rng);
    if (!config.combined) {
      const auto m = maximization_step(energy, particles, lambda, step_max, config.max_steps);
      stats.maximization.non_finite += m.non_finite;
    }
    std::fill(in_lambda.begin(), in_lambda.end(), 0);
    for (auto i : lambda) in_lambda[i] = 1;
    std::vector<std::size_t> rest;
    rest.reserve(n - lambda.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_lambda[i]) rest.push_back(i);
    }
    const auto gamma = sample_without_replacement(std::move(rest), gamma_size, rng);
    if (config.combined) {
      const auto st = combined_step(energy, particles, lambda, gamma, step_max, step_rep, rng);
      stats.maximization.non_finite += st.non_finite;
      stats.repulsion.coincident += st.coincident;
    } else {
      const auto rep = repulsion_step(particles, lambda, gamma, step_rep, config.repel_steps, rng);
      stats.repulsion.coincident += rep.coincident;
    }
    ++stats.rounds;
  }
  return stats;
}

std::vector<std::size_t> select_estimation_points(const ParticleSet& particles, std::size_t n_s, Rng& rng) {
  if (n_s > particles.size()) throw InvalidArgument("select_estimation_points: n_s exceeds particle count");
  auto idx = sample_without_replacement(particles.size(), n_s, rng);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double min_pairwise_distance(const Points& points) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < points.cols(); ++j) {
      best = std::min(best, (points.col(i) - points.col(j)).norm());
    }
  }
  return best;
}

void write_particles_csv(const std::string& path, const ParticleSet& particles,
                         const model::EnergyModel& energy) {
  std::vector<std::string> header{"particle"};
  for (std::size_t a = 0; a < particles.dim(); ++a) header.push_back("x" + std::to_string(a));
  header.emplace_back("energy");
  CsvWriter csv(path, header);
  const Vector e = energy.energy_batch(particles.points);
  for (Eigen::Index j = 0; j < particles.points.cols(); ++j) {
    csv.cell(static_cast<long long>(j));
    for (Eigen::Index a = 0; a < particles.points.rows(); ++a) csv.cell(particles.points(a, j));
    csv.cell(e(j));
    csv.end_row();
  }
}

Points read_particles_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  std::size_t dims = 0;
  while (true) {
    const std::string name = "x" + std::to_string(dims);
    if (std::find(table.header.begin(), table.header.end(), name) == table.header.end()) break;
    ++dims;
  }
  if (dims == 0) throw Error(path + ": no coordinate columns");
  Points out(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(table.rows.size()));
  const std::size_t id_col = table.column("particle");
  for (std::size_t a = 0; a < dims; ++a) {
    const std::size_t c = table.column("x" + std::to_string(a));
    for (const auto& row : table.rows) {
      const auto id = static_cast<Eigen::Index>(std::stoll(row.at(id_col)));
      if (id < 0 || id >= out.cols()) throw Error(path + ": particle id out of range");
      out(static_cast<Eigen::Index>(a), id) = std::stod(row.at(c));
    }
  }
  return out;
}

}  // namespace ebm::usp
