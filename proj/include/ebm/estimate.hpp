#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ebm/dist.hpp"
#include "ebm/model.hpp"
#include "ebm/sampler.hpp"
#include "ebm/usp.hpp"

namespace ebm::estimate {

// Self-normalized weights over a point set.
struct WeightVector {
  Vector log_weights;
  Vector weights;

  std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
};

// w_i = exp(-E_i) / sum_j exp(-E_j), via log-sum-exp. Non-finite energies get
// zero weight; rejects the set if no energy is finite.
WeightVector weights_from_energies(const Vector& energies);
WeightVector snis_weights(const model::EnergyModel& energy, const Points& points);
WeightVector uniform_weights(std::size_t count);

// Ascent direction of the log-likelihood:
//   sum_i w_i grad_theta E(u_i) - mean_j grad_theta E(x_j).
model::ParamVector mle_gradient(const model::EnergyModel& energy, const WeightVector& weights,
                                const Points& points, const Points& data);

// Same gradient with an explicitly weighted data term (e.g. quadrature
// weights of the target law).
model::ParamVector mle_gradient(const model::EnergyModel& energy, const WeightVector& weights,
                                const Points& points, const Vector& data_weights, const Points& data);

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

// Gradient ascent: parameters move along +gradient.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t parameter_count);

  // Returns false (and leaves params untouched) for non-finite gradients.
  bool step(model::ParamVector& params, const model::ParamVector& gradient);
  std::size_t skipped() const { return skipped_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  Vector first_moment_;
  Vector second_moment_;
  std::size_t steps_ = 0;
  std::size_t skipped_ = 0;
};

enum class Method { srlmc, riemann, psusp };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct SrlmcSettings {
  sampler::LmcConfig lmc;
  bool use_buffer = true;
  std::size_t buffer_capacity = 50000;
  double reinit_rate = 0.05;
  // 0 means one chain per data sample.
  std::size_t chains = 0;
  dist::Proposal proposal;
  // Stddev of Gaussian noise added to data batches; off when unset.
  std::optional<double> data_noise;
};

struct RiemannSettings {
  dist::BoxDomain domain = dist::BoxDomain::cube(1, -1.0, 1.0);
  std::size_t points = 1024;
  // Midpoint grid when true (1-D only), fresh i.i.d. uniform draws otherwise.
  bool grid = true;
};

struct PsuspSettings {
  usp::UspConfig usp;
  std::size_t particles = 5000;
  double epsilon = 0.05;
  dist::BoxDomain domain = dist::BoxDomain::cube(2, -1.5, 1.5);
  dist::Proposal init;
};

struct TrainConfig {
  Method method = Method::riemann;
  std::size_t iterations = 5000;
  std::size_t batch_size = 1000;
  OptimizerConfig optimizer;
  uint64_t seed = 0;
  SrlmcSettings srlmc;
  RiemannSettings riemann;
  PsuspSettings psusp;

  // Density snapshots (TV to target) every snapshot_every iterations on the
  // evaluation grid; 0 disables them.
  std::size_t snapshot_every = 100;
  dist::BoxDomain eval_domain = dist::BoxDomain::cube(1, -1.0, 1.0);
  std::vector<std::size_t> eval_resolution{1024};

  // Checked every `plateau_window` finite gradient norms: stop once the
  // mean over the last window differs from the previous window by less than
  // plateau_tol (relative).
  bool early_stop = true;
  std::size_t plateau_window = 500;
  double plateau_tol = 1e-3;

  void validate(std::size_t input_dim) const;
};

struct TraceRow {
  std::size_t iteration = 0;
  double grad_norm = 0.0;
  std::size_t diverged = 0;
};

struct Snapshot {
  std::size_t iteration = 0;
  double tv_to_target = 0.0;
  double log_z = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  std::vector<Snapshot> snapshots;
  std::size_t iterations_run = 0;
  bool stopped_early = false;
  std::size_t diverged_total = 0;
  std::size_t skipped_updates = 0;
  std::size_t usp_non_finite = 0;
  std::size_t usp_coincident = 0;
};

struct TrainResult {
  std::unique_ptr<model::EnergyModel> model;
  TrainTrace trace;
  std::optional<sampler::ReplayBuffer> buffer;
  std::optional<usp::ParticleSet> particles;
  // Estimation points of the last iteration (chain outputs, integration
  // points, or selected particles).
  Points last_points;
};

TrainResult train(const model::EnergyModel& initial, const dist::GaussianMixture& target,
                  const TrainConfig& config);

// Columns: iteration, grad_norm, diverged.
void write_trace_csv(const std::string& path, const TrainTrace& trace);
// Columns: iteration, tv_to_target, log_z.
void write_snapshots_csv(const std::string& path, const TrainTrace& trace);

}  // namespace ebm::estimate
