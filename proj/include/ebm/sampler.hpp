#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ebm/dist.hpp"
#include "ebm/model.hpp"
#include "ebm/rng.hpp"

namespace ebm::sampler {

// Langevin schedule. alpha is the gradient coefficient (step size), beta the
// noise variance per step (noise scale). Each schedule holds either a single
// constant or one entry per step.
struct LmcConfig {
  std::size_t steps = 40;
  std::vector<double> alpha{1e-3};
  std::vector<double> beta{1e-4};
  // When set, alpha_t / beta_t must equal rho at every step.
  std::optional<double> rho;
  // Positions are clamped into this box after every step.
  std::optional<dist::BoxDomain> clamp;
  // Per-chain gradient norm cap; off unless set.
  std::optional<double> grad_clip;

  void validate() const;
  double alpha_at(std::size_t t) const { return alpha.size() == 1 ? alpha[0] : alpha.at(t); }
  double beta_at(std::size_t t) const { return beta.size() == 1 ? beta[0] : beta.at(t); }
};

struct ChainBatch {
  ChainBatch() = default;
  explicit ChainBatch(Points initial)
      : positions(std::move(initial)), diverged(static_cast<std::size_t>(positions.cols()), 0) {}

  Points positions;
  // Nonzero once a chain produced a non-finite gradient or position. Such
  // chains are frozen and excluded from downstream estimates.
  std::vector<uint8_t> diverged;

  std::size_t size() const { return static_cast<std::size_t>(positions.cols()); }
  std::size_t diverged_count() const;
  Points healthy_positions() const;
};

struct StepOptions {
  const dist::BoxDomain* clamp = nullptr;
  std::optional<double> grad_clip;
};

// x' = x - (alpha / 2) grad E(x) + sqrt(beta) eps, eps ~ N(0, I).
// Noise is drawn for every chain (diverged or not) in chain-major order.
ChainBatch lmc_step(const model::EnergyModel& energy, ChainBatch batch, double alpha, double beta,
                    Rng& rng, const StepOptions& options = {});

struct SrlmcResult {
  ChainBatch chains;
  Vector displacement;  // |x_T - x_0| per chain
  std::size_t diverged = 0;
};

// T composed lmc_step calls. If `trace` is non-null it receives the positions
// at t = 0..T.
SrlmcResult run_srlmc(const model::EnergyModel& energy, ChainBatch init, const LmcConfig& config,
                      Rng& rng, std::vector<Points>* trace = nullptr);

// Columns: chain, t, coordinates.
void write_chain_trace_csv(const std::string& path, const std::vector<Points>& trace);

// Bounded FIFO of past sampler outputs.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t dim, double reinit_rate);

  std::size_t capacity() const { return static_cast<std::size_t>(storage_.cols()); }
  std::size_t dim() const { return static_cast<std::size_t>(storage_.rows()); }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  double reinit_rate() const { return reinit_rate_; }

  void push(const Points& batch);
  // Pushes only non-diverged chains.
  void push(const ChainBatch& batch);
  // Stored samples, oldest first.
  Points contents() const;

  // Each chain starts from a proposal draw with probability reinit_rate and
  // from a uniformly chosen stored sample otherwise (always the proposal when
  // the buffer is empty).
  ChainBatch draw_init(const dist::Proposal& proposal, std::size_t count, Rng& rng) const;

 private:
  Points storage_;
  std::size_t head_ = 0;  // next write slot
  std::size_t count_ = 0;
  double reinit_rate_;
};

struct Moments {
  Vector mean;
  Vector variance;
  std::size_t samples = 0;
};

// Runs constant-(alpha, beta) Langevin chains from `init` for `steps` steps and
// returns per-coordinate moments pooled over all chains and all steps after
// the first burn_in_fraction of the run.
Moments long_run_moments(const model::EnergyModel& energy, const Points& init, double alpha,
                         double beta, std::size_t steps, double burn_in_fraction, Rng& rng);

}  // namespace ebm::sampler
