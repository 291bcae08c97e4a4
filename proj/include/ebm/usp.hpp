#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebm/dist.hpp"
#include "ebm/model.hpp"
#include "ebm/rng.hpp"

namespace ebm::usp {

// Partition points u_1..u_n inside a box, with target separation epsilon.
struct ParticleSet {
  Points points;
  double epsilon = 0.05;
  dist::BoxDomain domain;

  ParticleSet() = default;
  ParticleSet(Points initial, double epsilon, dist::BoxDomain domain);

  std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
  std::size_t dim() const { return static_cast<std::size_t>(points.rows()); }
  bool inside_domain() const;
};

struct UspConfig {
  std::size_t max_steps = 1;    // n_m, maximization PGA steps per round
  std::size_t repel_steps = 1;  // n_r, repulsion PGA steps per round
  std::size_t rounds = 50;      // N, rounds per parameter update
  std::size_t lambda_size = 1000;
  // |Gamma|; defaults to |Lambda|, capped at n - |Lambda|.
  std::optional<std::size_t> gamma_size;
  std::size_t estimation_size = 5000;  // n_s
  // Defaults: 1e-3 * diam(domain) and epsilon / 10.
  std::optional<double> step_max;
  std::optional<double> step_rep;
  // With n_m = n_r = 1: one pass per round where each Lambda particle takes
  // a repulsion step if it has a neighbor closer than epsilon and a
  // maximization step otherwise.
  bool combined = false;

  void validate(std::size_t particle_count) const;
  std::size_t resolved_gamma_size(std::size_t particle_count) const;
  double resolved_step_max(const dist::BoxDomain& domain) const;
  double resolved_step_rep(double epsilon) const;

  bool operator==(const UspConfig&) const = default;
};

struct StepStats {
  std::size_t non_finite = 0;   // gradient evaluations left unapplied
  std::size_t coincident = 0;   // pairs resolved with a random direction
};

// `count` iterations of u <- project(u - step * grad E(u)) for every selected
// particle. Descending the energy ascends log q, so Z is never needed.
StepStats maximization_step(const model::EnergyModel& energy, ParticleSet& particles,
                            std::span<const std::size_t> indices, double step, std::size_t count);

// Ascent direction for particle i of sum_j min(|u_i - u_j|, eps): the sum of
// unit vectors (u_i - u_j)/|u_i - u_j| over neighbors closer than eps.
// Coincident pairs (distance < 1e-12) use a random unit direction derived from
// `tie_seed` and the pair, antisymmetric between the two members.
Vector repulsion_gradient(const ParticleSet& particles, std::size_t i,
                          std::span<const std::size_t> neighbors, uint64_t tie_seed,
                          std::size_t* coincident = nullptr);

// `count` projected ascent iterations moving only Lambda particles, each
// repelled by Lambda and Gamma. Gamma particles are read-only anchors. Each
// iteration evaluates every gradient against one snapshot and then applies
// them together.
StepStats repulsion_step(ParticleSet& particles, std::span<const std::size_t> lambda,
                         std::span<const std::size_t> gamma, double step, std::size_t count, Rng& rng);

struct RoundStats {
  std::size_t rounds = 0;
  StepStats maximization;
  StepStats repulsion;
};

// One combined iteration (see UspConfig::combined) over Lambda, with Lambda
// and Gamma as neighbors.
StepStats combined_step(const model::EnergyModel& energy, ParticleSet& particles,
                        std::span<const std::size_t> lambda, std::span<const std::size_t> gamma, double step_max,
                        double step_rep, Rng& rng);

// N repetitions of: sample Lambda, n_m maximization steps on Lambda, sample
// Gamma from the rest, n_r repulsion steps. In combined mode each round is a
// single combined_step.
RoundStats psusp_round(const model::EnergyModel& energy, ParticleSet& particles, const UspConfig& config,
                       Rng& rng);

// Uniform subset of size n_s without replacement, in ascending order.
std::vector<std::size_t> select_estimation_points(const ParticleSet& particles, std::size_t n_s, Rng& rng);

double min_pairwise_distance(const Points& points);

// Columns: particle, coordinates, energy.
void write_particles_csv(const std::string& path, const ParticleSet& particles,
                         const model::EnergyModel& energy);
Points read_particles_csv(const std::string& path);

}  // namespace ebm::usp
