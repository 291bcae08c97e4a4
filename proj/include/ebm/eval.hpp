#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ebm/dist.hpp"
#include "ebm/rng.hpp"

namespace ebm::eval {

// Scores are -E(x); higher means more in-distribution.
struct ScoreSet {
  std::vector<double> in_scores;
  std::vector<double> out_scores;
};

// Threshold tau = the largest score with |{in >= tau}| / |in| >= tpr_target;
// returns |{out >= tau}| / |out|.
double fpr_at_tpr(const ScoreSet& scores, double tpr_target);

// Average precision with in-distribution as the positive class: precision at
// every distinct threshold, weighted by the recall increment.
double aupr(const ScoreSet& scores);

struct ComponentLaw {
  enum class Kind { uniform, gaussian, constant };
  Kind kind = Kind::uniform;
  double a = -1.0;  // uniform lo | gaussian mean | constant value
  double b = 1.0;   // uniform hi | gaussian stddev

  static ComponentLaw uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
  static ComponentLaw gaussian(double mean, double stddev) { return {Kind::gaussian, mean, stddev}; }
  static ComponentLaw constant(double value) { return {Kind::constant, value, 0.0}; }

  double mean() const;
  double variance() const;
  double draw(Rng& rng) const;
};

// Fraction of `count` i.i.d. d-vectors whose norm lies strictly inside
// ((1 - eps) r, (1 + eps) r), r = sqrt(d (sigma^2 + mu^2)).
double shell_concentration(std::size_t dim, std::size_t count, const ComponentLaw& law, double eps, Rng& rng);

// Half-open interval [lo, hi) on the first axis.
struct Interval {
  double lo;
  double hi;
};
// Points whose nearest center is centers[index].
struct NearestCenter {
  Points centers;
  std::size_t index;
};
using Region = std::variant<Interval, NearestCenter>;

bool region_contains(const Region& region, const Vector& x);

struct ModeEntry {
  double learned_mass = 0.0;
  std::optional<double> target_mass;
  std::optional<double> ratio;  // learned / target
};

struct ModeReport {
  std::vector<ModeEntry> modes;

  // max / min learned mass over basins.
  double max_min_ratio() const;
};

// Integrates `density` over each basin (cells assigned by their centers).
// Rejects basins that share a cell.
ModeReport mode_mass(const dist::DensityGrid& density, const std::vector<Region>& basins,
                     const dist::DensityGrid* target = nullptr);

// 1-D: split the domain at the minima of the mixture density between
// consecutive sorted means.
std::vector<Region> watershed_basins_1d(const dist::GaussianMixture& mixture, const dist::BoxDomain& domain);
// Nearest-mean cells, one per component.
std::vector<Region> voronoi_basins(const dist::GaussianMixture& mixture);

// Index of the region containing x, or regions.size().
std::size_t assign_region(const std::vector<Region>& regions, const Vector& x);

// Bin masses of a (weighted) sample over a box, flat index i + j * bins[0].
// Samples outside the box are dropped; masses are normalized over the rest.
struct Histogram {
  dist::BoxDomain domain;
  std::vector<std::size_t> bins;
  Vector mass;
  std::size_t dropped = 0;
};

Histogram histogram(const Points& samples, const dist::BoxDomain& domain, const std::vector<std::size_t>& bins,
                    const Vector* weights = nullptr);
// Bin of x, or the bin count when x lies outside the box.
std::size_t histogram_bin(const dist::BoxDomain& domain, const std::vector<std::size_t>& bins, const Vector& x);
// Half the L1 distance between bin masses.
double histogram_tv(const Histogram& a, const Histogram& b);

// Outside every sigmas * stddev ball around the mixture means.
bool in_ood_region(const dist::GaussianMixture& mixture, const Vector& x, double sigmas);
// Uniform draws on the box restricted to the OOD region (rejection).
Points sample_ood(const dist::GaussianMixture& mixture, const dist::BoxDomain& domain, double sigmas,
                  std::size_t count, Rng& rng);

}  // namespace ebm::eval
