#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "ebm/model.hpp"
#include "ebm/rng.hpp"
#include "ebm/types.hpp"

namespace ebm::dist {

// Axis-aligned box, lo < hi componentwise.
class BoxDomain {
 public:
  BoxDomain() = default;
  BoxDomain(Vector lo, Vector hi);
  static BoxDomain cube(std::size_t dim, double lo, double hi);

  std::size_t dim() const { return static_cast<std::size_t>(lo_.size()); }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  double volume() const { return (hi_ - lo_).prod(); }
  double diameter() const { return (hi_ - lo_).norm(); }

  bool contains(const Vector& x) const;
  // Componentwise clamp, in place, for every column.
  void project(Points& x) const;
  Points sample(std::size_t count, Rng& rng) const;

  bool operator==(const BoxDomain& other) const {
    return lo_ == other.lo_ && hi_ == other.hi_;
  }

 private:
  Vector lo_;
  Vector hi_;
};

// Isotropic Gaussian mixture.
class GaussianMixture {
 public:
  GaussianMixture(Vector weights, Points means, Vector stddevs);

  // Equal-weight N(-0.5, 0.05^2) and N(0.5, 0.05^2).
  static GaussianMixture two_gaussians_1d();
  // Six components at (cos(k pi/3), sin(k pi/3)), sigma = 0.1.
  static GaussianMixture six_mode_ring();

  std::size_t dim() const { return static_cast<std::size_t>(means_.rows()); }
  std::size_t components() const { return static_cast<std::size_t>(means_.cols()); }
  const Vector& weights() const { return weights_; }
  const Points& means() const { return means_; }
  const Vector& stddevs() const { return stddevs_; }

  Points sample(std::size_t count, Rng& rng) const;
  // Draws from a single component.
  Points sample_component(std::size_t component, std::size_t count, Rng& rng) const;
  double log_density(const Vector& x) const;
  Vector log_density_batch(const Points& x) const;

 private:
  Vector weights_;
  Points means_;
  Vector stddevs_;
  std::vector<double> cumulative_;
};

struct UniformOnBox {
  BoxDomain box;
};
struct IsotropicGaussian {
  Vector mean;
  double stddev = 1.0;
};
struct MixtureComponent {
  GaussianMixture mixture;
  std::size_t component = 0;
};

// Chain and particle initialization law q0. A uniform law on a
// sub-interval is UniformOnBox with the sub-interval as its box.
class Proposal {
 public:
  using Kind = std::variant<UniformOnBox, IsotropicGaussian, MixtureComponent>;

  // Uniform on [-1, 1].
  Proposal();
  explicit Proposal(Kind kind);
  static Proposal uniform(BoxDomain box) { return Proposal(UniformOnBox{std::move(box)}); }
  static Proposal uniform_interval(double lo, double hi);
  static Proposal gaussian(Vector mean, double stddev);
  static Proposal component(GaussianMixture mixture, std::size_t index);

  std::size_t dim() const;
  const Kind& kind() const { return kind_; }
  Points sample(std::size_t count, Rng& rng) const;

 private:
  Kind kind_;
};

// Values of a density tabulated at the midpoints of a uniform grid over a
// box (1-D or 2-D). Cell (i, j) has flat index i + j * resolution[0].
struct DensityGrid {
  BoxDomain domain;
  std::vector<std::size_t> resolution;
  Vector density;      // per cell
  Vector log_density;  // per cell
  double cell_volume = 0.0;
  bool normalized = false;

  std::size_t cell_count() const { return static_cast<std::size_t>(density.size()); }
  Points cell_centers() const;
  double total_mass() const;
  bool same_grid(const DensityGrid& other) const {
    return domain == other.domain && resolution == other.resolution;
  }
};

Points grid_cell_centers(const BoxDomain& domain, const std::vector<std::size_t>& resolution);

// Normalizes exp(log_unnormalized) over the grid cells. Returns log of the
// integral (midpoint rule) through `log_z` when non-null.
DensityGrid tabulate(const BoxDomain& domain, const std::vector<std::size_t>& resolution,
                     const Vector& log_unnormalized, double* log_z = nullptr);

struct QuadratureResult {
  DensityGrid grid;
  double log_z = 0.0;
};

// exp(-rho E) normalized on the grid; rejects dim > 2 and resolution < 16.
QuadratureResult quadrature_normalize(const model::EnergyModel& energy, double rho,
                                      const BoxDomain& domain,
                                      const std::vector<std::size_t>& resolution);

DensityGrid mixture_grid(const GaussianMixture& mixture, const BoxDomain& domain,
                         const std::vector<std::size_t>& resolution);

double tv_distance(const DensityGrid& a, const DensityGrid& b);

// Columns: cell center coords, density, log_density.
void write_density_csv(const std::string& path, const DensityGrid& grid);

double pairwise_sum(const double* data, std::size_t n);
double pairwise_sum(const Vector& v);
double log_sum_exp(const Vector& v);

}  // namespace ebm::dist
