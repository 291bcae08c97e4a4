#include "ebm/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ebm/csv.hpp"

namespace ebm::dist {

// ---------------------------------------------------------------------------
// Reductions

double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

double pairwise_sum(const Vector& v) {
  return pairwise_sum(v.data(), static_cast<std::size_t>(v.size()));
}

double log_sum_exp(const Vector& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  const Vector shifted = (v.array() - m).exp().matrix();
  return m + std::log(pairwise_sum(shifted));
}

// ---------------------------------------------------------------------------
// BoxDomain

BoxDomain::BoxDomain(Vector lo, Vector hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() == 0 || lo_.size() != hi_.size()) {
    throw InvalidArgument("box: lo and hi must be nonempty and of equal dimension");
  }
  if (!((lo_.array() < hi_.array()).all())) throw InvalidArgument("box: require lo < hi");
}

BoxDomain BoxDomain::cube(std::size_t dim, double lo, double hi) {
  const auto d = static_cast<Eigen::Index>(dim);
  return BoxDomain(Vector::Constant(d, lo), Vector::Constant(d, hi));
}

bool BoxDomain::contains(const Vector& x) const {
  return x.size() == lo_.size() && (x.array() >= lo_.array()).all() &&
         (x.array() <= hi_.array()).all();
}

void BoxDomain::project(Points& x) const {
  if (x.rows() != lo_.size()) throw InvalidArgument("box: projection dimension mismatch");
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      x(i, j) = std::clamp(x(i, j), lo_(i), hi_(i));
    }
  }
}

Points BoxDomain::sample(std::size_t count, Rng& rng) const {
  Points out(lo_.size(), static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = rng.uniform(lo_(i), hi_(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// GaussianMixture

GaussianMixture::GaussianMixture(Vector weights, Points means, Vector stddevs)
    : weights_(std::move(weights)), means_(std::move(means)), stddevs_(std::move(stddevs)) {
  if (weights_.size() == 0 || weights_.size() != means_.cols() ||
      weights_.size() != stddevs_.size() || means_.rows() == 0) {
    throw InvalidArgument("mixture: weights, means and stddevs must agree in count");
  }
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-12) {
    throw InvalidArgument("mixture: weights must lie on the simplex");
  }
  if (!((stddevs_.array() > 0.0).all())) throw InvalidArgument("mixture: stddevs must be positive");
  double c = 0.0;
  for (Eigen::Index k = 0; k < weights_.size(); ++k) {
    c += weights_(k);
    cumulative_.push_back(c);
  }
}

GaussianMixture GaussianMixture::two_gaussians_1d() {
  Points means(1, 2);
  means << -0.5, 0.5;
  return GaussianMixture(Vector::Constant(2, 0.5), means, Vector::Constant(2, 0.05));
}

GaussianMixture GaussianMixture::six_mode_ring() {
  Points means(2, 6);
  for (int k = 0; k < 6; ++k) {
    const double angle = k * std::numbers::pi / 3.0;
    means(0, k) = std::cos(angle);
    means(1, k) = std::sin(angle);
  }
  return GaussianMixture(Vector::Constant(6, 1.0 / 6.0), means, Vector::Constant(6, 0.1));
}

Points GaussianMixture::sample_component(std::size_t component, std::size_t count, Rng& rng) const {
  if (component >= components()) throw InvalidArgument("mixture: component out of range");
  const auto k = static_cast<Eigen::Index>(component);
  Points out(means_.rows(), static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = means_(i, k) + stddevs_(k) * rng.normal();
  }
  return out;
}

Points GaussianMixture::sample(std::size_t count, Rng& rng) const {
  Points out(means_.rows(), static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double u = rng.uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    auto k = static_cast<Eigen::Index>(std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                                                 weights_.size() - 1));
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = means_(i, k) + stddevs_(k) * rng.normal();
  }
  return out;
}

double GaussianMixture::log_density(const Vector& x) const {
  if (x.size() != means_.rows()) throw InvalidArgument("mixture: dimension mismatch");
  const double d = static_cast<double>(dim());
  Vector terms(weights_.size());
  for (Eigen::Index k = 0; k < weights_.size(); ++k) {
    const double s = stddevs_(k);
    const double sq = (x - means_.col(k)).squaredNorm();
    terms(k) = std::log(weights_(k)) - 0.5 * d * std::log(2.0 * std::numbers::pi * s * s) -
               sq / (2.0 * s * s);
  }
  return log_sum_exp(terms);
}

Vector GaussianMixture::log_density_batch(const Points& x) const {
  Vector out(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out(j) = log_density(x.col(j));
  return out;
}

// ---------------------------------------------------------------------------
// Proposal

Proposal::Proposal() : kind_(UniformOnBox{BoxDomain::cube(1, -1.0, 1.0)}) {}

Proposal::Proposal(Kind kind) : kind_(std::move(kind)) {
  if (const auto* g = std::get_if<IsotropicGaussian>(&kind_)) {
    if (!(g->stddev > 0.0) || g->mean.size() == 0) {
      throw InvalidArgument("proposal: gaussian needs a mean and positive stddev");
    }
  }
  if (const auto* m = std::get_if<MixtureComponent>(&kind_)) {
    if (m->component >= m->mixture.components()) {
      throw InvalidArgument("proposal: mixture component out of range");
    }
  }
}

Proposal Proposal::uniform_interval(double lo, double hi) {
  return uniform(BoxDomain(Vector::Constant(1, lo), Vector::Constant(1, hi)));
}

Proposal Proposal::gaussian(Vector mean, double stddev) {
  return Proposal(IsotropicGaussian{std::move(mean), stddev});
}

Proposal Proposal::component(GaussianMixture mixture, std::size_t index) {
  return Proposal(MixtureComponent{std::move(mixture), index});
}

std::size_t Proposal::dim() const {
  return std::visit(
      [](const auto& k) -> std::size_t {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, UniformOnBox>) return k.box.dim();
        else if constexpr (std::is_same_v<T, IsotropicGaussian>) return static_cast<std::size_t>(k.mean.size());
        else return k.mixture.dim();
      },
      kind_);
}

Points Proposal::sample(std::size_t count, Rng& rng) const {
  return std::visit(
      [&](const auto& k) -> Points {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, UniformOnBox>) {
          return k.box.sample(count, rng);
        } else if constexpr (std::is_same_v<T, IsotropicGaussian>) {
          Points out(k.mean.size(), static_cast<Eigen::Index>(count));
          for (Eigen::Index j = 0; j < out.cols(); ++j) {
            for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = k.mean(i) + k.stddev * rng.normal();
          }
          return out;
        } else {
          return k.mixture.sample_component(k.component, count, rng);
        }
      },
      kind_);
}

// ---------------------------------------------------------------------------
// Grids

Points grid_cell_centers(const BoxDomain& domain, const std::vector<std::size_t>& resolution) {
  if (resolution.size() != domain.dim()) throw InvalidArgument("grid: resolution/domain dimension mismatch");
  std::size_t cells = 1;
  for (auto r : resolution) {
    if (r == 0) throw InvalidArgument("grid: zero resolution");
    cells *= r;
  }
  const auto d = static_cast<Eigen::Index>(domain.dim());
  Points centers(d, static_cast<Eigen::Index>(cells));
  for (std::size_t flat = 0; flat < cells; ++flat) {
    std::size_t rest = flat;
    for (Eigen::Index a = 0; a < d; ++a) {
      const std::size_t r = resolution[static_cast<std::size_t>(a)];
      const std::size_t idx = rest % r;
      rest /= r;
      const double h = (domain.hi()(a) - domain.lo()(a)) / static_cast<double>(r);
      centers(a, static_cast<Eigen::Index>(flat)) = domain.lo()(a) + (static_cast<double>(idx) + 0.5) * h;
    }
  }
  return centers;
}

Points DensityGrid::cell_centers() const { return grid_cell_centers(domain, resolution); }

double DensityGrid::total_mass() const { return pairwise_sum(density) * cell_volume; }

DensityGrid tabulate(const BoxDomain& domain, const std::vector<std::size_t>& resolution,
                     const Vector& log_unnormalized, double* log_z) {
  std::size_t cells = 1;
  for (auto r : resolution) cells *= r;
  if (resolution.size() != domain.dim() || static_cast<std::size_t>(log_unnormalized.size()) != cells) {
    throw InvalidArgument("tabulate: value count does not match grid");
  }
  DensityGrid grid;
  grid.domain = domain;
  grid.resolution = resolution;
  grid.cell_volume = domain.volume() / static_cast<double>(cells);
  const double lse = log_sum_exp(log_unnormalized);
  if (!std::isfinite(lse)) throw Error("tabulate: log mass is not finite");
  const double log_mass = lse + std::log(grid.cell_volume);
  grid.log_density = (log_unnormalized.array() - log_mass).matrix();
  grid.density = grid.log_density.array().exp().matrix();
  grid.normalized = true;
  if (log_z != nullptr) *log_z = log_mass;
  return grid;
}

namespace {

Vector energies_chunked(const model::EnergyModel& energy, const Points& x) {
  constexpr Eigen::Index chunk = 8192;
  Vector out(x.cols());
  for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, x.cols() - start);
    out.segment(start, n) = energy.energy_batch(x.middleCols(start, n));
  }
  return out;
}

}  // namespace

QuadratureResult quadrature_normalize(const model::EnergyModel& energy, double rho,
                                      const BoxDomain& domain,
                                      const std::vector<std::size_t>& resolution) {
  if (domain.dim() == 0 || domain.dim() > 2) {
    throw InvalidArgument("quadrature: only 1-D and 2-D domains are supported; use sampling");
  }
  if (domain.dim() != energy.input_dim()) throw InvalidArgument("quadrature: model/domain dimension mismatch");
  for (auto r : resolution) {
    if (r < 16) throw InvalidArgument("quadrature: resolution must be at least 16 per axis");
  }
  if (!(rho > 0.0)) throw InvalidArgument("quadrature: rho must be positive");
  const Points centers = grid_cell_centers(domain, resolution);
  const Vector log_unnormalized = -rho * energies_chunked(energy, centers);
  QuadratureResult result;
  result.grid = tabulate(domain, resolution, log_unnormalized, &result.log_z);
  return result;
}

DensityGrid mixture_grid(const GaussianMixture& mixture, const BoxDomain& domain,
                         const std::vector<std::size_t>& resolution) {
  return tabulate(domain, resolution, mixture.log_density_batch(grid_cell_centers(domain, resolution)));
}

double tv_distance(const DensityGrid& a, const DensityGrid& b) {
  if (!a.same_grid(b)) throw InvalidArgument("tv_distance: grids differ in domain or resolution");
  if (!a.normalized || !b.normalized) throw InvalidArgument("tv_distance: grids must be normalized");
  const Vector diff = (a.density - b.density).cwiseAbs();
  return std::min(1.0, 0.5 * pairwise_sum(diff) * a.cell_volume);
}

void write_density_csv(const std::string& path, const DensityGrid& grid) {
  std::vector<std::string> header;
  if (grid.domain.dim() <= 2) {
    header.emplace_back("x");
    if (grid.domain.dim() == 2) header.emplace_back("y");
  } else {
    for (std::size_t a = 0; a < grid.domain.dim(); ++a) header.push_back("x" + std::to_string(a));
  }
  header.emplace_back("density");
  header.emplace_back("log_density");
  CsvWriter csv(path, header);
  const Points centers = grid.cell_centers();
  for (Eigen::Index j = 0; j < centers.cols(); ++j) {
    for (Eigen::Index a = 0; a < centers.rows(); ++a) csv.cell(centers(a, j));
    csv.cell(grid.density(j)).cell(grid.log_density(j));
    csv.end_row();
  }
}

}  // namespace ebm::dist
