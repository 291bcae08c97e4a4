#include "ebm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ebm::eval {

namespace {

void check_scores(const ScoreSet& s) {
  if (s.in_scores.empty() || s.out_scores.empty()) {
    throw InvalidArgument("metrics: in- and out-of-distribution scores must be nonempty");
  }
  for (const auto* list : {&s.in_scores, &s.out_scores}) {
    for (double v : *list) {
      if (!std::isfinite(v)) throw InvalidArgument("metrics: scores must be finite");
    }
  }
}

// Number of entries >= tau in an ascending list.
std::size_t count_at_least(const std::vector<double>& ascending, double tau) {
  return static_cast<std::size_t>(ascending.end() - std::lower_bound(ascending.begin(), ascending.end(), tau));
}

}  // namespace

double fpr_at_tpr(const ScoreSet& scores, double tpr_target) {
  check_scores(scores);
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw InvalidArgument("fpr_at_tpr: tpr_target must lie in (0, 1]");
  std::vector<double> in = scores.in_scores;
  std::vector<double> out = scores.out_scores;
  std::sort(in.begin(), in.end());
  std::sort(out.begin(), out.end());
  const double n_in = static_cast<double>(in.size());
  // Coverage only grows as the threshold drops, so the first in-score from
  // the top that reaches the target is the largest admissible threshold.
  double tau = in.front();
  for (std::size_t k = in.size(); k-- > 0;) {
    if (static_cast<double>(count_at_least(in, in[k])) / n_in >= tpr_target) {
      tau = in[k];
      break;
    }
  }
  return static_cast<double>(count_at_least(out, tau)) / static_cast<double>(out.size());
}

double aupr(const ScoreSet& scores) {
  check_scores(scores);
  struct Labeled {
    double score;
    bool positive;
  };
  std::vector<Labeled> all;
  all.reserve(scores.in_scores.size() + scores.out_scores.size());
  for (double s : scores.in_scores) all.push_back({s, true});
  for (double s : scores.out_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Labeled& a, const Labeled& b) { return a.score > b.score; });
  const double n_pos = static_cast<double>(scores.in_scores.size());
  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < all.size();) {
    // Consume a whole tie group: thresholding uses >=.
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) {
      (all[j].positive ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / n_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

// ---------------------------------------------------------------------------

double ComponentLaw::mean() const {
  switch (kind) {
    case Kind::uniform: return 0.5 * (a + b);
    case Kind::gaussian: return a;
    case Kind::constant: return a;
  }
  return 0.0;
}

double ComponentLaw::variance() const {
  switch (kind) {
    case Kind::uniform: return (b - a) * (b - a) / 12.0;
    case Kind::gaussian: return b * b;
    case Kind::constant: return 0.0;
  }
  return 0.0;
}

double ComponentLaw::draw(Rng& rng) const {
  switch (kind) {
    case Kind::uniform: return rng.uniform(a, b);
    case Kind::gaussian: return a + b * rng.normal();
    case Kind::constant: return a;
  }
  return 0.0;
}

double shell_concentration(std::size_t dim, std::size_t count, const ComponentLaw& law, double eps, Rng& rng) {
  if (dim == 0 || count == 0) throw InvalidArgument("shell_concentration: dim and count must be positive");
  if (!(eps > 0.0)) throw InvalidArgument("shell_concentration: eps must be positive");
  if (law.kind == ComponentLaw::Kind::uniform && !(law.a < law.b)) throw InvalidArgument("shell_concentration: empty uniform law");
  if (law.kind == ComponentLaw::Kind::gaussian && !(law.b > 0.0)) throw InvalidArgument("shell_concentration: stddev must be positive");
  const double mu = law.mean();
  const double r = std::sqrt(static_cast<double>(dim) * (law.variance() + mu * mu));
  std::size_t hits = 0;
  for (std::size_t s = 0; s < count; ++s) {
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double v = law.draw(rng);
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > (1.0 - eps) * r && norm < (1.0 + eps) * r) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

bool region_contains(const Region& region, const Vector& x) {
  if (const auto* iv = std::get_if<Interval>(&region)) return x(0) >= iv->lo && x(0) < iv->hi;
  const auto& nc = std::get<NearestCenter>(region);
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < nc.centers.cols(); ++k) {
    const double d = (x - nc.centers.col(k)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return static_cast<std::size_t>(best) == nc.index;
}

std::size_t assign_region(const std::vector<Region>& regions, const Vector& x) {
  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (region_contains(regions[r], x)) return r;
  }
  return regions.size();
}

double ModeReport::max_min_ratio() const {
  if (modes.empty()) throw InvalidArgument("mode report is empty");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& m : modes) {
    lo = std::min(lo, m.learned_mass);
    hi = std::max(hi, m.learned_mass);
  }
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

ModeReport mode_mass(const dist::DensityGrid& density, const std::vector<Region>& basins,
                     const dist::DensityGrid* target) {
  if (target != nullptr && !target->same_grid(density)) throw InvalidArgument("mode_mass: target grid differs");
  const Points centers = density.cell_centers();
  std::vector<std::vector<double>> learned(basins.size()), reference(basins.size());
  for (Eigen::Index j = 0; j < centers.cols(); ++j) {
    const Vector c = centers.col(j);
    std::size_t owner = basins.size();
    for (std::size_t r = 0; r < basins.size(); ++r) {
      if (!region_contains(basins[r], c)) continue;
      if (owner != basins.size()) throw InvalidArgument("mode_mass: basins overlap");
      owner = r;
    }
    if (owner == basins.size()) continue;
    learned[owner].push_back(density.density(j));
    if (target != nullptr) reference[owner].push_back(target->density(j));
  }
  ModeReport report;
  for (std::size_t r = 0; r < basins.size(); ++r) {
    ModeEntry e;
    e.learned_mass = dist::pairwise_sum(learned[r].data(), learned[r].size()) * density.cell_volume;
    if (target != nullptr) {
      e.target_mass = dist::pairwise_sum(reference[r].data(), reference[r].size()) * target->cell_volume;
      if (*e.target_mass > 0.0) e.ratio = e.learned_mass / *e.target_mass;
    }
    report.modes.push_back(e);
  }
  return report;
}

std::vector<Region> watershed_basins_1d(const dist::GaussianMixture& mixture, const dist::BoxDomain& domain) {
  if (mixture.dim() != 1 || domain.dim() != 1) throw InvalidArgument("watershed_basins_1d: 1-D only");
  std::vector<double> means;
  for (Eigen::Index k = 0; k < mixture.means().cols(); ++k) means.push_back(mixture.means()(0, k));
  std::sort(means.begin(), means.end());
  means.erase(std::unique(means.begin(), means.end()), means.end());
  std::vector<double> cuts;
  constexpr int kSteps = 2000;
  for (std::size_t k = 0; k + 1 < means.size(); ++k) {
    double best_x = means[k], best = std::numeric_limits<double>::infinity();
    for (int s = 1; s < kSteps; ++s) {
      const double x = means[k] + (means[k + 1] - means[k]) * s / kSteps;
      const double v = mixture.log_density(Vector::Constant(1, x));
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
    cuts.push_back(best_x);
  }
  std::vector<Region> out;
  double lo = -std::numeric_limits<double>::infinity();
  for (double c : cuts) {
    out.emplace_back(Interval{lo, c});
    lo = c;
  }
  out.emplace_back(Interval{lo, std::numeric_limits<double>::infinity()});
  return out;
}

std::vector<Region> voronoi_basins(const dist::GaussianMixture& mixture) {
  std::vector<Region> out;
  for (std::size_t k = 0; k < mixture.components(); ++k) out.emplace_back(NearestCenter{mixture.means(), k});
  return out;
}

// ---------------------------------------------------------------------------

std::size_t histogram_bin(const dist::BoxDomain& domain, const std::vector<std::size_t>& bins, const Vector& x) {
  std::size_t total = 1;
  for (std::size_t b : bins) total *= b;
  if (!domain.contains(x)) return total;
  std::size_t flat = 0, stride = 1;
  for (std::size_t a = 0; a < domain.dim(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    const double t = (x(i) - domain.lo()(i)) / (domain.hi()(i) - domain.lo()(i));
    const auto k = std::min(static_cast<std::size_t>(t * static_cast<double>(bins[a])), bins[a] - 1);
    flat += k * stride;
    stride *= bins[a];
  }
  return flat;
}

Histogram histogram(const Points& samples, const dist::BoxDomain& domain, const std::vector<std::size_t>& bins,
                    const Vector* weights) {
  if (bins.size() != domain.dim() || static_cast<std::size_t>(samples.rows()) != domain.dim()) {
    throw InvalidArgument("histogram: dimension mismatch");
  }
  std::size_t total = 1;
  for (std::size_t b : bins) {
    if (b == 0) throw InvalidArgument("histogram: bin counts must be positive");
    total *= b;
  }
  if (weights != nullptr && weights->size() != samples.cols()) throw InvalidArgument("histogram: weights misaligned");
  Histogram h{domain, bins, Vector::Zero(static_cast<Eigen::Index>(total)), 0};
  std::vector<std::vector<double>> per_bin(total);
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    const std::size_t b = histogram_bin(domain, bins, samples.col(j));
    if (b == total) {
      ++h.dropped;
      continue;
    }
    per_bin[b].push_back(weights != nullptr ? (*weights)(j) : 1.0);
  }
  for (std::size_t b = 0; b < total; ++b) {
    h.mass(static_cast<Eigen::Index>(b)) = dist::pairwise_sum(per_bin[b].data(), per_bin[b].size());
  }
  const double sum = dist::pairwise_sum(h.mass);
  if (!(sum > 0.0)) throw InvalidArgument("histogram: no sample mass inside the domain");
  h.mass /= sum;
  return h;
}

double histogram_tv(const Histogram& a, const Histogram& b) {
  if (!(a.domain == b.domain) || a.bins != b.bins) throw InvalidArgument("histogram_tv: histograms differ in binning");
  const Vector diff = (a.mass - b.mass).cwiseAbs();
  return 0.5 * dist::pairwise_sum(diff);
}

bool in_ood_region(const dist::GaussianMixture& mixture, const Vector& x, double sigmas) {
  for (std::size_t k = 0; k < mixture.components(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    if ((x - mixture.means().col(c)).norm() <= sigmas * mixture.stddevs()(c)) return false;
  }
  return true;
}

Points sample_ood(const dist::GaussianMixture& mixture, const dist::BoxDomain& domain, double sigmas,
                  std::size_t count, Rng& rng) {
  if (mixture.dim() != domain.dim()) throw InvalidArgument("sample_ood: dimension mismatch");
  Points out(static_cast<Eigen::Index>(domain.dim()), static_cast<Eigen::Index>(count));
  std::size_t filled = 0, attempts = 0;
  const std::size_t max_attempts = 1000 * std::max<std::size_t>(count, 1);
  while (filled < count) {
    if (++attempts > max_attempts) throw InvalidArgument("sample_ood: OOD region is (nearly) empty");
    const Points u = domain.sample(1, rng);
    if (!in_ood_region(mixture, u.col(0), sigmas)) continue;
    out.col(static_cast<Eigen::Index>(filled++)) = u.col(0);
  }
  return out;
}

}  // namespace ebm::eval
