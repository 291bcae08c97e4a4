#include "ebm/model.hpp"

#include <cmath>

#include "ebm/rng.hpp"

namespace ebm::model {

namespace {

std::string shape_message(const char* what, std::size_t expected, Eigen::Index got) {
  return std::string(what) + ": expected input dimension " + std::to_string(expected) +
         ", got " + std::to_string(got);
}

std::vector<Segment> single_segment(const std::string& name, std::size_t length) {
  return {Segment{name, 0, length}};
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamVector

ParamVector::ParamVector(std::vector<Segment> layout, Vector values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  std::size_t expected_offset = 0;
  for (const auto& s : layout_) {
    if (s.offset != expected_offset) {
      throw InvalidArgument("ParamVector: segment '" + s.name + "' is not contiguous");
    }
    expected_offset += s.length;
  }
  if (expected_offset != size()) {
    throw InvalidArgument("ParamVector: layout covers " + std::to_string(expected_offset) +
                          " entries but values has " + std::to_string(size()));
  }
}

ParamVector ParamVector::zeros(std::vector<Segment> layout) {
  std::size_t total = 0;
  for (const auto& s : layout) total += s.length;
  return ParamVector(std::move(layout), Vector::Zero(static_cast<Eigen::Index>(total)));
}

const Segment& ParamVector::segment(std::string_view name) const {
  for (const auto& s : layout_) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("ParamVector: no segment named '" + std::string(name) + "'");
}

Eigen::Map<const Vector> ParamVector::view(std::string_view name) const {
  const auto& s = segment(name);
  return {values_.data() + s.offset, static_cast<Eigen::Index>(s.length)};
}

Eigen::Map<Vector> ParamVector::view(std::string_view name) {
  const auto& s = segment(name);
  return {values_.data() + s.offset, static_cast<Eigen::Index>(s.length)};
}

// ---------------------------------------------------------------------------
// EnergyModel

void EnergyModel::set_params(const ParamVector& params) {
  if (!params.same_layout(params_)) {
    throw InvalidArgument(family() + ": parameter layout mismatch");
  }
  if (!params.all_finite()) throw InvalidArgument(family() + ": non-finite parameters");
  params_ = params;
}

void EnergyModel::set_param_values(const Vector& values) {
  if (values.size() != params_.values().size()) {
    throw InvalidArgument(family() + ": parameter count mismatch");
  }
  if (!values.allFinite()) throw InvalidArgument(family() + ": non-finite parameters");
  params_.values() = values;
}

void EnergyModel::check_points(const Points& x) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim()) {
    throw InvalidArgument(shape_message(family().c_str(), input_dim(), x.rows()));
  }
  if (!x.allFinite()) throw InvalidArgument(family() + ": non-finite input");
}

double EnergyModel::energy(const Vector& x) const { return energy_batch(x)(0); }

Vector EnergyModel::grad_x(const Vector& x) const { return grad_x_batch(x).col(0); }

ParamVector EnergyModel::grad_theta(const Vector& x) const {
  return ParamVector(params_.layout(), grad_theta_weighted(x, Vector::Ones(1)));
}

// ---------------------------------------------------------------------------
// QuadraticEnergy

QuadraticEnergy::QuadraticEnergy(Vector center, double scale)
    : EnergyModel(ParamVector(single_segment("center", center.size()), center)),
      dim_(static_cast<std::size_t>(center.size())),
      scale_(scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidArgument("quadratic: scale must be positive");
  }
  if (dim_ == 0) throw InvalidArgument("quadratic: empty center");
}

nlohmann::json QuadraticEnergy::hyperparams() const {
  return {{"dim", dim_}, {"scale", scale_}};
}

std::unique_ptr<EnergyModel> QuadraticEnergy::clone() const {
  return std::make_unique<QuadraticEnergy>(*this);
}

Vector QuadraticEnergy::energy_batch(const Points& x) const {
  check_points(x);
  const Vector c = center();
  return (x.colwise() - c).colwise().squaredNorm().transpose() / (2.0 * scale_ * scale_);
}

Points QuadraticEnergy::grad_x_batch(const Points& x) const {
  check_points(x);
  const Vector c = center();
  return (x.colwise() - c) / (scale_ * scale_);
}

Vector QuadraticEnergy::grad_theta_weighted(const Points& x, const Vector& weights) const {
  check_points(x);
  if (weights.size() != x.cols()) throw InvalidArgument("quadratic: weight count mismatch");
  const Vector c = center();
  return -((x.colwise() - c) * weights) / (scale_ * scale_);
}

// ---------------------------------------------------------------------------
// GridEnergy

GridEnergy::GridEnergy(double lo, double hi, Vector knot_values)
    : EnergyModel(ParamVector(single_segment("values", knot_values.size()), knot_values)),
      lo_(lo),
      hi_(hi) {
  if (!(lo < hi)) throw InvalidArgument("grid: require lo < hi");
  if (knot_values.size() < 2) throw InvalidArgument("grid: need at least 2 knots");
}

nlohmann::json GridEnergy::hyperparams() const {
  return {{"lo", lo_}, {"hi", hi_}, {"knots", knot_count()}};
}

std::unique_ptr<EnergyModel> GridEnergy::clone() const {
  return std::make_unique<GridEnergy>(*this);
}

GridEnergy::Bracket GridEnergy::locate(double x) const {
  const std::size_t last = knot_count() - 1;
  if (x < lo_) return {0, 0.0, false};
  if (x > hi_) return {last - 1, 1.0, false};
  const double u = (x - lo_) / spacing();
  auto left = static_cast<std::size_t>(std::floor(u));
  if (left >= last) left = last - 1;
  double t = u - static_cast<double>(left);
  // Snap to the knot when x reproduces it exactly, so knot values are
  // returned without interpolation round-off.
  if (x == knot(left)) t = 0.0;
  if (x == knot(left + 1)) t = 1.0;
  return {left, t, true};
}

Vector GridEnergy::energy_batch(const Points& x) const {
  check_points(x);
  const Vector& v = params_.values();
  Vector out(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Bracket b = locate(x(0, i));
    if (b.t == 0.0) {
      out(i) = v(b.left);
    } else if (b.t == 1.0) {
      out(i) = v(b.left + 1);
    } else {
      out(i) = (1.0 - b.t) * v(b.left) + b.t * v(b.left + 1);
    }
  }
  return out;
}

Points GridEnergy::grad_x_batch(const Points& x) const {
  check_points(x);
  const Vector& v = params_.values();
  Points g(1, x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Bracket b = locate(x(0, i));
    g(0, i) = b.inside ? (v(b.left + 1) - v(b.left)) / spacing() : 0.0;
  }
  return g;
}

Vector GridEnergy::grad_theta_weighted(const Points& x, const Vector& weights) const {
  check_points(x);
  if (weights.size() != x.cols()) throw InvalidArgument("grid: weight count mismatch");
  Vector g = Vector::Zero(static_cast<Eigen::Index>(knot_count()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Bracket b = locate(x(0, i));
    g(b.left) += weights(i) * (1.0 - b.t);
    g(b.left + 1) += weights(i) * b.t;
  }
  return g;
}

// ---------------------------------------------------------------------------
// MlpEnergy

std::string to_string(MlpHead head) {
  return head == MlpHead::scalar ? "scalar" : "reconstruction";
}

MlpHead mlp_head_from_string(std::string_view name) {
  if (name == "scalar") return MlpHead::scalar;
  if (name == "reconstruction") return MlpHead::reconstruction;
  throw InvalidArgument("unknown mlp head '" + std::string(name) + "'");
}

std::vector<Segment> mlp_layout(const std::vector<std::size_t>& widths) {
  std::vector<Segment> layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t w = widths[l] * widths[l + 1];
    layout.push_back({"W" + std::to_string(l), offset, w});
    offset += w;
    layout.push_back({"b" + std::to_string(l), offset, widths[l + 1]});
    offset += widths[l + 1];
  }
  return layout;
}

namespace {

void validate_spec(const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw InvalidArgument("mlp: need at least input and output widths");
  for (auto w : spec.widths) {
    if (w == 0) throw InvalidArgument("mlp: layer widths must be positive");
  }
  if (!(spec.leaky_slope > 0.0 && spec.leaky_slope < 1.0)) {
    throw InvalidArgument("mlp: leaky slope must lie in (0, 1)");
  }
  if (spec.head == MlpHead::scalar && spec.widths.back() != 1) {
    throw InvalidArgument("mlp: scalar head needs output width 1");
  }
  if (spec.head == MlpHead::reconstruction && spec.widths.back() != spec.widths.front()) {
    throw InvalidArgument("mlp: reconstruction head needs output width == input width");
  }
}

ParamVector init_mlp_params(const MlpSpec& spec, uint64_t seed) {
  validate_spec(spec);
  ParamVector p = ParamVector::zeros(mlp_layout(spec.widths));
  Rng rng(seed, 0x6d6c70);
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const double fan_in = static_cast<double>(spec.widths[l]);
    const double fan_out = static_cast<double>(spec.widths[l + 1]);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (const auto* name : {"W", "b"}) {
      auto seg = p.view(name + std::to_string(l));
      for (Eigen::Index i = 0; i < seg.size(); ++i) seg(i) = rng.uniform(-a, a);
    }
  }
  return p;
}

}  // namespace

MlpEnergy::MlpEnergy(MlpSpec spec, uint64_t seed)
    : EnergyModel(init_mlp_params(spec, seed)), spec_(std::move(spec)) {}

MlpEnergy::MlpEnergy(MlpSpec spec, ParamVector params)
    : EnergyModel(std::move(params)), spec_(std::move(spec)) {
  validate_spec(spec_);
  if (params_.layout() != mlp_layout(spec_.widths)) {
    throw InvalidArgument("mlp: parameter layout does not match widths");
  }
}

nlohmann::json MlpEnergy::hyperparams() const {
  return {{"widths", spec_.widths},
          {"leaky_slope", spec_.leaky_slope},
          {"head", to_string(spec_.head)}};
}

std::unique_ptr<EnergyModel> MlpEnergy::clone() const {
  return std::make_unique<MlpEnergy>(*this);
}

Eigen::Map<const Eigen::MatrixXd> MlpEnergy::weight(std::size_t layer) const {
  const auto& s = params_.segment("W" + std::to_string(layer));
  return {params_.values().data() + s.offset,
          static_cast<Eigen::Index>(spec_.widths[layer + 1]),
          static_cast<Eigen::Index>(spec_.widths[layer])};
}

Eigen::Map<const Vector> MlpEnergy::bias(std::size_t layer) const {
  return params_.view("b" + std::to_string(layer));
}

MlpEnergy::Tape MlpEnergy::forward(const Points& x) const {
  check_points(x);
  const double slope = spec_.leaky_slope;
  Tape tape;
  const std::size_t layers = layer_count();
  tape.pre.resize(layers);
  tape.act.resize(layers);
  tape.act[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    tape.pre[l].noalias() = weight(l) * tape.act[l];
    tape.pre[l].colwise() += bias(l);
    if (l + 1 < layers) {
      const auto& z = tape.pre[l].array();
      tape.act[l + 1] = (z >= 0.0).select(z, slope * z).matrix();
    }
  }
  tape.out = std::move(tape.pre[layers - 1]);
  tape.pre[layers - 1].resize(0, 0);
  return tape;
}

Vector MlpEnergy::energies_from(const Tape& tape) const {
  if (spec_.head == MlpHead::scalar) return tape.out.row(0).transpose();
  return (tape.act[0] - tape.out).colwise().squaredNorm().transpose();
}

Eigen::MatrixXd MlpEnergy::output_seed(const Tape& tape, const Vector* weights) const {
  Eigen::MatrixXd seed;
  if (spec_.head == MlpHead::scalar) {
    seed = Eigen::MatrixXd::Ones(1, tape.out.cols());
  } else {
    seed = 2.0 * (tape.out - tape.act[0]);
  }
  if (weights != nullptr) seed = seed * weights->asDiagonal();
  return seed;
}

Vector MlpEnergy::energy_batch(const Points& x) const { return energies_from(forward(x)); }

Points MlpEnergy::grad_x_batch(const Points& x) const {
  const Tape tape = forward(x);
  const double slope = spec_.leaky_slope;
  Eigen::MatrixXd delta = output_seed(tape, nullptr);
  for (std::size_t l = layer_count(); l-- > 0;) {
    Eigen::MatrixXd below = weight(l).transpose() * delta;
    if (l > 0) {
      const auto& z = tape.pre[l - 1].array();
      below.array() *= (z >= 0.0).select(1.0, Eigen::ArrayXXd::Constant(z.rows(), z.cols(), slope));
    }
    delta = std::move(below);
  }
  if (spec_.head == MlpHead::reconstruction) delta += 2.0 * (tape.act[0] - tape.out);
  return delta;
}

Vector MlpEnergy::grad_theta_weighted(const Points& x, const Vector& weights) const {
  if (weights.size() != x.cols()) throw InvalidArgument("mlp: weight count mismatch");
  const Tape tape = forward(x);
  const double slope = spec_.leaky_slope;
  Vector g = Vector::Zero(static_cast<Eigen::Index>(params_.size()));
  Eigen::MatrixXd delta = output_seed(tape, &weights);
  for (std::size_t l = layer_count(); l-- > 0;) {
    const auto& ws = params_.segment("W" + std::to_string(l));
    const auto& bs = params_.segment("b" + std::to_string(l));
    Eigen::Map<Eigen::MatrixXd> gw(g.data() + ws.offset, static_cast<Eigen::Index>(spec_.widths[l + 1]),
                                  static_cast<Eigen::Index>(spec_.widths[l]));
    gw.noalias() = delta * tape.act[l].transpose();
    Eigen::Map<Vector>(g.data() + bs.offset, static_cast<Eigen::Index>(bs.length)) =
        delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd below = weight(l).transpose() * delta;
      const auto& z = tape.pre[l - 1].array();
      below.array() *= (z >= 0.0).select(1.0, Eigen::ArrayXXd::Constant(z.rows(), z.cols(), slope));
      delta = std::move(below);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json to_checkpoint(const EnergyModel& model) {
  const Vector& v = model.params().values();
  return {{"family", model.family()},
          {"hyperparams", model.hyperparams()},
          {"params", std::vector<double>(v.data(), v.data() + v.size())}};
}

std::unique_ptr<EnergyModel> from_checkpoint(const nlohmann::json& checkpoint) {
  const auto family = checkpoint.at("family").get<std::string>();
  const auto& hp = checkpoint.at("hyperparams");
  const auto raw = checkpoint.at("params").get<std::vector<double>>();
  const Vector values = Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
  if (family == "quadratic") {
    const auto dim = hp.at("dim").get<std::size_t>();
    if (values.size() != static_cast<Eigen::Index>(dim)) {
      throw InvalidArgument("checkpoint: quadratic parameter count mismatch");
    }
    return std::make_unique<QuadraticEnergy>(values, hp.at("scale").get<double>());
  }
  if (family == "grid") {
    if (values.size() != hp.at("knots").get<Eigen::Index>()) {
      throw InvalidArgument("checkpoint: grid knot count mismatch");
    }
    return std::make_unique<GridEnergy>(hp.at("lo").get<double>(), hp.at("hi").get<double>(), values);
  }
  if (family == "mlp") {
    MlpSpec spec{hp.at("widths").get<std::vector<std::size_t>>(), hp.at("leaky_slope").get<double>(),
                 mlp_head_from_string(hp.at("head").get<std::string>())};
    return std::make_unique<MlpEnergy>(spec, ParamVector(mlp_layout(spec.widths), values));
  }
  throw InvalidArgument("checkpoint: unknown family '" + family + "'");
}

}  // namespace ebm::model
