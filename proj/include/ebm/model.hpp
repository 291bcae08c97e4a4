#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ebm/types.hpp"
#include "json.hpp"

namespace ebm::model {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const Segment&) const = default;
};

// Flat parameter vector with a named layout. Optimizers see only the flat
// values, models address their pieces by segment name.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<Segment> layout, Vector values);

  static ParamVector zeros(std::vector<Segment> layout);
  ParamVector zeros_like() const { return zeros(layout_); }

  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  const std::vector<Segment>& layout() const { return layout_; }

  const Segment& segment(std::string_view name) const;
  Eigen::Map<const Vector> view(std::string_view name) const;
  Eigen::Map<Vector> view(std::string_view name);

  bool same_layout(const ParamVector& other) const { return layout_ == other.layout_; }
  bool all_finite() const { return values_.allFinite(); }

 private:
  std::vector<Segment> layout_;
  Vector values_;
};

// A parameterized energy E_theta(x). Unnormalized density is exp(-E).
// Evaluation methods are const and deterministic; the only mutation is
// set_params, used by the training loop between evaluations.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  virtual std::string family() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual nlohmann::json hyperparams() const = 0;
  virtual std::unique_ptr<EnergyModel> clone() const = 0;

  const ParamVector& params() const { return params_; }
  void set_params(const ParamVector& params);
  void set_param_values(const Vector& values);

  // Batched evaluation; `x` holds one point per column.
  virtual Vector energy_batch(const Points& x) const = 0;
  virtual Points grad_x_batch(const Points& x) const = 0;
  // sum_i weights[i] * grad_theta E(x_i), laid out like params().
  virtual Vector grad_theta_weighted(const Points& x, const Vector& weights) const = 0;

  double energy(const Vector& x) const;
  Vector grad_x(const Vector& x) const;
  ParamVector grad_theta(const Vector& x) const;

 protected:
  explicit EnergyModel(ParamVector params) : params_(std::move(params)) {}
  EnergyModel(const EnergyModel&) = default;
  EnergyModel& operator=(const EnergyModel&) = default;

  void check_points(const Points& x) const;

  ParamVector params_;
};

// E(x) = |x - center|^2 / (2 s^2). The center is the parameter.
class QuadraticEnergy final : public EnergyModel {
 public:
  QuadraticEnergy(Vector center, double scale);

  std::string family() const override { return "quadratic"; }
  std::size_t input_dim() const override { return dim_; }
  nlohmann::json hyperparams() const override;
  std::unique_ptr<EnergyModel> clone() const override;

  double scale() const { return scale_; }
  Vector center() const { return params_.view("center"); }

  Vector energy_batch(const Points& x) const override;
  Points grad_x_batch(const Points& x) const override;
  Vector grad_theta_weighted(const Points& x, const Vector& weights) const override;

 private:
  std::size_t dim_;
  double scale_;
};

// Piecewise-linear energy over uniformly spaced knots on [lo, hi]. The knot
// values are the parameters. Outside the interval the energy is held at the
// boundary value.
class GridEnergy final : public EnergyModel {
 public:
  GridEnergy(double lo, double hi, Vector knot_values);

  std::string family() const override { return "grid"; }
  std::size_t input_dim() const override { return 1; }
  nlohmann::json hyperparams() const override;
  std::unique_ptr<EnergyModel> clone() const override;

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  std::size_t knot_count() const { return params_.size(); }
  double spacing() const { return (hi_ - lo_) / static_cast<double>(knot_count() - 1); }
  double knot(std::size_t k) const { return lo_ + spacing() * static_cast<double>(k); }

  Vector energy_batch(const Points& x) const override;
  Points grad_x_batch(const Points& x) const override;
  Vector grad_theta_weighted(const Points& x, const Vector& weights) const override;

 private:
  struct Bracket {
    std::size_t left;
    double t;       // position within [left, left + 1]
    bool inside;
  };
  Bracket locate(double x) const;

  double lo_;
  double hi_;
};

enum class MlpHead { scalar, reconstruction };

std::string to_string(MlpHead head);
MlpHead mlp_head_from_string(std::string_view name);

struct MlpSpec {
  // Input width first, output width last. The reconstruction head requires
  // output width == input width.
  std::vector<std::size_t> widths;
  double leaky_slope = 0.2;
  MlpHead head = MlpHead::scalar;

  bool operator==(const MlpSpec&) const = default;
};

// Multi-layer perceptron energy with leaky-ReLU hidden activations.
//   scalar head:         E(x) = f(x)
//   reconstruction head: E(x) = |x - f(x)|^2
class MlpEnergy final : public EnergyModel {
 public:
  // Weights and biases of a layer ~ U[-a, a], a = sqrt(6 / (fan_in + fan_out)).
  MlpEnergy(MlpSpec spec, uint64_t seed);
  MlpEnergy(MlpSpec spec, ParamVector params);

  std::string family() const override { return "mlp"; }
  std::size_t input_dim() const override { return spec_.widths.front(); }
  nlohmann::json hyperparams() const override;
  std::unique_ptr<EnergyModel> clone() const override;

  const MlpSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return spec_.widths.size() - 1; }

  Vector energy_batch(const Points& x) const override;
  Points grad_x_batch(const Points& x) const override;
  Vector grad_theta_weighted(const Points& x, const Vector& weights) const override;

 private:
  struct Tape {
    std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
    std::vector<Eigen::MatrixXd> act;   // act[0] is the input
    Eigen::MatrixXd out;
  };

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::size_t layer) const;
  Tape forward(const Points& x) const;
  Vector energies_from(const Tape& tape) const;
  // dE/d(out), each column scaled by its weight.
  Eigen::MatrixXd output_seed(const Tape& tape, const Vector* weights) const;

  MlpSpec spec_;
};

std::vector<Segment> mlp_layout(const std::vector<std::size_t>& widths);

// Checkpoint: {"family", "hyperparams", "params"}.
nlohmann::json to_checkpoint(const EnergyModel& model);
std::unique_ptr<EnergyModel> from_checkpoint(const nlohmann::json& checkpoint);

}  // namespace ebm::model
