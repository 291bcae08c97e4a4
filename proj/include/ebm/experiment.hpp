#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ebm/estimate.hpp"
#include "ebm/eval.hpp"
#include "json.hpp"

namespace ebm::experiment {

enum class Kind { train_1d, train_2d, verify_prop1, verify_prop2, verify_prop3, srlmc_diagnostics, ood_eval };

std::string to_string(Kind kind);
Kind kind_from_string(const std::string& name);

// Invalid configuration; what() reads "<field.path>: <problem>".
class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::string path, const std::string& problem);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct Prop1Settings {
  std::vector<std::size_t> dims{2, 10, 100, 1000};
  std::size_t samples = 10000;
  double eps = 0.05;
  eval::ComponentLaw law = eval::ComponentLaw::uniform(-1.0, 1.0);
  double threshold = 0.99;   // required at the largest dimension
  double tolerance = 0.01;   // Monte Carlo slack on monotonicity
};

struct Prop2Settings {
  std::vector<double> rhos{0.5, 1.0, 2.0, 10.0};
  double beta = 1e-4;
  double scale = 1.0;  // QuadraticEnergy s
  std::size_t chains = 500;
  // Run length in relaxation times 2 s^2 / alpha.
  double relaxation_multiple = 25.0;
  double burn_in = 0.2;
  double tolerance = 0.05;
};

struct Prop3Settings {
  double rho = 10.0;
  std::size_t knots = 2049;
  std::size_t quadrature_cells = 16384;
  double perturbation = 0.05;  // theta' = (1 + perturbation) theta
  double threshold = 1e-3;
};

struct DiagnosticsSettings {
  // Trained checkpoint; when unset a model is trained from `train` first.
  std::optional<std::string> checkpoint;
  // samples.csv of a finished SRLMC run, used as buffer contents with a
  // checkpoint.
  std::optional<std::string> buffer_samples;
  std::size_t chains = 10000;
  std::vector<double> rhos{1.0, 10.0, 100.0};
  std::size_t bins = 100;
};

struct OodSettings {
  std::optional<std::string> checkpoint;
  std::size_t in_samples = 10000;
  std::size_t out_samples = 10000;
  double sigmas = 3.0;
};

struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  Kind experiment = Kind::train_1d;
  uint64_t seed = 1;
  std::string output_dir;
  model::MlpSpec model;
  // Omega: evaluation box, integration/particle domain and chain clamp box.
  dist::BoxDomain domain;
  // Domains inside mirror `domain`; the seed mirrors `seed`.
  estimate::TrainConfig train;
  std::size_t data_samples = 50000;  // draws written to data.csv
  std::vector<std::size_t> histogram_bins;
  Prop1Settings prop1;
  Prop2Settings prop2;
  Prop3Settings prop3;
  DiagnosticsSettings diagnostics;
  OodSettings ood;

  // Rewrites the derived fields of `train` after edits to domain or seed.
  void sync();
};

// Defaults for an experiment.
ExperimentConfig default_config(Kind kind);

// Starts from default_config(experiment) and overrides the given fields.
// Unknown fields and out-of-range values raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);
// Semantic checks; throws ConfigError naming the field.
void validate(const ExperimentConfig& config);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

dist::GaussianMixture target_for(Kind kind);

struct RunOutcome {
  int exit_code = 0;
  std::string directory;
  nlohmann::json manifest;
};

// Writes the artifacts of one experiment into config.output_dir.
RunOutcome run(const ExperimentConfig& config);

// The four inputs emit_figures needs.
inline const std::vector<std::string> kFigureInputs{"manifest.json", "trace.csv", "density_learned.csv", "samples.csv"};

struct FigureBundle {
  std::vector<std::string> written;
  std::vector<std::string> missing;
};

// Panel CSVs: fig_grad_norm, fig_log_density, fig_histograms,
// fig_negative_energy. Panels whose inputs are missing are skipped.
FigureBundle emit_figures(const std::string& run_dir);

// Keeps freed memory in the process; the training loops allocate and free
// the same large blocks every step.
void tune_allocator();

}  // namespace ebm::experiment
