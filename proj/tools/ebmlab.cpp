// ebmlab: run experiments, validate configs, emit figure CSVs.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ebm/experiment.hpp"

namespace ex = ebm::experiment;

namespace {

constexpr const char* kOutEnv = "EBMLAB_OUT_DIR";

void print_summary(const nlohmann::json& manifest) {
  const auto& r = manifest.at("results");
  std::cout << "experiment " << manifest.at("experiment").get<std::string>() << " done in "
            << manifest.at("wall_time_seconds").get<double>() << " s\n";
  if (r.contains("tv_to_target")) std::cout << "  tv_to_target " << r.at("tv_to_target") << "\n";
  if (r.contains("mode_mass")) std::cout << "  mode max/min ratio " << r.at("mode_mass").at("max_min_ratio") << "\n";
  if (r.contains("sample_histogram_tv")) std::cout << "  sample histogram tv " << r.at("sample_histogram_tv") << "\n";
  if (r.contains("ood") && r.at("ood").at("fpr95").is_number()) {
    std::cout << "  FPR95 " << 100.0 * r.at("ood").at("fpr95").get<double>() << " %, AUPR "
              << 100.0 * r.at("ood").at("aupr").get<double>() << " %\n";
  }
  if (r.contains("pass")) std::cout << "  pass " << (r.at("pass").get<bool>() ? "yes" : "no") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  ex::tune_allocator();
  CLI::App app{"ebmlab: energy-based model estimation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, std::string("Output directory (overrides ") + kOutEnv + " and the config)");

  std::string run_dir;
  auto* figures = app.add_subcommand("emit-figures", "Write per-panel figure CSVs for a finished run");
  figures->add_option("--run", run_dir, "Run directory")->required();

  std::string check_path;
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", check_path, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      ex::load_config(check_path);
      std::cout << "ok\n";
      return 0;
    }
    if (*figures) {
      const auto bundle = ex::emit_figures(run_dir);
      for (const auto& f : bundle.written) std::cout << "wrote " << f << "\n";
      if (!bundle.missing.empty()) {
        std::cerr << "missing inputs in " << run_dir << ":";
        for (const auto& m : bundle.missing) std::cerr << " " << m;
        std::cerr << "\n";
        return 3;
      }
      return 0;
    }
    ex::ExperimentConfig config = ex::load_config(config_path);
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) {
      config.output_dir = out_dir;
    } else if (const char* env = std::getenv(kOutEnv); env != nullptr && *env != '\0') {
      config.output_dir = env;
    }
    config.sync();
    const auto outcome = ex::run(config);
    print_summary(outcome.manifest);
    std::cout << "artifacts in " << outcome.directory << "\n";
    return outcome.exit_code;
  } catch (const ex::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
