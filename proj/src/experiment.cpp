#include "ebm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "ebm/csv.hpp"

#ifndef EBMLAB_VERSION
#define EBMLAB_VERSION "unknown"
#endif

namespace ebm::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kKindNames[] = {"train-1d",     "train-2d",          "verify-prop1", "verify-prop2",
                                      "verify-prop3", "srlmc-diagnostics", "ood-eval"};

bool uses_model(Kind k) {
  return k == Kind::train_1d || k == Kind::train_2d || k == Kind::srlmc_diagnostics || k == Kind::ood_eval;
}

}  // namespace

std::string to_string(Kind kind) { return kKindNames[static_cast<int>(kind)]; }

Kind kind_from_string(const std::string& name) {
  for (int k = 0; k < 7; ++k) {
    if (name == kKindNames[k]) return static_cast<Kind>(k);
  }
  throw InvalidArgument("unknown experiment '" + name + "'");
}

ConfigError::ConfigError(std::string path, const std::string& problem)
    : InvalidArgument(path + ": " + problem), path_(std::move(path)) {}

dist::GaussianMixture target_for(Kind kind) {
  return kind == Kind::train_2d ? dist::GaussianMixture::six_mode_ring() : dist::GaussianMixture::two_gaussians_1d();
}

void ExperimentConfig::sync() {
  train.seed = seed;
  train.riemann.domain = domain;
  train.psusp.domain = domain;
  train.eval_domain = domain;
  if (train.srlmc.lmc.clamp) train.srlmc.lmc.clamp = domain;
}

ExperimentConfig default_config(Kind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  c.output_dir = "runs/" + to_string(kind);
  if (kind == Kind::train_2d) {
    c.domain = dist::BoxDomain::cube(2, -1.5, 1.5);
    c.model = {{2, 64, 64, 64, 64, 1}, 0.2, model::MlpHead::scalar};
    c.train.method = estimate::Method::psusp;
    c.train.optimizer.kind = estimate::OptimizerKind::adam;
    c.train.optimizer.learning_rate = 0.0005;
    c.train.iterations = 4000;
    c.train.psusp.usp.combined = true;
    c.train.eval_resolution = {256, 256};
    c.train.psusp.init = dist::Proposal::component(target_for(kind), 0);
    c.histogram_bins = {32, 32};
  } else {
    c.domain = dist::BoxDomain::cube(1, -1.0, 1.0);
    c.model = {{1, 32, 32, 32, 32, 1}, 0.2, model::MlpHead::reconstruction};
    c.train.method = estimate::Method::srlmc;
    c.train.optimizer.learning_rate = 0.01;
    c.train.iterations = 5000;
    c.train.eval_resolution = {1024};
    c.train.psusp.init = dist::Proposal::component(target_for(kind), 1);
    c.histogram_bins = {100};
  }
  c.train.srlmc.lmc.clamp = c.domain;
  c.train.srlmc.proposal = dist::Proposal::uniform(c.domain);
  c.sync();
  return c;
}

// ---------------------------------------------------------------------------
// JSON reading with field paths

namespace {

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(label(), "must be an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return node_.contains(key); }

  void allow(std::initializer_list<const char*> keys) const {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : node_.items()) {
      if (!allowed.count(item.key())) throw ConfigError(field(item.key()), "unknown field");
    }
  }

  Reader child(const std::string& key) const { return Reader(node_.at(key), field(key)); }
  const json& raw(const std::string& key) const { return node_.at(key); }

  void number(const std::string& key, double& out) const {
    if (!has(key)) return;
    out = as_number(node_.at(key), field(key));
  }
  void optional_number(const std::string& key, std::optional<double>& out) const {
    if (!has(key)) return;
    if (node_.at(key).is_null()) {
      out.reset();
      return;
    }
    out = as_number(node_.at(key), field(key));
  }
  void count(const std::string& key, std::size_t& out, std::size_t min = 0) const {
    if (!has(key)) return;
    out = as_count(node_.at(key), field(key), min);
  }
  void optional_count(const std::string& key, std::optional<std::size_t>& out, std::size_t min = 0) const {
    if (!has(key)) return;
    if (node_.at(key).is_null()) {
      out.reset();
      return;
    }
    out = as_count(node_.at(key), field(key), min);
  }
  void boolean(const std::string& key, bool& out) const {
    if (!has(key)) return;
    if (!node_.at(key).is_boolean()) throw ConfigError(field(key), "must be true or false");
    out = node_.at(key).get<bool>();
  }
  void string(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    if (!node_.at(key).is_string()) throw ConfigError(field(key), "must be a string");
    out = node_.at(key).get<std::string>();
  }
  void numbers(const std::string& key, std::vector<double>& out) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    out.clear();
    if (v.is_number()) {
      out.push_back(as_number(v, field(key)));
      return;
    }
    if (!v.is_array()) throw ConfigError(field(key), "must be a number or an array of numbers");
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], field(key) + "[" + std::to_string(i) + "]"));
  }
  void counts(const std::string& key, std::vector<std::size_t>& out, std::size_t min = 0) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(field(key), "must be an array of integers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(as_count(v[i], field(key) + "[" + std::to_string(i) + "]", min));
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
    return d;
  }
  static std::size_t as_count(const json& v, const std::string& path, std::size_t min) {
    const std::string expected = "must be an integer >= " + std::to_string(min);
    if (v.is_number_integer()) {
      if (!v.is_number_unsigned() && v.get<int64_t>() < 0) throw ConfigError(path, expected + " (got " + v.dump() + ")");
      const auto n = v.get<uint64_t>();
      if (n < min) throw ConfigError(path, expected + " (got " + v.dump() + ")");
      return static_cast<std::size_t>(n);
    }
    if (v.is_number_float()) throw ConfigError(path, expected + " (got " + v.dump() + ")");
    throw ConfigError(path, "must be an integer");
  }

 private:
  std::string label() const { return path_.empty() ? "<config>" : path_; }

  const json& node_;
  std::string path_;
};

Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

std::vector<double> from_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json schedule_json(const std::vector<double>& s) { return s.size() == 1 ? json(s[0]) : json(s); }

dist::BoxDomain parse_box_fields(const Reader& r) {
  if (!r.has("lo") || !r.has("hi")) throw ConfigError(r.field("lo"), "box needs both lo and hi");
  std::vector<double> lo, hi;
  r.numbers("lo", lo);
  r.numbers("hi", hi);
  if (lo.size() != hi.size() || lo.empty()) throw ConfigError(r.field("hi"), "lo and hi must have the same nonzero length");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] < hi[i])) throw ConfigError(r.field("hi") + "[" + std::to_string(i) + "]", "must exceed lo");
  }
  return dist::BoxDomain(to_vector(lo), to_vector(hi));
}

dist::BoxDomain parse_box(const Reader& r) {
  r.allow({"lo", "hi"});
  return parse_box_fields(r);
}

json box_json(const dist::BoxDomain& b) { return {{"lo", from_vector(b.lo())}, {"hi", from_vector(b.hi())}}; }

dist::Proposal parse_proposal(const Reader& r, const dist::GaussianMixture& target) {
  std::string kind = "uniform";
  r.string("kind", kind);
  if (kind == "uniform") {
    r.allow({"kind", "lo", "hi"});
    return dist::Proposal::uniform(parse_box_fields(r));
  }
  if (kind == "gaussian") {
    r.allow({"kind", "mean", "stddev"});
    std::vector<double> mean;
    double stddev = 1.0;
    r.numbers("mean", mean);
    r.number("stddev", stddev);
    if (mean.empty()) throw ConfigError(r.field("mean"), "must be nonempty");
    if (!(stddev > 0.0)) throw ConfigError(r.field("stddev"), "must be positive");
    return dist::Proposal::gaussian(to_vector(mean), stddev);
  }
  if (kind == "component") {
    r.allow({"kind", "index"});
    std::size_t index = 0;
    r.count("index", index);
    if (index >= target.components()) {
      throw ConfigError(r.field("index"), "target has " + std::to_string(target.components()) + " components");
    }
    return dist::Proposal::component(target, index);
  }
  throw ConfigError(r.field("kind"), "must be one of uniform, gaussian, component");
}

json proposal_json(const dist::Proposal& p) {
  return std::visit(
      [](const auto& k) -> json {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, dist::UniformOnBox>) {
          return {{"kind", "uniform"}, {"lo", from_vector(k.box.lo())}, {"hi", from_vector(k.box.hi())}};
        } else if constexpr (std::is_same_v<T, dist::IsotropicGaussian>) {
          return {{"kind", "gaussian"}, {"mean", from_vector(k.mean)}, {"stddev", k.stddev}};
        } else {
          return {{"kind", "component"}, {"index", k.component}};
        }
      },
      p.kind());
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

void parse_train(const Reader& r, ExperimentConfig& c, const dist::GaussianMixture& target) {
  r.allow({"method", "iterations", "batch_size", "optimizer", "srlmc", "riemann", "psusp", "snapshot_every",
           "eval_resolution", "early_stop", "plateau_window", "plateau_tol"});
  auto& t = c.train;
  if (r.has("method")) {
    std::string m;
    r.string("method", m);
    try {
      t.method = estimate::method_from_string(m);
    } catch (const InvalidArgument&) {
      throw ConfigError(r.field("method"), "must be one of srlmc, riemann, psusp");
    }
  }
  r.count("iterations", t.iterations, 1);
  r.count("batch_size", t.batch_size, 1);
  r.count("snapshot_every", t.snapshot_every);
  r.counts("eval_resolution", t.eval_resolution, 16);
  r.boolean("early_stop", t.early_stop);
  r.count("plateau_window", t.plateau_window, 1);
  r.number("plateau_tol", t.plateau_tol);

  if (r.has("optimizer")) {
    const Reader o = r.child("optimizer");
    o.allow({"kind", "learning_rate", "beta1", "beta2", "epsilon"});
    if (o.has("kind")) {
      std::string k;
      o.string("kind", k);
      if (k != "sgd" && k != "adam") throw ConfigError(o.field("kind"), "must be sgd or adam");
      t.optimizer.kind = estimate::optimizer_from_string(k);
    }
    o.number("learning_rate", t.optimizer.learning_rate);
    o.number("beta1", t.optimizer.beta1);
    o.number("beta2", t.optimizer.beta2);
    o.number("epsilon", t.optimizer.epsilon);
  }
  if (r.has("srlmc")) {
    const Reader s = r.child("srlmc");
    s.allow({"steps", "alpha", "beta", "rho", "clamp", "grad_clip", "use_buffer", "buffer_capacity", "reinit_rate",
             "chains", "proposal", "data_noise"});
    auto& lmc = t.srlmc.lmc;
    s.count("steps", lmc.steps, 1);
    s.numbers("alpha", lmc.alpha);
    s.numbers("beta", lmc.beta);
    s.optional_number("rho", lmc.rho);
    s.optional_number("grad_clip", lmc.grad_clip);
    if (s.has("clamp")) {
      bool clamp = true;
      s.boolean("clamp", clamp);
      lmc.clamp = clamp ? std::optional<dist::BoxDomain>(c.domain) : std::nullopt;
    }
    s.boolean("use_buffer", t.srlmc.use_buffer);
    s.count("buffer_capacity", t.srlmc.buffer_capacity, 1);
    s.number("reinit_rate", t.srlmc.reinit_rate);
    s.count("chains", t.srlmc.chains);
    s.optional_number("data_noise", t.srlmc.data_noise);
    if (s.has("proposal")) t.srlmc.proposal = parse_proposal(s.child("proposal"), target);
  }
  if (r.has("riemann")) {
    const Reader s = r.child("riemann");
    s.allow({"points", "grid"});
    s.count("points", t.riemann.points, 1);
    s.boolean("grid", t.riemann.grid);
  }
  if (r.has("psusp")) {
    const Reader s = r.child("psusp");
    s.allow({"max_steps", "repel_steps", "rounds", "lambda_size", "gamma_size", "estimation_size", "step_max",
             "step_rep", "combined", "particles", "epsilon", "init"});
    auto& u = t.psusp.usp;
    s.count("max_steps", u.max_steps);
    s.count("repel_steps", u.repel_steps);
    s.count("rounds", u.rounds, 1);
    s.count("lambda_size", u.lambda_size, 1);
    s.optional_count("gamma_size", u.gamma_size);
    s.count("estimation_size", u.estimation_size, 1);
    s.optional_number("step_max", u.step_max);
    s.optional_number("step_rep", u.step_rep);
    s.boolean("combined", u.combined);
    s.count("particles", t.psusp.particles, 2);
    s.number("epsilon", t.psusp.epsilon);
    if (s.has("init")) t.psusp.init = parse_proposal(s.child("init"), target);
  }
}

json train_json(const estimate::TrainConfig& t) {
  const auto& lmc = t.srlmc.lmc;
  const auto& u = t.psusp.usp;
  return {
      {"method", estimate::to_string(t.method)},
      {"iterations", t.iterations},
      {"batch_size", t.batch_size},
      {"optimizer",
       {{"kind", estimate::to_string(t.optimizer.kind)},
        {"learning_rate", t.optimizer.learning_rate},
        {"beta1", t.optimizer.beta1},
        {"beta2", t.optimizer.beta2},
        {"epsilon", t.optimizer.epsilon}}},
      {"srlmc",
       {{"steps", lmc.steps},
        {"alpha", schedule_json(lmc.alpha)},
        {"beta", schedule_json(lmc.beta)},
        {"rho", optional_json(lmc.rho)},
        {"clamp", lmc.clamp.has_value()},
        {"grad_clip", optional_json(lmc.grad_clip)},
        {"use_buffer", t.srlmc.use_buffer},
        {"buffer_capacity", t.srlmc.buffer_capacity},
        {"reinit_rate", t.srlmc.reinit_rate},
        {"chains", t.srlmc.chains},
        {"proposal", proposal_json(t.srlmc.proposal)},
        {"data_noise", optional_json(t.srlmc.data_noise)}}},
      {"riemann", {{"points", t.riemann.points}, {"grid", t.riemann.grid}}},
      {"psusp",
       {{"max_steps", u.max_steps},
        {"repel_steps", u.repel_steps},
        {"rounds", u.rounds},
        {"lambda_size", u.lambda_size},
        {"gamma_size", optional_json(u.gamma_size)},
        {"estimation_size", u.estimation_size},
        {"step_max", optional_json(u.step_max)},
        {"step_rep", optional_json(u.step_rep)},
        {"combined", u.combined},
        {"particles", t.psusp.particles},
        {"epsilon", t.psusp.epsilon},
        {"init", proposal_json(t.psusp.init)}}},
      {"snapshot_every", t.snapshot_every},
      {"eval_resolution", t.eval_resolution},
      {"early_stop", t.early_stop},
      {"plateau_window", t.plateau_window},
      {"plateau_tol", t.plateau_tol},
  };
}

json law_json(const eval::ComponentLaw& law) {
  switch (law.kind) {
    case eval::ComponentLaw::Kind::uniform: return {{"kind", "uniform"}, {"lo", law.a}, {"hi", law.b}};
    case eval::ComponentLaw::Kind::gaussian: return {{"kind", "gaussian"}, {"mean", law.a}, {"stddev", law.b}};
    case eval::ComponentLaw::Kind::constant: return {{"kind", "constant"}, {"value", law.a}};
  }
  return {};
}

eval::ComponentLaw parse_law(const Reader& r) {
  std::string kind = "uniform";
  r.string("kind", kind);
  eval::ComponentLaw law;
  if (kind == "uniform") {
    r.allow({"kind", "lo", "hi"});
    law = eval::ComponentLaw::uniform(-1.0, 1.0);
    r.number("lo", law.a);
    r.number("hi", law.b);
    if (!(law.a < law.b)) throw ConfigError(r.field("hi"), "must exceed lo");
  } else if (kind == "gaussian") {
    r.allow({"kind", "mean", "stddev"});
    law = eval::ComponentLaw::gaussian(0.0, 1.0);
    r.number("mean", law.a);
    r.number("stddev", law.b);
    if (!(law.b > 0.0)) throw ConfigError(r.field("stddev"), "must be positive");
  } else if (kind == "constant") {
    r.allow({"kind", "value"});
    law = eval::ComponentLaw::constant(1.0);
    r.number("value", law.a);
  } else {
    throw ConfigError(r.field("kind"), "must be one of uniform, gaussian, constant");
  }
  return law;
}

void optional_path(const Reader& r, const std::string& key, std::optional<std::string>& out) {
  if (!r.has(key)) return;
  if (r.raw(key).is_null()) {
    out.reset();
    return;
  }
  std::string s;
  r.string(key, s);
  out = s;
}

}  // namespace

ExperimentConfig parse_config(const json& document) {
  const Reader root(document, "");
  root.allow({"schema_version", "experiment", "seed", "output_dir", "model", "domain", "train", "data_samples",
              "histogram_bins", "prop1", "prop2", "prop3", "diagnostics", "ood"});
  if (!root.has("schema_version")) throw ConfigError("schema_version", "missing");
  std::size_t version = 0;
  root.count("schema_version", version);
  if (version != ExperimentConfig::kSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                                             std::to_string(ExperimentConfig::kSchemaVersion) + ")");
  }
  if (!root.has("experiment")) throw ConfigError("experiment", "missing");
  std::string name;
  root.string("experiment", name);
  Kind kind;
  try {
    kind = kind_from_string(name);
  } catch (const InvalidArgument&) {
    throw ConfigError("experiment", "unknown experiment '" + name + "'");
  }
  ExperimentConfig c = default_config(kind);
  const auto target = target_for(kind);

  if (!root.has("seed")) throw ConfigError("seed", "missing (runs are never seeded from the clock)");
  std::size_t seed = 0;
  root.count("seed", seed);
  c.seed = seed;
  root.string("output_dir", c.output_dir);
  root.count("data_samples", c.data_samples, 1);
  root.counts("histogram_bins", c.histogram_bins, 1);

  if (root.has("domain")) {
    c.domain = parse_box(root.child("domain"));
    c.train.srlmc.proposal = dist::Proposal::uniform(c.domain);
  }
  if (root.has("model")) {
    const Reader m = root.child("model");
    m.allow({"widths", "leaky_slope", "head"});
    m.counts("widths", c.model.widths, 1);
    m.number("leaky_slope", c.model.leaky_slope);
    if (m.has("head")) {
      std::string head;
      m.string("head", head);
      try {
        c.model.head = model::mlp_head_from_string(head);
      } catch (const InvalidArgument&) {
        throw ConfigError(m.field("head"), "must be scalar or reconstruction");
      }
    }
  }
  if (root.has("train")) parse_train(root.child("train"), c, target);
  if (root.has("prop1")) {
    const Reader r = root.child("prop1");
    r.allow({"dims", "samples", "eps", "law", "threshold", "tolerance"});
    r.counts("dims", c.prop1.dims, 1);
    r.count("samples", c.prop1.samples, 1);
    r.number("eps", c.prop1.eps);
    if (r.has("law")) c.prop1.law = parse_law(r.child("law"));
    r.number("threshold", c.prop1.threshold);
    r.number("tolerance", c.prop1.tolerance);
  }
  if (root.has("prop2")) {
    const Reader r = root.child("prop2");
    r.allow({"rhos", "beta", "scale", "chains", "relaxation_multiple", "burn_in", "tolerance"});
    r.numbers("rhos", c.prop2.rhos);
    r.number("beta", c.prop2.beta);
    r.number("scale", c.prop2.scale);
    r.count("chains", c.prop2.chains, 1);
    r.number("relaxation_multiple", c.prop2.relaxation_multiple);
    r.number("burn_in", c.prop2.burn_in);
    r.number("tolerance", c.prop2.tolerance);
  }
  if (root.has("prop3")) {
    const Reader r = root.child("prop3");
    r.allow({"rho", "knots", "quadrature_cells", "perturbation", "threshold"});
    r.number("rho", c.prop3.rho);
    r.count("knots", c.prop3.knots, 3);
    r.count("quadrature_cells", c.prop3.quadrature_cells, 16);
    r.number("perturbation", c.prop3.perturbation);
    r.number("threshold", c.prop3.threshold);
  }
  if (root.has("diagnostics")) {
    const Reader r = root.child("diagnostics");
    r.allow({"checkpoint", "buffer_samples", "chains", "rhos", "bins"});
    optional_path(r, "checkpoint", c.diagnostics.checkpoint);
    optional_path(r, "buffer_samples", c.diagnostics.buffer_samples);
    r.count("chains", c.diagnostics.chains, 1);
    r.numbers("rhos", c.diagnostics.rhos);
    r.count("bins", c.diagnostics.bins, 1);
  }
  if (root.has("ood")) {
    const Reader r = root.child("ood");
    r.allow({"checkpoint", "in_samples", "out_samples", "sigmas"});
    optional_path(r, "checkpoint", c.ood.checkpoint);
    r.count("in_samples", c.ood.in_samples, 1);
    r.count("out_samples", c.ood.out_samples, 1);
    r.number("sigmas", c.ood.sigmas);
  }
  c.sync();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<config>", "cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<config>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  auto opt_path = [](const std::optional<std::string>& p) { return p ? json(*p) : json(nullptr); };
  return {
      {"schema_version", ExperimentConfig::kSchemaVersion},
      {"experiment", to_string(c.experiment)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"model",
       {{"widths", c.model.widths}, {"leaky_slope", c.model.leaky_slope}, {"head", model::to_string(c.model.head)}}},
      {"domain", box_json(c.domain)},
      {"train", train_json(c.train)},
      {"data_samples", c.data_samples},
      {"histogram_bins", c.histogram_bins},
      {"prop1",
       {{"dims", c.prop1.dims},
        {"samples", c.prop1.samples},
        {"eps", c.prop1.eps},
        {"law", law_json(c.prop1.law)},
        {"threshold", c.prop1.threshold},
        {"tolerance", c.prop1.tolerance}}},
      {"prop2",
       {{"rhos", c.prop2.rhos},
        {"beta", c.prop2.beta},
        {"scale", c.prop2.scale},
        {"chains", c.prop2.chains},
        {"relaxation_multiple", c.prop2.relaxation_multiple},
        {"burn_in", c.prop2.burn_in},
        {"tolerance", c.prop2.tolerance}}},
      {"prop3",
       {{"rho", c.prop3.rho},
        {"knots", c.prop3.knots},
        {"quadrature_cells", c.prop3.quadrature_cells},
        {"perturbation", c.prop3.perturbation},
        {"threshold", c.prop3.threshold}}},
      {"diagnostics",
       {{"checkpoint", opt_path(c.diagnostics.checkpoint)},
        {"buffer_samples", opt_path(c.diagnostics.buffer_samples)},
        {"chains", c.diagnostics.chains},
        {"rhos", c.diagnostics.rhos},
        {"bins", c.diagnostics.bins}}},
      {"ood",
       {{"checkpoint", opt_path(c.ood.checkpoint)},
        {"in_samples", c.ood.in_samples},
        {"out_samples", c.ood.out_samples},
        {"sigmas", c.ood.sigmas}}},
  };
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

void validate(const ExperimentConfig& c) {
  const std::size_t dim = c.domain.dim();
  if (dim == 0) throw ConfigError("domain", "missing");
  const auto target = target_for(c.experiment);
  const bool needs_model = uses_model(c.experiment);
  if (needs_model && dim != target.dim()) {
    throw ConfigError("domain", "has dimension " + std::to_string(dim) + " but the " + to_string(c.experiment) +
                                    " target is " + std::to_string(target.dim()) + "-D");
  }
  if (c.histogram_bins.size() != dim) throw ConfigError("histogram_bins", "needs one entry per domain axis");
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must be nonempty");

  if (needs_model) {
    const auto& w = c.model.widths;
    if (w.size() < 2) throw ConfigError("model.widths", "needs at least input and output widths");
    if (w.front() != dim) throw ConfigError("model.widths[0]", "must equal the domain dimension " + std::to_string(dim));
    if (c.model.head == model::MlpHead::scalar && w.back() != 1) {
      throw ConfigError("model.widths", "scalar head needs output width 1");
    }
    if (c.model.head == model::MlpHead::reconstruction && w.back() != w.front()) {
      throw ConfigError("model.widths", "reconstruction head needs output width == input width");
    }
    if (!(c.model.leaky_slope > 0.0 && c.model.leaky_slope < 1.0)) {
      throw ConfigError("model.leaky_slope", "must lie in (0, 1)");
    }

    const auto& t = c.train;
    if (!(t.optimizer.learning_rate > 0.0)) throw ConfigError("train.optimizer.learning_rate", "must be positive");
    if (t.optimizer.kind == estimate::OptimizerKind::adam) {
      if (!(t.optimizer.beta1 >= 0.0 && t.optimizer.beta1 < 1.0)) throw ConfigError("train.optimizer.beta1", "must lie in [0, 1)");
      if (!(t.optimizer.beta2 >= 0.0 && t.optimizer.beta2 < 1.0)) throw ConfigError("train.optimizer.beta2", "must lie in [0, 1)");
      if (!(t.optimizer.epsilon > 0.0)) throw ConfigError("train.optimizer.epsilon", "must be positive");
    }
    if (t.eval_resolution.size() != dim) throw ConfigError("train.eval_resolution", "needs one entry per domain axis");
    if (!(t.plateau_tol >= 0.0)) throw ConfigError("train.plateau_tol", "must be non-negative");

    const auto& lmc = t.srlmc.lmc;
    auto check_schedule = [&](const std::vector<double>& s, const std::string& path) {
      if (s.size() != 1 && s.size() != lmc.steps) {
        throw ConfigError(path, "needs 1 or steps (" + std::to_string(lmc.steps) + ") entries");
      }
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (!(s[i] > 0.0)) throw ConfigError(path + (s.size() > 1 ? "[" + std::to_string(i) + "]" : ""), "must be positive");
      }
    };
    check_schedule(lmc.alpha, "train.srlmc.alpha");
    check_schedule(lmc.beta, "train.srlmc.beta");
    if (lmc.rho && !(*lmc.rho > 0.0)) throw ConfigError("train.srlmc.rho", "must be positive");
    if (lmc.grad_clip && !(*lmc.grad_clip > 0.0)) throw ConfigError("train.srlmc.grad_clip", "must be positive");
    try {
      lmc.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError("train.srlmc", e.what());
    }
    if (!(t.srlmc.reinit_rate >= 0.0 && t.srlmc.reinit_rate <= 1.0)) {
      throw ConfigError("train.srlmc.reinit_rate", "must lie in [0, 1]");
    }
    if (t.srlmc.data_noise && !(*t.srlmc.data_noise >= 0.0)) throw ConfigError("train.srlmc.data_noise", "must be non-negative");
    if (t.srlmc.proposal.dim() != dim) throw ConfigError("train.srlmc.proposal", "dimension differs from the domain");
    if (t.riemann.grid && dim != 1 && t.method == estimate::Method::riemann) {
      throw ConfigError("train.riemann.grid", "grid points are 1-D only; set grid to false");
    }
    if (!(t.psusp.epsilon > 0.0)) throw ConfigError("train.psusp.epsilon", "must be positive");
    if (t.psusp.init.dim() != dim) throw ConfigError("train.psusp.init", "dimension differs from the domain");
    if (t.psusp.usp.step_max && !(*t.psusp.usp.step_max > 0.0)) throw ConfigError("train.psusp.step_max", "must be positive");
    if (t.psusp.usp.step_rep && !(*t.psusp.usp.step_rep > 0.0)) throw ConfigError("train.psusp.step_rep", "must be positive");
    if (t.method == estimate::Method::psusp) {
      try {
        t.psusp.usp.validate(t.psusp.particles);
      } catch (const InvalidArgument& e) {
        throw ConfigError("train.psusp", e.what());
      }
    }
    try {
      t.validate(dim);
    } catch (const InvalidArgument& e) {
      throw ConfigError("train", e.what());
    }
  }

  switch (c.experiment) {
    case Kind::verify_prop1:
      if (c.prop1.dims.empty()) throw ConfigError("prop1.dims", "must be nonempty");
      if (!(c.prop1.eps > 0.0 && c.prop1.eps < 1.0)) throw ConfigError("prop1.eps", "must lie in (0, 1)");
      break;
    case Kind::verify_prop2:
      if (c.prop2.rhos.empty()) throw ConfigError("prop2.rhos", "must be nonempty");
      for (std::size_t i = 0; i < c.prop2.rhos.size(); ++i) {
        if (!(c.prop2.rhos[i] > 0.0)) throw ConfigError("prop2.rhos[" + std::to_string(i) + "]", "must be positive");
      }
      if (!(c.prop2.beta > 0.0)) throw ConfigError("prop2.beta", "must be positive");
      if (!(c.prop2.scale > 0.0)) throw ConfigError("prop2.scale", "must be positive");
      if (!(c.prop2.relaxation_multiple > 0.0)) throw ConfigError("prop2.relaxation_multiple", "must be positive");
      if (!(c.prop2.burn_in >= 0.0 && c.prop2.burn_in < 1.0)) throw ConfigError("prop2.burn_in", "must lie in [0, 1)");
      break;
    case Kind::verify_prop3:
      if (dim != 1) throw ConfigError("domain", "verify-prop3 is 1-D");
      if (!(c.prop3.rho > 0.0)) throw ConfigError("prop3.rho", "must be positive");
      if (c.prop3.perturbation == 0.0) throw ConfigError("prop3.perturbation", "must be nonzero");
      break;
    case Kind::srlmc_diagnostics:
      if (dim != 1) throw ConfigError("domain", "srlmc-diagnostics is 1-D");
      for (std::size_t i = 0; i < c.diagnostics.rhos.size(); ++i) {
        if (!(c.diagnostics.rhos[i] > 0.0)) throw ConfigError("diagnostics.rhos[" + std::to_string(i) + "]", "must be positive");
      }
      break;
    case Kind::ood_eval:
      if (!(c.ood.sigmas > 0.0)) throw ConfigError("ood.sigmas", "must be positive");
      break;
    default: break;
  }
}

// ---------------------------------------------------------------------------
// Runs

namespace {

class RunContext {
 public:
  explicit RunContext(const std::string& dir) : dir_(dir) { fs::create_directories(dir_); }

  std::string file(const std::string& name) {
    if (std::find(artifacts_.begin(), artifacts_.end(), name) == artifacts_.end()) artifacts_.push_back(name);
    return (dir_ / name).string();
  }
  const std::vector<std::string>& artifacts() const { return artifacts_; }
  std::string dir() const { return dir_.string(); }

 private:
  fs::path dir_;
  std::vector<std::string> artifacts_;
};

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << doc.dump(2) << "\n";
}

std::vector<std::string> coord_names(std::size_t dim) {
  if (dim == 1) return {"x"};
  if (dim == 2) return {"x", "y"};
  std::vector<std::string> out;
  for (std::size_t a = 0; a < dim; ++a) out.push_back("x" + std::to_string(a));
  return out;
}

// Columns: sample, coordinates[, weight].
void write_points_csv(const std::string& path, const Points& pts, const Vector* weights = nullptr) {
  std::vector<std::string> header{"sample"};
  for (const auto& n : coord_names(static_cast<std::size_t>(pts.rows()))) header.push_back(n);
  if (weights != nullptr) header.push_back("weight");
  CsvWriter csv(path, header);
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    csv.cell(static_cast<std::size_t>(j));
    for (Eigen::Index i = 0; i < pts.rows(); ++i) csv.cell(pts(i, j));
    if (weights != nullptr) csv.cell((*weights)(j));
    csv.end_row();
  }
}

Points read_points_csv(const std::string& path, std::size_t dim, Vector* weights) {
  const CsvTable t = read_csv(path);
  const auto names = coord_names(dim);
  Points out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t a = 0; a < dim; ++a) {
    const auto col = t.numeric_column(names[a]);
    for (std::size_t j = 0; j < col.size(); ++j) out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)) = col[j];
  }
  if (weights != nullptr) {
    const bool has_weight = std::find(t.header.begin(), t.header.end(), "weight") != t.header.end();
    *weights = Vector::Constant(out.cols(), 1.0);
    if (has_weight) {
      const auto w = t.numeric_column("weight");
      for (std::size_t j = 0; j < w.size(); ++j) (*weights)(static_cast<Eigen::Index>(j)) = w[j];
    }
  }
  return out;
}

std::vector<eval::Region> basins_for(const dist::GaussianMixture& target, const dist::BoxDomain& domain) {
  return target.dim() == 1 ? eval::watershed_basins_1d(target, domain) : eval::voronoi_basins(target);
}

json mode_report_json(const eval::ModeReport& report) {
  json modes = json::array();
  for (const auto& m : report.modes) {
    modes.push_back({{"learned_mass", m.learned_mass},
                     {"target_mass", m.target_mass ? json(*m.target_mass) : json(nullptr)},
                     {"ratio", m.ratio ? json(*m.ratio) : json(nullptr)}});
  }
  const double ratio = report.max_min_ratio();
  return {{"modes", modes}, {"max_min_ratio", std::isfinite(ratio) ? json(ratio) : json("inf")}};
}

double tempering_rho(const sampler::LmcConfig& lmc) { return lmc.rho ? *lmc.rho : lmc.alpha_at(0) / lmc.beta_at(0); }

// Learned / target / tempered densities on the evaluation grid.
void write_densities(const ExperimentConfig& c, const model::EnergyModel& energy, bool tempered, RunContext& ctx,
                     json& results) {
  const auto target = target_for(c.experiment);
  const auto& res = c.train.eval_resolution;
  const auto target_grid = dist::mixture_grid(target, c.domain, res);
  dist::write_density_csv(ctx.file("density_target.csv"), target_grid);
  try {
    const auto q = dist::quadrature_normalize(energy, 1.0, c.domain, res);
    dist::write_density_csv(ctx.file("density_learned.csv"), q.grid);
    results["log_z"] = q.log_z;
    results["tv_to_target"] = dist::tv_distance(q.grid, target_grid);
    const auto report = eval::mode_mass(q.grid, basins_for(target, c.domain), &target_grid);
    results["mode_mass"] = mode_report_json(report);
    if (tempered) {
      const double rho = tempering_rho(c.train.srlmc.lmc);
      const auto qr = dist::quadrature_normalize(energy, rho, c.domain, res);
      dist::write_density_csv(ctx.file("density_tempered.csv"), qr.grid);
      results["tempered_rho"] = rho;
      results["tempered_tv_to_target"] = dist::tv_distance(qr.grid, target_grid);
    }
  } catch (const InvalidArgument& e) {
    results["evaluation_error"] = e.what();
  }
}

struct OodData {
  Points in;
  Points out;
};

OodData ood_samples(const ExperimentConfig& c, std::size_t n_in, std::size_t n_out, double sigmas) {
  const auto target = target_for(c.experiment);
  Rng in_rng(c.seed, 20), out_rng(c.seed, 21);
  return {target.sample(n_in, in_rng), eval::sample_ood(target, c.domain, sigmas, n_out, out_rng)};
}

void write_ood_metrics(const ExperimentConfig& c, const model::EnergyModel& energy, std::size_t n_in,
                       std::size_t n_out, double sigmas, RunContext& ctx, json& results) {
  const auto data = ood_samples(c, n_in, n_out, sigmas);
  eval::ScoreSet scores;
  const Vector e_in = energy.energy_batch(data.in);
  const Vector e_out = energy.energy_batch(data.out);
  for (Eigen::Index i = 0; i < e_in.size(); ++i) scores.in_scores.push_back(-e_in(i));
  for (Eigen::Index i = 0; i < e_out.size(); ++i) scores.out_scores.push_back(-e_out(i));
  json metrics = {{"dataset", c.experiment == Kind::train_2d ? "six-mode-ring" : "two-gaussians-1d"},
                  {"n_in", n_in},
                  {"n_out", n_out},
                  {"seed", c.seed}};
  try {
    metrics["fpr95"] = eval::fpr_at_tpr(scores, 0.95);
    metrics["aupr"] = eval::aupr(scores);
  } catch (const InvalidArgument& e) {
    metrics["fpr95"] = nullptr;
    metrics["aupr"] = nullptr;
    metrics["error"] = e.what();
  }
  write_json(ctx.file("metrics.json"), metrics);
  results["ood"] = metrics;
}

struct Trained {
  std::unique_ptr<model::EnergyModel> model;
  std::optional<sampler::ReplayBuffer> buffer;
};

// Trains, then writes trace, snapshots, checkpoint, samples, data and
// (for PS-USP) particles.
Trained train_and_write(const ExperimentConfig& c, RunContext& ctx, json& results) {
  const auto target = target_for(c.experiment);
  const model::MlpEnergy initial(c.model, c.seed);
  auto result = estimate::train(initial, target, c.train);
  const auto& trace = result.trace;
  estimate::write_trace_csv(ctx.file("trace.csv"), trace);
  estimate::write_snapshots_csv(ctx.file("snapshots.csv"), trace);
  write_json(ctx.file("model.json"), model::to_checkpoint(*result.model));

  results["iterations_run"] = trace.iterations_run;
  results["stopped_early"] = trace.stopped_early;
  results["divergence"] = {{"diverged_chains", trace.diverged_total},
                           {"skipped_updates", trace.skipped_updates},
                           {"usp_non_finite", trace.usp_non_finite},
                           {"usp_coincident", trace.usp_coincident}};

  Rng data_rng(c.seed, 5);
  const Points data = target.sample(c.data_samples, data_rng);
  write_points_csv(ctx.file("data.csv"), data);

  Points samples;
  Vector weights;
  switch (c.train.method) {
    case estimate::Method::srlmc:
      samples = result.buffer && !result.buffer->empty() ? result.buffer->contents() : result.last_points;
      weights = Vector::Constant(samples.cols(), 1.0 / static_cast<double>(std::max<Eigen::Index>(samples.cols(), 1)));
      break;
    case estimate::Method::riemann:
      samples = result.last_points;
      weights = estimate::snis_weights(*result.model, samples).weights;
      break;
    case estimate::Method::psusp:
      samples = result.particles->points;
      try {
        weights = estimate::snis_weights(*result.model, samples).weights;
      } catch (const InvalidArgument&) {
        weights = Vector::Constant(samples.cols(), 1.0 / static_cast<double>(samples.cols()));
      }
      break;
  }
  write_points_csv(ctx.file("samples.csv"), samples, &weights);
  try {
    const auto hs = eval::histogram(samples, c.domain, c.histogram_bins, &weights);
    const auto hd = eval::histogram(data, c.domain, c.histogram_bins);
    results["sample_histogram_tv"] = eval::histogram_tv(hs, hd);
  } catch (const InvalidArgument& e) {
    results["sample_histogram_tv"] = nullptr;
    results["histogram_error"] = e.what();
  }

  if (result.particles) {
    const auto& ps = *result.particles;
    usp::write_particles_csv(ctx.file("particles.csv"), ps, *result.model);
    const auto basins = basins_for(target, c.domain);
    std::vector<std::size_t> counts(basins.size() + 1, 0);
    for (Eigen::Index j = 0; j < ps.points.cols(); ++j) ++counts[eval::assign_region(basins, ps.points.col(j))];
    json fractions = json::array();
    for (std::size_t b = 0; b < basins.size(); ++b) {
      fractions.push_back(static_cast<double>(counts[b]) / static_cast<double>(ps.size()));
    }
    results["particle_basin_fraction"] = fractions;
    results["particle_min_distance"] = usp::min_pairwise_distance(ps.points);
  }
  return {std::move(result.model), std::move(result.buffer)};
}

std::unique_ptr<model::EnergyModel> load_model(const std::string& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  auto m = model::from_checkpoint(json::parse(in));
  if (m->input_dim() != dim) throw Error("checkpoint '" + path + "' has the wrong input dimension");
  return m;
}

void run_train(const ExperimentConfig& c, RunContext& ctx, json& results) {
  auto trained = train_and_write(c, ctx, results);
  write_densities(c, *trained.model, c.train.method == estimate::Method::srlmc, ctx, results);
  write_ood_metrics(c, *trained.model, c.ood.in_samples, c.ood.out_samples, c.ood.sigmas, ctx, results);
}

void run_prop1(const ExperimentConfig& c, RunContext& ctx, json& results) {
  const auto& p = c.prop1;
  CsvWriter csv(ctx.file("prop1.csv"), {"dim", "probability"});
  std::vector<double> probs;
  for (std::size_t i = 0; i < p.dims.size(); ++i) {
    Rng rng(c.seed, 100 + i);
    const double prob = eval::shell_concentration(p.dims[i], p.samples, p.law, p.eps, rng);
    probs.push_back(prob);
    csv.cell(p.dims[i]).cell(prob).end_row();
  }
  bool monotone = true;
  for (std::size_t i = 1; i < probs.size(); ++i) monotone = monotone && probs[i] >= probs[i - 1] - p.tolerance;
  const bool high = probs.back() >= p.threshold;
  results["dims"] = p.dims;
  results["probabilities"] = probs;
  results["monotone"] = monotone;
  results["largest_dim_above_threshold"] = high;
  results["pass"] = monotone && high;
}

void run_prop2(const ExperimentConfig& c, RunContext& ctx, json& results) {
  const auto& p = c.prop2;
  const model::QuadraticEnergy energy(Vector::Zero(1), p.scale);
  CsvWriter csv(ctx.file("prop2.csv"), {"rho", "alpha", "beta", "steps", "empirical_variance", "expected_variance",
                                        "relative_error", "pass"});
  json rows = json::array();
  bool all = true;
  for (std::size_t i = 0; i < p.rhos.size(); ++i) {
    const double rho = p.rhos[i];
    const double alpha = rho * p.beta;
    const auto steps = static_cast<std::size_t>(std::ceil(p.relaxation_multiple * 2.0 * p.scale * p.scale / alpha));
    Rng rng(c.seed, 200 + i);
    const auto m = sampler::long_run_moments(energy, Points::Zero(1, static_cast<Eigen::Index>(p.chains)), alpha,
                                             p.beta, steps, p.burn_in, rng);
    const double expected = p.scale * p.scale / rho;
    const double err = std::abs(m.variance(0) - expected) / expected;
    const bool pass = err <= p.tolerance;
    all = all && pass;
    csv.cell(rho).cell(alpha).cell(p.beta).cell(steps).cell(m.variance(0)).cell(expected).cell(err).cell(pass ? 1 : 0).end_row();
    rows.push_back({{"rho", rho},
                    {"alpha", alpha},
                    {"steps", steps},
                    {"empirical_variance", m.variance(0)},
                    {"expected_variance", expected},
                    {"relative_error", err},
                    {"pass", pass}});
  }
  results["rows"] = rows;
  results["tolerance"] = p.tolerance;
  results["pass"] = all;
}

void run_prop3(const ExperimentConfig& c, RunContext& ctx, json& results) {
  const auto& p = c.prop3;
  const auto target = target_for(c.experiment);
  const double lo = c.domain.lo()(0), hi = c.domain.hi()(0);
  // Knot values -(1/rho) log p, shifted to a zero minimum.
  Points knots(1, static_cast<Eigen::Index>(p.knots));
  for (std::size_t k = 0; k < p.knots; ++k) {
    knots(0, static_cast<Eigen::Index>(k)) = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(p.knots - 1);
  }
  Vector theta = -target.log_density_batch(knots) / p.rho;
  theta.array() -= theta.minCoeff();
  model::GridEnergy energy(lo, hi, theta);

  const Points u = dist::grid_cell_centers(c.domain, {p.quadrature_cells});
  const Vector data_w = estimate::weights_from_energies(-target.log_density_batch(u)).weights;
  auto gradient_norm = [&](const Vector& values) {
    energy.set_param_values(values);
    const auto w = estimate::weights_from_energies(p.rho * energy.energy_batch(u));
    return estimate::mle_gradient(energy, w, u, data_w, u).values().norm();
  };
  const double g_star = gradient_norm(theta);
  const double g_pert = gradient_norm((1.0 + p.perturbation) * theta);
  const double ratio = g_star / g_pert;
  CsvWriter csv(ctx.file("prop3.csv"), {"case", "theta_scale", "grad_norm"});
  csv.cell("stationary").cell(1.0).cell(g_star).end_row();
  csv.cell("perturbed").cell(1.0 + p.perturbation).cell(g_pert).end_row();
  results["grad_norm_stationary"] = g_star;
  results["grad_norm_perturbed"] = g_pert;
  results["ratio"] = ratio;
  results["threshold"] = p.threshold;
  results["pass"] = ratio < p.threshold;
}

void run_diagnostics(const ExperimentConfig& c, RunContext& ctx, json& results) {
  const auto target = target_for(c.experiment);
  std::unique_ptr<model::EnergyModel> energy;
  std::optional<sampler::ReplayBuffer> buffer;
  if (c.diagnostics.checkpoint) {
    energy = load_model(*c.diagnostics.checkpoint, 1);
    results["checkpoint"] = *c.diagnostics.checkpoint;
  } else {
    auto trained = train_and_write(c, ctx, results);
    energy = std::move(trained.model);
    buffer = std::move(trained.buffer);
  }
  write_densities(c, *energy, true, ctx, results);

  const auto& lmc = c.train.srlmc.lmc;
  const std::size_t n = c.diagnostics.chains;
  const double lo = c.domain.lo()(0), hi = c.domain.hi()(0);
  CsvWriter finals(ctx.file("srlmc_finals.csv"), {"case", "chain", "x_init", "x_final", "diverged"});
  auto run_case = [&](const std::string& name, const Points& init, uint64_t stream) {
    Rng rng(c.seed, stream);
    auto r = sampler::run_srlmc(*energy, sampler::ChainBatch(init), lmc, rng);
    for (Eigen::Index j = 0; j < init.cols(); ++j) {
      finals.cell(name).cell(static_cast<std::size_t>(j)).cell(init(0, j)).cell(r.chains.positions(0, j));
      finals.cell(static_cast<int>(r.chains.diverged[static_cast<std::size_t>(j)])).end_row();
    }
    return r;
  };
  // Fraction of healthy chains satisfying pred(x0, xT).
  auto fraction = [](const Points& init, const sampler::SrlmcResult& r, auto pred) {
    std::size_t hits = 0, healthy = 0;
    for (Eigen::Index j = 0; j < init.cols(); ++j) {
      if (r.chains.diverged[static_cast<std::size_t>(j)]) continue;
      ++healthy;
      if (pred(init(0, j), r.chains.positions(0, j))) ++hits;
    }
    return healthy == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(healthy);
  };
  auto crosses = [](double a, double b) { return (a < 0.0) != (b < 0.0); };

  Rng init_rng(c.seed, 30);
  const Points left = dist::Proposal::uniform_interval(lo, 0.0).sample(n, init_rng);
  const Points right = dist::Proposal::uniform_interval(0.0, hi).sample(n, init_rng);
  const Points data = target.sample(n, init_rng);
  const auto r_left = run_case("left", left, 31);
  const auto r_right = run_case("right", right, 32);
  const auto r_data = run_case("data", data, 33);
  results["left_stays_left"] = fraction(left, r_left, [](double, double x) { return x < 0.0; });
  results["right_stays_right"] = fraction(right, r_right, [](double, double x) { return x > 0.0; });
  results["data_crossing"] = fraction(data, r_data, crosses);
  results["diverged_chains"] = r_left.diverged + r_right.diverged + r_data.diverged;
  Points contents;
  if (buffer) {
    contents = buffer->contents();
  } else if (c.diagnostics.buffer_samples) {
    contents = read_points_csv(*c.diagnostics.buffer_samples, 1, nullptr);
    results["buffer_samples"] = *c.diagnostics.buffer_samples;
  }
  if (contents.cols() > 0) {
    Points init(1, static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      init.col(static_cast<Eigen::Index>(j)) = contents.col(static_cast<Eigen::Index>(init_rng.below(static_cast<uint64_t>(contents.cols()))));
    }
    const auto r_buf = run_case("buffer", init, 34);
    results["buffer_crossing"] = fraction(init, r_buf, crosses);
  }

  // Final-sample histograms from q0 = U(Omega) with alpha fixed and beta = alpha / rho.
  const std::vector<std::size_t> bins{c.diagnostics.bins};
  const auto data_hist = eval::histogram(data, c.domain, bins);
  CsvWriter hist(ctx.file("srlmc_rho_histograms.csv"), {"rho", "bin", "lo", "hi", "mass", "data_mass"});
  json per_rho = json::array();
  for (std::size_t i = 0; i < c.diagnostics.rhos.size(); ++i) {
    const double rho = c.diagnostics.rhos[i];
    sampler::LmcConfig cfg = lmc;
    cfg.alpha = {lmc.alpha_at(0)};
    cfg.beta = {lmc.alpha_at(0) / rho};
    cfg.rho.reset();
    Rng rng(c.seed, 40 + i);
    const Points init = c.domain.sample(n, rng);
    const auto r = sampler::run_srlmc(*energy, sampler::ChainBatch(init), cfg, rng);
    const Points healthy = r.chains.healthy_positions();
    json entry = {{"rho", rho}, {"beta", cfg.beta[0]}};
    if (healthy.cols() > 0) {
      const auto h = eval::histogram(healthy, c.domain, bins);
      const double width = (hi - lo) / static_cast<double>(bins[0]);
      for (std::size_t b = 0; b < bins[0]; ++b) {
        const auto bi = static_cast<Eigen::Index>(b);
        hist.cell(rho).cell(b).cell(lo + width * static_cast<double>(b)).cell(lo + width * static_cast<double>(b + 1));
        hist.cell(h.mass(bi)).cell(data_hist.mass(bi)).end_row();
      }
      std::size_t left_count = 0;
      for (Eigen::Index j = 0; j < healthy.cols(); ++j) left_count += healthy(0, j) < 0.0 ? 1 : 0;
      entry["fraction_left"] = static_cast<double>(left_count) / static_cast<double>(healthy.cols());
      entry["histogram_tv_to_data"] = eval::histogram_tv(h, data_hist);
    }
    entry["diverged"] = r.diverged;
    per_rho.push_back(entry);
  }
  results["rho_sweep"] = per_rho;
}

void run_ood(const ExperimentConfig& c, RunContext& ctx, json& results) {
  std::unique_ptr<model::EnergyModel> energy;
  if (c.ood.checkpoint) {
    energy = load_model(*c.ood.checkpoint, c.domain.dim());
    results["checkpoint"] = *c.ood.checkpoint;
  } else {
    energy = train_and_write(c, ctx, results).model;
  }
  write_densities(c, *energy, false, ctx, results);
  write_ood_metrics(c, *energy, c.ood.in_samples, c.ood.out_samples, c.ood.sigmas, ctx, results);
}

}  // namespace

RunOutcome run(const ExperimentConfig& config) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  RunContext ctx(config.output_dir);
  json results = json::object();
  switch (config.experiment) {
    case Kind::train_1d:
    case Kind::train_2d: run_train(config, ctx, results); break;
    case Kind::verify_prop1: run_prop1(config, ctx, results); break;
    case Kind::verify_prop2: run_prop2(config, ctx, results); break;
    case Kind::verify_prop3: run_prop3(config, ctx, results); break;
    case Kind::srlmc_diagnostics: run_diagnostics(config, ctx, results); break;
    case Kind::ood_eval: run_ood(config, ctx, results); break;
  }
  if (results.contains("pass") || results.contains("rows")) write_json(ctx.file("report.json"), results);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  RunOutcome outcome;
  outcome.directory = ctx.dir();
  // A verification whose check fails.
  if (results.contains("pass") && !results.at("pass").get<bool>()) outcome.exit_code = 4;
  outcome.manifest = {{"schema_version", ExperimentConfig::kSchemaVersion},
                      {"code_version", EBMLAB_VERSION},
                      {"experiment", to_string(config.experiment)},
                      {"seed", config.seed},
                      {"config", to_json(config)},
                      {"wall_time_seconds", wall},
                      {"results", results},
                      {"artifacts", ctx.artifacts()},
                      {"exit_status", outcome.exit_code}};
  write_json((fs::path(ctx.dir()) / "manifest.json").string(), outcome.manifest);
  return outcome;
}

// ---------------------------------------------------------------------------
// Figure bundle

namespace {

struct DensityTable {
  Points coords;
  Vector log_density;
  Vector density;
};

DensityTable read_density(const std::string& path, std::size_t dim) {
  const CsvTable t = read_csv(path);
  DensityTable d;
  d.coords = read_points_csv(path, dim, nullptr);
  const auto ld = t.numeric_column("log_density");
  const auto de = t.numeric_column("density");
  d.log_density = Vector::Map(ld.data(), static_cast<Eigen::Index>(ld.size()));
  d.density = Vector::Map(de.data(), static_cast<Eigen::Index>(de.size()));
  return d;
}

}  // namespace

FigureBundle emit_figures(const std::string& run_dir) {
  FigureBundle bundle;
  const fs::path dir(run_dir);
  auto present = [&](const std::string& name) { return fs::is_regular_file(dir / name); };
  for (const auto& name : kFigureInputs) {
    if (!present(name)) bundle.missing.push_back(name);
  }
  if (!present("manifest.json")) return bundle;

  json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    manifest = json::parse(in);
  }
  const ExperimentConfig c = parse_config(manifest.at("config"));
  const std::size_t dim = c.domain.dim();
  const auto target = target_for(c.experiment);
  const auto names = coord_names(dim);
  auto out = [&](const std::string& name) {
    bundle.written.push_back(name);
    return (dir / name).string();
  };

  if (present("trace.csv")) {
    const CsvTable t = read_csv((dir / "trace.csv").string());
    const auto it = t.numeric_column("iteration");
    const auto g = t.numeric_column("grad_norm");
    CsvWriter csv(out("fig_grad_norm.csv"), {"iteration", "grad_norm"});
    for (std::size_t i = 0; i < it.size(); ++i) csv.cell(static_cast<long long>(it[i])).cell(g[i]).end_row();
  }

  std::optional<DensityTable> learned;
  if (present("density_learned.csv")) learned = read_density((dir / "density_learned.csv").string(), dim);
  const json& results = manifest.at("results");
  if (learned) {
    std::optional<DensityTable> tempered;
    if (present("density_tempered.csv")) tempered = read_density((dir / "density_tempered.csv").string(), dim);
    const Vector target_log = target.log_density_batch(learned->coords);
    std::vector<std::string> header = names;
    for (const char* h : {"learned_log_density", "target_log_density"}) header.push_back(h);
    if (tempered) header.push_back("tempered_log_density");
    header.push_back("ood_region");
    CsvWriter csv(out("fig_log_density.csv"), header);
    for (Eigen::Index j = 0; j < learned->coords.cols(); ++j) {
      for (Eigen::Index a = 0; a < learned->coords.rows(); ++a) csv.cell(learned->coords(a, j));
      csv.cell(learned->log_density(j)).cell(target_log(j));
      if (tempered) csv.cell(tempered->log_density(j));
      csv.cell(eval::in_ood_region(target, learned->coords.col(j), c.ood.sigmas) ? 1 : 0).end_row();
    }

    if (results.contains("log_z")) {
      const double log_z = results.at("log_z").get<double>();
      std::vector<std::string> h = names;
      h.push_back("neg_energy");
      CsvWriter ne(out("fig_negative_energy.csv"), h);
      for (Eigen::Index j = 0; j < learned->coords.cols(); ++j) {
        for (Eigen::Index a = 0; a < learned->coords.rows(); ++a) ne.cell(learned->coords(a, j));
        ne.cell(learned->log_density(j) + log_z).end_row();
      }
    }
  }

  if (present("samples.csv")) {
    Vector weights;
    const Points samples = read_points_csv((dir / "samples.csv").string(), dim, &weights);
    const auto& bins = c.histogram_bins;
    const auto hs = eval::histogram(samples, c.domain, bins, &weights);
    std::optional<eval::Histogram> hd;
    if (present("data.csv")) hd = eval::histogram(read_points_csv((dir / "data.csv").string(), dim, nullptr), c.domain, bins);
    // Grid masses binned by cell center.
    const auto bin_grid = [&](const Points& centers, const Vector& density, double cell_volume) {
      std::size_t total = 1;
      for (std::size_t b : bins) total *= b;
      std::vector<std::vector<double>> per(total);
      for (Eigen::Index j = 0; j < centers.cols(); ++j) {
        const std::size_t b = eval::histogram_bin(c.domain, bins, centers.col(j));
        if (b < total) per[b].push_back(density(j) * cell_volume);
      }
      Vector m(static_cast<Eigen::Index>(total));
      for (std::size_t b = 0; b < total; ++b) m(static_cast<Eigen::Index>(b)) = dist::pairwise_sum(per[b].data(), per[b].size());
      return m;
    };
    std::optional<Vector> learned_mass, target_mass;
    if (learned) {
      const double cell_volume = c.domain.volume() / static_cast<double>(learned->coords.cols());
      learned_mass = bin_grid(learned->coords, learned->density, cell_volume);
      const auto tg = dist::mixture_grid(target, c.domain, c.train.eval_resolution);
      target_mass = bin_grid(tg.cell_centers(), tg.density, tg.cell_volume);
    }
    std::vector<std::string> header{"bin"};
    for (const auto& n : names) {
      header.push_back(n + "_lo");
      header.push_back(n + "_hi");
    }
    header.push_back("sample_mass");
    if (hd) header.push_back("data_mass");
    if (learned_mass) {
      header.push_back("learned_mass");
      header.push_back("target_mass");
    }
    CsvWriter csv(out("fig_histograms.csv"), header);
    for (Eigen::Index b = 0; b < hs.mass.size(); ++b) {
      csv.cell(static_cast<std::size_t>(b));
      std::size_t rest = static_cast<std::size_t>(b);
      for (std::size_t a = 0; a < dim; ++a) {
        const auto ai = static_cast<Eigen::Index>(a);
        const std::size_t k = rest % bins[a];
        rest /= bins[a];
        const double w = (c.domain.hi()(ai) - c.domain.lo()(ai)) / static_cast<double>(bins[a]);
        csv.cell(c.domain.lo()(ai) + w * static_cast<double>(k)).cell(c.domain.lo()(ai) + w * static_cast<double>(k + 1));
      }
      csv.cell(hs.mass(b));
      if (hd) csv.cell(hd->mass(b));
      if (learned_mass) csv.cell((*learned_mass)(b)).cell((*target_mass)(b));
      csv.end_row();
    }
  }
  return bundle;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace ebm::experiment
