#pragma once

// JSON run configuration shared by the CLI commands. Parsing is strict:
// unknown keys are rejected and every error names the offending field path.

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "otda/data.hpp"
#include "otda/losses.hpp"
#include "otda/measure.hpp"
#include "otda/minibatch.hpp"
#include "otda/mixup.hpp"
#include "otda/mlp.hpp"
#include "otda/trainer.hpp"

namespace otda {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PlanSolverChoice {
  SolverKind kind = SolverKind::exact;
  double tau = 1.0;
  double epsilon = -1.0;           // absolute; unset when < 0
  double relative_epsilon = -1.0;  // times max(C); unset when < 0
};

struct CliConfig {
  ScenarioConfig scenario;
  std::vector<Method> methods = {Method::mixunbot};
  LossWeights weights;
  double eta3 = 1.0;
  SolverConfig solver;
  std::vector<PlanSolverChoice> plan_solvers;
  MixupConfig mixup;
  bool shared_lambda = true;
  std::vector<int> batch_sizes = {30};  // plans iterate all; train uses the first
  int num_draws = 64;
  bool stratified = true;
  int epochs = 40;
  int pretrain_epochs = 2;
  double learning_rate = 2e-4;
  OptMethod opt_method = OptMethod::adam;
  double momentum = 0.9;
  std::vector<int> hidden = {32, 32};
  int embed_dim = 16;
  int lambda_draws = 20;
  GroundMetric check_metric = GroundMetric::euclidean;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir;

  TrainConfig train_config(Method method, std::uint64_t seed) const {
    TrainConfig tc;
    tc.method = method;
    tc.weights = weights;
    tc.eta3 = eta3;
    tc.solver_cfg = solver;
    tc.mixup = mixup;
    tc.shared_lambda = shared_lambda;
    tc.batch_size = batch_sizes.front();
    tc.stratified_source = stratified;
    tc.epochs = epochs;
    tc.pretrain_epochs = pretrain_epochs;
    tc.opt_method = opt_method;
    tc.learning_rate = learning_rate;
    tc.momentum = momentum;
    tc.hidden = hidden;
    tc.embed_dim = embed_dim;
    tc.seed = seed;
    tc.resolve_method();
    if (method == Method::source_only) tc.eta3 = 0.0;
    return tc;
  }
};

namespace cfg_detail {

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed)
      if (it.key() == key) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key " + path + it.key());
  }
}

inline double num_at(const json& obj, const std::string& path, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("config: " + path + key + " must be a number");
  return v.get<double>();
}

inline int int_at(const json& obj, const std::string& path, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError("config: " + path + key + " must be an integer");
  return v.get<int>();
}

inline bool bool_at(const json& obj, const std::string& path, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("config: " + path + key + " must be a boolean");
  return v.get<bool>();
}

inline std::vector<int> int_list_at(const json& obj, const std::string& path, const char* key,
                                    std::vector<int> fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ConfigError("config: " + path + key + " must be an array");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer())
      throw ConfigError("config: " + path + key + " entries must be integers");
    out.push_back(e.get<int>());
  }
  return out;
}

inline void parse_scenario(const json& obj, ScenarioConfig& sc) {
  check_keys(obj, "scenario.",
             {"generator", "source_counts", "target_counts", "sigma", "radius", "rotation_deg",
              "shift", "noise", "dropped"});
  if (!obj.contains("generator") || !obj.at("generator").is_string())
    throw ConfigError("config: scenario.generator must be a string");
  const std::string gen = obj.at("generator").get<std::string>();
  if (gen == "figure1")
    sc.generator = ScenarioConfig::Generator::figure1;
  else if (gen == "blobs")
    sc.generator = ScenarioConfig::Generator::blobs;
  else if (gen == "moons")
    sc.generator = ScenarioConfig::Generator::moons;
  else
    throw ConfigError("config: scenario.generator must be figure1|blobs|moons");
  sc.source_counts = int_list_at(obj, "scenario.", "source_counts", sc.source_counts);
  sc.target_counts = int_list_at(obj, "scenario.", "target_counts", sc.target_counts);
  sc.sigma = num_at(obj, "scenario.", "sigma", sc.sigma);
  sc.radius = num_at(obj, "scenario.", "radius", sc.radius);
  sc.target_rotation_deg = num_at(obj, "scenario.", "rotation_deg", sc.target_rotation_deg);
  sc.moons_noise = num_at(obj, "scenario.", "noise", sc.moons_noise);
  sc.dropped_classes = int_list_at(obj, "scenario.", "dropped", sc.dropped_classes);
  if (obj.contains("shift")) {
    const auto& sh = obj.at("shift");
    if (!sh.is_array() || sh.size() != 2)
      throw ConfigError("config: scenario.shift must be [dx, dy]");
    sc.target_shift = {sh[0].get<double>(), sh[1].get<double>()};
  }
  if (sc.generator != ScenarioConfig::Generator::figure1 && sc.source_counts.empty())
    throw ConfigError("config: scenario.source_counts must be non-empty");
  if (sc.generator == ScenarioConfig::Generator::figure1 && sc.source_counts.empty())
    sc.source_counts = {4, 4, 4};  // validation placeholder; generator ignores it
  if (sc.sigma <= 0.0) throw ConfigError("config: scenario.sigma must be > 0");
}

inline SolverKind solver_kind_from(const std::string& s, const std::string& path) {
  if (s == "exact") return SolverKind::exact;
  if (s == "sinkhorn") return SolverKind::sinkhorn;
  if (s == "uot" || s == "unbalanced") return SolverKind::unbalanced;
  throw ConfigError("config: " + path + " must be exact|sinkhorn|uot");
}

}  // namespace cfg_detail

inline CliConfig parse_config(const json& root) {
  using namespace cfg_detail;
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(root, "",
             {"scenario", "method", "loss_weights", "solver", "solvers", "mixup", "batch",
              "train", "check", "seeds", "output_dir"});

  CliConfig c;

  if (!root.contains("scenario")) throw ConfigError("config: missing key scenario");
  parse_scenario(root.at("scenario"), c.scenario);

  if (root.contains("method")) {
    const auto& m = root.at("method");
    c.methods.clear();
    auto push_method = [&c](const std::string& name) {
      try {
        c.methods.push_back(method_from_name(name));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: method: ") + e.what());
      }
    };
    if (m.is_string())
      push_method(m.get<std::string>());
    else if (m.is_array())
      for (const auto& e : m) {
        if (!e.is_string()) throw ConfigError("config: method entries must be strings");
        push_method(e.get<std::string>());
      }
    else
      throw ConfigError("config: method must be a string or an array of strings");
    if (c.methods.empty()) throw ConfigError("config: method list must be non-empty");
  }

  if (root.contains("loss_weights")) {
    const auto& lw = root.at("loss_weights");
    check_keys(lw, "loss_weights.", {"eta1", "eta2", "eta3", "eta4", "eta5", "clip_floor"});
    c.weights.eta1 = num_at(lw, "loss_weights.", "eta1", c.weights.eta1);
    c.weights.eta2 = num_at(lw, "loss_weights.", "eta2", c.weights.eta2);
    c.eta3 = num_at(lw, "loss_weights.", "eta3", c.eta3);
    c.weights.eta4 = num_at(lw, "loss_weights.", "eta4", c.weights.eta4);
    c.weights.eta5 = num_at(lw, "loss_weights.", "eta5", c.weights.eta5);
    c.weights.clip_floor = num_at(lw, "loss_weights.", "clip_floor", c.weights.clip_floor);
    if (c.weights.eta1 < 0 || c.weights.eta2 < 0 || c.weights.eta4 < 0 || c.weights.eta5 < 0 ||
        c.eta3 < 0)
      throw ConfigError("config: loss_weights coefficients must be nonnegative");
    if (c.weights.clip_floor <= 0.0 || c.weights.clip_floor >= 1.0)
      throw ConfigError("config: loss_weights.clip_floor must lie in (0, 1)");
  }

  if (root.contains("solver")) {
    const auto& so = root.at("solver");
    check_keys(so, "solver.", {"epsilon", "tau", "max_iterations", "tolerance", "log_domain"});
    c.solver.epsilon = num_at(so, "solver.", "epsilon", c.solver.epsilon);
    c.solver.tau = num_at(so, "solver.", "tau", c.solver.tau);
    c.solver.max_iterations = int_at(so, "solver.", "max_iterations", c.solver.max_iterations);
    c.solver.tolerance = num_at(so, "solver.", "tolerance", c.solver.tolerance);
    c.solver.log_domain = bool_at(so, "solver.", "log_domain", c.solver.log_domain);
    if (c.solver.epsilon <= 0.0) throw ConfigError("config: solver.epsilon must be > 0");
    if (c.solver.tau <= 0.0) throw ConfigError("config: solver.tau must be > 0");
    if (c.solver.max_iterations < 1)
      throw ConfigError("config: solver.max_iterations must be >= 1");
    if (c.solver.tolerance <= 0.0) throw ConfigError("config: solver.tolerance must be > 0");
  }

  if (root.contains("solvers")) {
    const auto& arr = root.at("solvers");
    if (!arr.is_array() || arr.empty())
      throw ConfigError("config: solvers must be a non-empty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      const std::string path = "solvers[" + std::to_string(i) + "].";
      check_keys(e, path, {"kind", "tau", "epsilon", "relative_epsilon"});
      PlanSolverChoice ch;
      if (!e.contains("kind") || !e.at("kind").is_string())
        throw ConfigError("config: " + path + "kind must be a string");
      ch.kind = solver_kind_from(e.at("kind").get<std::string>(), path + "kind");
      ch.tau = num_at(e, path, "tau", ch.tau);
      ch.epsilon = num_at(e, path, "epsilon", ch.epsilon);
      ch.relative_epsilon = num_at(e, path, "relative_epsilon", ch.relative_epsilon);
      if (ch.tau <= 0.0) throw ConfigError("config: " + path + "tau must be > 0");
      c.plan_solvers.push_back(ch);
    }
  } else {
    c.plan_solvers.push_back({SolverKind::exact, 1.0, -1.0, -1.0});
    c.plan_solvers.push_back({SolverKind::unbalanced, 1.0, -1.0, 0.1});
  }

  if (root.contains("mixup")) {
    const auto& mx = root.at("mixup");
    check_keys(mx, "mixup.", {"alpha", "shared_lambda"});
    c.mixup.alpha = num_at(mx, "mixup.", "alpha", c.mixup.alpha);
    c.shared_lambda = bool_at(mx, "mixup.", "shared_lambda", c.shared_lambda);
    if (c.mixup.alpha <= 0.0) throw ConfigError("config: mixup.alpha must be > 0");
  }

  if (root.contains("batch")) {
    const auto& ba = root.at("batch");
    check_keys(ba, "batch.", {"m", "num_draws", "stratified"});
    if (ba.contains("m")) {
      const auto& m = ba.at("m");
      c.batch_sizes.clear();
      if (m.is_number_integer())
        c.batch_sizes.push_back(m.get<int>());
      else if (m.is_array())
        for (const auto& e : m) c.batch_sizes.push_back(e.get<int>());
      else
        throw ConfigError("config: batch.m must be an integer or an array");
      for (int v : c.batch_sizes)
        if (v < 1) throw ConfigError("config: batch.m entries must be >= 1");
      if (c.batch_sizes.empty()) throw ConfigError("config: batch.m must be non-empty");
    }
    c.num_draws = int_at(ba, "batch.", "num_draws", c.num_draws);
    if (c.num_draws < 1) throw ConfigError("config: batch.num_draws must be >= 1");
    c.stratified = bool_at(ba, "batch.", "stratified", c.stratified);
  }

  if (root.contains("train")) {
    const auto& tr = root.at("train");
    check_keys(tr, "train.",
               {"epochs", "pretrain_epochs", "lr", "optimizer", "momentum", "hidden", "embed_dim"});
    c.epochs = int_at(tr, "train.", "epochs", c.epochs);
    c.pretrain_epochs = int_at(tr, "train.", "pretrain_epochs", c.pretrain_epochs);
    c.learning_rate = num_at(tr, "train.", "lr", c.learning_rate);
    c.momentum = num_at(tr, "train.", "momentum", c.momentum);
    c.hidden = int_list_at(tr, "train.", "hidden", c.hidden);
    c.embed_dim = int_at(tr, "train.", "embed_dim", c.embed_dim);
    if (tr.contains("optimizer")) {
      const std::string o = tr.at("optimizer").get<std::string>();
      if (o == "adam")
        c.opt_method = OptMethod::adam;
      else if (o == "sgd")
        c.opt_method = OptMethod::sgd;
      else
        throw ConfigError("config: train.optimizer must be adam|sgd");
    }
    if (c.epochs < 0 || c.pretrain_epochs < 0)
      throw ConfigError("config: train.epochs must be >= 0");
    if (c.learning_rate <= 0.0) throw ConfigError("config: train.lr must be > 0");
    if (c.embed_dim < 1) throw ConfigError("config: train.embed_dim must be >= 1");
  }

  if (root.contains("check")) {
    const auto& ck = root.at("check");
    check_keys(ck, "check.", {"metric", "lambda_draws"});
    c.lambda_draws = int_at(ck, "check.", "lambda_draws", c.lambda_draws);
    if (c.lambda_draws < 1) throw ConfigError("config: check.lambda_draws must be >= 1");
    if (ck.contains("metric")) {
      const std::string m = ck.at("metric").get<std::string>();
      if (m == "euclidean")
        c.check_metric = GroundMetric::euclidean;
      else if (m == "sqeuclidean")
        c.check_metric = GroundMetric::sqeuclidean;
      else
        throw ConfigError("config: check.metric must be euclidean|sqeuclidean");
    }
  }

  if (root.contains("seeds")) {
    const auto& se = root.at("seeds");
    if (!se.is_array()) throw ConfigError("config: seeds must be an array");
    c.seeds.clear();
    for (const auto& e : se) {
      if (!e.is_number_integer() || e.get<long long>() < 0)
        throw ConfigError("config: seeds entries must be nonnegative integers");
      c.seeds.push_back(e.get<std::uint64_t>());
    }
  }
  if (c.seeds.empty()) throw ConfigError("config: seeds must be non-empty");

  if (!root.contains("output_dir")) throw ConfigError("config: missing key output_dir");
  if (!root.at("output_dir").is_string())
    throw ConfigError("config: output_dir must be a string");
  c.output_dir = root.at("output_dir").get<std::string>();
  if (c.output_dir.empty()) throw ConfigError("config: output_dir must be non-empty");

  return c;
}

inline CliConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

}  // namespace otda
