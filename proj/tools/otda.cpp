// otda: solver demos, minibatch-plan diagnostics, training/ablation runs and
// verification checks over synthetic domain-adaptation scenarios.
//
// Exit codes: 0 ok, 1 config error, 2 I/O error, 3 check failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "otda/assignment.hpp"
#include "otda/config.hpp"
#include "otda/data.hpp"
#include "otda/io.hpp"
#include "otda/minibatch.hpp"
#include "otda/mixup.hpp"
#include "otda/trainer.hpp"

using namespace otda;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

// Runs fn(i) for i in [0, count) on up to `jobs` worker threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  const int nworkers = std::min<int>(jobs, static_cast<int>(count));
  for (int w = 0; w < nworkers; ++w)
    workers.emplace_back([&, w] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ScenarioConfig scenario_for_seed(const CliConfig& cfg, std::uint64_t seed) {
  ScenarioConfig sc = cfg.scenario;
  sc.seed = seed;
  return sc;
}

SolverConfig resolve_solver_cfg(const CliConfig& cfg, const PlanSolverChoice& choice,
                                double max_cost) {
  SolverConfig sc = cfg.solver;
  sc.tau = choice.tau;
  if (choice.epsilon > 0.0)
    sc.epsilon = choice.epsilon;
  else if (choice.relative_epsilon > 0.0)
    sc.epsilon = choice.relative_epsilon * std::max(max_cost, 1e-300);
  return sc;
}

// ---------------------------------------------------------------- plans ----

int cmd_plans(const CliConfig& cfg, int jobs) {
  struct SeedOutput {
    std::string rows;
    std::vector<std::pair<std::string, std::string>> files;  // name -> content
  };
  std::vector<SeedOutput> outputs(cfg.seeds.size());

  parallel_for(cfg.seeds.size(), jobs, [&](std::size_t si) {
    const std::uint64_t seed = cfg.seeds[si];
    auto [src_ds, tgt_ds] = generate_scenario(scenario_for_seed(cfg, seed));
    const DiscreteMeasure src = src_ds.as_measure();
    const DiscreteMeasure tgt = tgt_ds.as_measure();
    const CostMatrix full_cost = squared_euclidean_cost(src.points, tgt.points);

    std::ostringstream rows;
    SeedOutput& out = outputs[si];
    for (const auto& choice : cfg.plan_solvers) {
      const SolverConfig scfg = resolve_solver_cfg(cfg, choice, full_cost.max_value());
      for (int m : cfg.batch_sizes) {
        MinibatchSpec spec;
        spec.batch_size = m;
        spec.num_draws = cfg.num_draws;
        spec.seed = seed;
        spec.stratified_source = false;  // plan pictures use plain uniform draws
        const TransportPlan agg = aggregate_plan(src, tgt, full_cost, choice.kind, scfg, spec);
        const PlanDiagnostics diag = cross_class_mass(agg, src.labels, tgt.labels);
        const bool entropic = choice.kind != SolverKind::exact;
        rows << seed << ',' << m << ',' << solver_name(choice.kind) << ','
             << format_double(choice.kind == SolverKind::unbalanced ? scfg.tau : 0.0) << ','
             << format_double(entropic ? scfg.epsilon : 0.0) << ','
             << format_double(diag.total_mass) << ','
             << format_double(diag.cross_class_fraction) << ',' << diag.num_connections << '\n';

        std::string stem = "plan_" + solver_name(choice.kind) + "_m" + std::to_string(m) +
                           "_seed" + std::to_string(seed);
        out.files.emplace_back(stem + ".csv", matrix_csv(agg.coupling));
        if (si == 0) {
          const std::string title =
              solver_name(choice.kind) + " m=" + std::to_string(m) + " seed=" + std::to_string(seed);
          out.files.emplace_back(stem + ".svg", render_plan_svg(src_ds, tgt_ds, agg, title));
        }
      }
    }
    out.rows = rows.str();
  });

  const std::filesystem::path dir = cfg.output_dir;
  std::ostringstream csv;
  csv << "seed,m,solver,tau,epsilon,total_mass,cross_class_fraction,num_connections\n";
  for (const auto& out : outputs) csv << out.rows;
  atomic_write_file(dir / "plans.csv", csv.str());
  for (const auto& out : outputs)
    for (const auto& [name, content] : out.files) atomic_write_file(dir / name, content);

  // side-by-side panels for the first seed, one per solver x m
  std::ostringstream svg;
  std::size_t panels = 0;
  for (const auto& [name, content] : outputs[0].files)
    if (name.size() > 4 && name.substr(name.size() - 4) == ".svg") ++panels;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << (panels * 640)
      << "\" height=\"640\">\n";
  std::size_t panel = 0;
  for (const auto& [name, content] : outputs[0].files) {
    if (name.size() <= 4 || name.substr(name.size() - 4) != ".svg") continue;
    svg << "<svg x=\"" << (panel * 640)
        << "\" y=\"0\" width=\"640\" height=\"640\" viewBox=\"0 0 640 640\">"
        << content.substr(content.find('\n') + 1);  // re-open the panel root tag
    ++panel;
  }
  svg << "</svg>\n";
  atomic_write_file(dir / "plans.svg", svg.str());

  const auto [src_ds, tgt_ds] = generate_scenario(scenario_for_seed(cfg, cfg.seeds[0]));
  atomic_write_file(dir / "source.csv", dataset_csv(src_ds));
  atomic_write_file(dir / "target.csv", dataset_csv(tgt_ds));
  return 0;
}

// ---------------------------------------------------------------- train ----

int cmd_train(const CliConfig& cfg, int jobs) {
  struct Run {
    Method method;
    std::uint64_t seed;
    FitResult result;
  };
  std::vector<Run> runs;
  for (Method m : cfg.methods)
    for (std::uint64_t s : cfg.seeds) runs.push_back({m, s, {}});

  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    Run& run = runs[i];
    auto [src, tgt] = generate_scenario(scenario_for_seed(cfg, run.seed));
    run.result = fit(cfg.train_config(run.method, run.seed), src, tgt);
  });

  const std::filesystem::path dir = cfg.output_dir;

  std::ostringstream hist;
  hist << "method,seed,step,loss,source_ce,transfer,plan_mass,cross_class_fraction\n";
  for (const auto& run : runs)
    for (const auto& s : run.result.history.steps)
      hist << method_name(run.method) << ',' << run.seed << ',' << s.step << ','
           << format_double(s.loss) << ',' << format_double(s.source_ce) << ','
           << format_double(s.transfer_value) << ',' << format_double(s.plan_mass) << ','
           << format_double(s.cross_class_fraction) << '\n';
  atomic_write_file(dir / "history.csv", hist.str());

  std::ostringstream acc;
  acc << "method,seed,epoch,accuracy";
  const std::size_t K = runs.front().result.history.epochs.empty()
                            ? 0
                            : runs.front().result.history.epochs.front().per_class.size();
  for (std::size_t k = 0; k < K; ++k) acc << ",acc_class" << k;
  acc << '\n';
  for (const auto& run : runs)
    for (const auto& e : run.result.history.epochs) {
      acc << method_name(run.method) << ',' << run.seed << ',' << e.epoch << ','
          << format_double(e.accuracy);
      for (double pc : e.per_class) acc << ',' << format_double(pc);
      acc << '\n';
    }
  atomic_write_file(dir / "accuracy.csv", acc.str());

  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["results"] = json::array();
  for (Method m : cfg.methods) {
    json entry;
    entry["method"] = method_name(m);
    json per_seed = json::array();
    std::vector<double> finals;
    for (const auto& run : runs) {
      if (run.method != m) continue;
      const double final_acc =
          run.result.history.epochs.empty() ? 0.0 : run.result.history.epochs.back().accuracy;
      finals.push_back(final_acc);
      per_seed.push_back({{"seed", run.seed}, {"final_accuracy", final_acc}});
    }
    double mean = 0.0;
    for (double f : finals) mean += f;
    mean /= static_cast<double>(finals.size());
    double var = 0.0;
    for (double f : finals) var += (f - mean) * (f - mean);
    var /= static_cast<double>(finals.size());
    entry["final_accuracy_mean"] = mean;
    entry["final_accuracy_std"] = std::sqrt(var);
    entry["per_seed"] = per_seed;
    summary["results"].push_back(entry);
  }
  atomic_write_file(dir / "summary.json", summary.dump(2) + "\n");

  for (const auto& run : runs) {
    const std::string name =
        "checkpoint_" + method_name(run.method) + "_seed" + std::to_string(run.seed) + ".txt";
    atomic_write_file(dir / name, serialize_checkpoint(run.result.params));
  }
  return 0;
}

// ---------------------------------------------------------------- check ----

struct CheckLine {
  std::string name;
  double value;
  double threshold;
  bool pass;
};

int write_check_report(const CliConfig& cfg, const std::string& kind,
                       const std::vector<CheckLine>& lines) {
  bool all = true;
  json checks = json::array();
  for (const auto& l : lines) {
    checks.push_back(
        {{"name", l.name}, {"value", l.value}, {"threshold", l.threshold}, {"pass", l.pass}});
    all = all && l.pass;
  }
  json report;
  report["schema_version"] = kSchemaVersion;
  report["kind"] = kind;
  report["all_pass"] = all;
  report["checks"] = checks;
  atomic_write_file(std::filesystem::path(cfg.output_dir) / ("check_" + kind + ".json"),
                    report.dump(2) + "\n");
  for (const auto& l : lines)
    std::cout << (l.pass ? "PASS" : "FAIL") << ' ' << l.name << " value=" << l.value
              << " threshold=" << l.threshold << '\n';
  return all ? 0 : 3;
}

CompositeInputs gradcheck_instance(std::uint64_t seed) {
  Rng rng = make_rng(seed, 3);
  CompositeInputs in;
  auto rand_mat = [&rng](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.data) v = normal_double(rng);
    return m;
  };
  in.src_mixed_inputs = rand_mat(4, 2);
  in.src_mixed_labels = Matrix(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    in.src_mixed_labels(i, static_cast<std::size_t>(uniform_index(rng, 3))) = 1.0;
  in.tgt_mixed_inputs = rand_mat(4, 2);
  in.plan.coupling = Matrix(4, 4);
  for (double& v : in.plan.coupling.data) v = 0.25 * uniform_double(rng);
  in.src_raw_inputs = rand_mat(4, 2);
  in.src_raw_labels = Matrix(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    in.src_raw_labels(i, static_cast<std::size_t>(uniform_index(rng, 3))) = 1.0;
  return in;
}

int cmd_check(const std::string& kind, const CliConfig& cfg) {
  std::vector<CheckLine> lines;

  if (kind == "gradcheck") {
    for (std::uint64_t seed : cfg.seeds) {
      const MlpParams p = make_mlp(2, {4}, 4, 3, seed);
      const double err = finite_difference_check(p, gradcheck_instance(seed), 1e-5);
      lines.push_back({"gradcheck_seed" + std::to_string(seed), err, 1e-4, err < 1e-4});
    }
  } else if (kind == "prop1") {
    for (std::uint64_t seed : cfg.seeds) {
      Rng rng = make_rng(seed, 41);
      auto cloud = [&rng](double cx, double cy) {
        Matrix pts(8, 2);
        for (std::size_t i = 0; i < 8; ++i) {
          pts(i, 0) = cx + 0.5 * normal_double(rng);
          pts(i, 1) = cy + 0.5 * normal_double(rng);
        }
        return DiscreteMeasure::uniform(std::move(pts));
      };
      const auto mu = cloud(0.0, 0.0);
      const auto nu = cloud(2.5, -1.0);
      MixupConfig mx = cfg.mixup;
      mx.seed = seed;
      for (bool shared : {false, true}) {
        const auto res =
            proposition1_check(mu, nu, mx, cfg.lambda_draws, cfg.check_metric, shared);
        const std::string name = std::string("prop1_") + (shared ? "shared" : "independent") +
                                 "_seed" + std::to_string(seed);
        lines.push_back(
            {name, res.lhs, res.rhs + 2.0 * res.stderr_, res.lhs <= res.rhs + 2.0 * res.stderr_});
      }
    }
  } else if (kind == "solver-oracle") {
    for (std::uint64_t seed : cfg.seeds) {
      Rng rng = make_rng(seed, 43);
      double worst = 0.0;
      for (int rep = 0; rep < 10; ++rep) {
        CostMatrix c;
        c.values = Matrix(6, 6);
        c.metric_tag = "random";
        for (double& v : c.values.data) v = uniform_double(rng);
        DiscreteMeasure u;
        u.points = Matrix(6, 1);
        u.weights.assign(6, 1.0 / 6.0);
        const double lp = exact_ot(u, u, c).objective_value;
        const double hung = hungarian_assignment(c.values).cost / 6.0;
        worst = std::max(worst, std::abs(lp - hung));
      }
      lines.push_back({"solver_oracle_seed" + std::to_string(seed), worst, 1e-9, worst < 1e-9});
    }
  } else {
    throw ConfigError("check kind must be gradcheck|prop1|solver-oracle");
  }
  return write_check_report(cfg, kind, lines);
}

std::vector<std::uint64_t> parse_seed_override(const char* env) {
  std::vector<std::uint64_t> seeds;
  std::string s(env);
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream in(s);
  long long v = 0;
  while (in >> v) {
    if (v < 0) throw ConfigError("OTDA_SEED_OVERRIDE: seeds must be nonnegative");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  if (seeds.empty()) throw ConfigError("OTDA_SEED_OVERRIDE: no seeds parsed");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optimal-transport domain adaptation laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  int jobs = 1;
  std::string check_kind;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--jobs", jobs, "parallel seed workers");
    sub->add_option("--out", out_override, "override output_dir");
  };
  CLI::App* plans = app.add_subcommand("plans", "minibatch plan diagnostics and pictures");
  add_common(plans);
  CLI::App* train = app.add_subcommand("train", "training and ablation runs");
  add_common(train);
  CLI::App* check = app.add_subcommand("check", "verification suites");
  check->add_option("kind", check_kind, "gradcheck|prop1|solver-oracle")->required();
  add_common(check);

  CLI11_PARSE(app, argc, argv);

  try {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "config: cannot open " << config_path << '\n';
      return 1;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    CliConfig cfg = parse_config_text(buf.str());
    if (const char* env = std::getenv("OTDA_SEED_OVERRIDE")) cfg.seeds = parse_seed_override(env);
    if (!out_override.empty()) cfg.output_dir = out_override;

    if (plans->parsed()) return cmd_plans(cfg, jobs);
    if (train->parsed()) return cmd_train(cfg, jobs);
    return cmd_check(check_kind, cfg);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
