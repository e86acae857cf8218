#pragma once

// Command-line front end: option parsing, run-directory setup and the mapping
// from failures to exit codes (0 ok, 1 runtime failure, 2 usage or config).

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtrerank/cli/config.hpp"
#include "mtrerank/cli/pipeline.hpp"
#include "mtrerank/cli/run_dir.hpp"

namespace mtrerank::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

struct CliOptions {
  std::string command;
  std::string config;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
};

namespace detail {

/// Corpus paths are stored absolute so the run directory's copy of the
/// config reads the same files from anywhere.
inline RunConfig absolutize(RunConfig c) {
  if (c.corpus_kind == "tsv") {
    for (auto* p : {&c.train_path, &c.dev_path, &c.test_path}) *p = fs::absolute(resolve(c, *p)).lexically_normal().string();
  }
  c.base_dir.clear();
  return c;
}

inline RunConfig effective_config(const CliOptions& o, const RunDir& dir) {
  RunConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config);
  } else if (fs::exists(dir.config())) {
    c = load_config(dir.config());
  }
  if (o.seed) c.seed = *o.seed;
  c = absolutize(std::move(c));
  c.validate();
  return c;
}

/// Records the config on first use; later commands must agree with it.
inline void pin_config(const RunConfig& c, const RunDir& dir) {
  const auto text = to_ini(c);
  if (fs::exists(dir.config())) {
    if (read_text(dir.config()) != text) {
      throw ConfigError("config differs from the one recorded in " + dir.config().string() +
                        " (use a fresh --run-dir)");
    }
    return;
  }
  write_text(dir.config(), text);
}

inline int target_n(const CliOptions& o, const RunConfig& c) {
  if (o.n) {
    if (*o.n < 0) throw ConfigError("--n must be >= 0");
    return *o.n;
  }
  if (c.n_values.empty()) throw ConfigError("config: rerank.n_values is empty");
  return *std::max_element(c.n_values.begin(), c.n_values.end());
}

}  // namespace detail

inline int execute(const CliOptions& o, std::ostream& out) {
  const RunDir dir(o.run_dir);
  const auto cfg = detail::effective_config(o, dir);
  const RunLock lock(dir);
  detail::pin_config(cfg, dir);

  if (o.command == "report") {
    out << stage_report(dir);
    return kOk;
  }
  const auto data = prepare_data(cfg, dir);
  if (o.command == "train-translator") {
    stage_train_translator(cfg, dir, data, out);
    return kOk;
  }
  if (o.command == "sweep") {
    std::vector<int> ns = cfg.n_values;
    if (o.n) ns = {detail::target_n(o, cfg)};
    const auto r = stage_sweep(cfg, dir, data, ns, out);
    if (!completed_n(dir).empty()) out << stage_report(dir);
    return r.failures.empty() ? kOk : kRuntimeFailure;
  }
  const int n = detail::target_n(o, cfg);
  if (o.command == "gen-rerank-data") {
    stage_gen_data(cfg, dir, data, n, out);
  } else if (o.command == "train-reranker") {
    stage_train_reranker(cfg, dir, data, n, out);
  } else if (o.command == "tune-alpha") {
    stage_tune_alpha(cfg, dir, data, n, out);
  } else if (o.command == "evaluate") {
    for (const auto& r : stage_evaluate(dir, data, n, out)) {
      out << "[" << r.split << "]\n";
      rerank::write_table_csv(out, r);
      rerank::write_correlation_csv(out, r);
    }
    stage_report(dir);
  } else {
    throw ConfigError("unknown command " + o.command);
  }
  return kOk;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Translation candidate reranking pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  CliOptions o;
  std::uint64_t seed = 0;
  int n = 0;
  app.add_option("--config", o.config, "INI config (default: <run-dir>/config.ini, else built-in defaults)");
  app.add_option("--run-dir", o.run_dir, "Directory holding all artifacts of the run")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Overrides run.seed");
  auto* n_opt = app.add_option("--n", n, "Samples per source for the reranker stages (default: largest rerank.n_values)");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-translator", "Train the translator and write beam candidates for dev and test"},
      {"gen-rerank-data", "Sample and score candidates on train to build reranker data"},
      {"train-reranker", "Fine-tune the reranker on the generated data"},
      {"tune-alpha", "Pick the hybrid interpolation weight on dev"},
      {"evaluate", "Score baseline, BLEUR, hybrid and oracle on dev and test"},
      {"sweep", "Run the missing reranker stages for every n and aggregate"},
      {"report", "Aggregate finished evaluations into CSV tables and SVG plots"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsageError;
  }
  o.command = app.get_subcommands().front()->get_name();
  if (*seed_opt) o.seed = seed;
  if (*n_opt) o.n = n;

  try {
    return execute(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const MissingArtifact& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << '\n';
    return kUsageError;
  } catch (const TrainingDiverged& e) {
    err << "training diverged: " << e.what() << '\n';
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

}  // namespace mtrerank::cli
