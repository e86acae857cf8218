#pragma once

// Pipeline stages behind the subcommands. Every stage reads its inputs from
// and writes its outputs to the run directory, so stages can run in
// separate processes and a sweep can resume from whatever already exists.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtrerank/cli/config.hpp"
#include "mtrerank/cli/run_dir.hpp"
#include "mtrerank/cli/svg.hpp"
#include "mtrerank/decode/jsonl.hpp"
#include "mtrerank/nnmodel/checkpoint.hpp"
#include "mtrerank/nnmodel/params.hpp"
#include "mtrerank/nnmodel/step_decoder.hpp"
#include "mtrerank/optim/train.hpp"
#include "mtrerank/rerank/dataset.hpp"
#include "mtrerank/rerank/evaluation.hpp"
#include "mtrerank/rerank/report.hpp"
#include "mtrerank/textdata/bpe.hpp"
#include "mtrerank/textdata/corpus.hpp"
#include "mtrerank/textdata/synthetic.hpp"

namespace mtrerank::cli {

inline const std::vector<std::string>& eval_splits() {
  static const std::vector<std::string> s{"dev", "test"};
  return s;
}

struct PreparedData {
  int vocab_size = 0;
  textdata::Corpus train, dev, test;

  const textdata::Corpus& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "test") return test;
    throw InvalidInput("unknown split " + name);
  }
};

namespace detail {

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed " + path.string() + ": " + e.what());
  }
}

template <class T>
void save_checkpoint_atomic(const nnmodel::ModelParams<T>& params, const fs::path& path) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  nnmodel::save_checkpoint(params, tmp.string());
  fs::rename(tmp, path);
}

inline void write_split_text(const fs::path& path, const textdata::Corpus& corpus,
                             const std::function<std::string(const TokenIds&)>& detok) {
  write_atomic(path, [&](std::ostream& out) {
    for (const auto& p : corpus) out << detok(p.source) << '\t' << detok(p.reference) << '\n';
  });
}

}  // namespace detail

/// Builds (or tokenizes) the corpora and records them under data/.
inline PreparedData prepare_data(const RunConfig& cfg, const RunDir& dir) {
  PreparedData d;
  if (cfg.corpus_kind == "synthetic") {
    auto task = textdata::gen_synthetic(cfg.synthetic);
    d.vocab_size = static_cast<int>(task.vocab.size());
    const auto& vocab = task.vocab;
    auto detok = [&](const TokenIds& ids) {
      return textdata::decode_words(vocab, std::vector<TokenId>(ids.begin(), ids.end() - 1));
    };
    write_atomic(dir.data() / "vocab.txt", [&](std::ostream& out) {
      for (const auto& t : vocab.tokens()) out << t << '\n';
    });
    detail::write_split_text(dir.data() / "train.tsv", task.train, detok);
    detail::write_split_text(dir.data() / "dev.tsv", task.dev, detok);
    detail::write_split_text(dir.data() / "test.tsv", task.test, detok);
    d.train = std::move(task.train);
    d.dev = std::move(task.dev);
    d.test = std::move(task.test);
  } else {
    const auto train = textdata::read_tsv(resolve(cfg, cfg.train_path).string());
    const auto dev = textdata::read_tsv(resolve(cfg, cfg.dev_path).string());
    const auto test = textdata::read_tsv(resolve(cfg, cfg.test_path).string());
    std::vector<std::string> lines = train.sources;
    lines.insert(lines.end(), train.references.begin(), train.references.end());
    const auto bpe = textdata::bpe_train(lines, static_cast<std::size_t>(cfg.bpe_vocab_size));
    fs::create_directories(dir.data());
    const fs::path tmp = (dir.data() / "bpe.txt").string() + ".tmp";
    bpe.save(tmp.string());
    fs::rename(tmp, dir.data() / "bpe.txt");
    auto enc = [&](const std::string& s) { return bpe.encode(s); };
    d.vocab_size = static_cast<int>(bpe.vocab.size());
    d.train = textdata::encode_corpus(train, enc);
    d.dev = textdata::encode_corpus(dev, enc);
    d.test = textdata::encode_corpus(test, enc);
  }
  if (d.train.empty() || d.dev.empty() || d.test.empty()) throw InvalidInput("corpus: every split needs at least one pair");
  for (const auto* c : {&d.train, &d.dev, &d.test}) {
    for (const auto& p : *c) {
      if (static_cast<int>(std::max(p.source.size(), p.reference.size())) + 1 > cfg.model.max_len) {
        throw ConfigError("config: a sentence exceeds model.max_len");
      }
    }
  }
  return d;
}

inline nnmodel::ModelParams<float> load_translator(const RunDir& dir) {
  require(dir.translator_ckpt(), "run train-translator first");
  return nnmodel::load_checkpoint(dir.translator_ckpt().string());
}

inline nnmodel::ModelParams<float> load_reranker(const RunDir& dir, int n) {
  require(dir.reranker_ckpt(n), "run train-reranker first");
  return nnmodel::load_checkpoint(dir.reranker_ckpt(n).string());
}

/// Beam candidates of the translator for one split, as stored by
/// train-translator, paired with references.
inline std::vector<rerank::EvalItem> load_eval_items(const RunDir& dir, const PreparedData& d, const std::string& split) {
  require(dir.candidates(split), "run train-translator first");
  std::ifstream in(dir.candidates(split));
  const auto lists = decode::read_candidate_lists(in);
  const auto& corpus = d.split(split);
  if (lists.size() != corpus.size()) throw Error("candidates for " + split + " do not match the corpus");
  std::vector<std::vector<rerank::Candidate>> cands;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    if (lists[i].index != i || lists[i].source != corpus[i].source) {
      throw Error("candidates for " + split + " do not match the corpus");
    }
    cands.push_back(lists[i].candidates);
  }
  return rerank::make_eval_items(corpus, cands);
}

inline void stage_train_translator(const RunConfig& cfg, const RunDir& dir, const PreparedData& d, std::ostream& log) {
  auto mc = cfg.model;
  mc.vocab_size = d.vocab_size;
  const auto init = nnmodel::init_params<float>(mc, substream_seed(cfg.seed, "translator-init"));
  std::ostringstream metrics;
  log << "training translator (" << nnmodel::parameter_count(init) << " parameters)\n";
  auto res = optim::train_translator(d.train, d.dev, init, cfg.translator_train(), cfg.decode, &metrics, &log);

  // Everything downstream depends on the translator.
  fs::remove_all(dir.rerank());
  fs::remove_all(dir.sweep());
  fs::remove_all(dir.root() / "candidates");

  res.best.config.dropout = 0.0;
  detail::save_checkpoint_atomic(res.best, dir.translator_ckpt());
  write_text(dir.translator() / "metrics.csv", metrics.str());
  detail::write_json(dir.translator() / "summary.json", {{"initial_dev_bleu", res.initial_dev_bleu},
                                                         {"best_dev_bleu", res.best_dev_bleu},
                                                         {"best_epoch", res.best_epoch},
                                                         {"steps", res.steps},
                                                         {"dev_bleu_by_epoch", res.dev_bleu}});

  const nnmodel::StepDecoder<float> dec(res.best);
  for (const auto& split : eval_splits()) {
    const auto& corpus = d.split(split);
    const auto cands = rerank::beam_candidates(dec, corpus, cfg.decode);
    std::vector<decode::CandidateList> lists;
    for (std::size_t i = 0; i < corpus.size(); ++i) lists.push_back({i, corpus[i].source, cands[i]});
    write_atomic(dir.candidates(split), [&](std::ostream& out) { decode::write_candidate_lists(out, lists); });
  }
  log << "translator: dev BLEU " << res.initial_dev_bleu << " -> " << res.best_dev_bleu << " (epoch " << res.best_epoch
      << ")\n";
}

inline void stage_gen_data(const RunConfig& cfg, const RunDir& dir, const PreparedData& d, int n, std::ostream& log) {
  const auto translator = load_translator(dir);
  const nnmodel::StepDecoder<float> dec(translator);
  const auto spec = cfg.dataset_spec(n);
  const auto data = rerank::build_rerank_dataset(d.train, dec, spec, &log);
  if (data.empty()) throw Error("reranker dataset is empty");
  write_atomic(dir.dataset(n), [&](std::ostream& out) { rerank::write_dataset(out, data); });
  const auto summary = rerank::dataset_summary(data, spec);
  detail::write_json(dir.rerank(n) / "data_summary.json", summary);
  log << "n=" << n << ": " << data.size() << " reranker examples\n";
}

inline std::vector<rerank::RerankExample> load_dataset(const RunDir& dir, int n) {
  require(dir.dataset(n), "run gen-rerank-data first");
  std::ifstream in(dir.dataset(n));
  return rerank::read_dataset(in);
}

inline void stage_train_reranker(const RunConfig& cfg, const RunDir& dir, const PreparedData& d, int n,
                                 std::ostream& log) {
  const auto translator = load_translator(dir);
  const auto data = load_dataset(dir, n);
  auto dev = load_eval_items(dir, d, "dev");
  const auto init =
      nnmodel::init_reranker_from_translator(translator, substream_seed(cfg.seed, "head", {static_cast<std::uint64_t>(n)}));
  std::ostringstream metrics;
  auto res = optim::train_reranker(data, init, cfg.reranker_train(n), std::move(dev), &metrics, &log);
  res.best.config.dropout = 0.0;
  detail::save_checkpoint_atomic(res.best, dir.reranker_ckpt(n));
  write_text(dir.rerank(n) / "metrics.csv", metrics.str());
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& [step, bleu] : res.evals) evals.push_back({{"step", step}, {"dev_bleu", bleu}});
  detail::write_json(dir.rerank(n) / "reranker_summary.json",
                     {{"best_step", res.best_step}, {"best_dev_bleu", res.best_dev_bleu}, {"steps", res.steps}, {"evals", evals}});
  log << "n=" << n << ": reranker best dev BLEU " << res.best_dev_bleu << " at step " << res.best_step << '\n';
}

inline void stage_tune_alpha(const RunConfig& cfg, const RunDir& dir, const PreparedData& d, int n, std::ostream& log) {
  const auto reranker = load_reranker(dir, n);
  auto dev = load_eval_items(dir, d, "dev");
  rerank::attach_reranker_scores(dev, reranker);
  const auto t = rerank::tune_alpha(dev, cfg.alpha_grid);
  write_atomic(dir.rerank(n) / "alpha.csv", [&](std::ostream& out) { rerank::write_alpha_csv(out, t); });
  detail::write_json(dir.alpha(n), {{"alpha", t.alpha}, {"dev_corpus_bleu", t.best_bleu}});
  log << "n=" << n << ": alpha " << t.alpha << " (dev BLEU " << t.best_bleu << ")\n";
}

inline rerank::RerankReport stage_evaluate_split(const RunDir& dir, const PreparedData& d, int n, const std::string& split,
                                                 const nnmodel::ModelParams<float>& reranker, double alpha) {
  auto items = load_eval_items(dir, d, split);
  rerank::attach_reranker_scores(items, reranker);
  const auto r = rerank::evaluate_policies(items, alpha, split, n);
  write_atomic(dir.rerank(n) / ("table_" + split + ".csv"), [&](std::ostream& out) { rerank::write_table_csv(out, r); });
  write_atomic(dir.rerank(n) / ("pearson_" + split + ".csv"),
               [&](std::ostream& out) { rerank::write_correlation_csv(out, r); });
  return r;
}

inline std::vector<rerank::RerankReport> stage_evaluate(const RunDir& dir, const PreparedData& d, int n, std::ostream& log) {
  const auto reranker = load_reranker(dir, n);
  require(dir.alpha(n), "run tune-alpha first");
  const double alpha = detail::read_json(dir.alpha(n)).at("alpha").get<double>();
  std::vector<rerank::RerankReport> out;
  for (const auto& split : eval_splits()) {
    out.push_back(stage_evaluate_split(dir, d, n, split, reranker, alpha));
    log << "n=" << n << " " << split << ":";
    for (const auto& p : out.back().policies) log << ' ' << p.name << '=' << rerank::format_fixed(p.corpus_bleu, 4);
    log << '\n';
  }
  // The report files double as the completion marker, so they come last.
  for (const auto& r : out) detail::write_json(dir.report(n, r.split), rerank::to_json(r));
  return out;
}

/// n values with a finished evaluation, ascending.
inline std::vector<int> completed_n(const RunDir& dir) {
  std::vector<int> ns;
  if (!fs::exists(dir.rerank())) return ns;
  for (const auto& e : fs::directory_iterator(dir.rerank())) {
    const auto name = e.path().filename().string();
    if (name.size() < 2 || name[0] != 'n') continue;
    const auto digits = name.substr(1);
    if (!std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    const int n = std::stoi(digits);
    bool done = true;
    for (const auto& split : eval_splits()) done = done && fs::exists(dir.report(n, split));
    if (done) ns.push_back(n);
  }
  std::sort(ns.begin(), ns.end());
  return ns;
}

/// Aggregates every finished n into sweep/bleu.csv and sweep/pearson.csv
/// (keyed by 2n, the number of sampled translations per source) and draws
/// one chart per split and metric.
inline std::string stage_report(const RunDir& dir) {
  const auto ns = completed_n(dir);
  if (ns.empty()) throw MissingArtifact("missing evaluations under " + dir.rerank().string() + " (run evaluate or sweep first)");
  static const std::vector<std::string> systems{"Baseline", "BLEUR", "Hybrid", "Oracle"};
  static const std::vector<std::string> scorers{"Baseline", "BLEUR", "Hybrid"};

  std::ostringstream bleu, pearson, text;
  bleu << "samples,n,split,alpha,baseline,bleur,hybrid,oracle\n";
  pearson << "samples,n,split,baseline,bleur,hybrid\n";
  for (const auto& split : eval_splits()) {
    std::vector<double> xs;
    std::vector<Series> bs, ps;
    for (const auto& s : systems) bs.push_back({s, {}});
    for (const auto& s : scorers) ps.push_back({s, {}});
    for (int n : ns) {
      const auto j = detail::read_json(dir.report(n, split));
      xs.push_back(2.0 * n);
      bleu << 2 * n << ',' << n << ',' << split << ',' << rerank::format_fixed(j.at("alpha").get<double>(), 2);
      for (std::size_t k = 0; k < systems.size(); ++k) {
        double v = std::nan("");
        for (const auto& row : j.at("systems")) {
          if (row.at("system") == systems[k]) v = row.at("corpus_bleu").get<double>();
        }
        bs[k].y.push_back(v);
        bleu << ',' << rerank::format_fixed(v);
      }
      bleu << '\n';
      pearson << 2 * n << ',' << n << ',' << split;
      for (std::size_t k = 0; k < scorers.size(); ++k) {
        double v = std::nan("");
        for (const auto& row : j.at("correlations")) {
          if (row.at("scorer") == scorers[k] && !row.at("averaged_pearson").is_null()) {
            v = row.at("averaged_pearson").get<double>();
          }
        }
        ps[k].y.push_back(v);
        pearson << ',' << (std::isnan(v) ? std::string("nan") : rerank::format_fixed(v));
      }
      pearson << '\n';
    }
    write_text(dir.sweep() / ("bleu_" + split + ".svg"),
               line_chart("Corpus BLEU by reranker (" + split + ")", "sampled translations per source (2n)", "corpus BLEU", xs, bs));
    write_text(dir.sweep() / ("pearson_" + split + ".svg"),
               line_chart("Averaged Pearson with sentence BLEU (" + split + ")", "sampled translations per source (2n)",
                          "averaged Pearson r", xs, ps));
  }
  write_text(dir.sweep() / "bleu.csv", bleu.str());
  write_text(dir.sweep() / "pearson.csv", pearson.str());
  text << bleu.str() << '\n' << pearson.str();
  return text.str();
}

struct SweepOutcome {
  std::vector<int> completed;
  std::vector<std::pair<int, std::string>> failures;
};

/// Runs every missing stage for each n; a failing n is recorded and the
/// sweep moves on.
inline SweepOutcome stage_sweep(const RunConfig& cfg, const RunDir& dir, const PreparedData& d, const std::vector<int>& ns,
                                std::ostream& log) {
  require(dir.translator_ckpt(), "run train-translator first");
  SweepOutcome out;
  for (int n : ns) {
    try {
      if (!fs::exists(dir.dataset(n))) stage_gen_data(cfg, dir, d, n, log);
      if (!fs::exists(dir.reranker_ckpt(n))) stage_train_reranker(cfg, dir, d, n, log);
      if (!fs::exists(dir.alpha(n))) stage_tune_alpha(cfg, dir, d, n, log);
      bool done = true;
      for (const auto& split : eval_splits()) done = done && fs::exists(dir.report(n, split));
      if (!done) {
        stage_evaluate(dir, d, n, log);
      } else {
        log << "n=" << n << ": already complete\n";
      }
      out.completed.push_back(n);
    } catch (const std::exception& e) {
      log << "n=" << n << ": failed: " << e.what() << '\n';
      out.failures.emplace_back(n, e.what());
    }
  }
  write_atomic(dir.sweep() / "failures.csv", [&](std::ostream& o) {
    o << "n,error\n";
    for (const auto& [n, what] : out.failures) {
      std::string msg = what;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      o << n << ',' << msg << '\n';
    }
  });
  if (!completed_n(dir).empty()) stage_report(dir);
  return out;
}

}  // namespace mtrerank::cli
