#pragma once

// RunConfig: everything a run depends on, read from an INI file.
//
//   [run]        seed
//   [corpus]     kind = synthetic | tsv, train/dev/test paths, bpe_vocab_size
//   [synthetic]  SyntheticTaskSpec fields
//   [model]      layers, heads, d_model, d_ffn, max_len
//   [translator] / [reranker]   TrainConfig fields
//   [decode]     DecodeConfig fields
//   [rerank]     n_values, data_beam_size, alpha_grid
//
// Missing keys keep their defaults; unknown sections or keys are errors.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mtrerank/common.hpp"
#include "mtrerank/decode/search.hpp"
#include "mtrerank/nnmodel/params.hpp"
#include "mtrerank/optim/train.hpp"
#include "mtrerank/rerank/dataset.hpp"
#include "mtrerank/rerank/policies.hpp"
#include "mtrerank/textdata/synthetic.hpp"

namespace mtrerank::cli {

struct RunConfig {
  std::uint64_t seed = 1;

  std::string corpus_kind = "synthetic";
  std::string train_path, dev_path, test_path;
  int bpe_vocab_size = 1000;
  textdata::SyntheticTaskSpec synthetic;

  nnmodel::ModelConfig model;
  optim::TrainConfig translator;
  optim::TrainConfig reranker;
  decode::DecodeConfig decode;

  std::vector<int> n_values{1, 3, 10};
  int data_beam_size = 5;
  std::vector<double> alpha_grid = rerank::default_alpha_grid();

  /// Directory that relative corpus paths resolve against.
  std::filesystem::path base_dir;

  // Desk-scale defaults, calibrated by pilot runs on one CPU.
  RunConfig() {
    synthetic.min_length = 3;
    synthetic.max_length = 6;
    translator.base_lr = 1e-3;
    translator.warmup_steps = 200;
    translator.dropout = 0.1;
    translator.max_steps = 2000;
    translator.batch_token_budget = 512;
    translator.eval_interval_steps = 200;
    reranker.base_lr = 1e-3;
    reranker.warmup_steps = 100;
    reranker.dropout = 0.1;
    reranker.label_smoothing = 0.0;
    reranker.max_steps = 2000;
    reranker.batch_token_budget = 2048;
    reranker.eval_interval_steps = 250;
  }

  void validate() const;

  rerank::RerankDatasetSpec dataset_spec(int n) const {
    rerank::RerankDatasetSpec s;
    s.n = n;
    s.beam_size = data_beam_size;
    s.decode = decode;
    s.seed = seed;
    return s;
  }

  optim::TrainConfig translator_train() const {
    auto t = translator;
    t.seed = seed;
    return t;
  }
  optim::TrainConfig reranker_train(int n) const {
    auto t = reranker;
    t.seed = substream_seed(seed, "reranker", {static_cast<std::uint64_t>(n)});
    return t;
  }
};

namespace detail {

inline std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) out += num(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

/// Typed access to one INI section that records which keys were read.
class Section {
 public:
  Section(const boost::property_tree::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <class T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!tree_) return;
    const auto v = tree_->get_optional<std::string>(key);
    if (!v) return;
    try {
      out = parse<T>(trim(*v));
    } catch (const std::exception&) {
      throw ConfigError("config: bad value for " + name_ + "." + key + ": '" + *v + "'");
    }
  }

  void check_unknown() const {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_) {
      if (!used_.count(key)) throw ConfigError("config: unknown key " + name_ + "." + key);
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
  }

  template <class T>
  static T parse(const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<double>>) {
      T out;
      std::stringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(parse<typename T::value_type>(trim(item)));
      if (out.empty()) throw ConfigError("empty list");
      return out;
    } else {
      T v{};
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("not a number");
      return v;
    }
  }

  const boost::property_tree::ptree* tree_;
  std::string name_;
  std::set<std::string> used_;
};

template <class Visit>
void visit_train(Visit& s, optim::TrainConfig& t, bool smoothing) {
  s.get("base_lr", t.base_lr);
  s.get("warmup_steps", t.warmup_steps);
  s.get("weight_decay", t.weight_decay);
  s.get("dropout", t.dropout);
  if (smoothing) s.get("label_smoothing", t.label_smoothing);
  s.get("max_steps", t.max_steps);
  s.get("max_epochs", t.max_epochs);
  s.get("batch_token_budget", t.batch_token_budget);
  s.get("eval_interval_steps", t.eval_interval_steps);
}

/// Walks every section and key in file order; `section(name)` returns a
/// visitor with a templated get(key, field).
template <class Cfg, class MakeSection>
void visit(Cfg& c, MakeSection&& section) {
  {
    auto&& s = section("run");
    s.get("seed", c.seed);
  }
  {
    auto&& s = section("corpus");
    s.get("kind", c.corpus_kind);
    s.get("train", c.train_path);
    s.get("dev", c.dev_path);
    s.get("test", c.test_path);
    s.get("bpe_vocab_size", c.bpe_vocab_size);
  }
  {
    auto&& s = section("synthetic");
    auto& t = c.synthetic;
    s.get("seed", t.seed);
    s.get("source_vocab_size", t.source_vocab_size);
    s.get("min_length", t.min_length);
    s.get("max_length", t.max_length);
    s.get("synonym_fanout", t.synonym_fanout);
    s.get("synonym_decay", t.synonym_decay);
    s.get("reorder_prob", t.reorder_prob);
    s.get("drop_prob", t.drop_prob);
    s.get("train_size", t.train_size);
    s.get("dev_size", t.dev_size);
    s.get("test_size", t.test_size);
  }
  {
    auto&& s = section("model");
    s.get("layers", c.model.layers);
    s.get("heads", c.model.heads);
    s.get("d_model", c.model.d_model);
    s.get("d_ffn", c.model.d_ffn);
    s.get("max_len", c.model.max_len);
  }
  {
    auto&& s = section("translator");
    visit_train(s, c.translator, true);
  }
  {
    auto&& s = section("reranker");
    visit_train(s, c.reranker, false);
  }
  {
    auto&& s = section("decode");
    s.get("beam_size", c.decode.beam_size);
    s.get("candidates_k", c.decode.candidates_k);
    s.get("topk_k", c.decode.topk_k);
    s.get("nucleus_p", c.decode.nucleus_p);
    s.get("temperature", c.decode.temperature);
    s.get("max_decode_len", c.decode.max_decode_len);
  }
  {
    auto&& s = section("rerank");
    s.get("n_values", c.n_values);
    s.get("data_beam_size", c.data_beam_size);
    s.get("alpha_grid", c.alpha_grid);
  }
}

/// Serializes every field back to INI text.
class Writer {
 public:
  explicit Writer(std::ostringstream& out, const std::string& name) : out_(out) { out_ << '[' << name << "]\n"; }
  ~Writer() { out_ << '\n'; }
  template <class T>
  void get(const std::string& key, const T& v) {
    out_ << key << " = ";
    if constexpr (std::is_same_v<T, std::string>) out_ << v;
    else if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<double>>) out_ << join(v);
    else if constexpr (std::is_floating_point_v<T>) out_ << num(v);
    else out_ << v;
    out_ << '\n';
  }

 private:
  std::ostringstream& out_;
};

}  // namespace detail

inline void RunConfig::validate() const {
  if (corpus_kind == "synthetic") {
    synthetic.validate();
  } else if (corpus_kind == "tsv") {
    if (train_path.empty() || dev_path.empty() || test_path.empty()) {
      throw ConfigError("config: corpus.kind = tsv needs train, dev and test paths");
    }
    if (bpe_vocab_size < textdata::kNumReserved + 1) throw ConfigError("config: bpe_vocab_size too small");
  } else {
    throw ConfigError("config: corpus.kind must be synthetic or tsv");
  }
  auto m = model;
  m.vocab_size = 1;
  m.validate();
  translator.validate();
  reranker.validate();
  decode.validate();
  if (model.max_len < decode.max_decode_len + 2) {
    throw ConfigError("config: model.max_len must be at least decode.max_decode_len + 2");
  }
  if (data_beam_size < 1) throw ConfigError("config: rerank.data_beam_size must be >= 1");
  for (int n : n_values) {
    if (n < 0) throw ConfigError("config: rerank.n_values must be >= 0");
  }
  if (std::set<int>(n_values.begin(), n_values.end()).size() != n_values.size()) {
    throw ConfigError("config: rerank.n_values has duplicates");
  }
  for (double a : alpha_grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("config: alpha_grid values must lie in [0, 1]");
  }
}

inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  c.base_dir = base_dir;
  std::set<std::string> known;
  std::vector<detail::Section> sections;
  sections.reserve(16);
  detail::visit(c, [&](const std::string& name) -> detail::Section& {
    known.insert(name);
    const auto child = tree.get_child_optional(name);
    sections.emplace_back(child ? &*child : nullptr, name);
    return sections.back();
  });
  for (const auto& s : sections) s.check_unknown();
  for (const auto& [name, child] : tree) {
    if (!known.count(name)) throw ConfigError("config: unknown section [" + name + "]");
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  return parse_config(in, path.parent_path());
}

/// Canonical INI text; parse_config(to_ini(c)) reproduces c.
inline std::string to_ini(const RunConfig& cfg) {
  std::ostringstream out;
  RunConfig c = cfg;
  std::vector<std::unique_ptr<detail::Writer>> open;
  detail::visit(c, [&](const std::string& name) -> detail::Writer& {
    open.clear();
    open.push_back(std::make_unique<detail::Writer>(out, name));
    return *open.back();
  });
  open.clear();
  return out.str();
}

/// Corpus paths resolved against the config file's directory.
inline std::filesystem::path resolve(const RunConfig& c, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || c.base_dir.empty() ? path : c.base_dir / path;
}

}  // namespace mtrerank::cli
