#include "rdgcn/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "rdgcn/error.hpp"
#include "rdgcn/matrix_io.hpp"
#include "rdgcn/parse.hpp"

namespace rdgcn::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kCsvLimit = 2000;

const char* to_string(grounding::SymmetryMode m) {
  return m == grounding::SymmetryMode::Ordered ? "ordered" : "unordered";
}

const char* to_string(features::SelfLoops m) {
  return m == features::SelfLoops::Literal ? "literal" : "reset";
}

std::string hex(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

template <class F>
auto staged(const char* stage, F&& body) {
  const auto prefix = [stage](const std::exception& e) { return std::string(stage) + ": " + e.what(); };
  try {
    return body();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix(e));
  } catch (const NumericalError& e) {
    throw NumericalError(prefix(e));
  } catch (const DataError& e) {
    throw DataError(prefix(e));
  } catch (const std::invalid_argument& e) {
    throw DataError(prefix(e));
  }
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

void require_file(const char* key, const fs::path& p, bool required) {
  if (p.empty()) {
    if (required) throw ConfigError(std::string(key) + " is required");
    return;
  }
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(key) + ": no such file: " + p.string());
}

// Artifacts ------------------------------------------------------------------

struct TargetsFile {
  std::vector<int> labels;
  std::vector<std::string> ids;  // fact spelling without the final '.'
};

void write_targets(const fs::path& path, std::span<const grounding::TargetExample> targets) {
  std::ostringstream out;
  for (const auto& t : targets) {
    out << (t.label == grounding::Label::Positive ? 1 : 0) << ' ' << kb::format_fact(t.atom) << ".\n";
  }
  kb::write_text_file(path, out.str());
}

TargetsFile read_targets(const fs::path& path) {
  const std::string text = kb::read_text_file(path);
  TargetsFile out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || (line.substr(0, space) != "0" && line.substr(0, space) != "1") ||
        line.size() < space + 3 || line.back() != '.') {
      throw ParseError("expected '<0|1> Target(...).' in " + path.string(), line_no, 1);
    }
    out.labels.push_back(line[0] - '0');
    out.ids.push_back(line.substr(space + 1, line.size() - space - 2));
  }
  if (out.labels.empty()) throw DataError("no targets in " + path.string());
  return out;
}

/// Facts plus the targets recorded by the learn stage.
Dataset dataset_from_artifacts(const PipelineConfig& cfg) {
  Dataset d;
  kb::parse_facts(kb::read_text_file(cfg.facts), d.kb);
  const TargetsFile tf = read_targets(cfg.output_dir / "targets.txt");
  std::string text;
  for (const auto& id : tf.ids) text += id + ".\n";
  const auto atoms = kb::parse_examples(text, d.kb, cfg.target);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    d.targets.push_back({atoms[i], tf.labels[i] ? grounding::Label::Positive : grounding::Label::Negative});
  }
  return d;
}

std::vector<grounding::Clause> read_rules(const PipelineConfig& cfg, const kb::KnowledgeBase& kb) {
  return rules::parse_rules(kb::read_text_file(cfg.output_dir / "rules.txt"), kb);
}

void persist_rules(const fs::path& dir, std::span<const grounding::Clause> clauses) {
  std::ostringstream out;
  rules::write_rules(out, clauses);
  kb::write_text_file(dir / "rules.txt", out.str());
}

void persist_features(const fs::path& dir, const Features& f) {
  const auto& ids = f.rule_matrix.row_ids;
  io::save_matrix(dir / "X.bin", f.rule_matrix.values);
  io::save_matrix(dir / "D.bin", f.distances.values);
  io::save_matrix(dir / "A.bin", f.adjacency.values);
  io::save_matrix(dir / "P.bin", f.propagation.values);
  if (ids.size() <= kCsvLimit) {
    io::save_matrix(dir / "X.csv", f.rule_matrix.values, ids, f.rule_matrix.col_ids);
    io::save_matrix(dir / "D.csv", f.distances.values, ids, ids);
    io::save_matrix(dir / "A.csv", f.adjacency.values, ids, ids);
    io::save_matrix(dir / "P.csv", f.propagation.values, ids, ids);
  }
}

void write_splits(const fs::path& path, const eval::SplitMasks& m, std::size_t n) {
  std::vector<const char*> tag(n, "");
  for (auto i : m.train) tag[i] = "train";
  for (auto i : m.validation) tag[i] = "validation";
  for (auto i : m.test) tag[i] = "test";
  std::ostringstream out;
  out << "index,split\n";
  for (std::size_t i = 0; i < n; ++i) out << i << ',' << tag[i] << '\n';
  kb::write_text_file(path, out.str());
}

eval::SplitMasks read_splits(const fs::path& path, std::size_t n) {
  std::istringstream in(kb::read_text_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "index,split") throw DataError("bad header in " + path.string());
  eval::SplitMasks m;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("bad line in " + path.string() + ": " + line);
    const std::size_t i = std::stoul(line.substr(0, comma));
    const std::string tag = line.substr(comma + 1);
    if (tag == "train") {
      m.train.push_back(i);
    } else if (tag == "validation") {
      m.validation.push_back(i);
    } else if (tag == "test") {
      m.test.push_back(i);
    } else {
      throw DataError("unknown split '" + tag + "' in " + path.string());
    }
  }
  m.validate(n);
  return m;
}

void persist_training(const fs::path& dir, const Trained& t, std::size_t n) {
  write_splits(dir / "splits.csv", t.masks, n);
  gcn::save_checkpoint(dir / "model.rdgw", t.result.model);
  std::ostringstream hist;
  gcn::write_history_csv(hist, t.result.history);
  kb::write_text_file(dir / "history.csv", hist.str());
}

void persist_eval(const fs::path& dir, const Evaluated& e, std::span<const int> labels,
                  const eval::SplitMasks& masks, std::span<const std::string> ids) {
  std::vector<const char*> tag(labels.size(), "");
  for (auto i : masks.train) tag[i] = "train";
  for (auto i : masks.validation) tag[i] = "validation";
  for (auto i : masks.test) tag[i] = "test";
  std::ostringstream out;
  out << "index,id,label,split,score,predicted\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::string id = ids[i];
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : id) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      id = quoted + "\"";
    }
    out << i << ',' << id << ',' << labels[i] << ',' << tag[i] << ','
        << io::format_double(e.predictions.scores[i]) << ',' << e.predictions.labels[i] << '\n';
  }
  kb::write_text_file(dir / "predictions.csv", out.str());
  kb::write_text_file(dir / "metrics.txt", eval::to_key_value(e.report));
  kb::write_text_file(dir / "metrics.csv", eval::csv_header() + "\n" + eval::to_csv_row(e.report) + "\n");
}

ordered_json report_json(const eval::MetricsReport& r) {
  ordered_json j;
  j["recall"] = r.recall;
  j["precision"] = r.precision;
  j["f1"] = r.f1;
  j["auc_pr"] = r.auc_pr ? ordered_json(*r.auc_pr) : ordered_json(nullptr);
  j["threshold"] = r.threshold;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["tn"] = r.tn;
  j["fn"] = r.fn;
  j["precision_undefined"] = r.precision_undefined;
  return j;
}

/// Records a stage in dir/manifest.json. A manifest written under another
/// config hash is replaced.
void update_manifest(const fs::path& dir, const PipelineConfig& cfg, const char* stage,
                     double seconds, ordered_json details = ordered_json::object()) {
  const fs::path path = dir / "manifest.json";
  const std::string h = hex(cfg.hash());
  ordered_json m;
  if (fs::exists(path)) {
    try {
      m = ordered_json::parse(kb::read_text_file(path));
    } catch (const ordered_json::parse_error&) {
      m = ordered_json();
    }
    if (!m.is_object() || m.value("config_hash", "") != h) m = ordered_json();
  }
  if (m.is_null()) {
    const Seeds s = cfg.seeds();
    m["config_hash"] = h;
    ordered_json conf = ordered_json::object();
    const auto kv = cfg.to_key_values();
    for (const auto& [k, v] : kv.entries()) conf[k] = v;
    m["config"] = conf;
    m["seeds"] = {{"base", s.base},   {"negatives", s.negatives}, {"learn", s.learn},
                  {"split", s.split}, {"train", s.train}};
    m["stages"] = ordered_json::object();
  }
  details["seconds"] = seconds;
  m["stages"][stage] = details;
  kb::write_text_file(path, m.dump(2) + "\n");
}

features::RuleMatrix rule_matrix_from_file(const fs::path& dir, std::size_t n) {
  auto lm = io::load_matrix(dir / "X.bin");
  if (lm.values.rows() != n) {
    throw DataError("X.bin has " + std::to_string(lm.values.rows()) + " rows but targets.txt has " +
                    std::to_string(n));
  }
  features::RuleMatrix rm;
  rm.values = std::move(lm.values);
  for (std::size_t j = 0; j < rm.values.cols(); ++j) rm.col_ids.push_back("rule" + std::to_string(j));
  return rm;
}

Matrix gcn_input(const Matrix& counts, const PipelineConfig& cfg) {
  Matrix input = counts;
  if (cfg.standardize) features::standardize_columns(input);
  return input;
}

Matrix load_square(const fs::path& path, std::size_t n) {
  auto m = io::load_matrix(path).values;
  if (m.rows() != n || m.cols() != n) throw DataError(path.string() + " is not " + std::to_string(n) + "x" + std::to_string(n));
  return m;
}

}  // namespace

// Config -----------------------------------------------------------------------

PipelineConfig PipelineConfig::from_key_values(const config::KeyValues& kv, const fs::path& base_dir) {
  using config::to_bool;
  using config::to_double;
  using config::to_uint;
  PipelineConfig c;
  for (const auto& [key, value] : kv.entries()) {
    const std::string_view k = key;
    if (k == "data.facts") {
      c.facts = resolve(base_dir, value);
    } else if (k == "data.positives") {
      c.positives = resolve(base_dir, value);
    } else if (k == "data.negatives") {
      c.negatives = value.empty() ? fs::path{} : resolve(base_dir, value);
    } else if (k == "data.target") {
      c.target = value;
    } else if (k == "output.dir") {
      c.output_dir = resolve(base_dir, value);
    } else if (k == "seed") {
      c.seed = to_uint(k, value);
    } else if (k == "negatives.seed") {
      c.negatives_seed = to_uint(k, value);
    } else if (k == "negatives.ratio") {
      c.negative_ratio = to_double(k, value);
    } else if (k == "negatives.symmetry") {
      if (value == "unordered") {
        c.symmetry = grounding::SymmetryMode::ExcludeBothOrders;
      } else if (value == "ordered") {
        c.symmetry = grounding::SymmetryMode::Ordered;
      } else {
        throw ConfigError("negatives.symmetry: expected unordered or ordered, got '" + value + "'");
      }
    } else if (k == "learn.seed") {
      c.learn_seed = to_uint(k, value);
    } else if (k == "learn.k_pos") {
      c.k_pos = to_uint(k, value);
    } else if (k == "learn.k_neg") {
      c.k_neg = to_uint(k, value);
    } else if (k == "learn.max_body_length") {
      c.learn.max_body_length = to_uint(k, value);
    } else if (k == "learn.beam_width") {
      c.learn.beam_width = to_uint(k, value);
    } else if (k == "learn.min_examples_per_leaf") {
      c.learn.min_examples_per_leaf = to_uint(k, value);
    } else if (k == "learn.covering_discount") {
      c.learn.covering_discount = to_double(k, value);
    } else if (k == "learn.min_gain") {
      c.learn.min_gain = to_double(k, value);
    } else if (k == "learn.max_constants") {
      c.learn.max_constants_per_type = to_uint(k, value);
    } else if (k == "learn.reference_ratio") {
      c.learn.reference_ratio = to_double(k, value);
    } else if (k == "featurize.metric") {
      try {
        c.metric = features::parse_metric(value);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("featurize.metric: ") + e.what());
      }
    } else if (k == "featurize.cap") {
      const auto cap = to_uint(k, value);
      c.cap = cap == 0 ? grounding::CountCap{} : grounding::CountCap{cap};
    } else if (k == "featurize.standardize") {
      c.standardize = to_bool(k, value);
    } else if (k == "featurize.self_loops") {
      if (value == "reset") {
        c.self_loops = features::SelfLoops::Reset;
      } else if (value == "literal") {
        c.self_loops = features::SelfLoops::Literal;
      } else {
        throw ConfigError("featurize.self_loops: expected reset or literal, got '" + value + "'");
      }
    } else if (k == "train.seed") {
      c.train_seed = to_uint(k, value);
    } else if (k == "train.epochs") {
      c.train.epochs = to_uint(k, value);
    } else if (k == "train.learning_rate") {
      c.train.learning_rate = to_double(k, value);
    } else if (k == "train.weight_decay") {
      c.train.weight_decay = to_double(k, value);
    } else if (k == "train.dropout") {
      c.train.dropout_rate = to_double(k, value);
    } else if (k == "train.patience") {
      c.train.patience = to_uint(k, value);
    } else if (k == "train.hidden_size") {
      c.train.hidden_size = to_uint(k, value);
    } else if (k == "train.num_layers") {
      c.train.num_layers = to_uint(k, value);
    } else if (k == "split.seed") {
      c.split_seed = to_uint(k, value);
    } else if (k == "split.train") {
      c.split[0] = to_double(k, value);
    } else if (k == "split.validation") {
      c.split[1] = to_double(k, value);
    } else if (k == "split.test") {
      c.split[2] = to_double(k, value);
    } else if (k == "split.stratified") {
      c.stratified = to_bool(k, value);
    } else if (k == "eval.threshold") {
      c.threshold = value == "mean" ? std::optional<double>{} : std::optional<double>{to_double(k, value)};
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path, const std::vector<std::string>& overrides) {
  auto kv = config::KeyValues::load(path);
  for (const auto& o : overrides) kv.apply_override(o);
  return from_key_values(kv, path.parent_path());
}

config::KeyValues PipelineConfig::to_key_values() const {
  const auto num = [](double v) { return io::format_double(v); };
  config::KeyValues kv;
  kv.set("data.facts", facts.string());
  kv.set("data.positives", positives.string());
  kv.set("data.negatives", negatives.string());
  kv.set("data.target", target);
  kv.set("seed", std::to_string(seed));
  if (negatives_seed) kv.set("negatives.seed", std::to_string(*negatives_seed));
  if (learn_seed) kv.set("learn.seed", std::to_string(*learn_seed));
  if (split_seed) kv.set("split.seed", std::to_string(*split_seed));
  if (train_seed) kv.set("train.seed", std::to_string(*train_seed));
  kv.set("negatives.ratio", num(negative_ratio));
  kv.set("negatives.symmetry", to_string(symmetry));
  kv.set("learn.k_pos", std::to_string(k_pos));
  kv.set("learn.k_neg", std::to_string(k_neg));
  kv.set("learn.max_body_length", std::to_string(learn.max_body_length));
  kv.set("learn.beam_width", std::to_string(learn.beam_width));
  kv.set("learn.min_examples_per_leaf", std::to_string(learn.min_examples_per_leaf));
  kv.set("learn.covering_discount", num(learn.covering_discount));
  kv.set("learn.min_gain", num(learn.min_gain));
  kv.set("learn.max_constants", std::to_string(learn.max_constants_per_type));
  kv.set("learn.reference_ratio", num(learn.reference_ratio));
  kv.set("featurize.metric", features::to_string(metric));
  kv.set("featurize.cap", std::to_string(cap.value_or(0)));
  kv.set("featurize.standardize", standardize ? "true" : "false");
  kv.set("featurize.self_loops", to_string(self_loops));
  kv.set("train.epochs", std::to_string(train.epochs));
  kv.set("train.learning_rate", num(train.learning_rate));
  kv.set("train.weight_decay", num(train.weight_decay));
  kv.set("train.dropout", num(train.dropout_rate));
  kv.set("train.patience", std::to_string(train.patience));
  kv.set("train.hidden_size", std::to_string(train.hidden_size));
  kv.set("train.num_layers", std::to_string(train.num_layers));
  kv.set("split.train", num(split[0]));
  kv.set("split.validation", num(split[1]));
  kv.set("split.test", num(split[2]));
  kv.set("split.stratified", stratified ? "true" : "false");
  kv.set("eval.threshold", threshold ? num(*threshold) : "mean");
  return kv;
}

std::uint64_t PipelineConfig::hash() const { return config::fnv1a(to_key_values().dump()); }

Seeds PipelineConfig::seeds() const {
  return {seed, negatives_seed.value_or(seed), learn_seed.value_or(seed + 1),
          split_seed.value_or(seed + 2), train_seed.value_or(seed + 3)};
}

void PipelineConfig::validate() const {
  require_file("data.facts", facts, true);
  require_file("data.positives", positives, true);
  require_file("data.negatives", negatives, false);
  if (target.empty()) throw ConfigError("data.target is required");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
  if (!(negative_ratio > 0) || !std::isfinite(negative_ratio)) {
    throw ConfigError("negatives.ratio must be positive");
  }
  if (k_pos + k_neg == 0) throw ConfigError("learn.k_pos + learn.k_neg must be at least 1");
  learn.validate();
  train.validate();
  double total = 0;
  for (double p : split) {
    if (!(p >= 0)) throw ConfigError("split proportions must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split proportions must sum to 1");
  if (threshold && !std::isfinite(*threshold)) throw ConfigError("eval.threshold must be finite");
}

// In-memory stages ---------------------------------------------------------------

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(targets.size());
  for (const auto& t : targets) out.push_back(t.label == grounding::Label::Positive ? 1 : 0);
  return out;
}

Dataset load_dataset(const PipelineConfig& cfg) {
  Dataset d;
  kb::parse_facts(kb::read_text_file(cfg.facts), d.kb);
  if (!d.kb.has_schema(cfg.target)) {
    throw ConfigError("data.target: predicate " + cfg.target + " is not declared in " + cfg.facts.string());
  }
  for (auto& a : kb::parse_examples(kb::read_text_file(cfg.positives), d.kb, cfg.target)) {
    d.targets.push_back({std::move(a), grounding::Label::Positive});
  }
  if (d.targets.empty()) throw DataError("no positive examples in " + cfg.positives.string());
  const std::size_t n_pos = d.targets.size();
  if (cfg.negatives.empty()) {
    const auto positives = std::span(d.targets).first(n_pos);
    auto neg = grounding::sample_negatives(d.kb, d.kb.schema(cfg.target), positives, cfg.negative_ratio,
                                           cfg.seeds().negatives, cfg.symmetry);
    d.targets.insert(d.targets.end(), neg.begin(), neg.end());
    d.sampled_negatives = true;
  } else {
    std::set<kb::Atom> pos;
    for (const auto& t : d.targets) pos.insert(t.atom);
    for (auto& a : kb::parse_examples(kb::read_text_file(cfg.negatives), d.kb, cfg.target)) {
      if (pos.contains(a)) throw DataError("example is both positive and negative: " + kb::format_fact(a));
      d.targets.push_back({std::move(a), grounding::Label::Negative});
    }
  }
  spdlog::info("loaded {} facts, {} positives, {} negatives{}", d.kb.fact_count(), n_pos,
               d.targets.size() - n_pos, d.sampled_negatives ? " (sampled)" : "");
  return d;
}

std::vector<rules::RuleSet> learn_rules(const Dataset& data, const PipelineConfig& cfg) {
  std::vector<rules::RuleSet> out;
  const auto run = [&](grounding::Density density, grounding::Label label, std::size_t k) {
    if (k == 0) return;
    std::vector<grounding::TargetExample> subset;
    for (const auto& t : data.targets) {
      if (t.label == label) subset.push_back(t);
    }
    if (subset.empty()) throw DataError(std::string("no ") + grounding::to_string(label) + " examples to learn from");
    rules::LearnConfig lc = cfg.learn;
    lc.num_rules = k;
    lc.seed = cfg.seeds().learn;
    lc.symmetry = cfg.symmetry;
    out.push_back(rules::learn_ruleset(data.kb, subset, lc, density));
    for (const auto& r : out.back().rules) spdlog::info("  {} rule: {}", grounding::to_string(density), grounding::format_clause(r));
  };
  run(grounding::Density::Positive, grounding::Label::Positive, cfg.k_pos);
  run(grounding::Density::Negative, grounding::Label::Negative, cfg.k_neg);
  return out;
}

Features featurize(std::span<const grounding::Clause> rules, const Dataset& data, const PipelineConfig& cfg) {
  return featurize_from_counts(features::build_rule_matrix(rules, data.targets, data.kb, cfg.cap), cfg);
}

Features featurize_from_counts(features::RuleMatrix rule_matrix, const PipelineConfig& cfg) {
  Features f;
  f.input = gcn_input(rule_matrix.values, cfg);
  f.rule_matrix = std::move(rule_matrix);
  f.distances = features::pairwise_distances(f.input, cfg.metric);
  f.adjacency = features::adjacency_approximation(f.distances);
  f.propagation = features::normalize_propagation(f.adjacency, cfg.self_loops);
  spdlog::info("featurized {} targets x {} rules, {} distance, threshold {}", f.input.rows(), f.input.cols(),
               features::to_string(cfg.metric), f.adjacency.threshold);
  return f;
}

Trained train_model(const Matrix& input, const Matrix& propagation, std::span<const int> labels,
                    const PipelineConfig& cfg) {
  Trained t;
  t.masks = eval::split_examples(labels, cfg.split, cfg.seeds().split, cfg.stratified);
  gcn::TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds().train;
  t.result = gcn::train(propagation, input, labels, t.masks, tc);
  spdlog::info("trained {} epochs, best epoch {}", t.result.history.size(), t.result.best_epoch);
  return t;
}

Evaluated evaluate_model(const gcn::GCNModel& model, const Matrix& input, const Matrix& propagation,
                         std::span<const int> labels, const eval::SplitMasks& masks,
                         const PipelineConfig& cfg) {
  Evaluated e;
  e.predictions = gcn::predict(model, propagation, input);
  if (masks.test.empty()) throw DataError("the test split is empty");
  std::vector<double> scores;
  std::vector<int> truth;
  for (auto i : masks.test) {
    scores.push_back(e.predictions.scores[i]);
    truth.push_back(labels[i]);
  }
  double threshold = 0;
  if (cfg.threshold) {
    threshold = *cfg.threshold;
  } else {
    for (double s : scores) threshold += s;
    threshold /= static_cast<double>(scores.size());
  }
  e.report = eval::evaluate(scores, truth, threshold);
  spdlog::info("test: recall {:.4f} precision {:.4f} f1 {:.4f} auc_pr {:.4f}", e.report.recall,
               e.report.precision, e.report.f1, e.report.auc_pr.value_or(NAN));
  return e;
}

// File-backed stages ---------------------------------------------------------------

void run_learn(const PipelineConfig& cfg) {
  staged("learn", [&] {
    cfg.validate();
    Stopwatch sw;
    fs::create_directories(cfg.output_dir);
    const Dataset data = load_dataset(cfg);
    write_targets(cfg.output_dir / "targets.txt", data.targets);
    const auto sets = learn_rules(data, cfg);
    const auto clauses = features::ordered_rules(sets);
    persist_rules(cfg.output_dir, clauses);
    update_manifest(cfg.output_dir, cfg, "learn", sw.seconds(),
                    {{"rules", clauses.size()}, {"targets", data.targets.size()}});
  });
}

void run_featurize(const PipelineConfig& cfg) {
  staged("featurize", [&] {
    cfg.validate();
    Stopwatch sw;
    const Dataset data = dataset_from_artifacts(cfg);
    const auto clauses = read_rules(cfg, data.kb);
    const Features f = featurize(clauses, data, cfg);
    persist_features(cfg.output_dir, f);
    update_manifest(cfg.output_dir, cfg, "featurize", sw.seconds(), {{"threshold", f.adjacency.threshold}});
  });
}

void run_train(const PipelineConfig& cfg) {
  staged("train", [&] {
    cfg.validate();
    Stopwatch sw;
    const TargetsFile tf = read_targets(cfg.output_dir / "targets.txt");
    const std::size_t n = tf.labels.size();
    const Matrix input = gcn_input(rule_matrix_from_file(cfg.output_dir, n).values, cfg);
    const Matrix p = load_square(cfg.output_dir / "P.bin", n);
    const Trained t = train_model(input, p, tf.labels, cfg);
    persist_training(cfg.output_dir, t, n);
    update_manifest(cfg.output_dir, cfg, "train", sw.seconds(),
                    {{"epochs", t.result.history.size()}, {"best_epoch", t.result.best_epoch}});
  });
}

eval::MetricsReport run_eval(const PipelineConfig& cfg) {
  return staged("eval", [&] {
    cfg.validate();
    Stopwatch sw;
    const TargetsFile tf = read_targets(cfg.output_dir / "targets.txt");
    const std::size_t n = tf.labels.size();
    const Matrix input = gcn_input(rule_matrix_from_file(cfg.output_dir, n).values, cfg);
    const Matrix p = load_square(cfg.output_dir / "P.bin", n);
    const auto masks = read_splits(cfg.output_dir / "splits.csv", n);
    const auto model = gcn::load_checkpoint(cfg.output_dir / "model.rdgw");
    const Evaluated e = evaluate_model(model, input, p, tf.labels, masks, cfg);
    persist_eval(cfg.output_dir, e, tf.labels, masks, tf.ids);
    update_manifest(cfg.output_dir, cfg, "eval", sw.seconds(), {{"metrics", report_json(e.report)}});
    return e.report;
  });
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  staged("config", [&] { cfg.validate(); });
  fs::create_directories(cfg.output_dir);
  const fs::path& dir = cfg.output_dir;
  PipelineResult out;

  Dataset data;
  staged("learn", [&] {
    Stopwatch sw;
    data = load_dataset(cfg);
    write_targets(dir / "targets.txt", data.targets);
    const auto sets = learn_rules(data, cfg);
    out.rules = features::ordered_rules(sets);
    persist_rules(dir, out.rules);
    update_manifest(dir, cfg, "learn", sw.seconds(), {{"rules", out.rules.size()}, {"targets", data.targets.size()}});
  });
  out.targets = data.targets.size();

  Features f;
  staged("featurize", [&] {
    Stopwatch sw;
    f = featurize(out.rules, data, cfg);
    persist_features(dir, f);
    update_manifest(dir, cfg, "featurize", sw.seconds(), {{"threshold", f.adjacency.threshold}});
  });

  const auto labels = data.labels();
  Trained t;
  staged("train", [&] {
    Stopwatch sw;
    t = train_model(f.input, f.propagation.values, labels, cfg);
    persist_training(dir, t, labels.size());
    update_manifest(dir, cfg, "train", sw.seconds(),
                    {{"epochs", t.result.history.size()}, {"best_epoch", t.result.best_epoch}});
  });

  staged("eval", [&] {
    Stopwatch sw;
    const Evaluated e = evaluate_model(t.result.model, f.input, f.propagation.values, labels, t.masks, cfg);
    persist_eval(dir, e, labels, t.masks, f.rule_matrix.row_ids);
    update_manifest(dir, cfg, "eval", sw.seconds(), {{"metrics", report_json(e.report)}});
    out.report = e.report;
  });
  return out;
}

// Sweeps -------------------------------------------------------------------------

const char* to_string(SweepAxis axis) noexcept {
  switch (axis) {
    case SweepAxis::HiddenSize: return "hidden_size";
    case SweepAxis::NumLayers: return "num_layers";
    case SweepAxis::Metric: return "metric";
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "hidden_size" || name == "hidden") return SweepAxis::HiddenSize;
  if (name == "num_layers" || name == "layers") return SweepAxis::NumLayers;
  if (name == "metric") return SweepAxis::Metric;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "' (hidden_size, num_layers, metric)");
}

std::vector<std::string> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::HiddenSize: return {"16", "32", "64", "128"};
    case SweepAxis::NumLayers: return {"2", "3", "4", "5"};
    case SweepAxis::Metric: return {"euclidean", "manhattan", "chebyshev"};
  }
  return {};
}

std::vector<SweepRow> sensitivity_sweep(const PipelineConfig& cfg, SweepAxis axis,
                                        const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const char* key = axis == SweepAxis::HiddenSize ? "train.hidden_size"
                    : axis == SweepAxis::NumLayers ? "train.num_layers"
                                                   : "featurize.metric";
  std::vector<PipelineConfig> settings;
  for (const auto& v : values) {
    auto kv = cfg.to_key_values();
    kv.set(key, v);
    PipelineConfig s = PipelineConfig::from_key_values(kv);
    s.output_dir = cfg.output_dir / "sweep" / (std::string(to_string(axis)) + "-" + v);
    s.validate();
    settings.push_back(std::move(s));
  }

  staged("config", [&] { cfg.validate(); });
  fs::create_directories(cfg.output_dir);
  Dataset data;
  std::vector<grounding::Clause> clauses;
  staged("learn", [&] {
    Stopwatch sw;
    data = load_dataset(cfg);
    write_targets(cfg.output_dir / "targets.txt", data.targets);
    clauses = features::ordered_rules(learn_rules(data, cfg));
    persist_rules(cfg.output_dir, clauses);
    update_manifest(cfg.output_dir, cfg, "learn", sw.seconds(), {{"rules", clauses.size()}});
  });
  const auto labels = data.labels();

  features::RuleMatrix counts;
  Features shared;
  staged("featurize", [&] {
    Stopwatch sw;
    counts = features::build_rule_matrix(clauses, data.targets, data.kb, cfg.cap);
    if (axis != SweepAxis::Metric) {
      shared = featurize_from_counts(counts, cfg);
      persist_features(cfg.output_dir, shared);
    }
    update_manifest(cfg.output_dir, cfg, "featurize", sw.seconds());
  });

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const PipelineConfig& s = settings[i];
    fs::create_directories(s.output_dir);
    spdlog::info("sweep {} = {}", to_string(axis), values[i]);
    Features own;
    if (axis == SweepAxis::Metric) {
      staged("featurize", [&] {
        Stopwatch sw;
        own = featurize_from_counts(counts, s);
        persist_features(s.output_dir, own);
        update_manifest(s.output_dir, s, "featurize", sw.seconds(), {{"threshold", own.adjacency.threshold}});
      });
    }
    const Features& f = axis == SweepAxis::Metric ? own : shared;
    Trained t;
    staged("train", [&] {
      Stopwatch sw;
      t = train_model(f.input, f.propagation.values, labels, s);
      persist_training(s.output_dir, t, labels.size());
      update_manifest(s.output_dir, s, "train", sw.seconds(), {{"epochs", t.result.history.size()}});
    });
    staged("eval", [&] {
      Stopwatch sw;
      const Evaluated e = evaluate_model(t.result.model, f.input, f.propagation.values, labels, t.masks, s);
      persist_eval(s.output_dir, e, labels, t.masks, counts.row_ids);
      update_manifest(s.output_dir, s, "eval", sw.seconds(), {{"metrics", report_json(e.report)}});
      rows.push_back({axis, values[i], e.report});
    });
  }
  kb::write_text_file(cfg.output_dir / (std::string("sweep_") + to_string(axis) + ".csv"), sweep_csv(rows));
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "axis,value," + eval::csv_header() + "\n";
  for (const auto& r : rows) out += std::string(to_string(r.axis)) + "," + r.value + "," + eval::to_csv_row(r.report) + "\n";
  return out;
}

// Rule inspection ------------------------------------------------------------------

std::vector<RuleCoverage> rule_coverage(std::span<const grounding::Clause> rules, const Dataset& data,
                                        grounding::CountCap cap) {
  std::vector<RuleCoverage> out;
  for (const auto& rule : rules) {
    const grounding::CompiledClause compiled(rule, data.kb);
    RuleCoverage c{rule};
    double total = 0;
    for (const auto& t : data.targets) {
      const auto count = compiled.count(t.atom, cap);
      total += static_cast<double>(count);
      const bool pos = t.label == grounding::Label::Positive;
      (pos ? c.positives : c.negatives) += 1;
      if (count > 0) (pos ? c.positives_covered : c.negatives_covered) += 1;
    }
    c.mean_count = data.targets.empty() ? 0.0 : total / static_cast<double>(data.targets.size());
    out.push_back(std::move(c));
  }
  return out;
}

std::string format_coverage(std::span<const RuleCoverage> coverage) {
  const auto pct = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : 100.0 * static_cast<double>(a) / static_cast<double>(b); };
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    const auto& c = coverage[i];
    out << "rule" << i << "  " << grounding::format_clause(c.rule) << "  [" << grounding::to_string(c.rule.provenance.source)
        << ", iteration " << c.rule.provenance.iteration << "]\n"
        << "       positives " << c.positives_covered << "/" << c.positives << " (" << pct(c.positives_covered, c.positives)
        << "%)  negatives " << c.negatives_covered << "/" << c.negatives << " (" << pct(c.negatives_covered, c.negatives)
        << "%)  mean count " << std::setprecision(3) << c.mean_count << std::setprecision(1) << "\n";
  }
  return out.str();
}

std::vector<RuleCoverage> inspect_rules(const PipelineConfig& cfg) {
  return staged("inspect-rules", [&] {
    const Dataset data = dataset_from_artifacts(cfg);
    return rule_coverage(read_rules(cfg, data.kb), data, cfg.cap);
  });
}

}  // namespace rdgcn::pipeline
