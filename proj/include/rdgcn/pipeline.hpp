#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rdgcn/config.hpp"
#include "rdgcn/eval.hpp"
#include "rdgcn/featurize.hpp"
#include "rdgcn/gcn.hpp"
#include "rdgcn/grounding.hpp"
#include "rdgcn/kb.hpp"
#include "rdgcn/rule_learn.hpp"

namespace rdgcn::pipeline {

/// Seeds of every random draw in a run. Unset ones derive from the base seed:
/// negatives = seed, learn = seed + 1, split = seed + 2, train = seed + 3.
struct Seeds {
  std::uint64_t base = 0;
  std::uint64_t negatives = 0;
  std::uint64_t learn = 1;
  std::uint64_t split = 2;
  std::uint64_t train = 3;
};

struct PipelineConfig {
  std::filesystem::path facts;
  std::filesystem::path positives;
  std::filesystem::path negatives;  // empty: sample closed-world negatives
  std::string target;
  std::filesystem::path output_dir = "out";

  std::uint64_t seed = 0;
  std::optional<std::uint64_t> negatives_seed;
  std::optional<std::uint64_t> learn_seed;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::uint64_t> train_seed;

  double negative_ratio = 1.0;
  grounding::SymmetryMode symmetry = grounding::SymmetryMode::ExcludeBothOrders;

  rules::LearnConfig learn;  // num_rules and seed are set per density
  std::size_t k_pos = 2;
  std::size_t k_neg = 2;

  features::Metric metric = features::Metric::Euclidean;
  grounding::CountCap cap;
  bool standardize = false;
  features::SelfLoops self_loops = features::SelfLoops::Reset;

  gcn::TrainConfig train;  // seed comes from seeds().train
  std::array<double, 3> split{0.6, 0.1, 0.3};
  bool stratified = true;
  /// Decision threshold on the positive-class score; empty means the mean
  /// test score.
  std::optional<double> threshold = 0.5;

  /// Unknown keys and malformed values throw ConfigError. Relative paths are
  /// resolved against `base_dir`.
  static PipelineConfig from_key_values(const config::KeyValues& kv,
                                        const std::filesystem::path& base_dir = {});
  /// Loads `path` then applies `overrides` (`key=value`), which win.
  static PipelineConfig load(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

  /// Every setting except the output directory, in canonical form.
  config::KeyValues to_key_values() const;
  std::uint64_t hash() const;
  Seeds seeds() const;
  /// Throws ConfigError naming the field for a missing setting or path.
  void validate() const;
};

/// The knowledge base plus every target example, positives first.
struct Dataset {
  kb::KnowledgeBase kb;
  std::vector<grounding::TargetExample> targets;
  bool sampled_negatives = false;

  std::vector<int> labels() const;
};

Dataset load_dataset(const PipelineConfig& cfg);

/// Positive-density rules (k_pos), then negative-density rules (k_neg).
std::vector<rules::RuleSet> learn_rules(const Dataset& data, const PipelineConfig& cfg);

struct Features {
  features::RuleMatrix rule_matrix;  // raw counts
  Matrix input;                      // GCN input, standardized when configured
  features::DistanceMatrix distances;
  features::Adjacency adjacency;
  features::PropagationMatrix propagation;
};

Features featurize(std::span<const grounding::Clause> rules, const Dataset& data,
                   const PipelineConfig& cfg);
/// Everything after the rule matrix; `rule_matrix` is taken as given.
Features featurize_from_counts(features::RuleMatrix rule_matrix, const PipelineConfig& cfg);

struct Trained {
  eval::SplitMasks masks;
  gcn::TrainResult result;
};

Trained train_model(const Matrix& input, const Matrix& propagation, std::span<const int> labels,
                    const PipelineConfig& cfg);

struct Evaluated {
  gcn::Predictions predictions;
  eval::MetricsReport report;  // on the test mask
};

Evaluated evaluate_model(const gcn::GCNModel& model, const Matrix& input,
                         const Matrix& propagation, std::span<const int> labels,
                         const eval::SplitMasks& masks, const PipelineConfig& cfg);

struct PipelineResult {
  eval::MetricsReport report;
  std::vector<grounding::Clause> rules;
  std::size_t targets = 0;
};

/// File-backed stages. Each reads the artifacts of the previous stage from
/// cfg.output_dir, writes its own, and records itself in manifest.json.
///   learn:     rules.txt, targets.txt
///   featurize: X, D, A, P (.bin; also .csv when there are at most 2000 targets)
///   train:     splits.csv, model.rdgw, history.csv
///   eval:      predictions.csv, metrics.txt, metrics.csv
/// Errors are rethrown with the stage name prefixed; partial artifacts stay.
void run_learn(const PipelineConfig& cfg);
void run_featurize(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg);
eval::MetricsReport run_eval(const PipelineConfig& cfg);

/// All four stages in memory, persisting the same artifacts.
PipelineResult run_pipeline(const PipelineConfig& cfg);

enum class SweepAxis : std::uint8_t { HiddenSize, NumLayers, Metric };

const char* to_string(SweepAxis axis) noexcept;
SweepAxis parse_sweep_axis(std::string_view name);
/// {16,32,64,128}, {2,3,4,5} or {euclidean,manhattan,chebyshev}.
std::vector<std::string> default_sweep_values(SweepAxis axis);

struct SweepRow {
  SweepAxis axis;
  std::string value;
  eval::MetricsReport report;
};

/// Learns rules once and reruns only what the axis touches: the GCN stages for
/// hidden size and depth, featurization onwards for the metric. Each setting
/// writes to output_dir/sweep/<axis>-<value>/, and the table to
/// output_dir/sweep_<axis>.csv.
std::vector<SweepRow> sensitivity_sweep(const PipelineConfig& cfg, SweepAxis axis,
                                        const std::vector<std::string>& values);
std::string sweep_csv(std::span<const SweepRow> rows);

struct RuleCoverage {
  grounding::Clause rule;
  std::size_t positives_covered = 0;
  std::size_t negatives_covered = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double mean_count = 0.0;  // over all targets
};

std::vector<RuleCoverage> rule_coverage(std::span<const grounding::Clause> rules,
                                        const Dataset& data, grounding::CountCap cap = {});
std::string format_coverage(std::span<const RuleCoverage> coverage);
/// Reads rules.txt and targets.txt from cfg.output_dir.
std::vector<RuleCoverage> inspect_rules(const PipelineConfig& cfg);

}  // namespace rdgcn::pipeline
