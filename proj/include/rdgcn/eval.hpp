#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rdgcn::eval {

struct MetricsReport {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::optional<double> auc_pr;
  double threshold = 0.5;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  bool precision_undefined = false;  // no positive predictions; precision reported as 0

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

/// Positive iff score >= threshold. Labels are 0/1.
/// Throws std::invalid_argument on empty or mismatched input.
MetricsReport confusion_metrics(std::span<const double> scores, std::span<const int> labels,
                                double threshold = 0.5);

/// Step-wise area under the precision-recall curve: scores sorted descending
/// with ties grouped into one threshold, sum over thresholds of
/// (R_k - R_{k-1}) * P_k. Throws std::invalid_argument without positives.
double auc_pr(std::span<const double> scores, std::span<const int> labels);

/// confusion_metrics plus auc_pr (left empty when there are no positives).
MetricsReport evaluate(std::span<const double> scores, std::span<const int> labels,
                       double threshold = 0.5);

struct SplitMasks {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  /// Throws std::invalid_argument unless the sets are disjoint and in [0, n).
  void validate(std::size_t n) const;
};

/// Each class (or the whole set when not stratified) is shuffled with the
/// seed, then cut into round(p0 * m) train, round(p1 * m) validation and the
/// rest test. Index lists come out sorted.
SplitMasks split_examples(std::span<const int> labels, std::array<double, 3> proportions,
                          std::uint64_t seed, bool stratified = true);

/// `key = value` lines.
std::string to_key_value(const MetricsReport& r);
std::string csv_header();
std::string to_csv_row(const MetricsReport& r);

}  // namespace rdgcn::eval
