#include "rdgcn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rdgcn/error.hpp"
#include "rdgcn/matrix_io.hpp"

namespace rdgcn::eval {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw std::invalid_argument("metrics: empty input");
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("metrics: scores and labels differ in length");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("metrics: labels must be 0 or 1");
  }
}

}  // namespace

MetricsReport confusion_metrics(std::span<const double> scores, std::span<const int> labels,
                                double threshold) {
  check_inputs(scores, labels);
  MetricsReport r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++r.tp;
    else if (pred) ++r.fp;
    else if (pos) ++r.fn;
    else ++r.tn;
  }
  r.recall = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.precision_undefined = r.tp + r.fp == 0;
  r.precision =
      r.precision_undefined ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                      : 0.0;
  return r;
}

double auc_pr(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) throw std::invalid_argument("auc_pr: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      tp += static_cast<std::size_t>(labels[order[i]]);
      ++seen;
      ++i;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

MetricsReport evaluate(std::span<const double> scores, std::span<const int> labels,
                       double threshold) {
  MetricsReport r = confusion_metrics(scores, labels, threshold);
  if (r.tp + r.fn > 0) r.auc_pr = auc_pr(scores, labels);
  return r;
}

void SplitMasks::validate(std::size_t n) const {
  std::vector<bool> seen(n, false);
  for (const auto* part : {&train, &validation, &test}) {
    for (std::size_t i : *part) {
      if (i >= n) throw std::invalid_argument("split index out of range");
      if (seen[i]) throw std::invalid_argument("split sets overlap");
      seen[i] = true;
    }
  }
}

SplitMasks split_examples(std::span<const int> labels, std::array<double, 3> proportions,
                          std::uint64_t seed, bool stratified) {
  if (labels.size() < 3) throw DataError("split_examples: need at least 3 examples");
  double total = 0.0;
  for (double p : proportions) {
    if (p < 0.0) throw ConfigError("split proportions must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split proportions must sum to 1");

  std::vector<std::vector<std::size_t>> groups(stratified ? 2 : 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[stratified ? static_cast<std::size_t>(labels[i] == 1) : 0].push_back(i);
  }

  std::mt19937_64 rng(seed);
  SplitMasks out;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    const auto m = static_cast<double>(g.size());
    auto n_train = static_cast<std::size_t>(std::llround(proportions[0] * m));
    auto n_val = static_cast<std::size_t>(std::llround(proportions[1] * m));
    n_train = std::min(n_train, g.size());
    n_val = std::min(n_val, g.size() - n_train);
    out.train.insert(out.train.end(), g.begin(), g.begin() + n_train);
    out.validation.insert(out.validation.end(), g.begin() + n_train, g.begin() + n_train + n_val);
    out.test.insert(out.test.end(), g.begin() + n_train + n_val, g.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::string to_key_value(const MetricsReport& r) {
  std::ostringstream out;
  out << "recall = " << io::format_double(r.recall) << '\n'
      << "precision = " << io::format_double(r.precision) << '\n'
      << "precision_undefined = " << (r.precision_undefined ? "true" : "false") << '\n'
      << "f1 = " << io::format_double(r.f1) << '\n'
      << "auc_pr = " << (r.auc_pr ? io::format_double(*r.auc_pr) : "nan") << '\n'
      << "threshold = " << io::format_double(r.threshold) << '\n'
      << "tp = " << r.tp << '\n'
      << "fp = " << r.fp << '\n'
      << "tn = " << r.tn << '\n'
      << "fn = " << r.fn << '\n';
  return out.str();
}

std::string csv_header() { return "recall,precision,f1,auc_pr,threshold,tp,fp,tn,fn"; }

std::string to_csv_row(const MetricsReport& r) {
  std::ostringstream out;
  out << io::format_double(r.recall) << ',' << io::format_double(r.precision) << ','
      << io::format_double(r.f1) << ',' << (r.auc_pr ? io::format_double(*r.auc_pr) : "") << ','
      << io::format_double(r.threshold) << ',' << r.tp << ',' << r.fp << ',' << r.tn << ','
      << r.fn;
  return out.str();
}

}  // namespace rdgcn::eval
