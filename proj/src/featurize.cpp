#include "rdgcn/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rdgcn/error.hpp"

namespace rdgcn::features {

const char* to_string(Metric m) noexcept {
  switch (m) {
    case Metric::Euclidean: return "euclidean";
    case Metric::Manhattan: return "manhattan";
    case Metric::Chebyshev: return "chebyshev";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  if (name == "euclidean" || name == "l2" || name == "L2") return Metric::Euclidean;
  if (name == "manhattan" || name == "l1" || name == "L1") return Metric::Manhattan;
  if (name == "chebyshev" || name == "linf" || name == "Linf") return Metric::Chebyshev;
  throw ConfigError("unknown metric: " + std::string(name) +
                    " (expected euclidean, manhattan or chebyshev)");
}

std::vector<grounding::Clause> ordered_rules(std::span<const rules::RuleSet> rulesets) {
  std::vector<grounding::Clause> out;
  for (auto pass : {grounding::Density::Positive, grounding::Density::Negative}) {
    for (const auto& rs : rulesets) {
      if (rs.source != pass) continue;
      out.insert(out.end(), rs.rules.begin(), rs.rules.end());
    }
  }
  return out;
}

RuleMatrix build_rule_matrix(std::span<const rules::RuleSet> rulesets,
                             std::span<const grounding::TargetExample> targets,
                             const kb::KnowledgeBase& kb, grounding::CountCap cap) {
  if (rulesets.empty()) throw std::invalid_argument("build_rule_matrix: no rule sets");
  const auto rules = ordered_rules(rulesets);
  return build_rule_matrix(std::span<const grounding::Clause>(rules), targets, kb, cap);
}

RuleMatrix build_rule_matrix(std::span<const grounding::Clause> rules,
                             std::span<const grounding::TargetExample> targets,
                             const kb::KnowledgeBase& kb, grounding::CountCap cap) {
  if (rules.empty()) throw std::invalid_argument("build_rule_matrix: no rules");
  if (!targets.empty()) {
    const auto& pred = targets.front().atom.predicate;
    for (const auto& t : targets) {
      if (t.atom.predicate != pred) {
        throw std::invalid_argument("build_rule_matrix: targets over mixed predicates");
      }
    }
  }

  std::vector<grounding::CompiledClause> compiled;
  compiled.reserve(rules.size());
  for (const auto& r : rules) compiled.emplace_back(r, kb);

  RuleMatrix out;
  out.values = Matrix(targets.size(), rules.size());
  for (std::size_t j = 0; j < rules.size(); ++j) out.col_ids.push_back("rule" + std::to_string(j));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    out.row_ids.push_back(kb::format_fact(targets[i].atom));
    for (std::size_t j = 0; j < compiled.size(); ++j) {
      out.values(i, j) = static_cast<double>(compiled[j].count(targets[i].atom, cap));
    }
  }
  return out;
}

void standardize_columns(Matrix& x) {
  const std::size_t n = x.rows();
  if (n == 0) return;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) x(i, j) = sd > 0.0 ? (x(i, j) - mean) / sd : 0.0;
  }
}

DistanceMatrix pairwise_distances(const Matrix& x, Metric metric) {
  if (x.rows() == 0 || x.cols() == 0) {
    throw std::invalid_argument("pairwise_distances: empty feature matrix");
  }
  const std::size_t n = x.rows();
  DistanceMatrix out{Matrix(n, n), metric};

  std::vector<double> sq(n, 0.0);
  if (metric == Metric::Euclidean) {
    for (std::size_t i = 0; i < n; ++i) {
      for (double v : x.row(i)) sq[i] += v * v;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      auto xj = x.row(j);
      double d = 0.0;
      switch (metric) {
        case Metric::Euclidean: {
          double dot = 0.0;
          for (std::size_t c = 0; c < xi.size(); ++c) dot += xi[c] * xj[c];
          d = std::sqrt(std::max(0.0, sq[i] + sq[j] - 2.0 * dot));
          break;
        }
        case Metric::Manhattan:
          for (std::size_t c = 0; c < xi.size(); ++c) d += std::abs(xi[c] - xj[c]);
          break;
        case Metric::Chebyshev:
          for (std::size_t c = 0; c < xi.size(); ++c) d = std::max(d, std::abs(xi[c] - xj[c]));
          break;
      }
      out.values(i, j) = d;
      out.values(j, i) = d;
    }
  }
  return out;
}

Adjacency adjacency_approximation(const DistanceMatrix& d) {
  const Matrix& m = d.values;
  const std::size_t n = m.rows();
  if (m.cols() != n) throw DataError("adjacency_approximation: distance matrix is not square");
  if (n < 2) throw DataError("adjacency_approximation: need at least 2 targets");

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sum += m(i, j);
  }
  const double t = sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
  if (!(t > 0.0)) {
    throw DataError(
        "adjacency_approximation: all targets have identical rule-count rows (threshold is 0); "
        "inspect the learned rules for degeneracy");
  }

  Adjacency out{Matrix(n, n), t};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.values(i, j) = 1.0 - std::min(m(i, j) / t, 1.0);
    }
  }
  return out;
}

PropagationMatrix normalize_propagation(const Adjacency& a, SelfLoops mode) {
  const Matrix& m = a.values;
  const std::size_t n = m.rows();
  if (m.cols() != n) throw DataError("normalize_propagation: matrix is not square");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (m(i, j) < 0.0) throw DataError("normalize_propagation: negative adjacency entry");
      if (std::abs(m(i, j) - m(j, i)) > 1e-12) {
        throw DataError("normalize_propagation: adjacency is not symmetric");
      }
    }
  }

  Matrix hat = m;
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == SelfLoops::Reset) hat(i, i) = 0.0;
    hat(i, i) += 1.0;
  }
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (double v : hat.row(i)) deg += v;
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  PropagationMatrix out{Matrix(n, n), a.threshold};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = hat(i, j) * inv_sqrt[i] * inv_sqrt[j];
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  return out;
}

}  // namespace rdgcn::features
