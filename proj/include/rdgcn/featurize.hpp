#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rdgcn/grounding.hpp"
#include "rdgcn/matrix.hpp"
#include "rdgcn/rule_learn.hpp"

namespace rdgcn::features {

/// n x k grounding counts; row i is targets[i], column j is rule j.
struct RuleMatrix {
  Matrix values;
  std::vector<std::string> row_ids;  // target atoms in fact spelling
  std::vector<std::string> col_ids;  // "rule0", "rule1", ...
};

enum class Metric : std::uint8_t { Euclidean, Manhattan, Chebyshev };

const char* to_string(Metric m) noexcept;
/// Accepts euclidean/l2, manhattan/l1, chebyshev/linf. Throws ConfigError.
Metric parse_metric(std::string_view name);

struct DistanceMatrix {
  Matrix values;
  Metric metric = Metric::Euclidean;
};

/// Thresholded similarity matrix in [0,1] with the threshold that produced it.
struct Adjacency {
  Matrix values;
  double threshold = 0.0;
};

enum class SelfLoops : std::uint8_t {
  Reset,    // diag := 0, then + I
  Literal,  // + I on top of the unit diagonal
};

struct PropagationMatrix {
  Matrix values;
  double threshold = 0.0;
};

/// Rules from every positive-density set first, then every negative-density
/// set, each group in the given order.
std::vector<grounding::Clause> ordered_rules(std::span<const rules::RuleSet> rulesets);

/// X[i][j] = count of satisfied groundings of rule j for target i.
RuleMatrix build_rule_matrix(std::span<const rules::RuleSet> rulesets,
                             std::span<const grounding::TargetExample> targets,
                             const kb::KnowledgeBase& kb, grounding::CountCap cap = {});
RuleMatrix build_rule_matrix(std::span<const grounding::Clause> rules,
                             std::span<const grounding::TargetExample> targets,
                             const kb::KnowledgeBase& kb, grounding::CountCap cap = {});

/// In-place per-column z-scaling; constant columns become 0.
void standardize_columns(Matrix& x);

/// Upper triangle computed and mirrored, diagonal exactly 0. The euclidean
/// metric uses the norm expansion with the radicand clamped at 0.
/// Throws std::invalid_argument on an empty matrix.
DistanceMatrix pairwise_distances(const Matrix& x, Metric metric);

/// t = mean of the strict upper triangle, A_ij = 1 - min(d_ij / t, 1).
/// Throws DataError when n < 2 or t == 0.
Adjacency adjacency_approximation(const DistanceMatrix& d);

/// N^-1/2 (A' + I) N^-1/2 where N_ii is the row sum of A' + I. A' is A with
/// the diagonal cleared in Reset mode. Throws DataError when A is not square,
/// has negative entries, or is asymmetric beyond 1e-12.
PropagationMatrix normalize_propagation(const Adjacency& a, SelfLoops mode = SelfLoops::Reset);

}  // namespace rdgcn::features
