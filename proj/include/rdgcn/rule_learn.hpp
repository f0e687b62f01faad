#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rdgcn/grounding.hpp"
#include "rdgcn/kb.hpp"

namespace rdgcn::rules {

using grounding::Clause;
using grounding::Density;
using grounding::TargetExample;
using kb::Atom;
using kb::KnowledgeBase;

/// An example with a regression value in [0,1] and a nonnegative weight.
struct WeightedExample {
  TargetExample example;
  double value = 1.0;
  double weight = 1.0;
};

/// Binary first-order regression tree. Internal nodes test a literal that may
/// share variables with the tests above it on the true branch; left is the
/// true branch. Leaves carry the weighted mean value of the examples routed
/// there.
struct RelationalTree {
  struct Node {
    std::optional<Atom> test;  // empty for leaves
    int left = -1;
    int right = -1;
    double value = 0.0;
    std::size_t depth = 0;

    bool is_leaf() const noexcept { return !test.has_value(); }
  };

  Atom head;  // target predicate over the head variables
  std::vector<Node> nodes;  // nodes[0] is the root

  /// Tests along the all-true path from the root.
  std::vector<Atom> left_spine() const;
  /// Node indices from the root to the leaf `target` reaches. A node sends an
  /// example left iff the conjunction of the tests taken on the true branch so
  /// far, plus its own test, has at least one satisfied grounding.
  std::vector<int> route(const Atom& target, const KnowledgeBase& kb) const;
};

struct LearnConfig {
  std::size_t num_rules = 1;
  std::size_t max_body_length = 4;
  std::size_t beam_width = 5;
  std::size_t min_examples_per_leaf = 2;
  double covering_discount = 0.1;
  /// A literal is accepted only if it lowers the squared error by at least
  /// this fraction of the root's squared error.
  double min_gain = 0.05;
  /// Constant-grounded literal variants are generated for argument types with
  /// at most this many constants.
  std::size_t max_constants_per_type = 50;
  /// Size of the uniform reference sample (value 0) relative to the class.
  double reference_ratio = 1.0;
  grounding::SymmetryMode symmetry = grounding::SymmetryMode::ExcludeBothOrders;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Head atom `Target(type1, type2, ...)` with one variable per argument,
/// named after its type.
Atom make_head(const kb::PredicateSchema& target);

/// Refinements of `state`'s body: every non-target predicate with argument
/// slots filled by existing variables of matching type or fresh variables,
/// at least one slot an existing variable. Argument positions whose type has at
/// most `max_constants` constants also get one variant per constant. Literals
/// already in the body are skipped. Sorted by rule-file spelling.
std::vector<Atom> candidate_literals(const KnowledgeBase& kb, const Clause& state,
                                     std::size_t max_constants = 50);

/// Sum over both branches of sum_e w_e (y_e - mean_branch)^2, mean weighted.
/// Throws std::invalid_argument on empty input or mismatched sizes.
double squared_error_score(std::span<const WeightedExample> examples,
                           const std::vector<bool>& goes_left);
/// Squared error of the unsplit node.
double node_squared_error(std::span<const WeightedExample> examples);

/// Greedy top-down induction that only grows the true (left) branch; right
/// children are leaves. At each node all candidates are scored, and the
/// beam_width best candidates plus the beam_width best candidates that
/// introduce a fresh variable are also scored one literal ahead. Ties go to the
/// lexicographically smallest literal.
RelationalTree learn_tree(const KnowledgeBase& kb, std::span<const WeightedExample> examples,
                          const LearnConfig& config);

/// The left spine as a clause. A single-leaf tree gives an empty body (logged
/// as a warning: it is a constant feature).
Clause extract_rule(const RelationalTree& tree, grounding::Provenance provenance = {});

/// 0 when the deepest node shared by both routes is a leaf, otherwise
/// exp(-lambda * depth) of that node.
double lca_distance(const RelationalTree& tree, const TargetExample& e1,
                    const TargetExample& e2, double lambda, const KnowledgeBase& kb);

double combined_tree_distance(std::span<const RelationalTree> trees, std::span<const double> beta,
                              const TargetExample& l, const TargetExample& u, double lambda,
                              const KnowledgeBase& kb);

/// sum_j alpha_j * D(l_j, u): higher means u is less likely in the class.
double one_class_score(std::span<const TargetExample> labeled, std::span<const double> alpha,
                       std::span<const RelationalTree> trees, std::span<const double> beta,
                       const TargetExample& u, double lambda, const KnowledgeBase& kb);

/// lambda plus tree (beta) and example (alpha) weights on the simplex.
struct DistanceParams {
  double lambda = 1.0;
  std::vector<double> tree_weights;
  std::vector<double> example_weights;

  static DistanceParams uniform(std::size_t trees, std::size_t examples, double lambda = 1.0);
  void validate() const;
};

struct RuleSet {
  std::vector<Clause> rules;
  std::vector<RelationalTree> trees;  // trees[i] produced rules[i]
  Density source = Density::Positive;
};

/// Sequential covering over `config.num_rules` iterations on a one-class set.
/// The class (value 1) is contrasted against a seeded uniform reference sample
/// of the target's tuple space (value 0). After each tree, covered class
/// examples have their weight multiplied by covering_discount and the class
/// weights are renormalized. Stops early on a repeated consecutive rule.
RuleSet learn_ruleset(const KnowledgeBase& kb, std::span<const TargetExample> examples,
                      const LearnConfig& config, Density source);

/// One rule per line: `Head(a,b) :- L(...), ... . % source=positive iter=0`.
void write_rules(std::ostream& out, std::span<const Clause> rules);
/// Inverse of write_rules. Throws ParseError/SchemaError.
std::vector<Clause> parse_rules(std::string_view text, const KnowledgeBase& kb);

}  // namespace rdgcn::rules
