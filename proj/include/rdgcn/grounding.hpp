#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdgcn/kb.hpp"

namespace rdgcn::grounding {

using kb::Atom;
using kb::KnowledgeBase;
using kb::PredicateSchema;

enum class Density : std::uint8_t { Positive, Negative };
enum class Label : std::uint8_t { Negative = 0, Positive = 1 };

const char* to_string(Density d) noexcept;
const char* to_string(Label l) noexcept;

struct Provenance {
  Density source = Density::Positive;
  std::size_t iteration = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Head over the target predicate with distinct variables, plus a conjunctive
/// body. Body literals may introduce variables that the head does not mention.
struct Clause {
  Atom head;
  std::vector<Atom> body;
  Provenance provenance;

  /// Throws SchemaError when the head or a body literal does not fit `kb`.
  void validate(const KnowledgeBase& kb) const;
  /// Variables in first-occurrence order, head first.
  std::vector<std::string> variables() const;
  /// True when both clauses have the same head and body, ignoring provenance.
  bool same_rule(const Clause& other) const { return head == other.head && body == other.body; }
};

/// `Head(v1,v2) :- L1(...), L2(...).` with `true` standing for an empty body.
std::string format_clause(const Clause& clause);

struct TargetExample {
  Atom atom;
  Label label = Label::Positive;

  friend bool operator==(const TargetExample&, const TargetExample&) = default;
};

/// Optional saturation limit on enumerated groundings; must be >= 1 if set.
using CountCap = std::optional<std::uint64_t>;

/// Closed-world check: every atom must be present as a fact.
/// Throws std::invalid_argument on non-ground input.
bool body_satisfied(std::span<const Atom> ground_body, const KnowledgeBase& kb);

/// A clause resolved against a knowledge base's interned ids, reusable for
/// counting across many targets. Holds a reference to `kb`.
///
/// Counting is a backtracking join. At each step the not-yet-joined literal
/// with the fewest candidate facts under the current bindings is expanded;
/// every complete consistent substitution of the body variables counts once.
class CompiledClause {
 public:
  CompiledClause(const Clause& clause, const KnowledgeBase& kb);

  /// Number of distinct substitutions of the non-head variables that make the
  /// body true for `target`, saturating at `cap`. Throws std::invalid_argument
  /// when `target` is over another predicate and SchemaError when one of its
  /// constants is outside the typed domain of its head position.
  std::uint64_t count(const Atom& target, CountCap cap = {}) const;
  bool covers(const Atom& target) const { return count(target, 1) > 0; }

  std::size_t body_size() const noexcept { return literals_.size(); }

 private:
  static constexpr std::uint32_t kUnbound = 0xFFFFFFFFu;

  struct Arg {
    bool is_variable = false;
    std::uint32_t value = 0;  // variable slot or constant id
  };
  struct Literal {
    kb::PredId predicate = 0;
    std::vector<Arg> args;
  };

  std::uint64_t search(std::vector<std::uint32_t>& bindings, std::vector<bool>& joined,
                       std::size_t remaining, std::uint64_t budget) const;
  std::size_t candidate_estimate(const Literal& lit,
                                 const std::vector<std::uint32_t>& bindings) const;

  const KnowledgeBase* kb_;
  kb::PredicateSchema head_schema_;
  std::size_t slot_count_ = 0;
  std::vector<Literal> literals_;
  bool impossible_ = false;  // a body constant never occurs in the kb
};

std::uint64_t count_satisfied_groundings(const Clause& clause, const TargetExample& target,
                                         const KnowledgeBase& kb, CountCap cap = {});

/// How binary targets whose two arguments share a type treat argument order.
enum class SymmetryMode : std::uint8_t {
  ExcludeBothOrders,  // (a,b) positive excludes (b,a); draws are unordered pairs
  Ordered,            // (a,b) and (b,a) are unrelated tuples
};

/// Closed-world negatives: ceil(ratio * |positives|) distinct tuples drawn
/// uniformly from the typed cross-product of the target's argument domains,
/// excluding positives and (for same-typed binary targets) self-pairs.
/// Deterministic for a given seed. Throws DataError when too few tuples remain.
std::vector<TargetExample> sample_negatives(const KnowledgeBase& kb,
                                            const PredicateSchema& target_schema,
                                            std::span<const TargetExample> positives,
                                            double ratio, std::uint64_t seed,
                                            SymmetryMode symmetry = SymmetryMode::ExcludeBothOrders);

}  // namespace rdgcn::grounding
