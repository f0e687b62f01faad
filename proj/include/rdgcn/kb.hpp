#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rdgcn::kb {

using ConstId = std::uint32_t;
using PredId = std::uint32_t;

struct PredicateSchema {
  std::string name;
  std::vector<std::string> arg_types;

  std::size_t arity() const noexcept { return arg_types.size(); }
  friend bool operator==(const PredicateSchema&, const PredicateSchema&) = default;
};

/// A constant or a logical variable. The two namespaces are told apart by the
/// tag; the spelling of the name carries no meaning.
struct Term {
  enum class Kind : std::uint8_t { Constant, Variable };

  Kind kind = Kind::Constant;
  std::string name;

  static Term constant(std::string name) { return {Kind::Constant, std::move(name)}; }
  static Term variable(std::string name) { return {Kind::Variable, std::move(name)}; }

  bool is_variable() const noexcept { return kind == Kind::Variable; }
  bool is_constant() const noexcept { return kind == Kind::Constant; }

  auto operator<=>(const Term&) const = default;
};

struct Atom {
  std::string predicate;
  std::vector<Term> args;

  bool is_ground() const noexcept;
  auto operator<=>(const Atom&) const = default;
};

/// A ground atom. Construction rejects atoms containing variables.
class Fact {
 public:
  explicit Fact(Atom atom);

  const Atom& atom() const noexcept { return atom_; }
  const std::string& predicate() const noexcept { return atom_.predicate; }

  auto operator<=>(const Fact&) const = default;

 private:
  Atom atom_;
};

/// Variable name -> constant name.
using Substitution = std::map<std::string, std::string>;

/// One-sided matching of `pattern` against a ground fact, extending `base`.
/// Returns the minimal extension, or nothing when a binding conflicts with
/// `base` or a constant in `pattern` differs from the fact.
/// Throws std::invalid_argument when the predicates differ.
std::optional<Substitution> match_atom(const Atom& pattern, const Fact& fact,
                                       const Substitution& base = {});

Atom apply_substitution(const Atom& atom, const Substitution& theta);

/// Rule-file spelling: variables bare, constants always quoted.
std::string format_atom(const Atom& atom);
/// Fact-file spelling: constants bare when they are plain identifiers.
std::string format_fact(const Atom& atom);
std::string format_constant(std::string_view name);
bool is_plain_identifier(std::string_view name) noexcept;

/// Typed schemas plus an indexed, deduplicated store of ground facts.
///
/// Facts are stored per predicate as rows of interned constant ids, with a
/// membership set and an index on (argument position, constant). Per-type
/// domains record every constant seen at a position of that type, in
/// first-seen order.
class KnowledgeBase {
 public:
  /// Throws SchemaError on an empty arity or a duplicate name.
  void add_schema(PredicateSchema schema);
  bool has_schema(std::string_view name) const;
  /// Throws SchemaError for an unknown predicate.
  const PredicateSchema& schema(std::string_view name) const;
  const std::vector<PredicateSchema>& schemas() const noexcept { return schemas_; }

  /// Validates against the schema and inserts. Returns false for a duplicate.
  bool add_fact(const Atom& fact);
  /// Registers a constant into a declared type's domain without adding facts.
  void declare_constant(std::string_view type, std::string_view name);

  bool contains(const Atom& ground) const;
  std::size_t fact_count() const noexcept;
  std::size_t fact_count(std::string_view predicate) const;
  std::vector<Atom> facts(std::string_view predicate) const;
  std::vector<Atom> all_facts() const;

  bool has_type(std::string_view type) const;
  std::vector<std::string> types() const;
  /// Throws SchemaError when no schema declares `type`.
  std::set<std::string> constants_of_type(std::string_view type) const;

  // Interned access used by the grounding engine.
  std::optional<PredId> predicate_id(std::string_view name) const;
  std::optional<ConstId> constant_id(std::string_view name) const;
  const std::string& constant_name(ConstId id) const { return constant_names_.at(id); }
  std::size_t constant_count() const noexcept { return constant_names_.size(); }
  const PredicateSchema& schema(PredId id) const { return schemas_.at(id); }
  std::size_t row_count(PredId pred) const { return tables_.at(pred).rows; }
  std::span<const ConstId> row(PredId pred, std::size_t index) const;
  std::span<const std::uint32_t> rows_with(PredId pred, std::size_t position,
                                           ConstId constant) const;
  bool contains(PredId pred, std::span<const ConstId> tuple) const;
  /// Members of a type's domain in first-seen order. Throws for unknown types.
  std::span<const ConstId> domain(std::string_view type) const;
  bool in_domain(std::string_view type, ConstId constant) const;

 private:
  struct Table {
    std::size_t rows = 0;
    std::vector<ConstId> cells;  // row-major, arity ids per row
    std::unordered_set<std::string> keys;
    std::vector<std::unordered_map<ConstId, std::vector<std::uint32_t>>> by_position;
  };
  struct Domain {
    std::vector<ConstId> members;
    std::unordered_set<ConstId> lookup;
  };

  ConstId intern(std::string_view name);
  void register_in_domain(const std::string& type, ConstId id);
  const Domain& domain_entry(std::string_view type) const;
  static std::string tuple_key(std::span<const ConstId> tuple);

  std::vector<PredicateSchema> schemas_;
  std::unordered_map<std::string, PredId> predicate_ids_;
  std::vector<Table> tables_;
  std::vector<std::string> constant_names_;
  std::unordered_map<std::string, ConstId> constant_ids_;
  std::map<std::string, Domain, std::less<>> domains_;
};

}  // namespace rdgcn::kb
