#include "rdgcn/kb.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "rdgcn/error.hpp"

namespace rdgcn::kb {

bool Atom::is_ground() const noexcept {
  return std::all_of(args.begin(), args.end(),
                     [](const Term& t) { return t.is_constant(); });
}

Fact::Fact(Atom atom) : atom_(std::move(atom)) {
  if (!atom_.is_ground()) {
    throw std::invalid_argument("fact must be ground: " + format_atom(atom_));
  }
}

std::optional<Substitution> match_atom(const Atom& pattern, const Fact& fact,
                                       const Substitution& base) {
  const Atom& ground = fact.atom();
  if (pattern.predicate != ground.predicate) {
    throw std::invalid_argument("match_atom: predicate mismatch (" + pattern.predicate +
                                " vs " + ground.predicate + ")");
  }
  if (pattern.args.size() != ground.args.size()) return std::nullopt;

  Substitution theta = base;
  for (std::size_t i = 0; i < pattern.args.size(); ++i) {
    const Term& p = pattern.args[i];
    const std::string& value = ground.args[i].name;
    if (p.is_constant()) {
      if (p.name != value) return std::nullopt;
      continue;
    }
    auto [it, inserted] = theta.try_emplace(p.name, value);
    if (!inserted && it->second != value) return std::nullopt;
  }
  return theta;
}

Atom apply_substitution(const Atom& atom, const Substitution& theta) {
  Atom out = atom;
  for (Term& t : out.args) {
    if (!t.is_variable()) continue;
    if (auto it = theta.find(t.name); it != theta.end()) t = Term::constant(it->second);
  }
  return out;
}

bool is_plain_identifier(std::string_view name) noexcept {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

namespace {

std::string quote(std::string_view name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

template <typename TermFormatter>
std::string format_with(const Atom& atom, TermFormatter&& fmt) {
  std::string out = atom.predicate + "(";
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    if (i > 0) out += ",";
    out += fmt(atom.args[i]);
  }
  out += ")";
  return out;
}

}  // namespace

std::string format_constant(std::string_view name) {
  return is_plain_identifier(name) ? std::string(name) : quote(name);
}

std::string format_atom(const Atom& atom) {
  return format_with(atom, [](const Term& t) {
    return t.is_variable() ? t.name : quote(t.name);
  });
}

std::string format_fact(const Atom& atom) {
  return format_with(atom, [](const Term& t) {
    return t.is_variable() ? t.name : format_constant(t.name);
  });
}

// --- KnowledgeBase ---------------------------------------------------------

void KnowledgeBase::add_schema(PredicateSchema schema) {
  if (schema.arg_types.empty()) {
    throw SchemaError("predicate " + schema.name + " must have arity >= 1");
  }
  if (predicate_ids_.contains(schema.name)) {
    throw SchemaError("duplicate predicate schema: " + schema.name);
  }
  const auto id = static_cast<PredId>(schemas_.size());
  predicate_ids_.emplace(schema.name, id);
  for (const auto& type : schema.arg_types) domains_.try_emplace(type);
  Table table;
  table.by_position.resize(schema.arity());
  tables_.push_back(std::move(table));
  schemas_.push_back(std::move(schema));
}

bool KnowledgeBase::has_schema(std::string_view name) const {
  return predicate_ids_.contains(std::string(name));
}

const PredicateSchema& KnowledgeBase::schema(std::string_view name) const {
  auto id = predicate_id(name);
  if (!id) throw SchemaError("unknown predicate: " + std::string(name));
  return schemas_[*id];
}

std::optional<PredId> KnowledgeBase::predicate_id(std::string_view name) const {
  auto it = predicate_ids_.find(std::string(name));
  if (it == predicate_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<ConstId> KnowledgeBase::constant_id(std::string_view name) const {
  auto it = constant_ids_.find(std::string(name));
  if (it == constant_ids_.end()) return std::nullopt;
  return it->second;
}

ConstId KnowledgeBase::intern(std::string_view name) {
  auto [it, inserted] =
      constant_ids_.try_emplace(std::string(name), static_cast<ConstId>(constant_names_.size()));
  if (inserted) constant_names_.emplace_back(name);
  return it->second;
}

void KnowledgeBase::register_in_domain(const std::string& type, ConstId id) {
  Domain& d = domains_.at(type);
  if (d.lookup.insert(id).second) d.members.push_back(id);
}

std::string KnowledgeBase::tuple_key(std::span<const ConstId> tuple) {
  std::string key(tuple.size() * sizeof(ConstId), '\0');
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    for (std::size_t b = 0; b < sizeof(ConstId); ++b) {
      key[i * sizeof(ConstId) + b] = static_cast<char>((tuple[i] >> (8 * b)) & 0xFFu);
    }
  }
  return key;
}

bool KnowledgeBase::add_fact(const Atom& fact) {
  auto pid = predicate_id(fact.predicate);
  if (!pid) throw SchemaError("unknown predicate in fact: " + fact.predicate);
  const PredicateSchema& s = schemas_[*pid];
  if (fact.args.size() != s.arity()) {
    throw SchemaError("arity mismatch for " + s.name + ": expected " +
                      std::to_string(s.arity()) + ", got " + std::to_string(fact.args.size()));
  }
  if (!fact.is_ground()) throw SchemaError("fact is not ground: " + format_atom(fact));

  std::vector<ConstId> tuple;
  tuple.reserve(fact.args.size());
  for (std::size_t i = 0; i < fact.args.size(); ++i) {
    const ConstId id = intern(fact.args[i].name);
    register_in_domain(s.arg_types[i], id);
    tuple.push_back(id);
  }

  Table& t = tables_[*pid];
  if (!t.keys.insert(tuple_key(tuple)).second) return false;
  const auto row = static_cast<std::uint32_t>(t.rows++);
  t.cells.insert(t.cells.end(), tuple.begin(), tuple.end());
  for (std::size_t i = 0; i < tuple.size(); ++i) t.by_position[i][tuple[i]].push_back(row);
  return true;
}

void KnowledgeBase::declare_constant(std::string_view type, std::string_view name) {
  if (!has_type(type)) throw SchemaError("unknown type: " + std::string(type));
  register_in_domain(std::string(type), intern(name));
}

bool KnowledgeBase::contains(const Atom& ground) const {
  auto pid = predicate_id(ground.predicate);
  if (!pid || ground.args.size() != schemas_[*pid].arity()) return false;
  std::vector<ConstId> tuple;
  tuple.reserve(ground.args.size());
  for (const Term& t : ground.args) {
    if (!t.is_constant()) return false;
    auto id = constant_id(t.name);
    if (!id) return false;
    tuple.push_back(*id);
  }
  return contains(*pid, tuple);
}

bool KnowledgeBase::contains(PredId pred, std::span<const ConstId> tuple) const {
  return tables_.at(pred).keys.contains(tuple_key(tuple));
}

std::size_t KnowledgeBase::fact_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tables_) n += t.rows;
  return n;
}

std::size_t KnowledgeBase::fact_count(std::string_view predicate) const {
  auto pid = predicate_id(predicate);
  if (!pid) throw SchemaError("unknown predicate: " + std::string(predicate));
  return tables_[*pid].rows;
}

std::span<const ConstId> KnowledgeBase::row(PredId pred, std::size_t index) const {
  const Table& t = tables_.at(pred);
  const std::size_t arity = schemas_[pred].arity();
  return std::span<const ConstId>(t.cells).subspan(index * arity, arity);
}

std::span<const std::uint32_t> KnowledgeBase::rows_with(PredId pred, std::size_t position,
                                                        ConstId constant) const {
  const auto& index = tables_.at(pred).by_position.at(position);
  auto it = index.find(constant);
  if (it == index.end()) return {};
  return it->second;
}

std::vector<Atom> KnowledgeBase::facts(std::string_view predicate) const {
  auto pid = predicate_id(predicate);
  if (!pid) throw SchemaError("unknown predicate: " + std::string(predicate));
  std::vector<Atom> out;
  out.reserve(tables_[*pid].rows);
  for (std::size_t r = 0; r < tables_[*pid].rows; ++r) {
    Atom a{schemas_[*pid].name, {}};
    for (ConstId c : row(*pid, r)) a.args.push_back(Term::constant(constant_names_[c]));
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Atom> KnowledgeBase::all_facts() const {
  std::vector<Atom> out;
  for (const auto& s : schemas_) {
    auto part = facts(s.name);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

bool KnowledgeBase::has_type(std::string_view type) const { return domains_.contains(type); }

std::vector<std::string> KnowledgeBase::types() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : domains_) out.push_back(name);
  return out;
}

const KnowledgeBase::Domain& KnowledgeBase::domain_entry(std::string_view type) const {
  auto it = domains_.find(type);
  if (it == domains_.end()) throw SchemaError("unknown type: " + std::string(type));
  return it->second;
}

std::set<std::string> KnowledgeBase::constants_of_type(std::string_view type) const {
  std::set<std::string> out;
  for (ConstId id : domain_entry(type).members) out.insert(constant_names_[id]);
  return out;
}

std::span<const ConstId> KnowledgeBase::domain(std::string_view type) const {
  return domain_entry(type).members;
}

bool KnowledgeBase::in_domain(std::string_view type, ConstId constant) const {
  return domain_entry(type).lookup.contains(constant);
}

}  // namespace rdgcn::kb
