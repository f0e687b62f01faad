#include "rdgcn/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "rdgcn/error.hpp"

namespace rdgcn::grounding {

const char* to_string(Density d) noexcept {
  return d == Density::Positive ? "positive" : "negative";
}

const char* to_string(Label l) noexcept {
  return l == Label::Positive ? "positive" : "negative";
}

void Clause::validate(const KnowledgeBase& kb) const {
  const PredicateSchema& hs = kb.schema(head.predicate);
  if (head.args.size() != hs.arity()) {
    throw SchemaError("clause head arity mismatch for " + hs.name);
  }
  std::set<std::string> seen;
  for (const auto& t : head.args) {
    if (!t.is_variable()) throw SchemaError("clause head must contain only variables");
    if (!seen.insert(t.name).second) {
      throw SchemaError("clause head variables must be distinct: " + t.name);
    }
  }
  std::map<std::string, std::string> var_type;
  for (std::size_t i = 0; i < head.args.size(); ++i) var_type[head.args[i].name] = hs.arg_types[i];
  for (const Atom& lit : body) {
    const PredicateSchema& s = kb.schema(lit.predicate);
    if (lit.args.size() != s.arity()) {
      throw SchemaError("arity mismatch in clause body literal " + kb::format_atom(lit));
    }
    for (std::size_t i = 0; i < lit.args.size(); ++i) {
      if (!lit.args[i].is_variable()) continue;
      auto [it, fresh] = var_type.try_emplace(lit.args[i].name, s.arg_types[i]);
      if (!fresh && it->second != s.arg_types[i]) {
        throw SchemaError("variable " + lit.args[i].name + " used as both " + it->second +
                          " and " + s.arg_types[i]);
      }
    }
  }
}

std::vector<std::string> Clause::variables() const {
  std::vector<std::string> out;
  auto note = [&](const Atom& a) {
    for (const auto& t : a.args) {
      if (t.is_variable() && std::find(out.begin(), out.end(), t.name) == out.end()) {
        out.push_back(t.name);
      }
    }
  };
  note(head);
  for (const auto& lit : body) note(lit);
  return out;
}

std::string format_clause(const Clause& clause) {
  std::string out = kb::format_atom(clause.head) + " :- ";
  if (clause.body.empty()) return out + "true.";
  for (std::size_t i = 0; i < clause.body.size(); ++i) {
    if (i > 0) out += ", ";
    out += kb::format_atom(clause.body[i]);
  }
  return out + ".";
}

bool body_satisfied(std::span<const Atom> ground_body, const KnowledgeBase& kb) {
  for (const Atom& a : ground_body) {
    if (!a.is_ground()) {
      throw std::invalid_argument("body_satisfied: non-ground atom " + kb::format_atom(a));
    }
  }
  return std::all_of(ground_body.begin(), ground_body.end(),
                     [&](const Atom& a) { return kb.contains(a); });
}

// --- CompiledClause --------------------------------------------------------

CompiledClause::CompiledClause(const Clause& clause, const KnowledgeBase& kb)
    : kb_(&kb), head_schema_(kb.schema(clause.head.predicate)) {
  clause.validate(kb);

  std::unordered_map<std::string, std::uint32_t> slots;
  for (const auto& t : clause.head.args) {
    slots.emplace(t.name, static_cast<std::uint32_t>(slots.size()));
  }
  for (const Atom& lit : clause.body) {
    Literal compiled;
    compiled.predicate = *kb.predicate_id(lit.predicate);
    for (const auto& t : lit.args) {
      Arg arg;
      if (t.is_variable()) {
        arg.is_variable = true;
        auto [it, _] = slots.try_emplace(t.name, static_cast<std::uint32_t>(slots.size()));
        arg.value = it->second;
      } else if (auto id = kb.constant_id(t.name)) {
        arg.value = *id;
      } else {
        impossible_ = true;
      }
      compiled.args.push_back(arg);
    }
    literals_.push_back(std::move(compiled));
  }
  slot_count_ = slots.size();
}

std::size_t CompiledClause::candidate_estimate(const Literal& lit,
                                               const std::vector<std::uint32_t>& bindings) const {
  std::size_t best = kb_->row_count(lit.predicate);
  for (std::size_t pos = 0; pos < lit.args.size() && best > 0; ++pos) {
    const Arg& a = lit.args[pos];
    const std::uint32_t value = a.is_variable ? bindings[a.value] : a.value;
    if (value == kUnbound) continue;
    best = std::min(best, kb_->rows_with(lit.predicate, pos, value).size());
  }
  return best;
}

std::uint64_t CompiledClause::search(std::vector<std::uint32_t>& bindings,
                                     std::vector<bool>& joined, std::size_t remaining,
                                     std::uint64_t budget) const {
  if (remaining == 0) return 1;

  // Most selective literal first; ties keep body order.
  std::size_t pick = literals_.size();
  std::size_t pick_size = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < literals_.size(); ++i) {
    if (joined[i]) continue;
    const std::size_t est = candidate_estimate(literals_[i], bindings);
    if (est < pick_size) {
      pick = i;
      pick_size = est;
      if (est == 0) return 0;
    }
  }
  const Literal& lit = literals_[pick];
  const std::size_t arity = lit.args.size();

  std::vector<kb::ConstId> tuple(arity);
  bool ground = true;
  for (std::size_t pos = 0; pos < arity; ++pos) {
    const Arg& a = lit.args[pos];
    tuple[pos] = a.is_variable ? bindings[a.value] : a.value;
    ground = ground && tuple[pos] != kUnbound;
  }

  joined[pick] = true;
  std::uint64_t total = 0;
  if (ground) {
    if (kb_->contains(lit.predicate, tuple)) total = search(bindings, joined, remaining - 1, budget);
    joined[pick] = false;
    return total;
  }

  // Candidate rows: the shortest index list over bound positions, else all rows.
  std::span<const std::uint32_t> indexed;
  bool use_index = false;
  for (std::size_t pos = 0; pos < arity; ++pos) {
    if (tuple[pos] == kUnbound) continue;
    auto rows = kb_->rows_with(lit.predicate, pos, tuple[pos]);
    if (!use_index || rows.size() < indexed.size()) {
      indexed = rows;
      use_index = true;
    }
  }
  const std::size_t n = use_index ? indexed.size() : kb_->row_count(lit.predicate);

  std::vector<std::uint32_t> newly_bound;
  newly_bound.reserve(arity);
  for (std::size_t k = 0; k < n && total < budget; ++k) {
    const std::size_t r = use_index ? indexed[k] : k;
    auto row = kb_->row(lit.predicate, r);
    bool ok = true;
    for (std::size_t pos = 0; pos < arity && ok; ++pos) {
      const Arg& a = lit.args[pos];
      if (!a.is_variable) {
        ok = row[pos] == a.value;
      } else if (bindings[a.value] == kUnbound) {
        bindings[a.value] = row[pos];
        newly_bound.push_back(a.value);
      } else {
        ok = bindings[a.value] == row[pos];
      }
    }
    if (ok) total += search(bindings, joined, remaining - 1, budget - total);
    for (std::uint32_t slot : newly_bound) bindings[slot] = kUnbound;
    newly_bound.clear();
  }
  joined[pick] = false;
  return total;
}

std::uint64_t CompiledClause::count(const Atom& target, CountCap cap) const {
  if (cap && *cap < 1) throw std::invalid_argument("count cap must be >= 1");
  if (target.predicate != head_schema_.name) {
    throw std::invalid_argument("target " + kb::format_fact(target) +
                                " does not match clause head predicate " + head_schema_.name);
  }
  if (target.args.size() != head_schema_.arity() || !target.is_ground()) {
    throw std::invalid_argument("target must be a ground atom of the head's arity");
  }

  std::vector<std::uint32_t> bindings(slot_count_, kUnbound);
  for (std::size_t i = 0; i < target.args.size(); ++i) {
    const std::string& type = head_schema_.arg_types[i];
    auto id = kb_->constant_id(target.args[i].name);
    if (!id || !kb_->in_domain(type, *id)) {
      throw SchemaError("type mismatch: " + target.args[i].name + " is not a " + type +
                        " (argument " + std::to_string(i + 1) + " of " + head_schema_.name + ")");
    }
    bindings[i] = *id;
  }
  if (impossible_) return 0;

  const std::uint64_t budget = cap.value_or(std::numeric_limits<std::uint64_t>::max());
  std::vector<bool> joined(literals_.size(), false);
  return search(bindings, joined, literals_.size(), budget);
}

std::uint64_t count_satisfied_groundings(const Clause& clause, const TargetExample& target,
                                         const KnowledgeBase& kb, CountCap cap) {
  return CompiledClause(clause, kb).count(target.atom, cap);
}

// --- negative sampling -----------------------------------------------------

namespace {

using Tuple = std::vector<kb::ConstId>;

struct TupleHash {
  std::size_t operator()(const Tuple& t) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (auto v : t) h = (h ^ v) * 1099511628211ull;
    return h;
  }
};

}  // namespace

std::vector<TargetExample> sample_negatives(const KnowledgeBase& kb,
                                            const PredicateSchema& target_schema,
                                            std::span<const TargetExample> positives,
                                            double ratio, std::uint64_t seed,
                                            SymmetryMode symmetry) {
  if (!(ratio > 0.0)) throw std::invalid_argument("negative sampling ratio must be > 0");
  if (positives.empty()) throw std::invalid_argument("negative sampling needs positives");

  const std::size_t arity = target_schema.arity();
  std::vector<std::span<const kb::ConstId>> domains;
  for (const auto& type : target_schema.arg_types) domains.push_back(kb.domain(type));

  const bool pairwise = arity == 2 && target_schema.arg_types[0] == target_schema.arg_types[1];
  const bool unordered = pairwise && symmetry == SymmetryMode::ExcludeBothOrders;

  auto canonical = [&](Tuple t) {
    if (unordered && t[1] < t[0]) std::swap(t[0], t[1]);
    return t;
  };

  std::unordered_set<Tuple, TupleHash> excluded;
  for (const auto& p : positives) {
    if (p.atom.predicate != target_schema.name || p.atom.args.size() != arity) {
      throw std::invalid_argument("positive example is not a " + target_schema.name + " atom");
    }
    Tuple t(arity);
    bool in_space = true;
    for (std::size_t i = 0; i < arity && in_space; ++i) {
      auto id = kb.constant_id(p.atom.args[i].name);
      in_space = id && kb.in_domain(target_schema.arg_types[i], *id);
      if (in_space) t[i] = *id;
    }
    if (!in_space || (pairwise && t[0] == t[1])) continue;
    excluded.insert(canonical(std::move(t)));
  }

  // Size of the admissible tuple space, saturating well below overflow.
  long double space = 1.0L;
  for (const auto& d : domains) space *= static_cast<long double>(d.size());
  if (pairwise) {
    const auto m = static_cast<long double>(domains[0].size());
    space = unordered ? m * (m - 1) / 2 : m * (m - 1);
  }
  const long double available = space - static_cast<long double>(excluded.size());
  const auto wanted = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(positives.size())));
  if (static_cast<long double>(wanted) > available) {
    throw DataError("cannot sample " + std::to_string(wanted) + " negatives for " +
                    target_schema.name + ": only " +
                    std::to_string(static_cast<long long>(std::max(available, 0.0L))) +
                    " non-positive tuples exist");
  }

  std::mt19937_64 rng(seed);
  std::vector<Tuple> chosen;
  chosen.reserve(wanted);

  constexpr long double kEnumerateLimit = 4'000'000.0L;
  if (static_cast<long double>(wanted) * 2 > available && space <= kEnumerateLimit) {
    // Dense request: enumerate the admissible space and take a seeded prefix
    // of a partial Fisher-Yates shuffle.
    std::vector<Tuple> pool;
    Tuple t(arity);
    std::vector<std::size_t> idx(arity, 0);
    bool any_empty = std::any_of(domains.begin(), domains.end(),
                                 [](const auto& d) { return d.empty(); });
    while (!any_empty) {
      for (std::size_t i = 0; i < arity; ++i) t[i] = domains[i][idx[i]];
      const bool skip = pairwise && (unordered ? idx[0] >= idx[1] : t[0] == t[1]);
      if (!skip && !excluded.contains(canonical(t))) pool.push_back(t);
      std::size_t k = arity;
      while (k > 0) {
        --k;
        if (++idx[k] < domains[k].size()) break;
        idx[k] = 0;
        if (k == 0) any_empty = true;
      }
    }
    for (std::size_t i = 0; i < wanted; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      chosen.push_back(pool[i]);
    }
  } else {
    std::unordered_set<Tuple, TupleHash> drawn;
    std::vector<std::uniform_int_distribution<std::size_t>> pickers;
    for (const auto& d : domains) pickers.emplace_back(0, d.size() - 1);
    while (chosen.size() < wanted) {
      Tuple t(arity);
      for (std::size_t i = 0; i < arity; ++i) t[i] = domains[i][pickers[i](rng)];
      if (pairwise && t[0] == t[1]) continue;
      Tuple key = canonical(t);
      if (excluded.contains(key) || !drawn.insert(std::move(key)).second) continue;
      chosen.push_back(std::move(t));
    }
  }

  std::vector<TargetExample> out;
  out.reserve(chosen.size());
  for (const Tuple& t : chosen) {
    Atom a{target_schema.name, {}};
    for (auto id : t) a.args.push_back(kb::Term::constant(kb.constant_name(id)));
    out.push_back({std::move(a), Label::Negative});
  }
  return out;
}

}  // namespace rdgcn::grounding
