#pragma once

// Independent reference implementations used by the tests. Nothing here goes
// through CompiledClause or the kb's positional index.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rdgcn/grounding.hpp"
#include "rdgcn/kb.hpp"
#include "rdgcn/matrix.hpp"

namespace oracle {

using rdgcn::grounding::Clause;
using rdgcn::kb::Atom;
using rdgcn::kb::KnowledgeBase;
using rdgcn::kb::Term;

/// Materializes every assignment of the non-head body variables over the full
/// typed domains and checks each grounded body fact by fact.
inline std::uint64_t brute_force_count(const Clause& clause, const Atom& target,
                                       const KnowledgeBase& kb) {
  rdgcn::kb::Substitution base;
  for (std::size_t i = 0; i < clause.head.args.size(); ++i) {
    base[clause.head.args[i].name] = target.args[i].name;
  }
  std::vector<std::string> free_vars;
  std::map<std::string, std::vector<std::string>> domains;
  for (const Atom& lit : clause.body) {
    const auto& s = kb.schema(lit.predicate);
    for (std::size_t i = 0; i < lit.args.size(); ++i) {
      const Term& t = lit.args[i];
      if (!t.is_variable() || base.contains(t.name) || domains.contains(t.name)) continue;
      const auto consts = kb.constants_of_type(s.arg_types[i]);
      domains[t.name] = {consts.begin(), consts.end()};
      free_vars.push_back(t.name);
    }
  }

  std::uint64_t count = 0;
  std::vector<std::size_t> pick(free_vars.size(), 0);
  for (const auto& v : free_vars) {
    if (domains[v].empty()) return 0;
  }
  while (true) {
    auto theta = base;
    for (std::size_t k = 0; k < free_vars.size(); ++k) {
      theta[free_vars[k]] = domains[free_vars[k]][pick[k]];
    }
    bool ok = true;
    for (const Atom& lit : clause.body) {
      if (!kb.contains(rdgcn::kb::apply_substitution(lit, theta))) {
        ok = false;
        break;
      }
    }
    if (ok) ++count;
    std::size_t k = free_vars.size();
    while (k > 0) {
      --k;
      if (++pick[k] < domains[free_vars[k]].size()) break;
      pick[k] = 0;
      if (k == 0) return count;
    }
    if (free_vars.empty()) return count;
  }
}

struct RandomInstance {
  KnowledgeBase kb;
  Clause clause;
  std::vector<Atom> targets;
};

/// Up to 3 types with at most 6 constants, up to 3 body predicates, a clause of
/// at most 3 literals mixing head variables, free variables and constants.
inline RandomInstance random_instance(std::mt19937_64& rng) {
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  RandomInstance inst;
  const int n_types = uniform(1, 3);
  std::vector<std::string> types;
  for (int t = 0; t < n_types; ++t) types.push_back("t" + std::to_string(t));
  auto pick_type = [&] { return types[static_cast<std::size_t>(uniform(0, n_types - 1))]; };

  std::vector<rdgcn::kb::PredicateSchema> preds;
  const int n_preds = uniform(1, 3);
  for (int p = 0; p < n_preds; ++p) {
    rdgcn::kb::PredicateSchema s{"P" + std::to_string(p), {}};
    const int arity = uniform(1, 3);
    for (int a = 0; a < arity; ++a) s.arg_types.push_back(pick_type());
    preds.push_back(s);
    inst.kb.add_schema(s);
  }
  rdgcn::kb::PredicateSchema target{"Target", {}};
  const int target_arity = uniform(1, 2);
  for (int a = 0; a < target_arity; ++a) target.arg_types.push_back(pick_type());
  inst.kb.add_schema(target);

  std::map<std::string, std::vector<std::string>> consts;
  for (const auto& t : inst.kb.types()) {
    const int n = uniform(1, 6);
    for (int c = 0; c < n; ++c) {
      consts[t].push_back(t + "c" + std::to_string(c));
      inst.kb.declare_constant(t, consts[t].back());
    }
  }
  auto pick_const = [&](const std::string& t) {
    const auto& v = consts[t];
    return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
  };
  for (const auto& s : preds) {
    const int n_facts = uniform(0, 20);
    for (int f = 0; f < n_facts; ++f) {
      Atom a{s.name, {}};
      for (const auto& t : s.arg_types) a.args.push_back(Term::constant(pick_const(t)));
      inst.kb.add_fact(a);
    }
  }

  inst.clause.head = Atom{target.name, {}};
  for (int a = 0; a < target_arity; ++a) {
    inst.clause.head.args.push_back(Term::variable("h" + std::to_string(a)));
  }
  const int body_len = uniform(0, 3);
  for (int l = 0; l < body_len; ++l) {
    const auto& s = preds[static_cast<std::size_t>(uniform(0, n_preds - 1))];
    Atom lit{s.name, {}};
    for (const auto& t : s.arg_types) {
      std::vector<Term> options;
      for (int a = 0; a < target_arity; ++a) {
        if (target.arg_types[static_cast<std::size_t>(a)] == t) {
          options.push_back(Term::variable("h" + std::to_string(a)));
        }
      }
      // free variables are named by type so each has a single type
      options.push_back(Term::variable(t + "x"));
      options.push_back(Term::variable(t + "y"));
      options.push_back(Term::constant(pick_const(t)));
      lit.args.push_back(options[static_cast<std::size_t>(uniform(0, static_cast<int>(options.size()) - 1))]);
    }
    inst.clause.body.push_back(lit);
  }

  for (int k = 0; k < 4; ++k) {
    Atom a{target.name, {}};
    for (const auto& t : target.arg_types) a.args.push_back(Term::constant(pick_const(t)));
    inst.targets.push_back(a);
  }
  return inst;
}

/// Direct per-pair distance, no norm expansion.
inline double direct_euclidean(const rdgcn::Matrix& x, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const double d = x(i, c) - x(j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

inline rdgcn::Matrix random_counts(std::mt19937_64& rng, std::size_t n, std::size_t k,
                                   int max_count = 6) {
  std::uniform_int_distribution<int> dist(0, max_count);
  rdgcn::Matrix x(n, k);
  for (double& v : x.data()) v = dist(rng);
  return x;
}

inline rdgcn::Matrix random_symmetric_nonneg(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  rdgcn::Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = dist(rng);
  }
  return a;
}

/// Largest |eigenvalue| of a symmetric matrix by power iteration.
inline double spectral_radius(const rdgcn::Matrix& m, int iters = 500) {
  const std::size_t n = m.rows();
  std::vector<double> v(n, 1.0), w(n);
  for (std::size_t i = 0; i < n; ++i) v[i] += 0.01 * static_cast<double>(i);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) w[i] += m(i, j) * v[j];
      norm += w[i] * w[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    double vv = 0.0;
    for (double x : v) vv += x * x;
    lambda = norm / std::sqrt(vv);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
  }
  return lambda;
}

}  // namespace oracle
