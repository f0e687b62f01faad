#include "rdgcn/rule_learn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "rdgcn/error.hpp"
#include "syntax.hpp"

namespace rdgcn::rules {

namespace {

constexpr double kEps = 1e-12;

/// Variable -> type, from the first position each variable occupies.
std::map<std::string, std::string> variable_types(const KnowledgeBase& kb, const Clause& c) {
  std::map<std::string, std::string> out;
  auto note = [&](const Atom& a) {
    const auto& s = kb.schema(a.predicate);
    for (std::size_t i = 0; i < a.args.size(); ++i) {
      if (a.args[i].is_variable()) out.try_emplace(a.args[i].name, s.arg_types[i]);
    }
  };
  note(c.head);
  for (const auto& lit : c.body) note(lit);
  return out;
}

std::string fresh_name(const std::string& type, const std::set<std::string>& taken) {
  for (std::size_t i = 1;; ++i) {
    std::string name = type + std::to_string(i);
    if (!taken.contains(name)) return name;
  }
}

bool introduces_fresh(const Atom& lit, const std::map<std::string, std::string>& known) {
  return std::any_of(lit.args.begin(), lit.args.end(), [&](const kb::Term& t) {
    return t.is_variable() && !known.contains(t.name);
  });
}

struct Split {
  double score = 0.0;
  bool admissible = false;
  std::vector<bool> left;
};

/// Partition of `examples` by whether head :- body has a satisfied grounding.
std::vector<bool> partition(const KnowledgeBase& kb, const Atom& head,
                            const std::vector<Atom>& body,
                            std::span<const WeightedExample> examples) {
  const grounding::CompiledClause compiled(Clause{head, body, {}}, kb);
  std::vector<bool> left(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    left[i] = compiled.covers(examples[i].example.atom);
  }
  return left;
}

double weighted_mean(std::span<const WeightedExample> ex, const std::vector<bool>* mask,
                     bool side) {
  double wsum = 0.0, vsum = 0.0;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    if (mask && (*mask)[i] != side) continue;
    wsum += ex[i].weight;
    vsum += ex[i].weight * ex[i].value;
  }
  return wsum > 0.0 ? vsum / wsum : 0.0;
}

}  // namespace

void LearnConfig::validate() const {
  if (num_rules < 1) throw ConfigError("learn: num_rules must be >= 1");
  if (max_body_length < 1) throw ConfigError("learn: max_body_length must be >= 1");
  if (beam_width < 1) throw ConfigError("learn: beam_width must be >= 1");
  if (min_examples_per_leaf < 1) throw ConfigError("learn: min_examples_per_leaf must be >= 1");
  if (!(covering_discount >= 0.0 && covering_discount <= 1.0)) {
    throw ConfigError("learn: covering_discount must be in [0,1]");
  }
  if (!(min_gain >= 0.0)) throw ConfigError("learn: min_gain must be >= 0");
  if (!(reference_ratio > 0.0)) throw ConfigError("learn: reference_ratio must be > 0");
}

Atom make_head(const kb::PredicateSchema& target) {
  Atom head{target.name, {}};
  std::map<std::string, std::size_t> per_type;
  for (const auto& type : target.arg_types) {
    head.args.push_back(kb::Term::variable(type + std::to_string(++per_type[type])));
  }
  return head;
}

std::vector<Atom> candidate_literals(const KnowledgeBase& kb, const Clause& state,
                                     std::size_t max_constants) {
  const auto known = variable_types(kb, state);
  std::set<std::string> taken;
  for (const auto& [name, _] : known) taken.insert(name);

  std::set<Atom> out;
  for (const auto& s : kb.schemas()) {
    if (s.name == state.head.predicate) continue;

    // Options per slot: existing variables, a fresh variable, small-domain constants.
    struct Option {
      kb::Term term;
      bool existing = false;
      bool fresh = false;
    };
    std::vector<std::vector<Option>> options(s.arity());
    for (std::size_t i = 0; i < s.arity(); ++i) {
      const std::string& type = s.arg_types[i];
      for (const auto& [name, vtype] : known) {
        if (vtype == type) options[i].push_back({kb::Term::variable(name), true, false});
      }
      options[i].push_back({kb::Term::variable(type), false, true});  // renamed below
      const auto dom = kb.domain(type);
      if (dom.size() <= max_constants) {
        for (auto id : dom) options[i].push_back({kb::Term::constant(kb.constant_name(id))});
      }
    }

    std::vector<std::size_t> pick(s.arity(), 0);
    while (true) {
      bool connected = false;
      for (std::size_t i = 0; i < s.arity(); ++i) connected |= options[i][pick[i]].existing;
      if (connected) {
        Atom lit{s.name, {}};
        std::set<std::string> used = taken;
        for (std::size_t i = 0; i < s.arity(); ++i) {
          const Option& o = options[i][pick[i]];
          if (o.fresh) {
            std::string name = fresh_name(s.arg_types[i], used);
            used.insert(name);
            lit.args.push_back(kb::Term::variable(std::move(name)));
          } else {
            lit.args.push_back(o.term);
          }
        }
        if (std::find(state.body.begin(), state.body.end(), lit) == state.body.end()) {
          out.insert(std::move(lit));
        }
      }
      std::size_t k = s.arity();
      while (k > 0) {
        --k;
        if (++pick[k] < options[k].size()) break;
        pick[k] = 0;
      }
      if (k == 0 && pick[0] == 0) break;
    }
  }

  std::vector<Atom> sorted(out.begin(), out.end());
  std::sort(sorted.begin(), sorted.end(), [](const Atom& a, const Atom& b) {
    return kb::format_atom(a) < kb::format_atom(b);
  });
  return sorted;
}

double node_squared_error(std::span<const WeightedExample> examples) {
  return squared_error_score(examples, std::vector<bool>(examples.size(), true));
}

double squared_error_score(std::span<const WeightedExample> examples,
                           const std::vector<bool>& goes_left) {
  if (examples.empty()) throw std::invalid_argument("squared_error_score: no examples");
  if (goes_left.size() != examples.size()) {
    throw std::invalid_argument("squared_error_score: partition size mismatch");
  }
  double total = 0.0;
  for (int side = 0; side < 2; ++side) {
    const bool want = side == 0;
    double wsum = 0.0, vsum = 0.0;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const bool left = goes_left[i];
      if (left != want) continue;
      wsum += examples[i].weight;
      vsum += examples[i].weight * examples[i].value;
    }
    if (wsum <= 0.0) continue;
    const double mean = vsum / wsum;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const bool left = goes_left[i];
      if (left != want) continue;
      const double d = examples[i].value - mean;
      total += examples[i].weight * d * d;
    }
  }
  return total;
}

// --- tree induction --------------------------------------------------------

namespace {

class TreeLearner {
 public:
  TreeLearner(const KnowledgeBase& kb, const LearnConfig& cfg, Atom head)
      : kb_(kb), cfg_(cfg), head_(std::move(head)) {}

  Split evaluate(const std::vector<Atom>& body, std::span<const WeightedExample> ex) const {
    Split s;
    s.left = partition(kb_, head_, body, ex);
    s.score = squared_error_score(ex, s.left);

    std::size_t class_left = 0;
    bool any_right = false;
    for (std::size_t i = 0; i < ex.size(); ++i) {
      if (s.left[i] && ex[i].value >= 0.5) ++class_left;
      any_right |= !s.left[i];
    }
    const bool denser_left =
        !any_right || weighted_mean(ex, &s.left, true) >= weighted_mean(ex, &s.left, false);
    s.admissible = class_left >= cfg_.min_examples_per_leaf && denser_left;
    return s;
  }

  const KnowledgeBase& kb_;
  const LearnConfig& cfg_;
  Atom head_;
};

struct SpineStep {
  Atom test;
  double gain = 0.0;
  double right_value = 0.0;
};

}  // namespace

RelationalTree learn_tree(const KnowledgeBase& kb, std::span<const WeightedExample> examples,
                          const LearnConfig& config) {
  config.validate();
  if (examples.empty()) throw std::invalid_argument("learn_tree: no examples");
  const std::string& target = examples.front().example.atom.predicate;
  for (const auto& e : examples) {
    if (e.example.atom.predicate != target) {
      throw std::invalid_argument("learn_tree: examples mix target predicates");
    }
  }

  TreeLearner learner(kb, config, make_head(kb.schema(target)));
  const double root_error = node_squared_error(examples);
  const double threshold = std::max(config.min_gain * root_error, kEps);

  std::vector<WeightedExample> active(examples.begin(), examples.end());
  std::vector<Atom> body;
  std::vector<SpineStep> spine;

  while (body.size() < config.max_body_length) {
    const double parent_error = node_squared_error(active);
    if (parent_error <= kEps) break;

    Clause state{learner.head_, body, {}};
    const auto known = variable_types(kb, state);
    const auto candidates = candidate_literals(kb, state, config.max_constants_per_type);
    if (candidates.empty()) break;

    struct Scored {
      std::size_t index;
      Split split;
      double effective;
    };
    std::vector<Scored> scored;
    scored.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto extended = body;
      extended.push_back(candidates[i]);
      Split s = learner.evaluate(extended, active);
      const double eff = s.admissible ? s.score : parent_error;
      scored.push_back({i, std::move(s), eff});
    }

    // Lookahead set: the beam_width best one-step candidates, plus the
    // beam_width best candidates that introduce a fresh variable.
    if (body.size() + 2 <= config.max_body_length) {
      std::vector<std::size_t> order(scored.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scored[a].effective < scored[b].effective;
      });
      std::vector<std::size_t> lookahead;
      std::size_t plain = 0, bridging = 0;
      for (std::size_t i : order) {
        const bool fresh = introduces_fresh(candidates[i], known);
        if (plain < config.beam_width) {
          lookahead.push_back(i);
          ++plain;
          if (fresh) ++bridging;
        } else if (fresh && bridging < config.beam_width) {
          lookahead.push_back(i);
          ++bridging;
        }
      }
      for (std::size_t i : lookahead) {
        if (!introduces_fresh(candidates[i], known)) continue;
        if (!scored[i].split.admissible) continue;
        auto first = body;
        first.push_back(candidates[i]);
        const auto first_known = variable_types(kb, Clause{learner.head_, first, {}});
        for (const Atom& next : candidate_literals(kb, Clause{learner.head_, first, {}},
                                                   config.max_constants_per_type)) {
          const bool uses_fresh = std::any_of(next.args.begin(), next.args.end(), [&](const auto& t) {
            return t.is_variable() && first_known.contains(t.name) && !known.contains(t.name);
          });
          if (!uses_fresh) continue;
          auto second = first;
          second.push_back(next);
          Split s = learner.evaluate(second, active);
          if (s.admissible) scored[i].effective = std::min(scored[i].effective, s.score);
        }
      }
    }

    // On equal scores a literal that earns its score directly beats one that
    // only earns it through lookahead, so bridging literals are not stacked.
    auto direct = [](const Scored& s) { return s.split.admissible && s.split.score <= s.effective + kEps; };
    const Scored* best = nullptr;
    for (const auto& s : scored) {
      if (!best || s.effective < best->effective - kEps ||
          (s.effective <= best->effective + kEps && direct(s) && !direct(*best))) {
        best = &s;
      }
    }
    if (!best || !best->split.admissible || best->effective > parent_error - threshold) break;

    std::vector<WeightedExample> left, right;
    for (std::size_t i = 0; i < active.size(); ++i) {
      (best->split.left[i] ? left : right).push_back(active[i]);
    }
    SpineStep step;
    step.test = candidates[best->index];
    step.gain = parent_error - best->split.score;
    step.right_value = right.empty() ? weighted_mean(active, nullptr, true)
                                     : weighted_mean(right, nullptr, true);
    body.push_back(step.test);
    spine.push_back(std::move(step));
    active = std::move(left);
  }

  // A bridging literal accepted for its lookahead score has no gain of its
  // own; drop any that ended up last on the spine.
  std::vector<WeightedExample> final_left(examples.begin(), examples.end());
  while (!spine.empty() && spine.back().gain < threshold) spine.pop_back();
  {
    std::vector<Atom> kept;
    for (const auto& s : spine) kept.push_back(s.test);
    if (!kept.empty()) {
      const auto mask = partition(kb, learner.head_, kept, examples);
      std::vector<WeightedExample> covered;
      for (std::size_t i = 0; i < examples.size(); ++i) {
        if (mask[i]) covered.push_back(examples[i]);
      }
      final_left = std::move(covered);
    }
  }

  RelationalTree tree;
  tree.head = learner.head_;
  for (std::size_t d = 0; d < spine.size(); ++d) {
    RelationalTree::Node node;
    node.test = spine[d].test;
    node.depth = d;
    tree.nodes.push_back(std::move(node));
  }
  const int internal = static_cast<int>(tree.nodes.size());
  for (int d = 0; d < internal; ++d) {
    RelationalTree::Node right;
    right.depth = static_cast<std::size_t>(d) + 1;
    right.value = spine[static_cast<std::size_t>(d)].right_value;
    tree.nodes[static_cast<std::size_t>(d)].right = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(right);
  }
  RelationalTree::Node leaf;
  leaf.depth = spine.size();
  leaf.value = final_left.empty() ? 0.0 : weighted_mean(final_left, nullptr, true);
  const int leaf_index = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(leaf);
  for (int d = 0; d < internal; ++d) {
    tree.nodes[static_cast<std::size_t>(d)].left = d + 1 < internal ? d + 1 : leaf_index;
  }
  return tree;
}

std::vector<Atom> RelationalTree::left_spine() const {
  std::vector<Atom> out;
  int at = nodes.empty() ? -1 : 0;
  while (at >= 0 && !nodes[static_cast<std::size_t>(at)].is_leaf()) {
    out.push_back(*nodes[static_cast<std::size_t>(at)].test);
    at = nodes[static_cast<std::size_t>(at)].left;
  }
  return out;
}

std::vector<int> RelationalTree::route(const Atom& target, const KnowledgeBase& kb) const {
  std::vector<int> path;
  std::vector<Atom> taken;
  int at = nodes.empty() ? -1 : 0;
  while (at >= 0) {
    path.push_back(at);
    const Node& n = nodes[static_cast<std::size_t>(at)];
    if (n.is_leaf()) break;
    auto candidate = taken;
    candidate.push_back(*n.test);
    if (grounding::CompiledClause(Clause{head, candidate, {}}, kb).covers(target)) {
      taken = std::move(candidate);
      at = n.left;
    } else {
      at = n.right;
    }
  }
  return path;
}

Clause extract_rule(const RelationalTree& tree, grounding::Provenance provenance) {
  Clause c{tree.head, tree.left_spine(), provenance};
  if (c.body.empty()) {
    spdlog::warn("{} tree {} has no tests; extracted rule has an empty body (constant feature)",
                 grounding::to_string(provenance.source), provenance.iteration);
  }
  return c;
}

// --- distances -------------------------------------------------------------

double lca_distance(const RelationalTree& tree, const TargetExample& e1, const TargetExample& e2,
                    double lambda, const KnowledgeBase& kb) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lca_distance: lambda must be > 0");
  const auto p1 = tree.route(e1.atom, kb);
  const auto p2 = tree.route(e2.atom, kb);
  std::size_t common = 0;
  while (common < p1.size() && common < p2.size() && p1[common] == p2[common]) ++common;
  if (common == 0) throw std::logic_error("lca_distance: routes share no root");
  const auto& lca = tree.nodes[static_cast<std::size_t>(p1[common - 1])];
  if (lca.is_leaf()) return 0.0;
  return std::exp(-lambda * static_cast<double>(lca.depth));
}

double combined_tree_distance(std::span<const RelationalTree> trees, std::span<const double> beta,
                              const TargetExample& l, const TargetExample& u, double lambda,
                              const KnowledgeBase& kb) {
  if (trees.size() != beta.size()) {
    throw std::invalid_argument("combined_tree_distance: |beta| != |trees|");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    d += beta[i] * lca_distance(trees[i], l, u, lambda, kb);
  }
  return d;
}

double one_class_score(std::span<const TargetExample> labeled, std::span<const double> alpha,
                       std::span<const RelationalTree> trees, std::span<const double> beta,
                       const TargetExample& u, double lambda, const KnowledgeBase& kb) {
  if (labeled.size() != alpha.size()) {
    throw std::invalid_argument("one_class_score: |alpha| != |labeled|");
  }
  double e = 0.0;
  for (std::size_t j = 0; j < labeled.size(); ++j) {
    e += alpha[j] * combined_tree_distance(trees, beta, labeled[j], u, lambda, kb);
  }
  return e;
}

DistanceParams DistanceParams::uniform(std::size_t trees, std::size_t examples, double lambda) {
  DistanceParams p;
  p.lambda = lambda;
  if (trees > 0) p.tree_weights.assign(trees, 1.0 / static_cast<double>(trees));
  if (examples > 0) p.example_weights.assign(examples, 1.0 / static_cast<double>(examples));
  return p;
}

void DistanceParams::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  auto simplex = [](const std::vector<double>& w, const char* what) {
    double sum = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + " must be >= 0");
      sum += x;
    }
    if (!w.empty() && std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument(std::string(what) + " must sum to 1");
    }
  };
  simplex(tree_weights, "tree weights");
  simplex(example_weights, "example weights");
}

// --- sequential covering ---------------------------------------------------

RuleSet learn_ruleset(const KnowledgeBase& kb, std::span<const TargetExample> examples,
                      const LearnConfig& config, Density source) {
  config.validate();
  if (examples.empty()) throw std::invalid_argument("learn_ruleset: no examples");
  for (const auto& e : examples) {
    if (e.label != examples.front().label) {
      throw std::invalid_argument("learn_ruleset: examples must share one label");
    }
  }
  const auto& schema = kb.schema(examples.front().atom.predicate);
  const auto reference = grounding::sample_negatives(kb, schema, examples, config.reference_ratio,
                                                     config.seed, config.symmetry);

  RuleSet out;
  out.source = source;
  std::vector<double> weights(examples.size(), 1.0);
  for (std::size_t iter = 0; iter < config.num_rules; ++iter) {
    std::vector<WeightedExample> train;
    train.reserve(examples.size() + reference.size());
    for (std::size_t i = 0; i < examples.size(); ++i) train.push_back({examples[i], 1.0, weights[i]});
    for (const auto& r : reference) train.push_back({r, 0.0, 1.0});

    RelationalTree tree = learn_tree(kb, train, config);
    Clause rule = extract_rule(tree, {source, iter});
    if (!out.rules.empty() && rule.same_rule(out.rules.back())) {
      spdlog::warn("{} rule learning repeated its previous rule at iteration {}; stopping early",
                   grounding::to_string(source), iter);
      break;
    }

    const grounding::CompiledClause compiled(rule, kb);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (compiled.covers(examples[i].atom)) weights[i] *= config.covering_discount;
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total > 0.0) {
      const double scale = static_cast<double>(examples.size()) / total;
      for (double& w : weights) w *= scale;
    }
    out.rules.push_back(std::move(rule));
    out.trees.push_back(std::move(tree));
  }
  return out;
}

// --- rule files ------------------------------------------------------------

void write_rules(std::ostream& out, std::span<const Clause> rules) {
  for (const auto& r : rules) {
    out << grounding::format_clause(r) << " % source=" << grounding::to_string(r.provenance.source)
        << " iter=" << r.provenance.iteration << "\n";
  }
}

std::vector<Clause> parse_rules(std::string_view text, const KnowledgeBase& kb) {
  using kb::detail::Cursor;
  using kb::detail::TermMode;
  std::vector<Clause> out;
  kb::detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    Cursor cur(line, line_no);
    if (cur.at_end()) return;
    Clause c;
    c.head = cur.atom(TermMode::Rule).atom;
    if (!cur.consume(":-")) cur.fail("expected ':-'");
    if (!cur.consume("true")) {
      do {
        c.body.push_back(cur.atom(TermMode::Rule).atom);
      } while (cur.consume(','));
    }
    cur.expect('.');
    const std::string_view comment = cur.comment();
    if (!cur.at_end()) cur.fail("unexpected trailing input after '.'");

    // `source=<positive|negative> iter=<n>` in the trailing comment.
    auto field = [&](std::string_view key) -> std::string {
      const auto at = comment.find(key);
      if (at == std::string_view::npos) return {};
      auto rest = comment.substr(at + key.size());
      return std::string(rest.substr(0, rest.find_first_of(" \t")));
    };
    if (const auto src = field("source="); !src.empty()) {
      if (src == "positive") c.provenance.source = Density::Positive;
      else if (src == "negative") c.provenance.source = Density::Negative;
      else cur.fail("unknown rule source '" + src + "'");
    }
    if (const auto it = field("iter="); !it.empty()) {
      try {
        c.provenance.iteration = std::stoul(it);
      } catch (const std::exception&) {
        cur.fail("bad iteration '" + it + "'");
      }
    }
    c.validate(kb);
    out.push_back(std::move(c));
  });
  return out;
}

}  // namespace rdgcn::rules
