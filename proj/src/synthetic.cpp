#include "rdgcn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rdgcn/error.hpp"
#include "rdgcn/parse.hpp"
#include "rdgcn/rule_learn.hpp"

namespace rdgcn::synthetic {

namespace {

using grounding::Clause;
using kb::Atom;
using kb::Term;

Atom pair_atom(const std::string& a, const std::string& b) {
  return Atom{"CoAuthor", {Term::constant(a), Term::constant(b)}};
}

std::string indexed(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

}  // namespace

void SyntheticSpec::validate() const {
  if (persons < 2) throw ConfigError("synth.persons must be at least 2");
  if (universities == 0 || topics == 0) throw ConfigError("synth entity counts must be positive");
  if (max_topics_per_person == 0 || max_topics_per_person > topics) {
    throw ConfigError("synth.max_topics_per_person must be in [1, synth.topics]");
  }
  if (planted_rules == 0 || planted_rules > 4) throw ConfigError("synth.planted_rules must be in [1, 4]");
  if (planted_rules >= 3 && topics < 3) throw ConfigError("planted rules 3 and 4 need at least 3 topics");
  if (positives == 0 || negatives == 0) throw ConfigError("synth example counts must be positive");
  if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("synth.noise must be in [0, 1)");
}

std::vector<Clause> planted_library(const kb::KnowledgeBase& kb) {
  const Atom head = rules::make_head(kb.schema("CoAuthor"));
  const Term p1 = head.args[0], p2 = head.args[1];
  const Term u = Term::variable("university1"), t = Term::variable("topic1");
  std::vector<Clause> lib{
      {head, {Atom{"Affiliation", {p1, u}}, Atom{"Affiliation", {p2, u}}}, {}},
      {head, {Atom{"ResearchTopic", {p1, t}}, Atom{"ResearchTopic", {p2, t}}}, {}},
      {head,
       {Atom{"ResearchTopic", {p1, Term::constant("topic0")}},
        Atom{"ResearchTopic", {p2, Term::constant("topic1")}}},
       {}},
      {head,
       {Atom{"Affiliation", {p1, Term::constant("univ0")}},
        Atom{"ResearchTopic", {p2, Term::constant("topic2")}}},
       {}},
  };
  for (std::size_t i = 0; i < lib.size(); ++i) lib[i].provenance.iteration = i;
  return lib;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto draw = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  SyntheticData out;
  auto& kb = out.kb;
  kb.add_schema({"Affiliation", {"person", "university"}});
  kb.add_schema({"ResearchTopic", {"person", "topic"}});
  kb.add_schema({"CoAuthor", {"person", "person"}});
  for (std::size_t i = 0; i < spec.universities; ++i) kb.declare_constant("university", indexed("univ", i));
  for (std::size_t i = 0; i < spec.topics; ++i) kb.declare_constant("topic", indexed("topic", i));

  std::vector<std::string> people;
  for (std::size_t i = 0; i < spec.persons; ++i) {
    people.push_back(indexed("person", i));
    kb.declare_constant("person", people.back());
    kb.add_fact(Atom{"Affiliation", {Term::constant(people.back()),
                                     Term::constant(indexed("univ", draw(spec.universities)))}});
    const std::size_t n_topics = 1 + draw(spec.max_topics_per_person);
    std::vector<std::size_t> topics(spec.topics);
    for (std::size_t k = 0; k < topics.size(); ++k) topics[k] = k;
    std::shuffle(topics.begin(), topics.end(), rng);
    for (std::size_t k = 0; k < n_topics; ++k) {
      kb.add_fact(Atom{"ResearchTopic", {Term::constant(people.back()),
                                         Term::constant(indexed("topic", topics[k]))}});
    }
  }

  auto library = planted_library(kb);
  out.planted.assign(library.begin(), library.begin() + static_cast<long>(spec.planted_rules));
  std::vector<grounding::CompiledClause> compiled;
  for (const auto& r : out.planted) compiled.emplace_back(r, kb);

  // Unordered pairs bucketed by the single rule they satisfy; pairs
  // satisfying several rules are dropped, pairs satisfying none feed the
  // negatives. A pair is oriented the way that satisfies its rule.
  std::vector<std::vector<Atom>> exactly(out.planted.size());
  std::vector<Atom> none;
  for (std::size_t i = 0; i < people.size(); ++i) {
    for (std::size_t j = i + 1; j < people.size(); ++j) {
      const Atom fwd = pair_atom(people[i], people[j]);
      const Atom rev = pair_atom(people[j], people[i]);
      std::size_t hits = 0, which = 0;
      bool forward = true;
      for (std::size_t r = 0; r < compiled.size(); ++r) {
        const bool f = compiled[r].covers(fwd);
        const bool b = !f && compiled[r].covers(rev);
        if (f || b) {
          ++hits;
          which = r;
          forward = f;
        }
      }
      if (hits == 0) none.push_back(fwd);
      else if (hits == 1) exactly[which].push_back(forward ? fwd : rev);
    }
  }

  const auto n_noise = static_cast<std::size_t>(std::llround(spec.noise * static_cast<double>(spec.positives)));
  const std::size_t clean = spec.positives - n_noise;
  for (std::size_t r = 0; r < exactly.size(); ++r) {
    const std::size_t quota = clean / exactly.size() + (r < clean % exactly.size() ? 1 : 0);
    auto& pool = exactly[r];
    if (pool.size() < quota) {
      throw DataError("infeasible synthetic spec: planted rule " + std::to_string(r + 1) + " has " +
                      std::to_string(pool.size()) + " exclusively satisfying pairs, " +
                      std::to_string(quota) + " positives requested");
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    out.positives.insert(out.positives.end(), pool.begin(), pool.begin() + static_cast<long>(quota));
  }
  out.noisy.assign(out.positives.size(), false);

  std::shuffle(none.begin(), none.end(), rng);
  if (none.size() < n_noise + spec.negatives) {
    throw DataError("infeasible synthetic spec: only " + std::to_string(none.size()) +
                    " pairs satisfy no planted rule, " + std::to_string(n_noise + spec.negatives) +
                    " requested");
  }
  for (std::size_t k = 0; k < n_noise; ++k) {
    out.positives.push_back(none[k]);
    out.noisy.push_back(true);
  }
  out.negatives.assign(none.begin() + static_cast<long>(n_noise),
                       none.begin() + static_cast<long>(n_noise + spec.negatives));
  return out;
}

void write_synthetic(const SyntheticData& data, const SyntheticSpec& spec,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream facts, pos, neg, planted, config;
  kb::write_facts(facts, data.kb);
  kb::write_examples(pos, data.positives);
  kb::write_examples(neg, data.negatives);
  rules::write_rules(planted, data.planted);
  config << "% synthetic co-author data: " << spec.persons << " persons, " << spec.universities
         << " universities, " << spec.topics << " topics, " << spec.planted_rules
         << " planted rules, noise " << spec.noise << ", seed " << spec.seed << "\n"
         << "data.facts = facts.txt\n"
         << "data.positives = pos.txt\n"
         << "data.negatives = neg.txt\n"
         << "data.target = CoAuthor\n"
         << "seed = " << spec.seed << "\n";
  kb::write_text_file(dir / "facts.txt", facts.str());
  kb::write_text_file(dir / "pos.txt", pos.str());
  kb::write_text_file(dir / "neg.txt", neg.str());
  kb::write_text_file(dir / "planted_rules.txt", planted.str());
  kb::write_text_file(dir / "config.txt", config.str());
}

}  // namespace rdgcn::synthetic
