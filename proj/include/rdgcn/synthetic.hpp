#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rdgcn/grounding.hpp"
#include "rdgcn/kb.hpp"

namespace rdgcn::synthetic {

/// Co-author style data: Affiliation(person, university),
/// ResearchTopic(person, topic), target CoAuthor(person, person).
struct SyntheticSpec {
  std::size_t persons = 60;
  std::size_t universities = 5;
  std::size_t topics = 8;
  std::size_t max_topics_per_person = 2;
  /// How many rules of the planted library are active (1..4).
  std::size_t planted_rules = 2;
  std::size_t positives = 150;
  std::size_t negatives = 600;
  /// Fraction of positives replaced by pairs that satisfy no planted rule.
  double noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

/// The planted library, in activation order:
///   shared university, shared topic, a fixed topic pair, a fixed
///   university/topic pair.
std::vector<grounding::Clause> planted_library(const kb::KnowledgeBase& kb);

struct SyntheticData {
  kb::KnowledgeBase kb;
  std::vector<kb::Atom> positives;
  std::vector<kb::Atom> negatives;
  std::vector<grounding::Clause> planted;
  std::vector<bool> noisy;  // parallel to positives
};

/// Clean positives satisfy exactly one active planted rule, split evenly
/// across the rules; negatives satisfy none. Throws DataError when the
/// requested counts are infeasible. Deterministic per seed.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// facts.txt, pos.txt, neg.txt, planted_rules.txt and a config.txt that
/// points the pipeline at them.
void write_synthetic(const SyntheticData& data, const SyntheticSpec& spec,
                     const std::filesystem::path& dir);

}  // namespace rdgcn::synthetic
