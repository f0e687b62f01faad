#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "oracles.hpp"
#include "rdgcn/config.hpp"
#include "rdgcn/error.hpp"
#include "rdgcn/parse.hpp"
#include "rdgcn/pipeline.hpp"
#include "rdgcn/synthetic.hpp"

using namespace rdgcn;
namespace fs = std::filesystem;
using pipeline::PipelineConfig;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rdgcn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return kb::read_text_file(p); }

synthetic::SyntheticSpec small_spec() {
  synthetic::SyntheticSpec s;
  s.persons = 40;
  s.positives = 60;
  s.negatives = 200;
  s.noise = 0.05;
  s.seed = 3;
  return s;
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_dir_ = scratch_dir("data");
    const auto spec = small_spec();
    synthetic::write_synthetic(synthetic::generate_synthetic(spec), spec, data_dir_);
  }

  static PipelineConfig config(const std::string& out, std::vector<std::string> overrides = {}) {
    overrides.push_back("train.epochs=60");
    auto cfg = PipelineConfig::load(data_dir_ / "config.txt", overrides);
    cfg.output_dir = scratch_dir(out);
    return cfg;
  }

  static inline fs::path data_dir_;
};

}  // namespace

TEST(KeyValues, CommentsOverridesAndDump) {
  const auto kv = config::KeyValues::parse(
      "% header\n"
      "a.b = 1   # trailing\n"
      "\n"
      "  c = hello world \n"
      "a.b = 2\n");
  EXPECT_EQ(kv.get("a.b"), "2");
  EXPECT_EQ(kv.get("c"), "hello world");
  EXPECT_FALSE(kv.get("d").has_value());
  auto copy = kv;
  copy.apply_override("c=bye");
  EXPECT_EQ(copy.get("c"), "bye");
  EXPECT_EQ(config::KeyValues::parse(kv.dump()).entries(), kv.entries());
  EXPECT_THROW(config::KeyValues::parse("novalue\n"), ConfigError);
  EXPECT_THROW(config::KeyValues::parse("bad key = 1\n"), ConfigError);
  EXPECT_THROW(copy.apply_override("noequals"), ConfigError);
}

TEST(KeyValues, Fnv1aKnownValues) {
  EXPECT_EQ(config::fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(config::fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

TEST(PipelineConfigTest, TypedValues) {
  config::KeyValues kv;
  kv.set("featurize.metric", "manhattan");
  kv.set("featurize.cap", "0");
  kv.set("featurize.standardize", "true");
  kv.set("featurize.self_loops", "literal");
  kv.set("eval.threshold", "mean");
  kv.set("learn.k_neg", "0");
  kv.set("train.hidden_size", "32");
  auto c = PipelineConfig::from_key_values(kv);
  EXPECT_EQ(c.metric, features::Metric::Manhattan);
  EXPECT_FALSE(c.cap.has_value());
  EXPECT_TRUE(c.standardize);
  EXPECT_EQ(c.self_loops, features::SelfLoops::Literal);
  EXPECT_FALSE(c.threshold.has_value());
  EXPECT_EQ(c.k_neg, 0u);
  EXPECT_EQ(c.train.hidden_size, 32u);
  kv.set("featurize.cap", "7");
  EXPECT_EQ(PipelineConfig::from_key_values(kv).cap, grounding::CountCap{7});

  const auto rejects = [](const char* key, const char* value) {
    config::KeyValues bad;
    bad.set(key, value);
    try {
      PipelineConfig::from_key_values(bad);
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(key) != std::string::npos || std::string(key) == "bogus.key";
    }
    return false;
  };
  EXPECT_TRUE(rejects("train.epochs", "ten"));
  EXPECT_TRUE(rejects("train.dropout", "0.5x"));
  EXPECT_TRUE(rejects("featurize.metric", "cosine"));
  EXPECT_TRUE(rejects("split.stratified", "maybe"));
  EXPECT_TRUE(rejects("bogus.key", "1"));
}

TEST(PipelineConfigTest, CanonicalFormRoundTrips) {
  config::KeyValues kv;
  kv.set("data.facts", "/d/facts.txt");
  kv.set("learn.seed", "41");
  kv.set("train.learning_rate", "0.003");
  kv.set("eval.threshold", "mean");
  const auto c = PipelineConfig::from_key_values(kv);
  const auto again = PipelineConfig::from_key_values(c.to_key_values());
  EXPECT_EQ(again.to_key_values().dump(), c.to_key_values().dump());
  EXPECT_EQ(again.hash(), c.hash());
}

TEST(PipelineConfigTest, SeedsDeriveFromBase) {
  config::KeyValues kv;
  kv.set("seed", "10");
  auto s = PipelineConfig::from_key_values(kv).seeds();
  EXPECT_EQ(s.negatives, 10u);
  EXPECT_EQ(s.learn, 11u);
  EXPECT_EQ(s.split, 12u);
  EXPECT_EQ(s.train, 13u);
  kv.set("learn.seed", "99");
  s = PipelineConfig::from_key_values(kv).seeds();
  EXPECT_EQ(s.learn, 99u);
  EXPECT_EQ(s.train, 13u);
}

TEST(PipelineConfigTest, HashTracksSettingsNotOutputDir) {
  PipelineConfig a;
  PipelineConfig b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.train.hidden_size = 64;
  EXPECT_NE(a.hash(), b.hash());
}

TEST_F(PipelineTest, PathsResolveAgainstConfigDirAndFlagsWin) {
  const auto cfg = PipelineConfig::load(data_dir_ / "config.txt", {"seed=5", "data.target=CoAuthor"});
  EXPECT_EQ(cfg.facts, (data_dir_ / "facts.txt").lexically_normal());
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST_F(PipelineTest, MissingFactsPathNamesTheField) {
  auto cfg = config("missing");
  cfg.facts = data_dir_ / "nope.txt";
  try {
    pipeline::run_pipeline(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("data.facts"), std::string::npos) << e.what();
  }
  cfg = config("missing");
  cfg.target = "Unknown";
  EXPECT_THROW(pipeline::run_pipeline(cfg), ConfigError);
}

TEST_F(PipelineTest, StageErrorsCarryStageName) {
  const auto cfg = config("nostage");
  try {
    pipeline::run_train(cfg);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("train: ", 0), 0u) << e.what();
  }
}

TEST_F(PipelineTest, StagedRunMatchesMonolithic) {
  const auto mono = config("mono");
  const auto result = pipeline::run_pipeline(mono);
  const auto staged = config("staged");
  pipeline::run_learn(staged);
  pipeline::run_featurize(staged);
  pipeline::run_train(staged);
  const auto report = pipeline::run_eval(staged);
  EXPECT_EQ(report.f1, result.report.f1);
  EXPECT_EQ(report.auc_pr, result.report.auc_pr);
  for (const char* f : {"rules.txt", "targets.txt", "X.bin", "D.bin", "A.bin", "P.bin", "X.csv", "splits.csv",
                        "model.rdgw", "history.csv", "predictions.csv", "metrics.txt", "metrics.csv"}) {
    EXPECT_EQ(slurp(mono.output_dir / f), slurp(staged.output_dir / f)) << f;
  }
}

TEST_F(PipelineTest, RerunIsDeterministicAndManifestComplete) {
  const auto a = config("rerun_a");
  const auto b = config("rerun_b");
  const auto ra = pipeline::run_pipeline(a);
  const auto rb = pipeline::run_pipeline(b);
  EXPECT_EQ(ra.report.f1, rb.report.f1);
  EXPECT_EQ(ra.report.auc_pr, rb.report.auc_pr);
  const auto ma = nlohmann::json::parse(slurp(a.output_dir / "manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(b.output_dir / "manifest.json"));
  EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
  EXPECT_EQ(ma["seeds"], mb["seeds"]);
  const auto s = a.seeds();
  EXPECT_EQ(ma["seeds"]["negatives"], s.negatives);
  EXPECT_EQ(ma["seeds"]["learn"], s.learn);
  EXPECT_EQ(ma["seeds"]["split"], s.split);
  EXPECT_EQ(ma["seeds"]["train"], s.train);
  for (const char* stage : {"learn", "featurize", "train", "eval"}) {
    ASSERT_TRUE(ma["stages"].contains(stage)) << stage;
    EXPECT_GE(ma["stages"][stage]["seconds"].get<double>(), 0.0);
  }
  EXPECT_EQ(ma["stages"]["eval"]["metrics"]["f1"].get<double>(), ra.report.f1);
}

TEST_F(PipelineTest, SamplesNegativesWithoutFile) {
  auto cfg = config("sampled", {"data.negatives=", "negatives.ratio=2"});
  const auto data = pipeline::load_dataset(cfg);
  EXPECT_TRUE(data.sampled_negatives);
  std::size_t pos = 0;
  for (int l : data.labels()) pos += l;
  EXPECT_EQ(data.targets.size() - pos, 2 * pos);
  const auto again = pipeline::load_dataset(cfg);
  EXPECT_EQ(again.targets, data.targets);
}

TEST_F(PipelineTest, HiddenSweepReusesFeatures) {
  const auto cfg = config("sweep_hidden");
  const auto rows = pipeline::sensitivity_sweep(cfg, pipeline::SweepAxis::HiddenSize, {"16", "32"});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].value, "32");
  EXPECT_TRUE(fs::exists(cfg.output_dir / "P.bin"));
  for (const char* v : {"hidden_size-16", "hidden_size-32"}) {
    const auto dir = cfg.output_dir / "sweep" / v;
    EXPECT_TRUE(fs::exists(dir / "model.rdgw"));
    EXPECT_TRUE(fs::exists(dir / "predictions.csv"));
    EXPECT_FALSE(fs::exists(dir / "P.bin"));
  }
  EXPECT_NE(slurp(cfg.output_dir / "sweep" / "hidden_size-16" / "model.rdgw"),
            slurp(cfg.output_dir / "sweep" / "hidden_size-32" / "model.rdgw"));
  const auto csv = slurp(cfg.output_dir / "sweep_hidden_size.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(PipelineTest, MetricSweepTagsRows) {
  const auto cfg = config("sweep_metric");
  const auto rows =
      pipeline::sensitivity_sweep(cfg, pipeline::SweepAxis::Metric, pipeline::default_sweep_values(pipeline::SweepAxis::Metric));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].value, "euclidean");
  EXPECT_EQ(rows[1].value, "manhattan");
  EXPECT_EQ(rows[2].value, "chebyshev");
  for (const auto& r : rows) EXPECT_TRUE(fs::exists(cfg.output_dir / "sweep" / ("metric-" + r.value) / "D.bin"));
  EXPECT_THROW(pipeline::parse_sweep_axis("dropout"), ConfigError);
}

TEST_F(PipelineTest, InspectRulesCoverageMatchesOracle) {
  const auto cfg = config("inspect");
  pipeline::run_learn(cfg);
  const auto coverage = pipeline::inspect_rules(cfg);
  const auto data = pipeline::load_dataset(cfg);
  ASSERT_FALSE(coverage.empty());
  for (const auto& c : coverage) {
    std::size_t pos = 0, neg = 0;
    for (const auto& t : data.targets) {
      if (oracle::brute_force_count(c.rule, t.atom, data.kb) == 0) continue;
      (t.label == grounding::Label::Positive ? pos : neg) += 1;
    }
    EXPECT_EQ(c.positives_covered, pos);
    EXPECT_EQ(c.negatives_covered, neg);
  }
  EXPECT_NE(pipeline::format_coverage(coverage).find("rule0"), std::string::npos);
}

TEST(Synthetic, PlantedStructureHoldsUnderOracle) {
  for (double noise : {0.0, 0.1}) {
    auto spec = small_spec();
    spec.noise = noise;
    const auto d = synthetic::generate_synthetic(spec);
    ASSERT_EQ(d.positives.size(), spec.positives);
    ASSERT_EQ(d.negatives.size(), spec.negatives);
    ASSERT_EQ(d.planted.size(), spec.planted_rules);
    const auto satisfied = [&](const kb::Atom& a) {
      std::size_t n = 0;
      for (const auto& r : d.planted) n += oracle::brute_force_count(r, a, d.kb) > 0;
      return n;
    };
    std::size_t noisy = 0;
    for (std::size_t i = 0; i < d.positives.size(); ++i) {
      EXPECT_EQ(satisfied(d.positives[i]), d.noisy[i] ? 0u : 1u);
      noisy += d.noisy[i];
    }
    EXPECT_EQ(noisy, static_cast<std::size_t>(std::llround(noise * static_cast<double>(spec.positives))));
    for (const auto& a : d.negatives) EXPECT_EQ(satisfied(a), 0u);
  }
}

TEST(Synthetic, SameSpecGivesIdenticalFiles) {
  const auto spec = small_spec();
  const auto a = scratch_dir("synth_a");
  const auto b = scratch_dir("synth_b");
  synthetic::write_synthetic(synthetic::generate_synthetic(spec), spec, a);
  synthetic::write_synthetic(synthetic::generate_synthetic(spec), spec, b);
  for (const char* f : {"facts.txt", "pos.txt", "neg.txt", "planted_rules.txt", "config.txt"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  auto other = spec;
  other.seed = spec.seed + 1;
  const auto c = scratch_dir("synth_c");
  synthetic::write_synthetic(synthetic::generate_synthetic(other), other, c);
  EXPECT_NE(slurp(a / "pos.txt"), slurp(c / "pos.txt"));
}

TEST(Synthetic, RejectsBadSpecs) {
  auto spec = small_spec();
  spec.positives = 100000;
  EXPECT_THROW(synthetic::generate_synthetic(spec), DataError);
  spec = small_spec();
  spec.noise = 1.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = small_spec();
  spec.planted_rules = 5;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = small_spec();
  spec.persons = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
}
