#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rdgcn/error.hpp"
#include "rdgcn/pipeline.hpp"
#include "rdgcn/synthetic.hpp"

using namespace rdgcn;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
  bool literal_self_loops = false;
  std::vector<std::string> overrides;
};

pipeline::PipelineConfig load_config(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  auto overrides = g.overrides;
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (g.literal_self_loops) overrides.push_back("featurize.self_loops=literal");
  auto cfg = pipeline::PipelineConfig::load(g.config, overrides);
  if (!g.out.empty()) cfg.output_dir = g.out;
  return cfg;
}

void print_report(const eval::MetricsReport& r) { std::cout << eval::to_key_value(r); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule-distance graph convolutional link prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Pipeline config file");
  app.add_option("--seed", g.seed, "Base seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (overrides output.dir)");
  app.add_option("--set", g.overrides, "Config override key=value, repeatable");
  app.add_flag("--literal-self-loops", g.literal_self_loops, "Add I on top of the unit diagonal");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");

  auto* learn = app.add_subcommand("learn", "Learn positive and negative rules");
  auto* featurize = app.add_subcommand("featurize", "Build X, D, A and P from learned rules");
  auto* train = app.add_subcommand("train", "Train the GCN on persisted features");
  auto* evaluate = app.add_subcommand("eval", "Evaluate the trained model on the test split");
  auto* run = app.add_subcommand("pipeline", "Run every stage");
  auto* inspect = app.add_subcommand("inspect-rules", "Print learned rules with coverage");

  auto* synth = app.add_subcommand("synth", "Write a synthetic co-author dataset");
  synthetic::SyntheticSpec spec;
  std::string synth_dir = "synthetic";
  synth->add_option("--persons", spec.persons);
  synth->add_option("--universities", spec.universities);
  synth->add_option("--topics", spec.topics);
  synth->add_option("--max-topics", spec.max_topics_per_person);
  synth->add_option("--rules", spec.planted_rules, "Planted rules, 1 to 4");
  synth->add_option("--positives", spec.positives);
  synth->add_option("--negatives", spec.negatives);
  synth->add_option("--noise", spec.noise, "Fraction of positives that satisfy no planted rule");
  synth->add_option("--dir", synth_dir, "Destination directory (--out also works)");

  auto* sweep = app.add_subcommand("sweep", "Rerun train and eval across one setting");
  std::string axis_name;
  std::vector<std::string> values;
  sweep->add_option("--axis", axis_name, "hidden_size, num_layers or metric")->required();
  sweep->add_option("--values", values, "Values to try (defaults per axis)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (synth->parsed()) {
      if (g.seed) spec.seed = *g.seed;
      if (!g.out.empty()) synth_dir = g.out;
      spec.validate();
      const auto data = synthetic::generate_synthetic(spec);
      synthetic::write_synthetic(data, spec, synth_dir);
      std::cout << "wrote " << data.positives.size() << " positives and " << data.negatives.size()
                << " negatives to " << synth_dir << "\n";
      return 0;
    }
    const auto cfg = load_config(g);
    if (learn->parsed()) {
      pipeline::run_learn(cfg);
    } else if (featurize->parsed()) {
      pipeline::run_featurize(cfg);
    } else if (train->parsed()) {
      pipeline::run_train(cfg);
    } else if (evaluate->parsed()) {
      print_report(pipeline::run_eval(cfg));
    } else if (run->parsed()) {
      print_report(pipeline::run_pipeline(cfg).report);
    } else if (inspect->parsed()) {
      std::cout << pipeline::format_coverage(pipeline::inspect_rules(cfg));
    } else if (sweep->parsed()) {
      const auto axis = pipeline::parse_sweep_axis(axis_name);
      const auto rows = pipeline::sensitivity_sweep(cfg, axis, values.empty() ? pipeline::default_sweep_values(axis) : values);
      std::cout << pipeline::sweep_csv(rows);
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
