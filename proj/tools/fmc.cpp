// Command-line driver for the mode choice pipeline.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fmc/error.hpp"
#include "fmc/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool strict = false;
  std::string scenario;
  std::string output;
  bool assemble_only = false;
};

fmc::RunConfig resolve(const Flags& f) {
  fmc::RunConfig c = fmc::RunConfig::load(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (f.strict) c.strict = true;
  if (!f.scenario.empty()) c.scenarios = f.scenario;
  if (!f.output.empty()) c.paths.output_dir = f.output;
  c.validate();
  return c;
}

void print(std::string_view stage, const nlohmann::json& summary) {
  std::cout << stage << ": " << summary.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fmc: freight mode choice pipeline"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "run config JSON (defaults when omitted)");
  app.add_option("--seed", flags.seed, "override the run seed");
  app.add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--strict", flags.strict, "abort ingest on the first invalid row");
  app.add_option("--scenario", flags.scenario, "panels to train/evaluate, letters from a..g (e.g. 'bdf')");
  app.add_option("--output", flags.output, "output directory (overrides paths.output_dir)");

  std::vector<std::pair<CLI::App*, fmc::Stage>> stage_commands;
  for (auto s : {fmc::Stage::Synth, fmc::Stage::Ingest, fmc::Stage::Split, fmc::Stage::Featurize, fmc::Stage::Train,
                 fmc::Stage::Evaluate, fmc::Stage::Explain}) {
    stage_commands.emplace_back(app.add_subcommand(std::string(fmc::stage_name(s)), "run the " +
                                                                                        std::string(fmc::stage_name(s)) +
                                                                                        " stage"),
                                s);
  }
  auto* report = app.add_subcommand("report", "assemble the comparison report, running missing stages first");
  report->add_flag("--assemble-only", flags.assemble_only, "fail instead of running missing stages");
  auto* run = app.add_subcommand("run", "run every stage in order, including explain and report");
  auto* show = app.add_subcommand("config", "print the resolved config and its hash");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const fmc::RunConfig config = resolve(flags);
    if (show->parsed()) {
      std::cout << config.to_json().dump(2) << "\nhash " << config.hash() << '\n';
      return 0;
    }
    for (const auto& [cmd, stage] : stage_commands) {
      if (cmd->parsed()) print(fmc::stage_name(stage), fmc::run_stage(config, stage));
    }
    if (report->parsed()) print("report", fmc::cmd_report(config, !flags.assemble_only));
    if (run->parsed()) {
      if (config.synthetic()) print("synth", fmc::cmd_synth(config));
      for (auto s : {fmc::Stage::Ingest, fmc::Stage::Split, fmc::Stage::Featurize, fmc::Stage::Train,
                     fmc::Stage::Evaluate, fmc::Stage::Explain})
        print(fmc::stage_name(s), fmc::run_stage(config, s));
      print("report", fmc::cmd_report(config, false));
    }
  } catch (const fmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const fmc::StageOrderError& e) {
    std::cerr << "stage order error: " << e.what() << '\n';
    return 3;
  } catch (const fmc::StaleArtifactError& e) {
    std::cerr << "stale artifact: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
