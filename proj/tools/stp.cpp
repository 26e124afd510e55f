// Command-line front end: stp <subcommand> [--config PATH] [--out DIR] [--workers N] [--seed-offset N]
//
// Exit codes: 0 success, 1 run failure, 2 config or usage error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "stp/error.hpp"
#include "stp/runner/commands.hpp"
#include "stp/runner/config.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  int workers = 1;
  std::uint64_t seed_offset = 0;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (YAML)");
  if (needs_config) opt->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (default: output.dir from the config)");
  cmd->add_option("--workers", c.workers, "independent runs executed concurrently")->check(CLI::PositiveNumber);
  cmd->add_option("--seed-offset", c.seed_offset, "added to every run and calibration seed");
}

stp::runner::ExperimentPlan plan_of(const Common& c) {
  return c.config.empty() ? stp::runner::parse_config("") : stp::runner::load_config(c.config);
}

std::filesystem::path out_of(const Common& c, const stp::runner::ExperimentPlan& plan) {
  return c.out.empty() ? plan.out_dir : std::filesystem::path(c.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-task poisoning laboratory for class-incremental learning"};
  app.require_subcommand(1);
  Common c;
  std::string format = "idx";

  auto* gen = app.add_subcommand("gen-data", "write the configured stream (poisoned if an attack is set) to disk");
  add_common(gen, c, false);
  gen->add_option("--format", format, "idx or csv")->check(CLI::IsMember({"idx", "csv"}));
  auto* run = app.add_subcommand("run", "clean and poisoned runs per seed, with report and delta table");
  add_common(run, c, false);
  auto* sweep = app.add_subcommand("sweep", "grid over one attack or method axis");
  add_common(sweep, c, false);
  auto* cal = app.add_subcommand("defense-calibrate", "threshold angle from the calibration task");
  add_common(cal, c, false);
  auto* eval = app.add_subcommand("defense-eval", "detection metrics on the clean/poisoned task harness");
  add_common(eval, c, false);
  auto* report = app.add_subcommand("report", "rebuild report.txt, deltas.csv and scatter.csv from runs.csv");
  add_common(report, c, false);
  auto* schema = app.add_subcommand("schema-check", "validate every CSV listed in schemas.json");
  add_common(schema, c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto plan = plan_of(c);
    const auto out = out_of(c, plan);
    const stp::runner::RunOptions options{c.workers, c.seed_offset};
    if (gen->parsed()) {
      stp::runner::cmd_gen_data(plan, out, format);
    } else if (run->parsed()) {
      stp::runner::cmd_run(plan, out, options);
      std::ifstream txt(out / "report.txt");
      std::cout << txt.rdbuf();
    } else if (sweep->parsed()) {
      stp::runner::cmd_sweep(plan, out, options);
    } else if (cal->parsed()) {
      stp::runner::cmd_defense_calibrate(plan, out, options);
    } else if (eval->parsed()) {
      stp::runner::cmd_defense_eval(plan, out, options);
    } else if (report->parsed()) {
      stp::runner::cmd_report(out);
      std::ifstream txt(out / "report.txt");
      std::cout << txt.rdbuf();
    } else if (schema->parsed()) {
      const auto problems = stp::runner::cmd_schema_check(out);
      for (const auto& p : problems) std::cerr << p << '\n';
      if (!problems.empty()) return 1;
      std::cout << "schemas ok: " << out.string() << '\n';
    }
  } catch (const stp::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
