#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stp/cl/report.hpp"
#include "stp/cl/trainer.hpp"
#include "stp/defense/detector.hpp"
#include "stp/runner/config.hpp"

namespace stp::runner {

struct RunOptions {
  int workers = 1;
  std::uint64_t seed_offset = 0;
};

/// One training run (clean or poisoned) reduced to what the outputs need.
struct RunRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  bool poisoned = false;
  bool joint = false;  // JOINT has no "at poisoning time" phase
  cl::Report report;
  cl::AccMatrix acc;
  std::vector<cl::TrainLog> logs;
  double t_p_val_acc = 0;  // class-IL accuracy on T_p's (possibly poisoned) val split right after T_p
  std::vector<defense::AuditRecord> audit;
};

struct SeedPair {
  RunRecord clean;
  std::optional<RunRecord> poisoned;
};

/// Clean and (when an attack is configured) poisoned run for every seed.
/// Nothing is written to disk.
std::vector<SeedPair> run_plan(const ExperimentPlan& plan, const RunOptions& options);

/// Builds the stream described by plan.stream.
data::Stream build_plan_stream(const ExperimentPlan& plan);

struct SweepRow {
  double value = 0;
  std::uint64_t seed = 0;
  cl::Report poisoned;
  cl::Report delta;
};

std::vector<SweepRow> run_sweep(const ExperimentPlan& plan, const RunOptions& options);

/// One candidate of the defense harness.
struct Candidate {
  int instance = 0;
  std::uint64_t seed = 0;
  std::string attack;  // "none" for clean candidates
  bool poisoned = false;
  int task_id = 0;
  double beta_deg = 0;
};

struct HarnessResult {
  std::vector<Candidate> candidates;                     // clean first, then poisoned per attack
  std::vector<std::vector<double>> calibration_angles;  // per instance, sorted
  std::vector<defense::AuditRecord> audit;              // configured statistic

  /// alpha of `instance` under `statistic`.
  double alpha(int instance, defense::Statistic statistic) const;
  /// Clean candidates plus the poisoned candidates of one attack.
  std::vector<defense::ScoredTask> scored(const std::string& attack) const;
  std::vector<double> alphas(const std::string& attack, defense::Statistic statistic) const;
  defense::DetectionMetrics metrics(const std::string& attack, defense::Statistic statistic) const;
};

HarnessResult run_defense_harness(const ExperimentPlan& plan, const RunOptions& options);

/// Subcommands. Each writes into `out` and a schemas.json describing every CSV.
void cmd_gen_data(const ExperimentPlan& plan, const std::filesystem::path& out, const std::string& format);
void cmd_run(const ExperimentPlan& plan, const std::filesystem::path& out, const RunOptions& options);
void cmd_sweep(const ExperimentPlan& plan, const std::filesystem::path& out, const RunOptions& options);
void cmd_defense_calibrate(const ExperimentPlan& plan, const std::filesystem::path& out, const RunOptions& options);
void cmd_defense_eval(const ExperimentPlan& plan, const std::filesystem::path& out, const RunOptions& options);
/// Recomputes report.txt, deltas.csv and scatter.csv from runs.csv in `dir`.
void cmd_report(const std::filesystem::path& dir);
/// Returns the list of schema violations (empty = valid).
std::vector<std::string> cmd_schema_check(const std::filesystem::path& dir);

}  // namespace stp::runner
