#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stp/attacks.hpp"
#include "stp/cl/learner.hpp"
#include "stp/data/dataset.hpp"
#include "stp/defense/detector.hpp"

namespace stp::runner {

struct DefenseConfig {
  bool enabled = false;  // guard `run` with checkpoint/detect/rollback
  defense::Statistic statistic = defense::Statistic::P90;
  int calibration_task = 1;
  std::vector<std::uint64_t> calibration_seeds{1000, 1001, 1002, 1003, 1004};
};

/// Population for `defense-eval`: every candidate is the last task of its own
/// short stream drawn from a larger class pool.
struct HarnessMix {
  int tasks = 25;
  double clean_fraction = 0.92;
  double poisoned_fraction = 0.08;
  std::vector<attack::AttackKind> attacks{attack::AttackKind::Base, attack::AttackKind::Bait};
  int pool_classes = 32;
  int classes_per_task = 2;
  int candidate_position = 3;  // tasks before the candidate, calibration task included

  int poisoned_count() const;  // largest remainder over the two fractions
  void validate() const;
};

enum class SweepAxis { Severity, Pp, Lambda, PPosition, Pn };

std::string_view name(SweepAxis axis);
SweepAxis parse_axis(std::string_view name);

struct SweepConfig {
  std::optional<SweepAxis> axis;
  std::vector<double> values;
};

struct ExperimentPlan {
  data::StreamSpec stream;
  cl::MethodConfig method;
  std::optional<attack::AttackKind> attack;  // preset name, if one was used
  std::optional<attack::PoisonSpec> poison;  // resolved spec; empty = clean only
  int p = 1;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  DefenseConfig defense;
  HarnessMix harness;
  SweepConfig sweep;
  std::filesystem::path out_dir = "out";

  std::string attack_label() const;
};

/// Parses the YAML experiment schema documented in the README. Every key is
/// optional; unknown keys and type mismatches raise ConfigError with the key
/// path and 1-based line.
ExperimentPlan parse_config(std::string_view text);
ExperimentPlan load_config(const std::filesystem::path& path);

/// Canonical YAML rendering of a plan (written next to outputs).
std::string dump_config(const ExperimentPlan& plan);

}  // namespace stp::runner
