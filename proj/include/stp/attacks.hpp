#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "stp/corruptions.hpp"
#include "stp/data/dataset.hpp"

namespace stp::attack {

enum class AttackKind { Base, Bait, MultiBase, MultiBait };

std::string_view name(AttackKind kind);
AttackKind parse_attack(std::string_view name);

/// Corruption-based single-task poison. Percentages are in (0, 100].
struct PoisonSpec {
  double pcp = 100.0;  // percent of the task's classes poisoned
  int pn = 1;          // distinct corruptions used
  double pp = 100.0;   // percent of samples poisoned inside a poisoned class
  int severity = 5;
  std::vector<std::string> kinds = corrupt::default_catalog();
  std::uint64_t seed = 0;

  void validate() const;
};

PoisonSpec preset(AttackKind kind, const std::vector<std::string>& catalog = corrupt::default_catalog());

/// max(1, round_half_up(pcp/100 * |classes|)) classes, seeded draw without
/// replacement, returned in ascending class order.
std::vector<int> choose_poisoned_classes(const std::vector<int>& classes, double pcp, std::uint64_t seed);

/// Ascending classes dealt round-robin over kinds[0..pn).
std::map<int, corrupt::CorruptionKind> assign_corruptions(const std::vector<int>& poisoned_classes,
                                                          const PoisonSpec& spec);

/// D_p = D_poisoned[I_n] U D_clean[I \ I_n] applied per poisoned class with
/// n = round_half_up(pp/100 * class size), independently to train and val.
/// Test samples are never touched.
data::TaskDataset poison_task(const data::TaskDataset& task, const PoisonSpec& spec);

}  // namespace stp::attack

namespace stp::attack {

/// A poison aimed at one task of a stream.
struct PoisonPlan {
  PoisonSpec spec;
  int task = 0;
};

/// Returns a copy of the stream with the planned task poisoned.
data::Stream apply_plan(const data::Stream& stream, const PoisonPlan& plan);

}  // namespace stp::attack
