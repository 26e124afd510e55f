#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stp/cl/trainer.hpp"

namespace stp::cl {

/// Accuracy groups relative to the poisoned task p. Missing groups (no task
/// before or after p) are empty.
struct PhaseAccuracy {
  double t_p = 0;
  std::optional<double> before;
  std::optional<double> after;
  std::optional<double> total;
};

/// "At poisoning time" uses row p of the matrix; "final" uses the last row.
struct Report {
  int p = 0;
  PhaseAccuracy at_poisoning;  // total/after are left empty
  PhaseAccuracy final;
};

Report report_tables(const AccMatrix& acc, int p);

/// Poisoned minus clean, field by field; empty fields stay empty.
Report report_delta(const Report& poisoned, const Report& clean);

/// Plain-text rendering laid out like the paired clean/poisoned results table.
std::string format_report(const std::string& title, const Report& clean, const std::optional<Report>& poisoned);

}  // namespace stp::cl
