#include "stp/cl/report.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "stp/error.hpp"

namespace stp::cl {

namespace {

std::optional<double> mean_of(const std::vector<double>& row, std::size_t from, std::size_t to) {
  if (from >= to) return std::nullopt;
  double s = 0.0;
  for (std::size_t j = from; j < to; ++j) s += row[j];
  return s / static_cast<double>(to - from);
}

std::optional<double> diff(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

PhaseAccuracy diff(const PhaseAccuracy& a, const PhaseAccuracy& b) {
  return {a.t_p - b.t_p, diff(a.before, b.before), diff(a.after, b.after), diff(a.total, b.total)};
}

std::string cell(const std::optional<double>& v, const std::optional<double>& d) {
  if (!v) return "-";
  char buf[64];
  if (d)
    std::snprintf(buf, sizeof buf, "%.1f (%+.1f)", 100.0 * *v, 100.0 * *d);
  else
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
  return buf;
}

}  // namespace

Report report_tables(const AccMatrix& acc, int p) {
  if (acc.empty()) throw InputError("report_tables: empty accuracy matrix");
  if (p < 0 || static_cast<std::size_t>(p) >= acc.size())
    throw InputError("report_tables: p=" + std::to_string(p) + " outside a " + std::to_string(acc.size()) +
                     "-task stream");
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (acc[i].size() != i + 1) throw InputError("report_tables: row " + std::to_string(i) + " has wrong length");
  const auto pu = static_cast<std::size_t>(p);
  Report r;
  r.p = p;
  r.at_poisoning.t_p = acc[pu][pu];
  r.at_poisoning.before = mean_of(acc[pu], 0, pu);
  const auto& last = acc.back();
  r.final.t_p = last[pu];
  r.final.before = mean_of(last, 0, pu);
  r.final.after = mean_of(last, pu + 1, last.size());
  r.final.total = mean_of(last, 0, last.size());
  return r;
}

Report report_delta(const Report& poisoned, const Report& clean) {
  Report d;
  d.p = poisoned.p;
  d.at_poisoning = diff(poisoned.at_poisoning, clean.at_poisoning);
  d.final = diff(poisoned.final, clean.final);
  return d;
}

std::string format_report(const std::string& title, const Report& clean, const std::optional<Report>& poisoned) {
  std::ostringstream out;
  out << title << "  (p=" << clean.p << ")\n";
  out << "                  | Acc at poisoning time     | Final Acc\n";
  out << "run               | T_p          before T_p   | T_p          before T_p   after T_p    total\n";
  auto row = [&](const std::string& label, const Report& r, const std::optional<Report>& d) {
    char buf[512];
    auto dd = [&](auto pick) { return d ? pick(*d) : std::optional<double>{}; };
    std::snprintf(buf, sizeof buf, "%-17s | %-12s %-12s | %-12s %-12s %-12s %-12s\n", label.c_str(),
                  cell(r.at_poisoning.t_p, dd([](const Report& x) { return std::optional(x.at_poisoning.t_p); })).c_str(),
                  cell(r.at_poisoning.before, dd([](const Report& x) { return x.at_poisoning.before; })).c_str(),
                  cell(r.final.t_p, dd([](const Report& x) { return std::optional(x.final.t_p); })).c_str(),
                  cell(r.final.before, dd([](const Report& x) { return x.final.before; })).c_str(),
                  cell(r.final.after, dd([](const Report& x) { return x.final.after; })).c_str(),
                  cell(r.final.total, dd([](const Report& x) { return x.final.total; })).c_str());
    out << buf;
  };
  row("clean", clean, std::nullopt);
  if (poisoned) row("poisoned", *poisoned, report_delta(*poisoned, clean));
  return out.str();
}

}  // namespace stp::cl
