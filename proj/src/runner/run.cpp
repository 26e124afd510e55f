#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "stp/data/synth.hpp"
#include "stp/error.hpp"
#include "stp/parallel.hpp"
#include "stp/runner/commands.hpp"
#include "stp/runner/csv.hpp"

namespace stp::runner {

namespace fs = std::filesystem;

data::Stream build_plan_stream(const ExperimentPlan& plan) { return data::make_stream(plan.stream); }

namespace {

std::optional<double> mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  if (from >= to) return std::nullopt;
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to),
                         0.0) /
         static_cast<double>(to - from);
}

cl::Report joint_report(const cl::JointResult& r, int p) {
  const auto pu = static_cast<std::size_t>(p);
  cl::Report rep;
  rep.p = p;
  cl::PhaseAccuracy ph{r.per_task[pu], mean_of(r.per_task, 0, pu), mean_of(r.per_task, pu + 1, r.per_task.size()),
                       mean_of(r.per_task, 0, r.per_task.size())};
  rep.at_poisoning = {ph.t_p, ph.before, std::nullopt, std::nullopt};
  rep.final = ph;
  return rep;
}

attack::PoisonPlan poison_plan_for(const attack::PoisonSpec& spec, int p, std::uint64_t seed) {
  attack::PoisonPlan plan{spec, p};
  plan.spec.seed = spec.seed + seed;
  return plan;
}

struct Job {
  std::uint64_t seed = 0;
  bool poisoned = false;
};

// Shared by run_plan and run_sweep: one clean or poisoned run of `plan`.
RunRecord single_run(const data::Stream& stream, const ExperimentPlan& plan, std::uint64_t seed, bool poisoned,
                     const std::optional<defense::DetectorState>& detector) {
  RunRecord rec;
  rec.seed = seed;
  rec.poisoned = poisoned;
  rec.run_id = "s" + std::to_string(seed) + "-" + (poisoned ? plan.attack_label() : std::string("clean"));
  std::optional<attack::PoisonPlan> pp;
  if (poisoned) pp = poison_plan_for(*plan.poison, plan.p, seed);

  if (plan.method.method == cl::Method::Joint) {
    rec.joint = true;
    const auto r = cl::joint_train(stream, pp, plan.method, seed);
    rec.report = joint_report(r, plan.p);
    rec.t_p_val_acc = r.per_task_val[static_cast<std::size_t>(plan.p)];
    return rec;
  }

  const data::Stream source = pp ? attack::apply_plan(stream, *pp) : stream;
  if (detector) {
    auto g = defense::guarded_run(source, plan.method, seed, *detector, plan.defense.calibration_task + 1);
    rec.acc = std::move(g.acc);
    rec.logs = std::move(g.logs);
    rec.audit = std::move(g.events);
  } else {
    auto r = cl::run_stream(source, plan.method, seed);
    rec.acc = std::move(r.acc);
    rec.logs = std::move(r.logs);
  }
  rec.report = cl::report_tables(rec.acc, plan.p);
  rec.t_p_val_acc = rec.logs[static_cast<std::size_t>(plan.p)].epochs.back().val_acc;
  return rec;
}

std::optional<defense::DetectorState> plan_detector(const data::Stream& stream, const ExperimentPlan& plan,
                                                    const RunOptions& options) {
  if (!plan.defense.enabled || plan.method.method == cl::Method::Joint) return std::nullopt;
  return defense::calibrate_alpha(stream, plan.defense.calibration_task, plan.method, plan.defense.calibration_seeds,
                                  plan.defense.statistic, options.workers);
}

}  // namespace

std::vector<SeedPair> run_plan(const ExperimentPlan& plan, const RunOptions& options) {
  const data::Stream stream = build_plan_stream(plan);
  const auto detector = plan_detector(stream, plan, options);
  std::vector<Job> jobs;
  for (auto s : plan.seeds) {
    jobs.push_back({s + options.seed_offset, false});
    if (plan.poison) jobs.push_back({s + options.seed_offset, true});
  }
  auto records = parallel_map(jobs.size(), options.workers,
                              [&](std::size_t i) { return single_run(stream, plan, jobs[i].seed, jobs[i].poisoned, detector); });
  std::vector<SeedPair> out;
  for (auto& r : records) {
    if (!r.poisoned) out.push_back({std::move(r), std::nullopt});
    else out.back().poisoned = std::move(r);
  }
  return out;
}

std::vector<SweepRow> run_sweep(const ExperimentPlan& plan, const RunOptions& options) {
  if (!plan.sweep.axis) throw InputError("sweep: no axis configured");
  if (!plan.poison) throw InputError("sweep: an attack is required");
  if (plan.method.method == cl::Method::Joint) throw InputError("sweep: JOINT is not supported");
  const auto axis = *plan.sweep.axis;
  const data::Stream stream = build_plan_stream(plan);

  auto variant = [&](double v) {
    ExperimentPlan q = plan;
    switch (axis) {
      case SweepAxis::Severity: q.poison->severity = static_cast<int>(v); break;
      case SweepAxis::Pp: q.poison->pp = v; break;
      case SweepAxis::Lambda: q.method.lambda = v; break;
      case SweepAxis::PPosition: q.p = static_cast<int>(v); break;
      case SweepAxis::Pn: q.poison->pn = static_cast<int>(v); break;
    }
    q.poison->validate();
    q.method.validate();
    if (q.p < 0 || static_cast<std::size_t>(q.p) >= stream.size())
      throw InputError("sweep: p=" + std::to_string(q.p) + " outside the stream");
    return q;
  };
  // Only the lambda axis changes the clean run.
  const bool clean_varies = axis == SweepAxis::Lambda;

  struct SweepJob {
    std::size_t value_index;
    std::uint64_t seed;
    bool poisoned;
  };
  std::vector<SweepJob> jobs;
  for (std::size_t vi = 0; vi < plan.sweep.values.size(); ++vi) variant(plan.sweep.values[vi]);
  for (auto s0 : plan.seeds) {
    const auto s = s0 + options.seed_offset;
    if (!clean_varies) jobs.push_back({0, s, false});
    for (std::size_t vi = 0; vi < plan.sweep.values.size(); ++vi) {
      if (clean_varies) jobs.push_back({vi, s, false});
      jobs.push_back({vi, s, true});
    }
  }
  auto acc = parallel_map(jobs.size(), options.workers, [&](std::size_t i) {
    const auto q = variant(plan.sweep.values[jobs[i].value_index]);
    return single_run(stream, q, jobs[i].seed, jobs[i].poisoned, std::nullopt).acc;
  });

  std::map<std::pair<std::size_t, std::uint64_t>, const cl::AccMatrix*> clean, pois;
  for (std::size_t i = 0; i < jobs.size(); ++i)
    (jobs[i].poisoned ? pois : clean)[{jobs[i].value_index, jobs[i].seed}] = &acc[i];

  std::vector<SweepRow> rows;
  for (std::size_t vi = 0; vi < plan.sweep.values.size(); ++vi) {
    const auto q = variant(plan.sweep.values[vi]);
    for (auto s0 : plan.seeds) {
      const auto s = s0 + options.seed_offset;
      const auto& c = *clean.at({clean_varies ? vi : 0, s});
      const auto& pm = *pois.at({vi, s});
      SweepRow row;
      row.value = plan.sweep.values[vi];
      row.seed = s;
      row.poisoned = cl::report_tables(pm, q.p);
      row.delta = cl::report_delta(row.poisoned, cl::report_tables(c, q.p));
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> phase_fields(const cl::PhaseAccuracy& ph) {
  return {fmt(ph.t_p), fmt(ph.before), fmt(ph.after), fmt(ph.total)};
}

struct Stat {
  double mean = 0, sd = 0;
  int n = 0;
};

Stat stat_of(const std::vector<double>& v) {
  Stat s;
  s.n = static_cast<int>(v.size());
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / s.n;
  if (s.n > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (s.n - 1));
  }
  return s;
}

std::string cell(const std::vector<double>& v, bool signed_mean) {
  if (v.empty()) return "-";
  const auto s = stat_of(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, signed_mean ? "%+.1f±%.1f" : "%.1f±%.1f", 100.0 * s.mean, 100.0 * s.sd);
  return buf;
}

// Left-justifies to `width` display columns; counts UTF-8 code points, not bytes.
std::string pad(const std::string& s, std::size_t width) {
  std::size_t cols = 0;
  for (unsigned char ch : s) cols += (ch & 0xC0) != 0x80;
  return cols >= width ? s + " " : s + std::string(width - cols, ' ');
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void cmd_report(const fs::path& dir) {
  const CsvTable runs = read_csv(dir / "runs.csv");
  if (runs.header != csv_schema("runs").columns) throw FormatError((dir / "runs.csv").string() + ": unexpected header");
  const auto c_id = runs.column("run_id"), c_seed = runs.column("seed"), c_method = runs.column("method"),
             c_attack = runs.column("attack"), c_p = runs.column("p"), c_phase = runs.column("phase");
  const std::size_t c_vals = runs.column("t_p_acc");

  // (seed, phase) -> clean / poisoned values
  struct Entry {
    std::string method, attack, p;
    std::array<std::optional<double>, 4> clean, pois;
    bool has_clean = false, has_pois = false;
  };
  std::map<std::pair<long long, std::string>, Entry> by_key;
  std::vector<std::pair<long long, std::string>> order;
  for (const auto& r : runs.rows) {
    const auto key = std::make_pair(std::stoll(r[c_seed]), r[c_phase]);
    if (!by_key.count(key)) order.push_back(key);
    auto& e = by_key[key];
    const bool clean = r[c_id].size() >= 6 && r[c_id].substr(r[c_id].size() - 6) == "-clean";
    auto& dst = clean ? e.clean : e.pois;
    for (std::size_t k = 0; k < 4; ++k) dst[k] = parse_opt(r[c_vals + k]);
    (clean ? e.has_clean : e.has_pois) = true;
    e.method = r[c_method];
    e.p = r[c_p];
    if (!clean) e.attack = r[c_attack];
  }

  CsvWriter deltas(dir / "deltas.csv", csv_schema("deltas"));
  CsvWriter scatter(dir / "scatter.csv", csv_schema("scatter"));
  const std::array<std::string, 2> phases{"at_poisoning", "final"};
  std::map<std::string, std::array<std::vector<double>, 4>> clean_v, pois_v, delta_v;
  std::string method, attack = "none", p;
  for (const auto& key : order) {
    const auto& e = by_key.at(key);
    method = e.method;
    p = e.p;
    if (e.has_pois) attack = e.attack;
    for (std::size_t k = 0; k < 4; ++k) {
      if (e.has_clean && e.clean[k]) clean_v[key.second][k].push_back(*e.clean[k]);
      if (e.has_pois && e.pois[k]) pois_v[key.second][k].push_back(*e.pois[k]);
    }
    if (e.has_clean && e.has_pois) {
      std::vector<std::string> row{std::to_string(key.first), e.method, e.attack, e.p, key.second};
      for (std::size_t k = 0; k < 4; ++k) {
        std::optional<double> d;
        if (e.clean[k] && e.pois[k]) {
          d = *e.pois[k] - *e.clean[k];
          delta_v[key.second][k].push_back(*d);
        }
        row.push_back(fmt(d));
      }
      deltas.row(row);
    }
    if (key.second == "final") {
      if (e.has_clean)
        scatter.row({"none", std::to_string(key.first), fmt(e.clean[1]), fmt(e.clean[2]), "", ""});
      if (e.has_pois) {
        std::optional<double> db, da;
        if (e.has_clean && e.clean[1] && e.pois[1]) db = *e.pois[1] - *e.clean[1];
        if (e.has_clean && e.clean[2] && e.pois[2]) da = *e.pois[2] - *e.clean[2];
        scatter.row({e.attack, std::to_string(key.first), fmt(e.pois[1]), fmt(e.pois[2]), fmt(db), fmt(da)});
      }
    }
  }

  std::ostringstream txt;
  txt << "method " << method << ", attack " << attack << ", p=" << p << ", " << stat_of(clean_v["final"][0]).n
      << " seed(s); accuracies in %, mean±std over seeds\n";
  txt << pad("", 10) << "| " << pad("at poisoning", 30) << "| final\n";
  txt << pad("run", 10) << "| " << pad("T_p", 15) << pad("before T_p", 15) << "| " << pad("T_p", 15)
      << pad("before T_p", 15) << pad("after T_p", 15) << "total\n";
  auto emit = [&](const char* label, std::map<std::string, std::array<std::vector<double>, 4>>& src, bool sgn) {
    auto& a = src["at_poisoning"];
    auto& f = src["final"];
    txt << pad(label, 10) << "| " << pad(cell(a[0], sgn), 15) << pad(cell(a[1], sgn), 15) << "| "
        << pad(cell(f[0], sgn), 15) << pad(cell(f[1], sgn), 15) << pad(cell(f[2], sgn), 15) << cell(f[3], sgn) << '\n';
  };
  emit("clean", clean_v, false);
  if (!pois_v.empty()) {
    emit("poisoned", pois_v, false);
    emit("delta", delta_v, true);
  }
  write_text(dir / "report.txt", txt.str());
}

void cmd_run(const ExperimentPlan& plan, const fs::path& out, const RunOptions& options) {
  fs::create_directories(out);
  const auto pairs = run_plan(plan, options);
  write_text(out / "config.resolved.yaml", dump_config(plan));
  {
    CsvWriter runs(out / "runs.csv", csv_schema("runs"));
    CsvWriter matrix(out / "acc_matrix.csv", csv_schema("acc_matrix"));
    CsvWriter log(out / "train_log.csv", csv_schema("train_log"));
    auto emit = [&](const RunRecord& r) {
      const std::vector<std::string> head{r.run_id, std::to_string(r.seed), std::string(cl::name(plan.method.method)),
                                          r.poisoned ? plan.attack_label() : "none", std::to_string(plan.p)};
      if (!r.joint) {
        auto row = head;
        row.push_back("at_poisoning");
        for (auto& f : phase_fields(r.report.at_poisoning)) row.push_back(f);
        runs.row(row);
      }
      auto row = head;
      row.push_back("final");
      for (auto& f : phase_fields(r.report.final)) row.push_back(f);
      runs.row(row);
      for (std::size_t i = 0; i < r.acc.size(); ++i)
        for (std::size_t j = 0; j < r.acc[i].size(); ++j)
          matrix.row({r.run_id, std::to_string(r.seed), std::to_string(i), std::to_string(j), fmt(r.acc[i][j])});
      for (const auto& tl : r.logs)
        for (std::size_t e = 0; e < tl.epochs.size(); ++e)
          log.row({r.run_id, std::to_string(r.seed), std::to_string(tl.task_index), std::to_string(e),
                   fmt(plan.method.lr_at(static_cast<int>(e))), fmt(tl.epochs[e].train_loss),
                   fmt(tl.epochs[e].train_acc), fmt(tl.epochs[e].val_acc)});
    };
    for (const auto& pr : pairs) {
      emit(pr.clean);
      if (pr.poisoned) emit(*pr.poisoned);
    }
  }
  if (plan.defense.enabled) {
    fs::create_directories(out / "audit");
    for (const auto& pr : pairs)
      for (const RunRecord* r : {&pr.clean, pr.poisoned ? &*pr.poisoned : nullptr}) {
        if (!r) continue;
        std::ofstream a(out / "audit" / (r->run_id + ".jsonl"), std::ios::binary);
        defense::write_audit_log(a, r->audit);
      }
  }
  cmd_report(out);
  write_schema_manifest(out, {{"runs.csv", "runs"},
                              {"acc_matrix.csv", "acc_matrix"},
                              {"train_log.csv", "train_log"},
                              {"deltas.csv", "deltas"},
                              {"scatter.csv", "scatter"}});
}

void cmd_sweep(const ExperimentPlan& plan, const fs::path& out, const RunOptions& options) {
  fs::create_directories(out);
  const auto rows = run_sweep(plan, options);
  write_text(out / "config.resolved.yaml", dump_config(plan));
  const std::string axis(name(*plan.sweep.axis));
  const std::string method(cl::name(plan.method.method));
  {
    CsvWriter grid(out / "sweep.csv", csv_schema("sweep"));
    for (const auto& r : rows) {
      for (const auto* phase : {"at_poisoning", "final"}) {
        const bool at = std::string(phase) == "at_poisoning";
        const auto& pa = at ? r.poisoned.at_poisoning : r.poisoned.final;
        const auto& da = at ? r.delta.at_poisoning : r.delta.final;
        std::vector<std::string> row{axis, fmt(r.value), std::to_string(r.seed), method, plan.attack_label(),
                                     std::to_string(r.poisoned.p), phase};
        for (auto& f : phase_fields(pa)) row.push_back(f);
        for (auto& f : phase_fields(da)) row.push_back(f);
        grid.row(row);
      }
    }
  }
  {
    CsvWriter summary(out / "sweep_summary.csv", csv_schema("sweep_summary"));
    for (double v : plan.sweep.values) {
      for (const auto* phase : {"at_poisoning", "final"}) {
        const bool at = std::string(phase) == "at_poisoning";
        std::array<std::vector<double>, 4> acc;
        for (const auto& r : rows) {
          if (r.value != v) continue;
          const auto& d = at ? r.delta.at_poisoning : r.delta.final;
          acc[0].push_back(d.t_p);
          if (d.before) acc[1].push_back(*d.before);
          if (d.after) acc[2].push_back(*d.after);
          if (d.total) acc[3].push_back(*d.total);
        }
        std::vector<std::string> row{axis, fmt(v), phase, std::to_string(acc[0].size())};
        for (auto& a : acc) row.push_back(a.empty() ? "" : fmt(stat_of(a).mean));
        summary.row(row);
      }
    }
  }
  write_schema_manifest(out, {{"sweep.csv", "sweep"}, {"sweep_summary.csv", "sweep_summary"}});
}

}  // namespace stp::runner
