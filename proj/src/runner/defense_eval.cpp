#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>

#include <nlohmann/json.hpp>

#include "stp/data/synth.hpp"
#include "stp/error.hpp"
#include "stp/parallel.hpp"
#include "stp/rng.hpp"
#include "stp/runner/commands.hpp"
#include "stp/runner/csv.hpp"

namespace stp::runner {

namespace fs = std::filesystem;

double HarnessResult::alpha(int instance, defense::Statistic statistic) const {
  return defense::aggregate_stat(calibration_angles.at(static_cast<std::size_t>(instance)), statistic);
}

std::vector<defense::ScoredTask> HarnessResult::scored(const std::string& attack) const {
  std::vector<defense::ScoredTask> out;
  for (const auto& c : candidates)
    if (!c.poisoned || c.attack == attack) out.push_back({c.beta_deg, c.poisoned});
  return out;
}

std::vector<double> HarnessResult::alphas(const std::string& attack, defense::Statistic statistic) const {
  std::vector<double> out;
  for (const auto& c : candidates)
    if (!c.poisoned || c.attack == attack) out.push_back(alpha(c.instance, statistic));
  return out;
}

defense::DetectionMetrics HarnessResult::metrics(const std::string& attack, defense::Statistic statistic) const {
  std::vector<char> predicted, truth;
  for (const auto& c : candidates) {
    if (c.poisoned && c.attack != attack) continue;
    predicted.push_back(c.beta_deg > alpha(c.instance, statistic));
    truth.push_back(c.poisoned);
  }
  const auto n = predicted.size();
  std::unique_ptr<bool[]> p(new bool[n]), t(new bool[n]);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = predicted[i];
    t[i] = truth[i];
  }
  return defense::detection_metrics(std::span<const bool>(p.get(), n), std::span<const bool>(t.get(), n));
}

HarnessResult run_defense_harness(const ExperimentPlan& plan, const RunOptions& options) {
  const auto& h = plan.harness;
  h.validate();
  const int c = plan.defense.calibration_task;
  if (c >= h.candidate_position)
    throw InputError("defense-eval: calibration task " + std::to_string(c) + " must precede the candidate position " +
                     std::to_string(h.candidate_position));

  data::StreamSpec pool_spec = plan.stream;
  pool_spec.num_classes = h.pool_classes;
  pool_spec.task_class_counts.assign(static_cast<std::size_t>(h.candidate_position + 1), h.classes_per_task);
  const data::ClassPool pool = data::synth_class_pool(pool_spec);

  // Each instance is its own short stream over a seeded class permutation.
  std::vector<data::Stream> streams;
  for (int i = 0; i < h.tasks; ++i) {
    data::StreamSpec s = pool_spec;
    s.permute_classes = true;
    s.seed = derive_key(plan.stream.seed, {0x4A2E55ull, static_cast<std::uint64_t>(i)});
    auto st = data::build_stream(pool, s);
    if (s.val_per_class > 0)
      for (auto& task : st) task = data::train_val_split(task, s.val_fraction(), s.seed);
    streams.push_back(std::move(st));
  }

  std::vector<int> order(static_cast<std::size_t>(h.tasks));
  std::iota(order.begin(), order.end(), 0);
  CounterRng pick(plan.stream.seed, {0x9015EDull});
  pick.shuffle(std::span(order));
  std::vector<int> poisoned(order.begin(), order.begin() + h.poisoned_count());
  std::sort(poisoned.begin(), poisoned.end());

  std::vector<std::uint64_t> cal_seeds = plan.defense.calibration_seeds;
  for (auto& s : cal_seeds) s += options.seed_offset;

  HarnessResult out;
  out.calibration_angles = parallel_map(streams.size(), options.workers, [&](std::size_t i) {
    auto a = defense::calibration_angles(streams[i], c, plan.method, cal_seeds, 1);
    std::sort(a.begin(), a.end());
    return a;
  });

  struct Job {
    int instance;
    std::string attack;  // "none" = clean
  };
  std::vector<Job> jobs;
  for (int i = 0; i < h.tasks; ++i)
    if (!std::binary_search(poisoned.begin(), poisoned.end(), i)) jobs.push_back({i, "none"});
  for (auto a : h.attacks)
    for (int i : poisoned) jobs.push_back({i, std::string(attack::name(a))});

  struct Outcome {
    Candidate candidate;
    defense::AuditRecord audit;
  };
  auto outcomes = parallel_map(jobs.size(), options.workers, [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto i = static_cast<std::size_t>(job.instance);
    const std::uint64_t seed = options.seed_offset + i;
    data::Stream stream = streams[i];
    const bool pois = job.attack != "none";
    if (pois) {
      attack::PoisonPlan pp{attack::preset(attack::parse_attack(job.attack)), h.candidate_position};
      if (plan.poison) pp.spec.kinds = plan.poison->kinds;
      pp.spec.seed = seed;
      stream = attack::apply_plan(stream, pp);
    }
    const auto detector = defense::detector_from_angles(out.calibration_angles[i], plan.defense.statistic);
    auto g = defense::guarded_run(stream, plan.method, seed, detector, h.candidate_position);
    const auto& ev = g.events.back();
    Outcome o;
    o.candidate = {job.instance, seed, job.attack, pois, ev.task_id, ev.beta_deg};
    o.audit = ev;
    return o;
  });
  for (auto& o : outcomes) {
    out.candidates.push_back(o.candidate);
    out.audit.push_back(o.audit);
  }
  return out;
}

namespace {

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void cmd_defense_calibrate(const ExperimentPlan& plan, const fs::path& out, const RunOptions& options) {
  fs::create_directories(out);
  const auto stream = build_plan_stream(plan);
  std::vector<std::uint64_t> seeds = plan.defense.calibration_seeds;
  for (auto& s : seeds) s += options.seed_offset;
  const auto angles =
      defense::calibration_angles(stream, plan.defense.calibration_task, plan.method, seeds, options.workers);
  {
    CsvWriter csv(out / "calibration.csv", csv_schema("calibration"));
    for (std::size_t i = 0; i < seeds.size(); ++i) csv.row({std::to_string(seeds[i]), fmt(angles[i])});
  }
  const auto det = defense::detector_from_angles(angles, plan.defense.statistic);
  nlohmann::ordered_json j;
  j["statistic"] = std::string(defense::name(det.statistic));
  j["alpha_deg"] = *det.alpha_deg;
  j["calibration_task_id"] = stream[static_cast<std::size_t>(plan.defense.calibration_task)].task_id;
  j["calibration_seeds"] = seeds;
  j["angles_deg"] = det.calibration_angles;
  nlohmann::ordered_json all;
  {
    CsvWriter csv(out / "alphas.csv", csv_schema("alphas"));
    for (auto s : defense::all_statistics()) {
      const double a = defense::aggregate_stat(angles, s);
      all[std::string(defense::name(s))] = a;
      csv.row({"0", std::string(defense::name(s)), fmt(a)});
    }
  }
  j["alpha_by_statistic"] = all;
  write_json(out / "detector.json", j);
  write_schema_manifest(out, {{"calibration.csv", "calibration"}, {"alphas.csv", "alphas"}});
}

void cmd_defense_eval(const ExperimentPlan& plan, const fs::path& out, const RunOptions& options) {
  fs::create_directories(out);
  const auto result = run_defense_harness(plan, options);
  std::map<std::string, std::string> files{{"candidates.csv", "candidates"},
                                           {"alphas.csv", "alphas"},
                                           {"detection.csv", "detection"},
                                           {"pr_curve.csv", "pr_curve"}};
  {
    CsvWriter csv(out / "candidates.csv", csv_schema("candidates"));
    for (const auto& c : result.candidates)
      csv.row({std::to_string(c.instance), std::to_string(c.seed), c.attack, c.poisoned ? "1" : "0",
               std::to_string(c.task_id), fmt(c.beta_deg)});
  }
  {
    CsvWriter csv(out / "alphas.csv", csv_schema("alphas"));
    for (std::size_t i = 0; i < result.calibration_angles.size(); ++i)
      for (auto s : defense::all_statistics())
        csv.row({std::to_string(i), std::string(defense::name(s)), fmt(result.alpha(static_cast<int>(i), s))});
  }
  {
    CsvWriter det(out / "detection.csv", csv_schema("detection"));
    CsvWriter pr(out / "pr_curve.csv", csv_schema("pr_curve"));
    for (auto a : plan.harness.attacks) {
      const std::string an(attack::name(a));
      for (auto s : defense::all_statistics()) {
        const auto m = result.metrics(an, s);
        det.row({an, std::string(defense::name(s)), fmt(m.acc), fmt(m.clean_acc), fmt(m.attack_acc), fmt(m.precision),
                 fmt(m.f1), std::to_string(m.tp), std::to_string(m.fp), std::to_string(m.tn), std::to_string(m.fn)});
      }
      const auto scored = result.scored(an);
      const auto positives = std::count_if(scored.begin(), scored.end(), [](const auto& t) { return t.poisoned; });
      // A one-label population has no curve; the files stay header-only.
      std::vector<defense::PrPoint> curve;
      if (positives > 0 && static_cast<std::size_t>(positives) < scored.size()) curve = defense::pr_curve(scored);
      for (const auto& pt : curve) pr.row({an, fmt(pt.threshold), fmt(pt.precision), fmt(pt.recall)});
      std::stable_sort(curve.begin(), curve.end(), [](const auto& x, const auto& y) {
        return x.recall != y.recall ? x.recall < y.recall : x.precision > y.precision;
      });
      const std::string file = "pr_points_" + an + ".csv";
      CsvWriter pts(out / file, csv_schema("pr_points"));
      for (const auto& pt : curve) pts.row({fmt(pt.recall), fmt(pt.precision)});
      files[file] = "pr_points";
    }
  }
  {
    std::ofstream audit(out / "audit.jsonl", std::ios::binary);
    if (!audit) throw FileError("cannot write " + (out / "audit.jsonl").string());
    defense::write_audit_log(audit, result.audit);
  }
  {
    std::ofstream cfg(out / "config.resolved.yaml", std::ios::binary);
    cfg << dump_config(plan);
  }
  write_schema_manifest(out, files);
}

}  // namespace stp::runner
