// One PASS/FAIL line per acceptance criterion, with the measured values.
// Exits 1 if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "stp/cl/trainer.hpp"
#include "stp/data/synth.hpp"
#include "stp/runner/commands.hpp"
#include "stp/runner/config.hpp"

using namespace stp;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("[%s] %2d  %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
}

std::string f2(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

const runner::RunOptions kOpts{1, 0};

runner::ExperimentPlan plan_with(cl::Method m, std::optional<attack::AttackKind> a) {
  auto plan = runner::parse_config("");
  plan.method.method = m;
  plan.method.lambda = cl::MethodConfig::default_lambda(m);
  if (a) {
    plan.attack = a;
    plan.poison = attack::preset(*a);
  }
  return plan;
}

// Seed-mean of poisoned-minus-clean, in points.
struct MeanDelta {
  double fin_before = 0, fin_after = 0, fin_total = 0, fin_tp = 0;
};

MeanDelta mean_delta(const std::vector<runner::SeedPair>& pairs) {
  MeanDelta m;
  for (const auto& sp : pairs) {
    const auto d = cl::report_delta(sp.poisoned->report, sp.clean.report);
    m.fin_before += d.final.before.value_or(0);
    m.fin_after += d.final.after.value_or(0);
    m.fin_total += d.final.total.value_or(0);
    m.fin_tp += d.final.t_p;
  }
  const double k = 100.0 / static_cast<double>(pairs.size());
  m.fin_before *= k;
  m.fin_after *= k;
  m.fin_total *= k;
  m.fin_tp *= k;
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void c1() {
  double worst = 0;
  for (auto k : {oracle::LossKind::Ce, oracle::LossKind::CeLwf, oracle::LossKind::CeEwc})
    for (std::uint64_t s : {1, 2, 3}) worst = std::max(worst, oracle::finite_difference_error(k, s, 100));
  report(1, worst < 1e-4, "gradient oracle: worst relative error " + std::to_string(worst) + " (< 1e-4), 3 losses x 3 seeds x 100 params");
}

void c2() {
  const auto stream = data::make_stream(data::StreamSpec{});
  auto base = cl::MethodConfig{};
  base.epochs = 10;
  base.lr_milestones = {6, 8};
  auto ft = base;
  ft.method = cl::Method::Finetune;
  ft.lambda = 0;
  auto lwf = base;
  lwf.method = cl::Method::Lwf;
  lwf.lambda = 0;
  auto rep = base;
  rep.method = cl::Method::Replay;
  rep.buffer_capacity = 0;
  auto ewc = base;
  ewc.method = cl::Method::Ewc;
  ewc.lambda = 5000;

  const auto r_ft = cl::run_stream(stream, ft, 0);
  const auto r_lwf = cl::run_stream(stream, lwf, 0);
  const auto r_rep = cl::run_stream(stream, rep, 0);
  const bool lwf_ok = r_lwf.final.model == r_ft.final.model && r_lwf.acc == r_ft.acc;
  const bool rep_ok = r_rep.final.model == r_ft.final.model && r_rep.acc == r_ft.acc;

  auto l = cl::make_learner(256, ewc, 0);
  cl::train_task(l, stream[0], ewc, 0, 0);
  const float pen = nn::ewc_penalty(l.model, l.ewc, 5000.0f);

  bool ck_ok = true;
  for (std::size_t i = 0; i < r_ft.checkpoints.size(); ++i) {
    const auto back = cl::restore(r_ft.checkpoints[i]);
    ck_ok = ck_ok && cl::make_checkpoint(back, static_cast<int>(i)).bytes == r_ft.checkpoints[i].bytes;
  }
  ck_ok = ck_ok && cl::restore(cl::make_checkpoint(r_ft.final, 3)) == r_ft.final;
  report(2, lwf_ok && rep_ok && pen == 0.0f && ck_ok,
         std::string("identities: lwf(l=0)==finetune ") + (lwf_ok ? "yes" : "no") + ", replay(cap=0)==finetune " +
             (rep_ok ? "yes" : "no") + ", ewc penalty at anchor " + std::to_string(pen) + ", restore(checkpoint)==id " +
             (ck_ok ? "yes" : "no"));
}

void c3() {
  int held = 0;
  for (std::uint64_t d = 0; d < 200; ++d) held += oracle::poison_laws_hold(d);
  report(3, held == 200, "poisoning laws held on " + std::to_string(held) + "/200 random draws");
}

void c4() {
  const std::vector<double> flat{3, 3, 3, 3}, unit{0, 1, 2, 3}, steep{0, 2.5};
  const double e_flat = std::abs(defense::profile_angle(flat));
  const double e_unit = std::abs(defense::profile_angle(unit) - 45.0);
  const double e_steep = std::abs(defense::profile_angle(steep) - oracle::deg(std::atan(2.5)));
  CounterRng rng(404);
  int ordered = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(2 + rng.below(15));
    for (auto& x : v) x = rng.uniform(0, 89.9);
    using defense::Statistic;
    const double p75 = defense::aggregate_stat(v, Statistic::P75), p90 = defense::aggregate_stat(v, Statistic::P90),
                 mx = defense::aggregate_stat(v, Statistic::Max), mpi = defense::aggregate_stat(v, Statistic::MaxPlusIqr);
    ordered += p75 <= p90 && p90 <= mx && mx <= mpi;
  }
  const double worst = std::max({e_flat, e_unit, e_steep});
  report(4, worst < 1e-9 && ordered == 100,
         "angles: worst closed-form error " + std::to_string(worst) + " (< 1e-9); ordering held on " +
             std::to_string(ordered) + "/100 multisets");
}

void c5(const MeanDelta& lwf_base) {
  const auto joint = mean_delta(runner::run_plan(plan_with(cl::Method::Joint, attack::AttackKind::Base), kOpts));
  const bool ok = joint.fin_before >= -2 && joint.fin_after >= -2 && lwf_base.fin_before <= -8;
  report(5, ok,
         "JOINT vs LwF (BASE sev 5, 5 seeds): JOINT before " + f2(joint.fin_before) + " / after " + f2(joint.fin_after) +
             " (>= -2); LwF final before " + f2(lwf_base.fin_before) + " (<= -8)");
}

void c6(const MeanDelta& lwf_base) {
  const auto bait = mean_delta(runner::run_plan(plan_with(cl::Method::Lwf, attack::AttackKind::Bait), kOpts));
  const auto mbait = mean_delta(runner::run_plan(plan_with(cl::Method::Lwf, attack::AttackKind::MultiBait), kOpts));
  const bool a = std::abs(bait.fin_total) >= std::abs(mbait.fin_total) - 1;
  const bool b = lwf_base.fin_before < lwf_base.fin_after;
  report(6, a && b,
         "|BAIT total| " + f2(std::abs(bait.fin_total)) + " vs |MULTIBAIT total| " + f2(std::abs(mbait.fin_total)) +
             " (tol 1): " + (a ? "ok" : "no") + "; BASE before " + f2(lwf_base.fin_before) + " < after " +
             f2(lwf_base.fin_after) + ": " + (b ? "ok" : "no"));
}

void c7() {
  auto plan = plan_with(cl::Method::Lwf, attack::AttackKind::Bait);
  plan.sweep.axis = runner::SweepAxis::Severity;
  plan.sweep.values = {1, 2, 3, 4, 5};
  const auto rows = runner::run_sweep(plan, kOpts);
  std::map<double, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    acc[r.value].first += 100 * r.delta.final.total.value_or(0);
    ++acc[r.value].second;
  }
  std::vector<double> sev, tot;
  std::string trace;
  for (const auto& [v, st] : acc) {
    sev.push_back(v);
    tot.push_back(st.first / st.second);
    trace += (trace.empty() ? "" : ",") + f2(tot.back());
  }
  const double rho = oracle::spearman(sev, tot);
  const bool ok = rho <= -0.8 && std::abs(tot.front()) <= 2;
  report(7, ok, "BAIT severity sweep total deltas [" + trace + "]: spearman " + f2(rho) + " (<= -0.8), |sev1| " +
                    f2(std::abs(tot.front())) + " (<= 2)");
}

void c8(const std::vector<runner::SeedPair>& base_pairs) {
  double gap = 0, val = 0, test = 0;
  for (const auto& sp : base_pairs) {
    val += 100 * sp.poisoned->t_p_val_acc;
    test += 100 * sp.poisoned->report.at_poisoning.t_p;
  }
  val /= static_cast<double>(base_pairs.size());
  test /= static_cast<double>(base_pairs.size());
  gap = val - test;
  report(8, gap >= 15, "BASE sev 5: T_p val acc " + f2(val) + " - clean test acc " + f2(test) + " = " + f2(gap) + " (>= 15)");
}

void c9() {
  const auto plan = runner::parse_config("attack:\n  preset: base\n");
  const auto res = runner::run_defense_harness(plan, kOpts);
  const auto base = res.metrics("base", defense::Statistic::Max);
  const auto bait = res.metrics("bait", defense::Statistic::Max);
  const double specificity = base.clean_acc, rec_base = base.attack_acc, rec_bait = bait.attack_acc;

  // 10-point instance: 8 clean candidates and both BASE candidates.
  std::vector<defense::ScoredTask> ten;
  const auto scored = res.scored("base");
  for (const auto& s : scored)
    if (!s.poisoned && ten.size() < 8) ten.push_back(s);
  for (const auto& s : scored)
    if (s.poisoned && ten.size() < 10) ten.push_back(s);
  const double disc = oracle::pr_curve_discrepancy(ten);

  const bool ok = specificity >= 0.9 && rec_base >= 0.6 && rec_base >= rec_bait && disc == 0.0 && ten.size() == 10;
  report(9, ok,
         "harness (MAX): specificity " + f2(specificity) + " (>= 0.9), BASE recall " + f2(rec_base) + " (>= 0.6), BAIT recall " +
             f2(rec_bait) + " (<= BASE); PR vs brute force on " + std::to_string(ten.size()) + " points: max diff " +
             std::to_string(disc));
}

void c10() {
  auto plan = plan_with(cl::Method::Lwf, attack::AttackKind::Base);
  plan.sweep.axis = runner::SweepAxis::Lambda;
  plan.sweep.values = {1, 10};
  const auto rows = runner::run_sweep(plan, kOpts);
  std::map<double, std::array<double, 3>> m;
  for (const auto& r : rows) {
    m[r.value][0] += 100 * r.delta.final.before.value_or(0);
    m[r.value][1] += 100 * r.delta.final.after.value_or(0);
    m[r.value][2] += 1;
  }
  const double b1 = m[1][0] / m[1][2], a1 = m[1][1] / m[1][2], b10 = m[10][0] / m[10][2], a10 = m[10][1] / m[10][2];
  const bool ok = b10 <= b1 + 1 && a10 >= a1 - 1;
  report(10, ok, "lambda 1 -> 10: before " + f2(b1) + " -> " + f2(b10) + " (more negative, tol 1), after " + f2(a1) +
                     " -> " + f2(a10) + " (less negative, tol 1)");
}

void c11() {
  const auto root = fs::temp_directory_path() / "stp_acceptance_det";
  fs::remove_all(root);
  int files = 0, differing = 0;
  for (const char* cfg : {"", "attack:\n  preset: base\n"}) {
    const auto plan = runner::parse_config(cfg);
    const auto a = root / (std::string("a") + (*cfg ? "_base" : "")), b = root / (std::string("b") + (*cfg ? "_base" : ""));
    runner::cmd_run(plan, a, kOpts);
    runner::cmd_run(plan, b, kOpts);
    for (const auto& e : fs::directory_iterator(a)) {
      if (e.path().extension() != ".csv") continue;
      ++files;
      differing += slurp(e.path()) != slurp(b / e.path().filename());
    }
  }
  report(11, files > 0 && differing == 0,
         "determinism: " + std::to_string(files) + " CSV files from two repeated default runs, " +
             std::to_string(differing) + " differ");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  c1();
  c2();
  c3();
  c4();
  const auto base_pairs = runner::run_plan(plan_with(cl::Method::Lwf, attack::AttackKind::Base), kOpts);
  const auto lwf_base = mean_delta(base_pairs);
  c5(lwf_base);
  c6(lwf_base);
  c7();
  c8(base_pairs);
  c9();
  c10();
  c11();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d/11 criteria passed in %.0f s\n", 11 - failures, secs);
  return failures == 0 ? 0 : 1;
}
