#include "stp/attacks.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <span>

#include "stp/error.hpp"
#include "stp/rng.hpp"

namespace stp::attack {

std::string_view name(AttackKind kind) {
  switch (kind) {
    case AttackKind::Base: return "base";
    case AttackKind::Bait: return "bait";
    case AttackKind::MultiBase: return "multibase";
    case AttackKind::MultiBait: return "multibait";
  }
  return "?";
}

AttackKind parse_attack(std::string_view n) {
  std::string lower(n);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto k : {AttackKind::Base, AttackKind::Bait, AttackKind::MultiBase, AttackKind::MultiBait})
    if (name(k) == lower) return k;
  throw InputError("unknown attack '" + std::string(n) + "'");
}

void PoisonSpec::validate() const {
  if (!(pcp > 0.0 && pcp <= 100.0)) throw InputError("poison spec: pcp must be in (0,100]");
  if (!(pp > 0.0 && pp <= 100.0)) throw InputError("poison spec: pp must be in (0,100]");
  if (severity < 1 || severity > 5) throw InputError("poison spec: severity must be in [1,5]");
  if (pn < 1) throw InputError("poison spec: pn must be >= 1");
  if (static_cast<std::size_t>(pn) > kinds.size())
    throw InputError("poison spec: pn=" + std::to_string(pn) + " exceeds " + std::to_string(kinds.size()) +
                     " available corruptions");
  for (const auto& k : kinds) corrupt::parse_kind(k);
}

PoisonSpec preset(AttackKind kind, const std::vector<std::string>& catalog) {
  if (catalog.size() < 5) throw InputError("preset: corruption catalog needs at least 5 kinds");
  PoisonSpec s;
  s.kinds = catalog;
  s.severity = 5;
  s.pp = 100.0;
  switch (kind) {
    case AttackKind::Base: s.pcp = 100.0; s.pn = 1; break;
    case AttackKind::Bait: s.pcp = 50.0; s.pn = 1; break;
    case AttackKind::MultiBase: s.pcp = 100.0; s.pn = 5; break;
    case AttackKind::MultiBait: s.pcp = 50.0; s.pn = 5; break;
  }
  return s;
}

std::vector<int> choose_poisoned_classes(const std::vector<int>& classes, double pcp, std::uint64_t seed) {
  if (classes.empty()) throw InputError("choose_poisoned_classes: empty class set");
  if (!(pcp > 0.0 && pcp <= 100.0)) throw InputError("choose_poisoned_classes: pcp must be in (0,100]");
  const auto m = static_cast<long>(classes.size());
  const long count = std::clamp(data::round_half_up(pcp / 100.0 * static_cast<double>(m)), 1L, m);
  std::vector<int> pool = classes;
  std::sort(pool.begin(), pool.end());
  CounterRng rng(seed, {0xC0C0ull});
  rng.shuffle(std::span(pool));
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::map<int, corrupt::CorruptionKind> assign_corruptions(const std::vector<int>& poisoned_classes,
                                                          const PoisonSpec& spec) {
  if (spec.pn < 1) throw InputError("assign_corruptions: pn must be >= 1");
  if (static_cast<std::size_t>(spec.pn) > spec.kinds.size())
    throw InputError("assign_corruptions: pn exceeds the number of corruption kinds");
  std::vector<int> sorted = poisoned_classes;
  std::sort(sorted.begin(), sorted.end());
  std::map<int, corrupt::CorruptionKind> out;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    out[sorted[i]] = {corrupt::parse_kind(spec.kinds[i % static_cast<std::size_t>(spec.pn)]), spec.severity};
  return out;
}

namespace {

void poison_split(std::vector<data::Sample>& samples, const std::map<int, corrupt::CorruptionKind>& plan,
                  const PoisonSpec& spec, std::uint64_t split_tag) {
  for (const auto& [cls, kind] : plan) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].label == cls) idx.push_back(i);
    const auto n = static_cast<std::size_t>(
        std::clamp(data::round_half_up(spec.pp / 100.0 * static_cast<double>(idx.size())), 0L,
                   static_cast<long>(idx.size())));
    CounterRng rng(spec.seed, {0x1D5ull, split_tag, static_cast<std::uint64_t>(cls)});
    rng.shuffle(std::span(idx));
    for (std::size_t j = 0; j < n; ++j) {
      auto& s = samples[idx[j]];
      const std::uint64_t noise_seed = derive_key(spec.seed, {split_tag, static_cast<std::uint64_t>(idx[j])});
      s.image = corrupt::apply(kind, s.image, noise_seed);
      s.poisoned = true;
    }
  }
}

}  // namespace

data::TaskDataset poison_task(const data::TaskDataset& task, const PoisonSpec& spec) {
  spec.validate();
  if (task.train.empty()) throw InputError("poison_task: task has no training samples");
  const auto classes = choose_poisoned_classes(task.classes, spec.pcp, spec.seed);
  const auto plan = assign_corruptions(classes, spec);
  data::TaskDataset out = task;
  poison_split(out.train, plan, spec, 1);
  poison_split(out.val, plan, spec, 2);
  return out;
}

}  // namespace stp::attack

namespace stp::attack {

data::Stream apply_plan(const data::Stream& stream, const PoisonPlan& plan) {
  if (plan.task < 0 || static_cast<std::size_t>(plan.task) >= stream.size())
    throw InputError("poison plan targets task " + std::to_string(plan.task) + " of a " +
                     std::to_string(stream.size()) + "-task stream");
  data::Stream out = stream;
  out[static_cast<std::size_t>(plan.task)] = poison_task(stream[static_cast<std::size_t>(plan.task)], plan.spec);
  return out;
}

}  // namespace stp::attack
