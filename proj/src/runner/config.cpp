#include "stp/runner/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "stp/error.hpp"

namespace stp::runner {

int HarnessMix::poisoned_count() const {
  // Largest remainder: floor both shares, hand the leftover task to the
  // larger fractional part (ties go to the clean side).
  const double clean_share = clean_fraction * tasks;
  const double pois_share = poisoned_fraction * tasks;
  int clean = static_cast<int>(std::floor(clean_share));
  int pois = static_cast<int>(std::floor(pois_share));
  while (clean + pois < tasks) {
    if (pois_share - pois > clean_share - clean) ++pois;
    else ++clean;
  }
  return pois;
}

void HarnessMix::validate() const {
  if (tasks < 2) throw InputError("harness: need at least 2 tasks");
  if (clean_fraction < 0 || poisoned_fraction < 0 || std::abs(clean_fraction + poisoned_fraction - 1.0) > 1e-9)
    throw InputError("harness: clean and poisoned fractions must be nonnegative and sum to 1");
  if (attacks.empty()) throw InputError("harness: attack list is empty");
  if (classes_per_task < 1) throw InputError("harness: classes_per_task must be >= 1");
  if (candidate_position < 1) throw InputError("harness: candidate_position must be >= 1");
  if ((candidate_position + 1) * classes_per_task > pool_classes)
    throw InputError("harness: pool of " + std::to_string(pool_classes) + " classes cannot hold " +
                     std::to_string(candidate_position + 1) + " disjoint tasks");
}

std::string_view name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Severity: return "severity";
    case SweepAxis::Pp: return "pp";
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::PPosition: return "p_position";
    case SweepAxis::Pn: return "pn";
  }
  return "?";
}

SweepAxis parse_axis(std::string_view n) {
  for (auto a : {SweepAxis::Severity, SweepAxis::Pp, SweepAxis::Lambda, SweepAxis::PPosition, SweepAxis::Pn})
    if (name(a) == n) return a;
  throw InputError("unknown sweep axis '" + std::string(n) + "'");
}

std::string ExperimentPlan::attack_label() const {
  if (!poison) return "none";
  if (attack) return std::string(attack::name(*attack));
  return "custom";
}

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

// A mapping node plus bookkeeping for unknown-key detection.
class Section {
 public:
  Section(YAML::Node node, std::string path, int fallback_line) : node_(std::move(node)), path_(std::move(path)) {
    line_ = node_.IsDefined() ? line_of(node_) : fallback_line;
    if (node_.IsDefined() && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_, line_, "expected a mapping");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node get(const std::string& key) {
    seen_.insert(key);
    if (!node_.IsDefined() || node_.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node& n = node_;  // const lookup; operator[] on a mutable map inserts the key
    return n[key];
  }

  template <typename T>
  bool take(const std::string& key, T& out) {
    const YAML::Node n = get(key);
    if (!n.IsDefined()) return false;
    out = convert<T>(n, key_path(key));
    return true;
  }

  Section child(const std::string& key) { return Section(get(key), key_path(key), line_); }

  void finish() const {
    if (!node_.IsDefined() || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(key_path(key), line_of(kv.first), "unknown key");
    }
  }

  int line() const { return line_; }
  const std::string& path() const { return path_; }

  template <typename T>
  static T convert(const YAML::Node& n, const std::string& path) {
    try {
      if constexpr (std::is_same_v<T, bool> || std::is_arithmetic_v<T> || std::is_same_v<T, std::string>) {
        if (!n.IsScalar()) throw ConfigError(path, line_of(n), "expected a scalar");
        return n.as<T>();
      } else {
        if (!n.IsSequence()) throw ConfigError(path, line_of(n), "expected a list");
        T out;
        for (std::size_t i = 0; i < n.size(); ++i)
          out.push_back(convert<typename T::value_type>(n[i], path + "[" + std::to_string(i) + "]"));
        return out;
      }
    } catch (const YAML::BadConversion&) {
      throw ConfigError(path, line_of(n), "type mismatch for value '" + (n.IsScalar() ? n.Scalar() : "") + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  int line_ = 0;
  std::set<std::string> seen_;
};

// Runs a library validator and rethrows its message as a config error.
void check(const std::string& path, int line, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    throw ConfigError(path, line, e.what());
  }
}

void parse_stream(Section s, data::StreamSpec& st) {
  s.take("classes", st.num_classes);
  s.take("task_classes", st.task_class_counts);
  s.take("side", st.side);
  s.take("channels", st.channels);
  s.take("train_per_class", st.train_per_class);
  s.take("val_per_class", st.val_per_class);
  s.take("test_per_class", st.test_per_class);
  s.take("seed", st.seed);
  s.take("frequency", st.frequency);
  s.take("noise_sigma", st.noise_sigma);
  s.take("phase_jitter", st.phase_jitter);
  s.take("permute_classes", st.permute_classes);
  s.finish();
  if (st.task_class_counts.empty()) throw ConfigError(s.key_path("task_classes"), s.line(), "no tasks");
  int total = 0;
  for (int c : st.task_class_counts) {
    if (c < 1) throw ConfigError(s.key_path("task_classes"), s.line(), "every task needs at least one class");
    total += c;
  }
  if (total > st.num_classes)
    throw ConfigError(s.key_path("task_classes"), s.line(),
                      std::to_string(total) + " classes requested from a pool of " + std::to_string(st.num_classes));
  if (st.train_per_class < 1 || st.test_per_class < 1 || st.val_per_class < 0)
    throw ConfigError(s.key_path("train_per_class"), s.line(), "sample counts must be positive");
}

void parse_method(Section s, cl::MethodConfig& m) {
  if (std::string n; s.take("name", n)) check(s.key_path("name"), s.line(), [&] { m.method = cl::parse_method(n); });
  m.lambda = cl::MethodConfig::default_lambda(m.method);
  s.take("lambda", m.lambda);
  s.take("temperature", m.temperature);
  s.take("fisher_merge", m.fisher_merge);
  s.take("buffer_capacity", m.buffer_capacity);
  s.take("epochs", m.epochs);
  s.take("batch_size", m.batch_size);
  s.take("lr", m.lr);
  s.take("lr_milestones", m.lr_milestones);
  s.take("lr_decay", m.lr_decay);
  s.take("momentum", m.momentum);
  s.take("weight_decay", m.weight_decay);
  s.take("clip_grad_norm", m.clip_grad_norm);
  s.take("hidden", m.hidden);
  s.finish();
  check(s.path(), s.line(), [&] { m.validate(); });
}

void parse_attack(Section s, ExperimentPlan& plan) {
  std::string preset = "none";
  const bool has_preset = s.take("preset", preset);
  attack::PoisonSpec spec;
  bool custom = false;
  if (has_preset && preset != "none")
    check(s.key_path("preset"), s.line(), [&] {
      plan.attack = attack::parse_attack(preset);
      spec = attack::preset(*plan.attack);
    });
  custom |= s.take("pcp", spec.pcp);
  custom |= s.take("pn", spec.pn);
  custom |= s.take("pp", spec.pp);
  custom |= s.take("severity", spec.severity);
  custom |= s.take("kinds", spec.kinds);
  s.take("seed", spec.seed);
  s.take("p", plan.p);
  s.finish();
  if (plan.attack || custom) {
    check(s.path(), s.line(), [&] { spec.validate(); });
    plan.poison = spec;
  }
}

void parse_defense(Section s, DefenseConfig& d) {
  s.take("enabled", d.enabled);
  if (std::string st; s.take("statistic", st))
    check(s.key_path("statistic"), s.line(), [&] { d.statistic = defense::parse_statistic(st); });
  s.take("calibration_task", d.calibration_task);
  s.take("calibration_seeds", d.calibration_seeds);
  s.finish();
  if (d.calibration_seeds.size() < 2)
    throw ConfigError(s.key_path("calibration_seeds"), s.line(), "need at least 2 calibration seeds");
  if (d.calibration_task < 0) throw ConfigError(s.key_path("calibration_task"), s.line(), "must be >= 0");
}

void parse_harness(Section s, HarnessMix& h) {
  s.take("tasks", h.tasks);
  const bool has_clean = s.take("clean_fraction", h.clean_fraction);
  const bool has_pois = s.take("poisoned_fraction", h.poisoned_fraction);
  if (has_clean && !has_pois) h.poisoned_fraction = 1.0 - h.clean_fraction;
  if (has_pois && !has_clean) h.clean_fraction = 1.0 - h.poisoned_fraction;
  if (std::vector<std::string> names; s.take("attacks", names)) {
    h.attacks.clear();
    for (const auto& n : names) check(s.key_path("attacks"), s.line(), [&] { h.attacks.push_back(attack::parse_attack(n)); });
  }
  s.take("pool_classes", h.pool_classes);
  s.take("classes_per_task", h.classes_per_task);
  s.take("candidate_position", h.candidate_position);
  s.finish();
  check(s.path(), s.line(), [&] { h.validate(); });
}

void parse_sweep(Section s, SweepConfig& sw) {
  if (std::string a; s.take("axis", a)) check(s.key_path("axis"), s.line(), [&] { sw.axis = parse_axis(a); });
  s.take("values", sw.values);
  s.finish();
  if (sw.axis && sw.values.empty()) throw ConfigError(s.key_path("values"), s.line(), "sweep needs at least one value");
}

}  // namespace

ExperimentPlan parse_config(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.mark.line + 1, e.msg);
  }
  ExperimentPlan plan;
  Section top(root, "", 1);
  parse_stream(top.child("stream"), plan.stream);
  parse_method(top.child("method"), plan.method);
  parse_attack(top.child("attack"), plan);

  if (const auto seeds = top.get("seeds"); seeds.IsDefined()) {
    if (seeds.IsScalar()) {
      const auto n = Section::convert<int>(seeds, "seeds");
      if (n < 1) throw ConfigError("seeds", line_of(seeds), "seed count must be >= 1");
      plan.seeds.clear();
      for (int i = 0; i < n; ++i) plan.seeds.push_back(static_cast<std::uint64_t>(i));
    } else {
      plan.seeds = Section::convert<std::vector<std::uint64_t>>(seeds, "seeds");
    }
  }
  if (plan.seeds.empty()) throw ConfigError("seeds", top.line(), "seed list is empty");

  parse_defense(top.child("defense"), plan.defense);
  parse_harness(top.child("harness"), plan.harness);
  parse_sweep(top.child("sweep"), plan.sweep);
  {
    Section out = top.child("output");
    std::string dir;
    if (out.take("dir", dir)) plan.out_dir = dir;
    out.finish();
  }
  top.finish();

  const auto tasks = static_cast<int>(plan.stream.task_class_counts.size());
  const YAML::Node& croot = root;
  const int p_line = croot.IsMap() && croot["attack"] && croot["attack"]["p"] ? line_of(croot["attack"]["p"]) : top.line();
  if (plan.p < 0 || plan.p >= tasks)
    throw ConfigError("attack.p", p_line,
                      "p=" + std::to_string(plan.p) + " is outside a " + std::to_string(tasks) + "-task stream");
  if (plan.defense.calibration_task >= tasks)
    throw ConfigError("defense.calibration_task", top.line(), "calibration task is outside the stream");
  return plan;
}

ExperimentPlan load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentPlan& plan) {
  YAML::Emitter e;
  e.SetDoublePrecision(15);
  e << YAML::BeginMap;
  const auto& st = plan.stream;
  e << YAML::Key << "stream" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "classes" << YAML::Value << st.num_classes;
  e << YAML::Key << "task_classes" << YAML::Value << YAML::Flow << st.task_class_counts;
  e << YAML::Key << "side" << YAML::Value << st.side;
  e << YAML::Key << "channels" << YAML::Value << st.channels;
  e << YAML::Key << "train_per_class" << YAML::Value << st.train_per_class;
  e << YAML::Key << "val_per_class" << YAML::Value << st.val_per_class;
  e << YAML::Key << "test_per_class" << YAML::Value << st.test_per_class;
  e << YAML::Key << "seed" << YAML::Value << st.seed;
  e << YAML::Key << "frequency" << YAML::Value << st.frequency;
  e << YAML::Key << "noise_sigma" << YAML::Value << st.noise_sigma;
  e << YAML::Key << "phase_jitter" << YAML::Value << st.phase_jitter;
  e << YAML::Key << "permute_classes" << YAML::Value << st.permute_classes;
  e << YAML::EndMap;

  const auto& m = plan.method;
  e << YAML::Key << "method" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << std::string(cl::name(m.method));
  e << YAML::Key << "lambda" << YAML::Value << m.lambda;
  e << YAML::Key << "temperature" << YAML::Value << m.temperature;
  e << YAML::Key << "fisher_merge" << YAML::Value << m.fisher_merge;
  e << YAML::Key << "buffer_capacity" << YAML::Value << m.buffer_capacity;
  e << YAML::Key << "epochs" << YAML::Value << m.epochs;
  e << YAML::Key << "batch_size" << YAML::Value << m.batch_size;
  e << YAML::Key << "lr" << YAML::Value << m.lr;
  e << YAML::Key << "lr_milestones" << YAML::Value << YAML::Flow << m.lr_milestones;
  e << YAML::Key << "lr_decay" << YAML::Value << m.lr_decay;
  e << YAML::Key << "momentum" << YAML::Value << m.momentum;
  e << YAML::Key << "weight_decay" << YAML::Value << m.weight_decay;
  e << YAML::Key << "clip_grad_norm" << YAML::Value << m.clip_grad_norm;
  e << YAML::Key << "hidden" << YAML::Value << YAML::Flow << m.hidden;
  e << YAML::EndMap;

  e << YAML::Key << "attack" << YAML::Value << YAML::BeginMap;
  if (plan.poison) {
    const auto& ps = *plan.poison;
    if (plan.attack) e << YAML::Key << "preset" << YAML::Value << std::string(attack::name(*plan.attack));
    e << YAML::Key << "pcp" << YAML::Value << ps.pcp;
    e << YAML::Key << "pn" << YAML::Value << ps.pn;
    e << YAML::Key << "pp" << YAML::Value << ps.pp;
    e << YAML::Key << "severity" << YAML::Value << ps.severity;
    e << YAML::Key << "kinds" << YAML::Value << YAML::Flow << ps.kinds;
    e << YAML::Key << "seed" << YAML::Value << ps.seed;
  } else {
    e << YAML::Key << "preset" << YAML::Value << "none";
  }
  e << YAML::Key << "p" << YAML::Value << plan.p;
  e << YAML::EndMap;

  e << YAML::Key << "seeds" << YAML::Value << YAML::Flow << plan.seeds;

  e << YAML::Key << "defense" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "enabled" << YAML::Value << plan.defense.enabled;
  e << YAML::Key << "statistic" << YAML::Value << std::string(defense::name(plan.defense.statistic));
  e << YAML::Key << "calibration_task" << YAML::Value << plan.defense.calibration_task;
  e << YAML::Key << "calibration_seeds" << YAML::Value << YAML::Flow << plan.defense.calibration_seeds;
  e << YAML::EndMap;

  const auto& h = plan.harness;
  e << YAML::Key << "harness" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "tasks" << YAML::Value << h.tasks;
  e << YAML::Key << "clean_fraction" << YAML::Value << h.clean_fraction;
  e << YAML::Key << "poisoned_fraction" << YAML::Value << h.poisoned_fraction;
  std::vector<std::string> names;
  for (auto a : h.attacks) names.emplace_back(attack::name(a));
  e << YAML::Key << "attacks" << YAML::Value << YAML::Flow << names;
  e << YAML::Key << "pool_classes" << YAML::Value << h.pool_classes;
  e << YAML::Key << "classes_per_task" << YAML::Value << h.classes_per_task;
  e << YAML::Key << "candidate_position" << YAML::Value << h.candidate_position;
  e << YAML::EndMap;

  if (plan.sweep.axis) {
    e << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "axis" << YAML::Value << std::string(name(*plan.sweep.axis));
    e << YAML::Key << "values" << YAML::Value << YAML::Flow << plan.sweep.values;
    e << YAML::EndMap;
  }
  e << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "dir" << YAML::Value << plan.out_dir.string();
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace stp::runner
