#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "stp/data/external.hpp"
#include "stp/error.hpp"
#include "stp/runner/commands.hpp"
#include "stp/runner/csv.hpp"

namespace stp::runner {

namespace fs = std::filesystem;

void cmd_gen_data(const ExperimentPlan& plan, const fs::path& out, const std::string& format) {
  const auto fmt_kind = data::parse_external_format(format);
  fs::create_directories(out);
  data::Stream stream = build_plan_stream(plan);
  if (plan.poison) {
    attack::PoisonPlan pp{*plan.poison, plan.p};
    stream = attack::apply_plan(stream, pp);
  }
  nlohmann::ordered_json manifest;
  manifest["format"] = format;
  manifest["side"] = plan.stream.side;
  manifest["channels"] = plan.stream.channels;
  manifest["classes"] = plan.stream.num_classes;
  manifest["poisoned_task"] = plan.poison ? nlohmann::json(plan.p) : nlohmann::json(nullptr);
  manifest["attack"] = plan.attack_label();
  auto& files = manifest["files"] = nlohmann::ordered_json::array();
  for (const auto& task : stream) {
    for (const auto* split : {"train", "val", "test"}) {
      const auto& samples = std::string(split) == "train" ? task.train : std::string(split) == "val" ? task.val : task.test;
      data::Dataset d{samples, plan.stream.num_classes};
      const std::string stem = "task" + std::to_string(task.task_id) + "_" + split;
      std::size_t poisoned = 0;
      for (const auto& s : samples) poisoned += s.poisoned;
      nlohmann::ordered_json entry{{"task", task.task_id}, {"split", split}, {"samples", samples.size()},
                                   {"poisoned", poisoned}, {"classes", task.classes}};
      if (fmt_kind == data::ExternalFormat::Idx) {
        data::write_idx(out / (stem + "-images.idx"), out / (stem + "-labels.idx"), d);
        entry["images"] = stem + "-images.idx";
        entry["labels"] = stem + "-labels.idx";
      } else {
        data::write_csv_pixels(out / (stem + ".csv"), d);
        entry["file"] = stem + ".csv";
      }
      files.push_back(entry);
    }
  }
  std::ofstream m(out / "data_manifest.json", std::ios::binary);
  if (!m) throw FileError("cannot write " + (out / "data_manifest.json").string());
  m << manifest.dump(2) << '\n';
}

std::vector<std::string> cmd_schema_check(const fs::path& dir) { return check_directory(dir); }

}  // namespace stp::runner
