#include "stp/runner/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stp/error.hpp"

namespace stp::runner {

const std::map<std::string, CsvSchema>& csv_schemas() {
  static const std::map<std::string, CsvSchema> all = [] {
    std::map<std::string, CsvSchema> m;
    auto add = [&](std::string name, std::vector<std::string> cols, std::string types) {
      m[name] = CsvSchema{name, 1, std::move(cols), std::move(types)};
    };
    add("runs", {"run_id", "seed", "method", "attack", "p", "phase", "t_p_acc", "before_acc", "after_acc", "total_acc"},
        "sissisffff");
    add("acc_matrix", {"run_id", "seed", "row", "col", "acc"}, "siiif");
    add("deltas", {"seed", "method", "attack", "p", "phase", "t_p_delta", "before_delta", "after_delta", "total_delta"},
        "issisffff");
    add("train_log", {"run_id", "seed", "task", "epoch", "lr", "train_loss", "train_acc", "val_acc"}, "siiiffff");
    add("scatter", {"attack", "seed", "before_acc", "after_acc", "before_delta", "after_delta"}, "siffff");
    add("sweep", {"axis", "value", "seed", "method", "attack", "p", "phase", "t_p_acc", "before_acc", "after_acc",
                  "total_acc", "t_p_delta", "before_delta", "after_delta", "total_delta"},
        "sfissisffffffff");
    add("sweep_summary", {"axis", "value", "phase", "n", "t_p_delta", "before_delta", "after_delta", "total_delta"},
        "sfsiffff");
    add("calibration", {"seed", "angle_deg"}, "if");
    add("alphas", {"instance", "statistic", "alpha_deg"}, "isf");
    add("candidates", {"instance", "seed", "attack", "poisoned", "task_id", "beta_deg"}, "iisbif");
    add("detection", {"attack", "statistic", "acc", "clean_acc", "attack_acc", "precision", "f1", "tp", "fp", "tn", "fn"},
        "ssfffffiiii");
    add("pr_curve", {"attack", "threshold", "precision", "recall"}, "sfff");
    add("pr_points", {"recall", "precision"}, "ff");
    return m;
  }();
  return all;
}

const CsvSchema& csv_schema(const std::string& name) {
  const auto it = csv_schemas().find(name);
  if (it == csv_schemas().end()) throw InputError("unknown CSV schema '" + name + "'");
  return it->second;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  // Avoid "-0.000000" so equal values always print identically.
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

CsvWriter::CsvWriter(const std::filesystem::path& path, const CsvSchema& schema)
    : out_(path, std::ios::binary), schema_(&schema), path_(path) {
  if (!out_) throw FileError("cannot write " + path.string());
  for (std::size_t i = 0; i < schema.columns.size(); ++i) out_ << (i ? "," : "") << schema.columns[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != schema_->columns.size())
    throw InputError(path_.string() + ": row has " + std::to_string(fields.size()) + " fields, schema '" +
                     schema_->name + "' has " + std::to_string(schema_->columns.size()));
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find_first_of(",\n\"") != std::string::npos)
      throw InputError(path_.string() + ": field '" + fields[i] + "' needs quoting");
    out_ << (i ? "," : "") << fields[i];
  }
  out_ << '\n';
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError("CSV has no column '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool parses_as(const std::string& v, char type) {
  switch (type) {
    case 's': return true;
    case 'b': return v == "0" || v == "1";
    case 'i': {
      long long x = 0;
      const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
      return !v.empty() && r.ec == std::errc() && r.ptr == v.data() + v.size();
    }
    case 'f': {
      if (v.empty()) return true;
      double x = 0;
      const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
      return r.ec == std::errc() && r.ptr == v.data() + v.size();
    }
  }
  return false;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file, expected a header row");
  t.header = split(line);
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != t.header.size())
      throw FormatError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                        " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

std::vector<std::string> check_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::vector<std::string> problems;
  CsvTable t;
  try {
    t = read_csv(path);
  } catch (const Error& e) {
    return {e.what()};
  }
  if (t.header != schema.columns) {
    problems.push_back(path.filename().string() + ": header does not match schema '" + schema.name + "' v" +
                       std::to_string(schema.version));
    return problems;
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < schema.columns.size(); ++c)
      if (!parses_as(t.rows[r][c], schema.types[c]))
        problems.push_back(path.filename().string() + ": row " + std::to_string(r + 2) + " column '" +
                           schema.columns[c] + "' value '" + t.rows[r][c] + "' is not of type " + schema.types[c]);
  return problems;
}

void write_schema_manifest(const std::filesystem::path& dir, const std::map<std::string, std::string>& files) {
  nlohmann::ordered_json j;
  for (const auto& [file, schema] : files)
    j[file] = {{"schema", schema}, {"version", csv_schema(schema).version}};
  std::ofstream out(dir / "schemas.json", std::ios::binary);
  if (!out) throw FileError("cannot write " + (dir / "schemas.json").string());
  out << j.dump(2) << '\n';
}

std::vector<std::string> check_directory(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "schemas.json";
  std::ifstream in(manifest_path);
  if (!in) return {"missing " + manifest_path.string()};
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    return {manifest_path.string() + ": " + e.what()};
  }
  std::vector<std::string> problems;
  for (const auto& [file, entry] : manifest.items()) {
    const auto schema_name = entry.value("schema", std::string());
    const auto it = csv_schemas().find(schema_name);
    if (it == csv_schemas().end()) {
      problems.push_back(file + ": unknown schema '" + schema_name + "'");
      continue;
    }
    if (entry.value("version", 0) != it->second.version) {
      problems.push_back(file + ": schema '" + schema_name + "' version " + std::to_string(entry.value("version", 0)) +
                         " is not supported (expected " + std::to_string(it->second.version) + ")");
      continue;
    }
    auto more = check_csv(dir / file, it->second);
    problems.insert(problems.end(), more.begin(), more.end());
  }
  return problems;
}

}  // namespace stp::runner
