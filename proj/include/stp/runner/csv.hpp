#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stp::runner {

/// Column types: 's' text, 'i' integer, 'f' real (empty allowed), 'b' 0/1.
struct CsvSchema {
  std::string name;
  int version = 1;
  std::vector<std::string> columns;
  std::string types;  // one type code per column
};

/// Every CSV the runner emits, keyed by schema name.
const std::map<std::string, CsvSchema>& csv_schemas();
const CsvSchema& csv_schema(const std::string& name);

/// Fixed six-decimal rendering; empty optionals and NaN become "".
std::string fmt(double v);
std::string fmt(const std::optional<double>& v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const CsvSchema& schema);
  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
  const CsvSchema* schema_;
  std::filesystem::path path_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws FormatError if absent
};

CsvTable read_csv(const std::filesystem::path& path);

/// Problems found when validating `path` against `schema`; empty when valid.
std::vector<std::string> check_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// schemas.json in an output directory maps file name -> schema name/version.
void write_schema_manifest(const std::filesystem::path& dir, const std::map<std::string, std::string>& files);
std::vector<std::string> check_directory(const std::filesystem::path& dir);

}  // namespace stp::runner
