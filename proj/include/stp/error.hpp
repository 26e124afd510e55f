#pragma once

#include <stdexcept>
#include <string>

namespace stp {

// Error kinds surfaced across the library. Everything derives from Error so
// callers that only care about "did it fail" can catch a single type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct InputError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct IntegrityError : Error { using Error::Error; };
struct FileError : Error { using Error::Error; };

struct ConfigError : Error {
  ConfigError(std::string key_path, int line, const std::string& what)
      : Error("config error at '" + key_path + "' (line " + std::to_string(line) + "): " + what),
        key(std::move(key_path)),
        line(line) {}
  std::string key;
  int line;
};

}  // namespace stp
