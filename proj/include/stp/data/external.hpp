#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "stp/data/dataset.hpp"

namespace stp::data {

enum class ExternalFormat { Idx, CsvPixels };

ExternalFormat parse_external_format(const std::string& name);

struct ExternalOptions {
  std::optional<std::filesystem::path> labels;  // IDX label file (magic 0x00000801)
  int num_classes = 0;                          // labels must lie in [0, num_classes); 0 = unchecked
  int side = 0;                                 // CSV only: image side G
  int channels = 1;                             // CSV only
};

/// IDX: big-endian header, unsigned-byte pixels scaled by 1/255. Image files
/// use magic 0x00000803 (N x H x W). Without a label file every label is 0.
/// CSV: one sample per row, label first, then G*G*C intensities.
Dataset load_external(const std::filesystem::path& path, ExternalFormat format, const ExternalOptions& options);

/// Writers used by the `gen-data` command. Intensities are quantised to bytes
/// for IDX; CSV keeps full float precision.
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& data);
void write_csv_pixels(const std::filesystem::path& path, const Dataset& data);

}  // namespace stp::data
