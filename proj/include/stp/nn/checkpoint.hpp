#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stp/nn/ewc.hpp"
#include "stp/nn/model.hpp"
#include "stp/nn/optim.hpp"

namespace stp::nn {

inline constexpr std::string_view kCheckpointMagic = "STPCKPT1";

/// Everything a checkpoint file carries. `extra` is caller metadata stored in
/// the manifest; `extra_arrays` are appended after the parameter arrays.
struct CheckpointData {
  Model<float> model;
  OptimState<float> optim;
  EwcState<float> ewc;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::vector<float>> extra_arrays;

  bool operator==(const CheckpointData&) const;
};

/// Layout: "STPCKPT1", u64 little-endian manifest length, UTF-8 JSON manifest
/// (task count, layer shapes, seeds, optimiser settings), then little-endian
/// IEEE-754 binary32 arrays in declaration order: trunk (W, b)..., heads
/// (W, b)..., velocity in the same order, EWC anchor, EWC Fisher, extras.
std::string encode_checkpoint(const CheckpointData& data);
CheckpointData decode_checkpoint(std::string_view bytes);

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::filesystem::path& path);

/// FNV-1a 64-bit digest used for checkpoint integrity checks.
std::uint64_t content_hash(std::string_view bytes);

}  // namespace stp::nn
