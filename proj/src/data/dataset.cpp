#include "stp/data/dataset.hpp"

#include <algorithm>

#include "stp/error.hpp"

namespace stp::data {

nn::MatrixF to_matrix(std::span<const Sample> samples) {
  if (samples.empty()) return {};
  const auto width = static_cast<Eigen::Index>(samples.front().image.size());
  nn::MatrixF out(static_cast<Eigen::Index>(samples.size()), width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& px = samples[i].image.pixels;
    if (static_cast<Eigen::Index>(px.size()) != width)
      throw DimensionError("to_matrix: sample " + std::to_string(i) + " has " + std::to_string(px.size()) +
                           " pixels, expected " + std::to_string(width));
    std::copy(px.begin(), px.end(), out.row(static_cast<Eigen::Index>(i)).data());
    out.row(static_cast<Eigen::Index>(i)).array() -= 0.5f;
  }
  return out;
}

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

}  // namespace stp::data
