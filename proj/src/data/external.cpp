#include "stp/data/external.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "stp/error.hpp"

namespace stp::data {

namespace {

constexpr std::uint32_t kIdxUbyteImages = 0x00000803;
constexpr std::uint32_t kIdxUbyteLabels = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& file) {
  if (buf.size() < offset + 4)
    throw FormatError(file + ": truncated header at byte offset " + std::to_string(offset) + ", expected " +
                      std::to_string(offset + 4) + " bytes, got " + std::to_string(buf.size()));
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> payload;
};

IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  const auto buf = read_all(path);
  const std::string name = path.string();
  const std::uint32_t magic = read_be32(buf, 0, name);
  if (magic != expected_magic) {
    std::ostringstream msg;
    msg << name << ": bad magic 0x" << std::hex << magic << " at byte offset 0, expected 0x" << expected_magic;
    throw FormatError(msg.str());
  }
  IdxArray arr;
  const std::uint32_t ndim = magic & 0xFF;
  std::size_t count = 1;
  for (std::uint32_t d = 0; d < ndim; ++d) {
    arr.dims.push_back(read_be32(buf, 4 + 4 * d, name));
    count *= arr.dims.back();
  }
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(ndim);
  if (buf.size() != header + count)
    throw FormatError(name + ": expected " + std::to_string(header + count) + " bytes, got " +
                      std::to_string(buf.size()) + " (payload starts at byte offset " + std::to_string(header) + ")");
  arr.payload.assign(buf.begin() + static_cast<std::ptrdiff_t>(header), buf.end());
  return arr;
}

void check_label(int label, int num_classes, const std::string& where) {
  if (label < 0 || (num_classes > 0 && label >= num_classes))
    throw FormatError(where + ": label " + std::to_string(label) + " out of range [0," + std::to_string(num_classes) +
                      ")");
}

Dataset load_idx(const std::filesystem::path& path, const ExternalOptions& opt) {
  const IdxArray images = read_idx(path, kIdxUbyteImages);
  const auto n = images.dims[0], h = images.dims[1], w = images.dims[2];
  Dataset out;
  out.num_classes = opt.num_classes;
  std::vector<unsigned char> labels;
  if (opt.labels) {
    IdxArray lab = read_idx(*opt.labels, kIdxUbyteLabels);
    if (lab.dims[0] != n)
      throw FormatError(opt.labels->string() + ": " + std::to_string(lab.dims[0]) + " labels for " +
                        std::to_string(n) + " images (byte offset 4)");
    labels = std::move(lab.payload);
  }
  const std::size_t stride = static_cast<std::size_t>(h) * w;
  for (std::uint32_t i = 0; i < n; ++i) {
    Sample s;
    s.image = RasterImage(static_cast<int>(h), static_cast<int>(w), 1);
    for (std::size_t p = 0; p < stride; ++p) s.image.pixels[p] = static_cast<float>(images.payload[i * stride + p]) / 255.0f;
    s.label = labels.empty() ? 0 : labels[i];
    if (!labels.empty()) check_label(s.label, opt.num_classes, opt.labels->string() + " byte offset " + std::to_string(8 + i));
    out.samples.push_back(std::move(s));
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const ExternalOptions& opt) {
  if (opt.side < 1 || opt.channels < 1) throw InputError("load_external: CSV format needs side and channels");
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  const std::size_t expected = static_cast<std::size_t>(opt.side) * opt.side * opt.channels;
  Dataset out;
  out.num_classes = opt.num_classes;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    const std::string where = path.string() + " row " + std::to_string(row);
    if (cells.size() != expected + 1)
      throw FormatError(where + ": expected " + std::to_string(expected + 1) + " columns, got " +
                        std::to_string(cells.size()));
    Sample s;
    try {
      std::size_t used = 0;
      s.label = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("label");
    } catch (const std::exception&) {
      throw FormatError(where + ": label '" + cells[0] + "' is not an integer");
    }
    check_label(s.label, opt.num_classes, where);
    s.image = RasterImage(opt.side, opt.side, opt.channels);
    for (std::size_t p = 0; p < expected; ++p) {
      float v;
      try {
        v = std::stof(cells[p + 1]);
      } catch (const std::exception&) {
        throw FormatError(where + ": column " + std::to_string(p + 2) + " is not a number");
      }
      if (!(v >= 0.0f && v <= 1.0f))
        throw FormatError(where + ": column " + std::to_string(p + 2) + " intensity outside [0,1]");
      s.image.pixels[p] = v;
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace

ExternalFormat parse_external_format(const std::string& name) {
  if (name == "idx" || name == "IDX") return ExternalFormat::Idx;
  if (name == "csv" || name == "CSV" || name == "csv-pixels") return ExternalFormat::CsvPixels;
  throw InputError("unknown external format '" + name + "'");
}

Dataset load_external(const std::filesystem::path& path, ExternalFormat format, const ExternalOptions& options) {
  return format == ExternalFormat::Idx ? load_idx(path, options) : load_csv(path, options);
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& data) {
  if (data.samples.empty()) throw InputError("write_idx: empty dataset");
  const auto& first = data.samples.front().image;
  if (first.channels != 1) throw InputError("write_idx: IDX writer supports single-channel images only");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw FileError("cannot write IDX files next to " + images.string());
  put_be32(img, kIdxUbyteImages);
  put_be32(img, static_cast<std::uint32_t>(data.samples.size()));
  put_be32(img, static_cast<std::uint32_t>(first.height));
  put_be32(img, static_cast<std::uint32_t>(first.width));
  put_be32(lab, kIdxUbyteLabels);
  put_be32(lab, static_cast<std::uint32_t>(data.samples.size()));
  for (const auto& s : data.samples) {
    for (float v : s.image.pixels)
      img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
    lab.put(static_cast<char>(static_cast<unsigned char>(s.label)));
  }
}

void write_csv_pixels(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write " + path.string());
  out.precision(9);
  for (const auto& s : data.samples) {
    out << s.label;
    for (float v : s.image.pixels) out << ',' << v;
    out << '\n';
  }
}

}  // namespace stp::data
