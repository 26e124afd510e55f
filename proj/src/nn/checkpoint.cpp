#include "stp/nn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "stp/error.hpp"

namespace stp::nn {

namespace {

using nlohmann::json;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_floats(std::string& out, const float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
}

json shapes(const std::vector<Dense<float>>& layers) {
  json out = json::array();
  for (const auto& l : layers) out.push_back({l.fan_in(), l.fan_out()});
  return out;
}

void put_layers(std::string& out, const std::vector<Dense<float>>& layers) {
  for (const auto& l : layers) {
    put_floats(out, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    put_floats(out, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void floats(float* dst, std::size_t n) {
    need(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_ + 4 * i + b])} << (8 * b);
      dst[i] = std::bit_cast<float>(bits);
    }
    pos_ += 4 * n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      throw FormatError("checkpoint truncated: need " + std::to_string(pos_ + n) + " bytes, have " +
                        std::to_string(bytes_.size()));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::vector<Dense<float>> read_layers(Reader& r, const json& shape_list) {
  std::vector<Dense<float>> out;
  for (const auto& s : shape_list) {
    auto layer = Dense<float>::zeros(s.at(0).get<Eigen::Index>(), s.at(1).get<Eigen::Index>());
    r.floats(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    r.floats(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    out.push_back(std::move(layer));
  }
  return out;
}

}  // namespace

bool CheckpointData::operator==(const CheckpointData& o) const {
  return model == o.model && optim.lr == o.optim.lr && optim.momentum == o.optim.momentum &&
         optim.weight_decay == o.optim.weight_decay && optim.velocity == o.optim.velocity && ewc == o.ewc &&
         extra == o.extra && extra_arrays == o.extra_arrays;
}

std::string encode_checkpoint(const CheckpointData& d) {
  const bool has_velocity = !d.optim.velocity.trunk.empty();
  if (has_velocity && !d.model.same_shape(d.optim.velocity))
    throw DimensionError("encode_checkpoint: velocity shapes differ from the model");
  json manifest = {
      {"format", "stp-checkpoint"},
      {"version", 1},
      {"task_count", d.model.heads.size()},
      {"seed", d.model.seed},
      {"trunk", shapes(d.model.trunk)},
      {"heads", shapes(d.model.heads)},
      {"optim",
       {{"lr", d.optim.lr}, {"momentum", d.optim.momentum}, {"weight_decay", d.optim.weight_decay},
        {"velocity", has_velocity}}},
      {"ewc", {{"present", !d.ewc.empty()}, {"merge_coeff", d.ewc.merge_coeff}}},
      {"extra", d.extra},
  };
  json extra_sizes = json::array();
  for (const auto& a : d.extra_arrays) extra_sizes.push_back(a.size());
  manifest["extra_arrays"] = extra_sizes;

  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic);
  put_u64(out, text.size());
  out += text;
  put_layers(out, d.model.trunk);
  put_layers(out, d.model.heads);
  if (has_velocity) {
    put_layers(out, d.optim.velocity.trunk);
    put_layers(out, d.optim.velocity.heads);
  }
  if (!d.ewc.empty()) {
    put_layers(out, d.ewc.anchor);
    put_layers(out, d.ewc.fisher);
  }
  for (const auto& a : d.extra_arrays) put_floats(out, a.data(), a.size());
  return out;
}

CheckpointData decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("checkpoint: bad magic at byte offset 0");
  const auto len = r.u64();
  json manifest;
  try {
    manifest = json::parse(r.take(static_cast<std::size_t>(len)));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: unreadable manifest: ") + e.what());
  }
  CheckpointData d;
  try {
    d.model.seed = manifest.at("seed").get<std::uint64_t>();
    d.model.trunk = read_layers(r, manifest.at("trunk"));
    d.model.heads = read_layers(r, manifest.at("heads"));
    const auto& opt = manifest.at("optim");
    d.optim.lr = opt.at("lr").get<float>();
    d.optim.momentum = opt.at("momentum").get<float>();
    d.optim.weight_decay = opt.at("weight_decay").get<float>();
    if (opt.at("velocity").get<bool>()) {
      d.optim.velocity.seed = d.model.seed;
      d.optim.velocity.trunk = read_layers(r, manifest.at("trunk"));
      d.optim.velocity.heads = read_layers(r, manifest.at("heads"));
    }
    const auto& ewc = manifest.at("ewc");
    d.ewc.merge_coeff = ewc.at("merge_coeff").get<float>();
    if (ewc.at("present").get<bool>()) {
      d.ewc.anchor = read_layers(r, manifest.at("trunk"));
      d.ewc.fisher = read_layers(r, manifest.at("trunk"));
    }
    d.extra = manifest.at("extra");
    for (const auto& n : manifest.at("extra_arrays")) {
      std::vector<float> a(n.get<std::size_t>());
      r.floats(a.data(), a.size());
      d.extra_arrays.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  return d;
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  const auto bytes = encode_checkpoint(data);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

std::uint64_t content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace stp::nn
