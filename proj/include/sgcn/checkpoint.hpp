#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgcn/config.hpp"
#include "sgcn/errors.hpp"
#include "sgcn/model.hpp"

// Checkpoint layout (all integers little-endian):
//
//   magic    8 bytes  "SGCNCKPT"
//   version  u32      kCheckpointVersion
//   header   u64 length + UTF-8 JSON {"config": {...}, "vocab": [words...]}
//   count    u64      number of arrays
//   arrays   count x { u32 name length, name bytes, u32 rank, rank x u64 dims,
//                      numel x f64 raw IEEE-754 bits }
//   checksum u64      FNV-1a over every preceding byte
//
// Arrays are the trainable parameters in Model::for_each_param order followed
// by "bn.running_mean" and "bn.running_var".
namespace sgcn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'S', 'G', 'C', 'N', 'C', 'K', 'P', 'T'};

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const std::string& s) { out_ += s; }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& in) : in_(in) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("corrupt checkpoint: unexpected end of file");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

inline void put_array(ByteWriter& w, const std::string& name, const Shape& shape, std::span<const double> data) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.put<std::uint64_t>(d);
  for (double v : data) w.put<double>(v);
}

}  // namespace detail

inline std::string serialize_checkpoint(Model& model) {
  detail::ByteWriter w;
  w.bytes(std::string(kCheckpointMagic, sizeof kCheckpointMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string header = nlohmann::json{{"config", model.config.to_json()}, {"vocab", model.vocab.words()}}.dump();
  w.put<std::uint64_t>(header.size());
  w.bytes(header);
  const auto params = model.parameters();
  w.put<std::uint64_t>(params.size() + 2);
  for (const auto& p : params) detail::put_array(w, p.name, p.tensor.shape(), p.tensor.data());
  const auto& bn = model.encoder.norm;
  detail::put_array(w, "bn.running_mean", {bn.running_mean.size()}, bn.running_mean);
  detail::put_array(w, "bn.running_var", {bn.running_var.size()}, bn.running_var);
  std::string out = w.str();
  detail::ByteWriter tail;
  tail.put<std::uint64_t>(detail::fnv1a(out));
  return out + tail.str();
}

inline Model deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kCheckpointMagic + 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const std::string body = bytes.substr(0, bytes.size() - 8);
  {
    detail::ByteReader tail(bytes);
    tail.bytes(bytes.size() - 8);
    if (tail.get<std::uint64_t>() != detail::fnv1a(body)) throw CheckpointError("corrupt checkpoint: checksum mismatch");
  }
  detail::ByteReader r(body);
  r.bytes(8);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.get<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  TrainConfig config;
  Vocabulary vocab;
  try {
    config = TrainConfig::from_json(header.at("config"));
    vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  std::map<std::string, std::pair<Shape, std::vector<double>>> arrays;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name = r.bytes(r.get<std::uint32_t>());
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = r.get<std::uint64_t>();
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = r.get<double>();
    arrays[name] = {std::move(shape), std::move(data)};
  }
  if (r.pos() != body.size()) throw CheckpointError("corrupt checkpoint: trailing bytes");

  // Build a model of the right shape, then overwrite every array.
  Rng rng(config.seed);
  Model model = Model::create(config, std::move(vocab), rng);
  auto take = [&](const std::string& name, const Shape& shape) -> std::vector<double>& {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw CheckpointError("checkpoint lacks array '" + name + "'");
    if (it->second.first != shape) {
      throw CheckpointError("array '" + name + "' has shape " + shape_str(it->second.first) + ", model expects " +
                            shape_str(shape));
    }
    return it->second.second;
  };
  model.for_each_param([&](const std::string& name, Tensor& t, const std::vector<std::size_t>&) {
    auto& src = take(name, t.shape());
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  });
  auto& bn = model.encoder.norm;
  bn.running_mean = take("bn.running_mean", {bn.running_mean.size()});
  bn.running_var = take("bn.running_var", {bn.running_var.size()});
  return model;
}

inline void save_checkpoint(Model& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write to '" + path + "' failed");
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace sgcn
