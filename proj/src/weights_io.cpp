// "W4PS" weights container, all integers and reals little-endian:
//
//   magic "W4PS" | u32 version | u64 spec hash
//   u32 metadata entries, each u32 key length, key, u32 value length, value
//   u32 blob count, each u64 element count then that many f32 values
//   u32 CRC-32 of every preceding byte
//
// Blobs follow the network layout: trunk layers then head layers,
// kernel before bias. The "network" metadata entry holds the layout as a
// key/value config so the file can be read without a spec at hand.

#include <bit>
#include <cstring>
#include <zlib.h>

#include "stereo4p/file_util.hpp"
#include "stereo4p/matchnet.hpp"

namespace stereo4p {
namespace {

constexpr char kMagic[4] = {'W', '4', 'P', 'S'};
constexpr std::uint32_t kVersion = 1;


class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <class U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string& buffer() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string origin) : data_(data), origin_(std::move(origin)) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(origin_ + ": truncated at byte offset " + std::to_string(pos_) +
                        " (needed " + std::to_string(n) + " more bytes)");
    }
  }
  template <class U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::string str() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  const std::string& origin() const { return origin_; }

 private:
  const std::string& data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

struct RawWeights {
  std::uint64_t spec_hash = 0;
  std::map<std::string, std::string> metadata;
  std::vector<std::vector<float>> blobs;
};

RawWeights parse(const std::filesystem::path& path) {
  const std::string data = read_file_bytes(path);
  const std::string origin = path.string();
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw FormatError(origin + ": not a W4PS weights file (bad magic at byte offset 0)");
  }
  if (data.size() < 8) throw FormatError(origin + ": truncated at byte offset 4");
  // CRC covers everything but the trailing 4 bytes.
  const std::size_t body = data.size() - 4;
  Reader r(data, origin);
  r.need(4);
  for (int i = 0; i < 4; ++i) r.le<std::uint8_t>();
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError(origin + ": unsupported weights format version " + std::to_string(version));
  }
  RawWeights raw;
  raw.spec_hash = r.le<std::uint64_t>();
  const auto meta = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.str();
    raw.metadata[k] = r.str();
  }
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto n = r.le<std::uint64_t>();
    if (n > (data.size() - r.pos()) / 4) {
      throw FormatError(origin + ": truncated at byte offset " + std::to_string(r.pos()) +
                        " (blob " + std::to_string(i) + " claims " + std::to_string(n) + " values)");
    }
    std::vector<float> blob(n);
    for (auto& v : blob) v = r.f32();
    raw.blobs.push_back(std::move(blob));
  }
  if (r.pos() != body) {
    if (r.pos() > body) throw FormatError(origin + ": truncated at byte offset " + std::to_string(body));
    throw FormatError(origin + ": " + std::to_string(body - r.pos()) +
                      " unexpected bytes at byte offset " + std::to_string(r.pos()));
  }
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[body + i])) << (8 * i);
  }
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(body)));
  if (crc != stored) throw FormatError(origin + ": checksum mismatch, file is corrupt");
  return raw;
}

Weights assemble(RawWeights raw, const NetworkSpec& spec, const std::string& origin) {
  const auto trunk = spec.trunk_geometries();
  const auto head = spec.head_geometries();
  const std::size_t expected = 2 * (trunk.size() + head.size());
  if (raw.blobs.size() != expected) {
    throw SpecMismatchError(origin + ": " + std::to_string(raw.blobs.size()) + " blobs, spec needs " +
                            std::to_string(expected));
  }
  Weights w;
  w.spec_hash = raw.spec_hash;
  w.metadata = std::move(raw.metadata);
  std::size_t b = 0;
  auto take = [&](const ConvGeometry& g) {
    ConvLayer l = ConvLayer::zeros(g);
    auto& k = raw.blobs[b++];
    auto& bias = raw.blobs[b++];
    if (k.size() != l.kernel.size() || bias.size() != l.bias.size()) {
      throw SpecMismatchError(origin + ": blob " + std::to_string(b - 2) +
                              " has the wrong size for the spec");
    }
    std::copy(k.begin(), k.end(), l.kernel.data());
    l.bias = std::move(bias);
    return l;
  };
  for (const auto& g : trunk) w.trunk.push_back(take(g));
  for (const auto& g : head) w.head.push_back(take(g));
  return w;
}

}  // namespace

void save_weights(const Weights& weights, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le(kVersion);
  w.le(weights.spec_hash);
  w.le(static_cast<std::uint32_t>(weights.metadata.size()));
  for (const auto& [k, v] : weights.metadata) {
    w.str(k);
    w.str(v);
  }
  std::uint32_t blobs = 0;
  for (const auto* part : {&weights.trunk, &weights.head}) blobs += 2 * static_cast<std::uint32_t>(part->size());
  w.le(blobs);
  for (const auto* part : {&weights.trunk, &weights.head}) {
    for (const auto& l : *part) {
      w.le(static_cast<std::uint64_t>(l.kernel.size()));
      for (float v : l.kernel.values()) w.f32(v);
      w.le(static_cast<std::uint64_t>(l.bias.size()));
      for (float v : l.bias) w.f32(v);
    }
  }
  const auto crc = static_cast<std::uint32_t>(::crc32(
      0L, reinterpret_cast<const Bytef*>(w.buffer().data()), static_cast<uInt>(w.buffer().size())));
  w.le(crc);
  write_file_atomic(path, w.buffer());
}

Weights load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
  RawWeights raw = parse(path);
  if (raw.spec_hash != spec.hash()) {
    throw SpecMismatchError(path.string() + ": weights were saved for a different network (" +
                            std::to_string(raw.spec_hash) + " vs " + std::to_string(spec.hash()) +
                            ": " + spec.canonical() + ")");
  }
  Weights w = assemble(std::move(raw), spec, path.string());
  w.check_matches(spec);
  return w;
}

Weights load_weights_unchecked(const std::filesystem::path& path) {
  RawWeights raw = parse(path);
  const auto it = raw.metadata.find("network");
  if (it == raw.metadata.end()) {
    throw FormatError(path.string() + ": weights file carries no network description");
  }
  const NetworkSpec spec = NetworkSpec::from_config(KeyValueConfig::parse(it->second, path.string()));
  return assemble(std::move(raw), spec, path.string());
}

}  // namespace stereo4p
