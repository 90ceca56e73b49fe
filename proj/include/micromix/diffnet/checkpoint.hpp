#pragma once

// Checkpoint container (all integers little-endian):
//
//   offset  size  field
//   0       8     magic "MMXCKPT\0"
//   8       4     u32 format version (kCheckpointVersion)
//   12      4     u32 header length n
//   16      n     UTF-8 JSON header: role, seed, parameter version,
//                 NetworkSpec (widths, activation, normalization), metadata
//   16+n    8     u64 parameter count k
//   24+n    8k    parameters as IEEE-754 binary64
//   24+n+8k 8     u64 FNV-1a hash of every preceding byte
//
// The JSON header keeps the file self-describing; the hash rejects silent
// corruption.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"
#include "micromix/diffnet/network.hpp"
#include "micromix/errors.hpp"

namespace micromix::diffnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 8> kCheckpointMagic{'M', 'M', 'X', 'C', 'K', 'P', 'T', '\0'};

struct Checkpoint {
  Network net;
  std::string role = "field";
  std::uint64_t seed = 0;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

namespace detail {

inline std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 0x100000001b3ULL;
  return h;
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::uint8_t, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  out.insert(out.end(), b.begin(), b.end());
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("checkpoint truncated");
  std::array<std::uint8_t, sizeof(T)> b;
  std::memcpy(b.data(), in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  pos += sizeof(T);
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

}  // namespace detail

inline nlohmann::ordered_json spec_to_json(const NetworkSpec& s) {
  nlohmann::ordered_json j;
  j["input_dim"] = s.input_dim;
  j["output_dim"] = s.output_dim;
  j["hidden"] = s.hidden;
  j["activation"] = to_string(s.activation);
  auto bounds = nlohmann::ordered_json::array();
  for (const auto& b : s.input_bounds) bounds.push_back({b.lo, b.hi});
  j["input_bounds"] = bounds;
  j["spatial_inputs"] = s.spatial_inputs;
  j["output_init_scale"] = s.output_init_scale;
  j["output_bias_init"] = s.output_bias_init;
  return j;
}

inline NetworkSpec spec_from_json(const nlohmann::ordered_json& j) {
  NetworkSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  s.input_bounds.clear();
  for (const auto& b : j.at("input_bounds")) s.input_bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  s.spatial_inputs = j.at("spatial_inputs").get<std::size_t>();
  s.output_init_scale = j.at("output_init_scale").get<double>();
  s.output_bias_init = j.at("output_bias_init").get<std::vector<double>>();
  s.validate();
  return s;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  c.net.params.validate();
  nlohmann::ordered_json header;
  header["role"] = c.role;
  header["seed"] = c.seed;
  header["param_version"] = c.net.params.version;
  header["spec"] = spec_to_json(c.net.spec);
  header["metadata"] = c.metadata;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, std::uint32_t(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  detail::put_le<std::uint64_t>(out, c.net.params.values.size());
  for (double v : c.net.params.values) detail::put_le<double>(out, v);
  detail::put_le<std::uint64_t>(out, detail::fnv1a(out.data(), out.size()));
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& in) {
  if (in.size() < 8 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), in.begin()))
    throw FormatError("not a micromix checkpoint (bad magic)");
  std::size_t pos = 8;
  const auto version = detail::get_le<std::uint32_t>(in, pos);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto header_len = detail::get_le<std::uint32_t>(in, pos);
  if (pos + header_len > in.size()) throw FormatError("checkpoint truncated in header");
  Checkpoint c;
  try {
    const auto header = nlohmann::ordered_json::parse(in.begin() + std::ptrdiff_t(pos),
                                                      in.begin() + std::ptrdiff_t(pos + header_len));
    c.role = header.at("role").get<std::string>();
    c.seed = header.at("seed").get<std::uint64_t>();
    c.net.params.version = header.at("param_version").get<std::uint32_t>();
    c.net.spec = spec_from_json(header.at("spec"));
    c.metadata = header.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header unreadable: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("checkpoint header invalid: ") + e.what());
  }
  pos += header_len;
  const auto count = detail::get_le<std::uint64_t>(in, pos);
  if (count != c.net.spec.parameter_count()) throw FormatError("checkpoint parameter count does not match its spec");
  if (in.size() < pos + count * 8 + 8) throw FormatError("checkpoint truncated in parameters");
  c.net.params.shapes = c.net.spec.layer_shapes();
  c.net.params.values.resize(count);
  for (auto& v : c.net.params.values) v = detail::get_le<double>(in, pos);
  const std::uint64_t expected = detail::fnv1a(in.data(), pos);
  if (detail::get_le<std::uint64_t>(in, pos) != expected) throw FormatError("checkpoint checksum mismatch");
  if (pos != in.size()) throw FormatError("checkpoint has trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const auto bytes = encode_checkpoint(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + tmp + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!os) throw FormatError("failed writing '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw FormatError("cannot move checkpoint into '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace micromix::diffnet
