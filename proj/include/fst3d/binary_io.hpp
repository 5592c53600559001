#pragma once

// Little-endian binary helpers, JSON file helpers and content hashing shared by
// the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fst3d/error.hpp"

namespace fst3d {

using nlohmann::json;

namespace io_detail {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U r = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      r = static_cast<U>((r << 8) | (v & 0xff));
      v = static_cast<U>(v >> 8);
    }
    return r;
  } else {
    return v;
  }
}

}  // namespace io_detail

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const void* bytes, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
  if (!out) throw data_error("write failed for " + path.string());
}

inline std::vector<char> encode_f32le(const std::vector<float>& values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t u = io_detail::to_little(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(bytes.data() + 4 * i, &u, 4);
  }
  return bytes;
}

inline std::vector<float> decode_f32le(const std::vector<char>& bytes) {
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    values[i] = std::bit_cast<float>(io_detail::to_little(u));
  }
  return values;
}

inline std::vector<char> encode_u16le(const std::vector<std::uint16_t>& values) {
  std::vector<char> bytes(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint16_t u = io_detail::to_little(values[i]);
    std::memcpy(bytes.data() + 2 * i, &u, 2);
  }
  return bytes;
}

inline std::vector<std::uint16_t> decode_u16le(const std::vector<char>& bytes) {
  std::vector<std::uint16_t> values(bytes.size() / 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint16_t u;
    std::memcpy(&u, bytes.data() + 2 * i, 2);
    values[i] = io_detail::to_little(u);
  }
  return values;
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw data_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(path, text.data(), text.size());
}

// "<dir>/<name>.json" -> "<dir>/<name>.bin"; any other name gets ".bin" appended.
inline std::filesystem::path companion_bin(const std::filesystem::path& header) {
  std::filesystem::path p = header;
  if (p.extension() == ".json") return p.replace_extension(".bin");
  return std::filesystem::path(p.string() + ".bin");
}

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string hash_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

template <typename T>
T json_get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw data_error(where + ": missing key \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw data_error(where + ": bad value for \"" + key + "\": " + e.what());
  }
}

}  // namespace fst3d
