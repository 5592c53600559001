#pragma once

// Hyperspectral cubes, label maps and the synthetic scene generator.
//
// Cube on disk: "<name>.json" header plus "<name>.bin" holding little-endian
// float32 samples in band-sequential order (band, then row, then column).
// Labels on disk: "<name>.labels.json" plus "<name>.labels.bin" holding
// little-endian uint16 class ids in row-major order, 0 meaning unlabeled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "fst3d/binary_io.hpp"
#include "fst3d/error.hpp"
#include "fst3d/rng.hpp"
#include "fst3d/volume.hpp"

namespace fst3d {

struct HsiCube {
  Volume<float> data;                 // bands x height x width
  std::vector<double> wavelengths_nm; // empty or one entry per band

  HsiCube() = default;
  HsiCube(std::size_t height, std::size_t width, std::size_t bands, float fill = 0.0f)
      : data(bands, height, width, fill) {}

  std::size_t height() const { return data.rows; }
  std::size_t width() const { return data.cols; }
  std::size_t bands() const { return data.bands; }

  float& at(std::size_t row, std::size_t col, std::size_t band) { return data.at(band, row, col); }
  float at(std::size_t row, std::size_t col, std::size_t band) const {
    return data.at(band, row, col);
  }
};

struct Pixel {
  std::size_t row = 0;
  std::size_t col = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;  // row-major
  std::size_t num_classes = 0;
  // original_ids[k - 1] is the id class k carried before normalization.
  std::vector<std::uint16_t> original_ids;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w) : height(h), width(w), labels(h * w, 0) {}

  std::uint16_t& at(std::size_t row, std::size_t col) { return labels[row * width + col]; }
  std::uint16_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
  std::uint16_t at(Pixel p) const { return at(p.row, p.col); }

  /// Labeled pixels of class k in row-major order.
  std::vector<Pixel> pixels_of(std::uint16_t k) const {
    std::vector<Pixel> out;
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < width; ++c)
        if (at(r, c) == k) out.push_back({r, c});
    return out;
  }

  std::vector<Pixel> labeled_pixels() const {
    std::vector<Pixel> out;
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < width; ++c)
        if (at(r, c) != 0) out.push_back({r, c});
    return out;
  }

  /// Recomputes num_classes as the largest id present.
  void refresh_class_count() {
    num_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  }
};

// ---------------------------------------------------------------------------
// Cube I/O

inline void validate_cube(const HsiCube& cube, const std::string& where) {
  if (cube.data.size() != cube.height() * cube.width() * cube.bands())
    throw data_error(where + ": data length does not match dimensions");
  if (!cube.wavelengths_nm.empty() && cube.wavelengths_nm.size() != cube.bands())
    throw data_error(where + ": wavelength count does not match band count");
  for (float v : cube.data.data)
    if (!std::isfinite(v)) throw data_error(where + ": non-finite sample value");
}

inline HsiCube load_cube(const std::filesystem::path& header_path) {
  const std::string where = header_path.string();
  const json h = read_json(header_path);
  const auto height = json_get<std::size_t>(h, "height", where);
  const auto width = json_get<std::size_t>(h, "width", where);
  const auto bands = json_get<std::size_t>(h, "bands", where);
  if (h.value("dtype", std::string("f32le")) != "f32le")
    throw data_error(where + ": unsupported dtype (expected f32le)");
  if (h.value("layout", std::string("bsq")) != "bsq")
    throw data_error(where + ": unsupported layout (expected bsq)");
  const auto data_name = json_get<std::string>(h, "data", where);

  const auto bin_path = header_path.parent_path() / data_name;
  const auto bytes = read_file_bytes(bin_path);
  const std::size_t expected = height * width * bands;
  if (bytes.size() != expected * 4)
    throw data_error(where + ": size mismatch, header declares " + std::to_string(expected) +
                     " values but " + bin_path.string() + " holds " +
                     std::to_string(bytes.size()) + " bytes");

  HsiCube cube;
  cube.data.bands = bands;
  cube.data.rows = height;
  cube.data.cols = width;
  cube.data.data = decode_f32le(bytes);
  if (h.contains("wavelengths_nm")) cube.wavelengths_nm = h["wavelengths_nm"].get<std::vector<double>>();
  validate_cube(cube, where);
  return cube;
}

inline void save_cube(const HsiCube& cube, const std::filesystem::path& header_path) {
  validate_cube(cube, header_path.string());
  const auto bin_path = companion_bin(header_path);
  json h = {{"height", cube.height()},
            {"width", cube.width()},
            {"bands", cube.bands()},
            {"dtype", "f32le"},
            {"layout", "bsq"},
            {"data", bin_path.filename().string()}};
  if (!cube.wavelengths_nm.empty()) h["wavelengths_nm"] = cube.wavelengths_nm;
  const auto bytes = encode_f32le(cube.data.data);
  write_file_bytes(bin_path, bytes.data(), bytes.size());
  write_json(header_path, h);
}

// ---------------------------------------------------------------------------
// Label I/O

// Remaps the distinct nonzero ids of `labels` onto 1..K in increasing order.
// `original_of_stored` translates a stored id to the id it had originally.
inline void normalize_labels(LabelMap& map, const std::map<std::uint16_t, std::uint16_t>& original_of_stored = {}) {
  std::vector<std::uint16_t> present;
  {
    std::vector<bool> seen(65536, false);
    for (auto v : map.labels) seen[v] = true;
    for (std::size_t v = 1; v < seen.size(); ++v)
      if (seen[v]) present.push_back(static_cast<std::uint16_t>(v));
  }
  std::vector<std::uint16_t> contiguous(65536, 0);
  map.original_ids.clear();
  for (std::size_t k = 0; k < present.size(); ++k) {
    contiguous[present[k]] = static_cast<std::uint16_t>(k + 1);
    auto it = original_of_stored.find(present[k]);
    map.original_ids.push_back(it == original_of_stored.end() ? present[k] : it->second);
  }
  for (auto& v : map.labels) v = contiguous[v];
  map.num_classes = present.size();
}

inline LabelMap load_labels(const std::filesystem::path& header_path,
                            std::vector<std::string>* warnings = nullptr) {
  const std::string where = header_path.string();
  const json h = read_json(header_path);
  const auto height = json_get<std::size_t>(h, "height", where);
  const auto width = json_get<std::size_t>(h, "width", where);
  if (h.value("dtype", std::string("u16le")) != "u16le")
    throw data_error(where + ": unsupported dtype (expected u16le)");
  const auto data_name = json_get<std::string>(h, "data", where);
  const auto bytes = read_file_bytes(header_path.parent_path() / data_name);
  if (bytes.size() != height * width * 2)
    throw data_error(where + ": dimension mismatch, header declares " + std::to_string(height) +
                     "x" + std::to_string(width) + " labels but binary holds " +
                     std::to_string(bytes.size()) + " bytes");

  std::map<std::uint16_t, std::uint16_t> original_of_stored;
  if (h.contains("id_map")) {
    for (const auto& entry : h["id_map"]) {
      const auto original = entry.at(0).get<long long>();
      const auto stored = entry.at(1).get<long long>();
      if (original < 1 || original > 65535 || stored < 1 || stored > 65535)
        throw data_error(where + ": id_map entry out of the 16-bit id range");
      original_of_stored[static_cast<std::uint16_t>(stored)] = static_cast<std::uint16_t>(original);
    }
  }

  LabelMap map(height, width);
  map.labels = decode_u16le(bytes);
  normalize_labels(map, original_of_stored);
  if (map.num_classes == 0 && warnings)
    warnings->push_back(where + ": label map has no labeled pixels (K = 0)");
  return map;
}

/// Label ids exactly as stored, without remapping; for predicted maps, whose
/// ids already live in the 1..K space of the training labels.
inline LabelMap load_label_ids(const std::filesystem::path& header_path) {
  const std::string where = header_path.string();
  const json h = read_json(header_path);
  const auto height = json_get<std::size_t>(h, "height", where);
  const auto width = json_get<std::size_t>(h, "width", where);
  if (h.value("dtype", std::string("u16le")) != "u16le")
    throw data_error(where + ": unsupported dtype (expected u16le)");
  const auto bytes = read_file_bytes(header_path.parent_path() / json_get<std::string>(h, "data", where));
  if (bytes.size() != height * width * 2)
    throw data_error(where + ": dimension mismatch between header and label binary");
  LabelMap map(height, width);
  map.labels = decode_u16le(bytes);
  map.refresh_class_count();
  return map;
}

inline void save_labels(const LabelMap& map, const std::filesystem::path& header_path) {
  if (map.labels.size() != map.height * map.width)
    throw data_error(header_path.string() + ": label count does not match dimensions");
  const auto bin_path = companion_bin(header_path);
  json id_map = json::array();
  std::uint16_t max_id = 0;
  for (auto v : map.labels) max_id = std::max(max_id, v);
  for (std::size_t k = 1; k <= max_id; ++k) {
    const std::uint16_t original =
        k <= map.original_ids.size() ? map.original_ids[k - 1] : static_cast<std::uint16_t>(k);
    id_map.push_back({original, k});
  }
  json h = {{"height", map.height},
            {"width", map.width},
            {"dtype", "u16le"},
            {"layout", "row-major"},
            {"num_classes", max_id},
            {"id_map", id_map},
            {"data", bin_path.filename().string()}};
  const auto bytes = encode_u16le(map.labels);
  write_file_bytes(bin_path, bytes.data(), bytes.size());
  write_json(header_path, h);
}

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SynthSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t bands = 32;
  std::size_t num_classes = 8;
  double noise_sigma = 0.0;
  std::size_t layout = 4;  // the scene is a layout x layout grid of class blocks
  std::uint64_t seed = 0;
};

// Spectral signature of every class: a common level kSignatureBaseline plus
// three sinusoids in the band index, each of amplitude kSignatureAmplitude / 3,
// with frequencies (cycles across the band range) and phases drawn from
// (seed, k). Row k - 1 of the result holds class k.
inline constexpr double kSignatureBaseline = 1.0;
inline constexpr double kSignatureAmplitude = 0.4;

inline std::vector<std::vector<double>> class_signatures(std::size_t bands, std::size_t num_classes,
                                                         std::uint64_t seed) {
  std::vector<std::vector<double>> sig(num_classes, std::vector<double>(bands, kSignatureBaseline));
  for (std::size_t k = 0; k < num_classes; ++k) {
    Xoshiro256 rng(derive_seed(seed, k + 1));
    for (int term = 0; term < 3; ++term) {
      const double cycles = rng.uniform(0.5, 6.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t b = 0; b < bands; ++b)
        sig[k][b] += std::sin(2.0 * std::numbers::pi * cycles * static_cast<double>(b) /
                                  static_cast<double>(bands) +
                              phase) *
                     kSignatureAmplitude / 3.0;
    }
  }
  return sig;
}

/// Noise level giving the requested per-band SNR, measured against the mean
/// signature power over all classes and bands.
inline double noise_sigma_for_snr(std::size_t bands, std::size_t num_classes, std::uint64_t seed,
                                  double snr_db) {
  const auto sig = class_signatures(bands, num_classes, seed);
  double power = 0.0;
  for (const auto& s : sig)
    for (double v : s) power += v * v;
  power /= static_cast<double>(bands * num_classes);
  return std::sqrt(power / std::pow(10.0, snr_db / 10.0));
}

/// Class id of every grid block, row-major over the layout x layout grid.
inline std::vector<std::uint16_t> block_classes(const SynthSpec& spec) {
  const std::size_t blocks = spec.layout * spec.layout;
  std::vector<std::size_t> order(blocks);
  for (std::size_t i = 0; i < blocks; ++i) order[i] = i;
  Xoshiro256 rng(derive_seed(spec.seed, 0));
  shuffle(order, rng);
  std::vector<std::uint16_t> cls(blocks, 0);
  for (std::size_t p = 0; p < blocks; ++p)
    cls[order[p]] = static_cast<std::uint16_t>(p % spec.num_classes + 1);
  return cls;
}

inline std::pair<HsiCube, LabelMap> generate_synthetic(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw usage_error("synthetic scene needs at least 2 classes");
  if (spec.num_classes > 65535) throw usage_error("synthetic scene: too many classes");
  if (!(spec.noise_sigma >= 0.0)) throw usage_error("noise_sigma must be >= 0");
  if (spec.height == 0 || spec.width == 0 || spec.bands == 0 || spec.layout == 0)
    throw usage_error("synthetic scene dimensions must be positive");
  if (spec.layout > spec.height || spec.layout > spec.width)
    throw usage_error("synthetic layout has more blocks per side than pixels");
  if (spec.num_classes > spec.layout * spec.layout)
    throw usage_error("synthetic scene: " + std::to_string(spec.num_classes) +
                      " classes do not fit in a " + std::to_string(spec.layout) + "x" +
                      std::to_string(spec.layout) + " block layout");

  const auto sig = class_signatures(spec.bands, spec.num_classes, spec.seed);
  const auto cls = block_classes(spec);

  LabelMap labels(spec.height, spec.width);
  for (std::size_t r = 0; r < spec.height; ++r) {
    const std::size_t br = r * spec.layout / spec.height;
    for (std::size_t c = 0; c < spec.width; ++c) {
      const std::size_t bc = c * spec.layout / spec.width;
      labels.at(r, c) = cls[br * spec.layout + bc];
    }
  }
  labels.num_classes = spec.num_classes;
  labels.original_ids.resize(spec.num_classes);
  for (std::size_t k = 0; k < spec.num_classes; ++k)
    labels.original_ids[k] = static_cast<std::uint16_t>(k + 1);

  HsiCube cube(spec.height, spec.width, spec.bands);
  Xoshiro256 noise(derive_seed(spec.seed, 0x6e6f697365ULL));
  for (std::size_t b = 0; b < spec.bands; ++b)
    for (std::size_t r = 0; r < spec.height; ++r)
      for (std::size_t c = 0; c < spec.width; ++c) {
        double v = sig[labels.at(r, c) - 1][b];
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise.normal();
        cube.at(r, c, b) = static_cast<float>(v);
      }
  return {std::move(cube), std::move(labels)};
}

}  // namespace fst3d
