#pragma once

// Second-order 3D Fourier scattering of hyperspectral cubes.
//
//   S0      = avg(f, g, P)
//   U_m     = |f (x) g_m|, bands kept every P
//   S_m     = avg(U_m, g', P')
//   U_{m,n} = |U_m (x) g'_n|, bands kept every P'
//   S_{m,n} = avg(U_{m,n}, g'', P'')
//
// Per pixel the features are concatenated as S0, then S_m in index order,
// then S_{m,n} in (m, n) order. The Gabor variant emits the U_m blocks only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fst3d/binary_io.hpp"
#include "fst3d/conv.hpp"
#include "fst3d/error.hpp"
#include "fst3d/filterbank.hpp"
#include "fst3d/hsi_io.hpp"
#include "fst3d/parallel.hpp"
#include "fst3d/volume.hpp"

namespace fst3d {

enum class FeatureKind { scattering, gabor };

struct FeatureBlock {
  int order = 0;  // 0, 1 or 2
  ModIndex m;     // first-layer index (orders 1 and 2)
  ModIndex n;     // second-layer index (order 2)
  std::size_t offset = 0;
  std::size_t bands = 0;
};

struct FeatureCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t dim = 0;
  FeatureKind kind = FeatureKind::scattering;
  ScatterConfig config;
  std::vector<FeatureBlock> blocks;
  std::vector<float> data;  // pixel-major: (row * width + col) * dim + feature

  std::span<const float> pixel(std::size_t row, std::size_t col) const {
    return {data.data() + (row * width + col) * dim, dim};
  }
  float at(std::size_t row, std::size_t col, std::size_t k) const {
    return data[(row * width + col) * dim + k];
  }
};

// Everything about a transform that depends on the configuration and the band
// count but not on the pixels.
struct ScatterPlan {
  ScatterConfig config;
  FeatureKind kind = FeatureKind::scattering;
  ScatterBanks banks;
  std::vector<ScatterPath> paths;
  std::size_t bands_in = 0;
  std::size_t bands0 = 0, bands1 = 0, bands2 = 0;
  std::vector<FeatureBlock> blocks;
  std::size_t dim = 0;
  // first_block[i]: block of S_{m_i} (or U_{m_i} for Gabor output).
  std::vector<std::size_t> first_block;
  // second_positions[i]: layer-1 bank positions paired with m_i;
  // second_block[i][k]: the block receiving S_{m_i, n} for second_positions[i][k].
  std::vector<std::vector<std::size_t>> second_positions;
  std::vector<std::vector<std::size_t>> second_block;
};

inline ScatterPlan make_plan(const ScatterConfig& cfg, std::size_t bands,
                             FeatureKind kind = FeatureKind::scattering) {
  cfg.validate();
  ScatterPlan plan;
  plan.config = cfg;
  plan.kind = kind;
  plan.banks = build_banks(cfg);
  plan.bands_in = bands;
  const auto& L = cfg.layers;
  plan.bands0 = ceil_div(bands, L[0].stride);
  plan.bands1 = ceil_div(plan.bands0, L[1].stride);
  plan.bands2 = ceil_div(plan.bands1, L[2].stride);

  if (L[0].support[2] > 2 * bands)
    throw data_error("layer 0 (M): spectral support " + std::to_string(L[0].support[2]) +
                     " is too large for " + std::to_string(bands) + " input bands");
  const auto& first = plan.banks.layers[0];
  plan.first_block.assign(first.indices.size(), 0);
  plan.second_positions.assign(first.indices.size(), {});
  plan.second_block.assign(first.indices.size(), {});

  std::size_t offset = 0;
  if (kind == FeatureKind::gabor) {
    for (std::size_t i = 0; i < first.indices.size(); ++i) {
      plan.first_block[i] = plan.blocks.size();
      plan.blocks.push_back({1, first.indices[i], {}, offset, plan.bands0});
      offset += plan.bands0;
    }
    plan.dim = offset;
    return plan;
  }

  if (L[1].support[2] > 2 * plan.bands0)
    throw data_error("layer 1 (Mp): spectral support " + std::to_string(L[1].support[2]) +
                     " is too large for the " + std::to_string(plan.bands0) +
                     " bands left after downsampling by P");
  if (L[2].support[2] > 2 * plan.bands1)
    throw data_error("layer 2 (Mpp): spectral support " + std::to_string(L[2].support[2]) +
                     " is too large for the " + std::to_string(plan.bands1) +
                     " bands left after downsampling by P and Pp");

  plan.paths = enumerate_paths(cfg, first, plan.banks.layers[1]);
  plan.blocks.push_back({0, {}, {}, 0, plan.bands0});
  offset = plan.bands0;
  for (std::size_t i = 0; i < first.indices.size(); ++i) {
    plan.first_block[i] = plan.blocks.size();
    plan.blocks.push_back({1, first.indices[i], {}, offset, plan.bands1});
    offset += plan.bands1;
  }
  for (const auto& p : plan.paths) {
    plan.second_positions[p.first].push_back(p.second);
    plan.second_block[p.first].push_back(plan.blocks.size());
    plan.blocks.push_back({2, p.m, p.n, offset, plan.bands2});
    offset += plan.bands2;
  }
  plan.dim = offset;
  return plan;
}

/// Called with (first-layer bank position, U_m) for every first-order
/// intermediate volume; may be invoked concurrently from worker threads.
using ScatterObserver = std::function<void(std::size_t, const Volume<float>&)>;

namespace detail {

// Destination of the target region's pixels: row r, column c of an engine
// output volume lands at pixel (dst_r0 + r, dst_c0 + c) of a buffer whose
// rows hold dst_width pixels.
struct FeatureSink {
  float* base = nullptr;
  std::size_t dim = 0;
  std::size_t dst_width = 0;
  std::size_t dst_r0 = 0, dst_c0 = 0;

  void write(const FeatureBlock& block, const Volume<float>& v) const {
    for (std::size_t r = 0; r < v.rows; ++r)
      for (std::size_t c = 0; c < v.cols; ++c) {
        float* dst = base + ((dst_r0 + r) * dst_width + dst_c0 + c) * dim + block.offset;
        for (std::size_t b = 0; b < block.bands; ++b) dst[b] = v.at(b, r, c);
      }
  }
};

inline void check_spatial(std::size_t H, std::size_t W, const ScatterPlan& plan) {
  static const char* names[3] = {"layer 0 (M)", "layer 1 (Mp)", "layer 2 (Mpp)"};
  const int layers = plan.kind == FeatureKind::gabor ? 1 : 3;
  for (int l = 0; l < layers; ++l) {
    const auto& s = plan.config.layers[l].support;
    if (H == 0 || W == 0 || s[0] > 2 * H || s[1] > 2 * W)
      throw data_error(std::string(names[l]) + ": spatial support exceeds twice the image extent");
  }
}

// Image-level context of one engine run: `f` covers region `input` of an
// H x W image and the run produces features for region `target`.
struct EngineFrame {
  std::size_t H = 0, W = 0;
  Region input;
  Region target;
};

// Runs the transform and writes the target region to the sink. Each layer is
// computed only on the region the later layers read. With threads > 1 the
// work is split across groups of first-layer filters.
inline void run_engine(const Volume<float>& f, const EngineFrame& frame, const ScatterPlan& plan,
                       const FeatureSink& sink, unsigned threads, const ScatterObserver* observer) {
  check_spatial(frame.H, frame.W, plan);
  const auto& L = plan.config.layers;
  const auto& first = plan.banks.layers[0];
  const auto& second = plan.banks.layers[1];
  const bool gabor = plan.kind == FeatureKind::gabor;
  const std::size_t H = frame.H, W = frame.W;
  const Region& T = frame.target;
  // U_{m,n} is needed on r2, U_m on r1.
  const Region r2 = input_region(T, L[2].support, H, W);
  const Region r1 = gabor ? T : input_region(r2, L[1].support, H, W);

  if (!gabor) sink.write(plan.blocks[0], average(f, frame.input, L[0].support, L[0].stride, T, H, W));

  // Jobs: first-layer indices sharing the band and column frequency.
  std::vector<std::vector<std::size_t>> jobs;
  {
    const auto& M = L[0].support;
    std::vector<std::vector<std::size_t>> by_group(M[2] * M[1]);
    for (std::size_t p = 0; p < first.indices.size(); ++p) {
      const auto& m = first.indices[p].m;
      by_group[m[2] * M[1] + m[1]].push_back(p);
    }
    for (auto& g : by_group)
      if (!g.empty()) jobs.push_back(std::move(g));
  }

  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const auto& group = jobs[j];
    const auto& m = first.indices[group.front()].m;
    ComplexVolume band, col, band2, col2;
    std::vector<double> acc_re, acc_im;
    Volume<float> u, u2;
    band_pass(f, modulated_factor(m[2], L[0].support[2]), L[0].stride, band);
    col_pass(band, frame.input.c0, modulated_factor(m[1], L[0].support[1]), r1.c0, r1.cols, W, col);
    for (std::size_t p : group) {
      row_pass_modulus(col, frame.input.r0, first.filters[p].factors[0], r1.r0, r1.rows, H, acc_re,
                       acc_im, u);
      if (observer) (*observer)(p, u);
      if (gabor) {
        sink.write(plan.blocks[plan.first_block[p]], u);
        continue;
      }
      sink.write(plan.blocks[plan.first_block[p]], average(u, r1, L[1].support, L[1].stride, T, H, W));

      // Second layer on U_m, sharing passes across n.
      const auto& positions = plan.second_positions[p];
      if (positions.empty()) continue;
      const auto& M1 = L[1].support;
      std::vector<std::vector<std::vector<std::size_t>>> groups(
          M1[2], std::vector<std::vector<std::size_t>>(M1[1]));
      for (std::size_t k = 0; k < positions.size(); ++k) {
        const auto& n = second.indices[positions[k]].m;
        groups[n[2]][n[1]].push_back(k);
      }
      for (std::size_t n2 = 0; n2 < M1[2]; ++n2) {
        bool any = false;
        for (const auto& g : groups[n2]) any = any || !g.empty();
        if (!any) continue;
        band_pass(u, modulated_factor(n2, M1[2]), L[1].stride, band2);
        for (std::size_t n1 = 0; n1 < M1[1]; ++n1) {
          if (groups[n2][n1].empty()) continue;
          col_pass(band2, r1.c0, modulated_factor(n1, M1[1]), r2.c0, r2.cols, W, col2);
          for (std::size_t k : groups[n2][n1]) {
            row_pass_modulus(col2, r1.r0, second.filters[positions[k]].factors[0], r2.r0, r2.rows, H,
                             acc_re, acc_im, u2);
            sink.write(plan.blocks[plan.second_block[p][k]],
                       average(u2, r2, L[2].support, L[2].stride, T, H, W));
          }
        }
      }
    }
  });
}

inline FeatureCube empty_features(const ScatterPlan& plan, std::size_t height, std::size_t width) {
  FeatureCube out;
  out.height = height;
  out.width = width;
  out.dim = plan.dim;
  out.kind = plan.kind;
  out.config = plan.config;
  out.blocks = plan.blocks;
  out.data.assign(height * width * plan.dim, 0.0f);
  return out;
}

inline FeatureCube scatter_whole(const HsiCube& cube, const ScatterConfig& cfg, FeatureKind kind,
                                 unsigned threads, const ScatterObserver* observer) {
  const auto plan = make_plan(cfg, cube.bands(), kind);
  FeatureCube out = empty_features(plan, cube.height(), cube.width());
  const FeatureSink sink{out.data.data(), plan.dim, cube.width(), 0, 0};
  const Region all = whole(cube.height(), cube.width());
  run_engine(cube.data, {cube.height(), cube.width(), all, all}, plan, sink, threads, observer);
  return out;
}

}  // namespace detail

/// Full second-order transform of the whole image.
inline FeatureCube scatter(const HsiCube& cube, const ScatterConfig& cfg, unsigned threads = 1,
                           const ScatterObserver* observer = nullptr) {
  return detail::scatter_whole(cube, cfg, FeatureKind::scattering, threads, observer);
}

/// First-layer truncation: the U_m blocks only.
inline FeatureCube scatter_gabor(const HsiCube& cube, const ScatterConfig& cfg,
                                 unsigned threads = 1) {
  return detail::scatter_whole(cube, cfg, FeatureKind::gabor, threads, nullptr);
}

/// Spatial radius (rows, cols) beyond which input pixels cannot affect an output pixel.
inline std::pair<std::size_t, std::size_t> halo_radius(const ScatterConfig& cfg) {
  std::size_t r = 0, c = 0;
  for (const auto& l : cfg.layers) {
    r += l.support[0] / 2;
    c += l.support[1] / 2;
  }
  return {r, c};
}

struct Tile {
  std::size_t row = 0, col = 0, rows = 0, cols = 0;
};

inline std::vector<Tile> make_tiles(std::size_t height, std::size_t width, std::size_t patch) {
  std::vector<Tile> tiles;
  for (std::size_t r = 0; r < height; r += patch)
    for (std::size_t c = 0; c < width; c += patch)
      tiles.push_back({r, c, std::min(patch, height - r), std::min(patch, width - c)});
  return tiles;
}

/// Tile-local features: rows x cols pixels, pixel-major with the plan's dim.
using TileConsumer = std::function<void(const Tile&, const std::vector<float>&)>;

// Computes the transform on the given tiles, each extended by the halo and
// clipped to the image, and hands each tile's features to `consume`
// (possibly concurrently). Nothing image-sized is allocated.
inline void scatter_tiles(const HsiCube& cube, const ScatterConfig& cfg, std::span<const Tile> tiles,
                          unsigned threads, FeatureKind kind, const TileConsumer& consume) {
  const auto plan = make_plan(cfg, cube.bands(), kind);
  detail::check_spatial(cube.height(), cube.width(), plan);
  const auto [hr, hc] = halo_radius(cfg);
  const std::size_t H = cube.height(), W = cube.width(), B = cube.bands();
  for (const auto& tile : tiles)
    if (tile.rows == 0 || tile.cols == 0 || tile.row + tile.rows > H || tile.col + tile.cols > W)
      throw usage_error("scatter_tiles: tile outside the image");

  parallel_for(tiles.size(), threads, [&](std::size_t t) {
    const Tile& tile = tiles[t];
    const std::size_t r0 = tile.row > hr ? tile.row - hr : 0;
    const std::size_t c0 = tile.col > hc ? tile.col - hc : 0;
    const std::size_t r1 = std::min(H, tile.row + tile.rows + hr);
    const std::size_t c1 = std::min(W, tile.col + tile.cols + hc);
    Volume<float> sub(B, r1 - r0, c1 - c0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t r = r0; r < r1; ++r)
        std::copy_n(&cube.data.at(b, r, c0), c1 - c0, &sub.at(b, r - r0, 0));
    std::vector<float> local(tile.rows * tile.cols * plan.dim, 0.0f);
    const detail::FeatureSink sink{local.data(), plan.dim, tile.cols, 0, 0};
    const detail::EngineFrame frame{H, W, {r0, c0, r1 - r0, c1 - c0}, {tile.row, tile.col, tile.rows, tile.cols}};
    detail::run_engine(sub, frame, plan, sink, 1, nullptr);
    consume(tile, local);
  });
}

/// All patch x patch tiles of the image, row-major.
inline void scatter_tiled(const HsiCube& cube, const ScatterConfig& cfg, std::size_t patch,
                          unsigned threads, FeatureKind kind, const TileConsumer& consume) {
  if (patch < 1) throw usage_error("patch size must be >= 1");
  const auto tiles = make_tiles(cube.height(), cube.width(), patch);
  scatter_tiles(cube, cfg, tiles, threads, kind, consume);
}

/// Same result as scatter/scatter_gabor, computed in patch x patch tiles.
inline FeatureCube scatter_patched(const HsiCube& cube, const ScatterConfig& cfg,
                                   std::size_t patch, unsigned threads = 1,
                                   FeatureKind kind = FeatureKind::scattering) {
  const auto plan = make_plan(cfg, cube.bands(), kind);
  FeatureCube out = detail::empty_features(plan, cube.height(), cube.width());
  scatter_tiled(cube, cfg, patch, threads, kind, [&](const Tile& tile, const std::vector<float>& local) {
    for (std::size_t r = 0; r < tile.rows; ++r)
      std::copy_n(local.data() + r * tile.cols * plan.dim, tile.cols * plan.dim,
                  out.data.data() + ((tile.row + r) * out.width + tile.col) * plan.dim);
  });
  return out;
}

// ---------------------------------------------------------------------------

struct EnergyReport {
  double input = 0.0;   // ||f||^2
  double order0 = 0.0;  // ||S0||^2
  double order1 = 0.0;  // sum_m ||S_m||^2
  double order2 = 0.0;  // sum_{m,n} ||S_{m,n}||^2

  /// E2 / (E1 + E2), or 0 when both vanish.
  double second_share() const {
    const double d = order1 + order2;
    return d > 0.0 ? order2 / d : 0.0;
  }
  /// E1 / (E0 + E1 + E2), or 0 when the output vanishes.
  double first_share() const {
    const double d = order0 + order1 + order2;
    return d > 0.0 ? order1 / d : 0.0;
  }
};

inline EnergyReport energy_of(const HsiCube& cube, const FeatureCube& features) {
  EnergyReport rep;
  for (float v : cube.data.data) rep.input += static_cast<double>(v) * v;
  for (std::size_t p = 0; p < features.height * features.width; ++p) {
    const float* x = features.data.data() + p * features.dim;
    for (const auto& blk : features.blocks) {
      double s = 0.0;
      for (std::size_t b = 0; b < blk.bands; ++b) s += static_cast<double>(x[blk.offset + b]) * x[blk.offset + b];
      (blk.order == 0 ? rep.order0 : blk.order == 1 ? rep.order1 : rep.order2) += s;
    }
  }
  return rep;
}

inline EnergyReport energy_report(const HsiCube& cube, const ScatterConfig& cfg, unsigned threads = 1) {
  return energy_of(cube, scatter(cube, cfg, threads));
}

struct ReceptiveField {
  std::size_t spatial = 0;
  std::size_t spectral = 0;
};

inline ReceptiveField receptive_field(const ScatterConfig& cfg) {
  cfg.validate();
  const auto& L = cfg.layers;
  ReceptiveField rf;
  rf.spatial = L[0].support[0] + (L[1].support[0] - 1) + (L[2].support[0] - 1);
  rf.spectral = L[0].support[2] + (L[1].support[2] - 1) * L[0].stride +
                (L[2].support[2] - 1) * L[0].stride * L[1].stride;
  return rf;
}

/// Throws a numeric error when a feature overflowed or is not a number.
inline void check_finite(const FeatureCube& fc) {
  for (std::size_t i = 0; i < fc.data.size(); ++i)
    if (!std::isfinite(fc.data[i]))
      throw numeric_error("non-finite feature " + std::to_string(i % fc.dim) + " at pixel " +
                          std::to_string(i / fc.dim));
}

// ---------------------------------------------------------------------------
// Feature files: "<name>.json" header and "<name>.bin", f32le, pixel-major.

inline void save_features(const FeatureCube& fc, const std::filesystem::path& header_path) {
  const auto bin_path = companion_bin(header_path);
  json blocks = json::array();
  for (const auto& b : fc.blocks) {
    json jb = {{"order", b.order}, {"offset", b.offset}, {"bands", b.bands}};
    if (b.order >= 1) jb["m"] = b.m.m;
    if (b.order == 2) jb["n"] = b.n.m;
    blocks.push_back(std::move(jb));
  }
  json h = {{"height", fc.height},
            {"width", fc.width},
            {"dim", fc.dim},
            {"dtype", "f32le"},
            {"layout", "pixel-major"},
            {"kind", fc.kind == FeatureKind::gabor ? "gabor" : "scattering"},
            {"config", config_to_json(fc.config)},
            {"config_hash", config_hash(fc.config)},
            {"blocks", blocks},
            {"data", bin_path.filename().string()}};
  const auto bytes = encode_f32le(fc.data);
  write_file_bytes(bin_path, bytes.data(), bytes.size());
  write_json(header_path, h);
}

inline FeatureCube load_features(const std::filesystem::path& header_path) {
  const std::string where = header_path.string();
  const json h = read_json(header_path);
  FeatureCube fc;
  fc.height = json_get<std::size_t>(h, "height", where);
  fc.width = json_get<std::size_t>(h, "width", where);
  fc.dim = json_get<std::size_t>(h, "dim", where);
  fc.kind = h.value("kind", std::string("scattering")) == "gabor" ? FeatureKind::gabor
                                                                   : FeatureKind::scattering;
  if (h.contains("config")) fc.config = config_from_json(h["config"]);
  if (h.contains("blocks")) {
    for (const auto& jb : h["blocks"]) {
      FeatureBlock b;
      b.order = jb.at("order").get<int>();
      b.offset = jb.at("offset").get<std::size_t>();
      b.bands = jb.at("bands").get<std::size_t>();
      if (jb.contains("m")) b.m.m = jb["m"].get<std::array<std::size_t, 3>>();
      if (jb.contains("n")) b.n.m = jb["n"].get<std::array<std::size_t, 3>>();
      fc.blocks.push_back(b);
    }
  }
  const auto bytes = read_file_bytes(header_path.parent_path() / json_get<std::string>(h, "data", where));
  if (bytes.size() != fc.height * fc.width * fc.dim * 4)
    throw data_error(where + ": size mismatch between header and feature binary");
  fc.data = decode_f32le(bytes);
  for (float v : fc.data)
    if (!std::isfinite(v)) throw data_error(where + ": non-finite feature value");
  return fc;
}

}  // namespace fst3d
