#pragma once

// Modulated-window filter banks.
//
// A layer with support M = (M1, M2, M3) owns the rectangular window
// g = 1 / (M1 M2 M3) on its support and the modulated filters
//   g_m(u) = exp(2 pi i (u1 m1/M1 + u2 m2/M2 + u3 m3/M3)) g(u),  0 <= m_j < M_j.
// Axis 0 and 1 are spatial (row, column), axis 2 is spectral.

#include <algorithm>
#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fst3d/binary_io.hpp"
#include "fst3d/error.hpp"

namespace fst3d {

using Support = std::array<std::size_t, 3>;
using cdouble = std::complex<double>;

struct LayerSpec {
  Support support{1, 1, 1};
  std::size_t stride = 1;  // spectral downsampling factor

  void validate(const std::string& name) const {
    for (auto m : support)
      if (m < 1) throw usage_error(name + ": window support must be >= 1 on every axis");
    if (stride < 1) throw usage_error(name + ": spectral stride must be >= 1");
    if (stride > support[2])
      throw usage_error(name + ": spectral stride " + std::to_string(stride) +
                        " exceeds spectral support " + std::to_string(support[2]));
  }

  std::size_t volume() const { return support[0] * support[1] * support[2]; }
};

/// Stride default: P = M3 - 2, clamped to at least 1.
inline std::size_t default_stride(std::size_t spectral_support) {
  return spectral_support > 3 ? spectral_support - 2 : 1;
}

enum class PathRule { all, neq, strict_less };
enum class WindowType { rectangular };

struct ScatterConfig {
  std::array<LayerSpec, 3> layers{};
  PathRule path_rule = PathRule::neq;
  bool conjugate_reduce = true;
  WindowType window = WindowType::rectangular;

  void validate() const {
    static const char* names[3] = {"layer 0 (M, P)", "layer 1 (Mp, Pp)", "layer 2 (Mpp, Ppp)"};
    for (int l = 0; l < 3; ++l) layers[l].validate(names[l]);
  }

  /// Same support on all three layers, strides from the default rule.
  static ScatterConfig uniform(Support m) {
    ScatterConfig cfg;
    for (auto& l : cfg.layers) l = {m, default_stride(m[2])};
    return cfg;
  }

  static ScatterConfig from_supports(Support m, Support mp, Support mpp) {
    ScatterConfig cfg;
    cfg.layers[0] = {m, default_stride(m[2])};
    cfg.layers[1] = {mp, default_stride(mp[2])};
    cfg.layers[2] = {mpp, default_stride(mpp[2])};
    return cfg;
  }
};

inline std::string to_string(PathRule r) {
  switch (r) {
    case PathRule::all: return "all";
    case PathRule::neq: return "neq";
    case PathRule::strict_less: return "strict_less";
  }
  return "neq";
}

inline PathRule parse_path_rule(const std::string& s) {
  if (s == "all") return PathRule::all;
  if (s == "neq") return PathRule::neq;
  if (s == "strict_less") return PathRule::strict_less;
  throw usage_error("unknown path_rule \"" + s + "\" (expected all, neq or strict_less)");
}

inline json config_to_json(const ScatterConfig& cfg) {
  const auto& L = cfg.layers;
  return json{{"M", L[0].support},   {"Mp", L[1].support},   {"Mpp", L[2].support},
              {"P", L[0].stride},    {"Pp", L[1].stride},    {"Ppp", L[2].stride},
              {"path_rule", to_string(cfg.path_rule)},
              {"conjugate_reduce", cfg.conjugate_reduce},
              {"window", "rect"}};
}

inline ScatterConfig config_from_json(const json& j) {
  static const char* support_keys[3] = {"M", "Mp", "Mpp"};
  static const char* stride_keys[3] = {"P", "Pp", "Ppp"};
  ScatterConfig cfg;
  try {
    for (int l = 0; l < 3; ++l) {
      if (!j.contains(support_keys[l]))
        throw usage_error(std::string("config: missing \"") + support_keys[l] + "\"");
      const auto m = j.at(support_keys[l]).get<std::vector<long long>>();
      if (m.size() != 3 || std::any_of(m.begin(), m.end(), [](long long v) { return v < 1; }))
        throw usage_error(std::string("config: \"") + support_keys[l] +
                          "\" must be three positive integers");
      cfg.layers[l].support = {static_cast<std::size_t>(m[0]), static_cast<std::size_t>(m[1]),
                               static_cast<std::size_t>(m[2])};
      if (j.contains(stride_keys[l])) {
        const auto p = j.at(stride_keys[l]).get<long long>();
        if (p < 1) throw usage_error(std::string("config: \"") + stride_keys[l] + "\" must be >= 1");
        cfg.layers[l].stride = static_cast<std::size_t>(p);
      } else {
        cfg.layers[l].stride = default_stride(cfg.layers[l].support[2]);
      }
    }
    cfg.path_rule = parse_path_rule(j.value("path_rule", std::string("neq")));
    cfg.conjugate_reduce = j.value("conjugate_reduce", true);
    const auto window = j.value("window", std::string("rect"));
    if (window != "rect" && window != "rectangular")
      throw usage_error("config: unsupported window \"" + window + "\"");
  } catch (const json::exception& e) {
    throw usage_error(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline std::string config_hash(const ScatterConfig& cfg) {
  const std::string canon = config_to_json(cfg).dump();
  return hex64(fnv1a64(canon.data(), canon.size()));
}

// ---------------------------------------------------------------------------

struct ModIndex {
  std::array<std::size_t, 3> m{0, 0, 0};
  friend auto operator<=>(const ModIndex&, const ModIndex&) = default;
};

/// Exact comparison of normalized frequencies a/Ma and b/Mb on one axis:
/// returns <0, 0, >0.
inline int compare_frequency(std::size_t a, std::size_t ma, std::size_t b, std::size_t mb) {
  const auto lhs = static_cast<unsigned long long>(a) * mb;
  const auto rhs = static_cast<unsigned long long>(b) * ma;
  return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

// A separable filter on a rectangular support. `factors[j][u]` is the 1D
// coefficient for offset u along axis j; the 3D value is their product.
struct Filter {
  Support support{1, 1, 1};
  std::array<std::vector<cdouble>, 3> factors;

  cdouble value(std::size_t u0, std::size_t u1, std::size_t u2) const {
    return factors[0][u0] * factors[1][u1] * factors[2][u2];
  }

  /// Dense coefficients, index (u0 * M2 + u1) * M3 + u2.
  std::vector<cdouble> dense() const {
    std::vector<cdouble> out(support[0] * support[1] * support[2]);
    std::size_t i = 0;
    for (std::size_t a = 0; a < support[0]; ++a)
      for (std::size_t b = 0; b < support[1]; ++b)
        for (std::size_t c = 0; c < support[2]; ++c) out[i++] = value(a, b, c);
    return out;
  }
};

/// 1D factor of the modulated rectangular window: exp(2 pi i u m / M) / M.
inline std::vector<cdouble> modulated_factor(std::size_t m, std::size_t support) {
  std::vector<cdouble> f(support);
  const double inv = 1.0 / static_cast<double>(support);
  for (std::size_t u = 0; u < support; ++u) {
    if (m == 0) {
      f[u] = {inv, 0.0};
      continue;
    }
    // Phases above pi are taken as the conjugate of the mirrored phase, so the
    // factors of m and M - m are exact conjugates and so are their responses.
    const std::size_t k = (u * m) % support;
    const bool mirrored = 2 * k > support;
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(mirrored ? support - k : k) /
                         static_cast<double>(support);
    if (2 * k == support) {
      f[u] = {-inv, 0.0};
      continue;
    }
    const double s = std::sin(phase) * inv;
    f[u] = {std::cos(phase) * inv, mirrored ? -s : s};
  }
  return f;
}

inline Filter make_filter(const Support& support, const ModIndex& idx) {
  Filter f;
  f.support = support;
  for (int j = 0; j < 3; ++j) f.factors[j] = modulated_factor(idx.m[j], support[j]);
  return f;
}

struct FilterBank {
  LayerSpec spec;
  Filter window;                  // averaging window g (index (0,0,0))
  std::vector<ModIndex> indices;  // retained modulation indices, sorted
  std::vector<Filter> filters;    // filters[i] modulates by indices[i]
};

inline ModIndex conjugate_partner(const ModIndex& idx, const Support& support) {
  ModIndex p;
  for (int j = 0; j < 3; ++j) p.m[j] = (support[j] - idx.m[j]) % support[j];
  return p;
}

inline FilterBank build_bank(const LayerSpec& spec, bool conjugate_reduce,
                             WindowType window = WindowType::rectangular) {
  spec.validate("filter bank");
  (void)window;  // only the rectangular window exists
  FilterBank bank;
  bank.spec = spec;
  bank.window = make_filter(spec.support, ModIndex{});
  const auto& M = spec.support;
  for (std::size_t a = 0; a < M[0]; ++a)
    for (std::size_t b = 0; b < M[1]; ++b)
      for (std::size_t c = 0; c < M[2]; ++c) {
        const ModIndex idx{{a, b, c}};
        if (idx == ModIndex{}) continue;
        // Same support on both sides, so comparing normalized frequencies
        // lexicographically is comparing the integer triples.
        if (conjugate_reduce && conjugate_partner(idx, M) < idx) continue;
        bank.indices.push_back(idx);
      }
  bank.filters.reserve(bank.indices.size());
  for (const auto& idx : bank.indices) bank.filters.push_back(make_filter(M, idx));
  return bank;
}

struct ScatterBanks {
  std::array<FilterBank, 3> layers;
};

inline ScatterBanks build_banks(const ScatterConfig& cfg) {
  cfg.validate();
  ScatterBanks banks;
  for (int l = 0; l < 3; ++l) banks.layers[l] = build_bank(cfg.layers[l], cfg.conjugate_reduce, cfg.window);
  return banks;
}

// ---------------------------------------------------------------------------
// Frame bound

namespace detail {

// In-place DFT of length n along one axis of a dense n0 x n1 x n2 complex grid.
inline void dft_axis(std::vector<cdouble>& grid, const std::array<std::size_t, 3>& n, int axis) {
  const std::size_t len = n[axis];
  std::vector<cdouble> twiddle(len);
  for (std::size_t k = 0; k < len; ++k) {
    const double ph = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
    twiddle[k] = {std::cos(ph), std::sin(ph)};
  }
  const std::size_t stride = axis == 2 ? 1 : (axis == 1 ? n[2] : n[1] * n[2]);
  const std::size_t outer = axis == 0 ? 1 : (axis == 1 ? n[0] : n[0] * n[1]);
  const std::size_t inner = axis == 0 ? n[1] * n[2] : (axis == 1 ? n[2] : 1);
  std::vector<cdouble> line(len), out(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = axis == 2 ? o * len : (axis == 1 ? o * len * n[2] + i : i);
      for (std::size_t t = 0; t < len; ++t) line[t] = grid[base + t * stride];
      for (std::size_t k = 0; k < len; ++k) {
        cdouble acc{0.0, 0.0};
        for (std::size_t t = 0; t < len; ++t) {
          if (line[t] == cdouble{}) continue;
          acc += line[t] * twiddle[(k * t) % len];
        }
        out[k] = acc;
      }
      for (std::size_t k = 0; k < len; ++k) grid[base + k * stride] = out[k];
    }
}

inline std::vector<cdouble> padded_dft(const Filter& f, const std::array<std::size_t, 3>& n) {
  std::vector<cdouble> grid(n[0] * n[1] * n[2]);
  const auto dense = f.dense();
  std::size_t i = 0;
  for (std::size_t a = 0; a < f.support[0]; ++a)
    for (std::size_t b = 0; b < f.support[1]; ++b)
      for (std::size_t c = 0; c < f.support[2]; ++c) grid[(a * n[1] + b) * n[2] + c] = dense[i++];
  for (int axis = 2; axis >= 0; --axis) dft_axis(grid, n, axis);
  return grid;
}

}  // namespace detail

/// Upper frame bound: max over the DFT grid of |g^|^2 + sum_m |g_m^|^2.
inline double frame_bound(const FilterBank& bank, const std::array<std::size_t, 3>& fft_size) {
  for (int j = 0; j < 3; ++j)
    if (fft_size[j] < bank.spec.support[j])
      throw usage_error("frame_bound: fft_size must cover the filter support");
  std::vector<double> total(fft_size[0] * fft_size[1] * fft_size[2], 0.0);
  auto accumulate = [&](const Filter& f) {
    const auto spec = detail::padded_dft(f, fft_size);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += std::norm(spec[i]);
  };
  accumulate(bank.window);
  for (const auto& f : bank.filters) accumulate(f);
  return *std::max_element(total.begin(), total.end());
}

inline double frame_bound(const FilterBank& bank) {
  const auto& M = bank.spec.support;
  return frame_bound(bank, {4 * M[0], 4 * M[1], 4 * M[2]});
}

// ---------------------------------------------------------------------------
// Second-layer paths

struct ScatterPath {
  std::size_t first = 0;   // position in the layer-0 bank
  std::size_t second = 0;  // position in the layer-1 bank
  ModIndex m;
  ModIndex n;
};

inline bool keep_path(PathRule rule, const ModIndex& m, const Support& mm, const ModIndex& n,
                      const Support& nm) {
  switch (rule) {
    case PathRule::all:
      return true;
    case PathRule::neq:
      for (int j = 0; j < 3; ++j)
        if (compare_frequency(m.m[j], mm[j], n.m[j], nm[j]) != 0) return true;
      return false;
    case PathRule::strict_less:
      for (int j = 0; j < 3; ++j)
        if (compare_frequency(n.m[j], nm[j], m.m[j], mm[j]) >= 0) return false;
      return true;
  }
  return true;
}

/// Retained (m, n) pairs, sorted lexicographically by (m, n).
inline std::vector<ScatterPath> enumerate_paths(const ScatterConfig& cfg, const FilterBank& first,
                                                const FilterBank& second) {
  std::vector<ScatterPath> paths;
  for (std::size_t i = 0; i < first.indices.size(); ++i)
    for (std::size_t j = 0; j < second.indices.size(); ++j)
      if (keep_path(cfg.path_rule, first.indices[i], first.spec.support, second.indices[j],
                    second.spec.support))
        paths.push_back({i, j, first.indices[i], second.indices[j]});
  return paths;
}

inline std::vector<ScatterPath> enumerate_paths(const ScatterConfig& cfg) {
  const auto banks = build_banks(cfg);
  return enumerate_paths(cfg, banks.layers[0], banks.layers[1]);
}

}  // namespace fst3d
