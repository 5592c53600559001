#pragma once

// Training-mask construction: per-class random sampling, strictly site-specific
// (SSS) region growth, and the 1-nearest-neighbour label-interpolation check
// that exposes spatial train/test overlap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fst3d/binary_io.hpp"
#include "fst3d/error.hpp"
#include "fst3d/hsi_io.hpp"
#include "fst3d/rng.hpp"

namespace fst3d {

enum class SamplingStrategy { random, sss };

inline std::string to_string(SamplingStrategy s) { return s == SamplingStrategy::sss ? "sss" : "random"; }

inline SamplingStrategy parse_strategy(const std::string& s) {
  if (s == "random") return SamplingStrategy::random;
  if (s == "sss") return SamplingStrategy::sss;
  throw usage_error("unknown sampling strategy \"" + s + "\" (expected random or sss)");
}

struct TrainMask {
  std::vector<Pixel> selected;             // sorted row-major
  std::vector<std::size_t> per_class;      // per_class[k - 1] = pixels of class k
  SamplingStrategy strategy = SamplingStrategy::random;
  std::uint64_t seed = 0;

  bool contains(Pixel p) const { return std::binary_search(selected.begin(), selected.end(), p); }
};

// Either an absolute count per class or a fraction of each class.
struct SampleSize {
  std::size_t per_class = 0;
  double fraction = 0.0;

  static SampleSize count(std::size_t n) { return {n, 0.0}; }
  static SampleSize of(double f) { return {0, f}; }

  std::size_t for_class(std::size_t population) const {
    if (per_class > 0) return std::min(per_class, population);
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(population)));
    return std::clamp<std::size_t>(n, 1, population);
  }

  void validate() const {
    if (per_class == 0 && !(fraction > 0.0 && fraction <= 1.0))
      throw usage_error("sample size: need per_class >= 1 or fraction in (0, 1]");
  }
};

inline std::vector<std::vector<Pixel>> pixels_by_class(const LabelMap& labels) {
  std::vector<std::vector<Pixel>> by(labels.num_classes);
  for (std::size_t r = 0; r < labels.height; ++r)
    for (std::size_t c = 0; c < labels.width; ++c) {
      const auto v = labels.at(r, c);
      if (v == 0) continue;
      if (v > labels.num_classes) throw data_error("label id exceeds the class count");
      by[v - 1].push_back({r, c});
    }
  return by;
}

inline TrainMask sample_random(const LabelMap& labels, SampleSize size, std::uint64_t seed) {
  size.validate();
  if (labels.num_classes == 0) throw data_error("sample_random: label map has no classes");
  const auto by = pixels_by_class(labels);
  TrainMask mask;
  mask.strategy = SamplingStrategy::random;
  mask.seed = seed;
  mask.per_class.assign(labels.num_classes, 0);
  for (std::size_t k = 0; k < by.size(); ++k) {
    auto pool = by[k];
    const std::size_t take = pool.empty() ? 0 : size.for_class(pool.size());
    Xoshiro256 rng(derive_seed(seed, k + 1));
    // Partial Fisher-Yates: the first `take` slots become a uniform subset.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      mask.selected.push_back(pool[i]);
    }
    mask.per_class[k] = take;
  }
  std::sort(mask.selected.begin(), mask.selected.end());
  return mask;
}

namespace detail {

// Grows one 4-connected region of class `cls` from `start`, adding a uniformly
// chosen frontier pixel at each step until `target` pixels or no frontier.
inline std::vector<Pixel> grow_site(const LabelMap& labels, std::uint16_t cls, Pixel start,
                                    std::size_t target, Xoshiro256& rng) {
  const std::size_t H = labels.height, W = labels.width;
  std::vector<std::uint8_t> state(H * W, 0);  // 1 = frontier, 2 = selected
  std::vector<Pixel> region{start}, frontier;
  state[start.row * W + start.col] = 2;
  auto push_neighbours = [&](Pixel p) {
    const Pixel nb[4] = {{p.row - 1, p.col}, {p.row + 1, p.col}, {p.row, p.col - 1}, {p.row, p.col + 1}};
    const bool ok[4] = {p.row > 0, p.row + 1 < H, p.col > 0, p.col + 1 < W};
    for (int i = 0; i < 4; ++i) {
      if (!ok[i]) continue;
      const std::size_t idx = nb[i].row * W + nb[i].col;
      if (state[idx] != 0 || labels.labels[idx] != cls) continue;
      state[idx] = 1;
      frontier.push_back(nb[i]);
    }
  };
  push_neighbours(start);
  while (region.size() < target && !frontier.empty()) {
    const std::size_t j = rng.below(frontier.size());
    const Pixel p = frontier[j];
    frontier[j] = frontier.back();
    frontier.pop_back();
    state[p.row * W + p.col] = 2;
    region.push_back(p);
    push_neighbours(p);
  }
  return region;
}

}  // namespace detail

inline constexpr std::size_t kSssAttempts = 25;

inline TrainMask sample_sss(const LabelMap& labels, std::size_t per_class, std::uint64_t seed) {
  if (per_class < 1) throw usage_error("sample_sss: per_class must be >= 1");
  if (labels.num_classes == 0) throw data_error("sample_sss: label map has no classes");
  const auto by = pixels_by_class(labels);
  TrainMask mask;
  mask.strategy = SamplingStrategy::sss;
  mask.seed = seed;
  mask.per_class.assign(labels.num_classes, 0);
  for (std::size_t k = 0; k < by.size(); ++k) {
    if (by[k].empty())
      throw data_error("sample_sss: class " + std::to_string(k + 1) + " has no labeled pixels");
    Xoshiro256 rng(derive_seed(seed, k + 1));
    std::vector<Pixel> best;
    for (std::size_t attempt = 0; attempt < kSssAttempts; ++attempt) {
      const Pixel start = by[k][rng.below(by[k].size())];
      auto site = detail::grow_site(labels, static_cast<std::uint16_t>(k + 1), start, per_class, rng);
      if (site.size() > best.size()) best = std::move(site);
      if (best.size() >= per_class) break;
    }
    mask.per_class[k] = best.size();
    mask.selected.insert(mask.selected.end(), best.begin(), best.end());
  }
  std::sort(mask.selected.begin(), mask.selected.end());
  return mask;
}

/// Fraction of labeled pixels whose nearest training pixel (Euclidean pixel
/// distance; ties to the smallest row, then column) carries their class.
/// Training pixels count as correct.
inline double knn1_diagnostic(const LabelMap& labels, const TrainMask& mask) {
  if (mask.selected.empty()) throw usage_error("knn1_diagnostic: empty training mask");
  std::size_t total = 0, correct = 0;
  for (std::size_t r = 0; r < labels.height; ++r)
    for (std::size_t c = 0; c < labels.width; ++c) {
      const auto truth = labels.at(r, c);
      if (truth == 0) continue;
      ++total;
      // `selected` is sorted row-major, so the first strict minimum wins ties.
      std::size_t best = std::numeric_limits<std::size_t>::max();
      std::uint16_t guess = 0;
      for (const auto& p : mask.selected) {
        const auto dr = static_cast<std::ptrdiff_t>(p.row) - static_cast<std::ptrdiff_t>(r);
        const auto dc = static_cast<std::ptrdiff_t>(p.col) - static_cast<std::ptrdiff_t>(c);
        const auto d2 = static_cast<std::size_t>(dr * dr + dc * dc);
        if (d2 < best) {
          best = d2;
          guess = labels.at(p);
        }
      }
      if (guess == truth) ++correct;
    }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Mask files: {"strategy", "seed", "per_class_counts", "pixels": [[row, col], ...]}

inline json mask_to_json(const TrainMask& m) {
  json px = json::array();
  for (const auto& p : m.selected) px.push_back({p.row, p.col});
  return json{{"strategy", to_string(m.strategy)},
              {"seed", m.seed},
              {"per_class_counts", m.per_class},
              {"pixels", px}};
}

inline TrainMask mask_from_json(const json& j, const std::string& where = "mask") {
  TrainMask m;
  try {
    m.strategy = parse_strategy(j.value("strategy", std::string("random")));
    m.seed = j.value("seed", std::uint64_t{0});
    m.per_class = j.value("per_class_counts", std::vector<std::size_t>{});
    for (const auto& p : j.at("pixels")) m.selected.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
  } catch (const json::exception& e) {
    throw data_error(where + ": " + e.what());
  }
  std::sort(m.selected.begin(), m.selected.end());
  m.selected.erase(std::unique(m.selected.begin(), m.selected.end()), m.selected.end());
  return m;
}

inline void save_mask(const TrainMask& m, const std::filesystem::path& path) { write_json(path, mask_to_json(m)); }

inline TrainMask load_mask(const std::filesystem::path& path) {
  return mask_from_json(read_json(path), path.string());
}

/// Checks that every mask pixel lies inside the map and is labeled.
inline void validate_mask(const TrainMask& m, const LabelMap& labels) {
  for (const auto& p : m.selected) {
    if (p.row >= labels.height || p.col >= labels.width)
      throw data_error("mask pixel outside the label map");
    if (labels.at(p) == 0) throw data_error("mask selects an unlabeled pixel");
  }
}

}  // namespace fst3d
