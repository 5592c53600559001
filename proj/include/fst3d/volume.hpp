#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fst3d/error.hpp"

namespace fst3d {

// Dense 3D array stored band-major: index = (band * rows + row) * cols + col.
// Axis naming follows image conventions; "row" is the first spatial axis.
template <typename T>
struct Volume {
  std::size_t bands = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Volume() = default;
  Volume(std::size_t b, std::size_t r, std::size_t c, T fill = T{})
      : bands(b), rows(r), cols(c), data(b * r * c, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return rows * cols; }

  T& at(std::size_t b, std::size_t r, std::size_t c) { return data[(b * rows + r) * cols + c]; }
  const T& at(std::size_t b, std::size_t r, std::size_t c) const {
    return data[(b * rows + r) * cols + c];
  }

  std::span<T> band(std::size_t b) { return {data.data() + b * plane(), plane()}; }
  std::span<const T> band(std::size_t b) const { return {data.data() + b * plane(), plane()}; }

  bool same_shape(const Volume& o) const {
    return bands == o.bands && rows == o.rows && cols == o.cols;
  }
};

// Index of a sample `i` positions away from a signal of length n after
// half-sample symmetric extension (edge samples repeated): -1 -> 0, n -> n-1.
// Valid for -n <= i < 2n.
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - i - 1;
  return i;
}

// Leading and trailing padding for a centered window of support m.
struct Padding {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

inline Padding centered_padding(std::size_t support) {
  const std::size_t lo = (support - 1) / 2;
  return {lo, support - 1 - lo};
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace fst3d
