#pragma once

// Reflect-padded 3D cross-correlation with separable windows, spectral
// downsampling, and the modulus of complex responses.
//
// For a window of support M the input is extended by (M-1)/2 samples before
// and M/2 samples after along every axis (half-sample symmetric reflection),
// so spatial output dims equal the input's. Output band k samples the full
// correlation at band k * stride.
//
// Every output sample is produced by the same fixed sequence of operations
// regardless of the extent of the volume it sits in, so results on a tile
// agree bit-for-bit with results on the whole image wherever the tile's halo
// covers the receptive field.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fst3d/error.hpp"
#include "fst3d/filterbank.hpp"
#include "fst3d/volume.hpp"

namespace fst3d {

inline void check_window_fits(const Volume<float>& v, const Support& support,
                              const std::string& where) {
  const std::size_t dims[3] = {v.rows, v.cols, v.bands};
  static const char* axis[3] = {"row", "column", "band"};
  for (int j = 0; j < 3; ++j)
    if (dims[j] == 0 || support[j] > 2 * dims[j])
      throw data_error(where + ": window support " + std::to_string(support[j]) + " along the " +
                       axis[j] + " axis exceeds twice the volume extent " +
                       std::to_string(dims[j]) + " (reflect padding undefined)");
}

namespace detail {

// Complex volume in split storage.
struct ComplexVolume {
  std::size_t bands = 0, rows = 0, cols = 0;
  std::vector<double> re, im;

  void resize(std::size_t b, std::size_t r, std::size_t c) {
    bands = b;
    rows = r;
    cols = c;
    re.assign(b * r * c, 0.0);
    im.assign(b * r * c, 0.0);
  }
  std::size_t plane() const { return rows * cols; }
};

struct RealVolume {
  std::size_t bands = 0, rows = 0, cols = 0;
  std::vector<double> v;

  void resize(std::size_t b, std::size_t r, std::size_t c) {
    bands = b;
    rows = r;
    cols = c;
    v.assign(b * r * c, 0.0);
  }
  std::size_t plane() const { return rows * cols; }
};

// A rectangle of pixels in image coordinates. Intermediate volumes cover a
// region of the image; reflection is always about the image borders, so a
// value computed inside a region equals the value computed on the whole image.
struct Region {
  std::size_t r0 = 0, c0 = 0, rows = 0, cols = 0;
};

inline Region whole(std::size_t rows, std::size_t cols) { return {0, 0, rows, cols}; }

// Region of the input read when correlating with `support` to produce `out`
// on an image of extent (H, W).
inline Region input_region(const Region& out, const Support& support, std::size_t H, std::size_t W) {
  const Padding pr = centered_padding(support[0]);
  const Padding pc = centered_padding(support[1]);
  const std::size_t r0 = out.r0 > pr.lo ? out.r0 - pr.lo : 0;
  const std::size_t c0 = out.c0 > pc.lo ? out.c0 - pc.lo : 0;
  const std::size_t r1 = std::min(H, out.r0 + out.rows + pr.hi);
  const std::size_t c1 = std::min(W, out.c0 + out.cols + pc.hi);
  return {r0, c0, r1 - r0, c1 - c0};
}

// Local index of the image position `pos - lo`, reflected about [0, n), in a
// region starting at `origin`.
inline std::size_t source(std::size_t pos, std::size_t lo, std::size_t n, std::size_t origin) {
  const auto g = reflect_index(static_cast<std::ptrdiff_t>(pos) - static_cast<std::ptrdiff_t>(lo),
                               static_cast<std::ptrdiff_t>(n));
  return static_cast<std::size_t>(g) - origin;
}

// Band axis, real input, complex coefficients, strided output. Keeps the
// input's pixel layout.
inline void band_pass(const Volume<float>& in, const std::vector<cdouble>& coef, std::size_t stride,
                      ComplexVolume& out) {
  const std::size_t nb = in.bands;
  const std::size_t ob = ceil_div(nb, stride);
  const std::size_t plane = in.plane();
  out.resize(ob, in.rows, in.cols);
  const Padding pad = centered_padding(coef.size());
  for (std::size_t k = 0; k < ob; ++k) {
    double* re = out.re.data() + k * plane;
    double* im = out.im.data() + k * plane;
    for (std::size_t w = 0; w < coef.size(); ++w) {
      const float* x = in.data.data() + source(k * stride + w, pad.lo, nb, 0) * plane;
      const double cr = coef[w].real(), ci = coef[w].imag();
      for (std::size_t i = 0; i < plane; ++i) {
        re[i] += cr * x[i];
        im[i] += ci * x[i];
      }
    }
  }
}

inline void band_pass_real(const Volume<float>& in, const std::vector<cdouble>& coef,
                           std::size_t stride, RealVolume& out) {
  const std::size_t nb = in.bands;
  const std::size_t ob = ceil_div(nb, stride);
  const std::size_t plane = in.plane();
  out.resize(ob, in.rows, in.cols);
  const Padding pad = centered_padding(coef.size());
  for (std::size_t k = 0; k < ob; ++k) {
    double* o = out.v.data() + k * plane;
    for (std::size_t w = 0; w < coef.size(); ++w) {
      const float* x = in.data.data() + source(k * stride + w, pad.lo, nb, 0) * plane;
      const double c = coef[w].real();
      for (std::size_t i = 0; i < plane; ++i) o[i] += c * x[i];
    }
  }
}

// Column axis (contiguous), complex in/out. `in` covers image columns
// starting at in_c0; the output covers columns [c0, c0 + ncols) of an image
// W columns wide, on the same rows.
inline void col_pass(const ComplexVolume& in, std::size_t in_c0, const std::vector<cdouble>& coef,
                     std::size_t c0, std::size_t ncols, std::size_t W, ComplexVolume& out) {
  out.resize(in.bands, in.rows, ncols);
  const std::size_t n = in.cols;
  const std::size_t m = coef.size();
  const Padding pad = centered_padding(m);
  std::vector<double> lr(ncols + m - 1), li(ncols + m - 1);
  std::vector<std::size_t> src(ncols + m - 1);
  for (std::size_t t = 0; t < src.size(); ++t) src[t] = source(c0 + t, pad.lo, W, in_c0);
  const std::size_t lines = in.bands * in.rows;
  for (std::size_t l = 0; l < lines; ++l) {
    const double* sr = in.re.data() + l * n;
    const double* si = in.im.data() + l * n;
    for (std::size_t t = 0; t < src.size(); ++t) {
      lr[t] = sr[src[t]];
      li[t] = si[src[t]];
    }
    double* re = out.re.data() + l * ncols;
    double* im = out.im.data() + l * ncols;
    for (std::size_t v = 0; v < m; ++v) {
      const double cr = coef[v].real(), ci = coef[v].imag();
      const double* a = lr.data() + v;
      const double* b = li.data() + v;
      for (std::size_t x = 0; x < ncols; ++x) {
        re[x] += cr * a[x] - ci * b[x];
        im[x] += cr * b[x] + ci * a[x];
      }
    }
  }
}

inline void col_pass_real(const RealVolume& in, std::size_t in_c0, std::size_t m, std::size_t c0,
                          std::size_t ncols, std::size_t W, RealVolume& out) {
  out.resize(in.bands, in.rows, ncols);
  const std::size_t n = in.cols;
  const Padding pad = centered_padding(m);
  const double c = 1.0 / static_cast<double>(m);
  std::vector<double> line(ncols + m - 1);
  std::vector<std::size_t> src(ncols + m - 1);
  for (std::size_t t = 0; t < src.size(); ++t) src[t] = source(c0 + t, pad.lo, W, in_c0);
  const std::size_t lines = in.bands * in.rows;
  for (std::size_t l = 0; l < lines; ++l) {
    const double* s = in.v.data() + l * n;
    for (std::size_t t = 0; t < src.size(); ++t) line[t] = s[src[t]];
    double* o = out.v.data() + l * ncols;
    for (std::size_t v = 0; v < m; ++v) {
      const double* a = line.data() + v;
      for (std::size_t x = 0; x < ncols; ++x) o[x] += c * a[x];
    }
  }
}

// Row axis, complex input covering image rows from in_r0, modulus written to
// a float volume covering rows [r0, r0 + nrows) of an image H rows tall.
inline void row_pass_modulus(const ComplexVolume& in, std::size_t in_r0, const std::vector<cdouble>& coef,
                             std::size_t r0, std::size_t nrows, std::size_t H,
                             std::vector<double>& acc_re, std::vector<double>& acc_im,
                             Volume<float>& out) {
  out.bands = in.bands;
  out.rows = nrows;
  out.cols = in.cols;
  out.data.resize(in.bands * nrows * in.cols);
  const std::size_t n = in.rows;
  const std::size_t w = in.cols;
  const std::size_t m = coef.size();
  const Padding pad = centered_padding(m);
  acc_re.resize(w);
  acc_im.resize(w);
  for (std::size_t b = 0; b < in.bands; ++b)
    for (std::size_t r = 0; r < nrows; ++r) {
      std::fill(acc_re.begin(), acc_re.end(), 0.0);
      std::fill(acc_im.begin(), acc_im.end(), 0.0);
      for (std::size_t u = 0; u < m; ++u) {
        const std::size_t src = source(r0 + r + u, pad.lo, H, in_r0);
        const double* sr = in.re.data() + (b * n + src) * w;
        const double* si = in.im.data() + (b * n + src) * w;
        const double cr = coef[u].real(), ci = coef[u].imag();
        for (std::size_t x = 0; x < w; ++x) {
          acc_re[x] += cr * sr[x] - ci * si[x];
          acc_im[x] += cr * si[x] + ci * sr[x];
        }
      }
      float* o = out.data.data() + (b * nrows + r) * w;
      for (std::size_t x = 0; x < w; ++x)
        o[x] = static_cast<float>(std::sqrt(acc_re[x] * acc_re[x] + acc_im[x] * acc_im[x]));
    }
}

inline void row_pass_real(const RealVolume& in, std::size_t in_r0, std::size_t m, std::size_t r0,
                          std::size_t nrows, std::size_t H, Volume<float>& out) {
  out.bands = in.bands;
  out.rows = nrows;
  out.cols = in.cols;
  out.data.resize(in.bands * nrows * in.cols);
  const std::size_t n = in.rows;
  const std::size_t w = in.cols;
  const Padding pad = centered_padding(m);
  const double c = 1.0 / static_cast<double>(m);
  std::vector<double> acc(w);
  for (std::size_t b = 0; b < in.bands; ++b)
    for (std::size_t r = 0; r < nrows; ++r) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t u = 0; u < m; ++u) {
        const double* s = in.v.data() + (b * n + source(r0 + r + u, pad.lo, H, in_r0)) * w;
        for (std::size_t x = 0; x < w; ++x) acc[x] += c * s[x];
      }
      float* o = out.data.data() + (b * nrows + r) * w;
      for (std::size_t x = 0; x < w; ++x) o[x] = static_cast<float>(acc[x]);
    }
}

// Local average of `in` (covering region `in_reg` of an H x W image) on
// region `out_reg`.
inline Volume<float> average(const Volume<float>& in, const Region& in_reg, const Support& support,
                             std::size_t stride, const Region& out_reg, std::size_t H, std::size_t W) {
  RealVolume a, b;
  band_pass_real(in, modulated_factor(0, support[2]), stride, a);
  col_pass_real(a, in_reg.c0, support[1], out_reg.c0, out_reg.cols, W, b);
  Volume<float> out;
  row_pass_real(b, in_reg.r0, support[0], out_reg.r0, out_reg.rows, H, out);
  return out;
}

}  // namespace detail

/// Local average with the rectangular window of `support`, keeping every
/// `stride`-th band. Output: bands ceil(B / stride), same rows and columns.
inline Volume<float> conv3d_avg(const Volume<float>& volume, const Support& support,
                                std::size_t stride) {
  if (stride < 1) throw usage_error("conv3d_avg: stride must be >= 1");
  check_window_fits(volume, support, "conv3d_avg");
  const auto all = detail::whole(volume.rows, volume.cols);
  return detail::average(volume, all, support, stride, all, volume.rows, volume.cols);
}

/// |volume (x) filter| with spectral downsampling, for one modulated filter.
inline Volume<float> conv3d_mod(const Volume<float>& volume, const Filter& filter,
                                std::size_t stride) {
  if (stride < 1) throw usage_error("conv3d_mod: stride must be >= 1");
  check_window_fits(volume, filter.support, "conv3d_mod");
  detail::ComplexVolume a, b;
  detail::band_pass(volume, filter.factors[2], stride, a);
  detail::col_pass(a, 0, filter.factors[1], 0, volume.cols, volume.cols, b);
  std::vector<double> re, im;
  Volume<float> out;
  detail::row_pass_modulus(b, 0, filter.factors[0], 0, volume.rows, volume.rows, re, im, out);
  return out;
}

}  // namespace fst3d
