#pragma once

// Helpers shared by the unit tests and the acceptance runner: seeded random
// inputs, scratch directories and brute-force oracles written independently of
// the library's separable passes.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "fst3d/fst3d.hpp"

namespace fst3d::testing {

// Kind of the fst3d::Error thrown by fn, or std::nullopt when it returns or
// throws something else.
inline std::optional<ErrorKind> kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  } catch (...) {
  }
  return std::nullopt;
}

inline HsiCube random_cube(std::size_t h, std::size_t w, std::size_t b, std::uint64_t seed,
                           double lo = -1.0, double hi = 1.0) {
  HsiCube cube(h, w, b);
  Xoshiro256 rng(seed);
  for (auto& v : cube.data.data) v = static_cast<float>(rng.uniform(lo, hi));
  return cube;
}

inline Volume<float> random_volume(std::size_t bands, std::size_t rows, std::size_t cols,
                                   std::uint64_t seed) {
  return random_cube(rows, cols, bands, seed).data;
}

// Zero-mean sum of four low-frequency plane waves (at most 0.15 cycles per
// sample on every axis).
inline HsiCube band_limited_cube(std::size_t h, std::size_t w, std::size_t b, std::uint64_t seed) {
  struct Wave {
    double fr, fc, fb, phase, amp;
  };
  Xoshiro256 rng(seed);
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i)
    waves.push_back({rng.uniform(0.0, 0.15), rng.uniform(0.0, 0.15), rng.uniform(0.0, 0.15),
                     rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.5, 1.0)});
  HsiCube cube(h, w, b);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t k = 0; k < b; ++k) {
        double v = 0.0;
        for (const auto& wv : waves)
          v += wv.amp * std::cos(2.0 * std::numbers::pi * (wv.fr * r + wv.fc * c + wv.fb * k) + wv.phase);
        cube.at(r, c, k) = static_cast<float>(v);
      }
  return cube;
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fst3d_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Index after half-sample symmetric extension, valid for any offset.
inline long mirror(long i, long n) {
  const long period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// Direct cross-correlation of `v` with a dense complex kernel h(u0, u1, u2)
// (rows, cols, bands), centered with lo = (M - 1) / 2 and mirrored borders,
// sampled at bands 0, stride, 2 * stride, ...
inline std::vector<std::complex<double>> correlate_naive(
    const Volume<float>& v, const std::array<std::size_t, 3>& M,
    const std::function<std::complex<double>(std::size_t, std::size_t, std::size_t)>& h,
    std::size_t stride) {
  const std::size_t ob = (v.bands + stride - 1) / stride;
  std::vector<std::complex<double>> out(ob * v.rows * v.cols);
  const long lo0 = static_cast<long>((M[0] - 1) / 2);
  const long lo1 = static_cast<long>((M[1] - 1) / 2);
  const long lo2 = static_cast<long>((M[2] - 1) / 2);
  for (std::size_t k = 0; k < ob; ++k)
    for (std::size_t r = 0; r < v.rows; ++r)
      for (std::size_t c = 0; c < v.cols; ++c) {
        std::complex<double> s = 0.0;
        for (std::size_t u0 = 0; u0 < M[0]; ++u0)
          for (std::size_t u1 = 0; u1 < M[1]; ++u1)
            for (std::size_t u2 = 0; u2 < M[2]; ++u2) {
              const long rr = mirror(static_cast<long>(r + u0) - lo0, static_cast<long>(v.rows));
              const long cc = mirror(static_cast<long>(c + u1) - lo1, static_cast<long>(v.cols));
              const long bb = mirror(static_cast<long>(k * stride + u2) - lo2, static_cast<long>(v.bands));
              s += static_cast<double>(v.at(bb, rr, cc)) * h(u0, u1, u2);
            }
        out[(k * v.rows + r) * v.cols + c] = s;
      }
  return out;
}

// |windowed DFT| of `v` at modulation m over the rectangular window M.
inline std::vector<double> windowed_dft_magnitude(const Volume<float>& v, const std::array<std::size_t, 3>& M,
                                                  const std::array<std::size_t, 3>& m, std::size_t stride) {
  const double norm = 1.0 / static_cast<double>(M[0] * M[1] * M[2]);
  auto kernel = [&](std::size_t u0, std::size_t u1, std::size_t u2) {
    const double phase = 2.0 * std::numbers::pi *
                         (static_cast<double>(u0 * m[0]) / M[0] + static_cast<double>(u1 * m[1]) / M[1] +
                          static_cast<double>(u2 * m[2]) / M[2]);
    return std::polar(norm, phase);
  };
  const auto z = correlate_naive(v, M, kernel, stride);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::abs(z[i]);
  return out;
}

inline std::vector<double> local_mean_naive(const Volume<float>& v, const std::array<std::size_t, 3>& M,
                                            std::size_t stride) {
  const double norm = 1.0 / static_cast<double>(M[0] * M[1] * M[2]);
  const auto z = correlate_naive(v, M, [&](std::size_t, std::size_t, std::size_t) { return std::complex<double>(norm); },
                                 stride);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i].real();
  return out;
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  return worst;
}

inline double l2_distance(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Raw spectra arranged as a FeatureCube so both feature kinds share one pipeline.
inline FeatureCube raw_feature_cube(const HsiCube& cube) {
  FeatureCube fc;
  fc.height = cube.height();
  fc.width = cube.width();
  fc.dim = cube.bands();
  fc.data.resize(fc.height * fc.width * fc.dim);
  for (std::size_t r = 0; r < fc.height; ++r)
    for (std::size_t c = 0; c < fc.width; ++c)
      for (std::size_t b = 0; b < fc.dim; ++b) fc.data[(r * fc.width + c) * fc.dim + b] = cube.at(r, c, b);
  return fc;
}

// Train on the mask, predict every held-out labeled pixel, return OA.
inline double holdout_accuracy(const FeatureCube& fc, const LabelMap& labels, const TrainMask& mask,
                               const SvmOptions& opt) {
  const auto model = svm_train(feature_dataset(fc, mask.selected, &labels), opt);
  LabelMap predicted(labels.height, labels.width);
  predicted.num_classes = labels.num_classes;
  for (std::size_t r = 0; r < labels.height; ++r)
    for (std::size_t c = 0; c < labels.width; ++c)
      if (labels.at(r, c) != 0) predicted.at(r, c) = predict_one(model, fc.pixel(r, c));
  return evaluate(labels, predicted, mask).overall_accuracy;
}

// Block of `fc` as a (bands x rows x cols) volume.
inline Volume<float> block_volume(const FeatureCube& fc, const FeatureBlock& blk) {
  Volume<float> v(blk.bands, fc.height, fc.width);
  for (std::size_t r = 0; r < fc.height; ++r)
    for (std::size_t c = 0; c < fc.width; ++c)
      for (std::size_t b = 0; b < blk.bands; ++b) v.at(b, r, c) = fc.at(r, c, blk.offset + b);
  return v;
}

inline std::map<std::size_t, Volume<float>> observe_first_layer(const HsiCube& cube, const ScatterConfig& cfg,
                                                                unsigned threads = 1) {
  std::map<std::size_t, Volume<float>> seen;
  std::mutex mu;
  const ScatterObserver obs = [&](std::size_t p, const Volume<float>& u) {
    std::lock_guard lock(mu);
    seen[p] = u;
  };
  scatter(cube, cfg, threads, &obs);
  return seen;
}

// Number of 4-connected components formed by the selected pixels of class k.
inline std::size_t components(const TrainMask& mask, const LabelMap& labels, std::uint16_t k) {
  std::set<Pixel> left;
  for (const auto& p : mask.selected)
    if (labels.at(p) == k) left.insert(p);
  std::size_t count = 0;
  while (!left.empty()) {
    ++count;
    std::queue<Pixel> q;
    q.push(*left.begin());
    left.erase(left.begin());
    while (!q.empty()) {
      const Pixel p = q.front();
      q.pop();
      const Pixel nb[4] = {{p.row - 1, p.col}, {p.row + 1, p.col}, {p.row, p.col - 1}, {p.row, p.col + 1}};
      for (const auto& n : nb) {
        auto it = left.find(n);
        if (it != left.end()) {
          q.push(n);
          left.erase(it);
        }
      }
    }
  }
  return count;
}

// Two Gaussian blobs in `dim` dimensions, `n` points, class +1 shifted by +shift
// on the first axis and class -1 by -shift.
inline std::pair<Matrix<double>, std::vector<int>> blobs(std::size_t n, std::size_t dim, double shift, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  Matrix<double> x(n, dim);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 2 == 0 ? 1 : -1;
    for (std::size_t j = 0; j < dim; ++j) x(i, j) = rng.normal();
    x(i, 0) += y[i] * shift;
  }
  return {x, y};
}

// Frozen acceptance scene: 64x64x32, 8 classes, per-band SNR 10 dB, seed 7.
inline SynthSpec acceptance_scene() {
  SynthSpec s;
  s.height = 64;
  s.width = 64;
  s.bands = 32;
  s.num_classes = 8;
  s.layout = 4;
  s.seed = 7;
  s.noise_sigma = noise_sigma_for_snr(s.bands, s.num_classes, s.seed, 10.0);
  return s;
}

// Reference solution of the SVM dual
//   min 1/2 a'Qa - sum a,  0 <= a <= C,  Q_ij = y_i y_j (x_i . x_j + 1)
// by accelerated projected gradient, run until the duality gap is negligible.
struct DualReference {
  std::vector<double> alpha;
  double dual = 0.0;    // minimized dual objective (negated Lagrangian value)
  double primal = 0.0;  // primal objective at the recovered (w, b)
  std::size_t iterations = 0;
};

inline DualReference solve_dual_reference(const Matrix<double>& x, const std::vector<int>& y, double C,
                                          double rel_gap = 1e-9, std::size_t max_iter = 2'000'000) {
  const std::size_t n = x.rows, d = x.cols;
  std::vector<double> Q(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 1.0;
      for (std::size_t k = 0; k < d; ++k) s += x(i, k) * x(j, k);
      Q[i * n + j] = y[i] * y[j] * s;
    }
  // Lipschitz constant: largest eigenvalue by power iteration, padded.
  std::vector<double> v(n, 1.0), t(n);
  double L = 0.0;
  for (int it = 0; it < 500; ++it) {
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) t[i] += Q[i * n + j] * v[j];
      norm += t[i] * t[i];
    }
    norm = std::sqrt(norm);
    L = norm;
    for (std::size_t i = 0; i < n; ++i) v[i] = t[i] / norm;
  }
  L *= 1.01;

  auto objective = [&](const std::vector<double>& a) {
    double quad = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double qa = 0.0;
      for (std::size_t j = 0; j < n; ++j) qa += Q[i * n + j] * a[j];
      quad += a[i] * qa;
      lin += a[i];
    }
    return 0.5 * quad - lin;
  };
  auto primal_of = [&](const std::vector<double>& a) {
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) w[k] += a[i] * y[i] * x(i, k);
      b += a[i] * y[i];
    }
    return primal_objective(x, y, w, b, C);
  };

  std::vector<double> a(n, 0.0), prev(n, 0.0), z(n, 0.0), grad(n);
  double tk = 1.0;
  DualReference ref;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double g = -1.0;
      for (std::size_t j = 0; j < n; ++j) g += Q[i * n + j] * z[j];
      grad[i] = g;
    }
    prev = a;
    for (std::size_t i = 0; i < n; ++i) a[i] = std::clamp(z[i] - grad[i] / L, 0.0, C);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    for (std::size_t i = 0; i < n; ++i) z[i] = a[i] + ((tk - 1.0) / tn) * (a[i] - prev[i]);
    tk = tn;
    ref.iterations = it;
    if (it % 1000 == 0) {
      const double dual = objective(a);
      const double primal = primal_of(a);
      if (primal + dual <= rel_gap * std::max(1.0, std::abs(primal))) break;
      // Restart momentum when the iterate stalls.
      tk = 1.0;
      z = a;
    }
  }
  ref.alpha = a;
  ref.dual = objective(a);
  ref.primal = primal_of(a);
  return ref;
}

}  // namespace fst3d::testing
