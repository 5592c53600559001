#pragma once

// One-vs-rest linear SVMs (L2-regularized, hinge loss) trained by dual
// coordinate descent, optionally on standardized features, plus the dataset
// builders for scattering features and raw spectra.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fst3d/binary_io.hpp"
#include "fst3d/error.hpp"
#include "fst3d/hsi_io.hpp"
#include "fst3d/parallel.hpp"
#include "fst3d/rng.hpp"
#include "fst3d/scatter.hpp"

namespace fst3d {

template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const T> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  T operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct Dataset {
  Matrix<float> samples;               // N x D
  std::vector<std::uint16_t> targets;  // class ids 1..K (0 when unlabeled)
  std::vector<Pixel> pixels;           // provenance of each row
  std::size_t num_classes = 0;
};

// ---------------------------------------------------------------------------
// Dataset builders

inline void check_pixels(std::span<const Pixel> pixels, std::size_t height, std::size_t width) {
  for (const auto& p : pixels)
    if (p.row >= height || p.col >= width)
      throw data_error("pixel (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                       ") lies outside the " + std::to_string(height) + "x" +
                       std::to_string(width) + " image");
}

inline void attach_targets(Dataset& ds, const LabelMap* labels) {
  ds.targets.assign(ds.pixels.size(), 0);
  if (!labels) return;
  ds.num_classes = labels->num_classes;
  for (std::size_t i = 0; i < ds.pixels.size(); ++i) ds.targets[i] = labels->at(ds.pixels[i]);
}

/// Raw spectrum of each pixel as its feature vector.
inline Dataset raw_features(const HsiCube& cube, std::span<const Pixel> pixels,
                            const LabelMap* labels = nullptr) {
  check_pixels(pixels, cube.height(), cube.width());
  Dataset ds;
  ds.pixels.assign(pixels.begin(), pixels.end());
  ds.samples = Matrix<float>(pixels.size(), cube.bands());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    for (std::size_t b = 0; b < cube.bands(); ++b)
      ds.samples(i, b) = cube.at(pixels[i].row, pixels[i].col, b);
  attach_targets(ds, labels);
  return ds;
}

inline Dataset feature_dataset(const FeatureCube& fc, std::span<const Pixel> pixels,
                               const LabelMap* labels = nullptr) {
  check_pixels(pixels, fc.height, fc.width);
  Dataset ds;
  ds.pixels.assign(pixels.begin(), pixels.end());
  ds.samples = Matrix<float>(pixels.size(), fc.dim);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto src = fc.pixel(pixels[i].row, pixels[i].col);
    std::copy(src.begin(), src.end(), ds.samples.row(i).begin());
  }
  attach_targets(ds, labels);
  return ds;
}

// ---------------------------------------------------------------------------
// Standardization

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // > 0; 1 for constant features
};

template <typename T>
Standardizer standardize_fit(const Matrix<T>& x) {
  if (x.rows == 0) throw usage_error("standardize_fit: no samples");
  Standardizer s;
  s.mean.assign(x.cols, 0.0);
  s.scale.assign(x.cols, 1.0);
  const double n = static_cast<double>(x.rows);
  for (std::size_t j = 0; j < x.cols; ++j) {
    const double first = x(0, j);
    bool constant = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double v = x(i, j);
      constant = constant && v == first;
      sum += v;
    }
    if (constant) {
      s.mean[j] = first;
      continue;
    }
    const double mu = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double d = static_cast<double>(x(i, j)) - mu;
      ss += d * d;
    }
    s.mean[j] = mu;
    const double sd = std::sqrt(ss / n);
    s.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

template <typename T>
Matrix<double> standardize_apply(const Matrix<T>& x, const Standardizer& s) {
  if (x.cols != s.mean.size()) throw usage_error("standardize_apply: width mismatch");
  Matrix<double> out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j)
      out(i, j) = (static_cast<double>(x(i, j)) - s.mean[j]) / s.scale[j];
  return out;
}

// ---------------------------------------------------------------------------
// Binary SVM by dual coordinate descent
//
//   min_w  1/2 |w~|^2 + C sum_i max(0, 1 - y_i w~ . x~_i),  x~ = [x, 1]
//   dual:  min_a 1/2 a'Qa - sum a,  0 <= a_i <= C,  Q_ij = y_i y_j x~_i . x~_j

struct BinarySvm {
  std::vector<double> w;
  double bias = 0.0;
  std::vector<double> alpha;
  std::size_t epochs = 0;
  double max_violation = 0.0;
  bool converged = false;
};

inline BinarySvm train_binary_dcd(const Matrix<double>& x, std::span<const int> y, double C,
                                  double tol, std::size_t max_iter, std::uint64_t seed) {
  const std::size_t n = x.rows, d = x.cols;
  BinarySvm m;
  m.w.assign(d, 0.0);
  m.alpha.assign(n, 0.0);
  std::vector<double> qdiag(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (double v : x.row(i)) s += v * v;
    qdiag[i] = s;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Xoshiro256 rng(seed);

  for (m.epochs = 0; m.epochs < max_iter;) {
    shuffle(order, rng);
    double worst = 0.0;
    for (std::size_t i : order) {
      const auto xi = x.row(i);
      double dot = m.bias;
      for (std::size_t j = 0; j < d; ++j) dot += m.w[j] * xi[j];
      const double g = y[i] * dot - 1.0;
      double pg = g;
      if (m.alpha[i] <= 0.0)
        pg = std::min(g, 0.0);
      else if (m.alpha[i] >= C)
        pg = std::max(g, 0.0);
      worst = std::max(worst, std::abs(pg));
      if (pg == 0.0) continue;
      const double old = m.alpha[i];
      const double next = std::clamp(old - g / qdiag[i], 0.0, C);
      const double delta = (next - old) * y[i];
      if (delta == 0.0) continue;
      m.alpha[i] = next;
      for (std::size_t j = 0; j < d; ++j) m.w[j] += delta * xi[j];
      m.bias += delta;
    }
    ++m.epochs;
    m.max_violation = worst;
    if (worst < tol) {
      m.converged = true;
      break;
    }
  }
  return m;
}

inline double primal_objective(const Matrix<double>& x, std::span<const int> y,
                               std::span<const double> w, double bias, double C) {
  double reg = bias * bias;
  for (double v : w) reg += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double dot = bias;
    const auto xi = x.row(i);
    for (std::size_t j = 0; j < x.cols; ++j) dot += w[j] * xi[j];
    loss += std::max(0.0, 1.0 - y[i] * dot);
  }
  return 0.5 * reg + C * loss;
}

// ---------------------------------------------------------------------------
// Multiclass model

struct SvmOptions {
  double C = 1000.0;
  double tol = 1e-4;
  std::size_t max_iter = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // Per-feature standardization. Off by default: it lifts the many
  // near-constant scattering channels to unit variance, and the SVM then fits
  // their noise. Without it the standardizer is the identity.
  bool standardize = false;
};

struct SvmModel {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  Standardizer standardizer;                 // identity unless trained with standardize
  bool standardized = false;
  std::vector<std::vector<double>> weights;  // per class, in standardizer coordinates
  std::vector<double> biases;
  double C = 1000.0;
  double tol = 1e-4;
  std::size_t max_iter = 1000;
  std::uint64_t seed = 0;
  std::vector<bool> converged;
  std::vector<std::size_t> epochs;
  std::string feature_kind;  // free-form provenance tag ("scattering", "gabor", "raw")
  // Dual variables of the last training run; not serialized.
  std::vector<std::vector<double>> alphas;

  bool all_converged() const {
    return std::all_of(converged.begin(), converged.end(), [](bool b) { return b; });
  }
};

inline SvmModel svm_train(const Dataset& data, const SvmOptions& opt = {}) {
  const std::size_t n = data.samples.rows;
  const std::size_t K = data.num_classes;
  if (!(opt.C > 0.0)) throw usage_error("svm_train: C must be positive");
  if (K < 2) throw data_error("svm_train: need at least 2 classes");
  if (n < K) throw data_error("svm_train: fewer samples than classes");
  if (data.targets.size() != n) throw data_error("svm_train: target count does not match samples");
  for (auto t : data.targets)
    if (t < 1 || t > K) throw data_error("svm_train: target outside 1..K");
  for (float v : data.samples.data)
    if (!std::isfinite(v)) throw data_error("svm_train: non-finite feature value");

  SvmModel model;
  model.dim = data.samples.cols;
  model.num_classes = K;
  model.C = opt.C;
  model.tol = opt.tol;
  model.max_iter = opt.max_iter;
  model.seed = opt.seed;
  model.standardized = opt.standardize;
  if (opt.standardize) {
    model.standardizer = standardize_fit(data.samples);
  } else {
    model.standardizer.mean.assign(model.dim, 0.0);
    model.standardizer.scale.assign(model.dim, 1.0);
  }
  const Matrix<double> z = standardize_apply(data.samples, model.standardizer);

  model.weights.assign(K, {});
  model.biases.assign(K, 0.0);
  model.converged.assign(K, false);
  model.epochs.assign(K, 0);
  model.alphas.assign(K, {});
  std::vector<BinarySvm> fits(K);
  parallel_for(K, opt.threads, [&](std::size_t k) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = data.targets[i] == k + 1 ? 1 : -1;
    fits[k] = train_binary_dcd(z, y, opt.C, opt.tol, opt.max_iter, derive_seed(opt.seed, k + 1));
  });
  for (std::size_t k = 0; k < K; ++k) {
    model.weights[k] = std::move(fits[k].w);
    model.biases[k] = fits[k].bias;
    model.converged[k] = fits[k].converged;
    model.epochs[k] = fits[k].epochs;
    model.alphas[k] = std::move(fits[k].alpha);
    bool finite = std::isfinite(model.biases[k]);
    for (double w : model.weights[k]) finite = finite && std::isfinite(w);
    if (!finite) throw numeric_error("svm_train: non-finite weights for class " + std::to_string(k + 1));
  }
  return model;
}

/// Decision values w_k . z + b_k of one sample.
inline std::vector<double> decision_values(const SvmModel& model, std::span<const float> x) {
  if (x.size() != model.dim)
    throw data_error("svm_predict: sample width " + std::to_string(x.size()) +
                     " does not match model width " + std::to_string(model.dim));
  std::vector<double> scores(model.num_classes);
  for (std::size_t k = 0; k < model.num_classes; ++k) {
    const auto& w = model.weights[k];
    double s = model.biases[k];
    for (std::size_t j = 0; j < x.size(); ++j)
      s += w[j] * ((static_cast<double>(x[j]) - model.standardizer.mean[j]) / model.standardizer.scale[j]);
    scores[k] = s;
  }
  return scores;
}

/// Arg-max class (1-based); ties go to the smallest id.
inline std::uint16_t predict_one(const SvmModel& model, std::span<const float> x) {
  const auto scores = decision_values(model, x);
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return static_cast<std::uint16_t>(best + 1);
}

inline std::vector<std::uint16_t> svm_predict(const SvmModel& model, const Matrix<float>& samples,
                                              unsigned threads = 1) {
  if (samples.cols != model.dim)
    throw data_error("svm_predict: sample width " + std::to_string(samples.cols) +
                     " does not match model width " + std::to_string(model.dim));
  std::vector<std::uint16_t> out(samples.rows);
  constexpr std::size_t chunk = 256;
  parallel_for(ceil_div(samples.rows, chunk), threads, [&](std::size_t c) {
    const std::size_t end = std::min(samples.rows, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) out[i] = predict_one(model, samples.row(i));
  });
  return out;
}

/// Predicted label map for every pixel of a feature cube.
inline LabelMap predict_map(const SvmModel& model, const FeatureCube& fc, unsigned threads = 1) {
  if (fc.dim != model.dim)
    throw data_error("predict: feature width " + std::to_string(fc.dim) +
                     " does not match model width " + std::to_string(model.dim));
  LabelMap out(fc.height, fc.width);
  parallel_for(fc.height, threads, [&](std::size_t r) {
    for (std::size_t c = 0; c < fc.width; ++c) out.at(r, c) = predict_one(model, fc.pixel(r, c));
  });
  out.num_classes = model.num_classes;
  return out;
}

inline LabelMap predict_map(const SvmModel& model, const HsiCube& cube, unsigned threads = 1) {
  if (cube.bands() != model.dim)
    throw data_error("predict: band count " + std::to_string(cube.bands()) +
                     " does not match model width " + std::to_string(model.dim));
  LabelMap out(cube.height(), cube.width());
  parallel_for(cube.height(), threads, [&](std::size_t r) {
    std::vector<float> x(cube.bands());
    for (std::size_t c = 0; c < cube.width(); ++c) {
      for (std::size_t b = 0; b < cube.bands(); ++b) x[b] = cube.at(r, c, b);
      out.at(r, c) = predict_one(model, x);
    }
  });
  out.num_classes = model.num_classes;
  return out;
}

// ---------------------------------------------------------------------------
// Model files

inline json model_to_json(const SvmModel& m) {
  return json{{"dim", m.dim},
              {"num_classes", m.num_classes},
              {"C", m.C},
              {"tol", m.tol},
              {"max_iter", m.max_iter},
              {"seed", m.seed},
              {"feature_kind", m.feature_kind},
              {"standardized", m.standardized},
              {"mean", m.standardizer.mean},
              {"scale", m.standardizer.scale},
              {"weights", m.weights},
              {"biases", m.biases},
              {"converged", m.converged},
              {"epochs", m.epochs}};
}

inline SvmModel model_from_json(const json& j, const std::string& where = "model") {
  SvmModel m;
  try {
    m.dim = j.at("dim").get<std::size_t>();
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.C = j.at("C").get<double>();
    m.tol = j.value("tol", 1e-4);
    m.max_iter = j.value("max_iter", std::size_t{1000});
    m.seed = j.value("seed", std::uint64_t{0});
    m.feature_kind = j.value("feature_kind", std::string());
    m.standardized = j.value("standardized", false);
    m.standardizer.mean = j.at("mean").get<std::vector<double>>();
    m.standardizer.scale = j.at("scale").get<std::vector<double>>();
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.biases = j.at("biases").get<std::vector<double>>();
    m.converged = j.value("converged", std::vector<bool>(m.num_classes, true));
    m.epochs = j.value("epochs", std::vector<std::size_t>(m.num_classes, 0));
  } catch (const json::exception& e) {
    throw data_error(where + ": " + e.what());
  }
  bool ok = m.standardizer.mean.size() == m.dim && m.standardizer.scale.size() == m.dim &&
            m.weights.size() == m.num_classes && m.biases.size() == m.num_classes;
  for (const auto& w : m.weights) ok = ok && w.size() == m.dim;
  if (!ok) throw data_error(where + ": inconsistent model dimensions");
  return m;
}

inline void save_model(const SvmModel& m, const std::filesystem::path& path) {
  write_json(path, model_to_json(m));
}

inline SvmModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json(path), path.string());
}

}  // namespace fst3d
