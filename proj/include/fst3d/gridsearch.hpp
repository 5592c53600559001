#pragma once

// Hyperparameter search over window supports: every candidate configuration
// is run through extract -> sample -> train -> evaluate for a number of
// independently seeded trials.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fst3d/classifier.hpp"
#include "fst3d/error.hpp"
#include "fst3d/filterbank.hpp"
#include "fst3d/hsi_io.hpp"
#include "fst3d/metrics.hpp"
#include "fst3d/parallel.hpp"
#include "fst3d/sampling.hpp"
#include "fst3d/scatter.hpp"

namespace fst3d {

struct GridPoint {
  ScatterConfig config;
  ReceptiveField rf;
  std::vector<double> oa;  // one per trial
  double mean_oa = 0.0;
  double std_oa = 0.0;     // sample standard deviation, 0 for a single trial
  bool failed = false;
  std::string error;
  bool best = false;
};

struct GridResult {
  std::size_t trials = 0;
  std::vector<GridPoint> points;  // sorted by mean OA, best first; failures last
};

struct GridOptions {
  std::size_t trials = 10;
  SamplingStrategy strategy = SamplingStrategy::random;
  SampleSize size = SampleSize::count(5);
  std::uint64_t seed = 0;
  double C = 1000.0;
  std::size_t patch = 51;
  unsigned threads = 1;
};

/// Seed of trial t; shared by all grid points so they see the same masks.
inline std::uint64_t trial_seed(std::uint64_t master, std::size_t trial) {
  return derive_seed(master, 0x7472ULL + trial);
}

inline TrainMask draw_mask(const LabelMap& labels, SamplingStrategy strategy, SampleSize size,
                           std::uint64_t seed) {
  if (strategy == SamplingStrategy::random) return sample_random(labels, size, seed);
  if (size.per_class == 0) throw usage_error("sss sampling needs an absolute per-class count");
  return sample_sss(labels, size.per_class, seed);
}

/// Overall accuracy of one train/evaluate run on precomputed features.
inline double run_trial(const FeatureCube& features, const LabelMap& labels, const TrainMask& mask,
                        double C, std::uint64_t seed, unsigned threads = 1) {
  const Dataset train = feature_dataset(features, mask.selected, &labels);
  SvmOptions opt;
  opt.C = C;
  opt.seed = seed;
  opt.threads = threads;
  const SvmModel model = svm_train(train, opt);
  LabelMap predicted(labels.height, labels.width);
  predicted.num_classes = labels.num_classes;
  for (std::size_t r = 0; r < labels.height; ++r)
    for (std::size_t c = 0; c < labels.width; ++c)
      if (labels.at(r, c) != 0 && !mask.contains({r, c}))
        predicted.at(r, c) = predict_one(model, features.pixel(r, c));
  return evaluate(labels, predicted, mask).overall_accuracy;
}

inline GridResult gridsearch(const HsiCube& cube, const LabelMap& labels,
                             const std::vector<ScatterConfig>& candidates, const GridOptions& opt) {
  if (opt.trials < 1) throw usage_error("gridsearch: trials must be >= 1");
  if (candidates.empty()) throw usage_error("gridsearch: no candidate configurations");
  if (cube.height() != labels.height || cube.width() != labels.width)
    throw data_error("gridsearch: cube and label map differ in size");

  std::vector<TrainMask> masks;
  for (std::size_t t = 0; t < opt.trials; ++t)
    masks.push_back(draw_mask(labels, opt.strategy, opt.size, trial_seed(opt.seed, t)));

  GridResult result;
  result.trials = opt.trials;
  for (const auto& cfg : candidates) {
    GridPoint pt;
    pt.config = cfg;
    try {
      pt.rf = receptive_field(cfg);
      const FeatureCube features = scatter_patched(cube, cfg, opt.patch, opt.threads);
      pt.oa.assign(opt.trials, 0.0);
      parallel_for(opt.trials, opt.threads, [&](std::size_t t) {
        pt.oa[t] = run_trial(features, labels, masks[t], opt.C, trial_seed(opt.seed, t));
      });
      double sum = 0.0;
      for (double v : pt.oa) sum += v;
      pt.mean_oa = sum / static_cast<double>(pt.oa.size());
      if (pt.oa.size() > 1) {
        double ss = 0.0;
        for (double v : pt.oa) ss += (v - pt.mean_oa) * (v - pt.mean_oa);
        pt.std_oa = std::sqrt(ss / static_cast<double>(pt.oa.size() - 1));
      }
    } catch (const std::exception& e) {
      pt.failed = true;
      pt.error = e.what();
      pt.oa.clear();
    }
    result.points.push_back(std::move(pt));
  }
  std::stable_sort(result.points.begin(), result.points.end(), [](const GridPoint& a, const GridPoint& b) {
    if (a.failed != b.failed) return !a.failed;
    return a.mean_oa > b.mean_oa;
  });
  if (!result.points.empty() && !result.points.front().failed) result.points.front().best = true;
  return result;
}

inline const char* kGridCsvHeader =
    "M1,M2,M3,Mp1,Mp2,Mp3,Mpp1,Mpp2,Mpp3,P,Pp,Ppp,spatial_rf,spectral_rf,trial,oa,mean_oa,std_oa,best,status";

/// One row per trial (one row for a failed point), in the result's order.
inline std::string grid_csv(const GridResult& g) {
  std::ostringstream os;
  os << kGridCsvHeader << '\n';
  os << std::fixed << std::setprecision(10);
  for (const auto& pt : g.points) {
    std::ostringstream prefix;
    const auto& L = pt.config.layers;
    for (const auto& l : L)
      for (auto m : l.support) prefix << m << ',';
    for (const auto& l : L) prefix << l.stride << ',';
    prefix << pt.rf.spatial << ',' << pt.rf.spectral << ',';
    if (pt.failed) {
      os << prefix.str() << ",,,," << 0 << ",failed\n";
      continue;
    }
    for (std::size_t t = 0; t < pt.oa.size(); ++t)
      os << prefix.str() << t << ',' << pt.oa[t] << ',' << pt.mean_oa << ',' << pt.std_oa << ','
         << (pt.best ? 1 : 0) << ",ok\n";
  }
  return os.str();
}

/// Candidate configurations from JSON. Accepted shapes:
///   [ {config}, ... ]                       explicit configurations
///   {"configs": [ {config}, ... ]}
///   {"supports": [[M1,M2,M3], ...], "mode": "tied" | "product", ...shared keys}
/// "tied" uses each support on all three layers; "product" takes every
/// ordered triple. Shared keys ("path_rule", "conjugate_reduce") apply to all.
inline std::vector<ScatterConfig> parse_candidates(const json& j) {
  std::vector<ScatterConfig> out;
  try {
    if (j.is_array()) {
      for (const auto& c : j) out.push_back(config_from_json(c));
      return out;
    }
    if (j.contains("configs")) {
      for (const auto& c : j.at("configs")) out.push_back(config_from_json(c));
      return out;
    }
    const auto supports = j.at("supports").get<std::vector<std::vector<long long>>>();
    const std::string mode = j.value("mode", std::string("tied"));
    if (mode != "tied" && mode != "product") throw usage_error("candidates: mode must be tied or product");
    auto make = [&](const std::vector<long long>& a, const std::vector<long long>& b,
                    const std::vector<long long>& c) {
      json cfg = {{"M", a}, {"Mp", b}, {"Mpp", c}};
      for (const char* key : {"path_rule", "conjugate_reduce", "window"})
        if (j.contains(key)) cfg[key] = j[key];
      out.push_back(config_from_json(cfg));
    };
    for (const auto& a : supports) {
      if (mode == "tied") {
        make(a, a, a);
        continue;
      }
      for (const auto& b : supports)
        for (const auto& c : supports) make(a, b, c);
    }
  } catch (const json::exception& e) {
    throw usage_error(std::string("candidates: ") + e.what());
  }
  if (out.empty()) throw usage_error("candidates: no configurations listed");
  return out;
}

}  // namespace fst3d
