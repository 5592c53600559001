// fst3d: command-line front end for feature extraction, sampling, training,
// prediction, evaluation and grid search on hyperspectral cubes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fst3d/fst3d.hpp"

namespace fs = std::filesystem;
using namespace fst3d;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// One manifest per run. Inputs are recorded with their content hashes.
struct Manifest {
  json j;
  fs::path path;

  Manifest(const std::string& sub, int argc, char** argv) {
    j["subcommand"] = sub;
    j["argv"] = std::vector<std::string>(argv, argv + argc);
    j["version"] = kVersion;
    j["inputs"] = json::object();
    j["outputs"] = json::array();
    j["timings_s"] = json::object();
  }

  void input(const std::string& name, const fs::path& p) {
    json e = {{"path", p.string()}, {"hash", hash_file(p)}};
    const auto bin = companion_bin(p);
    if (p.extension() == ".json" && fs::exists(bin)) e["data_hash"] = hash_file(bin);
    j["inputs"][name] = e;
  }
  void output(const fs::path& p) { j["outputs"].push_back(p.string()); }
  void timing(const std::string& name, double s) { j["timings_s"][name] = s; }

  void write() const {
    if (path.empty()) {
      std::cerr << j.dump(2) << '\n';
      return;
    }
    write_json(path, j);
  }
};

// "<dir>/manifest.json" for directory outputs, "<stem>.manifest.json" beside a file.
fs::path manifest_for(const fs::path& out, bool directory) {
  if (directory) return out / "manifest.json";
  fs::path p = out;
  return p.replace_extension(".manifest.json");
}

ScatterConfig load_config(const fs::path& p) {
  const json j = read_json(p);
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw data_error(p.string() + ": " + e.what());
  }
}

SampleSize sample_size(std::size_t per_class, double fraction) {
  const SampleSize s = per_class > 0 ? SampleSize::count(per_class) : SampleSize::of(fraction);
  s.validate();
  return s;
}

void check_same_size(const LabelMap& labels, std::size_t h, std::size_t w, const std::string& what) {
  if (labels.height != h || labels.width != w)
    throw data_error(what + " is " + std::to_string(h) + "x" + std::to_string(w) + " but labels are " +
                     std::to_string(labels.height) + "x" + std::to_string(labels.width));
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

int fail(ErrorKind kind, const std::string& msg) {
  std::cerr << "error: " << msg << '\n';
  return static_cast<int>(kind) + 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D Fourier scattering transform for hyperspectral cubes"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  std::string manifest_path;
  unsigned threads_flag = 0;
  app.add_option("--manifest", manifest_path, "Manifest path (default: derived from --out)");
  app.add_option("--threads", threads_flag, "Worker threads (default: FST3D_THREADS, then all cores)")
      ->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic block scene");
  std::string synth_spec, synth_out;
  SynthSpec ss;
  std::optional<double> snr_db;
  synth->add_option("--spec", synth_spec, "JSON spec (keys as the flags, with underscores)");
  synth->add_option("--height", ss.height);
  synth->add_option("--width", ss.width);
  synth->add_option("--bands", ss.bands);
  synth->add_option("--classes", ss.num_classes);
  synth->add_option("--layout", ss.layout, "Blocks per side");
  synth->add_option("--seed", ss.seed);
  auto* sigma_opt = synth->add_option("--noise-sigma", ss.noise_sigma);
  synth->add_option("--snr-db", snr_db)->excludes(sigma_opt);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // extract
  auto* extract = app.add_subcommand("extract", "Compute scattering features");
  std::string ex_cube, ex_config, ex_out;
  bool gabor_only = false;
  std::size_t ex_patch = 51;
  extract->add_option("--cube", ex_cube)->required();
  extract->add_option("--config", ex_config)->required();
  extract->add_option("--out", ex_out, "Feature header (.json)")->required();
  extract->add_flag("--gabor-only", gabor_only, "First-order U_m volumes only");
  extract->add_option("--patch", ex_patch, "Tile side in pixels")->capture_default_str()->check(CLI::PositiveNumber);

  // sample
  auto* sample = app.add_subcommand("sample", "Draw a training mask");
  std::string sa_labels, sa_strategy, sa_out;
  std::size_t sa_per_class = 0;
  double sa_fraction = 0.0;
  std::uint64_t sa_seed = 0;
  sample->add_option("--labels", sa_labels)->required();
  sample->add_option("--strategy", sa_strategy)->required()->check(CLI::IsMember({"random", "sss"}));
  auto* pc = sample->add_option("--per-class", sa_per_class)->check(CLI::PositiveNumber);
  sample->add_option("--fraction", sa_fraction)->excludes(pc);
  sample->add_option("--seed", sa_seed)->required();
  sample->add_option("--out", sa_out)->required();

  // train
  auto* train = app.add_subcommand("train", "Train a one-vs-rest linear SVM");
  std::string tr_features, tr_raw, tr_labels, tr_mask, tr_out;
  SvmOptions svm;
  train->add_option("--features", tr_features);
  train->add_option("--cube-raw", tr_raw, "Train on raw spectra")->excludes("--features");
  train->add_option("--labels", tr_labels)->required();
  train->add_option("--mask", tr_mask)->required();
  train->add_option("--C", svm.C)->capture_default_str();
  train->add_option("--tol", svm.tol)->capture_default_str();
  train->add_option("--max-iter", svm.max_iter, "Epoch budget per class")->capture_default_str();
  train->add_option("--seed", svm.seed)->required();
  train->add_flag("--standardize", svm.standardize, "Per-feature standardization");
  train->add_option("--out", tr_out, "Model file")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "Classify every pixel");
  std::string pr_model, pr_features, pr_raw, pr_cube, pr_config, pr_out;
  std::size_t pr_patch = 51;
  predict->add_option("--model", pr_model)->required();
  predict->add_option("--features", pr_features);
  predict->add_option("--cube-raw", pr_raw);
  predict->add_option("--cube", pr_cube, "Extract features on the fly (needs --config)");
  predict->add_option("--config", pr_config);
  predict->add_option("--patch", pr_patch)->capture_default_str()->check(CLI::PositiveNumber);
  predict->add_option("--out", pr_out, "Predicted label map header")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions on non-training pixels");
  std::string ev_pred, ev_labels, ev_mask, ev_out;
  eval->add_option("--pred", ev_pred)->required();
  eval->add_option("--labels", ev_labels)->required();
  eval->add_option("--mask", ev_mask)->required();
  eval->add_option("--out", ev_out, "Report directory")->required();

  // gridsearch
  auto* grid = app.add_subcommand("gridsearch", "Rank candidate window supports");
  std::string gs_cube, gs_labels, gs_candidates, gs_strategy, gs_out;
  GridOptions gopt;
  std::size_t gs_per_class = 0;
  double gs_fraction = 0.0;
  grid->add_option("--cube", gs_cube)->required();
  grid->add_option("--labels", gs_labels)->required();
  grid->add_option("--candidates", gs_candidates)->required();
  grid->add_option("--trials", gopt.trials)->capture_default_str()->check(CLI::PositiveNumber);
  grid->add_option("--strategy", gs_strategy)->required()->check(CLI::IsMember({"random", "sss"}));
  auto* gpc = grid->add_option("--per-class", gs_per_class)->check(CLI::PositiveNumber);
  grid->add_option("--fraction", gs_fraction)->excludes(gpc);
  grid->add_option("--seed", gopt.seed)->required();
  grid->add_option("--C", gopt.C)->capture_default_str();
  grid->add_option("--patch", gopt.patch)->capture_default_str()->check(CLI::PositiveNumber);
  grid->add_option("--out", gs_out, "CSV file")->required();

  // knn-check
  auto* knn = app.add_subcommand("knn-check", "1-NN label interpolation from a mask");
  std::string kn_labels, kn_mask;
  knn->add_option("--labels", kn_labels)->required();
  knn->add_option("--mask", kn_mask)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  Manifest mf(sub, argc, argv);
  const unsigned threads = resolve_threads(threads_flag);
  Stopwatch total;

  try {
    if (sub == "synth") {
      if (!synth_spec.empty()) {
        mf.input("spec", synth_spec);
        const json j = read_json(synth_spec);
        try {
          ss.height = j.value("height", ss.height);
          ss.width = j.value("width", ss.width);
          ss.bands = j.value("bands", ss.bands);
          ss.num_classes = j.value("classes", ss.num_classes);
          ss.layout = j.value("layout", ss.layout);
          ss.seed = j.value("seed", ss.seed);
          ss.noise_sigma = j.value("noise_sigma", ss.noise_sigma);
          if (j.contains("snr_db")) snr_db = j["snr_db"].get<double>();
        } catch (const json::exception& e) {
          throw data_error(synth_spec + ": " + e.what());
        }
      }
      if (snr_db) ss.noise_sigma = noise_sigma_for_snr(ss.bands, ss.num_classes, ss.seed, *snr_db);
      const auto [cube, labels] = generate_synthetic(ss);
      const fs::path out(synth_out);
      fs::create_directories(out);
      save_cube(cube, out / "cube.json");
      save_labels(labels, out / "labels.json");
      mf.j["spec"] = {{"height", ss.height}, {"width", ss.width},   {"bands", ss.bands},
                      {"classes", ss.num_classes}, {"layout", ss.layout}, {"seed", ss.seed},
                      {"noise_sigma", ss.noise_sigma}};
      if (snr_db) mf.j["spec"]["snr_db"] = *snr_db;
      mf.j["seed"] = ss.seed;
      mf.output(out / "cube.json");
      mf.output(out / "labels.json");
      mf.path = manifest_for(out, true);
    } else if (sub == "extract") {
      mf.input("cube", ex_cube);
      mf.input("config", ex_config);
      const HsiCube cube = load_cube(ex_cube);
      const ScatterConfig cfg = load_config(ex_config);
      Stopwatch sw;
      const FeatureCube fc = scatter_patched(cube, cfg, ex_patch, threads,
                                             gabor_only ? FeatureKind::gabor : FeatureKind::scattering);
      const double secs = sw.seconds();
      check_finite(fc);
      save_features(fc, ex_out);
      const double pixels = static_cast<double>(cube.height() * cube.width());
      mf.j["config"] = config_to_json(cfg);
      mf.j["config_hash"] = config_hash(cfg);
      mf.j["kind"] = gabor_only ? "gabor" : "scattering";
      mf.j["patch"] = ex_patch;
      mf.j["threads"] = threads;
      mf.j["dim"] = fc.dim;
      mf.j["pixels_per_second"] = secs > 0.0 ? pixels / secs : 0.0;
      mf.timing("extract", secs);
      mf.output(ex_out);
      mf.output(companion_bin(ex_out));
      mf.path = manifest_for(ex_out, false);
      std::cout << "D " << fc.dim << ", " << pixels / std::max(secs, 1e-9) << " pixels/s\n";
    } else if (sub == "sample") {
      mf.input("labels", sa_labels);
      std::vector<std::string> warnings;
      const LabelMap labels = load_labels(sa_labels, &warnings);
      for (const auto& w : warnings) warn(w);
      const auto strategy = parse_strategy(sa_strategy);
      const TrainMask mask = draw_mask(labels, strategy, sample_size(sa_per_class, sa_fraction), sa_seed);
      save_mask(mask, sa_out);
      mf.j["strategy"] = sa_strategy;
      if (sa_per_class > 0) mf.j["per_class"] = sa_per_class;
      else mf.j["fraction"] = sa_fraction;
      mf.j["seed"] = sa_seed;
      mf.j["selected"] = mask.selected.size();
      mf.output(sa_out);
      mf.path = manifest_for(sa_out, false);
    } else if (sub == "train") {
      if (tr_features.empty() == tr_raw.empty()) throw usage_error("train: give exactly one of --features, --cube-raw");
      mf.input("labels", tr_labels);
      mf.input("mask", tr_mask);
      const LabelMap labels = load_labels(tr_labels);
      const TrainMask mask = load_mask(tr_mask);
      validate_mask(mask, labels);
      Dataset ds;
      std::string kind = "raw";
      if (!tr_raw.empty()) {
        mf.input("cube", tr_raw);
        const HsiCube cube = load_cube(tr_raw);
        check_same_size(labels, cube.height(), cube.width(), "cube");
        ds = raw_features(cube, mask.selected, &labels);
      } else {
        mf.input("features", tr_features);
        const FeatureCube fc = load_features(tr_features);
        check_same_size(labels, fc.height, fc.width, "feature cube");
        ds = feature_dataset(fc, mask.selected, &labels);
        kind = fc.kind == FeatureKind::gabor ? "gabor" : "scattering";
      }
      svm.threads = threads;
      Stopwatch sw;
      SvmModel model = svm_train(ds, svm);
      mf.timing("train", sw.seconds());
      model.feature_kind = kind;
      if (!model.all_converged())
        warn("SVM stopped at the epoch budget before reaching tol for some classes; raise --max-iter");
      save_model(model, tr_out);
      mf.j["seed"] = svm.seed;
      mf.j["svm"] = {{"C", svm.C}, {"tol", svm.tol}, {"max_iter", svm.max_iter}, {"standardize", svm.standardize}};
      mf.j["feature_kind"] = kind;
      mf.j["converged"] = model.converged;
      mf.output(tr_out);
      mf.path = manifest_for(tr_out, false);
    } else if (sub == "predict") {
      const int sources = !pr_features.empty() + !pr_raw.empty() + !pr_cube.empty();
      if (sources != 1) throw usage_error("predict: give exactly one of --features, --cube-raw, --cube");
      if (!pr_cube.empty() && pr_config.empty()) throw usage_error("predict: --cube needs --config");
      mf.input("model", pr_model);
      const SvmModel model = load_model(pr_model);
      LabelMap pred;
      Stopwatch sw;
      if (!pr_raw.empty()) {
        mf.input("cube", pr_raw);
        if (model.feature_kind != "raw") throw data_error("predict: model was trained on " + model.feature_kind + " features, not raw spectra");
        pred = predict_map(model, load_cube(pr_raw), threads);
      } else if (!pr_features.empty()) {
        mf.input("features", pr_features);
        const FeatureCube fc = load_features(pr_features);
        if (model.feature_kind == "raw") throw data_error("predict: model was trained on raw spectra");
        pred = predict_map(model, fc, threads);
      } else {
        mf.input("cube", pr_cube);
        mf.input("config", pr_config);
        const HsiCube cube = load_cube(pr_cube);
        const ScatterConfig cfg = load_config(pr_config);
        const auto kind = model.feature_kind == "gabor" ? FeatureKind::gabor : FeatureKind::scattering;
        if (model.feature_kind == "raw") throw data_error("predict: model was trained on raw spectra");
        pred = LabelMap(cube.height(), cube.width());
        pred.num_classes = model.num_classes;
        scatter_tiled(cube, cfg, pr_patch, threads, kind, [&](const Tile& t, const std::vector<float>& local) {
          const std::size_t dim = local.size() / (t.rows * t.cols);
          if (dim != model.dim) throw data_error("predict: feature width " + std::to_string(dim) + " does not match model width " + std::to_string(model.dim));
          for (std::size_t r = 0; r < t.rows; ++r)
            for (std::size_t c = 0; c < t.cols; ++c) {
              const std::span<const float> x(local.data() + (r * t.cols + c) * dim, dim);
              for (float v : x)
                if (!std::isfinite(v)) throw numeric_error("predict: non-finite feature");
              pred.at(t.row + r, t.col + c) = predict_one(model, x);
            }
        });
        mf.j["config"] = config_to_json(cfg);
        mf.j["patch"] = pr_patch;
      }
      mf.timing("predict", sw.seconds());
      mf.j["threads"] = threads;
      save_labels(pred, pr_out);
      mf.output(pr_out);
      mf.output(companion_bin(pr_out));
      mf.path = manifest_for(pr_out, false);
    } else if (sub == "eval") {
      mf.input("pred", ev_pred);
      mf.input("labels", ev_labels);
      mf.input("mask", ev_mask);
      const LabelMap truth = load_labels(ev_labels);
      const LabelMap pred = load_label_ids(ev_pred);
      const TrainMask mask = load_mask(ev_mask);
      validate_mask(mask, truth);
      const EvalReport rep = evaluate(truth, pred, mask);
      const fs::path out(ev_out);
      fs::create_directories(out);
      write_json(out / "report.json", report_to_json(rep));
      const std::string csv = confusion_csv(rep);
      write_file_bytes(out / "confusion.csv", csv.data(), csv.size());
      const auto png = render_map(pred);
      write_file_bytes(out / "map.png", png.data(), png.size());
      for (const char* f : {"report.json", "confusion.csv", "map.png"}) mf.output(out / f);
      mf.j["overall_accuracy"] = rep.overall_accuracy;
      mf.path = manifest_for(out, true);
      char line[64];
      std::snprintf(line, sizeof line, "OA %.17g\n", rep.overall_accuracy);
      std::cout << line << "AA " << rep.average_accuracy << "\nkappa " << rep.kappa << '\n';
    } else if (sub == "gridsearch") {
      mf.input("cube", gs_cube);
      mf.input("labels", gs_labels);
      mf.input("candidates", gs_candidates);
      const HsiCube cube = load_cube(gs_cube);
      const LabelMap labels = load_labels(gs_labels);
      const auto candidates = parse_candidates(read_json(gs_candidates));
      gopt.strategy = parse_strategy(gs_strategy);
      gopt.size = sample_size(gs_per_class, gs_fraction);
      gopt.threads = threads;
      Stopwatch sw;
      const GridResult g = gridsearch(cube, labels, candidates, gopt);
      mf.timing("gridsearch", sw.seconds());
      const std::string csv = grid_csv(g);
      write_file_bytes(gs_out, csv.data(), csv.size());
      std::size_t failed = 0;
      for (const auto& pt : g.points) {
        if (!pt.failed) continue;
        ++failed;
        warn("candidate " + config_to_json(pt.config).dump() + " failed: " + pt.error);
      }
      mf.j["seed"] = gopt.seed;
      mf.j["trials"] = gopt.trials;
      mf.j["strategy"] = gs_strategy;
      mf.j["C"] = gopt.C;
      mf.j["candidates"] = candidates.size();
      mf.j["failed"] = failed;
      if (!g.points.empty() && g.points.front().best) {
        mf.j["best"] = config_to_json(g.points.front().config);
        std::cout << "best mean OA " << g.points.front().mean_oa << '\n';
      }
      mf.output(gs_out);
      mf.path = manifest_for(gs_out, false);
      if (failed == g.points.size()) throw data_error("gridsearch: every candidate failed");
    } else if (sub == "knn-check") {
      mf.input("labels", kn_labels);
      mf.input("mask", kn_mask);
      const LabelMap labels = load_labels(kn_labels);
      const TrainMask mask = load_mask(kn_mask);
      validate_mask(mask, labels);
      const double f = knn1_diagnostic(labels, mask);
      mf.j["fraction"] = f;
      char line[32];
      std::snprintf(line, sizeof line, "%.17g\n", f);
      std::cout << line;
    }
    if (!manifest_path.empty()) mf.path = manifest_path;
    mf.timing("total", total.seconds());
    mf.j["threads"] = threads;
    mf.write();
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorKind::data, e.what());
  } catch (const json::exception& e) {
    return fail(ErrorKind::data, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ErrorKind::numeric, "out of memory");
  } catch (const std::exception& e) {
    return fail(ErrorKind::data, e.what());
  }
  return 0;
}
