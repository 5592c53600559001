#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "support.hpp"

using namespace fst3d;
using fst3d::testing::ScratchDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI inside `dir`; stdout is captured, stderr discarded.
Run cli(const ScratchDir& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.path().string() + "' && '" FST3D_CLI_PATH "' " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[256];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

const char* kConfig333 = R"({"M":[3,3,3],"Mp":[3,3,3],"Mpp":[3,3,3]})";

// 16x16x8 scene with 4 classes, shared by the pipeline tests.
void small_scene(const ScratchDir& dir) {
  ASSERT_EQ(cli(dir, "synth --height 16 --width 16 --bands 8 --classes 4 --layout 2 --seed 3 --noise-sigma 0.05 --out s").code, 0);
  write_text(dir / "c.json", kConfig333);
}

}  // namespace

TEST(Cli, ExtractDimensionMatchesFormula) {
  ScratchDir dir("cli_dim");
  ASSERT_EQ(cli(dir, "synth --height 8 --width 8 --bands 9 --classes 2 --layout 2 --seed 1 --out s").code, 0);
  write_text(dir / "c.json", kConfig333);
  ASSERT_EQ(cli(dir, "extract --cube s/cube.json --config c.json --out f.json --threads 1").code, 0);
  const auto fc = load_features(dir / "f.json");
  EXPECT_EQ(fc.dim, 9u + 13u * 9u + 156u * 9u);
  EXPECT_EQ(fc.height, 8u);
  const json m = read_json(dir / "f.manifest.json");
  EXPECT_EQ(m.at("subcommand"), "extract");
  EXPECT_EQ(m.at("dim").get<std::size_t>(), fc.dim);
  EXPECT_GT(m.at("pixels_per_second").get<double>(), 0.0);
  EXPECT_EQ(m.at("inputs").at("cube").at("hash").get<std::string>(), hash_file(dir / "s/cube.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "s/manifest.json"));
}

TEST(Cli, GaborOnlyEqualsFirstOrderBlocks) {
  ScratchDir dir("cli_gabor");
  small_scene(dir);
  ASSERT_EQ(cli(dir, "extract --cube s/cube.json --config c.json --out g.json --gabor-only").code, 0);
  const auto g = load_features(dir / "g.json");
  const auto cube = load_cube(dir / "s/cube.json");
  const auto expected = fst3d::testing::observe_first_layer(cube, g.config);
  ASSERT_EQ(g.blocks.size(), expected.size());
  for (const auto& [p, u] : expected) {
    const auto got = fst3d::testing::block_volume(g, g.blocks[p]);
    EXPECT_LE(fst3d::testing::max_abs_diff(got.data, u.data), 1e-6) << "block " << p;
  }
}

TEST(Cli, PatchSizeDoesNotChangeFeatures) {
  ScratchDir dir("cli_patch");
  small_scene(dir);
  ASSERT_EQ(cli(dir, "extract --cube s/cube.json --config c.json --out a.json --patch 10000").code, 0);
  ASSERT_EQ(cli(dir, "extract --cube s/cube.json --config c.json --out b.json --patch 5").code, 0);
  EXPECT_LE(fst3d::testing::max_abs_diff(load_features(dir / "a.json").data, load_features(dir / "b.json").data), 1e-6);
}

TEST(Cli, EndToEndPipeline) {
  ScratchDir dir("cli_e2e");
  small_scene(dir);
  ASSERT_EQ(cli(dir, "extract --cube s/cube.json --config c.json --out f.json").code, 0);
  ASSERT_EQ(cli(dir, "sample --labels s/labels.json --strategy random --per-class 5 --seed 4 --out m.json").code, 0);
  EXPECT_EQ(load_mask(dir / "m.json").selected.size(), 20u);
  ASSERT_EQ(cli(dir, "train --features f.json --labels s/labels.json --mask m.json --seed 4 --out model.json").code, 0);
  ASSERT_EQ(cli(dir, "predict --model model.json --features f.json --out p.json").code, 0);
  const auto run = cli(dir, "eval --pred p.json --labels s/labels.json --mask m.json --out ev");
  ASSERT_EQ(run.code, 0);
  ASSERT_EQ(run.out.rfind("OA ", 0), 0u) << run.out;
  const double printed = std::strtod(run.out.c_str() + 3, nullptr);
  const json rep = read_json(dir / "ev/report.json");
  EXPECT_EQ(printed, rep.at("overall_accuracy").get<double>());
  EXPECT_GT(printed, 0.5);
  EXPECT_TRUE(std::filesystem::exists(dir / "ev/confusion.csv"));
  const auto png = slurp(dir / "ev/map.png");
  EXPECT_EQ(png.substr(1, 3), "PNG");
  for (const char* m : {"f.manifest.json", "m.manifest.json", "model.manifest.json", "p.manifest.json", "ev/manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / m)) << m;

  // On-the-fly extraction gives the same map as the feature file.
  ASSERT_EQ(cli(dir, "predict --model model.json --cube s/cube.json --config c.json --patch 7 --out q.json").code, 0);
  EXPECT_EQ(slurp(dir / "p.bin"), slurp(dir / "q.bin"));

  // Same seeds, byte-identical artifacts.
  ASSERT_EQ(cli(dir, "sample --labels s/labels.json --strategy random --per-class 5 --seed 4 --out m2.json").code, 0);
  ASSERT_EQ(cli(dir, "train --features f.json --labels s/labels.json --mask m2.json --seed 4 --out model2.json").code, 0);
  ASSERT_EQ(cli(dir, "predict --model model2.json --features f.json --out p2.json").code, 0);
  ASSERT_EQ(cli(dir, "eval --pred p2.json --labels s/labels.json --mask m2.json --out ev2").code, 0);
  EXPECT_EQ(slurp(dir / "m.json"), slurp(dir / "m2.json"));
  EXPECT_EQ(slurp(dir / "model.json"), slurp(dir / "model2.json"));
  EXPECT_EQ(slurp(dir / "ev/report.json"), slurp(dir / "ev2/report.json"));
  EXPECT_EQ(slurp(dir / "ev/map.png"), slurp(dir / "ev2/map.png"));
}

TEST(Cli, RawSpectrumBaseline) {
  ScratchDir dir("cli_raw");
  small_scene(dir);
  ASSERT_EQ(cli(dir, "sample --labels s/labels.json --strategy sss --per-class 4 --seed 2 --out m.json").code, 0);
  ASSERT_EQ(cli(dir, "train --cube-raw s/cube.json --labels s/labels.json --mask m.json --seed 2 --out raw.json").code, 0);
  EXPECT_EQ(load_model(dir / "raw.json").dim, 8u);
  EXPECT_EQ(load_model(dir / "raw.json").feature_kind, "raw");
  ASSERT_EQ(cli(dir, "predict --model raw.json --cube-raw s/cube.json --out p.json").code, 0);
  EXPECT_EQ(cli(dir, "eval --pred p.json --labels s/labels.json --mask m.json --out ev").code, 0);
  // A raw-spectrum model cannot score scattering features.
  ASSERT_EQ(cli(dir, "extract --cube s/cube.json --config c.json --out f.json").code, 0);
  EXPECT_EQ(cli(dir, "predict --model raw.json --features f.json --out x.json").code, 2);
}

TEST(Cli, KnnCheckAndGridsearch) {
  ScratchDir dir("cli_grid");
  small_scene(dir);
  ASSERT_EQ(cli(dir, "sample --labels s/labels.json --strategy random --per-class 3 --seed 1 --out m.json").code, 0);
  const auto knn = cli(dir, "knn-check --labels s/labels.json --mask m.json --manifest k.json");
  ASSERT_EQ(knn.code, 0);
  const double f = std::strtod(knn.out.c_str(), nullptr);
  EXPECT_DOUBLE_EQ(f, knn1_diagnostic(load_labels(dir / "s/labels.json"), load_mask(dir / "m.json")));
  EXPECT_TRUE(std::filesystem::exists(dir / "k.json"));

  write_text(dir / "cand.json", R"({"supports": [[1, 1, 3], [3, 3, 3]]})");
  ASSERT_EQ(cli(dir, "gridsearch --cube s/cube.json --labels s/labels.json --candidates cand.json --trials 2 "
                     "--strategy random --per-class 3 --seed 5 --out grid.csv").code, 0);
  const auto csv = slurp(dir / "grid.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kGridCsvHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_TRUE(std::filesystem::exists(dir / "grid.manifest.json"));
}

TEST(Cli, ExitCodes) {
  ScratchDir dir("cli_exit");
  small_scene(dir);
  EXPECT_EQ(cli(dir, "").code, 1);
  EXPECT_EQ(cli(dir, "bogus").code, 1);
  EXPECT_EQ(cli(dir, "extract --cube s/cube.json --out f.json").code, 1);
  EXPECT_EQ(cli(dir, "sample --labels s/labels.json --strategy grid --per-class 2 --seed 1 --out m.json").code, 1);
  EXPECT_EQ(cli(dir, "sample --labels s/labels.json --strategy random --seed 1 --out m.json").code, 1);
  EXPECT_EQ(cli(dir, "extract --cube missing.json --config c.json --out f.json").code, 2);
  write_text(dir / "broken.json", "{not json");
  EXPECT_EQ(cli(dir, "extract --cube s/cube.json --config broken.json --out f.json").code, 2);
  write_text(dir / "big.json", R"({"M":[3,3,20],"Mp":[3,3,3],"Mpp":[3,3,3]})");
  EXPECT_NE(cli(dir, "extract --cube s/cube.json --config big.json --out f.json").code, 0);
  EXPECT_FALSE(std::filesystem::exists(dir / "f.json"));
  EXPECT_EQ(cli(dir, "--version").code, 0);
}

TEST(Cli, ThreadsFromEnvironment) {
  ScratchDir dir("cli_env");
  small_scene(dir);
  ASSERT_EQ(cli(dir, "extract --cube s/cube.json --config c.json --out f.json").code, 0);
  ASSERT_EQ(std::system(("cd '" + dir.path().string() + "' && FST3D_THREADS=3 '" FST3D_CLI_PATH
                         "' extract --cube s/cube.json --config c.json --out e.json >/dev/null 2>&1")
                            .c_str()),
            0);
  EXPECT_EQ(read_json(dir / "e.manifest.json").at("threads").get<unsigned>(), 3u);
  EXPECT_EQ(slurp(dir / "f.bin"), slurp(dir / "e.bin"));
}
