#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace fst3d;
using fst3d::testing::kind_of;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::size_t fields(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

}  // namespace

TEST(GridSearch, RanksCandidatesAndReportsFailures) {
  const auto [cube, labels] = generate_synthetic({16, 16, 8, 4, 0.2, 2, 11});
  const std::vector<ScatterConfig> candidates = {
      ScatterConfig::uniform({1, 1, 3}), ScatterConfig::uniform({3, 3, 3}),
      ScatterConfig::uniform({3, 3, 9})};  // layer 1 sees 2 bands and cannot fit 9
  GridOptions opt;
  opt.trials = 2;
  opt.size = SampleSize::count(3);
  opt.seed = 5;
  const auto g = gridsearch(cube, labels, candidates, opt);
  ASSERT_EQ(g.points.size(), 3u);
  EXPECT_FALSE(g.points[0].failed);
  EXPECT_FALSE(g.points[1].failed);
  EXPECT_TRUE(g.points[0].best);
  EXPECT_FALSE(g.points[1].best);
  EXPECT_GE(g.points[0].mean_oa, g.points[1].mean_oa);
  EXPECT_TRUE(g.points[2].failed);
  EXPECT_FALSE(g.points[2].error.empty());
  for (const auto& pt : {g.points[0], g.points[1]}) {
    ASSERT_EQ(pt.oa.size(), 2u);
    EXPECT_NEAR(pt.mean_oa, (pt.oa[0] + pt.oa[1]) / 2.0, 1e-12);
    EXPECT_NEAR(pt.std_oa, std::abs(pt.oa[0] - pt.oa[1]) / std::sqrt(2.0), 1e-12);
    for (double v : pt.oa) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  }

  const auto csv = lines(grid_csv(g));
  ASSERT_EQ(csv.size(), 1u + 2 + 2 + 1);
  EXPECT_EQ(csv[0], kGridCsvHeader);
  for (const auto& l : csv) EXPECT_EQ(fields(l), 20u) << l;
  EXPECT_NE(csv.back().find("failed"), std::string::npos);
  EXPECT_NE(csv[1].find(",1,ok"), std::string::npos);
}

TEST(GridSearch, TrialMatchesDirectRun) {
  const auto [cube, labels] = generate_synthetic({16, 16, 8, 4, 0.2, 2, 3});
  const auto cfg = ScatterConfig::uniform({3, 3, 3});
  GridOptions opt;
  opt.trials = 1;
  opt.size = SampleSize::count(4);
  opt.seed = 9;
  const auto g = gridsearch(cube, labels, {cfg}, opt);
  const auto mask = sample_random(labels, SampleSize::count(4), trial_seed(9, 0));
  const auto direct = run_trial(scatter(cube, cfg), labels, mask, opt.C, trial_seed(9, 0));
  EXPECT_DOUBLE_EQ(g.points[0].oa[0], direct);
}

TEST(GridSearch, Errors) {
  const auto [cube, labels] = generate_synthetic({8, 8, 6, 2, 0.0, 2, 1});
  GridOptions opt;
  opt.trials = 0;
  EXPECT_EQ(kind_of([&] { gridsearch(cube, labels, {ScatterConfig::uniform({3, 3, 3})}, opt); }), ErrorKind::usage);
  opt.trials = 1;
  EXPECT_EQ(kind_of([&] { gridsearch(cube, labels, {}, opt); }), ErrorKind::usage);
  EXPECT_EQ(kind_of([&] { gridsearch(cube, LabelMap(4, 4), {ScatterConfig::uniform({3, 3, 3})}, opt); }),
            ErrorKind::data);
  opt.strategy = SamplingStrategy::sss;
  opt.size = SampleSize::of(0.1);
  EXPECT_EQ(kind_of([&] { gridsearch(cube, labels, {ScatterConfig::uniform({3, 3, 3})}, opt); }), ErrorKind::usage);
}

TEST(Candidates, Shapes) {
  const auto tied = parse_candidates(json{{"supports", {{3, 3, 3}, {5, 5, 3}}}});
  ASSERT_EQ(tied.size(), 2u);
  EXPECT_EQ(tied[1].layers[2].support, (Support{5, 5, 3}));
  const auto product = parse_candidates(json{{"supports", {{3, 3, 3}, {5, 5, 3}}}, {"mode", "product"}});
  EXPECT_EQ(product.size(), 8u);
  const auto list = parse_candidates(json::array({config_to_json(ScatterConfig::uniform({7, 7, 5}))}));
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(config_hash(list[0]), config_hash(ScatterConfig::uniform({7, 7, 5})));
  const auto wrapped = parse_candidates(json{{"configs", json::array({config_to_json(tied[0])})}});
  EXPECT_EQ(wrapped.size(), 1u);
  EXPECT_EQ(kind_of([] { parse_candidates(json{{"supports", json::array()}}); }), ErrorKind::usage);
  EXPECT_EQ(kind_of([] { parse_candidates(json{{"supports", {{3, 3, 3}}}, {"mode", "diag"}}); }), ErrorKind::usage);
  EXPECT_EQ(kind_of([] { parse_candidates(json{{"other", 1}}); }), ErrorKind::usage);
}

TEST(Candidates, TrialSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::size_t t = 0; t < 50; ++t) seen.insert(trial_seed(1, t));
  EXPECT_EQ(seen.size(), 50u);
}
