#include <doctest.h>

#include <set>

#include "common/fixtures.hpp"
#include "core/error.hpp"
#include "core/hypersearch.hpp"

using namespace lungtex;

namespace {

SearchConfig quick() {
  SearchConfig c;
  c.folds = 2;
  c.initial_filters = 4;
  c.growth_rate = 4;
  c.block_layers = std::vector<int>{1};
  c.train.max_epochs = 2;
  c.train.patience_epochs = 2;
  c.train.batch_size = 16;
  c.rng_seed = 3;
  return c;
}

}  // namespace

TEST_CASE("fold assignment deals whole scans") {
  std::vector<std::string> ids;
  for (int i = 0; i < 11; ++i) ids.push_back("s" + std::to_string(i));
  const auto folds = assign_folds(ids, 5, 1);
  REQUIRE(folds.size() == 5);
  std::set<std::string> all;
  for (const auto& f : folds) {
    CHECK(f.size() >= 2);
    CHECK(f.size() <= 3);
    all.insert(f.begin(), f.end());
  }
  CHECK(all.size() == 11);
  CHECK(assign_folds(ids, 5, 1) == folds);
  CHECK(assign_folds(ids, 5, 2) != folds);
  CHECK_THROWS_AS(assign_folds({"a", "b"}, 5, 1), InvalidArgument);
}

TEST_CASE("leaderboard ordering") {
  LeaderboardEntry a, b;
  a.score = 0.9;
  b.score = 0.8;
  CHECK(ranks_before(a, b));
  CHECK_FALSE(ranks_before(b, a));
  b.score = 0.9;
  a.point.patches_per_class = 300;
  b.point.patches_per_class = 1000;
  CHECK(ranks_before(a, b));
  b.point.patches_per_class = 300;
  a.point.size_px = 16;
  b.point.size_px = 32;
  CHECK(ranks_before(a, b));
  b.point.size_px = 16;
  a.point.dimensionality = Dimensionality::k2D;
  b.point.dimensionality = Dimensionality::k2_5D;
  CHECK(ranks_before(a, b));
  b.point.dimensionality = Dimensionality::k2D;
  b.point.corrupt_labels = true;
  CHECK(ranks_before(a, b));
  CHECK_FALSE(ranks_before(a, a));
}

TEST_CASE("a one-point grid returns that point") {
  const Atlas atlas = testutil::random_atlas(1, 4, Grid{{20, 20, 10}, {1, 1, 1}});
  HyperGrid grid;
  grid.points = {HyperPoint{Dimensionality::k2D, 4, 1.0, 0.5, 20, false}};
  int progress = 0;
  const SearchResult r = hyperparameter_search(atlas, grid, quick(), [&](const LeaderboardEntry&) { ++progress; });
  CHECK(progress == 1);
  REQUIRE(r.leaderboard.size() == 1);
  CHECK(r.best == grid.points[0]);
  CHECK(r.best_spec.size_px == 4);
  CHECK(r.best_model.input_size_px == 4);
  CHECK(r.leaderboard[0].fold_scores.size() == 2);
  CHECK_FALSE(r.leaderboard[0].infeasible);
}

TEST_CASE("infeasible points score zero and are flagged") {
  const Atlas atlas = testutil::random_atlas(2, 4, Grid{{20, 20, 10}, {1, 1, 1}});
  HyperGrid grid;
  grid.points = {HyperPoint{Dimensionality::k3D, 16, 1.0, 1.0, 20, false}, HyperPoint{Dimensionality::k2D, 4, 1.0, 0.5, 20, false}};
  const SearchResult r = hyperparameter_search(atlas, grid, quick());
  REQUIRE(r.leaderboard.size() == 2);
  CHECK(r.leaderboard.back().infeasible);
  CHECK(r.leaderboard.back().score == 0.0);
  CHECK_FALSE(r.leaderboard.back().note.empty());
  CHECK(r.best == grid.points[1]);
}
