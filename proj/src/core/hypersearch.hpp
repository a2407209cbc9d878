#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/atlas.hpp"
#include "core/network.hpp"
#include "core/train.hpp"

namespace lungtex {

// One sampling configuration.  corrupt_labels replaces the training labels by
// a seeded random permutation of themselves (a diagnostic competitor).
struct HyperPoint {
  Dimensionality dimensionality = Dimensionality::k2_5D;
  int size_px = 64;
  double selection_radius_mm = 3.0;
  double min_fill_factor = 0.625;
  int patches_per_class = 10000;
  bool corrupt_labels = false;

  PatchSpec spec(std::uint64_t seed) const;
  friend bool operator==(const HyperPoint&, const HyperPoint&) = default;
};

// Cartesian grid over the five sampling hyperparameters, or an explicit list
// of points when `points` is non-empty.
struct HyperGrid {
  std::vector<Dimensionality> dimensionalities;
  std::vector<int> sizes;
  std::vector<double> radii_mm;
  std::vector<double> fill_factors;
  std::vector<int> patches_per_class;
  std::vector<HyperPoint> points;

  static HyperGrid full();
  static HyperGrid desk();
  std::vector<HyperPoint> expand() const;
  void validate() const;
};

// Network width and training settings shared by every grid point.  The
// block layout follows default_block_layers() unless block_layers is set.
struct SearchConfig {
  int folds = 5;
  int initial_filters = 64;
  int growth_rate = 32;
  int stem_stride = 1;
  std::optional<std::vector<int>> block_layers;
  std::array<double, 2> hu_window = {-1024.0, 600.0};
  TrainConfig train;
  double validation_fill = 0.5;
  std::uint64_t rng_seed = 0;

  void validate() const;
  ModelConfig model_for(const HyperPoint& p) const;
};

struct LeaderboardEntry {
  HyperPoint point;
  std::vector<double> fold_scores;
  double score = 0.0;  // mean micro-average AUC over folds
  bool infeasible = false;
  std::string note;
};

struct SearchResult {
  std::vector<LeaderboardEntry> leaderboard;  // best first
  HyperPoint best;
  PatchSpec best_spec;
  ModelConfig best_model;
};

// Ranking: higher score, then fewer patches, smaller size, 2D < 2.5D < 3D,
// smaller radius, lower fill, clean before corrupted.
bool ranks_before(const LeaderboardEntry& a, const LeaderboardEntry& b);

// Scans are shuffled and dealt round-robin into folds.
std::vector<std::vector<std::string>> assign_folds(std::vector<std::string> scan_ids, int folds, std::uint64_t seed);

// Five-fold (cfg.folds) cross-validated search.  For every point and fold a
// fresh model trains on the other folds' scans and is scored by micro AUC on
// validation patches (fill cfg.validation_fill) from the held-out scans.  A
// point whose sampling is infeasible in any fold scores 0 and is flagged.
using SearchProgress = std::function<void(const LeaderboardEntry&)>;
SearchResult hyperparameter_search(const Atlas& atlas, const HyperGrid& grid, const SearchConfig& cfg,
                                   const SearchProgress& progress = {});

}  // namespace lungtex
