#include "core/hypersearch.hpp"

#include <algorithm>
#include <numeric>

#include "core/error.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

namespace lungtex {

PatchSpec HyperPoint::spec(std::uint64_t seed) const {
  PatchSpec s;
  s.size_px = size_px;
  s.dimensionality = dimensionality;
  s.selection_radius_mm = selection_radius_mm;
  s.min_fill_factor = min_fill_factor;
  s.patches_per_class = patches_per_class;
  s.rng_seed = seed;
  return s;
}

HyperGrid HyperGrid::full() {
  HyperGrid g;
  g.dimensionalities = {Dimensionality::k2D, Dimensionality::k2_5D, Dimensionality::k3D};
  g.sizes = {8, 16, 24, 32, 48, 64};
  g.radii_mm = {1, 3, 5, 10};
  g.fill_factors = {0.5, 0.625, 0.75, 0.875, 1.0};
  g.patches_per_class = {300, 1000, 3000, 10000};
  return g;
}

HyperGrid HyperGrid::desk() {
  HyperGrid g;
  g.dimensionalities = {Dimensionality::k2D, Dimensionality::k2_5D, Dimensionality::k3D};
  g.sizes = {8, 16, 32};
  g.radii_mm = {1, 3};
  g.fill_factors = {0.5, 0.75};
  g.patches_per_class = {300, 1000};
  return g;
}

std::vector<HyperPoint> HyperGrid::expand() const {
  if (!points.empty()) return points;
  std::vector<HyperPoint> out;
  for (Dimensionality d : dimensionalities)
    for (int n : sizes)
      for (double r : radii_mm)
        for (double f : fill_factors)
          for (int p : patches_per_class) out.push_back(HyperPoint{d, n, r, f, p, false});
  return out;
}

void HyperGrid::validate() const {
  const auto all = expand();
  if (all.empty()) throw InvalidArgument("hypergrid has no points");
  for (const auto& p : all) p.spec(0).validate();
}

void SearchConfig::validate() const {
  if (folds < 2) throw InvalidArgument("search folds must be >= 2");
  if (!(validation_fill > 0.0 && validation_fill <= 1.0)) throw InvalidArgument("search validation_fill must lie in (0,1]");
  train.validate();
  model_for(HyperPoint{}).validate();
}

ModelConfig SearchConfig::model_for(const HyperPoint& p) const {
  ModelConfig m;
  m.dimensionality = p.dimensionality;
  m.input_size_px = p.size_px;
  m.block_layers = block_layers ? *block_layers : default_block_layers(p.dimensionality, p.size_px);
  m.initial_filters = initial_filters;
  m.growth_rate = growth_rate;
  m.stem_stride = stem_stride;
  m.hu_window = hu_window;
  return m;
}

bool ranks_before(const LeaderboardEntry& a, const LeaderboardEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  const HyperPoint& p = a.point;
  const HyperPoint& q = b.point;
  if (p.patches_per_class != q.patches_per_class) return p.patches_per_class < q.patches_per_class;
  if (p.size_px != q.size_px) return p.size_px < q.size_px;
  if (p.dimensionality != q.dimensionality) return p.dimensionality < q.dimensionality;
  if (p.selection_radius_mm != q.selection_radius_mm) return p.selection_radius_mm < q.selection_radius_mm;
  if (p.min_fill_factor != q.min_fill_factor) return p.min_fill_factor < q.min_fill_factor;
  return !p.corrupt_labels && q.corrupt_labels;
}

std::vector<std::vector<std::string>> assign_folds(std::vector<std::string> scan_ids, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("folds must be >= 2");
  if (scan_ids.size() < static_cast<std::size_t>(folds))
    throw InvalidArgument("fewer scans (" + std::to_string(scan_ids.size()) + ") than folds (" + std::to_string(folds) + ")");
  std::sort(scan_ids.begin(), scan_ids.end());
  CounterRng rng(seed);
  rng.shuffle(std::span<std::string>(scan_ids));
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < scan_ids.size(); ++i) out[i % folds].push_back(scan_ids[i]);
  return out;
}

namespace {

void corrupt(PatchSet& set, std::uint64_t seed) {
  std::vector<TextureLabel> labels;
  labels.reserve(set.size());
  for (const auto& r : set.records) labels.push_back(r.label);
  CounterRng rng(seed);
  rng.shuffle(std::span<TextureLabel>(labels));
  for (std::size_t i = 0; i < set.size(); ++i) set.records[i].label = labels[i];
}

double fold_score(const Atlas& train_atlas, const Atlas& val_atlas, const HyperPoint& point, const SearchConfig& cfg,
                  int fold) {
  const std::uint64_t fold_seed = derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(fold));
  PatchSpec spec = point.spec(derive_seed(fold_seed, "sample"));
  PatchSet train = sample_patches(train_atlas, spec, std::nullopt, "train");
  PatchSpec val_spec = spec;
  val_spec.min_fill_factor = cfg.validation_fill;
  val_spec.rng_seed = derive_seed(fold_seed, "sample-validation");
  const PatchSet val = sample_patches(val_atlas, val_spec, std::nullopt, "validation");
  if (point.corrupt_labels) corrupt(train, derive_seed(fold_seed, "corrupt"));

  Model model(cfg.model_for(point));
  model.initialize(derive_seed(cfg.rng_seed, "init"));
  TrainConfig tc = cfg.train;
  tc.rng_seed = derive_seed(fold_seed, "train");
  train_model(model, train, val, tc);

  const std::vector<double> probs = predict_proba(model, val);
  std::vector<ScoredSample> samples(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    std::copy(probs.begin() + static_cast<std::ptrdiff_t>(i * kNumClasses),
              probs.begin() + static_cast<std::ptrdiff_t>((i + 1) * kNumClasses), samples[i].probabilities.begin());
    samples[i].true_label = val.records[i].label;
  }
  return multiclass_auc(samples).micro;
}

}  // namespace

SearchResult hyperparameter_search(const Atlas& atlas, const HyperGrid& grid, const SearchConfig& cfg,
                                   const SearchProgress& progress) {
  cfg.validate();
  grid.validate();
  for (TextureLabel l : kAllLabels) {
    int scans_with_class = 0;
    for (const auto& s : atlas.scans)
      if (!s.candidates[index_of(l)].empty()) ++scans_with_class;
    if (scans_with_class < cfg.folds)
      throw InvalidArgument("hypersearch: class " + std::string(name_of(l)) + " is labeled in " +
                            std::to_string(scans_with_class) + " scans, need at least " + std::to_string(cfg.folds));
  }
  std::vector<std::string> ids;
  for (const auto& s : atlas.scans) ids.push_back(s.scan_id);
  const auto folds = assign_folds(ids, cfg.folds, derive_seed(cfg.rng_seed, "folds"));

  SearchResult result;
  for (const HyperPoint& point : grid.expand()) {
    LeaderboardEntry entry;
    entry.point = point;
    try {
      for (int f = 0; f < cfg.folds; ++f) {
        std::vector<std::string> train_ids;
        for (int g = 0; g < cfg.folds; ++g)
          if (g != f) train_ids.insert(train_ids.end(), folds[g].begin(), folds[g].end());
        entry.fold_scores.push_back(fold_score(atlas.subset(train_ids), atlas.subset(folds[f]), point, cfg, f));
      }
      entry.score = std::accumulate(entry.fold_scores.begin(), entry.fold_scores.end(), 0.0) /
                    static_cast<double>(entry.fold_scores.size());
    } catch (const InfeasibleError& e) {
      entry.infeasible = true;
      entry.score = 0.0;
      entry.note = e.what();
    }
    if (progress) progress(entry);
    result.leaderboard.push_back(std::move(entry));
  }
  std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(), ranks_before);
  result.best = result.leaderboard.front().point;
  result.best_spec = result.best.spec(cfg.rng_seed);
  result.best_model = cfg.model_for(result.best);
  return result;
}

}  // namespace lungtex
