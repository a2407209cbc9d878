#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "core/atlas.hpp"
#include "core/augment.hpp"
#include "core/network.hpp"

namespace lungtex {

// clamp((v - lo) / (hi - lo), 0, 1).
float normalize_hu(float v, const std::array<double, 2>& window);
void normalize_patch(std::span<const float> hu, const std::array<double, 2>& window, std::span<float> out);

struct TrainConfig {
  int batch_size = 32;
  int patience_epochs = 60;
  int max_epochs = 200;
  double learning_rate = 0.01;
  double momentum = 0.9;
  AugmentConfig augment;
  std::uint64_t rng_seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Patience bookkeeping on a score that must strictly improve.  Epochs are
// counted from 1.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Records an epoch; true when it is the new best.
  bool observe(int epoch, double score);
  bool should_stop(int epoch) const { return epoch - best_epoch_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_score_ = -std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  bool stopped_early = false;
};

void write_history_csv(const std::vector<EpochRecord>& history, std::ostream& out);

// Class index (0-based) of every record.
std::vector<int> class_indices(const PatchSet& set);

// Softmax probabilities (records x classes) in inference mode.
std::vector<double> predict_proba(Model& model, const PatchSet& set);
std::vector<double> predict_proba(Model& model, std::span<const float> hu_patches, std::size_t count);

// Momentum SGD on mean cross-entropy with per-epoch validation accuracy and
// patience-based early stopping.  The model must already be initialised; on
// return it holds the parameters of the best validation epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;
TrainResult train_model(Model& model, const PatchSet& train, const PatchSet& val, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

}  // namespace lungtex
