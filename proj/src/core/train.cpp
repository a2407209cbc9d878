#include "core/train.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/random.hpp"

namespace lungtex {

namespace {

constexpr std::size_t kPredictChunk = 64;

int argmax_row(const float* row, int classes) {
  return static_cast<int>(std::max_element(row, row + classes) - row);
}

}  // namespace

float normalize_hu(float v, const std::array<double, 2>& window) {
  const double t = (static_cast<double>(v) - window[0]) / (window[1] - window[0]);
  return static_cast<float>(std::clamp(t, 0.0, 1.0));
}

void normalize_patch(std::span<const float> hu, const std::array<double, 2>& window, std::span<float> out) {
  if (hu.size() != out.size()) throw InvalidArgument("normalize_patch: size mismatch");
  for (std::size_t i = 0; i < hu.size(); ++i) out[i] = normalize_hu(hu[i], window);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("train batch_size must be >= 1");
  if (max_epochs < 1) throw InvalidArgument("train max_epochs must be >= 1");
  if (patience_epochs < 1) throw InvalidArgument("train patience_epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("train momentum must lie in [0,1)");
  augment.validate();
}

bool EarlyStopping::observe(int epoch, double score) {
  if (score > best_score_) {
    best_score_ = score;
    best_epoch_ = epoch;
    return true;
  }
  return false;
}

void write_history_csv(const std::vector<EpochRecord>& history, std::ostream& out) {
  out << "epoch,train_loss,train_acc,val_acc\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.train_acc, r.val_acc);
    out << line;
  }
}

std::vector<int> class_indices(const PatchSet& set) {
  std::vector<int> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) out[i] = index_of(set.records[i].label);
  return out;
}

std::vector<double> predict_proba(Model& model, std::span<const float> hu_patches, std::size_t count) {
  const std::size_t elems = static_cast<std::size_t>(model.config().input_shape().elements());
  if (hu_patches.size() != count * elems) throw InvalidArgument("predict: tensor size does not match patch shape");
  const int classes = model.config().num_classes;
  const auto& window = model.config().hu_window;
  std::vector<double> out(count * classes);
  std::vector<float> input;
  for (std::size_t start = 0; start < count; start += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, count - start);
    input.resize(n * elems);
    normalize_patch(hu_patches.subspan(start * elems, n * elems), window, input);
    const std::vector<float> logits = model.forward(input, static_cast<int>(n), Mode::kInference);
    const std::vector<float> probs = softmax<float>(logits, classes);
    std::copy(probs.begin(), probs.end(), out.begin() + static_cast<std::ptrdiff_t>(start * classes));
  }
  return out;
}

std::vector<double> predict_proba(Model& model, const PatchSet& set) {
  if (!(set.shape() == model.config().input_shape())) throw InvalidArgument("predict: patch shape does not match model");
  return predict_proba(model, set.tensors, set.size());
}

TrainResult train_model(Model& model, const PatchSet& train, const PatchSet& val, const TrainConfig& cfg,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) throw InvalidArgument("train: empty training or validation set");
  const PatchShape shape = model.config().input_shape();
  if (!(train.shape() == shape) || !(val.shape() == shape))
    throw InvalidArgument("train: patch shape does not match model input");
  {
    const auto train_ids = train.scan_ids();
    const std::set<std::string> seen(train_ids.begin(), train_ids.end());
    for (const auto& id : val.scan_ids())
      if (seen.count(id)) throw InvalidArgument("train: scan '" + id + "' appears in both training and validation");
  }

  const std::size_t n = train.size();
  const std::size_t elems = static_cast<std::size_t>(shape.elements());
  const int classes = model.config().num_classes;
  const auto& window = model.config().hu_window;
  const Dimensionality dim = model.config().dimensionality;
  const std::vector<int> labels = class_indices(train);
  const std::vector<int> val_labels = class_indices(val);
  const std::uint64_t shuffle_seed = derive_seed(cfg.rng_seed, "shuffle");
  const std::uint64_t augment_seed = derive_seed(cfg.rng_seed, "augment");

  auto& tensors = model.tensors();
  std::vector<std::vector<float>> velocity(tensors.size());
  for (std::size_t t = 0; t < tensors.size(); ++t) velocity[t].assign(tensors[t].values.size(), 0.0f);
  std::vector<std::vector<float>> best;
  auto snapshot = [&] {
    best.resize(tensors.size());
    for (std::size_t t = 0; t < tensors.size(); ++t) best[t] = tensors[t].values;
  };
  snapshot();

  TrainResult result;
  EarlyStopping stopper(cfg.patience_epochs);
  std::vector<std::size_t> order(n);
  std::vector<float> input;
  std::vector<int> batch_labels;
  std::vector<std::vector<float>> grads;
  const float lr = static_cast<float>(cfg.learning_rate), mu = static_cast<float>(cfg.momentum);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng shuffler(shuffle_seed, static_cast<std::uint64_t>(epoch));
    shuffler.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(static_cast<std::size_t>(cfg.batch_size), n - start);
      input.resize(count * elems);
      batch_labels.resize(count);
      parallel_for(static_cast<std::int64_t>(count), [&](std::int64_t i) {
        const std::size_t rec = order[start + i];
        std::span<float> dst(input.data() + i * elems, elems);
        batch_labels[i] = labels[rec];
        if (!cfg.augment.enabled) {
          normalize_patch(train.tensor(rec), window, dst);
          return;
        }
        std::vector<float> tmp(elems);
        normalize_patch(train.tensor(rec), window, tmp);
        CounterRng rng(augment_seed, (static_cast<std::uint64_t>(epoch) << 32) | rec);
        apply_augment(tmp, shape, dim, draw_augment(cfg.augment, dim, rng), dst);
      });
      const std::vector<float> logits = model.forward(input, static_cast<int>(count), Mode::kTrain, true);
      for (std::size_t i = 0; i < count; ++i)
        if (argmax_row(logits.data() + i * classes, classes) == batch_labels[i]) ++correct;
      loss_sum += static_cast<double>(model.backward(batch_labels, grads)) * static_cast<double>(count);
      for (std::size_t t = 0; t < tensors.size(); ++t) {
        if (!tensors[t].trainable) continue;
        float* p = tensors[t].values.data();
        float* v = velocity[t].data();
        const float* g = grads[t].data();
        for (std::size_t i = 0; i < tensors[t].values.size(); ++i) {
          v[i] = mu * v[i] + g[i];
          p[i] -= lr * v[i];
        }
      }
    }

    const std::vector<double> probs = predict_proba(model, val);
    std::size_t val_correct = 0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double* row = probs.data() + i * classes;
      if (std::max_element(row, row + classes) - row == val_labels[i]) ++val_correct;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n),
                    static_cast<double>(val_correct) / static_cast<double>(val.size())};
    result.history.push_back(rec);
    if (stopper.observe(epoch, rec.val_acc)) snapshot();
    if (on_epoch) on_epoch(rec);
    if (stopper.should_stop(epoch)) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }

  for (std::size_t t = 0; t < tensors.size(); ++t) tensors[t].values = best[t];
  result.best_epoch = stopper.best_epoch();
  result.best_val_acc = stopper.best_score();
  return result;
}

}  // namespace lungtex
