#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/patch.hpp"

namespace lungtex {

// Architecture of the dense-block classifier.
//
//   stem conv (initial_filters) -> dense blocks -> transitions between blocks
//   -> norm/ReLU -> global average pool -> linear -> softmax
//
// Each dense layer is norm -> ReLU -> 3x3(x3) conv emitting growth_rate
// channels that are concatenated onto its input.  A transition is norm ->
// ReLU -> 1x1 conv halving the channels -> 2x average pool.
struct ModelConfig {
  Dimensionality dimensionality = Dimensionality::k2_5D;
  int input_size_px = 64;
  std::vector<int> block_layers = {24};
  int initial_filters = 64;
  int growth_rate = 32;
  int num_classes = kNumClasses;
  // In-plane stride of the stem convolution.
  int stem_stride = 1;
  // HU window mapped onto [0, 1] before the first layer.
  std::array<double, 2> hu_window = {-1024.0, 600.0};

  void validate() const;
  PatchShape input_shape() const { return patch_shape(input_size_px, dimensionality); }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Layers per dense block for a patch geometry:
//   2D -> (6,12,24,16); 2.5D -> (24);
//   3D -> (6,24) for N in [5,12], (6,24,16) for N in [13,32], (6,12,24,16) otherwise.
std::vector<int> default_block_layers(Dimensionality dim, int size_px);
ModelConfig default_model_config(Dimensionality dim, int size_px);

template <typename T>
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;
  // Running normalization statistics are stored but not optimized.
  bool trainable = true;
};

enum class Mode { kTrain, kInference };

template <typename T>
class DenseNet {
 public:
  explicit DenseNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  std::int64_t trainable_parameter_count() const;

  // Fan-in scaled uniform weights, unit norm scales, zero shifts and biases.
  void initialize(std::uint64_t seed);

  // input: batch x input_shape() values already mapped to [0,1].
  // Returns batch x num_classes logits.  kTrain uses batch statistics and
  // keeps what backward() needs; running statistics move only when
  // update_running_stats is set.
  std::vector<T> forward(std::span<const T> input, int batch, Mode mode, bool update_running_stats = false);

  // Gradient of the mean cross-entropy of the last kTrain forward pass with
  // respect to every tensor (zero for non-trainable ones).  Returns the loss.
  T backward(std::span<const int> labels, std::vector<std::vector<T>>& grads);

  template <typename U>
  DenseNet<U> cast() const {
    DenseNet<U> out(config_);
    for (std::size_t t = 0; t < tensors_.size(); ++t)
      for (std::size_t i = 0; i < tensors_[t].values.size(); ++i)
        out.tensors()[t].values[i] = static_cast<U>(tensors_[t].values[i]);
    return out;
  }

  struct Shape3 {
    int d = 1, h = 1, w = 1;
    int size() const { return d * h * w; }
  };

 private:
  struct ConvDesc {
    int cin = 0, cout = 0;
    int kd = 1, kh = 1, kw = 1;
    int stride = 1;  // in-plane
    int pd = 0, ph = 0, pw = 0;
    Shape3 in, out;
    int weight = -1;
    int kernel_volume() const { return kd * kh * kw; }
  };
  struct NormDesc {
    int channels = 0;
    int gamma = -1, beta = -1, mean = -1, var = -1;
  };
  struct LayerDesc {
    NormDesc norm;
    ConvDesc conv;
  };
  struct BlockDesc {
    Shape3 shape;
    int c_in = 0, c_out = 0;
    std::vector<LayerDesc> layers;
  };
  struct TransitionDesc {
    NormDesc norm;
    ConvDesc conv;
    std::array<int, 3> pool{1, 1, 1};
    Shape3 out;
  };
  struct NormCache {
    std::vector<T> xhat;    // batch x channels x spatial
    std::vector<T> invstd;  // per channel
  };

  int add_tensor(std::string name, std::vector<int> shape, bool trainable, T fill);
  ConvDesc make_conv(const std::string& name, int cin, int cout, int kd, int k, int stride, Shape3 in);
  NormDesc make_norm(const std::string& name, int channels);

  void norm_forward(const T* x, int ctot, int spatial, const NormDesc& nd, Mode mode, bool update, NormCache& cache);
  void norm_backward(const NormDesc& nd, const NormCache& cache, const T* dz, T* dx, int ctot, int spatial,
                     std::vector<std::vector<T>>& grads);
  void activation(const NormDesc& nd, const NormCache& cache, int b, int spatial, T* out) const;
  void reduce_slots(const std::vector<T>& slots, int count, std::vector<T>& grad) const;

  ModelConfig config_;
  std::vector<Tensor<T>> tensors_;
  ConvDesc stem_;
  std::vector<BlockDesc> blocks_;
  std::vector<TransitionDesc> transitions_;
  NormDesc final_norm_;
  int classifier_weight_ = -1, classifier_bias_ = -1;
  int feature_channels_ = 0;

  // Forward cache.
  int batch_ = 0;
  bool cached_train_ = false;
  std::vector<T> input_;
  std::vector<std::vector<T>> features_;
  std::vector<std::vector<NormCache>> layer_norms_;
  std::vector<NormCache> transition_norms_;
  NormCache final_cache_;
  std::vector<T> pooled_;
  std::vector<T> logits_;
};

extern template class DenseNet<float>;
extern template class DenseNet<double>;

using Model = DenseNet<float>;

// Row-wise softmax of batch x classes logits.
template <typename T>
std::vector<T> softmax(std::span<const T> logits, int classes);

}  // namespace lungtex
