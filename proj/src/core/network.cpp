#include "core/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "core/error.hpp"
#include "core/gemm.hpp"
#include "core/parallel.hpp"
#include "core/random.hpp"

namespace lungtex {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kNormMomentum = 0.9;

}  // namespace

void ModelConfig::validate() const {
  if (input_size_px < 1) throw InvalidArgument("model input_size_px must be >= 1");
  if (block_layers.empty()) throw InvalidArgument("model block_layers must not be empty");
  for (int n : block_layers)
    if (n < 1) throw InvalidArgument("model block_layers entries must be >= 1");
  if (initial_filters < 1) throw InvalidArgument("model initial_filters must be >= 1");
  if (growth_rate < 1) throw InvalidArgument("model growth_rate must be >= 1");
  if (num_classes < 2) throw InvalidArgument("model num_classes must be >= 2");
  if (stem_stride < 1) throw InvalidArgument("model stem_stride must be >= 1");
  if (!(hu_window[0] < hu_window[1])) throw InvalidArgument("model hu_window must be increasing");
}

std::vector<int> default_block_layers(Dimensionality dim, int size_px) {
  switch (dim) {
    case Dimensionality::k2D:
      return {6, 12, 24, 16};
    case Dimensionality::k2_5D:
      return {24};
    case Dimensionality::k3D:
      if (size_px >= 5 && size_px <= 12) return {6, 24};
      if (size_px >= 13 && size_px <= 32) return {6, 24, 16};
      return {6, 12, 24, 16};
  }
  return {24};
}

ModelConfig default_model_config(Dimensionality dim, int size_px) {
  ModelConfig c;
  c.dimensionality = dim;
  c.input_size_px = size_px;
  c.block_layers = default_block_layers(dim, size_px);
  return c;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits, int classes) {
  std::vector<T> out(logits.size());
  const std::size_t rows = logits.size() / static_cast<std::size_t>(classes);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * classes;
    T* o = out.data() + r * classes;
    const T mx = *std::max_element(in, in + classes);
    double sum = 0.0;
    for (int k = 0; k < classes; ++k) sum += std::exp(static_cast<double>(in[k] - mx));
    for (int k = 0; k < classes; ++k) o[k] = static_cast<T>(std::exp(static_cast<double>(in[k] - mx)) / sum);
  }
  return out;
}

template std::vector<float> softmax<float>(std::span<const float>, int);
template std::vector<double> softmax<double>(std::span<const double>, int);

namespace {

// Rows of the patch matrix for input channels [c0, c1).
template <typename T, typename Desc>
void im2col(const T* x, const Desc& cd, T* col, int c0, int c1) {
  const int spatial = cd.out.size();
  const int plane = cd.out.h * cd.out.w;
  int row = 0;
  for (int c = c0; c < c1; ++c)
    for (int kz = 0; kz < cd.kd; ++kz)
      for (int ky = 0; ky < cd.kh; ++ky)
        for (int kx = 0; kx < cd.kw; ++kx, ++row) {
          T* dst = col + static_cast<std::ptrdiff_t>(row) * spatial;
          for (int oz = 0; oz < cd.out.d; ++oz) {
            T* dz = dst + oz * plane;
            const int iz = oz + kz - cd.pd;
            if (iz < 0 || iz >= cd.in.d) {
              std::fill(dz, dz + plane, T(0));
              continue;
            }
            for (int oy = 0; oy < cd.out.h; ++oy) {
              T* dr = dz + oy * cd.out.w;
              const int iy = oy * cd.stride + ky - cd.ph;
              if (iy < 0 || iy >= cd.in.h) {
                std::fill(dr, dr + cd.out.w, T(0));
                continue;
              }
              const T* src = x + (static_cast<std::ptrdiff_t>(c * cd.in.d + iz) * cd.in.h + iy) * cd.in.w;
              if (cd.stride == 1) {
                const int shift = kx - cd.pw;
                const int lo = std::clamp(-shift, 0, cd.out.w);
                const int hi = std::clamp(cd.in.w - shift, lo, cd.out.w);
                std::fill(dr, dr + lo, T(0));
                std::copy(src + lo + shift, src + hi + shift, dr + lo);
                std::fill(dr + hi, dr + cd.out.w, T(0));
              } else {
                for (int ox = 0; ox < cd.out.w; ++ox) {
                  const int ix = ox * cd.stride + kx - cd.pw;
                  dr[ox] = (ix >= 0 && ix < cd.in.w) ? src[ix] : T(0);
                }
              }
            }
          }
        }
}

// dx (zeroed by caller) += scatter of dcol.
template <typename T, typename Desc>
void col2im(const T* dcol, const Desc& cd, T* dx) {
  const int spatial = cd.out.size();
  const int plane = cd.out.h * cd.out.w;
  int row = 0;
  for (int c = 0; c < cd.cin; ++c)
    for (int kz = 0; kz < cd.kd; ++kz)
      for (int ky = 0; ky < cd.kh; ++ky)
        for (int kx = 0; kx < cd.kw; ++kx, ++row) {
          const T* src = dcol + static_cast<std::ptrdiff_t>(row) * spatial;
          for (int oz = 0; oz < cd.out.d; ++oz) {
            const int iz = oz + kz - cd.pd;
            if (iz < 0 || iz >= cd.in.d) continue;
            for (int oy = 0; oy < cd.out.h; ++oy) {
              const int iy = oy * cd.stride + ky - cd.ph;
              if (iy < 0 || iy >= cd.in.h) continue;
              const T* sr = src + oz * plane + oy * cd.out.w;
              T* dr = dx + (static_cast<std::ptrdiff_t>(c * cd.in.d + iz) * cd.in.h + iy) * cd.in.w;
              for (int ox = 0; ox < cd.out.w; ++ox) {
                const int ix = ox * cd.stride + kx - cd.pw;
                if (ix >= 0 && ix < cd.in.w) dr[ix] += sr[ox];
              }
            }
          }
        }
}

template <typename Desc>
bool is_pointwise(const Desc& cd) {
  return cd.kernel_volume() == 1 && cd.stride == 1;
}

template <typename T>
struct Scratch {
  std::vector<T> x, col, dcol, y, dy, pad, tmp;
  std::vector<const T*> rows;
};

template <typename T>
Scratch<T>& scratch() {
  thread_local Scratch<T> s;
  return s;
}

// Stride-1 convolutions run as an implicit GEMM over a zero-padded copy of
// the input.  Output voxel (z,y,x) lives at p = (z*Hp + y)*Wp + x of a span
// of length P, and GEMM row (c, tap) is the padded channel shifted by the
// tap offset.  Returns P.
template <typename T, typename Desc>
int pad_rows(const Desc& cd, int channels, const T* x, Scratch<T>& sc) {
  const int dp = cd.in.d + 2 * cd.pd, hp = cd.in.h + 2 * cd.ph, wp = cd.in.w + 2 * cd.pw;
  const int vol = dp * hp * wp;
  sc.pad.assign(static_cast<std::size_t>(channels) * vol, T(0));
  for (int c = 0; c < channels; ++c)
    for (int z = 0; z < cd.in.d; ++z)
      for (int y = 0; y < cd.in.h; ++y) {
        const T* src = x + (static_cast<std::ptrdiff_t>(c * cd.in.d + z) * cd.in.h + y) * cd.in.w;
        std::copy(src, src + cd.in.w,
                  sc.pad.data() + static_cast<std::ptrdiff_t>(c) * vol + ((z + cd.pd) * hp + y + cd.ph) * wp + cd.pw);
      }
  const int kv = cd.kernel_volume();
  sc.rows.resize(static_cast<std::size_t>(channels) * kv);
  for (int c = 0; c < channels; ++c) {
    int t = 0;
    for (int kz = 0; kz < cd.kd; ++kz)
      for (int ky = 0; ky < cd.kh; ++ky)
        for (int kx = 0; kx < cd.kw; ++kx, ++t)
          sc.rows[static_cast<std::size_t>(c) * kv + t] =
              sc.pad.data() + static_cast<std::ptrdiff_t>(c) * vol + (kz * hp + ky) * wp + kx;
  }
  return (cd.out.d - 1) * hp * wp + (cd.out.h - 1) * wp + cd.out.w;
}

template <typename Desc>
int span_index(const Desc& cd, int z, int y) {
  const int hp = cd.in.h + 2 * cd.ph, wp = cd.in.w + 2 * cd.pw;
  return (z * hp + y) * wp;
}

// y[cout][S_out] = W * im2col(x).
template <typename T, typename Desc>
void conv_forward(const Desc& cd, const T* w, const T* x, T* y, Scratch<T>& sc) {
  const int k = cd.cin * cd.kernel_volume();
  const int spatial = cd.out.size();
  if (is_pointwise(cd)) {
    gemm::nn(cd.cout, spatial, k, w, k, x, spatial, y, spatial);
  } else if (cd.stride == 1) {
    const int span = pad_rows(cd, cd.cin, x, sc);
    sc.tmp.resize(static_cast<std::size_t>(cd.cout) * span);
    gemm::nn_rows(cd.cout, span, k, w, k, gemm::RowTable<T>{sc.rows.data()}, sc.tmp.data(), span);
    for (int c = 0; c < cd.cout; ++c)
      for (int z = 0; z < cd.out.d; ++z)
        for (int yy = 0; yy < cd.out.h; ++yy) {
          const T* src = sc.tmp.data() + static_cast<std::ptrdiff_t>(c) * span + span_index(cd, z, yy);
          std::copy(src, src + cd.out.w, y + ((static_cast<std::ptrdiff_t>(c) * cd.out.d + z) * cd.out.h + yy) * cd.out.w);
        }
  } else {
    sc.col.resize(static_cast<std::size_t>(k) * spatial);
    im2col(x, cd, sc.col.data(), 0, cd.cin);
    gemm::nn(cd.cout, spatial, k, w, k, sc.col.data(), spatial, y, spatial);
  }
}

// Kernel of the adjoint of a stride-1 convolution: w[co][ci][z][y][x] ->
// out[ci][co][kd-1-z][kh-1-y][kw-1-x].
template <typename T, typename Desc>
std::vector<T> flipped_kernel(const Desc& cd, const T* w) {
  const int kv = cd.kernel_volume();
  std::vector<T> out(static_cast<std::size_t>(cd.cin) * cd.cout * kv);
  for (int co = 0; co < cd.cout; ++co)
    for (int ci = 0; ci < cd.cin; ++ci)
      for (int k = 0; k < kv; ++k)
        out[(static_cast<std::size_t>(ci) * cd.cout + co) * kv + (kv - 1 - k)] =
            w[(static_cast<std::size_t>(co) * cd.cin + ci) * kv + k];
  return out;
}

// dw = dy * col^T; dx (optional, overwritten) = adjoint of the convolution
// applied to dy.  Stride-1 kernels use the flipped kernel `w_flip`.
template <typename T, typename Desc>
void conv_backward(const Desc& cd, const T* w, const T* w_flip, const T* x, const T* dy, T* dw, T* dx,
                   Scratch<T>& sc) {
  const int k = cd.cin * cd.kernel_volume();
  const int spatial = cd.out.size();
  const bool pointwise = is_pointwise(cd);
  if (pointwise) {
    gemm::nt(cd.cout, k, spatial, dy, spatial, x, spatial, dw, k);
  } else if (cd.stride == 1) {
    const int span = pad_rows(cd, cd.cin, x, sc);
    sc.tmp.assign(static_cast<std::size_t>(cd.cout) * span, T(0));
    for (int c = 0; c < cd.cout; ++c)
      for (int z = 0; z < cd.out.d; ++z)
        for (int yy = 0; yy < cd.out.h; ++yy) {
          const T* src = dy + ((static_cast<std::ptrdiff_t>(c) * cd.out.d + z) * cd.out.h + yy) * cd.out.w;
          std::copy(src, src + cd.out.w, sc.tmp.data() + static_cast<std::ptrdiff_t>(c) * span + span_index(cd, z, yy));
        }
    gemm::nt_rows(cd.cout, k, span, sc.tmp.data(), span, gemm::RowTable<T>{sc.rows.data()}, dw, k);
  } else {
    sc.col.resize(static_cast<std::size_t>(k) * spatial);
    im2col(x, cd, sc.col.data(), 0, cd.cin);
    gemm::nt(cd.cout, k, spatial, dy, spatial, sc.col.data(), spatial, dw, k);
  }
  if (dx == nullptr) return;
  if (pointwise) {
    gemm::tn(k, spatial, cd.cout, w, k, dy, spatial, dx, spatial);
    return;
  }
  if (cd.stride == 1) {
    Desc adj = cd;
    std::swap(adj.cin, adj.cout);
    conv_forward(adj, w_flip, dy, dx, sc);
    return;
  }
  sc.col.resize(static_cast<std::size_t>(k) * spatial);
  im2col(x, cd, sc.col.data(), 0, cd.cin);
  sc.dcol.resize(static_cast<std::size_t>(k) * spatial);
  gemm::tn(k, spatial, cd.cout, w, k, dy, spatial, sc.dcol.data(), spatial);
  std::fill(dx, dx + static_cast<std::ptrdiff_t>(cd.cin) * cd.in.size(), T(0));
  col2im(sc.dcol.data(), cd, dx);
}

}  // namespace

template <typename T>
int DenseNet<T>::add_tensor(std::string name, std::vector<int> shape, bool trainable, T fill) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  tensors_.push_back(Tensor<T>{std::move(name), std::move(shape), std::vector<T>(n, fill), trainable});
  return static_cast<int>(tensors_.size()) - 1;
}

template <typename T>
typename DenseNet<T>::ConvDesc DenseNet<T>::make_conv(const std::string& name, int cin, int cout, int kd, int k,
                                                      int stride, Shape3 in) {
  ConvDesc cd;
  cd.cin = cin;
  cd.cout = cout;
  cd.kd = kd;
  cd.kh = cd.kw = k;
  cd.stride = stride;
  cd.pd = kd / 2;
  cd.ph = cd.pw = k / 2;
  cd.in = in;
  cd.out.d = in.d + 2 * cd.pd - kd + 1;
  cd.out.h = (in.h + 2 * cd.ph - k) / stride + 1;
  cd.out.w = (in.w + 2 * cd.pw - k) / stride + 1;
  cd.weight = add_tensor(name + ".weight", {cout, cin, kd, k, k}, true, T(0));
  return cd;
}

template <typename T>
typename DenseNet<T>::NormDesc DenseNet<T>::make_norm(const std::string& name, int channels) {
  NormDesc nd;
  nd.channels = channels;
  nd.gamma = add_tensor(name + ".gamma", {channels}, true, T(1));
  nd.beta = add_tensor(name + ".beta", {channels}, true, T(0));
  nd.mean = add_tensor(name + ".running_mean", {channels}, false, T(0));
  nd.var = add_tensor(name + ".running_var", {channels}, false, T(1));
  return nd;
}

template <typename T>
DenseNet<T>::DenseNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const PatchShape ps = config_.input_shape();
  const int kd = config_.dimensionality == Dimensionality::k2D ? 1 : 3;
  stem_ = make_conv("stem.conv", 1, config_.initial_filters, kd, 3, config_.stem_stride,
                    Shape3{ps.depth, ps.height, ps.width});

  int channels = config_.initial_filters;
  Shape3 shape = stem_.out;
  for (std::size_t b = 0; b < config_.block_layers.size(); ++b) {
    BlockDesc block;
    block.shape = shape;
    block.c_in = channels;
    for (int l = 0; l < config_.block_layers[b]; ++l) {
      const std::string prefix = "block" + std::to_string(b) + ".layer" + std::to_string(l);
      LayerDesc layer;
      layer.norm = make_norm(prefix + ".norm", channels);
      layer.conv = make_conv(prefix + ".conv", channels, config_.growth_rate, kd, 3, 1, shape);
      block.layers.push_back(layer);
      channels += config_.growth_rate;
    }
    block.c_out = channels;
    blocks_.push_back(std::move(block));
    if (b + 1 == config_.block_layers.size()) break;

    const std::string prefix = "transition" + std::to_string(b);
    TransitionDesc tr;
    tr.norm = make_norm(prefix + ".norm", channels);
    const int half = std::max(1, channels / 2);
    tr.conv = make_conv(prefix + ".conv", channels, half, 1, 1, 1, shape);
    tr.pool = {config_.dimensionality == Dimensionality::k3D && shape.d >= 2 ? 2 : 1, shape.h >= 2 ? 2 : 1,
               shape.w >= 2 ? 2 : 1};
    tr.out = Shape3{shape.d / tr.pool[0], shape.h / tr.pool[1], shape.w / tr.pool[2]};
    transitions_.push_back(tr);
    shape = tr.out;
    channels = half;
  }
  feature_channels_ = channels;
  final_norm_ = make_norm("final.norm", channels);
  classifier_weight_ = add_tensor("classifier.weight", {config_.num_classes, channels}, true, T(0));
  classifier_bias_ = add_tensor("classifier.bias", {config_.num_classes}, true, T(0));
}

template <typename T>
std::int64_t DenseNet<T>::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_)
    if (t.trainable) n += static_cast<std::int64_t>(t.values.size());
  return n;
}

template <typename T>
void DenseNet<T>::initialize(std::uint64_t seed) {
  for (auto& t : tensors_) {
    const bool is_weight = t.name.ends_with(".weight");
    if (!is_weight) {
      const bool ones = t.name.ends_with(".gamma") || t.name.ends_with(".running_var");
      std::fill(t.values.begin(), t.values.end(), ones ? T(1) : T(0));
      continue;
    }
    std::int64_t fan_in = 1;
    for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
    const bool linear = t.name.starts_with("classifier.");
    const double bound = linear ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                                : std::sqrt(6.0 / static_cast<double>(fan_in));
    CounterRng rng(derive_seed(seed, t.name));
    for (auto& v : t.values) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
void DenseNet<T>::norm_forward(const T* x, int ctot, int spatial, const NormDesc& nd, Mode mode, bool update,
                               NormCache& cache) {
  const int batch = batch_;
  const int channels = nd.channels;
  cache.xhat.resize(static_cast<std::size_t>(batch) * channels * spatial);
  cache.invstd.resize(static_cast<std::size_t>(channels));
  T* running_mean = tensors_[nd.mean].values.data();
  T* running_var = tensors_[nd.var].values.data();
  const double m = static_cast<double>(batch) * spatial;
  parallel_for(channels, [&](std::int64_t c) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double sum = 0.0;
      for (int b = 0; b < batch; ++b) {
        const T* row = x + (static_cast<std::ptrdiff_t>(b) * ctot + c) * spatial;
        for (int s = 0; s < spatial; ++s) sum += row[s];
      }
      mean = sum / m;
      double sq = 0.0;
      for (int b = 0; b < batch; ++b) {
        const T* row = x + (static_cast<std::ptrdiff_t>(b) * ctot + c) * spatial;
        for (int s = 0; s < spatial; ++s) {
          const double d = row[s] - mean;
          sq += d * d;
        }
      }
      var = sq / m;
      if (update) {
        const double unbiased = m > 1 ? sq / (m - 1) : var;
        running_mean[c] = static_cast<T>(kNormMomentum * running_mean[c] + (1 - kNormMomentum) * mean);
        running_var[c] = static_cast<T>(kNormMomentum * running_var[c] + (1 - kNormMomentum) * unbiased);
      }
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    cache.invstd[c] = static_cast<T>(inv);
    for (int b = 0; b < batch; ++b) {
      const T* row = x + (static_cast<std::ptrdiff_t>(b) * ctot + c) * spatial;
      T* out = cache.xhat.data() + (static_cast<std::ptrdiff_t>(b) * channels + c) * spatial;
      for (int s = 0; s < spatial; ++s) out[s] = static_cast<T>((row[s] - mean) * inv);
    }
  });
}

template <typename T>
void DenseNet<T>::activation(const NormDesc& nd, const NormCache& cache, int b, int spatial, T* out) const {
  const T* gamma = tensors_[nd.gamma].values.data();
  const T* beta = tensors_[nd.beta].values.data();
  for (int c = 0; c < nd.channels; ++c) {
    const T* xh = cache.xhat.data() + (static_cast<std::ptrdiff_t>(b) * nd.channels + c) * spatial;
    T* o = out + static_cast<std::ptrdiff_t>(c) * spatial;
    const T g = gamma[c], be = beta[c];
    for (int s = 0; s < spatial; ++s) o[s] = std::max(T(0), g * xh[s] + be);
  }
}

template <typename T>
void DenseNet<T>::norm_backward(const NormDesc& nd, const NormCache& cache, const T* dz, T* dx, int ctot,
                                int spatial, std::vector<std::vector<T>>& grads) {
  const int batch = batch_;
  const int channels = nd.channels;
  const T* gamma = tensors_[nd.gamma].values.data();
  T* dgamma = grads[nd.gamma].data();
  T* dbeta = grads[nd.beta].data();
  const double m = static_cast<double>(batch) * spatial;
  parallel_for(channels, [&](std::int64_t c) {
    double sum_dz = 0.0, sum_dz_xhat = 0.0;
    for (int b = 0; b < batch; ++b) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(b) * channels + c) * spatial;
      for (int s = 0; s < spatial; ++s) {
        sum_dz += dz[off + s];
        sum_dz_xhat += static_cast<double>(dz[off + s]) * cache.xhat[off + s];
      }
    }
    dgamma[c] = static_cast<T>(sum_dz_xhat);
    dbeta[c] = static_cast<T>(sum_dz);
    const double scale = static_cast<double>(gamma[c]) * cache.invstd[c];
    const double mean_dz = sum_dz / m, mean_dz_xhat = sum_dz_xhat / m;
    for (int b = 0; b < batch; ++b) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(b) * channels + c) * spatial;
      T* out = dx + (static_cast<std::ptrdiff_t>(b) * ctot + c) * spatial;
      for (int s = 0; s < spatial; ++s)
        out[s] += static_cast<T>(scale * (dz[off + s] - mean_dz - cache.xhat[off + s] * mean_dz_xhat));
    }
  });
}

template <typename T>
void DenseNet<T>::reduce_slots(const std::vector<T>& slots, int count, std::vector<T>& grad) const {
  const std::int64_t n = static_cast<std::int64_t>(grad.size());
  constexpr std::int64_t kChunk = 4096;
  parallel_for((n + kChunk - 1) / kChunk, [&](std::int64_t chunk) {
    const std::int64_t lo = chunk * kChunk, hi = std::min(n, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) grad[i] = T(0);
    for (int b = 0; b < count; ++b) {
      const T* src = slots.data() + static_cast<std::ptrdiff_t>(b) * n;
      for (std::int64_t i = lo; i < hi; ++i) grad[i] += src[i];
    }
  });
}

template <typename T>
std::vector<T> DenseNet<T>::forward(std::span<const T> input, int batch, Mode mode, bool update_running_stats) {
  const PatchShape ps = config_.input_shape();
  if (batch < 1 || input.size() != static_cast<std::size_t>(batch) * ps.elements())
    throw InvalidArgument("forward: input size does not match batch x patch shape");
  batch_ = batch;
  cached_train_ = mode == Mode::kTrain;
  input_.assign(input.begin(), input.end());
  features_.assign(blocks_.size(), {});
  layer_norms_.assign(blocks_.size(), {});
  transition_norms_.assign(transitions_.size(), {});

  const int in_elems = static_cast<int>(ps.elements());
  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    const BlockDesc& block = blocks_[bi];
    const int spatial = block.shape.size();
    auto& feat = features_[bi];
    feat.resize(static_cast<std::size_t>(batch) * block.c_out * spatial);
    if (bi == 0) {
      const T* w = tensors_[stem_.weight].values.data();
      parallel_for(batch, [&](std::int64_t b) {
        conv_forward(stem_, w, input_.data() + b * in_elems,
                     feat.data() + static_cast<std::ptrdiff_t>(b) * block.c_out * spatial, scratch<T>());
      });
    } else {
      const TransitionDesc& tr = transitions_[bi - 1];
      const BlockDesc& prev = blocks_[bi - 1];
      const int prev_spatial = prev.shape.size();
      norm_forward(features_[bi - 1].data(), prev.c_out, prev_spatial, tr.norm, mode, update_running_stats,
                   transition_norms_[bi - 1]);
      const T* w = tensors_[tr.conv.weight].values.data();
      const double inv_pool = 1.0 / (tr.pool[0] * tr.pool[1] * tr.pool[2]);
      parallel_for(batch, [&](std::int64_t b) {
        Scratch<T>& sc = scratch<T>();
        sc.x.resize(static_cast<std::size_t>(prev.c_out) * prev_spatial);
        sc.y.resize(static_cast<std::size_t>(tr.conv.cout) * prev_spatial);
        activation(tr.norm, transition_norms_[bi - 1], static_cast<int>(b), prev_spatial, sc.x.data());
        conv_forward(tr.conv, w, sc.x.data(), sc.y.data(), sc);
        T* out = feat.data() + static_cast<std::ptrdiff_t>(b) * block.c_out * spatial;
        const Shape3& in = prev.shape;
        const Shape3& o = tr.out;
        for (int c = 0; c < tr.conv.cout; ++c)
          for (int z = 0; z < o.d; ++z)
            for (int y = 0; y < o.h; ++y)
              for (int x = 0; x < o.w; ++x) {
                double sum = 0.0;
                for (int dz = 0; dz < tr.pool[0]; ++dz)
                  for (int dy = 0; dy < tr.pool[1]; ++dy)
                    for (int dx = 0; dx < tr.pool[2]; ++dx)
                      sum += sc.y[((static_cast<std::size_t>(c) * in.d + z * tr.pool[0] + dz) * in.h + y * tr.pool[1] + dy) *
                                      in.w +
                                  x * tr.pool[2] + dx];
                out[(static_cast<std::size_t>(c) * o.d + z) * o.h * o.w + y * o.w + x] = static_cast<T>(sum * inv_pool);
              }
      });
    }
    layer_norms_[bi].resize(block.layers.size());
    for (std::size_t li = 0; li < block.layers.size(); ++li) {
      const LayerDesc& layer = block.layers[li];
      const int cin = layer.conv.cin;
      norm_forward(feat.data(), block.c_out, spatial, layer.norm, mode, update_running_stats, layer_norms_[bi][li]);
      const T* w = tensors_[layer.conv.weight].values.data();
      parallel_for(batch, [&](std::int64_t b) {
        Scratch<T>& sc = scratch<T>();
        sc.x.resize(static_cast<std::size_t>(cin) * spatial);
        activation(layer.norm, layer_norms_[bi][li], static_cast<int>(b), spatial, sc.x.data());
        conv_forward(layer.conv, w, sc.x.data(),
                     feat.data() + (static_cast<std::ptrdiff_t>(b) * block.c_out + cin) * spatial, sc);
      });
    }
  }

  const BlockDesc& last = blocks_.back();
  const int spatial = last.shape.size();
  const int channels = feature_channels_;
  norm_forward(features_.back().data(), last.c_out, spatial, final_norm_, mode, update_running_stats, final_cache_);
  pooled_.assign(static_cast<std::size_t>(batch) * channels, T(0));
  const T* gamma = tensors_[final_norm_.gamma].values.data();
  const T* beta = tensors_[final_norm_.beta].values.data();
  parallel_for(batch, [&](std::int64_t b) {
    for (int c = 0; c < channels; ++c) {
      const T* xh = final_cache_.xhat.data() + (b * channels + c) * spatial;
      double sum = 0.0;
      for (int s = 0; s < spatial; ++s) sum += std::max(T(0), gamma[c] * xh[s] + beta[c]);
      pooled_[b * channels + c] = static_cast<T>(sum / spatial);
    }
  });

  const int classes = config_.num_classes;
  const T* w = tensors_[classifier_weight_].values.data();
  const T* bias = tensors_[classifier_bias_].values.data();
  logits_.assign(static_cast<std::size_t>(batch) * classes, T(0));
  for (int b = 0; b < batch; ++b)
    for (int k = 0; k < classes; ++k) {
      double sum = bias[k];
      for (int c = 0; c < channels; ++c)
        sum += static_cast<double>(w[k * channels + c]) * pooled_[static_cast<std::size_t>(b) * channels + c];
      logits_[static_cast<std::size_t>(b) * classes + k] = static_cast<T>(sum);
    }
  return logits_;
}

template <typename T>
T DenseNet<T>::backward(std::span<const int> labels, std::vector<std::vector<T>>& grads) {
  if (!cached_train_) throw InvalidArgument("backward requires a preceding training-mode forward pass");
  const int batch = batch_;
  const int classes = config_.num_classes;
  if (labels.size() != static_cast<std::size_t>(batch)) throw InvalidArgument("backward: label count != batch");
  grads.resize(tensors_.size());
  for (std::size_t t = 0; t < tensors_.size(); ++t) grads[t].assign(tensors_[t].values.size(), T(0));

  // Head.
  const std::vector<T> probs = softmax<T>(logits_, classes);
  double loss = 0.0;
  std::vector<T> dlogits(probs.size());
  for (int b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= classes) throw InvalidArgument("backward: label out of range");
    const T* row = logits_.data() + static_cast<std::size_t>(b) * classes;
    const T mx = *std::max_element(row, row + classes);
    double sum = 0.0;
    for (int k = 0; k < classes; ++k) sum += std::exp(static_cast<double>(row[k] - mx));
    loss += std::log(sum) - static_cast<double>(row[y] - mx);
    for (int k = 0; k < classes; ++k)
      dlogits[b * classes + k] = static_cast<T>((probs[b * classes + k] - (k == y ? 1.0 : 0.0)) / batch);
  }
  loss /= batch;

  const int channels = feature_channels_;
  const T* w = tensors_[classifier_weight_].values.data();
  std::vector<T>& dw = grads[classifier_weight_];
  std::vector<T>& db = grads[classifier_bias_];
  for (int k = 0; k < classes; ++k) {
    double sb = 0.0;
    for (int b = 0; b < batch; ++b) sb += dlogits[b * classes + k];
    db[k] = static_cast<T>(sb);
    for (int c = 0; c < channels; ++c) {
      double s = 0.0;
      for (int b = 0; b < batch; ++b)
        s += static_cast<double>(dlogits[b * classes + k]) * pooled_[static_cast<std::size_t>(b) * channels + c];
      dw[k * channels + c] = static_cast<T>(s);
    }
  }

  const BlockDesc& last = blocks_.back();
  int spatial = last.shape.size();
  std::vector<T> dfeat(static_cast<std::size_t>(batch) * last.c_out * spatial, T(0));
  {
    std::vector<T> dz(static_cast<std::size_t>(batch) * channels * spatial);
    const T* gamma = tensors_[final_norm_.gamma].values.data();
    const T* beta = tensors_[final_norm_.beta].values.data();
    parallel_for(batch, [&](std::int64_t b) {
      for (int c = 0; c < channels; ++c) {
        double dp = 0.0;
        for (int k = 0; k < classes; ++k) dp += static_cast<double>(dlogits[b * classes + k]) * w[k * channels + c];
        const T g = static_cast<T>(dp / spatial);
        const std::ptrdiff_t off = (b * channels + c) * spatial;
        for (int s = 0; s < spatial; ++s)
          dz[off + s] = gamma[c] * final_cache_.xhat[off + s] + beta[c] > T(0) ? g : T(0);
      }
    });
    norm_backward(final_norm_, final_cache_, dz.data(), dfeat.data(), last.c_out, spatial, grads);
  }

  std::vector<T> slots;
  std::vector<T> dz;
  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const BlockDesc& block = blocks_[bi];
    spatial = block.shape.size();
    for (std::size_t li = block.layers.size(); li-- > 0;) {
      const LayerDesc& layer = block.layers[li];
      const int cin = layer.conv.cin;
      const std::size_t wn = tensors_[layer.conv.weight].values.size();
      slots.resize(wn * batch);
      dz.resize(static_cast<std::size_t>(batch) * cin * spatial);
      const T* wt = tensors_[layer.conv.weight].values.data();
      const std::vector<T> wflip = flipped_kernel(layer.conv, wt);
      const NormCache& cache = layer_norms_[bi][li];
      const T* gamma = tensors_[layer.norm.gamma].values.data();
      const T* beta = tensors_[layer.norm.beta].values.data();
      parallel_for(batch, [&](std::int64_t b) {
        Scratch<T>& sc = scratch<T>();
        sc.x.resize(static_cast<std::size_t>(cin) * spatial);
        activation(layer.norm, cache, static_cast<int>(b), spatial, sc.x.data());
        T* dzb = dz.data() + b * cin * spatial;
        conv_backward(layer.conv, wt, wflip.data(), sc.x.data(), dfeat.data() + (b * block.c_out + cin) * spatial,
                      slots.data() + b * wn, dzb, sc);
        for (int c = 0; c < cin; ++c) {
          const T* xh = cache.xhat.data() + (b * cin + c) * spatial;
          T* d = dzb + static_cast<std::ptrdiff_t>(c) * spatial;
          for (int s = 0; s < spatial; ++s)
            if (!(gamma[c] * xh[s] + beta[c] > T(0))) d[s] = T(0);
        }
      });
      reduce_slots(slots, batch, grads[layer.conv.weight]);
      norm_backward(layer.norm, cache, dz.data(), dfeat.data(), block.c_out, spatial, grads);
    }

    if (bi == 0) {
      const std::size_t wn = tensors_[stem_.weight].values.size();
      slots.resize(wn * batch);
      const T* wt = tensors_[stem_.weight].values.data();
      const int in_elems = stem_.in.size();
      parallel_for(batch, [&](std::int64_t b) {
        Scratch<T>& sc = scratch<T>();
        conv_backward<T>(stem_, wt, nullptr, input_.data() + b * in_elems, dfeat.data() + b * block.c_out * spatial,
                         slots.data() + b * wn, nullptr, sc);
      });
      reduce_slots(slots, batch, grads[stem_.weight]);
      break;
    }

    const TransitionDesc& tr = transitions_[bi - 1];
    const BlockDesc& prev = blocks_[bi - 1];
    const int prev_spatial = prev.shape.size();
    const int cprev = prev.c_out;
    const std::size_t wn = tensors_[tr.conv.weight].values.size();
    slots.resize(wn * batch);
    dz.resize(static_cast<std::size_t>(batch) * cprev * prev_spatial);
    const T* wt = tensors_[tr.conv.weight].values.data();
    const NormCache& cache = transition_norms_[bi - 1];
    const T* gamma = tensors_[tr.norm.gamma].values.data();
    const T* beta = tensors_[tr.norm.beta].values.data();
    const T inv_pool = static_cast<T>(1.0 / (tr.pool[0] * tr.pool[1] * tr.pool[2]));
    parallel_for(batch, [&](std::int64_t b) {
      Scratch<T>& sc = scratch<T>();
      const Shape3& in = prev.shape;
      const Shape3& o = tr.out;
      sc.dy.assign(static_cast<std::size_t>(tr.conv.cout) * prev_spatial, T(0));
      const T* src = dfeat.data() + b * block.c_out * spatial;
      for (int c = 0; c < tr.conv.cout; ++c)
        for (int z = 0; z < o.d * tr.pool[0]; ++z)
          for (int y = 0; y < o.h * tr.pool[1]; ++y)
            for (int x = 0; x < o.w * tr.pool[2]; ++x)
              sc.dy[((static_cast<std::size_t>(c) * in.d + z) * in.h + y) * in.w + x] =
                  src[(static_cast<std::size_t>(c) * o.d + z / tr.pool[0]) * o.h * o.w + (y / tr.pool[1]) * o.w +
                      x / tr.pool[2]] *
                  inv_pool;
      sc.x.resize(static_cast<std::size_t>(cprev) * prev_spatial);
      activation(tr.norm, cache, static_cast<int>(b), prev_spatial, sc.x.data());
      T* dzb = dz.data() + b * cprev * prev_spatial;
      conv_backward(tr.conv, wt, wt, sc.x.data(), sc.dy.data(), slots.data() + b * wn, dzb, sc);
      for (int c = 0; c < cprev; ++c) {
        const T* xh = cache.xhat.data() + (b * cprev + c) * prev_spatial;
        T* d = dzb + static_cast<std::ptrdiff_t>(c) * prev_spatial;
        for (int s = 0; s < prev_spatial; ++s)
          if (!(gamma[c] * xh[s] + beta[c] > T(0))) d[s] = T(0);
      }
    });
    reduce_slots(slots, batch, grads[tr.conv.weight]);
    std::vector<T> dprev(static_cast<std::size_t>(batch) * cprev * prev_spatial, T(0));
    norm_backward(tr.norm, cache, dz.data(), dprev.data(), cprev, prev_spatial, grads);
    dfeat.swap(dprev);
  }
  return static_cast<T>(loss);
}

template class DenseNet<float>;
template class DenseNet<double>;

}  // namespace lungtex
