#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/augment.hpp"
#include "core/hypersearch.hpp"
#include "core/network.hpp"
#include "core/patch.hpp"
#include "core/phantom.hpp"
#include "core/reconstruct.hpp"
#include "core/train.hpp"
#include "core/volume.hpp"

namespace lungtex {

using Json = nlohmann::ordered_json;

// Strict reader for one JSON object: every key must be consumed, otherwise
// done() throws InvalidArgument naming the unknown key.
class JsonFields {
 public:
  JsonFields(const Json& object, std::string where);

  bool has(const std::string& key) const { return object_.contains(key); }
  // Marks the key consumed; nullptr when absent.
  const Json* get(const std::string& key);
  template <typename T>
  void read(const std::string& key, T& out);
  template <typename T>
  void require(const std::string& key, T& out) {
    if (!has(key)) throw InvalidArgument("config: missing required key '" + path(key) + "'");
    read(key, out);
  }
  void done() const;
  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  const Json& object_;
  std::string where_;
  std::vector<std::string> seen_;
};

// Typed conversion with schema errors reported as InvalidArgument.
void from_json_value(const Json& j, const std::string& where, int& out);
void from_json_value(const Json& j, const std::string& where, std::int64_t& out);
void from_json_value(const Json& j, const std::string& where, std::uint64_t& out);
void from_json_value(const Json& j, const std::string& where, double& out);
void from_json_value(const Json& j, const std::string& where, bool& out);
void from_json_value(const Json& j, const std::string& where, std::string& out);
void from_json_value(const Json& j, const std::string& where, Dimensionality& out);
void from_json_value(const Json& j, const std::string& where, TextureLabel& out);
template <typename T>
void from_json_value(const Json& j, const std::string& where, std::vector<T>& out) {
  if (!j.is_array()) throw InvalidArgument("config: '" + where + "' must be an array");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    T v{};
    from_json_value(j[i], where + "[" + std::to_string(i) + "]", v);
    out.push_back(std::move(v));
  }
}
template <typename T, std::size_t N>
void from_json_value(const Json& j, const std::string& where, std::array<T, N>& out) {
  if (!j.is_array() || j.size() != N)
    throw InvalidArgument("config: '" + where + "' must be an array of " + std::to_string(N) + " values");
  for (std::size_t i = 0; i < N; ++i) from_json_value(j[i], where + "[" + std::to_string(i) + "]", out[i]);
}
template <typename T>
void from_json_value(const Json& j, const std::string& where, std::optional<T>& out) {
  T v{};
  from_json_value(j, where, v);
  out = std::move(v);
}

template <typename T>
void JsonFields::read(const std::string& key, T& out) {
  if (const Json* j = get(key)) from_json_value(*j, path(key), out);
}

Json to_json(const Grid& g);
Json to_json(const PatchSpec& s);
Json to_json(const ModelConfig& m);
Json to_json(const AugmentConfig& a);
Json to_json(const TrainConfig& t);
Json to_json(const ReconstructionConfig& r);
Json to_json(const HyperPoint& p);
Json to_json(const HyperGrid& g);
Json to_json(const TextureParams& t);
Json to_json(const LungThreshold& t);

Grid grid_from_json(const Json& j, const std::string& where);
PatchSpec patch_spec_from_json(const Json& j, const std::string& where, PatchSpec base = {});
ModelConfig model_config_from_json(const Json& j, const std::string& where);
AugmentConfig augment_from_json(const Json& j, const std::string& where);
TrainConfig train_config_from_json(const Json& j, const std::string& where);
ReconstructionConfig reconstruction_from_json(const Json& j, const std::string& where);
HyperPoint hyper_point_from_json(const Json& j, const std::string& where);
// Accepts {"preset": "desk"|"full"} plus optional axis/points overrides.
HyperGrid hypergrid_from_json(const Json& j, const std::string& where);
LungThreshold lung_threshold_from_json(const Json& j, const std::string& where);

// ---- Run configuration of the command-line pipeline ----

struct PhantomCohortConfig {
  Grid grid{{96, 96, 96}, {1.0, 1.0, 1.0}};
  int scan_count = 12;
  std::string scan_prefix = "phantom";
  std::vector<Compartment> compartments = {{TextureLabel::kGroundGlass, 0.15},
                                           {TextureLabel::kGroundGlassReticulation, 0.15},
                                           {TextureLabel::kHoneycombing, 0.15},
                                           {TextureLabel::kEmphysema, 0.15}};
  std::array<TextureParams, kNumClasses> textures = default_textures();
  double hu_jitter = 0.0;
  bool random_start_angle = true;
  // Per-scan relative scaling of every compartment fraction, uniform in 1 +- burden_jitter.
  double burden_jitter = 0.0;

  // Spec of scan `index`; seeds fan out from the run seed.
  PhantomSpec scan_spec(int index, std::uint64_t run_seed) const;
  std::string scan_id(int index) const;
  void validate() const;
};

struct SplitConfig {
  std::vector<std::string> names = {"train", "validation", "test"};
  std::vector<double> fractions = {0.7, 0.15, 0.15};
};

// Sampling of validation/test patch sets.
struct EvalSamplingConfig {
  double min_fill_factor = 0.5;
  std::optional<int> patches_per_class;  // defaults to the training spec's
};

// Network width; dimensionality and input size come from patch_spec.
struct ModelSection {
  std::optional<std::vector<int>> block_layers;
  int initial_filters = 64;
  int growth_rate = 32;
  int stem_stride = 1;
  std::array<double, 2> hu_window = {-1024.0, 600.0};

  ModelConfig for_spec(const PatchSpec& spec) const;
};

struct HypersearchSection {
  int folds = 5;
  double validation_fill = 0.5;
  int max_epochs = 0;       // 0: use train.max_epochs
  int patience_epochs = 0;  // 0: use train.patience_epochs
};

struct PathsConfig {
  std::string manifest;      // default <out>/manifest.json
  std::string clinical_csv;  // required by correlate
  std::string scores_csv;    // evaluate reads this instead of scoring patch sets when set
};

struct ClassifySection {
  std::vector<std::string> splits = {"test"};
  std::vector<std::string> scan_ids;  // overrides splits when non-empty
};

struct RunConfig {
  std::uint64_t rng_seed = 0;
  int threads = 0;
  PathsConfig paths;
  PhantomCohortConfig phantom;
  SplitConfig split;
  PatchSpec patch_spec;
  EvalSamplingConfig eval_sampling;
  ModelSection model;
  TrainConfig train;
  ReconstructionConfig reconstruction;
  HyperGrid hypergrid = HyperGrid::desk();
  HypersearchSection hypersearch;
  LungThreshold lung_mask;
  ClassifySection classify;

  void validate() const;
  // Seed of a named purpose ("sample", "init", "augment", "mc", ...).
  std::uint64_t seed_for(const std::string& purpose) const;
  ModelConfig model_config() const { return model.for_spec(patch_spec); }
  TrainConfig train_config() const;
  SearchConfig search_config() const;
};

RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& c);
RunConfig load_run_config(const std::string& path);

}  // namespace lungtex
