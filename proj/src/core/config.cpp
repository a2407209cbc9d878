#include "core/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "core/error.hpp"
#include "core/random.hpp"

namespace lungtex {

JsonFields::JsonFields(const Json& object, std::string where) : object_(object), where_(std::move(where)) {
  if (!object_.is_object())
    throw InvalidArgument("config: '" + (where_.empty() ? std::string("<root>") : where_) + "' must be an object");
}

const Json* JsonFields::get(const std::string& key) {
  const auto it = object_.find(key);
  if (it == object_.end()) return nullptr;
  seen_.push_back(key);
  return &*it;
}

void JsonFields::done() const {
  for (auto it = object_.begin(); it != object_.end(); ++it)
    if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
      throw InvalidArgument("config: unknown key '" + path(it.key()) + "'");
}

void from_json_value(const Json& j, const std::string& where, int& out) {
  if (!j.is_number_integer()) throw InvalidArgument("config: '" + where + "' must be an integer");
  const auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw InvalidArgument("config: '" + where + "' is out of range");
  out = static_cast<int>(v);
}

void from_json_value(const Json& j, const std::string& where, std::int64_t& out) {
  if (!j.is_number_integer() || (j.is_number_unsigned() && j.get<std::uint64_t>() > INT64_MAX))
    throw InvalidArgument("config: '" + where + "' must be an integer");
  out = j.get<std::int64_t>();
}

void from_json_value(const Json& j, const std::string& where, std::uint64_t& out) {
  if (!j.is_number_unsigned()) throw InvalidArgument("config: '" + where + "' must be a non-negative integer");
  out = j.get<std::uint64_t>();
}

void from_json_value(const Json& j, const std::string& where, double& out) {
  if (!j.is_number()) throw InvalidArgument("config: '" + where + "' must be a number");
  out = j.get<double>();
}

void from_json_value(const Json& j, const std::string& where, bool& out) {
  if (!j.is_boolean()) throw InvalidArgument("config: '" + where + "' must be true or false");
  out = j.get<bool>();
}

void from_json_value(const Json& j, const std::string& where, std::string& out) {
  if (!j.is_string()) throw InvalidArgument("config: '" + where + "' must be a string");
  out = j.get<std::string>();
}

void from_json_value(const Json& j, const std::string& where, Dimensionality& out) {
  std::string s;
  from_json_value(j, where, s);
  const auto d = dimensionality_from_name(s);
  if (!d) throw InvalidArgument("config: '" + where + "' must be one of 2D, 2.5D, 3D (got '" + s + "')");
  out = *d;
}

void from_json_value(const Json& j, const std::string& where, TextureLabel& out) {
  std::string s;
  from_json_value(j, where, s);
  const auto l = label_from_name(s);
  if (!l) throw InvalidArgument("config: '" + where + "' must be a texture name (got '" + s + "')");
  out = *l;
}

Json to_json(const Grid& g) { return Json{{"dims", g.dims}, {"spacing_mm", g.spacing_mm}}; }

Json to_json(const PatchSpec& s) {
  return Json{{"size_px", s.size_px},
              {"dimensionality", std::string(name_of(s.dimensionality))},
              {"selection_radius_mm", s.selection_radius_mm},
              {"min_fill_factor", s.min_fill_factor},
              {"patches_per_class", s.patches_per_class},
              {"rng_seed", s.rng_seed}};
}

Json to_json(const ModelConfig& m) {
  return Json{{"dimensionality", std::string(name_of(m.dimensionality))},
              {"input_size_px", m.input_size_px},
              {"block_layers", m.block_layers},
              {"initial_filters", m.initial_filters},
              {"growth_rate", m.growth_rate},
              {"num_classes", m.num_classes},
              {"stem_stride", m.stem_stride},
              {"hu_window", m.hu_window}};
}

Json to_json(const AugmentConfig& a) {
  return Json{{"enabled", a.enabled},
              {"rotation_deg_range", a.rotation_deg_range},
              {"zoom_range", a.zoom_range},
              {"flip_probability", a.flip_probability}};
}

Json to_json(const TrainConfig& t) {
  return Json{{"batch_size", t.batch_size},         {"patience_epochs", t.patience_epochs},
              {"max_epochs", t.max_epochs},         {"learning_rate", t.learning_rate},
              {"momentum", t.momentum},             {"augment", to_json(t.augment)},
              {"rng_seed", t.rng_seed}};
}

Json to_json(const ReconstructionConfig& r) { return Json{{"stride", r.stride}, {"batch_patches", r.batch_patches}}; }

Json to_json(const HyperPoint& p) {
  return Json{{"dimensionality", std::string(name_of(p.dimensionality))},
              {"size_px", p.size_px},
              {"selection_radius_mm", p.selection_radius_mm},
              {"min_fill_factor", p.min_fill_factor},
              {"patches_per_class", p.patches_per_class},
              {"corrupt_labels", p.corrupt_labels}};
}

Json to_json(const HyperGrid& g) {
  Json dims = Json::array();
  for (auto d : g.dimensionalities) dims.push_back(std::string(name_of(d)));
  Json points = Json::array();
  for (const auto& p : g.points) points.push_back(to_json(p));
  return Json{{"dimensionalities", dims},      {"sizes", g.sizes},
              {"radii_mm", g.radii_mm},        {"fill_factors", g.fill_factors},
              {"patches_per_class", g.patches_per_class}, {"points", points}};
}

Json to_json(const TextureParams& t) {
  return Json{{"base_hu", t.base_hu},
              {"noise_hu", t.noise_hu},
              {"scale_vox", t.scale_vox},
              {"feature_hu", t.feature_hu},
              {"feature_width_vox", t.feature_width_vox}};
}

Json to_json(const LungThreshold& t) {
  return Json{{"hu_threshold", t.hu_threshold}, {"min_component_voxels", t.min_component_voxels}};
}

Grid grid_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  Grid g;
  f.require("dims", g.dims);
  f.require("spacing_mm", g.spacing_mm);
  f.done();
  g.validate();
  return g;
}

PatchSpec patch_spec_from_json(const Json& j, const std::string& where, PatchSpec base) {
  JsonFields f(j, where);
  f.read("size_px", base.size_px);
  f.read("dimensionality", base.dimensionality);
  f.read("selection_radius_mm", base.selection_radius_mm);
  f.read("min_fill_factor", base.min_fill_factor);
  f.read("patches_per_class", base.patches_per_class);
  f.read("rng_seed", base.rng_seed);
  f.done();
  base.validate();
  return base;
}

ModelConfig model_config_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  ModelConfig m;
  f.require("dimensionality", m.dimensionality);
  f.require("input_size_px", m.input_size_px);
  m.block_layers = default_block_layers(m.dimensionality, m.input_size_px);
  f.read("block_layers", m.block_layers);
  f.read("initial_filters", m.initial_filters);
  f.read("growth_rate", m.growth_rate);
  f.read("num_classes", m.num_classes);
  f.read("stem_stride", m.stem_stride);
  f.read("hu_window", m.hu_window);
  f.done();
  m.validate();
  return m;
}

AugmentConfig augment_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  AugmentConfig a;
  f.read("enabled", a.enabled);
  f.read("rotation_deg_range", a.rotation_deg_range);
  f.read("zoom_range", a.zoom_range);
  f.read("flip_probability", a.flip_probability);
  f.done();
  a.validate();
  return a;
}

TrainConfig train_config_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  TrainConfig t;
  f.read("batch_size", t.batch_size);
  f.read("patience_epochs", t.patience_epochs);
  f.read("max_epochs", t.max_epochs);
  f.read("learning_rate", t.learning_rate);
  f.read("momentum", t.momentum);
  if (const Json* a = f.get("augment")) t.augment = augment_from_json(*a, f.path("augment"));
  f.read("rng_seed", t.rng_seed);
  f.done();
  t.validate();
  return t;
}

ReconstructionConfig reconstruction_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  ReconstructionConfig r;
  f.read("stride", r.stride);
  f.read("batch_patches", r.batch_patches);
  f.done();
  r.validate();
  return r;
}

HyperPoint hyper_point_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  HyperPoint p;
  f.require("dimensionality", p.dimensionality);
  f.require("size_px", p.size_px);
  f.require("selection_radius_mm", p.selection_radius_mm);
  f.require("min_fill_factor", p.min_fill_factor);
  f.require("patches_per_class", p.patches_per_class);
  f.read("corrupt_labels", p.corrupt_labels);
  f.done();
  return p;
}

HyperGrid hypergrid_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  std::string preset = "desk";
  f.read("preset", preset);
  HyperGrid g;
  if (preset == "desk") {
    g = HyperGrid::desk();
  } else if (preset == "full") {
    g = HyperGrid::full();
  } else {
    throw InvalidArgument("config: '" + f.path("preset") + "' must be 'desk' or 'full'");
  }
  f.read("dimensionalities", g.dimensionalities);
  f.read("sizes", g.sizes);
  f.read("radii_mm", g.radii_mm);
  f.read("fill_factors", g.fill_factors);
  f.read("patches_per_class", g.patches_per_class);
  if (const Json* pts = f.get("points")) {
    if (!pts->is_array()) throw InvalidArgument("config: '" + f.path("points") + "' must be an array");
    for (std::size_t i = 0; i < pts->size(); ++i)
      g.points.push_back(hyper_point_from_json((*pts)[i], f.path("points") + "[" + std::to_string(i) + "]"));
  }
  f.done();
  g.validate();
  return g;
}

LungThreshold lung_threshold_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  LungThreshold t;
  f.read("hu_threshold", t.hu_threshold);
  f.read("min_component_voxels", t.min_component_voxels);
  f.done();
  if (t.min_component_voxels < 1) throw InvalidArgument("config: lung_mask.min_component_voxels must be >= 1");
  return t;
}

namespace {

TextureParams texture_from_json(const Json& j, const std::string& where, TextureParams t) {
  JsonFields f(j, where);
  f.read("base_hu", t.base_hu);
  f.read("noise_hu", t.noise_hu);
  f.read("scale_vox", t.scale_vox);
  f.read("feature_hu", t.feature_hu);
  f.read("feature_width_vox", t.feature_width_vox);
  f.done();
  return t;
}

std::vector<Compartment> compartments_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw InvalidArgument("config: '" + where + "' must be an array");
  std::vector<Compartment> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    JsonFields f(j[i], where + "[" + std::to_string(i) + "]");
    Compartment c;
    f.require("label", c.label);
    f.require("fraction", c.fraction);
    f.done();
    out.push_back(c);
  }
  return out;
}

PhantomCohortConfig phantom_from_json(const Json& j, const std::string& where) {
  JsonFields f(j, where);
  PhantomCohortConfig p;
  f.read("dims", p.grid.dims);
  f.read("spacing_mm", p.grid.spacing_mm);
  f.read("scan_count", p.scan_count);
  f.read("scan_prefix", p.scan_prefix);
  if (const Json* c = f.get("compartments")) p.compartments = compartments_from_json(*c, f.path("compartments"));
  if (const Json* t = f.get("textures")) {
    JsonFields tf(*t, f.path("textures"));
    for (TextureLabel l : kAllLabels)
      if (const Json* one = tf.get(std::string(name_of(l))))
        p.textures[index_of(l)] = texture_from_json(*one, tf.path(std::string(name_of(l))), p.textures[index_of(l)]);
    tf.done();
  }
  f.read("hu_jitter", p.hu_jitter);
  f.read("random_start_angle", p.random_start_angle);
  f.read("burden_jitter", p.burden_jitter);
  f.done();
  p.validate();
  return p;
}

void reject_nested_seed(const Json& root, const char* section) {
  if (root.contains(section) && root[section].is_object() && root[section].contains("rng_seed"))
    throw InvalidArgument(std::string("config: unknown key '") + section +
                          ".rng_seed' (randomness derives from the top-level rng_seed)");
}

}  // namespace

PhantomSpec PhantomCohortConfig::scan_spec(int index, std::uint64_t run_seed) const {
  PhantomSpec s;
  s.grid = grid;
  s.compartments = compartments;
  s.textures = textures;
  s.hu_jitter = hu_jitter;
  s.rng_seed = derive_seed(derive_seed(run_seed, "phantom"), static_cast<std::uint64_t>(index));
  if (!random_start_angle) s.start_angle_deg = 0.0;
  if (burden_jitter > 0.0) {
    const std::uint64_t seed = derive_seed(run_seed, "burden");
    for (std::size_t c = 0; c < s.compartments.size(); ++c)
      s.compartments[c].fraction *= 1.0 + burden_jitter * (2.0 * counter_uniform(seed, static_cast<std::uint64_t>(index), c) - 1.0);
  }
  return s;
}

void PhantomCohortConfig::validate() const {
  if (!(burden_jitter >= 0.0 && burden_jitter < 1.0))
    throw InvalidArgument("config: phantom.burden_jitter must lie in [0,1)");
  double total = 0.0;
  for (const auto& c : compartments) total += c.fraction;
  if (total * (1.0 + burden_jitter) >= 1.0)
    throw InvalidArgument("config: phantom compartments can exceed the lung volume under burden_jitter");
  if (scan_count < 1) throw InvalidArgument("config: phantom.scan_count must be >= 1");
  if (scan_prefix.empty()) throw InvalidArgument("config: phantom.scan_prefix must not be empty");
  scan_spec(0, 0).validate();
}

std::string PhantomCohortConfig::scan_id(int index) const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", index);
  return scan_prefix + "_" + buf;
}

ModelConfig ModelSection::for_spec(const PatchSpec& spec) const {
  ModelConfig m;
  m.dimensionality = spec.dimensionality;
  m.input_size_px = spec.size_px;
  m.block_layers = block_layers ? *block_layers : default_block_layers(spec.dimensionality, spec.size_px);
  m.initial_filters = initial_filters;
  m.growth_rate = growth_rate;
  m.stem_stride = stem_stride;
  m.hu_window = hu_window;
  return m;
}

void RunConfig::validate() const {
  if (threads < 0) throw InvalidArgument("config: threads must be >= 0");
  phantom.validate();
  patch_spec.validate();
  if (!(eval_sampling.min_fill_factor > 0.0 && eval_sampling.min_fill_factor <= 1.0))
    throw InvalidArgument("config: eval_sampling.min_fill_factor must lie in (0,1]");
  if (eval_sampling.patches_per_class && *eval_sampling.patches_per_class < 1)
    throw InvalidArgument("config: eval_sampling.patches_per_class must be >= 1");
  if (split.names.empty() || split.names.size() != split.fractions.size())
    throw InvalidArgument("config: split.names and split.fractions must have the same non-zero length");
  for (std::size_t i = 0; i < split.names.size(); ++i)
    for (std::size_t k = i + 1; k < split.names.size(); ++k)
      if (split.names[i] == split.names[k]) throw InvalidArgument("config: duplicate split name '" + split.names[i] + "'");
  if (std::abs(std::accumulate(split.fractions.begin(), split.fractions.end(), 0.0) - 1.0) > 1e-9)
    throw InvalidArgument("config: split.fractions must sum to 1");
  model_config().validate();
  train.validate();
  reconstruction.validate();
  hypergrid.validate();
  if (hypersearch.max_epochs < 0 || hypersearch.patience_epochs < 0)
    throw InvalidArgument("config: hypersearch epoch overrides must be >= 0");
  search_config().validate();
}

std::uint64_t RunConfig::seed_for(const std::string& purpose) const { return derive_seed(rng_seed, purpose); }

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.rng_seed = seed_for("augment");
  return t;
}

SearchConfig RunConfig::search_config() const {
  SearchConfig s;
  s.folds = hypersearch.folds;
  s.validation_fill = hypersearch.validation_fill;
  s.initial_filters = model.initial_filters;
  s.growth_rate = model.growth_rate;
  s.stem_stride = model.stem_stride;
  s.block_layers = model.block_layers;
  s.hu_window = model.hu_window;
  s.train = train;
  if (hypersearch.max_epochs > 0) s.train.max_epochs = hypersearch.max_epochs;
  if (hypersearch.patience_epochs > 0) s.train.patience_epochs = hypersearch.patience_epochs;
  s.rng_seed = seed_for("hypersearch");
  return s;
}

RunConfig run_config_from_json(const Json& j) {
  reject_nested_seed(j, "patch_spec");
  reject_nested_seed(j, "train");
  JsonFields f(j, "");
  RunConfig c;
  f.read("rng_seed", c.rng_seed);
  f.read("threads", c.threads);
  if (const Json* p = f.get("paths")) {
    JsonFields pf(*p, "paths");
    pf.read("manifest", c.paths.manifest);
    pf.read("clinical_csv", c.paths.clinical_csv);
    pf.read("scores_csv", c.paths.scores_csv);
    pf.done();
  }
  if (const Json* p = f.get("phantom")) c.phantom = phantom_from_json(*p, "phantom");
  if (const Json* p = f.get("split")) {
    JsonFields sf(*p, "split");
    sf.read("names", c.split.names);
    sf.read("fractions", c.split.fractions);
    sf.done();
  }
  if (const Json* p = f.get("patch_spec")) c.patch_spec = patch_spec_from_json(*p, "patch_spec");
  if (const Json* p = f.get("eval_sampling")) {
    JsonFields ef(*p, "eval_sampling");
    ef.read("min_fill_factor", c.eval_sampling.min_fill_factor);
    ef.read("patches_per_class", c.eval_sampling.patches_per_class);
    ef.done();
  }
  if (const Json* p = f.get("model")) {
    JsonFields mf(*p, "model");
    mf.read("block_layers", c.model.block_layers);
    mf.read("initial_filters", c.model.initial_filters);
    mf.read("growth_rate", c.model.growth_rate);
    mf.read("stem_stride", c.model.stem_stride);
    mf.read("hu_window", c.model.hu_window);
    mf.done();
  }
  if (const Json* p = f.get("train")) c.train = train_config_from_json(*p, "train");
  if (const Json* p = f.get("reconstruction")) c.reconstruction = reconstruction_from_json(*p, "reconstruction");
  if (const Json* p = f.get("hypergrid")) c.hypergrid = hypergrid_from_json(*p, "hypergrid");
  if (const Json* p = f.get("hypersearch")) {
    JsonFields hf(*p, "hypersearch");
    hf.read("folds", c.hypersearch.folds);
    hf.read("validation_fill", c.hypersearch.validation_fill);
    hf.read("max_epochs", c.hypersearch.max_epochs);
    hf.read("patience_epochs", c.hypersearch.patience_epochs);
    hf.done();
  }
  if (const Json* p = f.get("lung_mask")) c.lung_mask = lung_threshold_from_json(*p, "lung_mask");
  if (const Json* p = f.get("classify")) {
    JsonFields cf(*p, "classify");
    cf.read("splits", c.classify.splits);
    cf.read("scan_ids", c.classify.scan_ids);
    cf.done();
  }
  f.done();
  c.patch_spec.rng_seed = c.seed_for("sample");
  c.validate();
  return c;
}

Json to_json(const RunConfig& c) {
  Json textures = Json::object();
  for (TextureLabel l : kAllLabels) textures[std::string(name_of(l))] = to_json(c.phantom.textures[index_of(l)]);
  Json compartments = Json::array();
  for (const auto& comp : c.phantom.compartments)
    compartments.push_back(Json{{"label", std::string(name_of(comp.label))}, {"fraction", comp.fraction}});
  Json patch_spec = to_json(c.patch_spec);
  patch_spec.erase("rng_seed");
  Json train = to_json(c.train);
  train.erase("rng_seed");
  Json model{{"initial_filters", c.model.initial_filters},
             {"growth_rate", c.model.growth_rate},
             {"stem_stride", c.model.stem_stride},
             {"hu_window", c.model.hu_window}};
  if (c.model.block_layers) model["block_layers"] = *c.model.block_layers;
  Json eval{{"min_fill_factor", c.eval_sampling.min_fill_factor}};
  if (c.eval_sampling.patches_per_class) eval["patches_per_class"] = *c.eval_sampling.patches_per_class;
  Json hypergrid = to_json(c.hypergrid);
  return Json{{"rng_seed", c.rng_seed},
              {"threads", c.threads},
              {"paths",
               {{"manifest", c.paths.manifest}, {"clinical_csv", c.paths.clinical_csv}, {"scores_csv", c.paths.scores_csv}}},
              {"phantom",
               {{"dims", c.phantom.grid.dims},
                {"spacing_mm", c.phantom.grid.spacing_mm},
                {"scan_count", c.phantom.scan_count},
                {"scan_prefix", c.phantom.scan_prefix},
                {"compartments", compartments},
                {"textures", textures},
                {"hu_jitter", c.phantom.hu_jitter},
                {"random_start_angle", c.phantom.random_start_angle},
                {"burden_jitter", c.phantom.burden_jitter}}},
              {"split", {{"names", c.split.names}, {"fractions", c.split.fractions}}},
              {"patch_spec", patch_spec},
              {"eval_sampling", eval},
              {"model", model},
              {"train", train},
              {"reconstruction", to_json(c.reconstruction)},
              {"hypergrid", hypergrid},
              {"hypersearch",
               {{"folds", c.hypersearch.folds},
                {"validation_fill", c.hypersearch.validation_fill},
                {"max_epochs", c.hypersearch.max_epochs},
                {"patience_epochs", c.hypersearch.patience_epochs}}},
              {"lung_mask", to_json(c.lung_mask)},
              {"classify", {{"splits", c.classify.splits}, {"scan_ids", c.classify.scan_ids}}}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace lungtex
