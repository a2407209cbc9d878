#include "lungtex/lungtex.h"

#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "core/atlas.hpp"
#include "core/clinical.hpp"
#include "core/config.hpp"
#include "core/error.hpp"
#include "core/evaluate.hpp"
#include "core/io.hpp"
#include "core/parallel.hpp"
#include "core/phantom.hpp"
#include "core/pipeline.hpp"
#include "core/random.hpp"
#include "core/reconstruct.hpp"
#include "core/rvol.hpp"
#include "core/stats.hpp"
#include "core/train.hpp"

using namespace lungtex;

struct lt_config {
  RunConfig cfg;
};
struct lt_volume {
  Volume v;
};
struct lt_mask {
  lt_mask_kind kind;
  // Stored as a label mask; the kind decides code validation and file I/O.
  Grid grid;
  std::vector<std::uint8_t> data;
};
struct lt_atlas {
  std::vector<ScanInput> scans;
  Atlas atlas;
  bool dirty = true;
  const Atlas& built() {
    if (dirty) {
      atlas = build_atlas(scans);
      dirty = false;
    }
    return atlas;
  }
};
struct lt_patchset {
  PatchSet set;
};
struct lt_model {
  Model model;
};

namespace {

thread_local std::string g_last_error;

lt_status fail(lt_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename Fn>
lt_status guard(Fn&& fn) {
  try {
    fn();
    return LT_OK;
  } catch (const InvalidArgument& e) {
    return fail(LT_ERR_INVALID_ARGUMENT, e.what());
  } catch (const ChecksumError& e) {
    return fail(LT_ERR_CHECKSUM, e.what());
  } catch (const FormatError& e) {
    return fail(LT_ERR_FORMAT, e.what());
  } catch (const IoError& e) {
    return fail(LT_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(LT_ERR_IO, e.what());
  } catch (const InfeasibleError& e) {
    return fail(LT_ERR_INFEASIBLE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(LT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(LT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(LT_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (!p) throw InvalidArgument(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

Json parse_json(const char* text, const char* what) {
  need(text, what);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(std::string(what) + " is not valid JSON: " + e.what());
  }
}

Grid grid_of(const int dims[3], const double spacing[3]) {
  need(dims, "dims");
  need(spacing, "spacing_mm");
  Grid g{{dims[0], dims[1], dims[2]}, {spacing[0], spacing[1], spacing[2]}};
  g.validate();
  return g;
}

void put_geometry(const Grid& g, int dims[3], double spacing[3]) {
  for (int a = 0; a < 3; ++a) {
    if (dims) dims[a] = g.dims[a];
    if (spacing) spacing[a] = g.spacing_mm[a];
  }
}

LabelMask as_labels(const lt_mask& m) { return LabelMask(m.grid, m.data); }
LungMask as_lung(const lt_mask& m) { return LungMask(m.grid, m.data); }
ClassificationMap as_map(const lt_mask& m) { return ClassificationMap(m.grid, m.data); }

template <typename Image>
lt_mask* wrap_mask(lt_mask_kind kind, const Image& img) {
  auto* m = new lt_mask{kind, img.grid(), {img.data().begin(), img.data().end()}};
  return m;
}

void require_kind(const lt_mask* m, lt_mask_kind kind, const char* what) {
  need(m, what);
  if (m->kind != kind) throw InvalidArgument(std::string(what) + " has the wrong mask kind");
}

LogSink sink(lt_log_fn log, void* user) {
  if (!log) return {};
  return [log, user](const std::string& msg) { log(msg.c_str(), user); };
}

}  // namespace

extern "C" {

const char* lt_version(void) { return "0.1.0"; }

const char* lt_last_error(void) { return g_last_error.c_str(); }

const char* lt_status_name(lt_status s) {
  switch (s) {
    case LT_OK: return "ok";
    case LT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case LT_ERR_IO: return "i/o error";
    case LT_ERR_FORMAT: return "format error";
    case LT_ERR_CHECKSUM: return "checksum error";
    case LT_ERR_INFEASIBLE: return "infeasible";
    case LT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void lt_string_free(char* s) { std::free(s); }

lt_status lt_set_threads(int n) {
  return guard([&] {
    if (n < 0) throw InvalidArgument("thread count must be >= 0");
    set_num_threads(n);
  });
}

int lt_get_threads(void) { return num_threads(); }

uint64_t lt_derive_seed(uint64_t seed, const char* purpose) { return derive_seed(seed, purpose ? purpose : ""); }

lt_status lt_config_default(lt_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new lt_config{};
  });
}

lt_status lt_config_parse(const char* json, lt_config** out) {
  return guard([&] {
    need(out, "out");
    auto c = std::make_unique<lt_config>();
    c->cfg = run_config_from_json(parse_json(json, "config"));
    *out = c.release();
  });
}

lt_status lt_config_load(const char* path, lt_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto c = std::make_unique<lt_config>();
    c->cfg = load_run_config(path);
    *out = c.release();
  });
}

lt_status lt_config_validate(const char* json) {
  return guard([&] { run_config_from_json(parse_json(json, "config")).validate(); });
}

lt_status lt_config_set_seed(lt_config* cfg, uint64_t seed) {
  return guard([&] {
    need(cfg, "cfg");
    cfg->cfg.rng_seed = seed;
    cfg->cfg.patch_spec.rng_seed = cfg->cfg.seed_for("sample");
  });
}

lt_status lt_config_seed(const lt_config* cfg, uint64_t* out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = cfg->cfg.rng_seed;
  });
}

lt_status lt_config_threads(const lt_config* cfg, int* out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = cfg->cfg.threads;
  });
}

lt_status lt_config_to_json(const lt_config* cfg, char** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = dup_string(to_json(cfg->cfg).dump(2));
  });
}

void lt_config_free(lt_config* cfg) { delete cfg; }

lt_status lt_run_stage(const lt_config* cfg, const char* stage, const char* out_dir, lt_log_fn log, void* user) {
  return guard([&] {
    need(cfg, "cfg");
    need(stage, "stage");
    need(out_dir, "out_dir");
    const auto s = stage_from_name(stage);
    if (!s) throw InvalidArgument(std::string("unknown stage '") + stage + "'");
    run_stage(*s, cfg->cfg, out_dir, sink(log, user));
  });
}

lt_status lt_volume_create(const int dims[3], const double spacing_mm[3], lt_volume** out) {
  return guard([&] {
    need(out, "out");
    *out = new lt_volume{Volume(grid_of(dims, spacing_mm))};
  });
}

lt_status lt_volume_load(const char* path, lt_volume** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new lt_volume{load_volume(path)};
  });
}

lt_status lt_volume_save(const lt_volume* v, const char* path) {
  return guard([&] {
    need(v, "volume");
    need(path, "path");
    save_volume(v->v, path);
  });
}

lt_status lt_volume_geometry(const lt_volume* v, int dims[3], double spacing_mm[3]) {
  return guard([&] {
    need(v, "volume");
    put_geometry(v->v.grid(), dims, spacing_mm);
  });
}

lt_status lt_volume_data(lt_volume* v, int16_t** data, size_t* count) {
  return guard([&] {
    need(v, "volume");
    need(data, "data");
    *data = v->v.data().data();
    if (count) *count = static_cast<size_t>(v->v.size());
  });
}

void lt_volume_free(lt_volume* v) { delete v; }

lt_status lt_mask_create(lt_mask_kind kind, const int dims[3], const double spacing_mm[3], lt_mask** out) {
  return guard([&] {
    need(out, "out");
    if (kind < LT_MASK_LABELS || kind > LT_MASK_CLASSMAP) throw InvalidArgument("unknown mask kind");
    const Grid g = grid_of(dims, spacing_mm);
    *out = new lt_mask{kind, g, std::vector<std::uint8_t>(static_cast<std::size_t>(g.voxel_count()), 0)};
  });
}

lt_status lt_mask_load(lt_mask_kind kind, const char* path, lt_mask** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    switch (kind) {
      case LT_MASK_LABELS: *out = wrap_mask(kind, load_label_mask(path)); return;
      case LT_MASK_LUNG: *out = wrap_mask(kind, load_lung_mask(path)); return;
      case LT_MASK_CLASSMAP: *out = wrap_mask(kind, load_classification_map(path)); return;
    }
    throw InvalidArgument("unknown mask kind");
  });
}

lt_status lt_mask_save(const lt_mask* m, const char* path) {
  return guard([&] {
    need(m, "mask");
    need(path, "path");
    switch (m->kind) {
      case LT_MASK_LABELS: save_label_mask(as_labels(*m), path); return;
      case LT_MASK_LUNG: save_lung_mask(as_lung(*m), path); return;
      case LT_MASK_CLASSMAP: save_classification_map(as_map(*m), path); return;
    }
  });
}

lt_status lt_mask_geometry(const lt_mask* m, int dims[3], double spacing_mm[3]) {
  return guard([&] {
    need(m, "mask");
    put_geometry(m->grid, dims, spacing_mm);
  });
}

lt_status lt_mask_data(lt_mask* m, uint8_t** data, size_t* count) {
  return guard([&] {
    need(m, "mask");
    need(data, "data");
    *data = m->data.data();
    if (count) *count = m->data.size();
  });
}

lt_mask_kind lt_mask_get_kind(const lt_mask* m) { return m ? m->kind : LT_MASK_LABELS; }

void lt_mask_free(lt_mask* m) { delete m; }

lt_status lt_phantom_generate(const char* spec_json, lt_volume** volume, lt_mask** labels, lt_mask** lung,
                              char** census_json) {
  return guard([&] {
    need(volume, "volume");
    need(labels, "labels");
    need(lung, "lung");
    const Json j = parse_json(spec_json, "phantom spec");
    JsonFields f(j, "phantom");
    PhantomSpec spec;
    f.read("dims", spec.grid.dims);
    f.read("spacing_mm", spec.grid.spacing_mm);
    if (const Json* c = f.get("compartments")) {
      if (!c->is_array()) throw InvalidArgument("phantom.compartments must be an array");
      for (std::size_t i = 0; i < c->size(); ++i) {
        JsonFields cf((*c)[i], "phantom.compartments[" + std::to_string(i) + "]");
        Compartment comp;
        cf.require("label", comp.label);
        cf.require("fraction", comp.fraction);
        cf.done();
        spec.compartments.push_back(comp);
      }
    }
    f.read("hu_jitter", spec.hu_jitter);
    f.read("start_angle_deg", spec.start_angle_deg);
    f.read("rng_seed", spec.rng_seed);
    f.done();
    Phantom ph = generate_phantom(spec);
    auto v = std::make_unique<lt_volume>(lt_volume{std::move(ph.volume)});
    std::unique_ptr<lt_mask> l(wrap_mask(LT_MASK_LABELS, ph.labels));
    std::unique_ptr<lt_mask> g(wrap_mask(LT_MASK_LUNG, ph.lung));
    if (census_json) *census_json = dup_string(to_json(ph.census).dump());
    *volume = v.release();
    *labels = l.release();
    *lung = g.release();
  });
}

lt_status lt_atlas_create(lt_atlas** out) {
  return guard([&] {
    need(out, "out");
    *out = new lt_atlas{};
  });
}

lt_status lt_atlas_add_scan(lt_atlas* atlas, const char* scan_id, const lt_volume* volume, const lt_mask* labels) {
  return guard([&] {
    need(atlas, "atlas");
    need(scan_id, "scan_id");
    need(volume, "volume");
    require_kind(labels, LT_MASK_LABELS, "labels");
    for (const auto& s : atlas->scans)
      if (s.scan_id == scan_id) throw InvalidArgument(std::string("atlas already holds scan '") + scan_id + "'");
    ScanInput in{scan_id, volume->v, as_labels(*labels)};
    require_congruent(in.volume.grid(), in.labels.grid(), "labels of " + in.scan_id);
    atlas->scans.push_back(std::move(in));
    atlas->dirty = true;
  });
}

lt_status lt_atlas_candidate_count(const lt_atlas* atlas, int class_index, int64_t* out) {
  return guard([&] {
    need(atlas, "atlas");
    need(out, "out");
    if (class_index < 0 || class_index >= LT_NUM_CLASSES) throw InvalidArgument("class index out of range");
    *out = const_cast<lt_atlas*>(atlas)->built().candidate_count(label_from_index(class_index));
  });
}

void lt_atlas_free(lt_atlas* atlas) { delete atlas; }

lt_status lt_patchset_sample(const lt_atlas* atlas, const char* spec_json, const char* split_tag, lt_patchset** out) {
  return guard([&] {
    need(atlas, "atlas");
    need(out, "out");
    const PatchSpec spec = patch_spec_from_json(parse_json(spec_json, "patch spec"), "patch_spec");
    auto p = std::make_unique<lt_patchset>();
    p->set = sample_patches(const_cast<lt_atlas*>(atlas)->built(), spec, std::nullopt, split_tag ? split_tag : "train");
    *out = p.release();
  });
}

lt_status lt_patchset_load(const char* base_path, lt_patchset** out) {
  return guard([&] {
    need(base_path, "base_path");
    need(out, "out");
    *out = new lt_patchset{load_patchset(base_path)};
  });
}

lt_status lt_patchset_save(const lt_patchset* set, const char* base_path) {
  return guard([&] {
    need(set, "patchset");
    need(base_path, "base_path");
    save_patchset(set->set, base_path);
  });
}

lt_status lt_patchset_size(const lt_patchset* set, size_t* count, size_t* elements_per_patch) {
  return guard([&] {
    need(set, "patchset");
    if (count) *count = set->set.size();
    if (elements_per_patch) *elements_per_patch = static_cast<size_t>(set->set.shape().elements());
  });
}

lt_status lt_patchset_class_counts(const lt_patchset* set, int64_t* counts) {
  return guard([&] {
    need(set, "patchset");
    need(counts, "counts");
    const auto cc = set->set.class_counts();
    for (int c = 0; c < LT_NUM_CLASSES; ++c) counts[c] = cc[c];
  });
}

void lt_patchset_free(lt_patchset* set) { delete set; }

lt_status lt_model_create(const char* model_config_json, uint64_t seed, lt_model** out) {
  return guard([&] {
    need(out, "out");
    auto m = std::make_unique<lt_model>(lt_model{Model(model_config_from_json(parse_json(model_config_json, "model config"), "model"))});
    m->model.initialize(seed);
    *out = m.release();
  });
}

lt_status lt_model_load(const char* path, lt_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new lt_model{load_model(path)};
  });
}

lt_status lt_model_save(const lt_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    save_model(model->model, path);
  });
}

lt_status lt_model_config_json(const lt_model* model, char** out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = dup_string(to_json(model->model.config()).dump());
  });
}

lt_status lt_model_parameter_count(const lt_model* model, size_t* out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = static_cast<size_t>(model->model.trainable_parameter_count());
  });
}

lt_status lt_model_predict(lt_model* model, const float* hu, size_t count, double* probs) {
  return guard([&] {
    need(model, "model");
    if (count == 0) return;
    need(hu, "hu");
    need(probs, "probs");
    const auto& cfg = model->model.config();
    const std::size_t per = static_cast<std::size_t>(patch_shape(cfg.input_size_px, cfg.dimensionality).elements());
    const auto p = predict_proba(model->model, std::span<const float>(hu, per * count), count);
    std::copy(p.begin(), p.end(), probs);
  });
}

void lt_model_free(lt_model* model) { delete model; }

lt_status lt_train(lt_model* model, const lt_patchset* train, const lt_patchset* val, const char* train_json,
                   lt_log_fn log, void* user, char** result_json) {
  return guard([&] {
    need(model, "model");
    need(train, "train");
    need(val, "val");
    const TrainConfig cfg = train_json ? train_config_from_json(parse_json(train_json, "train config"), "train") : TrainConfig{};
    const TrainResult r = train_model(model->model, train->set, val->set, cfg, [&](const EpochRecord& e) {
      if (log) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %d loss %.4f train_acc %.4f val_acc %.4f", e.epoch, e.train_loss,
                      e.train_acc, e.val_acc);
        log(buf, user);
      }
    });
    if (result_json) {
      Json j = to_json(r);
      Json hist = Json::array();
      for (const auto& e : r.history)
        hist.push_back(Json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
      j["history"] = hist;
      *result_json = dup_string(j.dump());
    }
  });
}

lt_status lt_hypersearch(const lt_config* cfg, const lt_atlas* atlas, lt_log_fn log, void* user, char** result_json) {
  return guard([&] {
    need(cfg, "cfg");
    need(atlas, "atlas");
    need(result_json, "result_json");
    const SearchResult r = hyperparameter_search(const_cast<lt_atlas*>(atlas)->built(), cfg->cfg.hypergrid,
                                                 cfg->cfg.search_config(), [&](const LeaderboardEntry& e) {
                                                   if (log) log(to_json(e.point).dump().c_str(), user);
                                                 });
    *result_json = dup_string(to_json(r).dump());
  });
}

lt_status lt_classify(lt_model* model, const lt_volume* volume, const lt_mask* lung, const char* recon_json,
                      lt_mask** map) {
  return guard([&] {
    need(model, "model");
    need(volume, "volume");
    require_kind(lung, LT_MASK_LUNG, "lung");
    need(map, "map");
    const ReconstructionConfig rc =
        recon_json ? reconstruction_from_json(parse_json(recon_json, "reconstruction config"), "reconstruction")
                   : ReconstructionConfig{};
    NetworkClassifier classifier(model->model);
    *map = wrap_mask(LT_MASK_CLASSMAP, classify_volume(classifier, volume->v, as_lung(*lung), rc));
  });
}

lt_status lt_quantify(const lt_mask* map, const lt_mask* lung, const char* scan_id, char** report_json) {
  return guard([&] {
    require_kind(map, LT_MASK_CLASSMAP, "map");
    require_kind(lung, LT_MASK_LUNG, "lung");
    need(report_json, "report_json");
    *report_json = dup_string(to_json(quantify(as_map(*map), as_lung(*lung), scan_id ? scan_id : "")).dump());
  });
}

lt_status lt_evaluate(const double* probs, const int* labels, size_t n, char** evaluation_json) {
  return guard([&] {
    need(probs, "probs");
    need(labels, "labels");
    need(evaluation_json, "evaluation_json");
    std::vector<ScoredSample> samples(n);
    for (size_t i = 0; i < n; ++i) {
      if (labels[i] < 0 || labels[i] >= LT_NUM_CLASSES) throw InvalidArgument("label index out of range");
      samples[i].true_label = label_from_index(labels[i]);
      for (int c = 0; c < LT_NUM_CLASSES; ++c) samples[i].probabilities[c] = probs[i * LT_NUM_CLASSES + c];
    }
    *evaluation_json = dup_string(to_json(evaluate_split("", samples)).dump());
  });
}

lt_status lt_auc_binary(const double* scores, const uint8_t* positive, size_t n, double* auc) {
  return guard([&] {
    need(scores, "scores");
    need(positive, "positive");
    need(auc, "auc");
    *auc = auc_binary(std::span<const double>(scores, n), std::span<const std::uint8_t>(positive, n));
  });
}

lt_status lt_spearman(const double* x, const double* y, size_t n, double* rho, double* p_value) {
  return guard([&] {
    need(x, "x");
    need(y, "y");
    const Correlation c = spearman(std::span<const double>(x, n), std::span<const double>(y, n));
    if (rho) *rho = c.rho;
    if (p_value) *p_value = c.p_value;
  });
}

lt_status lt_correlate(const char* quant_csv, const char* clinical_csv, char** correlation_json) {
  return guard([&] {
    need(quant_csv, "quant_csv");
    need(clinical_csv, "clinical_csv");
    need(correlation_json, "correlation_json");
    std::istringstream q(quant_csv), c(clinical_csv);
    const auto reports = read_quant_csv(q);
    const auto clinical = read_clinical_csv(c);
    *correlation_json = dup_string(to_json(correlate_clinical(reports, clinical)).dump());
  });
}

}  // extern "C"
