#ifndef LUNGTEX_LUNGTEX_H
#define LUNGTEX_LUNGTEX_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define LT_API __attribute__((visibility("default")))
#else
#define LT_API
#endif

/* Every fallible call returns a status; on failure lt_last_error() holds a
 * message for the calling thread until its next failing call. */
typedef enum lt_status {
  LT_OK = 0,
  LT_ERR_INVALID_ARGUMENT = 1, /* bad argument, configuration or schema */
  LT_ERR_IO = 2,               /* file missing or unwritable */
  LT_ERR_FORMAT = 3,           /* file content malformed */
  LT_ERR_CHECKSUM = 4,         /* weight file corrupt or truncated */
  LT_ERR_INFEASIBLE = 5,       /* sampling produced no patch for a class */
  LT_ERR_INTERNAL = 6
} lt_status;

typedef enum lt_mask_kind {
  LT_MASK_LABELS = 0,   /* texture codes 0..5 */
  LT_MASK_LUNG = 1,     /* 0/1 */
  LT_MASK_CLASSMAP = 2  /* texture codes 0..5 */
} lt_mask_kind;

#define LT_NUM_CLASSES 5

typedef struct lt_config lt_config;
typedef struct lt_volume lt_volume;
typedef struct lt_mask lt_mask;
typedef struct lt_atlas lt_atlas;
typedef struct lt_patchset lt_patchset;
typedef struct lt_model lt_model;

typedef void (*lt_log_fn)(const char* message, void* user);

LT_API const char* lt_version(void);
LT_API const char* lt_last_error(void);
LT_API const char* lt_status_name(lt_status status);
/* Frees strings returned through char** out-parameters. */
LT_API void lt_string_free(char* s);

/* 0 restores the default (all hardware threads). */
LT_API lt_status lt_set_threads(int n);
LT_API int lt_get_threads(void);
LT_API uint64_t lt_derive_seed(uint64_t seed, const char* purpose);

/* ---- Run configuration ---- */
LT_API lt_status lt_config_default(lt_config** out);
LT_API lt_status lt_config_parse(const char* json, lt_config** out);
LT_API lt_status lt_config_load(const char* path, lt_config** out);
/* Parses and validates without keeping the result. */
LT_API lt_status lt_config_validate(const char* json);
LT_API lt_status lt_config_set_seed(lt_config* cfg, uint64_t seed);
LT_API lt_status lt_config_seed(const lt_config* cfg, uint64_t* out);
LT_API lt_status lt_config_threads(const lt_config* cfg, int* out);
LT_API lt_status lt_config_to_json(const lt_config* cfg, char** out);
LT_API void lt_config_free(lt_config* cfg);

/* ---- Pipeline stages ----
 * stage: phantom, atlas, sample, train, hypersearch, classify, quantify,
 * evaluate, correlate, report.  log may be NULL. */
LT_API lt_status lt_run_stage(const lt_config* cfg, const char* stage, const char* out_dir, lt_log_fn log, void* user);

/* ---- Volumes (int16 HU) ---- */
LT_API lt_status lt_volume_create(const int dims[3], const double spacing_mm[3], lt_volume** out);
LT_API lt_status lt_volume_load(const char* path, lt_volume** out);
LT_API lt_status lt_volume_save(const lt_volume* v, const char* path);
LT_API lt_status lt_volume_geometry(const lt_volume* v, int dims[3], double spacing_mm[3]);
/* x fastest, then y, then z; valid until lt_volume_free. */
LT_API lt_status lt_volume_data(lt_volume* v, int16_t** data, size_t* count);
LT_API void lt_volume_free(lt_volume* v);

/* ---- Masks and classification maps (uint8) ---- */
LT_API lt_status lt_mask_create(lt_mask_kind kind, const int dims[3], const double spacing_mm[3], lt_mask** out);
LT_API lt_status lt_mask_load(lt_mask_kind kind, const char* path, lt_mask** out);
LT_API lt_status lt_mask_save(const lt_mask* m, const char* path);
LT_API lt_status lt_mask_geometry(const lt_mask* m, int dims[3], double spacing_mm[3]);
LT_API lt_status lt_mask_data(lt_mask* m, uint8_t** data, size_t* count);
LT_API lt_mask_kind lt_mask_get_kind(const lt_mask* m);
LT_API void lt_mask_free(lt_mask* m);

/* ---- Phantoms ----
 * spec_json: {"dims","spacing_mm","compartments":[{"label","fraction"}],
 * "hu_jitter","start_angle_deg","rng_seed"}; census_json may be NULL. */
LT_API lt_status lt_phantom_generate(const char* spec_json, lt_volume** volume, lt_mask** labels, lt_mask** lung,
                                     char** census_json);

/* ---- Atlas and patch sampling ---- */
LT_API lt_status lt_atlas_create(lt_atlas** out);
/* Copies the volume and label mask. */
LT_API lt_status lt_atlas_add_scan(lt_atlas* atlas, const char* scan_id, const lt_volume* volume, const lt_mask* labels);
LT_API lt_status lt_atlas_candidate_count(const lt_atlas* atlas, int class_index, int64_t* out);
LT_API void lt_atlas_free(lt_atlas* atlas);

/* spec_json holds PatchSpec fields; split_tag may be NULL ("train"). */
LT_API lt_status lt_patchset_sample(const lt_atlas* atlas, const char* spec_json, const char* split_tag,
                                    lt_patchset** out);
LT_API lt_status lt_patchset_load(const char* base_path, lt_patchset** out);
LT_API lt_status lt_patchset_save(const lt_patchset* set, const char* base_path);
LT_API lt_status lt_patchset_size(const lt_patchset* set, size_t* count, size_t* elements_per_patch);
/* counts[LT_NUM_CLASSES] */
LT_API lt_status lt_patchset_class_counts(const lt_patchset* set, int64_t* counts);
LT_API void lt_patchset_free(lt_patchset* set);

/* ---- Models ---- */
LT_API lt_status lt_model_create(const char* model_config_json, uint64_t seed, lt_model** out);
LT_API lt_status lt_model_load(const char* path, lt_model** out);
LT_API lt_status lt_model_save(const lt_model* model, const char* path);
LT_API lt_status lt_model_config_json(const lt_model* model, char** out);
LT_API lt_status lt_model_parameter_count(const lt_model* model, size_t* out);
/* hu: count patches in the model's input layout; probs: count x LT_NUM_CLASSES. */
LT_API lt_status lt_model_predict(lt_model* model, const float* hu, size_t count, double* probs);
LT_API void lt_model_free(lt_model* model);

/* train_json holds TrainConfig fields; result: {"history","best_epoch",...}. */
LT_API lt_status lt_train(lt_model* model, const lt_patchset* train, const lt_patchset* val, const char* train_json,
                          lt_log_fn log, void* user, char** result_json);

/* Grid, folds and network width come from cfg; result is the leaderboard. */
LT_API lt_status lt_hypersearch(const lt_config* cfg, const lt_atlas* atlas, lt_log_fn log, void* user,
                                char** result_json);

/* ---- Reconstruction and quantification ----
 * recon_json: {"stride":[sx,sy,sz],"batch_patches":n} or NULL for defaults. */
LT_API lt_status lt_classify(lt_model* model, const lt_volume* volume, const lt_mask* lung, const char* recon_json,
                             lt_mask** map);
LT_API lt_status lt_quantify(const lt_mask* map, const lt_mask* lung, const char* scan_id, char** report_json);

/* ---- Evaluation and statistics ---- */
/* probs: n x LT_NUM_CLASSES; labels: 0-based class index per sample. */
LT_API lt_status lt_evaluate(const double* probs, const int* labels, size_t n, char** evaluation_json);
LT_API lt_status lt_auc_binary(const double* scores, const uint8_t* positive, size_t n, double* auc);
LT_API lt_status lt_spearman(const double* x, const double* y, size_t n, double* rho, double* p_value);
/* CSV texts in the quantification and clinical layouts. */
LT_API lt_status lt_correlate(const char* quant_csv, const char* clinical_csv, char** correlation_json);

#ifdef __cplusplus
}
#endif

#endif
