#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "lungtex/lungtex.h"
#include "json.hpp"

extern "C" int lt_header_check_c(void);

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  lt_string_free(s);
  return out;
}

struct Scratch {
  fs::path path;
  Scratch() {
    static int n = 0;
    path = fs::temp_directory_path() / ("lungtex_capi_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const char* kPhantom =
    R"({"dims":[40,40,16],"spacing_mm":[1,1,1.5],"rng_seed":3,
        "compartments":[{"label":"GG","fraction":0.2},{"label":"GGR","fraction":0.2},
                        {"label":"HONEYCOMBING","fraction":0.2},{"label":"EMPHYSEMA","fraction":0.2}]})";

}  // namespace

TEST_CASE("header compiles as C") { CHECK(lt_header_check_c() == 0); }

TEST_CASE("status names, version and seeds") {
  CHECK(std::string(lt_version()).size() > 0);
  CHECK(std::string(lt_status_name(LT_OK)) == "ok");
  CHECK(std::string(lt_status_name(LT_ERR_CHECKSUM)) == "checksum error");
  CHECK(lt_derive_seed(1, "a") == lt_derive_seed(1, "a"));
  CHECK(lt_derive_seed(1, "a") != lt_derive_seed(1, "b"));
  CHECK(lt_set_threads(2) == LT_OK);
  CHECK(lt_get_threads() == 2);
  CHECK(lt_set_threads(-1) == LT_ERR_INVALID_ARGUMENT);
  CHECK(lt_set_threads(0) == LT_OK);
}

TEST_CASE("errors map to status codes with a message") {
  lt_config* cfg = nullptr;
  CHECK(lt_config_parse(R"({"bogus": 1})", &cfg) == LT_ERR_INVALID_ARGUMENT);
  CHECK(cfg == nullptr);
  CHECK(std::string(lt_last_error()).find("bogus") != std::string::npos);
  CHECK(lt_config_parse("{", &cfg) == LT_ERR_INVALID_ARGUMENT);
  CHECK(lt_config_parse(nullptr, &cfg) == LT_ERR_INVALID_ARGUMENT);
  CHECK(lt_config_load("/nonexistent/config.json", &cfg) != LT_OK);
  lt_volume* v = nullptr;
  CHECK(lt_volume_load("/nonexistent/v.rvol.json", &v) == LT_ERR_IO);
  lt_model* m = nullptr;
  CHECK(lt_model_load("/nonexistent/m.tqwt", &m) == LT_ERR_IO);
  CHECK(lt_config_validate(R"({"patch_spec": {"rng_seed": 3}})") == LT_ERR_INVALID_ARGUMENT);
  CHECK(lt_config_validate(R"({"rng_seed": 3})") == LT_OK);
  // Free functions accept null.
  lt_config_free(nullptr);
  lt_volume_free(nullptr);
  lt_mask_free(nullptr);
  lt_atlas_free(nullptr);
  lt_patchset_free(nullptr);
  lt_model_free(nullptr);
  lt_string_free(nullptr);
}

TEST_CASE("config handles") {
  lt_config* cfg = nullptr;
  REQUIRE(lt_config_parse(R"({"rng_seed": 11, "threads": 3})", &cfg) == LT_OK);
  std::uint64_t seed = 0;
  int threads = 0;
  CHECK(lt_config_seed(cfg, &seed) == LT_OK);
  CHECK(seed == 11);
  CHECK(lt_config_threads(cfg, &threads) == LT_OK);
  CHECK(threads == 3);
  CHECK(lt_config_set_seed(cfg, 12) == LT_OK);
  char* json = nullptr;
  REQUIRE(lt_config_to_json(cfg, &json) == LT_OK);
  const std::string text = take(json);
  CHECK(text.find("\"rng_seed\": 12") != std::string::npos);
  lt_config* again = nullptr;
  CHECK(lt_config_parse(text.c_str(), &again) == LT_OK);
  lt_config_free(again);
  lt_config_free(cfg);
}

TEST_CASE("volumes and masks round trip") {
  Scratch dir;
  const int dims[3] = {5, 4, 3};
  const double sp[3] = {0.5, 0.75, 2.0};
  lt_volume* v = nullptr;
  REQUIRE(lt_volume_create(dims, sp, &v) == LT_OK);
  int16_t* data = nullptr;
  size_t n = 0;
  REQUIRE(lt_volume_data(v, &data, &n) == LT_OK);
  REQUIRE(n == 60);
  for (size_t i = 0; i < n; ++i) data[i] = static_cast<int16_t>(i * 37 - 1000);
  CHECK(lt_volume_save(v, (dir / "v").c_str()) == LT_OK);
  lt_volume* back = nullptr;
  REQUIRE(lt_volume_load((dir / "v.rvol.json").c_str(), &back) == LT_OK);
  int d2[3];
  double s2[3];
  CHECK(lt_volume_geometry(back, d2, s2) == LT_OK);
  CHECK(std::memcmp(d2, dims, sizeof dims) == 0);
  CHECK(std::memcmp(s2, sp, sizeof sp) == 0);
  int16_t* data2 = nullptr;
  lt_volume_data(back, &data2, &n);
  CHECK(std::memcmp(data, data2, n * sizeof(int16_t)) == 0);

  lt_mask* lung = nullptr;
  REQUIRE(lt_mask_create(LT_MASK_LUNG, dims, sp, &lung) == LT_OK);
  uint8_t* m = nullptr;
  lt_mask_data(lung, &m, &n);
  m[3] = 2;
  CHECK(lt_mask_save(lung, (dir / "lung").c_str()) == LT_ERR_INVALID_ARGUMENT);
  m[3] = 1;
  CHECK(lt_mask_save(lung, (dir / "lung").c_str()) == LT_OK);
  lt_mask* lung2 = nullptr;
  CHECK(lt_mask_load(LT_MASK_LUNG, (dir / "lung").c_str(), &lung2) == LT_OK);
  CHECK(lt_mask_get_kind(lung2) == LT_MASK_LUNG);
  lt_mask_free(lung2);
  lt_mask_free(lung);
  lt_volume_free(back);
  lt_volume_free(v);
}

TEST_CASE("phantom, sampling, model, classification and quantification") {
  Scratch dir;
  lt_volume* vol = nullptr;
  lt_mask *labels = nullptr, *lung = nullptr;
  char* census = nullptr;
  REQUIRE(lt_phantom_generate(kPhantom, &vol, &labels, &lung, &census) == LT_OK);
  CHECK(take(census).find("lung_voxels") != std::string::npos);

  lt_atlas* atlas = nullptr;
  REQUIRE(lt_atlas_create(&atlas) == LT_OK);
  CHECK(lt_atlas_add_scan(atlas, "p0", vol, labels) == LT_OK);
  CHECK(lt_atlas_add_scan(atlas, "p0", vol, labels) == LT_ERR_INVALID_ARGUMENT);
  int64_t cands = 0;
  CHECK(lt_atlas_candidate_count(atlas, 4, &cands) == LT_OK);
  CHECK(cands > 0);
  CHECK(lt_atlas_candidate_count(atlas, 7, &cands) == LT_ERR_INVALID_ARGUMENT);

  lt_patchset* set = nullptr;
  const char* spec = R"({"size_px":6,"dimensionality":"2D","selection_radius_mm":2,"min_fill_factor":0.6,
                        "patches_per_class":15,"rng_seed":4})";
  REQUIRE(lt_patchset_sample(atlas, spec, "train", &set) == LT_OK);
  size_t count = 0, elems = 0;
  CHECK(lt_patchset_size(set, &count, &elems) == LT_OK);
  CHECK(count == 75);
  CHECK(elems == 36);
  int64_t counts[LT_NUM_CLASSES];
  CHECK(lt_patchset_class_counts(set, counts) == LT_OK);
  for (auto c : counts) CHECK(c == 15);
  CHECK(lt_patchset_save(set, (dir / "patches/train").c_str()) == LT_OK);
  lt_patchset* loaded = nullptr;
  CHECK(lt_patchset_load((dir / "patches/train").c_str(), &loaded) == LT_OK);
  lt_patchset_free(loaded);
  const char* huge = R"({"size_px":6,"dimensionality":"2D","selection_radius_mm":2,"min_fill_factor":1.0,
                         "patches_per_class":15,"rng_seed":4})";
  lt_patchset* none = nullptr;
  // 40x40x16 phantom wedges always hold a full 6x6 patch, so use a size the lung cannot fit.
  const char* infeasible = R"({"size_px":30,"dimensionality":"3D","selection_radius_mm":2,"min_fill_factor":1.0,
                               "patches_per_class":15,"rng_seed":4})";
  CHECK(lt_patchset_sample(atlas, huge, nullptr, &none) == LT_OK);
  lt_patchset_free(none);
  none = nullptr;
  CHECK(lt_patchset_sample(atlas, infeasible, nullptr, &none) == LT_ERR_INFEASIBLE);

  lt_model* model = nullptr;
  const char* mcfg = R"({"dimensionality":"2D","input_size_px":6,"block_layers":[1],"initial_filters":4,"growth_rate":4})";
  REQUIRE(lt_model_create(mcfg, 9, &model) == LT_OK);
  size_t params = 0;
  CHECK(lt_model_parameter_count(model, &params) == LT_OK);
  CHECK(params > 0);
  std::vector<std::string> lines;
  char* result = nullptr;
  CHECK(lt_train(model, set, set, R"({"max_epochs":2,"batch_size":16})",
                 [](const char* msg, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(msg); }, &lines,
                 &result) == LT_ERR_INVALID_ARGUMENT);
  lt_string_free(result);
  result = nullptr;

  // A second scan provides validation patches.
  lt_atlas* val_atlas = nullptr;
  lt_atlas_create(&val_atlas);
  lt_atlas_add_scan(val_atlas, "p1", vol, labels);
  lt_patchset* val = nullptr;
  REQUIRE(lt_patchset_sample(val_atlas, spec, "validation", &val) == LT_OK);
  INFO(std::string(lt_last_error()));
  REQUIRE(lt_train(model, set, val, R"({"max_epochs":2,"batch_size":16,"rng_seed":1})",
                   [](const char* msg, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(msg); },
                   &lines, &result) == LT_OK);
  CHECK(lines.size() == 2);
  CHECK(take(result).find("\"history\"") != std::string::npos);

  std::vector<float> hu(3 * 36, -800.0f);
  std::vector<double> probs(3 * LT_NUM_CLASSES);
  CHECK(lt_model_predict(model, hu.data(), 3, probs.data()) == LT_OK);
  for (int b = 0; b < 3; ++b) {
    double s = 0;
    for (int k = 0; k < LT_NUM_CLASSES; ++k) s += probs[b * LT_NUM_CLASSES + k];
    CHECK(s == doctest::Approx(1.0));
  }
  CHECK(lt_model_save(model, (dir / "m.tqwt").c_str()) == LT_OK);
  lt_model* model2 = nullptr;
  REQUIRE(lt_model_load((dir / "m.tqwt").c_str(), &model2) == LT_OK);
  std::vector<double> probs2(probs.size());
  lt_model_predict(model2, hu.data(), 3, probs2.data());
  CHECK(probs == probs2);
  char* cj = nullptr;
  CHECK(lt_model_config_json(model2, &cj) == LT_OK);
  CHECK(take(cj).find("input_size_px") != std::string::npos);
  {
    std::FILE* f = std::fopen((dir / "m.tqwt").c_str(), "r+b");
    REQUIRE(f);
    std::fseek(f, 40, SEEK_SET);
    std::fputc(0x55, f);
    std::fclose(f);
  }
  lt_model* broken = nullptr;
  CHECK(lt_model_load((dir / "m.tqwt").c_str(), &broken) == LT_ERR_CHECKSUM);

  lt_mask* map = nullptr;
  REQUIRE(lt_classify(model, vol, lung, R"({"stride":[8,8,4]})", &map) == LT_OK);
  CHECK(lt_mask_get_kind(map) == LT_MASK_CLASSMAP);
  char* report = nullptr;
  REQUIRE(lt_quantify(map, lung, "p0", &report) == LT_OK);
  const auto rj = nlohmann::json::parse(take(report));
  double pct = 0;
  for (const auto& [name, c] : rj.at("classes").items()) pct += c.at("pct").get<double>();
  CHECK(pct == doctest::Approx(100.0));
  CHECK(rj.at("classes").contains("EMPHYSEMA"));
  CHECK(lt_quantify(map, labels, "p0", &report) == LT_ERR_INVALID_ARGUMENT);

  lt_mask_free(map);
  lt_model_free(model2);
  lt_model_free(model);
  lt_patchset_free(val);
  lt_patchset_free(set);
  lt_atlas_free(val_atlas);
  lt_atlas_free(atlas);
  lt_mask_free(lung);
  lt_mask_free(labels);
  lt_volume_free(vol);
}

TEST_CASE("statistics entry points") {
  const double scores[] = {0.1, 0.4, 0.35, 0.8};
  const uint8_t pos[] = {0, 0, 1, 1};
  double auc = 0;
  CHECK(lt_auc_binary(scores, pos, 4, &auc) == LT_OK);
  CHECK(auc == doctest::Approx(0.75));
  const uint8_t all[] = {1, 1, 1, 1};
  CHECK(lt_auc_binary(scores, all, 4, &auc) == LT_ERR_INVALID_ARGUMENT);
  const double x[] = {1, 2, 3, 4, 5}, y[] = {2, 1, 4, 3, 5};
  double rho = 0, p = 0;
  CHECK(lt_spearman(x, y, 5, &rho, &p) == LT_OK);
  CHECK(rho == doctest::Approx(0.8));

  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) {
    for (int k = 0; k < LT_NUM_CLASSES; ++k) probs.push_back(k == i % 5 ? 0.6 : 0.1);
    labels.push_back(i % 5);
  }
  char* ev = nullptr;
  REQUIRE(lt_evaluate(probs.data(), labels.data(), labels.size(), &ev) == LT_OK);
  const auto evj = nlohmann::json::parse(take(ev));
  CHECK(evj.at("auc_micro").get<double>() == 1.0);
  CHECK(evj.at("n").get<int>() == 10);
  labels[0] = 9;
  CHECK(lt_evaluate(probs.data(), labels.data(), labels.size(), &ev) == LT_ERR_INVALID_ARGUMENT);

  const std::string quant = "scan_id,total_ml,normal_pct,gg_pct,ggr_pct,honeycombing_pct,emphysema_pct,fibrosis_pct\n"
                            "a,1,90,0,0,0,10,0\nb,1,80,0,0,0,20,0\nc,1,70,0,0,0,30,0\n";
  const std::string clinical = "scan_id,dlco_pct,emphysema_grade,fibrosis_grade\n"
                               "a,90,none,none\nb,70,mild,none\nc,50,severe,none\n";
  char* cor = nullptr;
  REQUIRE(lt_correlate(quant.c_str(), clinical.c_str(), &cor) == LT_OK);
  CHECK(take(cor).find("spearman_vs_dlco") != std::string::npos);
  const std::string partial = "scan_id,dlco_pct,emphysema_grade,fibrosis_grade\na,90,none,none\nb,70,mild,none\n";
  CHECK(lt_correlate(quant.c_str(), partial.c_str(), &cor) == LT_ERR_INVALID_ARGUMENT);
  CHECK(std::string(lt_last_error()).find("'c'") != std::string::npos);
}

TEST_CASE("pipeline stages through the C API") {
  Scratch dir;
  lt_config* cfg = nullptr;
  INFO(std::string(lt_last_error()));
  REQUIRE(lt_config_parse(R"({
    "rng_seed": 5,
    "phantom": {"dims": [40, 40, 12], "scan_count": 4},
    "split": {"names": ["train", "validation", "test"], "fractions": [0.5, 0.25, 0.25]},
    "patch_spec": {"size_px": 6, "dimensionality": "2D", "selection_radius_mm": 2, "min_fill_factor": 0.6, "patches_per_class": 10},
    "model": {"initial_filters": 4, "growth_rate": 4, "block_layers": [1]},
    "train": {"max_epochs": 1, "batch_size": 16}
  })", &cfg) == LT_OK);
  std::vector<std::string> log;
  auto sink = [](const char* msg, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(msg); };
  for (const char* stage : {"phantom", "atlas", "sample", "train", "classify", "quantify", "evaluate", "correlate", "report"})
    CHECK_MESSAGE(lt_run_stage(cfg, stage, dir.path.string().c_str(), sink, &log) == LT_OK, stage, " ", lt_last_error());
  CHECK(lt_run_stage(cfg, "nonsense", dir.path.string().c_str(), nullptr, nullptr) == LT_ERR_INVALID_ARGUMENT);
  CHECK(fs::exists(dir.path / "model.tqwt"));
  CHECK(fs::exists(dir.path / "report.md"));
  CHECK_FALSE(log.empty());
  lt_config_free(cfg);
}
