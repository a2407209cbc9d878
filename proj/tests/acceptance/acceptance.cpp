// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common/fixtures.hpp"
#include "common/reference_net.hpp"
#include "common/sampling_check.hpp"
#include "common/stat_oracles.hpp"
#include "common/support.hpp"
#include "core/config.hpp"
#include "core/error.hpp"
#include "core/io.hpp"
#include "core/parallel.hpp"
#include "core/patch.hpp"
#include "core/phantom.hpp"
#include "core/pipeline.hpp"
#include "core/reconstruct.hpp"
#include "core/rvol.hpp"
#include "core/stats.hpp"

namespace fs = std::filesystem;
using namespace lungtex;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Env {
  fs::path work;
  RunConfig desk;
  fs::path desk_dir() const { return work / "desk_t1"; }
  fs::path desk_model() const { return desk_dir() / "model.tqwt"; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> draws(CounterRng& rng, int n, int levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = levels ? static_cast<double>(rng.below(levels)) : rng.uniform();
  return v;
}

void run_stages(const RunConfig& cfg, const fs::path& out, std::initializer_list<Stage> stages, int threads) {
  set_num_threads(threads);
  for (Stage s : stages) run_stage(s, cfg, out);
}

// ---------------------------------------------------------------------------

Verdict gradient(const Env&) {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig c;
  c.dimensionality = Dimensionality::k2_5D;
  c.input_size_px = 8;
  c.block_layers = {2};
  c.initial_filters = 4;
  c.growth_rate = 3;
  DenseNet<double> net(c);
  net.initialize(101);
  CounterRng rng(derive_seed(101, "acceptance-gradient"));
  for (auto& t : net.tensors()) {
    if (t.name.ends_with(".gamma") || t.name.ends_with(".beta") || t.name.ends_with(".bias"))
      for (auto& v : t.values) v += rng.uniform(-0.3, 0.3);
  }
  std::vector<double> input(4 * static_cast<std::size_t>(c.input_shape().elements()));
  for (auto& v : input) v = rng.uniform();
  std::size_t params = 0;
  for (const auto& t : net.tensors())
    if (t.trainable) params += t.values.size();
  const double err = testutil::gradient_check(net, input, {0, 1, 2, 4});
  const double secs = seconds_since(t0);
  return {err < 1e-3 && secs < 60.0, std::to_string(params) + " parameters, max relative error " + fmt("%.3g", err)};
}

Verdict statistics(const Env&) {
  int checks = 0, bad = 0;
  std::string first;
  auto expect = [&](bool ok, const std::string& what) {
    ++checks;
    if (!ok && bad++ == 0) first = what;
  };
  CounterRng rng(derive_seed(7, "acceptance-stats"));

  for (int t = 0; t < 60; ++t) {
    const int n = 2 + static_cast<int>(rng.below(11));
    const auto s = draws(rng, n, t % 2 ? 4 : 0);
    std::vector<std::uint8_t> y(n);
    for (int i = 0; i < n; ++i) y[i] = static_cast<std::uint8_t>(i == 0 ? 0 : i == 1 ? 1 : rng.below(2));
    expect(std::abs(auc_binary(s, y) - oracle::auc_pairs(s, y)) < 1e-12, "auc_binary");
  }

  for (int t = 0; t < 30; ++t) {
    const int n = 5 + static_cast<int>(rng.below(8));
    std::vector<ScoredSample> samples(n);
    for (int i = 0; i < n; ++i) {
      samples[i].true_label = label_from_index(i < kNumClasses ? i : static_cast<int>(rng.below(kNumClasses)));
      double sum = 0;
      for (auto& p : samples[i].probabilities) sum += p = t % 3 ? rng.uniform() : static_cast<double>(rng.below(3));
      for (auto& p : samples[i].probabilities) p = sum > 0 ? p / sum : 0.2;
    }
    const MulticlassAuc got = multiclass_auc(samples);
    std::vector<double> pooled;
    std::vector<std::uint8_t> pooled_y;
    double macro = 0;
    int defined = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      std::vector<double> sc;
      std::vector<std::uint8_t> y;
      for (const auto& s : samples) {
        sc.push_back(s.probabilities[c]);
        y.push_back(index_of(s.true_label) == c);
      }
      pooled.insert(pooled.end(), sc.begin(), sc.end());
      pooled_y.insert(pooled_y.end(), y.begin(), y.end());
      const double want = oracle::auc_pairs(sc, y);
      expect(got.per_class[c].has_value() && std::abs(*got.per_class[c] - want) < 1e-12, "multiclass per-class");
      macro += want;
      ++defined;
    }
    expect(std::abs(got.macro - macro / defined) < 1e-12, "multiclass macro");
    expect(std::abs(got.micro - oracle::auc_pairs(pooled, pooled_y)) < 1e-12, "multiclass micro");
  }

  for (int t = 0; t < 40; ++t) {
    const int n = 4 + static_cast<int>(rng.below(9));
    const auto x = draws(rng, n, t % 3 ? 0 : 5), y = draws(rng, n, t % 2 ? 0 : 4);
    const double want = oracle::spearman_rho(x, y);
    if (!std::isfinite(want)) continue;
    const Correlation got = spearman(x, y);
    expect(std::abs(got.rho - want) < 1e-12, "spearman rho");
    if (std::abs(want) < 1)
      expect(std::abs(got.p_value - oracle::t_two_sided(want * std::sqrt((n - 2) / (1 - want * want)), n - 2)) < 1e-12,
             "spearman p");
  }

  for (int t = 0; t < 30; ++t) {
    const int k = 2 + static_cast<int>(rng.below(2));
    std::vector<std::vector<double>> g(k);
    int total = 0;
    for (auto& grp : g) {
      grp = draws(rng, 2 + static_cast<int>(rng.below(k == 2 ? 3 : 2)), t % 2 ? 5 : 0);
      total += static_cast<int>(grp.size());
    }
    if (total > 8) continue;
    const double want = oracle::kw_h(g);
    if (!std::isfinite(want)) continue;
    const TestResult got = kruskal_wallis(g);
    expect(std::abs(got.statistic - want) < 1e-12, "kruskal_wallis H");
    expect(std::abs(got.p_value - oracle::kw_permutation_p(g)) < 1e-12, "kruskal_wallis p");
  }

  for (int t = 0; t < 40; ++t) {
    const int na = 1 + static_cast<int>(rng.below(6)), nb = 1 + static_cast<int>(rng.below(12 - na));
    const auto a = draws(rng, na, t % 2 ? 4 : 0), b = draws(rng, nb, t % 2 ? 4 : 0);
    double u = 0;
    const double want = oracle::wilcoxon_exhaustive(a, b, &u);
    const TestResult got = wilcoxon_rank_sum(a, b);
    expect(std::abs(got.statistic - u) < 1e-12, "wilcoxon U");
    expect(std::abs(got.p_value - want) < 1e-12, "wilcoxon p");
  }

  for (int t = 0; t < 60; ++t) {
    ContingencyTable tab(2, std::vector<std::int64_t>(2));
    for (auto& row : tab)
      for (auto& v : row) v = static_cast<std::int64_t>(rng.below(4));
    if (tab[0][0] + tab[0][1] == 0 || tab[1][0] + tab[1][1] == 0 || tab[0][0] + tab[1][0] == 0 ||
        tab[0][1] + tab[1][1] == 0)
      continue;
    expect(std::abs(fisher_exact(tab).p_value - oracle::fisher_exhaustive(tab)) < 1e-12, "fisher 2x2");
  }
  for (int t = 0; t < 5; ++t) {
    ContingencyTable tab(3, std::vector<std::int64_t>(3));
    for (auto& row : tab)
      for (auto& v : row) v = 1 + static_cast<std::int64_t>(rng.below(3));
    expect(std::abs(fisher_exact(tab, derive_seed(t, "mc"), 50000).p_value - oracle::fisher_exhaustive(tab)) < 0.02,
           "fisher r x c Monte Carlo");
  }

  std::string detail = std::to_string(checks - bad) + "/" + std::to_string(checks) + " oracle checks agree";
  if (bad) detail += "; first mismatch: " + first;
  return {bad == 0, detail};
}

Verdict sampling(const Env&) {
  int sets = 0, violations = 0, patches = 0, reseeds = 0;
  for (int a = 0; a < 50; ++a) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      CounterRng rng(derive_seed(derive_seed(a, "acceptance-atlas"), attempt));
      const Grid grid{{12 + static_cast<int>(rng.below(17)), 12 + static_cast<int>(rng.below(17)),
                       8 + static_cast<int>(rng.below(13))},
                      {rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 3.0)}};
      const Atlas atlas = testutil::random_atlas(rng.next_u64(), 1 + static_cast<int>(rng.below(4)), grid);
      const PatchSpec spec{3 + static_cast<int>(rng.below(5)), static_cast<Dimensionality>(rng.below(3)),
                           rng.uniform(0.5, 4.0),                  rng.uniform(0.3, 1.0),
                           5 + static_cast<int>(rng.below(36)),    rng.next_u64()};
      try {
        const PatchSet set = sample_patches(atlas, spec);
        violations += testutil::verify_patchset(set, atlas).total();
        patches += static_cast<int>(set.size());
        ++sets;
        break;
      } catch (const InfeasibleError&) {
        ++reseeds;
      }
    }
  }
  return {sets == 50 && violations == 0,
          std::to_string(sets) + " patch sets, " + std::to_string(patches) + " patches, " +
              std::to_string(violations) + " violations (" + std::to_string(reseeds) + " infeasible draws reseeded)"};
}

// Class from the mean HU of the patch.
class StubClassifier : public PatchClassifier {
 public:
  StubClassifier(int size, Dimensionality dim) : size_(size), dim_(dim) {}
  int size_px() const override { return size_; }
  Dimensionality dimensionality() const override { return dim_; }
  std::vector<double> predict(std::span<const float> hu, std::size_t count) override {
    const std::size_t e = static_cast<std::size_t>(patch_shape(size_, dim_).elements());
    std::vector<double> out(count * kNumClasses, 0.0);
    for (std::size_t p = 0; p < count; ++p) {
      double sum = 0;
      for (std::size_t i = 0; i < e; ++i) sum += hu[p * e + i];
      const auto cls = static_cast<std::size_t>(std::floor(std::abs(sum / e))) % kNumClasses;
      out[p * kNumClasses + cls] = 1.0;
    }
    return out;
  }

 private:
  int size_;
  Dimensionality dim_;
};

Verdict partition(const Env&) {
  int ok = 0;
  std::string first;
  std::int64_t lung_total = 0;
  for (int t = 0; t < 20; ++t) {
    CounterRng rng(derive_seed(t, "acceptance-partition"));
    const Grid grid{{16 + static_cast<int>(rng.below(25)), 16 + static_cast<int>(rng.below(25)),
                     6 + static_cast<int>(rng.below(19))},
                    {rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 3.0)}};
    const LungMask lung = testutil::random_lung(rng.next_u64(), grid, 1 + static_cast<int>(rng.below(4)));
    const Volume volume = testutil::random_volume(rng.next_u64(), grid);
    StubClassifier stub(3 + static_cast<int>(rng.below(7)), static_cast<Dimensionality>(rng.below(3)));
    ReconstructionConfig rc;
    rc.stride = {1 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(3))};
    rc.batch_patches = 1 + static_cast<int>(rng.below(64));
    const ClassificationMap map = classify_volume(stub, volume, lung, rc);

    std::string why;
    std::array<std::int64_t, kNumClasses> counts{};
    std::int64_t lung_voxels = 0;
    for (std::size_t i = 0; i < lung.data().size(); ++i) {
      const std::uint8_t c = map.data()[i];
      if (lung.data()[i]) {
        ++lung_voxels;
        if (c < 1 || c > kNumClasses) why = "lung voxel without a class";
        else ++counts[c - 1];
      } else if (c != 0) {
        why = "class written outside the lung";
      }
    }
    lung_total += lung_voxels;
    const QuantReport q = quantify(map, lung, "p" + std::to_string(t));
    std::int64_t vox = 0;
    double ml = 0, pct = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      vox += q.classes[c].voxels;
      ml += q.classes[c].volume_ml;
      pct += q.classes[c].pct;
      if (q.classes[c].voxels != counts[c]) why = "class voxel count differs from direct count";
    }
    const double lung_ml = static_cast<double>(lung_voxels) * grid.voxel_volume_ml();
    if (vox != lung_voxels || q.lung_voxels != lung_voxels) why = "class volumes do not sum to the lung volume";
    if (std::abs(ml - lung_ml) > 1e-9 * std::max(1.0, lung_ml)) why = "class ml do not sum to the lung ml";
    if (std::abs(pct - 100.0) > 0.01) why = "percentages sum to " + fmt("%.6f", pct);
    if (why.empty()) ++ok;
    else if (first.empty()) first = "mask " + std::to_string(t) + ": " + why;
  }
  std::string detail = std::to_string(ok) + "/20 masks partitioned exactly (" + std::to_string(lung_total) + " lung voxels)";
  if (!first.empty()) detail += "; " + first;
  return {ok == 20, detail};
}

Verdict end_to_end(const Env& env) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(env.desk_dir());
  run_stages(env.desk, env.desk_dir(), {Stage::kPhantom, Stage::kAtlas, Stage::kSample, Stage::kTrain, Stage::kEvaluate},
             1);
  const double secs = seconds_since(t0);
  std::map<std::string, std::size_t> split_sizes;
  for (const auto& [name, ids] : run_splits(env.desk, env.desk_dir())) split_sizes[name] = ids.size();
  const Json ev = read_json(env.desk_dir() / "evaluation.json");
  for (const auto& s : ev["splits"]) {
    if (s["split"] != "test") continue;
    const double micro = s["auc_micro"].get<double>();
    double worst = 1.0;
    std::string per;
    for (TextureLabel l : kAllLabels) {
      const double a = s["auc_per_class"][std::string(name_of(l))].get<double>();
      worst = std::min(worst, a);
      per += std::string(per.empty() ? "" : " ") + std::string(name_of(l)) + "=" + fmt("%.3f", a);
    }
    const bool sizes = split_sizes["train"] == 8 && split_sizes["validation"] == 2 && split_sizes["test"] == 2;
    return {sizes && micro >= 0.90 && worst >= 0.80 && secs < 900.0,
            "scans " + std::to_string(split_sizes["train"]) + "/" + std::to_string(split_sizes["validation"]) + "/" +
                std::to_string(split_sizes["test"]) + ", test micro AUC " + fmt("%.4f", micro) + ", per class " + per};
  }
  return {false, "evaluation.json has no test split"};
}

PhantomCohortConfig cohort_with(const RunConfig& cfg, double emphysema, double others) {
  PhantomCohortConfig c = cfg.phantom;
  c.compartments = {{TextureLabel::kGroundGlass, others},
                    {TextureLabel::kGroundGlassReticulation, others},
                    {TextureLabel::kHoneycombing, others},
                    {TextureLabel::kEmphysema, emphysema}};
  c.burden_jitter = 0.0;
  return c;
}

QuantReport classify_phantom(Model& model, const RunConfig& cfg, const Phantom& ph, const std::string& id) {
  NetworkClassifier classifier(model);
  return quantify(classify_volume(classifier, ph.volume, ph.lung, cfg.reconstruction), ph.lung, id);
}

Verdict quantification(const Env& env) {
  if (!fs::exists(env.desk_model())) return {false, "no trained model (criterion 5 did not run)"};
  set_num_threads(1);
  Model model = load_model(env.desk_model());
  const Phantom ph = generate_phantom(cohort_with(env.desk, 0.30, 0.10).scan_spec(0, derive_seed(env.desk.rng_seed, "em30")));
  ClassificationMap truth(ph.labels.grid());
  std::copy(ph.labels.data().begin(), ph.labels.data().end(), truth.data().begin());
  const double oracle_pct = quantify(truth, ph.lung, "em30").of(TextureLabel::kEmphysema).pct;
  const double half_voxel = 50.0 / static_cast<double>(count_nonzero(ph.lung));
  const double got = classify_phantom(model, env.desk, ph, "em30").of(TextureLabel::kEmphysema).pct;
  return {std::abs(got - 30.0) <= 5.0 && std::abs(oracle_pct - 30.0) <= half_voxel,
          "trained emphysema_pct " + fmt("%.2f", got) + ", oracle " + fmt("%.4f", oracle_pct)};
}

Verdict severity(const Env& env) {
  if (!fs::exists(env.desk_model())) return {false, "no trained model (criterion 5 did not run)"};
  set_num_threads(1);
  Model model = load_model(env.desk_model());
  const double burden[] = {0.02, 0.10, 0.25, 0.45};
  std::vector<QuantReport> reports;
  std::map<std::string, SeverityGrade> grades;
  for (int g = 0; g < 4; ++g)
    for (int r = 0; r < 3; ++r) {
      const int index = g * 3 + r;
      const std::string id = "sev" + std::to_string(index);
      const Phantom ph =
          generate_phantom(cohort_with(env.desk, burden[g], 0.08).scan_spec(index, derive_seed(env.desk.rng_seed, "severity")));
      reports.push_back(classify_phantom(model, env.desk, ph, id));
      grades[id] = kAllGrades[g];
    }
  const std::vector<QuantFeature> feature{QuantFeature::kEmphysema};
  const SeveritySummary sum = severity_bucket_summary(reports, grades, feature);
  const FeatureSeverity& f = sum.features.at(0);
  bool increasing = f.grades.size() == 4;
  std::string medians;
  for (std::size_t i = 0; i < f.grades.size(); ++i) {
    if (i > 0 && !(f.grades[i].median > f.grades[i - 1].median)) increasing = false;
    medians += std::string(i ? "/" : "") + fmt("%.1f", f.grades[i].median);
  }
  return {increasing && f.kruskal_wallis.p_value < 0.01,
          "median emphysema % by grade " + medians + ", Kruskal-Wallis p " + fmt("%.3g", f.kruskal_wallis.p_value)};
}

std::map<fs::path, fs::path> files_under(const fs::path& root) {
  std::map<fs::path, fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root)] = e.path();
  return out;
}

Verdict determinism(const Env& env) {
  if (!fs::exists(env.desk_model())) return {false, "no single-thread run (criterion 5 did not run)"};
  if (!fs::exists(env.desk_dir() / "hypersearch.json")) run_stages(env.desk, env.desk_dir(), {Stage::kHypersearch}, 1);
  run_stages(env.desk, env.desk_dir(),
             {Stage::kClassify, Stage::kQuantify, Stage::kEvaluate, Stage::kCorrelate, Stage::kReport}, 1);
  const fs::path many = env.work / "desk_t8";
  fs::remove_all(many);
  std::vector<Stage> all(kAllStages.begin(), kAllStages.end());
  set_num_threads(8);
  for (Stage s : all) run_stage(s, env.desk, many);
  set_num_threads(1);

  const auto a = files_under(env.desk_dir()), b = files_under(many);
  std::size_t same = 0;
  std::string first;
  for (const auto& [rel, path] : a) {
    auto it = b.find(rel);
    if (it != b.end() && testutil::slurp(path) == testutil::slurp(it->second)) ++same;
    else if (first.empty()) first = rel.string();
  }
  for (const auto& [rel, path] : b)
    if (!a.count(rel) && first.empty()) first = rel.string();
  const bool pass = first.empty() && a.size() == b.size();
  std::string detail = std::to_string(same) + "/" + std::to_string(a.size()) + " files byte-identical at 1 vs 8 threads";
  if (!pass) detail += "; first difference: " + first;
  return {pass, detail};
}

Verdict hypersearch(const Env& env) {
  if (!fs::exists(env.desk_dir() / "atlas.json")) return {false, "no desk atlas (criterion 5 did not run)"};
  const auto t0 = std::chrono::steady_clock::now();
  run_stages(env.desk, env.desk_dir(), {Stage::kHypersearch}, 1);
  const double secs = seconds_since(t0);
  const Json h = read_json(env.desk_dir() / "hypersearch.json");
  const auto& board = h["leaderboard"];
  int corrupted = 0;
  for (const auto& e : board) corrupted += e["point"]["corrupt_labels"].get<bool>();
  std::string scores;
  for (const auto& e : board)
    scores += std::string(scores.empty() ? "" : " ") + (e["point"]["corrupt_labels"].get<bool>() ? "corrupt:" : "") +
              fmt("%.3f", e["score"].get<double>());
  const bool last = !board.empty() && board.back()["point"]["corrupt_labels"].get<bool>();
  return {board.size() == 4 && corrupted == 1 && last && secs < 1800.0, "leaderboard scores " + scores};
}

bool same_volume(const Volume& a, const Volume& b) {
  return a.grid() == b.grid() && a.data().size() == b.data().size() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(std::int16_t)) == 0;
}

Verdict round_trips(const Env& env) {
  const fs::path dir = env.work / "roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  int volumes = 0, models = 0;
  for (int t = 0; t < 100; ++t) {
    const Volume v = testutil::random_rvol(derive_seed(t, "acceptance-rvol"));
    const fs::path p = dir / ("v" + std::to_string(t) + ".rvol.json");
    save_volume(v, p);
    volumes += same_volume(v, load_volume(p));

    const Model m = testutil::random_model(derive_seed(t, "acceptance-model"));
    const fs::path w = dir / ("m" + std::to_string(t) + ".tqwt");
    save_model(m, w);
    const Model back = load_model(w);
    models += testutil::bit_identical(m, back) && serialize_model(back) == testutil::slurp(w);
  }
  fs::remove_all(dir);
  return {volumes == 100 && models == 100,
          std::to_string(volumes) + "/100 volumes and " + std::to_string(models) + "/100 weight files bit-exact"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lungtex acceptance suite"};
  fs::path work = "acceptance_work";
  fs::path desk_config;
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--desk-config", desk_config, "Desk-scale run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  Env env{work, load_run_config(desk_config.string())};
  fs::create_directories(env.work);

  const std::vector<std::pair<int, std::function<Verdict(const Env&)>>> criteria = {
      {1, gradient},       {2, statistics}, {3, sampling},    {4, partition},   {5, end_to_end},
      {6, quantification}, {7, severity},   {9, hypersearch}, {8, determinism}, {10, round_trips}};
  const char* names[] = {"",
                         "gradient correctness",
                         "statistics oracle equivalence",
                         "sampling invariants",
                         "reconstruction partition",
                         "phantom end-to-end",
                         "quantification accuracy",
                         "monotone severity association",
                         "determinism",
                         "hypersearch sanity",
                         "round-trips"};

  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn(env);
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, names[id], v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
