#include "core/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "core/atlas.hpp"
#include "core/clinical.hpp"
#include "core/error.hpp"
#include "core/evaluate.hpp"
#include "core/io.hpp"
#include "core/phantom.hpp"
#include "core/random.hpp"
#include "core/reconstruct.hpp"
#include "core/roc.hpp"
#include "core/rvol.hpp"
#include "core/train.hpp"

namespace lungtex {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 10> kStageNames = {"phantom",  "atlas",    "sample",   "train",     "hypersearch",
                                                          "classify", "quantify", "evaluate", "correlate", "report"};

struct Ctx {
  const RunConfig& cfg;
  fs::path out;
  const LogSink& log;

  void say(const std::string& msg) const {
    if (log) log(msg);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void require_file(const fs::path& p, std::string_view produced_by) {
  if (!fs::exists(p))
    throw IoError("missing input '" + p.string() + "' (run the " + std::string(produced_by) + " stage first)");
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  return f;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open '" + p.string() + "'");
  return f;
}

Manifest load_run_manifest(const Ctx& c) {
  const fs::path p = manifest_path(c.cfg, c.out);
  require_file(p, "phantom");
  return load_manifest(p);
}

Atlas load_atlas(const Manifest& m, const std::vector<std::string>& ids) {
  std::vector<ScanInput> inputs;
  for (const auto& id : ids) {
    const auto& e = m.entry(id);
    inputs.push_back({id, load_volume(e.volume), load_label_mask(e.labels)});
  }
  return build_atlas(std::move(inputs));
}

std::vector<std::string> all_ids(const Manifest& m) {
  std::vector<std::string> ids;
  for (const auto& e : m.scans) ids.push_back(e.scan_id);
  return ids;
}

LungMask lung_for(const RunConfig& cfg, const ManifestEntry& e, const Volume& volume) {
  if (e.lung) {
    LungMask lung = load_lung_mask(*e.lung);
    require_congruent(volume.grid(), lung.grid(), "lung mask of " + e.scan_id);
    return lung;
  }
  return threshold_lung_mask(volume, cfg.lung_mask);
}

fs::path patch_base(const fs::path& out, const std::string& split) { return out / "patches" / split; }

const std::vector<std::string>& split_ids(const std::vector<std::pair<std::string, std::vector<std::string>>>& splits,
                                          const std::string& name) {
  for (const auto& [n, ids] : splits)
    if (n == name) return ids;
  throw InvalidArgument("no scan split named '" + name + "'");
}

std::vector<std::string> classify_targets(const Ctx& c, const Manifest& m) {
  if (!c.cfg.classify.scan_ids.empty()) {
    for (const auto& id : c.cfg.classify.scan_ids) m.entry(id);
    return c.cfg.classify.scan_ids;
  }
  const auto splits = run_splits(c.cfg, c.out);
  std::set<std::string> wanted;
  for (const auto& s : c.cfg.classify.splits)
    for (const auto& id : split_ids(splits, s)) wanted.insert(id);
  std::vector<std::string> ids;
  for (const auto& e : m.scans)
    if (wanted.count(e.scan_id)) ids.push_back(e.scan_id);
  return ids;
}

SeverityGrade grade_for(double pct) {
  if (pct < 5.0) return SeverityGrade::kNone;
  if (pct < 15.0) return SeverityGrade::kMild;
  if (pct < 25.0) return SeverityGrade::kModerate;
  return SeverityGrade::kSevere;
}

// ---- stages ----

void stage_phantom(const Ctx& c) {
  const auto& pc = c.cfg.phantom;
  Manifest m;
  std::vector<ClinicalRecord> clinical;
  const std::uint64_t clin_seed = c.cfg.seed_for("clinical");
  for (int i = 0; i < pc.scan_count; ++i) {
    const std::string id = pc.scan_id(i);
    const Phantom ph = generate_phantom(pc.scan_spec(i, c.cfg.rng_seed));
    const fs::path dir = c.out / "scans";
    save_volume(ph.volume, dir / (id + ".rvol.json"));
    save_label_mask(ph.labels, dir / (id + "_labels.rvol.json"));
    save_lung_mask(ph.lung, dir / (id + "_lung.rvol.json"));
    Json census = to_json(ph.census);
    census = Json{{"scan_id", id}, {"census", census}};
    write_json(census, dir / (id + "_census.json"));
    m.scans.push_back({id, dir / (id + ".rvol.json"), dir / (id + "_labels.rvol.json"), dir / (id + "_lung.rvol.json")});

    // Synthetic clinical covariates derived from the ground-truth burden.
    const double em = 100.0 * ph.census.fraction(TextureLabel::kEmphysema);
    const double fib = 100.0 * (ph.census.fraction(TextureLabel::kGroundGlassReticulation) +
                                ph.census.fraction(TextureLabel::kHoneycombing));
    CounterRng rng(clin_seed, static_cast<std::uint64_t>(i));
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    const double noise = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    clinical.push_back({id, 95.0 - 0.5 * em - 0.7 * fib + 4.0 * noise, grade_for(em), grade_for(fib)});
    c.say("phantom " + id + ": " + std::to_string(ph.census.lung_voxels) + " lung voxels");
  }
  const auto ids = all_ids(m);
  const auto parts = split_scans(ids, c.cfg.split.fractions, c.cfg.seed_for("split"));
  for (std::size_t s = 0; s < parts.size(); ++s) m.splits.emplace_back(c.cfg.split.names[s], parts[s]);
  save_manifest(m, manifest_path(c.cfg, c.out));
  auto f = open_out(c.out / "clinical.csv");
  write_clinical_csv(clinical, f);
}

void stage_atlas(const Ctx& c) {
  const Manifest m = load_run_manifest(c);
  const Atlas atlas = load_atlas(m, all_ids(m));
  Json scans = Json::array();
  for (const auto& s : atlas.scans) {
    Json counts = Json::object();
    for (TextureLabel l : kAllLabels)
      counts[std::string(name_of(l))] = static_cast<std::int64_t>(s.candidates[index_of(l)].size());
    scans.push_back(Json{{"scan_id", s.scan_id}, {"dims", s.volume->grid().dims}, {"candidates", counts}});
  }
  Json totals = Json::object();
  for (TextureLabel l : kAllLabels) totals[std::string(name_of(l))] = atlas.candidate_count(l);
  Json splits = Json::object();
  for (const auto& [name, ids] : run_splits(c.cfg, c.out)) splits[name] = ids;
  write_json(Json{{"scans", scans}, {"candidate_totals", totals}, {"splits", splits}}, c.out / "atlas.json");
  c.say("atlas: " + std::to_string(atlas.scans.size()) + " scans");
}

void stage_sample(const Ctx& c) {
  const Manifest m = load_run_manifest(c);
  const auto splits = run_splits(c.cfg, c.out);
  const Atlas atlas = load_atlas(m, all_ids(m));
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& [name, ids] = splits[s];
    if (ids.empty()) {
      c.say("sample: split '" + name + "' has no scans, skipped");
      continue;
    }
    const Atlas sub = atlas.subset(ids);
    PatchSet set;
    if (s == 0) {
      set = sample_patches(sub, c.cfg.patch_spec, std::nullopt, name);
    } else {
      PatchSpec spec = c.cfg.patch_spec;
      spec.min_fill_factor = c.cfg.eval_sampling.min_fill_factor;
      spec.rng_seed = derive_seed(c.cfg.seed_for("sample"), name);
      set = sample_patches(sub, spec, c.cfg.eval_sampling.patches_per_class, name);
    }
    save_patchset(set, patch_base(c.out, name));
    c.say("sample: " + name + " " + std::to_string(set.size()) + " patches");
  }
}

void stage_train(const Ctx& c) {
  const auto& names = c.cfg.split.names;
  if (names.size() < 2) throw InvalidArgument("train needs a training and a validation split");
  for (int s = 0; s < 2; ++s) require_file(patch_base(c.out, names[s]).string() + ".json", "sample");
  const PatchSet train = load_patchset(patch_base(c.out, names[0]));
  const PatchSet val = load_patchset(patch_base(c.out, names[1]));
  if (!(train.spec == c.cfg.patch_spec))
    throw InvalidArgument("training patches were sampled with a different patch_spec (re-run sample)");
  Model model(c.cfg.model_config());
  model.initialize(c.cfg.seed_for("init"));
  const TrainResult r = train_model(model, train, val, c.cfg.train_config(), [&](const EpochRecord& e) {
    c.say("epoch " + std::to_string(e.epoch) + " loss " + fmt("%.4f", e.train_loss) + " train_acc " +
          fmt("%.4f", e.train_acc) + " val_acc " + fmt("%.4f", e.val_acc));
  });
  save_model(model, c.out / "model.tqwt");
  {
    auto f = open_out(c.out / "history.csv");
    write_history_csv(r.history, f);
  }
  Json summary = to_json(r);
  summary.update(Json{{"trainable_parameters", model.trainable_parameter_count()},
                  {"model", to_json(model.config())},
                  {"train_patches", train.size()},
                  {"validation_patches", val.size()}});
  write_json(summary, c.out / "train.json");
}

void stage_hypersearch(const Ctx& c) {
  const Manifest m = load_run_manifest(c);
  const auto splits = run_splits(c.cfg, c.out);
  // Every scan outside the last (held-out test) split takes part in the search.
  std::vector<std::string> ids;
  const std::size_t used = splits.size() > 1 ? splits.size() - 1 : 1;
  for (std::size_t s = 0; s < used; ++s)
    ids.insert(ids.end(), splits[s].second.begin(), splits[s].second.end());
  const Atlas atlas = load_atlas(m, ids);
  const SearchResult r = hyperparameter_search(atlas, c.cfg.hypergrid, c.cfg.search_config(), [&](const LeaderboardEntry& e) {
    c.say("hypersearch " + std::string(name_of(e.point.dimensionality)) + " N=" + std::to_string(e.point.size_px) +
          " r=" + fmt("%g", e.point.selection_radius_mm) + " fill=" + fmt("%g", e.point.min_fill_factor) +
          " ppc=" + std::to_string(e.point.patches_per_class) + (e.point.corrupt_labels ? " corrupted" : "") +
          " score " + fmt("%.4f", e.score));
  });
  write_json(to_json(r), c.out / "hypersearch.json");
}

void stage_classify(const Ctx& c) {
  const Manifest m = load_run_manifest(c);
  require_file(c.out / "model.tqwt", "train");
  Model model = load_model(c.out / "model.tqwt");
  NetworkClassifier classifier(model);
  for (const auto& id : classify_targets(c, m)) {
    const auto& e = m.entry(id);
    const Volume volume = load_volume(e.volume);
    const LungMask lung = lung_for(c.cfg, e, volume);
    const ClassificationMap map = classify_volume(classifier, volume, lung, c.cfg.reconstruction);
    save_classification_map(map, c.out / "maps" / (id + ".rvol.json"));
    c.say("classify: " + id);
  }
}

void stage_quantify(const Ctx& c) {
  const Manifest m = load_run_manifest(c);
  std::vector<QuantReport> reports;
  for (const auto& id : classify_targets(c, m)) {
    const auto& e = m.entry(id);
    const fs::path map_path = c.out / "maps" / (id + ".rvol.json");
    require_file(map_path, "classify");
    const ClassificationMap map = load_classification_map(map_path);
    const LungMask lung = e.lung ? load_lung_mask(*e.lung) : threshold_lung_mask(load_volume(e.volume), c.cfg.lung_mask);
    reports.push_back(quantify(map, lung, id));
    const auto& r = reports.back();
    c.say("quantify: " + id + " emphysema " + fmt("%.2f", r.of(TextureLabel::kEmphysema).pct) + "% fibrosis " +
          fmt("%.2f", r.fibrosis_pct) + "%");
  }
  auto csv = open_out(c.out / "quant.csv");
  write_quant_csv_header(csv);
  for (const auto& r : reports) {
    write_json(to_json(r), c.out / "quant" / (r.scan_id + ".json"));
    write_quant_csv_row(r, csv);
  }
}

void stage_evaluate(const Ctx& c) {
  std::vector<ScoredSplit> scored;
  if (!c.cfg.paths.scores_csv.empty()) {
    auto f = open_in(c.cfg.paths.scores_csv);
    scored = read_scores_csv(f);
  } else {
    require_file(c.out / "model.tqwt", "train");
    Model model = load_model(c.out / "model.tqwt");
    const auto& names = c.cfg.split.names;
    for (std::size_t s = 1; s < names.size(); ++s) {
      const fs::path base = patch_base(c.out, names[s]);
      if (!fs::exists(base.string() + ".json")) continue;
      scored.push_back({names[s], score_patchset(model, load_patchset(base))});
    }
    if (scored.empty()) throw IoError("evaluate found no evaluation patch sets (run the sample stage first)");
  }
  {
    auto f = open_out(c.out / "scores.csv");
    write_scores_csv(scored, f);
  }
  Json evals = Json::array();
  for (const auto& s : scored) {
    const SplitEvaluation e = evaluate_split(s.split, s.samples);
    evals.push_back(to_json(e));
    const auto curves = multiclass_roc(s.samples);
    auto rc = open_out(c.out / ("roc_" + s.split + ".csv"));
    write_roc_csv(rc, curves);
    auto rs = open_out(c.out / ("roc_" + s.split + ".svg"));
    write_roc_svg(rs, curves, "ROC (" + s.split + ")");
    c.say("evaluate: " + s.split + " n=" + std::to_string(e.n) + " accuracy " + fmt("%.4f", e.accuracy) +
          " micro AUC " + fmt("%.4f", e.auc.micro));
  }
  write_json(Json{{"splits", evals}}, c.out / "evaluation.json");
}

void stage_correlate(const Ctx& c) {
  require_file(c.out / "quant.csv", "quantify");
  const fs::path clin_path = c.cfg.paths.clinical_csv.empty() ? c.out / "clinical.csv" : fs::path(c.cfg.paths.clinical_csv);
  require_file(clin_path, "phantom");
  auto qf = open_in(c.out / "quant.csv");
  const auto reports = read_quant_csv(qf);
  auto cf = open_in(clin_path);
  const auto clinical = read_clinical_csv(cf);
  if (reports.empty()) throw InvalidArgument("quant.csv holds no scans");
  const ClinicalCorrelation r = correlate_clinical(reports, clinical);
  write_json(to_json(r), c.out / "correlation.json");
  c.say("correlate: " + std::to_string(r.n) + " scans");
}

std::string num(const Json& j, const char* f = "%.4f") {
  if (j.is_null()) return "n/a";
  if (j.is_number()) return fmt(f, j.get<double>());
  return j.dump();
}

void stage_report(const Ctx& c) {
  std::ostringstream md;
  md << "# Lung texture run report\n\n";
  md << "Seed: " << c.cfg.rng_seed << "\n\n";
  const fs::path mp = manifest_path(c.cfg, c.out);
  if (fs::exists(mp)) {
    const Manifest m = load_manifest(mp);
    md << "## Scans\n\n" << m.scans.size() << " scans.";
    for (const auto& [name, ids] : run_splits(c.cfg, c.out)) md << " " << name << ": " << ids.size() << ".";
    md << "\n\n";
  }
  if (fs::exists(c.out / "train.json")) {
    const Json t = read_json(c.out / "train.json");
    md << "## Training\n\n"
       << "| epochs | best epoch | best validation accuracy | early stop | parameters |\n|---|---|---|---|---|\n"
       << "| " << t["epochs"].dump() << " | " << t["best_epoch"].dump() << " | " << num(t["best_val_acc"]) << " | "
       << (t["stopped_early"].get<bool>() ? "yes" : "no") << " | " << t["trainable_parameters"].dump() << " |\n\n";
  }
  if (fs::exists(c.out / "evaluation.json")) {
    const Json e = read_json(c.out / "evaluation.json");
    md << "## Patch classification\n\n| split | n | accuracy | micro AUC | macro AUC |";
    for (TextureLabel l : kAllLabels) md << " AUC " << name_of(l) << " |";
    md << "\n|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& s : e["splits"]) {
      md << "| " << s["split"].get<std::string>() << " | " << s["n"].dump() << " | " << num(s["accuracy"]) << " | "
         << num(s["auc_micro"]) << " | " << num(s["auc_macro"]) << " |";
      for (TextureLabel l : kAllLabels) md << " " << num(s["auc_per_class"][std::string(name_of(l))]) << " |";
      md << "\n";
    }
    md << "\n";
  }
  if (fs::exists(c.out / "quant.csv")) {
    auto f = open_in(c.out / "quant.csv");
    const auto reports = read_quant_csv(f);
    md << "## Quantification (% of lung)\n\n| scan | lung ml |";
    for (TextureLabel l : kAllLabels) md << " " << name_of(l) << " |";
    md << " fibrosis |\n|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : reports) {
      md << "| " << r.scan_id << " | " << fmt("%.1f", r.total_lung_ml) << " |";
      for (TextureLabel l : kAllLabels) md << " " << fmt("%.2f", r.of(l).pct) << " |";
      md << " " << fmt("%.2f", r.fibrosis_pct) << " |\n";
    }
    md << "\n";
  }
  if (fs::exists(c.out / "correlation.json")) {
    const Json j = read_json(c.out / "correlation.json");
    md << "## Clinical correlation\n\n| feature | Spearman rho vs DLCO | p |\n|---|---|---|\n";
    for (const auto& r : j["spearman_vs_dlco"])
      md << "| " << r["feature"].get<std::string>() << " | " << num(r["rho"]) << " | " << num(r["p_value"], "%.3g")
         << " |\n";
    md << "\n";
    for (const char* key : {"emphysema_by_emphysema_grade", "fibrosis_by_fibrosis_grade"}) {
      for (const auto& f : j[key]["features"]) {
        md << "### " << f["feature"].get<std::string>() << " by grade\n\n| grade | n | median | IQR |\n|---|---|---|---|\n";
        for (const auto& g : f["grades"])
          md << "| " << g["grade"].get<std::string>() << " | " << g["n"].dump() << " | " << num(g["median"], "%.2f")
             << " | " << num(g["q1"], "%.2f") << "-" << num(g["q3"], "%.2f") << " |\n";
        md << "\nKruskal-Wallis p = " << num(f["kruskal_wallis"]["p_value"], "%.3g") << "\n\n";
      }
      for (const auto& w : j[key]["warnings"]) md << "> " << w.get<std::string>() << "\n\n";
    }
  }
  if (fs::exists(c.out / "hypersearch.json")) {
    const Json h = read_json(c.out / "hypersearch.json");
    md << "## Hyperparameter search\n\n| rank | dim | size | radius mm | fill | patches/class | corrupted | score |\n"
       << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& e : h["leaderboard"]) {
      const auto& p = e["point"];
      md << "| " << e["rank"].dump() << " | " << p["dimensionality"].get<std::string>() << " | " << p["size_px"].dump()
         << " | " << p["selection_radius_mm"].dump() << " | " << p["min_fill_factor"].dump() << " | "
         << p["patches_per_class"].dump() << " | " << (p["corrupt_labels"].get<bool>() ? "yes" : "no") << " | "
         << num(e["score"]) << (e["infeasible"].get<bool>() ? " (infeasible)" : "") << " |\n";
    }
    md << "\n";
  }
  write_text(md.str(), c.out / "report.md");
}

}  // namespace

std::string_view name_of(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

std::optional<Stage> stage_from_name(std::string_view name) {
  for (Stage s : kAllStages)
    if (name_of(s) == name) return s;
  return std::nullopt;
}

fs::path manifest_path(const RunConfig& cfg, const fs::path& out) {
  return cfg.paths.manifest.empty() ? out / "manifest.json" : fs::path(cfg.paths.manifest);
}

std::vector<std::pair<std::string, std::vector<std::string>>> run_splits(const RunConfig& cfg, const fs::path& out) {
  const Manifest m = load_manifest(manifest_path(cfg, out));
  std::vector<std::pair<std::string, std::vector<std::string>>> splits;
  if (!m.splits.empty()) {
    for (const auto& name : cfg.split.names) splits.emplace_back(name, m.split(name));
    return splits;
  }
  const auto parts = split_scans(all_ids(m), cfg.split.fractions, cfg.seed_for("split"));
  for (std::size_t s = 0; s < parts.size(); ++s) splits.emplace_back(cfg.split.names[s], parts[s]);
  return splits;
}

void run_stage(Stage stage, const RunConfig& cfg, const fs::path& out, const LogSink& log) {
  cfg.validate();
  fs::create_directories(out);
  const Ctx c{cfg, out, log};
  switch (stage) {
    case Stage::kPhantom: return stage_phantom(c);
    case Stage::kAtlas: return stage_atlas(c);
    case Stage::kSample: return stage_sample(c);
    case Stage::kTrain: return stage_train(c);
    case Stage::kHypersearch: return stage_hypersearch(c);
    case Stage::kClassify: return stage_classify(c);
    case Stage::kQuantify: return stage_quantify(c);
    case Stage::kEvaluate: return stage_evaluate(c);
    case Stage::kCorrelate: return stage_correlate(c);
    case Stage::kReport: return stage_report(c);
  }
}

}  // namespace lungtex
