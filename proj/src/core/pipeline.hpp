#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "core/config.hpp"

namespace lungtex {

// Stages of the command-line pipeline.  Each reads and writes files below
// one output directory:
//
//   phantom      scans/<id>.rvol, scans/<id>_labels.rvol, scans/<id>_lung.rvol,
//                scans/<id>_census.json, manifest.json, clinical.csv
//   atlas        atlas.json (candidate counts and scan splits)
//   sample       patches/<split>.{json,f32,records.csv}
//   train        model.tqwt, history.csv, train.json
//   hypersearch  hypersearch.json
//   classify     maps/<id>.rvol
//   quantify     quant/<id>.json, quant.csv
//   evaluate     scores.csv, evaluation.json, roc_<split>.csv, roc_<split>.svg
//   correlate    correlation.json
//   report       report.md
enum class Stage { kPhantom, kAtlas, kSample, kTrain, kHypersearch, kClassify, kQuantify, kEvaluate, kCorrelate, kReport };

inline constexpr std::array<Stage, 10> kAllStages = {Stage::kPhantom,   Stage::kAtlas,    Stage::kSample,
                                                     Stage::kTrain,     Stage::kHypersearch, Stage::kClassify,
                                                     Stage::kQuantify,  Stage::kEvaluate, Stage::kCorrelate,
                                                     Stage::kReport};

std::string_view name_of(Stage s);
std::optional<Stage> stage_from_name(std::string_view name);

using LogSink = std::function<void(const std::string&)>;

// Runs one stage.  The configuration is validated first.
void run_stage(Stage stage, const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log = {});

// Manifest path of a run: cfg.paths.manifest or <out>/manifest.json.
std::filesystem::path manifest_path(const RunConfig& cfg, const std::filesystem::path& out);

// Scan splits of a run, from atlas.json when present, otherwise from the
// manifest, otherwise a seeded split of the manifest's scans.
std::vector<std::pair<std::string, std::vector<std::string>>> run_splits(const RunConfig& cfg,
                                                                         const std::filesystem::path& out);

}  // namespace lungtex
