#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "lungtex/lungtex.h"

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void log_line(const char* msg, void* user) {
  if (!*static_cast<bool*>(user)) std::fprintf(stderr, "%s\n", msg);
}

int exit_code(lt_status s) { return s == LT_OK ? 0 : s == LT_ERR_INVALID_ARGUMENT ? 1 : 2; }

int report(lt_status s, const std::string& stage) {
  if (s != LT_OK) std::fprintf(stderr, "lungtex %s: %s: %s\n", stage.c_str(), lt_status_name(s), lt_last_error());
  return exit_code(s);
}

int run(const std::string& stage, Options& o) {
  lt_config* cfg = nullptr;
  lt_status s = o.config.empty() ? lt_config_default(&cfg) : lt_config_load(o.config.c_str(), &cfg);
  if (s != LT_OK) return report(s, stage);
  if (o.seed) s = lt_config_set_seed(cfg, *o.seed);
  int threads = 0;
  if (s == LT_OK) s = lt_config_threads(cfg, &threads);
  if (s == LT_OK) s = lt_set_threads(o.threads ? *o.threads : threads);
  if (s == LT_OK) s = lt_run_stage(cfg, stage.c_str(), o.out.c_str(), log_line, &o.quiet);
  lt_config_free(cfg);
  return report(s, stage);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-based lung texture classification and quantification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lt_version()));

  Options o;
  const std::pair<const char*, const char*> stages[] = {
      {"phantom", "Generate the phantom cohort, manifest and synthetic clinical table"},
      {"atlas", "Index labelled voxels of every scan and fix the scan splits"},
      {"sample", "Sample balanced patch sets for every split"},
      {"train", "Train the classifier on the training split"},
      {"hypersearch", "Cross-validated search over sampling hyperparameters"},
      {"classify", "Sliding-window classification of whole lungs"},
      {"quantify", "Per-class lung volume percentages from classification maps"},
      {"evaluate", "Patch-level accuracy, AUC and ROC curves"},
      {"correlate", "Join quantification with the clinical table"},
      {"report", "Summarise available artifacts as markdown"},
  };
  for (const auto& [name, help] : stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "Run configuration JSON (defaults when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", o.threads, "Worker threads (0 = all; overrides the config)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", o.seed, "Run seed (overrides the config)");
    sub->add_flag("-q,--quiet", o.quiet, "Suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  for (CLI::App* sub : app.get_subcommands()) return run(sub->get_name(), o);
  return 1;
}
