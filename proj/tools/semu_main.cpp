#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "semu/semu_c.h"

namespace {

struct ConfigHandle {
  semu_config* h = nullptr;
  ~ConfigHandle() { semu_config_free(h); }
};

int fail(semu_status st) {
  std::fprintf(stderr, "error: %s\n", semu_last_error());
  return static_cast<int>(st);
}

std::string take(char* s) {
  std::string r = s ? s : "";
  semu_string_free(s);
  return r;
}

int load_config(const std::string& path, const std::vector<std::string>& sets,
                ConfigHandle& cfg) {
  std::vector<const char*> raw;
  raw.reserve(sets.size());
  for (const std::string& s : sets) raw.push_back(s.c_str());
  semu_status st = semu_config_create(path.empty() ? nullptr : path.c_str(),
                                      raw.data(), raw.size(), &cfg.h);
  return st == SEMU_OK ? 0 : fail(st);
}

// diffusion-* subcommands refuse to run a classification config
int require_diffusion(const semu_config* cfg, const std::string& subcommand) {
  char* task = nullptr;
  if (semu_status st = semu_config_task(cfg, &task); st != SEMU_OK) return fail(st);
  std::string t = take(task);
  if (t != "diffusion") {
    std::fprintf(stderr, "error: %s requires task \"diffusion\" but config says \"%s\"\n",
                 subcommand.c_str(), t.c_str());
    return static_cast<int>(SEMU_ERR_CONFIG);
  }
  return 0;
}

// unlearning against retained data is an explicit grant, not a default
int require_remain_grant(const semu_config* cfg, bool allow_remain) {
  char* mode = nullptr;
  if (semu_status st = semu_config_unlearn_mode(cfg, &mode); st != SEMU_OK)
    return fail(st);
  std::string m = take(mode);
  if (m != "forget_only" && !allow_remain) {
    std::fprintf(stderr,
                 "error: unlearn mode \"%s\" reads the retained dataset; pass "
                 "--allow-remain to grant access\n",
                 m.c_str());
    return static_cast<int>(SEMU_ERR_CONFIG);
  }
  return 0;
}

int emit(semu_status st, char* summary) {
  if (st != SEMU_OK) return fail(st);
  std::string text = take(summary);
  std::fputs(text.c_str(), stdout);
  if (!text.empty() && text.back() != '\n') std::fputc('\n', stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subspace-adapter machine unlearning toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", semu_version());

  std::string config_path;
  std::vector<std::string> sets;
  std::string output = "out";
  std::size_t jobs = 1;
  bool log_metrics = false;
  app.add_option("--config", config_path, "JSON run config file");
  app.add_option("--set", sets, "override a config field, dotted.path=value");
  app.add_option("--output", output, "directory for artifacts")
      ->capture_default_str();
  app.add_option("--jobs", jobs, "parallel tasks for independent runs")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_flag("--log-metrics", log_metrics, "write per-epoch/iteration CSV logs");

  std::string checkpoint, oracle, kind;
  bool allow_remain = false;
  int anchor = -1;
  std::vector<std::string> reports;

  CLI::App* train = app.add_subcommand("train", "pretrain a model from config");
  CLI::App* unlearn = app.add_subcommand("unlearn", "run subspace-adapter unlearning");
  unlearn->add_option("--checkpoint", checkpoint, "pretrained model")->required();
  unlearn->add_option("--oracle", oracle, "oracle classifier (diffusion only)");
  unlearn->add_flag("--allow-remain", allow_remain,
                    "grant access to the retained dataset");
  CLI::App* baseline = app.add_subcommand("baseline", "run a comparison method");
  baseline->add_option("--checkpoint", checkpoint, "pretrained model")->required();
  baseline->add_option("--kind", kind, "retrain | ft | ga | rl | all")->required();
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint, no mutation");
  eval->add_option("--checkpoint", checkpoint, "model to evaluate")->required();
  eval->add_option("--oracle", oracle, "oracle classifier (diffusion only)");
  CLI::App* spectrum =
      app.add_subcommand("spectrum", "forget-gradient spectra per layer");
  spectrum->add_option("--checkpoint", checkpoint, "pretrained model")->required();
  CLI::App* compare = app.add_subcommand("compare", "tabulate saved reports");
  compare->add_option("reports", reports, "report.json files")->required();
  compare->add_option("--anchor", anchor,
                      "report index deltas are taken against (-1: none)")
      ->capture_default_str();
  CLI::App* dtrain =
      app.add_subcommand("diffusion-train", "pretrain the conditional sampler");
  CLI::App* dunlearn = app.add_subcommand("diffusion-unlearn",
                                          "unlearn a class from the sampler");
  dunlearn->add_option("--checkpoint", checkpoint, "pretrained sampler")->required();
  dunlearn->add_option("--oracle", oracle, "oracle classifier");
  dunlearn->add_flag("--allow-remain", allow_remain,
                     "grant access to the retained dataset");

  for (CLI::App* sub : {train, unlearn, baseline, eval, spectrum, compare, dtrain,
                        dunlearn})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(SEMU_ERR_CONFIG);
  }

  if (app.got_subcommand(compare)) {
    std::vector<const char*> raw;
    raw.reserve(reports.size());
    for (const std::string& r : reports) raw.push_back(r.c_str());
    char* summary = nullptr;
    semu_status st =
        semu_compare_reports(raw.data(), raw.size(), anchor, output.c_str(), &summary);
    return emit(st, summary);
  }

  ConfigHandle cfg;
  if (int rc = load_config(config_path, sets, cfg); rc != 0) return rc;

  char* summary = nullptr;
  if (app.got_subcommand(train)) {
    semu_status st = semu_run_train(cfg.h, output.c_str(), &summary);
    return emit(st, summary);
  }

  if (app.got_subcommand(dtrain)) {
    if (int rc = require_diffusion(cfg.h, "diffusion-train"); rc != 0) return rc;
    semu_status st = semu_run_train(cfg.h, output.c_str(), &summary);
    return emit(st, summary);
  }

  if (app.got_subcommand(unlearn) || app.got_subcommand(dunlearn)) {
    if (app.got_subcommand(dunlearn))
      if (int rc = require_diffusion(cfg.h, "diffusion-unlearn"); rc != 0) return rc;
    if (int rc = require_remain_grant(cfg.h, allow_remain); rc != 0) return rc;
    semu_status st = semu_run_unlearn(cfg.h, checkpoint.c_str(),
                                      oracle.empty() ? nullptr : oracle.c_str(),
                                      output.c_str(), log_metrics ? 1 : 0, jobs,
                                      &summary);
    return emit(st, summary);
  }

  if (app.got_subcommand(baseline)) {
    semu_status st = semu_run_baseline(cfg.h, kind.c_str(), checkpoint.c_str(),
                                       output.c_str(), jobs, &summary);
    return emit(st, summary);
  }

  if (app.got_subcommand(eval)) {
    semu_status st = semu_run_eval(cfg.h, checkpoint.c_str(),
                                   oracle.empty() ? nullptr : oracle.c_str(),
                                   output.c_str(), &summary);
    return emit(st, summary);
  }

  if (app.got_subcommand(spectrum)) {
    semu_status st =
        semu_run_spectrum(cfg.h, checkpoint.c_str(), output.c_str(), &summary);
    return emit(st, summary);
  }

  std::fprintf(stderr, "error: no subcommand\n");
  return static_cast<int>(SEMU_ERR_CONFIG);
}
