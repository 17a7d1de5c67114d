#include "semu/semu_c.h"

#include <cstring>
#include <string>
#include <vector>

#include "semu/config.hpp"
#include "semu/errors.hpp"
#include "semu/pipeline.hpp"

struct semu_config {
  semu::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* p = new char[s.size() + 1];
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void set_summary(char** summary, const std::string& text) {
  if (summary) *summary = dup_string(text);
}

std::string opt(const char* s) { return s ? std::string(s) : std::string(); }

// Runs f, translating the exception taxonomy onto status codes.
template <typename F>
semu_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return SEMU_OK;
  } catch (const semu::ConfigError& e) {
    g_last_error = e.what();
    return SEMU_ERR_CONFIG;
  } catch (const semu::InvalidInputError& e) {
    g_last_error = e.what();
    return SEMU_ERR_CONFIG;
  } catch (const semu::IoError& e) {
    g_last_error = e.what();
    return SEMU_ERR_IO;
  } catch (const semu::NumericalError& e) {
    g_last_error = e.what();
    return SEMU_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SEMU_ERR_CONFIG;
  }
}

semu_status require(bool ok, const char* msg) {
  if (ok) return SEMU_OK;
  g_last_error = msg;
  return SEMU_ERR_CONFIG;
}

}  // namespace

extern "C" {

semu_status semu_config_create(const char* path, const char* const* overrides,
                               size_t n_overrides, semu_config** out) {
  if (semu_status st = require(out != nullptr, "semu_config_create: out is NULL");
      st != SEMU_OK)
    return st;
  *out = nullptr;
  if (semu_status st =
          require(overrides != nullptr || n_overrides == 0,
                  "semu_config_create: overrides is NULL but n_overrides > 0");
      st != SEMU_OK)
    return st;
  return guarded([&] {
    std::vector<std::string> sets;
    for (size_t i = 0; i < n_overrides; ++i) sets.push_back(opt(overrides[i]));
    auto* handle = new semu_config{semu::resolve_config(opt(path), sets)};
    *out = handle;
  });
}

void semu_config_free(semu_config* cfg) { delete cfg; }

semu_status semu_config_task(const semu_config* cfg, char** out) {
  if (semu_status st = require(cfg != nullptr && out != nullptr,
                               "semu_config_task: NULL argument");
      st != SEMU_OK)
    return st;
  return guarded([&] {
    *out = dup_string(cfg->cfg.task == semu::RunConfig::Task::diffusion
                          ? "diffusion"
                          : "classification");
  });
}

semu_status semu_config_unlearn_mode(const semu_config* cfg, char** out) {
  if (semu_status st = require(cfg != nullptr && out != nullptr,
                               "semu_config_unlearn_mode: NULL argument");
      st != SEMU_OK)
    return st;
  return guarded([&] { *out = dup_string(semu::to_string(cfg->cfg.unlearn.mode)); });
}

semu_status semu_run_train(const semu_config* cfg, const char* out_dir,
                           char** summary) {
  if (semu_status st = require(cfg != nullptr && out_dir != nullptr,
                               "semu_run_train: NULL argument");
      st != SEMU_OK)
    return st;
  return guarded([&] { set_summary(summary, semu::run_train(cfg->cfg, out_dir)); });
}

semu_status semu_run_unlearn(const semu_config* cfg, const char* checkpoint,
                             const char* oracle, const char* out_dir,
                             int log_metrics, size_t jobs, char** summary) {
  if (semu_status st =
          require(cfg != nullptr && checkpoint != nullptr && out_dir != nullptr,
                  "semu_run_unlearn: NULL argument");
      st != SEMU_OK)
    return st;
  return guarded([&] {
    set_summary(summary, semu::run_unlearn(cfg->cfg, checkpoint, opt(oracle), out_dir,
                                           log_metrics != 0, jobs));
  });
}

semu_status semu_run_baseline(const semu_config* cfg, const char* kind,
                              const char* checkpoint, const char* out_dir,
                              size_t jobs, char** summary) {
  if (semu_status st = require(cfg != nullptr && kind != nullptr &&
                                   checkpoint != nullptr && out_dir != nullptr,
                               "semu_run_baseline: NULL argument");
      st != SEMU_OK)
    return st;
  return guarded([&] {
    set_summary(summary,
                semu::run_baseline_cmd(cfg->cfg, kind, checkpoint, out_dir, jobs));
  });
}

semu_status semu_run_eval(const semu_config* cfg, const char* checkpoint,
                          const char* oracle, const char* out_dir, char** summary) {
  if (semu_status st =
          require(cfg != nullptr && checkpoint != nullptr && out_dir != nullptr,
                  "semu_run_eval: NULL argument");
      st != SEMU_OK)
    return st;
  return guarded([&] {
    set_summary(summary,
                semu::run_eval_cmd(cfg->cfg, checkpoint, opt(oracle), out_dir));
  });
}

semu_status semu_run_spectrum(const semu_config* cfg, const char* checkpoint,
                              const char* out_dir, char** summary) {
  if (semu_status st =
          require(cfg != nullptr && checkpoint != nullptr && out_dir != nullptr,
                  "semu_run_spectrum: NULL argument");
      st != SEMU_OK)
    return st;
  return guarded([&] {
    set_summary(summary, semu::run_spectrum_cmd(cfg->cfg, checkpoint, out_dir));
  });
}

semu_status semu_compare_reports(const char* const* report_paths, size_t n_reports,
                                 int anchor_index, const char* out_dir,
                                 char** summary) {
  if (semu_status st = require(report_paths != nullptr || n_reports == 0,
                               "semu_compare_reports: report_paths is NULL");
      st != SEMU_OK)
    return st;
  if (semu_status st =
          require(out_dir != nullptr, "semu_compare_reports: out_dir is NULL");
      st != SEMU_OK)
    return st;
  return guarded([&] {
    std::vector<std::string> paths;
    for (size_t i = 0; i < n_reports; ++i) paths.push_back(opt(report_paths[i]));
    set_summary(summary, semu::run_compare(paths, anchor_index, out_dir));
  });
}

const char* semu_last_error(void) { return g_last_error.c_str(); }

const char* semu_version(void) { return "0.1.0"; }

void semu_string_free(char* s) { delete[] s; }

}  // extern "C"
