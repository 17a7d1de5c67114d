#ifndef SEMU_C_H
#define SEMU_C_H

/* C interface to the unlearning toolkit. Every entry point returns a status
 * code; on failure semu_last_error() carries a thread-local message. Strings
 * handed back through out-parameters are heap copies owned by the caller and
 * must be released with semu_string_free(). */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  SEMU_OK = 0,
  SEMU_ERR_CONFIG = 2,  /* bad config, flags, or input values */
  SEMU_ERR_IO = 3,      /* missing or unwritable files */
  SEMU_ERR_NUMERIC = 4  /* non-finite values during computation */
} semu_status;

/* Opaque, immutable run configuration. */
typedef struct semu_config semu_config;

/* Build a config from an optional JSON file plus dotted-path overrides
 * ("semu.gamma=0.5"). `path` may be NULL or empty when the config comes
 * entirely from overrides. On success *out owns the handle. */
semu_status semu_config_create(const char* path, const char* const* overrides,
                               size_t n_overrides, semu_config** out);
void semu_config_free(semu_config* cfg);

/* Task name of a config: "classification" or "diffusion". */
semu_status semu_config_task(const semu_config* cfg, char** out);

/* Unlearning mode of a config: "forget_only", "with_remain", or
 * "with_subset". Modes other than forget_only touch retained training data,
 * which callers may need to gate behind an explicit grant. */
semu_status semu_config_unlearn_mode(const semu_config* cfg, char** out);

/* Runners. Each writes its artifacts under out_dir and returns a
 * human-readable summary through *summary (pass NULL to skip it). */
semu_status semu_run_train(const semu_config* cfg, const char* out_dir,
                           char** summary);
semu_status semu_run_unlearn(const semu_config* cfg, const char* checkpoint,
                             const char* oracle, const char* out_dir,
                             int log_metrics, size_t jobs, char** summary);
semu_status semu_run_baseline(const semu_config* cfg, const char* kind,
                              const char* checkpoint, const char* out_dir,
                              size_t jobs, char** summary);
semu_status semu_run_eval(const semu_config* cfg, const char* checkpoint,
                          const char* oracle, const char* out_dir,
                          char** summary);
semu_status semu_run_spectrum(const semu_config* cfg, const char* checkpoint,
                              const char* out_dir, char** summary);

/* Side-by-side metric table for saved reports. anchor_index < 0 disables
 * delta columns; otherwise deltas are taken against that report. */
semu_status semu_compare_reports(const char* const* report_paths,
                                 size_t n_reports, int anchor_index,
                                 const char* out_dir, char** summary);

/* Message from the most recent failing call on this thread ("" after a
 * success). The pointer stays valid until the next call on the thread. */
const char* semu_last_error(void);

const char* semu_version(void);

void semu_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* SEMU_C_H */
