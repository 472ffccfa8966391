/* bevfuse public C API: multi-modal BEV fusion, trajectory prediction and
 * planning engine behind opaque handles and status codes. */
#ifndef BEVFUSE_H
#define BEVFUSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BF_API __declspec(dllexport)
#else
#define BF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct bf_engine bf_engine;

typedef enum bf_status {
  BF_OK = 0,
  BF_ERR_INVALID_ARGUMENT = 1,
  BF_ERR_IO = 2,
  BF_ERR_PARSE = 3,
  BF_ERR_NUMERIC = 4,
  BF_ERR_INTERNAL = 5
} bf_status;

BF_API const char* bf_version(void);

/* Engines carry a configuration and the message of the last failed call.
 * They are independent; use one per thread. */
BF_API bf_engine* bf_engine_new(void);
BF_API void bf_engine_free(bf_engine* e);

/* Message of the last failed call on this engine, empty string if none. */
BF_API const char* bf_engine_last_error(const bf_engine* e);

/* Load the JSON experiment configuration (with BEVFUSE_* environment
 * overrides applied). A fresh engine starts from built-in defaults. */
BF_API bf_status bf_engine_load_config(bf_engine* e, const char* path);
BF_API bf_status bf_engine_set_config(bf_engine* e, const char* json_text);

/* Canonical JSON of the current configuration. Writes up to cap bytes
 * including the terminator; *needed receives the full length. */
BF_API bf_status bf_engine_config_dump(const bf_engine* e, char* buf,
                                       size_t cap, size_t* needed);

/* Write `count` deterministic scene files (seeds seed, seed+1, ...). */
BF_API bf_status bf_synth(bf_engine* e, uint64_t seed, int count,
                          const char* out_dir);

/* Run the three-stage schedule over the scenes in scene_dir. Checkpoints go
 * to out_dir; pass a checkpoint path to resume, NULL to start fresh. */
BF_API bf_status bf_train(bf_engine* e, const char* scene_dir,
                          const char* out_dir, const char* resume_checkpoint);

/* Evaluate a checkpoint (or the ground-truth oracle when oracle != 0) over
 * a scene directory; writes report.json, metrics.csv and per-scene
 * forecast/plan/occupancy files to out_dir. */
BF_API bf_status bf_eval(bf_engine* e, const char* checkpoint,
                         const char* scene_dir, const char* out_dir,
                         int oracle);

/* Newton trajectory optimization of a plan file against an occupancy file. */
BF_API bf_status bf_optimize(bf_engine* e, const char* plan_path,
                             const char* occupancy_path, const char* out_path);

/* Render a metric CSV from a report file and/or trajectory + BEV plots from
 * a scene file (with optional forecast/plan overlays). Unused inputs may be
 * NULL. */
BF_API bf_status bf_report(bf_engine* e, const char* report_path,
                           const char* scene_path, const char* forecast_path,
                           const char* plan_path, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* BEVFUSE_H */
