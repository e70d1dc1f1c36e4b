#ifndef STAMO_STAMO_H
#define STAMO_STAMO_H

/* C interface to the emerging-entity feature learner. Every function that can
 * fail returns a status code; stamo_last_error() then describes the failure
 * on the calling thread. Objects are opaque and owned by the caller, who
 * releases them with the matching *_destroy function. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define STAMO_API __declspec(dllexport)
#else
#define STAMO_API __attribute__((visibility("default")))
#endif

typedef enum {
  STAMO_OK = 0,
  STAMO_USAGE = 1,   /* bad argument or configuration key */
  STAMO_DATA = 2,    /* malformed or missing input data */
  STAMO_RUNTIME = 3  /* anything else */
} stamo_status;

typedef struct stamo_plan stamo_plan;
typedef struct stamo_world stamo_world;
typedef struct stamo_pretrained stamo_pretrained;
typedef struct stamo_results stamo_results;

typedef struct {
  double acc, precision, recall, f1;
  size_t n_mentions, tp, fp, fn, correct;
  int precision_undefined, recall_undefined;
} stamo_metrics;

typedef void (*stamo_progress_fn)(const char* message, void* user);

STAMO_API const char* stamo_last_error(void);
STAMO_API const char* stamo_version(void);
/* Strings returned through char** out-parameters are freed with this. */
STAMO_API void stamo_free_string(char* s);

/* Plans: defaults plus key=value overrides. */
STAMO_API stamo_status stamo_plan_create(stamo_plan** out);
STAMO_API void stamo_plan_destroy(stamo_plan* plan);
STAMO_API stamo_status stamo_plan_load_config(stamo_plan* plan, const char* path);
STAMO_API stamo_status stamo_plan_set(stamo_plan* plan, const char* key, const char* value);
STAMO_API stamo_status stamo_plan_describe(const stamo_plan* plan, char** out);

/* Synthetic worlds. The plan's world.* keys shape the world; `seed` replaces world.seed. */
STAMO_API stamo_status stamo_world_generate(const stamo_plan* plan, uint64_t seed, stamo_world** out);
STAMO_API stamo_status stamo_world_load(const char* dir, stamo_world** out);
STAMO_API stamo_status stamo_world_save(const stamo_world* world, const char* dir);
STAMO_API size_t stamo_world_ee_count(const stamo_world* world);
STAMO_API void stamo_world_destroy(stamo_world* world);

/* Frozen NEE features and the linking model trained on the world's NEE data.
 * The model kind comes from the plan's model.kind key. */
STAMO_API stamo_status stamo_pretrain(const stamo_world* world, const stamo_plan* plan, uint64_t seed,
                                      stamo_pretrained** out);
STAMO_API stamo_status stamo_pretrained_save(const stamo_pretrained* pre, const char* dir);
STAMO_API stamo_status stamo_pretrained_load(const stamo_world* world, const char* dir, stamo_pretrained** out);
STAMO_API uint64_t stamo_pretrained_store_checksum(const stamo_pretrained* pre);
STAMO_API uint64_t stamo_pretrained_model_checksum(const stamo_pretrained* pre);
STAMO_API void stamo_pretrained_destroy(stamo_pretrained* pre);

/* Per emerging entity. `labeled_size` 0 keeps the world's own split.
 * Both write the learned features as a feature-store directory under out_dir;
 * stamo_run also writes trace.csv and manifest.txt. */
STAMO_API stamo_status stamo_estimate(const stamo_world* world, const stamo_pretrained* pre, const stamo_plan* plan,
                                      size_t ee, size_t labeled_size, uint64_t seed, const char* out_dir);
STAMO_API stamo_status stamo_run(const stamo_world* world, const stamo_pretrained* pre, const stamo_plan* plan,
                                 size_t ee, const char* variant, size_t labeled_size, uint64_t seed,
                                 const char* out_dir);
/* Scores a feature-store directory written by stamo_estimate or stamo_run on
 * one of the entity's test sets ("test_web" or "test_wiki"). */
STAMO_API stamo_status stamo_evaluate(const stamo_world* world, const stamo_pretrained* pre, size_t ee,
                                      const char* features_dir, const char* dataset, stamo_metrics* out);

/* Full experiment matrix. */
STAMO_API stamo_status stamo_experiment(const stamo_plan* plan, stamo_progress_fn progress, void* user,
                                        stamo_results** out);
STAMO_API size_t stamo_results_row_count(const stamo_results* results);
STAMO_API size_t stamo_results_freeze_violations(const stamo_results* results);
STAMO_API stamo_status stamo_results_write(const stamo_results* results, const char* out_dir);
STAMO_API void stamo_results_destroy(stamo_results* results);
/* Re-renders summary, curves and charts from an existing results directory. */
STAMO_API stamo_status stamo_plot(const char* results_dir, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
