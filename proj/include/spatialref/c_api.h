/* C interface to the spatialref library. All handles are opaque; every
 * function returning sr_status leaves a message for sr_last_error() on
 * failure. Strings returned through char** must be released with
 * sr_string_free. */
#ifndef SPATIALREF_C_API_H
#define SPATIALREF_C_API_H

#include <stddef.h>
#include <stdint.h>

#if defined(SR_BUILDING_LIBRARY)
#define SR_API __attribute__((visibility("default")))
#else
#define SR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sr_status {
  SR_OK = 0,
  SR_ERR_ARGUMENT = 1, /* null handle or pointer, empty ensemble */
  SR_ERR_CONFIG = 2,
  SR_ERR_IO = 3,
  SR_ERR_DATA = 4,
  SR_ERR_SHAPE = 5,
  SR_ERR_NUMERIC = 6,
  SR_ERR_INDEX = 7,
  SR_ERR_INTERNAL = 8
} sr_status;

typedef struct sr_config sr_config;
typedef struct sr_dataset sr_dataset;
typedef struct sr_model sr_model;

/* Thread-local; valid until the next failing call on the same thread. */
SR_API const char* sr_last_error(void);
SR_API const char* sr_version(void);
SR_API const char* sr_status_name(sr_status status);
SR_API void sr_string_free(char* s);

SR_API sr_status sr_config_create(sr_config** out);
SR_API sr_status sr_config_load(const char* path, sr_config** out);
SR_API sr_status sr_config_parse(const char* text, sr_config** out);
SR_API sr_status sr_config_set(sr_config* config, const char* key, const char* value);
SR_API sr_status sr_config_get(const sr_config* config, const char* key, char** out);
SR_API sr_status sr_config_to_text(const sr_config* config, char** out);
SR_API void sr_config_destroy(sr_config* config);

/* A directory with train/dev/test.jsonl, or one .jsonl file used for every split. */
SR_API sr_status sr_dataset_load(const char* path, double block_length, size_t max_blocks, sr_dataset** out);
SR_API sr_status sr_dataset_generate(size_t count, size_t max_blocks, uint64_t seed, sr_dataset** out);
/* Writes train/dev/test.jsonl under dir, including generation facts when present. */
SR_API sr_status sr_dataset_write(const sr_dataset* data, const char* dir);
SR_API sr_status sr_dataset_size(const sr_dataset* data, const char* split, size_t* out);
SR_API void sr_dataset_destroy(sr_dataset* data);

/* Receives one JSON object per finished epoch. */
typedef void (*sr_epoch_callback)(const char* json, void* user);

/* Trains ensemble member `member` (seed = config seed + member). */
SR_API sr_status sr_train(const sr_config* config, const sr_dataset* data, size_t member, sr_epoch_callback on_epoch,
                          void* user, sr_model** out);
SR_API sr_status sr_model_load(const char* path, sr_model** out);
SR_API sr_status sr_model_save(const sr_model* model, const char* path);
SR_API sr_status sr_model_config(const sr_model* model, char** out);
SR_API void sr_model_destroy(sr_model* model);

/* JSON report over one split; members are ensemble-averaged. */
SR_API sr_status sr_evaluate(const sr_model* const* models, size_t count, const sr_dataset* data, const char* split,
                             int sampled, uint64_t seed, int include_rows, char** out);

/* JSON prediction for one instruction and world file text. sampled < 0 uses the
 * first member's configured inference mode. */
SR_API sr_status sr_predict(const sr_model* const* models, size_t count, const char* instruction,
                            const char* world_json, int sampled, uint64_t seed, char** out);

/* Runs the finite-difference suite; *all_passed is 1 when every check passes. */
SR_API sr_status sr_grad_check(size_t instances, uint64_t seed, int* all_passed, char** out);

#ifdef __cplusplus
}
#endif

#endif
