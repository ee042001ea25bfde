#ifndef LIFEMEM_H
#define LIFEMEM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_POINTER = 1,
  LM_STATUS_INVALID_ARGUMENT = 2,
  LM_STATUS_INVALID_UTF8 = 3,
  LM_STATUS_OUT_OF_BOUNDS = 4,
  LM_STATUS_NO_PATH = 5,
  LM_STATUS_BUFFER_TOO_SMALL = 6,
  LM_STATUS_IO = 7,
  LM_STATUS_INTERNAL = 8,
} LmStatus;

typedef enum LmCellState {
  LM_CELL_STATE_UNKNOWN = 0,
  LM_CELL_STATE_FREE = 1,
  LM_CELL_STATE_OBSTACLE = 2,
} LmCellState;

typedef struct LmEmbedder LmEmbedder;

typedef struct LmMap LmMap;

typedef struct LmStore LmStore;

// Retrieval query. `image_feature` may be null when `image_len` is 0.
typedef struct LmQuery {
  double time;
  double location[3];
  const double *text_feature;
  uintptr_t text_len;
  const double *image_feature;
  uintptr_t image_len;
  uintptr_t k;
} LmQuery;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Length in bytes of the last error message on this thread, excluding the
// terminating NUL. Zero after a successful call.
uintptr_t lm_last_error_length(void);

// Copy the last error message, NUL-terminated, into `buf`.
//
// # Safety
// `buf` must point to `cap` writable bytes.
enum LmStatus lm_last_error_message(char *buf, uintptr_t cap);

// # Safety
// `out` must be a valid pointer.
enum LmStatus lm_embedder_new(uintptr_t dim, struct LmEmbedder **out);

// # Safety
// `embedder` must come from [`lm_embedder_new`] and not be used afterwards.
void lm_embedder_free(struct LmEmbedder *embedder);

// # Safety
// `embedder` must be a live handle and `out` a valid pointer.
enum LmStatus lm_embedder_dimension(const struct LmEmbedder *embedder, uintptr_t *out);

// Unit-norm embedding of `text` into `buf`. On `BufferTooSmall`, `out_len`
// holds the required length.
//
// # Safety
// `text` must be NUL-terminated; `buf` must hold `cap` doubles.
enum LmStatus lm_embedder_embed_text(const struct LmEmbedder *embedder,
                                     const char *text,
                                     double *buf,
                                     uintptr_t cap,
                                     uintptr_t *out_len);

// Empty store with the given scoring constants.
//
// # Safety
// `out` must be a valid pointer.
enum LmStatus lm_store_new(double epsilon, double recency_tau, struct LmStore **out);

// # Safety
// `store` must come from [`lm_store_new`] or [`lm_store_load`] and not be used afterwards.
void lm_store_free(struct LmStore *store);

// # Safety
// `store` must be a live handle and `out` a valid pointer.
enum LmStatus lm_store_len(const struct LmStore *store, uintptr_t *out);

// Record an event. `image_feature` may be null when `image_len` is 0.
//
// # Safety
// Strings must be NUL-terminated; feature pointers must hold the stated
// number of doubles; `location` must hold 3.
enum LmStatus lm_store_record(struct LmStore *store,
                              double time,
                              const double *location,
                              const char *place,
                              const char *text,
                              const double *text_feature,
                              uintptr_t text_len,
                              const double *image_feature,
                              uintptr_t image_len,
                              uint64_t *out_id);

// Top-k retrieval. Writes up to `cap` event ids, best first, and the count
// to `out_count`. Access times of the returned events advance to the query
// time, so the call mutates the store.
//
// # Safety
// `query` must be valid with its feature pointers; `out_ids` must hold
// `cap` entries.
enum LmStatus lm_store_retrieve(struct LmStore *store,
                                const struct LmQuery *query,
                                uint64_t *out_ids,
                                uintptr_t cap,
                                uintptr_t *out_count);

// Write the store as JSON lines.
//
// # Safety
// `path` must be NUL-terminated.
enum LmStatus lm_store_save(const struct LmStore *store, const char *path);

// Read a store written by [`lm_store_save`].
//
// # Safety
// `path` must be NUL-terminated and `out` a valid pointer.
enum LmStatus lm_store_load(const char *path,
                            double epsilon,
                            double recency_tau,
                            struct LmStore **out);

// All-unknown map with default planner weights.
//
// # Safety
// `out` must be a valid pointer.
enum LmStatus lm_map_new(uintptr_t width,
                         uintptr_t height,
                         double resolution,
                         double origin_x,
                         double origin_y,
                         struct LmMap **out);

// # Safety
// `map` must come from [`lm_map_new`] and not be used afterwards.
void lm_map_free(struct LmMap *map);

// # Safety
// `map` must be a live handle.
enum LmStatus lm_map_set_state(struct LmMap *map, uintptr_t x, uintptr_t y, enum LmCellState state);

// # Safety
// `map` must be a live handle and `out` a valid pointer.
enum LmStatus lm_map_get_state(const struct LmMap *map,
                               uintptr_t x,
                               uintptr_t y,
                               enum LmCellState *out);

// Override the planner's per-state base costs and proximity penalty.
// Obstacles stay impassable.
//
// # Safety
// `map` must be a live handle.
enum LmStatus lm_map_set_weights(struct LmMap *map,
                                 double free_cost,
                                 double unknown_cost,
                                 double proximity_coeff,
                                 uintptr_t proximity_radius);

// Minimum-cost 8-connected path. Waypoints are written as interleaved
// `x, y` pairs into `out_cells` (room for `cap` pairs); `out_len` receives
// the number of waypoints, or the required count on `BufferTooSmall`.
//
// # Safety
// `out_cells` must hold `2 * cap` entries; other out pointers must be valid.
enum LmStatus lm_map_plan(const struct LmMap *map,
                          uintptr_t start_x,
                          uintptr_t start_y,
                          uintptr_t goal_x,
                          uintptr_t goal_y,
                          uintptr_t *out_cells,
                          uintptr_t cap,
                          uintptr_t *out_len,
                          double *out_cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIFEMEM_H */
