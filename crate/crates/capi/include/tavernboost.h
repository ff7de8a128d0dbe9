#ifndef TAVERNBOOST_H
#define TAVERNBOOST_H

/* Generated by cbindgen from tavernboost-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every API function.
 */
typedef enum TbStatus {
  TB_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TB_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  TB_STATUS_INVALID_UTF8 = 2,
  /**
   * The model file could not be read.
   */
  TB_STATUS_IO = 3,
  /**
   * Malformed input: unparsable model JSON, an unsupported model
   * version, or a cell that does not parse for its feature.
   */
  TB_STATUS_PARSE = 4,
  /**
   * The request contradicts the model (e.g. wrong cell count).
   */
  TB_STATUS_DOMAIN = 5,
} TbStatus;

/**
 * Opaque handle around a loaded model.
 */
typedef struct TbModel TbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty string if none.
 * The pointer stays valid until the next API call on the same thread.
 */
const char *tb_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *tb_version(void);

/**
 * Load a model from a JSON file. On success writes a new handle to `out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum TbStatus tb_model_load(const char *path, struct TbModel **out);

/**
 * Parse a model from an in-memory JSON string.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum TbStatus tb_model_from_json(const char *json, struct TbModel **out);

/**
 * Release a handle. Null is a no-op.
 *
 * # Safety
 * `model` must be a handle from a load function, released at most once.
 */
void tb_model_free(struct TbModel *model);

/**
 * Number of features the model expects per row; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t tb_model_feature_count(const struct TbModel *model);

/**
 * Name of feature `index`, or null when the handle is null or the index
 * is out of range. The pointer stays valid for the handle's lifetime.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *tb_model_feature_name(const struct TbModel *model, size_t index);

/**
 * Event probability for one row. `cells` holds `n_cells` C strings in
 * model feature order (see the module docs for the cell format).
 *
 * # Safety
 * `model` must be a live handle; `cells` must point to `n_cells` valid
 * entries; `out_probability` must be a valid pointer.
 */
enum TbStatus tb_model_predict(const struct TbModel *model,
                               const char *const *cells,
                               size_t n_cells,
                               double *out_probability);

/**
 * Per-feature attributions for one row. Writes `phi_len == n_cells`
 * values (log-odds units, model feature order) and the shared base value;
 * base value + Σφ equals the row's margin.
 *
 * # Safety
 * `model` must be a live handle; `cells` must point to `n_cells` valid
 * entries; `out_phi` must have room for `phi_len` doubles and
 * `out_base_value` must be a valid pointer.
 */
enum TbStatus tb_model_attributions(const struct TbModel *model,
                                    const char *const *cells,
                                    size_t n_cells,
                                    double *out_phi,
                                    size_t phi_len,
                                    double *out_base_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAVERNBOOST_H */
