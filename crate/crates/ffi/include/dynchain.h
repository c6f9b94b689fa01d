#ifndef DYNCHAIN_H
#define DYNCHAIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DynchainBase {
  DYNCHAIN_BASE_NAIVE_BAYES = 0,
  DYNCHAIN_BASE_NEAREST_NEIGHBOUR = 1,
} DynchainBase;

typedef enum DynchainOrdering {
  DYNCHAIN_ORDERING_DYNAMIC = 0,
  DYNCHAIN_ORDERING_RANDOM = 1,
  // Identity order for every member.
  DYNCHAIN_ORDERING_FIXED = 2,
  DYNCHAIN_ORDERING_BINARY_RELEVANCE = 3,
} DynchainOrdering;

typedef enum DynchainStatus {
  DYNCHAIN_STATUS_OK = 0,
  DYNCHAIN_STATUS_NULL_POINTER = 1,
  DYNCHAIN_STATUS_INVALID_ARGUMENT = 2,
  DYNCHAIN_STATUS_DATA_ERROR = 3,
  DYNCHAIN_STATUS_IO_ERROR = 4,
  DYNCHAIN_STATUS_INTERNAL_ERROR = 5,
} DynchainStatus;

// Opaque dataset handle.
typedef struct DynchainDataset DynchainDataset;

// Opaque trained-ensemble handle.
typedef struct DynchainEnsemble DynchainEnsemble;

// Training settings. Start from [`dynchain_config_default`].
typedef struct DynchainConfig {
  uint32_t k;
  enum DynchainBase base;
  enum DynchainOrdering ordering;
  // Membership sharpness; 0 or negative means tune by cross-validation.
  double beta;
  // Neighbour count for the nearest-neighbour base; 0 means tune.
  uint32_t r;
  uint64_t seed;
} DynchainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Default settings: 20 naive Bayes members, dynamic order, β and r tuned, seed 0.
struct DynchainConfig dynchain_config_default(void);

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *dynchain_last_error(void);

// Loads a CSV file whose last `label_count` columns are 0/1 labels.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum DynchainStatus dynchain_dataset_load_csv(const char *path,
                                              size_t label_count,
                                              struct DynchainDataset **out);

// Builds a dataset from row-major arrays: `features` holds `n_rows·n_features`
// values and `labels` holds `n_rows·n_labels` values of 0 or 1.
//
// # Safety
// The arrays must hold the stated number of elements; `out` must be valid.
enum DynchainStatus dynchain_dataset_from_arrays(const double *features,
                                                 const uint8_t *labels,
                                                 size_t n_rows,
                                                 size_t n_features,
                                                 size_t n_labels,
                                                 struct DynchainDataset **out);

// # Safety
// `ds` must be null or a handle from this library that has not been freed.
size_t dynchain_dataset_rows(const struct DynchainDataset *ds);

// # Safety
// As [`dynchain_dataset_rows`].
size_t dynchain_dataset_features(const struct DynchainDataset *ds);

// # Safety
// As [`dynchain_dataset_rows`].
size_t dynchain_dataset_labels(const struct DynchainDataset *ds);

// # Safety
// `ds` must be null or an unfreed handle; it is invalid afterwards.
void dynchain_dataset_free(struct DynchainDataset *ds);

// Trains an ensemble on `ds`.
//
// # Safety
// `ds` must be a live handle, `config` and `out` valid pointers.
enum DynchainStatus dynchain_ensemble_train(const struct DynchainDataset *ds,
                                            const struct DynchainConfig *config,
                                            struct DynchainEnsemble **out);

// Predicts one row. `hard_out` receives 0/1 per label; `scores_out` (may be
// null) receives the fraction of members voting for each label.
//
// # Safety
// `x` must hold `n_features` values; the output arrays `n_labels` elements.
enum DynchainStatus dynchain_ensemble_predict(const struct DynchainEnsemble *ens,
                                              const double *x,
                                              size_t n_features,
                                              uint8_t *hard_out,
                                              double *scores_out,
                                              size_t n_labels);

// # Safety
// `ens` must be null or a live handle.
size_t dynchain_ensemble_features(const struct DynchainEnsemble *ens);

// # Safety
// `ens` must be null or a live handle.
size_t dynchain_ensemble_labels(const struct DynchainEnsemble *ens);

// Writes the ensemble into directory `dir` (created if missing).
//
// # Safety
// `ens` must be a live handle and `dir` a NUL-terminated string.
enum DynchainStatus dynchain_ensemble_save(const struct DynchainEnsemble *ens, const char *dir);

// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum DynchainStatus dynchain_ensemble_load(const char *dir, struct DynchainEnsemble **out);

// # Safety
// `ens` must be null or an unfreed handle; it is invalid afterwards.
void dynchain_ensemble_free(struct DynchainEnsemble *ens);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNCHAIN_H */
