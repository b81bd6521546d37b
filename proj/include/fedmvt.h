/* C API of the fedmvt shared library.
 *
 * All functions return fedmvt_status; on any non-OK status
 * fedmvt_last_error() carries a thread-local description. Handles are opaque
 * and must be released with their matching _free function.
 */
#ifndef FEDMVT_H
#define FEDMVT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FEDMVT_API __declspec(dllexport)
#else
#define FEDMVT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fedmvt_status {
    FEDMVT_OK = 0,
    FEDMVT_ERR_ARGUMENT = 1,   /* bad pointer / out-of-range argument */
    FEDMVT_ERR_PARSE = 2,      /* unreadable or malformed input file */
    FEDMVT_ERR_VALIDATION = 3, /* config parsed but violates constraints */
    FEDMVT_ERR_RUNTIME = 4,    /* failure while running */
    FEDMVT_ERR_IO = 5          /* output files could not be written */
} fedmvt_status;

typedef struct fedmvt_config fedmvt_config;
typedef struct fedmvt_result fedmvt_result;

FEDMVT_API const char* fedmvt_version(void);

/* Thread-local message for the most recent failing call. */
FEDMVT_API const char* fedmvt_last_error(void);

/* Parses a key=value config file. Parse errors fail the call; use
 * fedmvt_config_validate for the semantic check. */
FEDMVT_API fedmvt_status fedmvt_config_load(const char* path, fedmvt_config** out);
FEDMVT_API void fedmvt_config_free(fedmvt_config* cfg);

/* Writes the full violation list into `report` (truncated to report_len).
 * Returns FEDMVT_OK when the config is valid. */
FEDMVT_API fedmvt_status fedmvt_config_validate(const fedmvt_config* cfg, char* report,
                                                size_t report_len);

/* Replaces the config's seed list with a single seed. */
FEDMVT_API fedmvt_status fedmvt_config_override_seed(fedmvt_config* cfg, uint64_t seed);

/* Runs the configured sweep; per-cell records, metrics CSVs and
 * aggregate.csv land under out_dir. */
FEDMVT_API fedmvt_status fedmvt_run_experiment(const fedmvt_config* cfg, const char* out_dir,
                                               fedmvt_result** out);
FEDMVT_API void fedmvt_result_free(fedmvt_result* result);

/* Aggregate table access: rows are (model, overlap_size, mean, std, n). */
FEDMVT_API size_t fedmvt_result_row_count(const fedmvt_result* result);
FEDMVT_API fedmvt_status fedmvt_result_row(const fedmvt_result* result, size_t index,
                                           const char** model, int* overlap_size, double* mean_acc,
                                           double* std_acc, int* n_seeds);
/* 1 when every trained cell passed the boundary audit. */
FEDMVT_API int fedmvt_result_audit_pass(const fedmvt_result* result);

/* Writes party_a.csv, party_b.csv and overlap.csv for the configured
 * synthetic dataset. */
FEDMVT_API fedmvt_status fedmvt_synth_data(const fedmvt_config* cfg, const char* out_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FEDMVT_H */
