/* C interface to the randlr library. All functions return a status code;
 * on failure randlr_last_error() describes the problem for the calling
 * thread. Strings returned through char** out-parameters are owned by the
 * caller and released with randlr_string_free. */
#ifndef RANDLR_RANDLR_H
#define RANDLR_RANDLR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RANDLR_API __declspec(dllexport)
#else
#define RANDLR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum randlr_status {
  RANDLR_OK = 0,
  RANDLR_INVALID_ARGUMENT = 1,
  RANDLR_CONFIG = 2,
  RANDLR_DIVERGED = 3,
  RANDLR_VERIFICATION = 4,
  RANDLR_PARSE = 5,
  RANDLR_IO = 6,
  RANDLR_CAPACITY = 7,
  RANDLR_INTERNAL = 8,
  RANDLR_OUT_OF_RANGE = 9
} randlr_status;

typedef struct randlr_objective randlr_objective;
typedef struct randlr_record randlr_record;

RANDLR_API const char* randlr_version(void);
RANDLR_API const char* randlr_status_name(randlr_status status);
/* Message of the last failing call on this thread ("" if none). */
RANDLR_API const char* randlr_last_error(void);
RANDLR_API void randlr_string_free(char* s);

/* Protocols. kind is "constant", "random" or "cyclic"; half_width is used by
 * random, period by cyclic. */
RANDLR_API randlr_status randlr_rate_at_epoch(const char* kind, double base_rate, double half_width,
                                              uint32_t period, uint64_t epoch, double* out_rate);
/* Fills out[0..count) with alpha multipliers from seed's alpha substream. */
RANDLR_API randlr_status randlr_sample_alpha(const char* kind, double half_width, uint64_t seed, size_t count,
                                             double* out);

/* Effective temperature T = l D / (2 C (1 - mu)) and beta = 1 / T. */
RANDLR_API randlr_status randlr_effective_temperature(double rate, double diffusion, uint64_t batch_size,
                                                      double momentum, double* out_temperature, double* out_beta);
RANDLR_API randlr_status randlr_same_temperature(double rate_a, uint64_t batch_a, double momentum_a, double rate_b,
                                                 uint64_t batch_b, double momentum_b, double rel_tol, int* out_same);

/* Objectives, built from the JSON objective block used by the CLI configs
 * ({"kind": "quadratic" | "logistic" | "mnist", ...}). */
RANDLR_API randlr_status randlr_objective_create(const char* config_json, randlr_objective** out);
RANDLR_API void randlr_objective_destroy(randlr_objective* obj);
RANDLR_API randlr_status randlr_objective_dim(const randlr_objective* obj, size_t* out_dim);
RANDLR_API randlr_status randlr_objective_sample_count(const randlr_objective* obj, size_t* out_count);
RANDLR_API randlr_status randlr_objective_loss(const randlr_objective* obj, const double* x, size_t dim,
                                               double* out_loss);
/* Mean gradient over the listed sample indices; grad has dim entries. */
RANDLR_API randlr_status randlr_objective_minibatch_grad(const randlr_objective* obj, const double* x, size_t dim,
                                                         const size_t* batch, size_t batch_len, double* grad);

/* Training with the JSON form of a single run (see `randlr train`); the
 * objective block in config_json is ignored in favor of obj. */
RANDLR_API randlr_status randlr_train(const randlr_objective* obj, const char* config_json, randlr_record** out);
RANDLR_API void randlr_record_destroy(randlr_record* record);
RANDLR_API randlr_status randlr_record_epochs(const randlr_record* record, size_t* out_count);
/* Any of the out pointers may be NULL. Missing accuracies are NaN. */
RANDLR_API randlr_status randlr_record_epoch(const randlr_record* record, size_t index, double* rate,
                                             double* train_loss, double* train_accuracy, double* test_accuracy);
RANDLR_API randlr_status randlr_record_csv(const randlr_record* record, char** out_csv);
RANDLR_API randlr_status randlr_record_final_weights(const randlr_record* record, double* out, size_t dim);

/* Runs a CLI subcommand. out_dir may be NULL or "" to skip file output.
 * *out_report (may be NULL) receives the JSON report, also when the status
 * is RANDLR_VERIFICATION or RANDLR_DIVERGED. */
RANDLR_API randlr_status randlr_run(const char* command, const char* config_json, const char* out_dir, int jobs,
                                    char** out_report);
/* Rebuilds aggregate.csv text from a sweep directory's per-run CSVs. */
RANDLR_API randlr_status randlr_reaggregate(const char* dir, char** out_csv);

#ifdef __cplusplus
}
#endif

#endif /* RANDLR_RANDLR_H */
