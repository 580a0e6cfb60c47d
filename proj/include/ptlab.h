#ifndef PTLAB_H
#define PTLAB_H

// C interface to the post-training laboratory. All functions return a status
// code; 0 is success. On failure, ptlab_last_error() describes what went
// wrong (thread-local). Handles are opaque and owned by the caller via the
// matching _free function.

#include <stdint.h>

#ifdef _WIN32
#    define PTLAB_API __declspec(dllexport)
#else
#    define PTLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum ptlab_status {
    PTLAB_OK             = 0,
    PTLAB_ERR_INTERNAL   = 1,
    PTLAB_ERR_CONFIG     = 2,
    PTLAB_ERR_DATA       = 3,
    PTLAB_ERR_CHECKPOINT = 4,
};

PTLAB_API const char * ptlab_version(void);

// message for the most recent failure on this thread; never NULL
PTLAB_API const char * ptlab_last_error(void);

// ---- models ----

typedef struct ptlab_model ptlab_model;

// fresh model from a JSON model config file, seeded deterministically
PTLAB_API int ptlab_model_init(const char * config_json_path, uint64_t seed, ptlab_model ** out);

PTLAB_API int ptlab_model_load(const char * checkpoint_dir, ptlab_model ** out);
PTLAB_API int ptlab_model_save(ptlab_model * m, const char * checkpoint_dir);
PTLAB_API void ptlab_model_free(ptlab_model * m);

PTLAB_API int64_t ptlab_model_n_layers(const ptlab_model * m);
PTLAB_API int64_t ptlab_model_n_params(const ptlab_model * m);
PTLAB_API int64_t ptlab_model_step(const ptlab_model * m);

// duplicate the middle of the layer stack in place: the result keeps layers
// [0, n-overlap) followed by [overlap, n), i.e. 2n - 2*overlap layers
PTLAB_API int ptlab_model_upscale(ptlab_model * m, int32_t overlap);

// writes the source-layer index of each output layer into out (capacity
// out_cap); *out_len receives the output layer count
PTLAB_API int ptlab_upscale_mapping(int32_t n_layers, int32_t overlap, int32_t * out, int32_t out_cap,
                                    int32_t * out_len);

// ---- merging ----

// merges the checkpoints named by the recipe JSON and writes a checkpoint to
// out_dir; warnings (if any) are reported through the callback
typedef void (*ptlab_warning_cb)(const char * message, void * user);
PTLAB_API int ptlab_merge(const char * recipe_json_path, const char * out_dir, ptlab_warning_cb warn,
                          void * user);

// ---- spectral monitoring ----

typedef struct ptlab_report ptlab_report;

PTLAB_API int ptlab_spectral_analyze(const char * checkpoint_dir, ptlab_report ** out);
PTLAB_API int64_t ptlab_report_count(const ptlab_report * r);
// one JSON object describing record i; owned by the report
PTLAB_API const char * ptlab_report_record_json(const ptlab_report * r, int64_t i);
PTLAB_API int64_t ptlab_report_unhealthy(const ptlab_report * r);
PTLAB_API void ptlab_report_free(ptlab_report * r);

// ---- data utilities ----

typedef struct ptlab_data_counts {
    int64_t read;
    int64_t kept;
    int64_t dropped;
    int64_t swapped;
} ptlab_data_counts;

PTLAB_API int ptlab_data_filter_prefs(const char * in_path, const char * out_path, ptlab_data_counts * counts);

PTLAB_API int ptlab_data_dedup(const char * in_path, const char * out_path, const char * report_path,
                               double threshold, uint64_t seed, ptlab_data_counts * counts);

// ---- training ----

typedef void (*ptlab_metrics_cb)(const char * jsonl_line, void * user);

typedef struct ptlab_train_options {
    const char * resume_dir; // NULL: start fresh
    const char * out_dir;    // NULL: use the run config's checkpoint_dir
    int64_t max_steps;       // 0: run the schedule to the end
    int has_seed_override;
    uint64_t seed_override;
    ptlab_metrics_cb metrics; // NULL: discard metrics
    void * metrics_user;
} ptlab_train_options;

PTLAB_API int ptlab_train(const char * run_config_json_path, const ptlab_train_options * opts,
                          int64_t * out_final_step, double * out_final_loss);

PTLAB_API int ptlab_eval_perplexity(const char * checkpoint_dir, const char * data_jsonl_path, double * out_ppl,
                                    int64_t * out_tokens);

#ifdef __cplusplus
}
#endif

#endif // PTLAB_H
