/* masknet: MobileNetV2 face-mask monitoring engine, C interface.
 *
 * Every function that can fail returns mn_status; MN_OK is 0. On failure a
 * human-readable message is kept in thread-local storage and available via
 * mn_last_error() until the next failing call on the same thread. Objects
 * returned through mn_*** out-pointers are owned by the caller and released
 * with the matching mn_*_free.
 */
#ifndef MASKNET_H
#define MASKNET_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mn_status {
    MN_OK = 0,
    MN_ERR_INVALID_ARGUMENT = 1,
    MN_ERR_SHAPE_MISMATCH = 2,
    MN_ERR_IO = 3,
    MN_ERR_PARSE = 4,
    MN_ERR_BAD_MAGIC = 5,
    MN_ERR_BAD_VERSION = 6,
    MN_ERR_TRUNCATED = 7,
    MN_ERR_DATA = 8,
    MN_ERR_DIVERGENCE = 9,
    MN_ERR_OUT_OF_ORDER = 10,
    MN_ERR_UNSUPPORTED = 11,
    MN_ERR_UNKNOWN = 12
} mn_status;

/* Message for the latest failure on this thread; never NULL. */
const char* mn_last_error(void);

/* Frees strings returned through char** out-parameters. */
void mn_string_free(char* s);

typedef struct mn_model mn_model;
typedef struct mn_dataset mn_dataset;
typedef struct mn_history mn_history;
typedef struct mn_sweep_result mn_sweep_result;

/* ---- model ---- */

typedef struct mn_model_config {
    int32_t input_resolution; /* divisible by 32 */
    float width_multiplier;   /* (0, 1] */
    int32_t num_classes;      /* >= 2 */
    float dropout_rate;       /* [0, 1) */
} mn_model_config;

void mn_model_config_init(mn_model_config* cfg);

mn_status mn_model_build(const mn_model_config* cfg, uint64_t seed, mn_model** out);
mn_status mn_model_clone(const mn_model* model, mn_model** out);
void mn_model_free(mn_model* model);

mn_status mn_model_save(const mn_model* model, const char* path);
mn_status mn_model_load(const char* path, mn_model** out);
mn_status mn_model_config_of(const mn_model* model, mn_model_config* out);

/* trainable_only != 0 counts only parameters the optimizer would update. */
int64_t mn_model_param_count(const mn_model* model, int trainable_only);

/* Single-image inference. input is normalized CHW (3 * r * r floats, r =
 * input_resolution); probs receives num_classes softmax values. */
mn_status mn_model_forward(const mn_model* model, const float* input, int64_t input_len,
                           float* probs, int64_t probs_len);

/* Transfer learning: drops the classifier head and attaches a fresh one for
 * num_classes; freeze_backbone != 0 leaves only the new head trainable. */
mn_status mn_model_replace_head(mn_model* model, int32_t num_classes, int freeze_backbone,
                                uint64_t seed);

/* ---- data ---- */

/* Loads .ppm files from root/with_mask and root/without_mask. */
mn_status mn_dataset_load_folders(const char* root, mn_dataset** out);
mn_status mn_dataset_synth_masks(int32_t per_class, int32_t resolution, uint64_t seed,
                                 mn_dataset** out);
mn_status mn_dataset_synth_shapes(int32_t per_class, int32_t resolution, uint64_t seed,
                                  mn_dataset** out);
int64_t mn_dataset_size(const mn_dataset* ds);
int32_t mn_dataset_num_classes(const mn_dataset* ds);
int64_t mn_dataset_class_count(const mn_dataset* ds, int32_t cls);
mn_status mn_dataset_split(const mn_dataset* ds, double train_fraction, uint64_t seed,
                           mn_dataset** train_out, mn_dataset** val_out);
void mn_dataset_free(mn_dataset* ds);

/* ---- training ---- */

typedef struct mn_hyperparams {
    double learning_rate;
    int32_t epochs;
    int32_t batch_size;
    int32_t optimizer; /* 0 = adam, 1 = sgd */
    double adam_beta1;
    double adam_beta2;
    double adam_eps;
    uint64_t seed;
    int32_t freeze_backbone;
} mn_hyperparams;

void mn_hyperparams_init(mn_hyperparams* hp);

typedef struct mn_metrics {
    int64_t tp, fp, tn, fn;
    double accuracy;
    double precision; /* -1 when undefined (zero denominator) */
    double recall;    /* -1 when undefined */
    double loss;
} mn_metrics;

/* Trains in place. history_out may be NULL. Divergent runs return
 * MN_ERR_DIVERGENCE and leave the model unspecified. */
mn_status mn_train(mn_model* model, const mn_dataset* train_set, const mn_dataset* val_set,
                   const mn_hyperparams* hp, mn_history** history_out);

mn_status mn_evaluate(const mn_model* model, const mn_dataset* ds, int32_t batch_size,
                      mn_metrics* out);

int32_t mn_history_epochs(const mn_history* h);
mn_status mn_history_row(const mn_history* h, int32_t epoch, double* train_loss,
                         double* val_loss, double* train_acc, double* val_acc);
mn_status mn_history_write_csv(const mn_history* h, const char* path);
mn_status mn_history_write_svg(const mn_history* h, const char* path);
mn_status mn_history_read_csv(const char* path, mn_history** out);
void mn_history_free(mn_history* h);

/* Runs every configuration from a fresh clone of model; jobs > 1 uses
 * worker threads. Diverged rows are recorded, not fatal. */
mn_status mn_sweep(const mn_model* model, const mn_dataset* train_set,
                   const mn_dataset* val_set, const mn_hyperparams* configs, int32_t n_configs,
                   int32_t jobs, mn_sweep_result** out);
int32_t mn_sweep_size(const mn_sweep_result* s);
mn_status mn_sweep_row(const mn_sweep_result* s, int32_t i, mn_hyperparams* hp_out,
                       mn_metrics* metrics_out, int32_t* diverged_out);
mn_status mn_sweep_row_history(const mn_sweep_result* s, int32_t i, mn_history** out);
void mn_sweep_result_free(mn_sweep_result* s);

/* ---- pipeline ---- */

typedef struct mn_alert_policy {
    float min_confidence;       /* [0.5, 1] */
    int32_t consecutive_frames; /* >= 1 */
    int32_t cooldown_frames;    /* >= 0 */
} mn_alert_policy;

void mn_alert_policy_init(mn_alert_policy* policy);

/* Called once per fired alert. alert_json carries keys ts, source, frame,
 * streak, max_conf; delivery_lines is one "sink ...: ..." line per
 * configured sink, newline-separated (empty when no sinks). */
typedef void (*mn_alert_callback)(void* user, const char* alert_json,
                                  const char* delivery_lines);

typedef struct mn_pipeline_options {
    const char* locator;      /* "whole_frame" | "center:F" | "sidecar:PATH"; NULL = whole_frame */
    const char* annotate_dir; /* NULL: no annotated frames written */
    const char* log_path;     /* NULL: no persistence */
    const char* source_id;    /* NULL: "cam0" */
    const char* const* sinks; /* "stdout" | "file:PATH" | "http://..." */
    int32_t n_sinks;
    const mn_alert_policy* policy; /* NULL: alerting disabled */
    int64_t fixed_time_ms;         /* >= 0 pins the first frame's timestamp */
    int64_t frame_interval_ms;     /* <= 0: default 33 */
    mn_alert_callback on_alert;    /* optional */
    void* on_alert_user;
} mn_pipeline_options;

void mn_pipeline_options_init(mn_pipeline_options* opts);

typedef struct mn_pipeline_summary {
    int64_t frames;
    int64_t detections;
    int64_t with_mask;
    int64_t without_mask;
    int64_t alerts;
} mn_pipeline_summary;

/* frames_path is a directory of frame_000001.ppm... or, when is_rvid != 0,
 * a raw RVID stream file. */
mn_status mn_pipeline_run(const mn_model* model, const char* frames_path, int is_rvid,
                          const mn_pipeline_options* opts, mn_pipeline_summary* out);

typedef struct mn_report {
    int64_t window_start_ms;
    int64_t window_end_ms;
    int64_t frames;
    int64_t detections;
    int64_t with_mask;
    int64_t without_mask;
    int64_t alerts;
    double compliance; /* -1 when no detections in window */
} mn_report;

/* Aggregates log records with timestamp in [start_ms, end_ms]; policy NULL
 * uses the defaults for the alert replay. */
mn_status mn_report_run(const char* log_path, int64_t start_ms, int64_t end_ms,
                        const mn_alert_policy* policy, mn_report* out);

/* ---- bench ---- */

typedef struct mn_bench_result {
    double naive_total_ms;
    double gemm_total_ms;
    double speedup;
} mn_bench_result;

/* table_out (optional) receives the per-layer timing table; free with
 * mn_string_free. */
mn_status mn_bench_forward(const mn_model* model, int32_t repeats, mn_bench_result* out,
                           char** table_out);

/* ---- time ---- */

mn_status mn_parse_iso8601(const char* text, int64_t* ms_out);
mn_status mn_format_iso8601(int64_t ms, char** out);
int64_t mn_wall_clock_ms(void);

#ifdef __cplusplus
}
#endif

#endif /* MASKNET_H */
