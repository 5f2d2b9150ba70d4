#include "masknet.h"

#include <cstring>
#include <string>
#include <vector>

#include "core/bench.hpp"
#include "core/dataset.hpp"
#include "core/detect.hpp"
#include "core/error.hpp"
#include "core/model.hpp"
#include "core/monitor.hpp"
#include "core/timefmt.hpp"
#include "core/train.hpp"
#include "core/weights_io.hpp"

using namespace masknet;

struct mn_model {
    Model impl;
};
struct mn_dataset {
    LabeledDataset impl;
};
struct mn_history {
    TrainingHistory impl;
};
struct mn_sweep_result {
    SweepResult impl;
};

namespace {

thread_local std::string g_last_error = "ok";

mn_status map_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return MN_ERR_INVALID_ARGUMENT;
        case ErrorCode::shape_mismatch: return MN_ERR_SHAPE_MISMATCH;
        case ErrorCode::io: return MN_ERR_IO;
        case ErrorCode::parse: return MN_ERR_PARSE;
        case ErrorCode::bad_magic: return MN_ERR_BAD_MAGIC;
        case ErrorCode::bad_version: return MN_ERR_BAD_VERSION;
        case ErrorCode::truncated: return MN_ERR_TRUNCATED;
        case ErrorCode::data: return MN_ERR_DATA;
        case ErrorCode::divergence: return MN_ERR_DIVERGENCE;
        case ErrorCode::out_of_order: return MN_ERR_OUT_OF_ORDER;
        case ErrorCode::unsupported: return MN_ERR_UNSUPPORTED;
    }
    return MN_ERR_UNKNOWN;
}

template <typename Fn>
mn_status wrap(Fn&& fn) {
    try {
        fn();
        return MN_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MN_ERR_UNKNOWN;
    } catch (...) {
        g_last_error = "unknown failure";
        return MN_ERR_UNKNOWN;
    }
}

void require(bool cond, const char* what) {
    if (!cond) fail(ErrorCode::invalid_argument, what);
}

ModelConfig to_config(const mn_model_config& c) {
    ModelConfig cfg;
    cfg.input_resolution = c.input_resolution;
    cfg.width_multiplier = c.width_multiplier;
    cfg.num_classes = c.num_classes;
    cfg.dropout_rate = c.dropout_rate;
    return cfg;
}

Hyperparams to_hp(const mn_hyperparams& h) {
    Hyperparams hp;
    hp.learning_rate = h.learning_rate;
    hp.epochs = h.epochs;
    hp.batch_size = h.batch_size;
    require(h.optimizer == 0 || h.optimizer == 1, "optimizer must be 0 (adam) or 1 (sgd)");
    hp.optimizer = h.optimizer == 0 ? OptimizerKind::adam : OptimizerKind::sgd;
    hp.beta1 = h.adam_beta1;
    hp.beta2 = h.adam_beta2;
    hp.adam_eps = h.adam_eps;
    hp.seed = h.seed;
    hp.freeze_backbone = h.freeze_backbone != 0;
    return hp;
}

mn_hyperparams from_hp(const Hyperparams& hp) {
    mn_hyperparams h;
    h.learning_rate = hp.learning_rate;
    h.epochs = hp.epochs;
    h.batch_size = hp.batch_size;
    h.optimizer = hp.optimizer == OptimizerKind::adam ? 0 : 1;
    h.adam_beta1 = hp.beta1;
    h.adam_beta2 = hp.beta2;
    h.adam_eps = hp.adam_eps;
    h.seed = hp.seed;
    h.freeze_backbone = hp.freeze_backbone ? 1 : 0;
    return h;
}

mn_metrics from_metrics(const Metrics& m) {
    mn_metrics out;
    out.tp = m.tp;
    out.fp = m.fp;
    out.tn = m.tn;
    out.fn = m.fn;
    out.accuracy = m.accuracy;
    out.precision = m.precision.value_or(-1.0);
    out.recall = m.recall.value_or(-1.0);
    out.loss = m.loss;
    return out;
}

AlertPolicy to_policy(const mn_alert_policy& p) {
    AlertPolicy policy;
    policy.min_confidence = p.min_confidence;
    policy.consecutive_frames = p.consecutive_frames;
    policy.cooldown_frames = p.cooldown_frames;
    return policy;
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

} // namespace

extern "C" {

const char* mn_last_error(void) { return g_last_error.c_str(); }

void mn_string_free(char* s) { delete[] s; }

/* ---- model ---- */

void mn_model_config_init(mn_model_config* cfg) {
    if (!cfg) return;
    const ModelConfig d;
    cfg->input_resolution = d.input_resolution;
    cfg->width_multiplier = d.width_multiplier;
    cfg->num_classes = d.num_classes;
    cfg->dropout_rate = d.dropout_rate;
}

mn_status mn_model_build(const mn_model_config* cfg, uint64_t seed, mn_model** out) {
    return wrap([&] {
        require(cfg && out, "cfg and out must be non-null");
        auto* m = new mn_model{build_mobilenet_v2(to_config(*cfg), seed)};
        *out = m;
    });
}

mn_status mn_model_clone(const mn_model* model, mn_model** out) {
    return wrap([&] {
        require(model && out, "model and out must be non-null");
        *out = new mn_model{model->impl.clone()};
    });
}

void mn_model_free(mn_model* model) { delete model; }

mn_status mn_model_save(const mn_model* model, const char* path) {
    return wrap([&] {
        require(model && path, "model and path must be non-null");
        save_weights(model->impl, path);
    });
}

mn_status mn_model_load(const char* path, mn_model** out) {
    return wrap([&] {
        require(path && out, "path and out must be non-null");
        *out = new mn_model{load_weights(path)};
    });
}

mn_status mn_model_config_of(const mn_model* model, mn_model_config* out) {
    return wrap([&] {
        require(model && out, "model and out must be non-null");
        const ModelConfig& c = model->impl.config;
        out->input_resolution = c.input_resolution;
        out->width_multiplier = c.width_multiplier;
        out->num_classes = c.num_classes;
        out->dropout_rate = c.dropout_rate;
    });
}

int64_t mn_model_param_count(const mn_model* model, int trainable_only) {
    if (!model) return -1;
    return model->impl.param_count(trainable_only ? ParamScope::trainable : ParamScope::all);
}

mn_status mn_model_forward(const mn_model* model, const float* input, int64_t input_len,
                           float* probs, int64_t probs_len) {
    return wrap([&] {
        require(model && input && probs, "model, input and probs must be non-null");
        const int r = model->impl.config.input_resolution;
        const int64_t need = 3LL * r * r;
        if (input_len != need)
            fail(ErrorCode::shape_mismatch,
                 "input_len " + std::to_string(input_len) + " != 3*" + std::to_string(r) + "*" +
                     std::to_string(r));
        if (probs_len != model->impl.config.num_classes)
            fail(ErrorCode::shape_mismatch, "probs_len != num_classes");
        Tensor x({1, 3, r, r});
        std::memcpy(x.data(), input, sizeof(float) * static_cast<size_t>(need));
        Tensor y = model->impl.forward(x);
        std::memcpy(probs, y.data(), sizeof(float) * static_cast<size_t>(probs_len));
    });
}

mn_status mn_model_replace_head(mn_model* model, int32_t num_classes, int freeze_backbone,
                                uint64_t seed) {
    return wrap([&] {
        require(model, "model must be non-null");
        strip_head(model->impl);
        attach_head(model->impl, num_classes, freeze_backbone != 0, seed);
    });
}

/* ---- data ---- */

mn_status mn_dataset_load_folders(const char* root, mn_dataset** out) {
    return wrap([&] {
        require(root && out, "root and out must be non-null");
        *out = new mn_dataset{load_class_folders(root)};
    });
}

mn_status mn_dataset_synth_masks(int32_t per_class, int32_t resolution, uint64_t seed,
                                 mn_dataset** out) {
    return wrap([&] {
        require(out, "out must be non-null");
        *out = new mn_dataset{synth_mask_dataset(per_class, resolution, seed)};
    });
}

mn_status mn_dataset_synth_shapes(int32_t per_class, int32_t resolution, uint64_t seed,
                                  mn_dataset** out) {
    return wrap([&] {
        require(out, "out must be non-null");
        *out = new mn_dataset{synth_shapes_dataset(per_class, resolution, seed)};
    });
}

int64_t mn_dataset_size(const mn_dataset* ds) {
    return ds ? static_cast<int64_t>(ds->impl.items.size()) : -1;
}

int32_t mn_dataset_num_classes(const mn_dataset* ds) {
    return ds ? static_cast<int32_t>(ds->impl.class_names.size()) : -1;
}

int64_t mn_dataset_class_count(const mn_dataset* ds, int32_t cls) {
    if (!ds) return -1;
    const auto counts = ds->impl.class_counts();
    if (cls < 0 || static_cast<size_t>(cls) >= counts.size()) return -1;
    return counts[cls];
}

mn_status mn_dataset_split(const mn_dataset* ds, double train_fraction, uint64_t seed,
                           mn_dataset** train_out, mn_dataset** val_out) {
    return wrap([&] {
        require(ds && train_out && val_out, "ds, train_out and val_out must be non-null");
        auto [train_set, val_set] = split(ds->impl, train_fraction, seed);
        *train_out = new mn_dataset{std::move(train_set)};
        *val_out = new mn_dataset{std::move(val_set)};
    });
}

void mn_dataset_free(mn_dataset* ds) { delete ds; }

/* ---- training ---- */

void mn_hyperparams_init(mn_hyperparams* hp) {
    if (!hp) return;
    *hp = from_hp(Hyperparams{});
}

mn_status mn_train(mn_model* model, const mn_dataset* train_set, const mn_dataset* val_set,
                   const mn_hyperparams* hp, mn_history** history_out) {
    return wrap([&] {
        require(model && train_set && val_set && hp,
                "model, train_set, val_set and hp must be non-null");
        TrainingHistory h = train_model(model->impl, train_set->impl, val_set->impl, to_hp(*hp));
        if (history_out) *history_out = new mn_history{std::move(h)};
    });
}

mn_status mn_evaluate(const mn_model* model, const mn_dataset* ds, int32_t batch_size,
                      mn_metrics* out) {
    return wrap([&] {
        require(model && ds && out, "model, ds and out must be non-null");
        *out = from_metrics(evaluate(model->impl, ds->impl, batch_size));
    });
}

int32_t mn_history_epochs(const mn_history* h) {
    return h ? static_cast<int32_t>(h->impl.epochs.size()) : -1;
}

mn_status mn_history_row(const mn_history* h, int32_t epoch, double* train_loss,
                         double* val_loss, double* train_acc, double* val_acc) {
    return wrap([&] {
        require(h, "history must be non-null");
        if (epoch < 0 || static_cast<size_t>(epoch) >= h->impl.epochs.size())
            fail(ErrorCode::invalid_argument, "epoch index out of range");
        const EpochRecord& r = h->impl.epochs[epoch];
        if (train_loss) *train_loss = r.train_loss;
        if (val_loss) *val_loss = r.val_loss;
        if (train_acc) *train_acc = r.train_accuracy;
        if (val_acc) *val_acc = r.val_accuracy;
    });
}

mn_status mn_history_write_csv(const mn_history* h, const char* path) {
    return wrap([&] {
        require(h && path, "history and path must be non-null");
        write_text_file(path, history_csv(h->impl));
    });
}

mn_status mn_history_write_svg(const mn_history* h, const char* path) {
    return wrap([&] {
        require(h && path, "history and path must be non-null");
        write_text_file(path, history_svg(h->impl));
    });
}

mn_status mn_history_read_csv(const char* path, mn_history** out) {
    return wrap([&] {
        require(path && out, "path and out must be non-null");
        *out = new mn_history{history_from_csv(read_text_file(path))};
    });
}

void mn_history_free(mn_history* h) { delete h; }

mn_status mn_sweep(const mn_model* model, const mn_dataset* train_set,
                   const mn_dataset* val_set, const mn_hyperparams* configs, int32_t n_configs,
                   int32_t jobs, mn_sweep_result** out) {
    return wrap([&] {
        require(model && train_set && val_set && out,
                "model, train_set, val_set and out must be non-null");
        require(configs || n_configs == 0, "configs must be non-null when n_configs > 0");
        std::vector<Hyperparams> cpp_configs;
        cpp_configs.reserve(static_cast<size_t>(n_configs));
        for (int32_t i = 0; i < n_configs; ++i) cpp_configs.push_back(to_hp(configs[i]));
        *out = new mn_sweep_result{
            sweep(model->impl, train_set->impl, val_set->impl, cpp_configs, jobs)};
    });
}

int32_t mn_sweep_size(const mn_sweep_result* s) {
    return s ? static_cast<int32_t>(s->impl.rows.size()) : -1;
}

mn_status mn_sweep_row(const mn_sweep_result* s, int32_t i, mn_hyperparams* hp_out,
                       mn_metrics* metrics_out, int32_t* diverged_out) {
    return wrap([&] {
        require(s, "sweep result must be non-null");
        if (i < 0 || static_cast<size_t>(i) >= s->impl.rows.size())
            fail(ErrorCode::invalid_argument, "sweep row index out of range");
        const SweepRow& row = s->impl.rows[i];
        if (hp_out) *hp_out = from_hp(row.hp);
        if (metrics_out) *metrics_out = from_metrics(row.final_metrics);
        if (diverged_out) *diverged_out = row.diverged ? 1 : 0;
    });
}

mn_status mn_sweep_row_history(const mn_sweep_result* s, int32_t i, mn_history** out) {
    return wrap([&] {
        require(s && out, "sweep result and out must be non-null");
        if (i < 0 || static_cast<size_t>(i) >= s->impl.rows.size())
            fail(ErrorCode::invalid_argument, "sweep row index out of range");
        *out = new mn_history{s->impl.rows[i].history};
    });
}

void mn_sweep_result_free(mn_sweep_result* s) { delete s; }

/* ---- pipeline ---- */

void mn_alert_policy_init(mn_alert_policy* policy) {
    if (!policy) return;
    const AlertPolicy d;
    policy->min_confidence = d.min_confidence;
    policy->consecutive_frames = d.consecutive_frames;
    policy->cooldown_frames = d.cooldown_frames;
}

void mn_pipeline_options_init(mn_pipeline_options* opts) {
    if (!opts) return;
    std::memset(opts, 0, sizeof(*opts));
    opts->fixed_time_ms = -1;
    opts->frame_interval_ms = 33;
}

mn_status mn_pipeline_run(const mn_model* model, const char* frames_path, int is_rvid,
                          const mn_pipeline_options* opts, mn_pipeline_summary* out) {
    return wrap([&] {
        require(model && frames_path && opts, "model, frames_path and opts must be non-null");

        PipelineOptions popts;
        popts.locator = parse_locator(opts->locator ? opts->locator : "whole_frame");
        if (opts->annotate_dir) popts.annotate_dir = opts->annotate_dir;
        if (opts->source_id) popts.source_id = opts->source_id;
        popts.fixed_time_ms = opts->fixed_time_ms;
        if (opts->frame_interval_ms > 0) popts.frame_interval_ms = opts->frame_interval_ms;

        std::vector<SinkSpec> sinks;
        for (int32_t i = 0; i < opts->n_sinks; ++i) {
            require(opts->sinks && opts->sinks[i], "sink entries must be non-null");
            sinks.push_back(parse_sink(opts->sinks[i]));
        }

        std::optional<RecordLogWriter> log;
        if (opts->log_path) log.emplace(opts->log_path);
        std::optional<AlertMonitor> monitor;
        if (opts->policy) monitor.emplace(to_policy(*opts->policy));

        int64_t alerts = 0;
        RecordSink sink = [&](const DetectionRecord& record) {
            if (log) log->write(record);
            if (!monitor) return;
            if (std::optional<Alert> alert = monitor->observe(record)) {
                ++alerts;
                const std::vector<SinkStatus> statuses = dispatch_alert(*alert, sinks);
                if (opts->on_alert) {
                    std::string lines;
                    for (const SinkStatus& st : statuses) {
                        if (!lines.empty()) lines += '\n';
                        std::string target;
                        switch (st.sink.kind) {
                            case SinkSpec::Kind::stdout_sink: target = "stdout"; break;
                            case SinkSpec::Kind::file_sink: target = "file:" + st.sink.target; break;
                            case SinkSpec::Kind::http_sink: target = st.sink.target; break;
                        }
                        lines += "sink " + target + ": " +
                                 (st.delivered ? "delivered" : "failed") + " (" + st.detail + ")";
                    }
                    opts->on_alert(opts->on_alert_user, alert_to_json(*alert).c_str(),
                                   lines.c_str());
                }
            }
        };

        std::unique_ptr<FrameSource> source =
            is_rvid ? open_rvid(frames_path) : open_frame_dir(frames_path);
        PipelineSummary summary = process_stream(*source, model->impl, popts, sink);
        summary.alerts = alerts;
        if (out) {
            out->frames = summary.frames;
            out->detections = summary.detections;
            out->with_mask = summary.with_mask;
            out->without_mask = summary.without_mask;
            out->alerts = summary.alerts;
        }
    });
}

mn_status mn_report_run(const char* log_path, int64_t start_ms, int64_t end_ms,
                        const mn_alert_policy* policy, mn_report* out) {
    return wrap([&] {
        require(log_path && out, "log_path and out must be non-null");
        const Report rep =
            report(log_path, start_ms, end_ms, policy ? to_policy(*policy) : AlertPolicy{});
        out->window_start_ms = rep.window_start_ms;
        out->window_end_ms = rep.window_end_ms;
        out->frames = rep.frames;
        out->detections = rep.detections;
        out->with_mask = rep.with_mask;
        out->without_mask = rep.without_mask;
        out->alerts = rep.alerts;
        out->compliance = rep.compliance.value_or(-1.0);
    });
}

/* ---- bench ---- */

mn_status mn_bench_forward(const mn_model* model, int32_t repeats, mn_bench_result* out,
                           char** table_out) {
    return wrap([&] {
        require(model && out, "model and out must be non-null");
        const BenchResult r = bench_forward(model->impl, repeats);
        out->naive_total_ms = r.naive_total_ms;
        out->gemm_total_ms = r.gemm_total_ms;
        out->speedup = r.speedup();
        if (table_out) *table_out = dup_string(bench_table(r));
    });
}

/* ---- time ---- */

mn_status mn_parse_iso8601(const char* text, int64_t* ms_out) {
    return wrap([&] {
        require(text && ms_out, "text and ms_out must be non-null");
        *ms_out = parse_iso8601_ms(text);
    });
}

mn_status mn_format_iso8601(int64_t ms, char** out) {
    return wrap([&] {
        require(out, "out must be non-null");
        *out = dup_string(format_iso8601_ms(ms));
    });
}

int64_t mn_wall_clock_ms(void) { return wall_clock_ms(); }

} /* extern "C" */
