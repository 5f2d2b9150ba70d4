// masknet: train / eval / sweep / detect / monitor / bench / plot in one
// binary. Exit codes: 0 ok, 2 bad flags, 3 input or data failure, 4 numeric
// divergence. Every run echoes its resolved config to stdout and to
// run_config.txt in --out so it can be reproduced by copy-paste.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "masknet.h"

namespace {

int rc_from_status(mn_status status) {
    switch (status) {
        case MN_OK: return 0;
        case MN_ERR_INVALID_ARGUMENT: return 2;
        case MN_ERR_DIVERGENCE: return 4;
        default: return 3;
    }
}

#define CHECK_MN(call)                                          \
    do {                                                        \
        const mn_status st_ = (call);                           \
        if (st_ != MN_OK) {                                     \
            std::fprintf(stderr, "error: %s\n", mn_last_error()); \
            return rc_from_status(st_);                         \
        }                                                       \
    } while (0)

using ModelPtr = std::unique_ptr<mn_model, decltype(&mn_model_free)>;
using DatasetPtr = std::unique_ptr<mn_dataset, decltype(&mn_dataset_free)>;
using HistoryPtr = std::unique_ptr<mn_history, decltype(&mn_history_free)>;
using SweepPtr = std::unique_ptr<mn_sweep_result, decltype(&mn_sweep_result_free)>;

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string fmt_metric(double v) {
    if (v < 0) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

using KvList = std::vector<std::pair<std::string, std::string>>;

// Mandatory config echo: stdout and <out>/run_config.txt get the same text.
int echo_config(const std::string& command, const KvList& kv, const std::string& out_dir) {
    std::string text = "command = " + command + "\n";
    for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
    std::fputs(text.c_str(), stdout);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        std::fprintf(stderr, "error: cannot create output directory %s: %s\n", out_dir.c_str(),
                     ec.message().c_str());
        return 3;
    }
    const std::string path = out_dir + "/run_config.txt";
    std::ofstream f(path, std::ios::trunc);
    if (!(f && (f << text))) {
        std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
        return 3;
    }
    return 0;
}

struct DataOpts {
    std::string data_dir;
    int synth = 0;
    std::string synth_task = "masks";
};

void add_data_flags(CLI::App* cmd, DataOpts& d) {
    cmd->add_option("--data", d.data_dir, "dataset root with with_mask/ and without_mask/");
    cmd->add_option("--synth", d.synth, "generate a synthetic dataset with N items per class");
    cmd->add_option("--synth-task", d.synth_task, "synthetic task: masks or shapes")
        ->check(CLI::IsMember({"masks", "shapes"}));
}

int load_full_dataset(const DataOpts& d, int resolution, uint64_t seed, CLI::App* cmd,
                      mn_dataset** out) {
    if (d.data_dir.empty() && d.synth <= 0) {
        std::fprintf(stderr, "error: provide --data DIR or --synth N\n%s",
                     cmd->help().c_str());
        return 2;
    }
    if (!d.data_dir.empty() && d.synth > 0) {
        std::fprintf(stderr, "error: --data and --synth are mutually exclusive\n");
        return 2;
    }
    if (!d.data_dir.empty()) {
        CHECK_MN(mn_dataset_load_folders(d.data_dir.c_str(), out));
    } else if (d.synth_task == "shapes") {
        CHECK_MN(mn_dataset_synth_shapes(d.synth, resolution, seed, out));
    } else {
        CHECK_MN(mn_dataset_synth_masks(d.synth, resolution, seed, out));
    }
    return 0;
}

void data_kv(KvList& kv, const DataOpts& d) {
    kv.emplace_back("data", d.data_dir);
    kv.emplace_back("synth", std::to_string(d.synth));
    kv.emplace_back("synth_task", d.synth_task);
}

struct TrainOpts {
    DataOpts data;
    int resolution = 224;
    double width = 1.0;
    double dropout = 0.5;
    double split_fraction = 0.8;
    mn_hyperparams hp{};
    std::string optimizer = "adam";
    std::string pretrained;
    bool freeze_backbone = false;
    std::string out_dir = "masknet_out";

    TrainOpts() { mn_hyperparams_init(&hp); }
};

void add_train_flags(CLI::App* cmd, TrainOpts& t, bool with_lr) {
    add_data_flags(cmd, t.data);
    cmd->add_option("--resolution", t.resolution, "input resolution (multiple of 32)");
    cmd->add_option("--width", t.width, "width multiplier in (0, 1]");
    cmd->add_option("--dropout", t.dropout, "classifier dropout rate");
    cmd->add_option("--split", t.split_fraction, "train fraction of the dataset");
    if (with_lr) cmd->add_option("--lr", t.hp.learning_rate, "learning rate");
    cmd->add_option("--epochs", t.hp.epochs, "training epochs");
    cmd->add_option("--batch", t.hp.batch_size, "batch size");
    cmd->add_option("--optimizer", t.optimizer, "adam or sgd")
        ->check(CLI::IsMember({"adam", "sgd"}));
    cmd->add_option("--seed", t.hp.seed, "seed for weights, shuffling and synthesis");
    cmd->add_option("--pretrained", t.pretrained, "start from saved weights, new head attached");
    cmd->add_flag("--freeze-backbone", t.freeze_backbone, "train only the classifier head");
    cmd->add_option("--out", t.out_dir, "output directory");
}

void train_kv(KvList& kv, const TrainOpts& t, bool with_lr) {
    data_kv(kv, t.data);
    kv.emplace_back("resolution", std::to_string(t.resolution));
    kv.emplace_back("width", fmt_g(t.width));
    kv.emplace_back("dropout", fmt_g(t.dropout));
    kv.emplace_back("split", fmt_g(t.split_fraction));
    if (with_lr) kv.emplace_back("lr", fmt_g(t.hp.learning_rate));
    kv.emplace_back("epochs", std::to_string(t.hp.epochs));
    kv.emplace_back("batch", std::to_string(t.hp.batch_size));
    kv.emplace_back("optimizer", t.optimizer);
    kv.emplace_back("seed", std::to_string(t.hp.seed));
    kv.emplace_back("pretrained", t.pretrained);
    kv.emplace_back("freeze_backbone", t.freeze_backbone ? "true" : "false");
    kv.emplace_back("out", t.out_dir);
}

// Builds a fresh model or loads --pretrained and attaches a head sized for
// the dataset's classes.
int make_model(const TrainOpts& t, int num_classes, mn_model** out) {
    if (!t.pretrained.empty()) {
        CHECK_MN(mn_model_load(t.pretrained.c_str(), out));
        const mn_status st = mn_model_replace_head(*out, num_classes,
                                                   t.freeze_backbone ? 1 : 0, t.hp.seed);
        if (st != MN_OK) {
            std::fprintf(stderr, "error: %s\n", mn_last_error());
            mn_model_free(*out);
            *out = nullptr;
            return rc_from_status(st);
        }
        return 0;
    }
    mn_model_config cfg;
    mn_model_config_init(&cfg);
    cfg.input_resolution = t.resolution;
    cfg.width_multiplier = static_cast<float>(t.width);
    cfg.num_classes = num_classes;
    cfg.dropout_rate = static_cast<float>(t.dropout);
    CHECK_MN(mn_model_build(&cfg, t.hp.seed, out));
    return 0;
}

int print_metrics(const mn_metrics& m) {
    std::printf("accuracy = %s\n", fmt_metric(m.accuracy).c_str());
    std::printf("precision = %s\n", fmt_metric(m.precision).c_str());
    std::printf("recall = %s\n", fmt_metric(m.recall).c_str());
    std::printf("loss = %s\n", fmt_metric(m.loss).c_str());
    std::printf("confusion: tp=%lld fp=%lld fn=%lld tn=%lld\n",
                static_cast<long long>(m.tp), static_cast<long long>(m.fp),
                static_cast<long long>(m.fn), static_cast<long long>(m.tn));
    return 0;
}

int cmd_train(const TrainOpts& t, CLI::App* cmd) {
    KvList kv;
    train_kv(kv, t, true);
    if (int rc = echo_config("train", kv, t.out_dir)) return rc;

    mn_dataset* full_raw = nullptr;
    if (int rc = load_full_dataset(t.data, t.resolution, t.hp.seed, cmd, &full_raw)) return rc;
    DatasetPtr full(full_raw, mn_dataset_free);

    mn_dataset *train_raw = nullptr, *val_raw = nullptr;
    CHECK_MN(mn_dataset_split(full.get(), t.split_fraction, t.hp.seed, &train_raw, &val_raw));
    DatasetPtr train_set(train_raw, mn_dataset_free), val_set(val_raw, mn_dataset_free);
    std::printf("dataset: %lld train, %lld val\n",
                static_cast<long long>(mn_dataset_size(train_set.get())),
                static_cast<long long>(mn_dataset_size(val_set.get())));

    mn_model* model_raw = nullptr;
    if (int rc = make_model(t, mn_dataset_num_classes(full.get()), &model_raw)) return rc;
    ModelPtr model(model_raw, mn_model_free);

    mn_hyperparams hp = t.hp;
    hp.optimizer = t.optimizer == "sgd" ? 1 : 0;
    hp.freeze_backbone = t.freeze_backbone ? 1 : 0;
    mn_history* history_raw = nullptr;
    CHECK_MN(mn_train(model.get(), train_set.get(), val_set.get(), &hp, &history_raw));
    HistoryPtr history(history_raw, mn_history_free);

    for (int32_t e = 0; e < mn_history_epochs(history.get()); ++e) {
        double tl, vl, ta, va;
        CHECK_MN(mn_history_row(history.get(), e, &tl, &vl, &ta, &va));
        std::printf("epoch %d/%d: train_loss=%.6g val_loss=%.6g train_acc=%.4f val_acc=%.4f\n",
                    e + 1, hp.epochs, tl, vl, ta, va);
    }

    const std::string weights_path = t.out_dir + "/model.mnv2w";
    CHECK_MN(mn_model_save(model.get(), weights_path.c_str()));
    CHECK_MN(mn_history_write_csv(history.get(), (t.out_dir + "/history.csv").c_str()));
    CHECK_MN(mn_history_write_svg(history.get(), (t.out_dir + "/history.svg").c_str()));
    std::printf("weights = %s\n", weights_path.c_str());

    mn_metrics final_metrics;
    CHECK_MN(mn_evaluate(model.get(), val_set.get(), hp.batch_size, &final_metrics));
    std::printf("final validation metrics:\n");
    std::printf("val_accuracy = %s\n", fmt_metric(final_metrics.accuracy).c_str());
    std::printf("val_precision = %s\n", fmt_metric(final_metrics.precision).c_str());
    std::printf("val_recall = %s\n", fmt_metric(final_metrics.recall).c_str());
    return 0;
}

struct EvalOpts {
    std::string weights;
    DataOpts data;
    int batch = 32;
    uint64_t seed = 0;
    std::string out_dir = "masknet_out";
};

int cmd_eval(const EvalOpts& e, CLI::App* cmd) {
    KvList kv;
    kv.emplace_back("weights", e.weights);
    data_kv(kv, e.data);
    kv.emplace_back("batch", std::to_string(e.batch));
    kv.emplace_back("seed", std::to_string(e.seed));
    kv.emplace_back("out", e.out_dir);
    if (int rc = echo_config("eval", kv, e.out_dir)) return rc;

    mn_model* model_raw = nullptr;
    CHECK_MN(mn_model_load(e.weights.c_str(), &model_raw));
    ModelPtr model(model_raw, mn_model_free);

    mn_model_config cfg;
    CHECK_MN(mn_model_config_of(model.get(), &cfg));
    mn_dataset* ds_raw = nullptr;
    if (int rc = load_full_dataset(e.data, cfg.input_resolution, e.seed, cmd, &ds_raw)) return rc;
    DatasetPtr ds(ds_raw, mn_dataset_free);

    std::printf("items = %lld\n", static_cast<long long>(mn_dataset_size(ds.get())));
    mn_metrics m;
    CHECK_MN(mn_evaluate(model.get(), ds.get(), e.batch, &m));
    return print_metrics(m);
}

struct SweepOpts {
    TrainOpts base;
    std::vector<double> lrs;
    int jobs = 1;
};

int cmd_sweep(const SweepOpts& s, CLI::App* cmd) {
    std::vector<double> lrs = s.lrs;
    if (lrs.empty()) lrs = {1e-4, 1e-3, 1e-2};

    KvList kv;
    train_kv(kv, s.base, false);
    std::string lr_list;
    for (double lr : lrs) lr_list += (lr_list.empty() ? "" : ",") + fmt_g(lr);
    kv.emplace_back("lr", lr_list);
    kv.emplace_back("jobs", std::to_string(s.jobs));
    if (int rc = echo_config("sweep", kv, s.base.out_dir)) return rc;

    mn_dataset* full_raw = nullptr;
    if (int rc = load_full_dataset(s.base.data, s.base.resolution, s.base.hp.seed, cmd, &full_raw))
        return rc;
    DatasetPtr full(full_raw, mn_dataset_free);
    mn_dataset *train_raw = nullptr, *val_raw = nullptr;
    CHECK_MN(mn_dataset_split(full.get(), s.base.split_fraction, s.base.hp.seed, &train_raw,
                              &val_raw));
    DatasetPtr train_set(train_raw, mn_dataset_free), val_set(val_raw, mn_dataset_free);

    mn_model* model_raw = nullptr;
    if (int rc = make_model(s.base, mn_dataset_num_classes(full.get()), &model_raw)) return rc;
    ModelPtr model(model_raw, mn_model_free);

    std::vector<mn_hyperparams> configs;
    for (double lr : lrs) {
        mn_hyperparams hp = s.base.hp;
        hp.learning_rate = lr;
        hp.optimizer = s.base.optimizer == "sgd" ? 1 : 0;
        hp.freeze_backbone = s.base.freeze_backbone ? 1 : 0;
        configs.push_back(hp);
    }

    mn_sweep_result* sweep_raw = nullptr;
    CHECK_MN(mn_sweep(model.get(), train_set.get(), val_set.get(), configs.data(),
                      static_cast<int32_t>(configs.size()), s.jobs, &sweep_raw));
    SweepPtr result(sweep_raw, mn_sweep_result_free);

    std::string csv = "model,learning_rate,val_accuracy,val_precision,val_recall,status\n";
    std::printf("%-6s %-10s %-12s %-12s %-12s %s\n", "model", "lr", "val_acc", "val_prec",
                "val_rec", "status");
    for (int32_t i = 0; i < mn_sweep_size(result.get()); ++i) {
        mn_hyperparams hp;
        mn_metrics m;
        int32_t diverged = 0;
        CHECK_MN(mn_sweep_row(result.get(), i, &hp, &m, &diverged));
        const std::string status = diverged ? "diverged" : "ok";
        std::printf("%-6d %-10s %-12s %-12s %-12s %s\n", i + 1, fmt_g(hp.learning_rate).c_str(),
                    fmt_metric(m.accuracy).c_str(), fmt_metric(m.precision).c_str(),
                    fmt_metric(m.recall).c_str(), status.c_str());
        csv += std::to_string(i + 1) + "," + fmt_g(hp.learning_rate) + "," +
               fmt_metric(m.accuracy) + "," + fmt_metric(m.precision) + "," +
               fmt_metric(m.recall) + "," + status + "\n";
    }
    const std::string csv_path = s.base.out_dir + "/sweep.csv";
    std::ofstream f(csv_path, std::ios::trunc);
    if (!(f && (f << csv))) {
        std::fprintf(stderr, "error: cannot write %s\n", csv_path.c_str());
        return 3;
    }
    std::printf("table = %s\n", csv_path.c_str());
    return 0;
}

struct DetectOpts {
    std::string weights;
    std::string frames_dir;
    std::string raw_path;
    std::string locator = "whole_frame";
    std::string annotate_dir;
    std::string log_path;
    std::string source_id = "cam0";
    std::string fixed_time;
    int64_t interval_ms = 33;
    std::string out_dir = "masknet_out";
    // monitor extras
    double min_conf = 0.8;
    int streak = 3;
    int cooldown = 30;
    std::vector<std::string> sinks;
    std::string report_window;
};

void add_detect_flags(CLI::App* cmd, DetectOpts& d) {
    cmd->add_option("--weights", d.weights, "trained .mnv2w weights")->required();
    cmd->add_option("--frames", d.frames_dir, "directory of frame_000001.ppm ...");
    cmd->add_option("--raw", d.raw_path, "RVID raw frame stream");
    cmd->add_option("--locator", d.locator, "whole_frame | center:F | sidecar:PATH");
    cmd->add_option("--annotate-out", d.annotate_dir, "write annotated frames here");
    cmd->add_option("--log", d.log_path, "record log path (default <out>/records.jsonl)");
    cmd->add_option("--source", d.source_id, "source id stamped on records");
    cmd->add_option("--fixed-time", d.fixed_time,
                    "ISO-8601 timestamp of the first frame (for reproducible logs)");
    cmd->add_option("--interval-ms", d.interval_ms, "milliseconds between frames");
    cmd->add_option("--out", d.out_dir, "output directory");
}

void detect_kv(KvList& kv, const DetectOpts& d) {
    kv.emplace_back("weights", d.weights);
    kv.emplace_back("frames", d.frames_dir);
    kv.emplace_back("raw", d.raw_path);
    kv.emplace_back("locator", d.locator);
    kv.emplace_back("annotate_out", d.annotate_dir);
    kv.emplace_back("log", d.log_path);
    kv.emplace_back("source", d.source_id);
    kv.emplace_back("fixed_time", d.fixed_time);
    kv.emplace_back("interval_ms", std::to_string(d.interval_ms));
    kv.emplace_back("out", d.out_dir);
}

void alert_printer(void*, const char* alert_json, const char* delivery_lines) {
    std::printf("alert %s\n", alert_json);
    if (delivery_lines && delivery_lines[0]) std::printf("%s\n", delivery_lines);
    std::fflush(stdout);
}

int parse_window(const std::string& text, int64_t* start_ms, int64_t* end_ms) {
    const size_t sep = text.find("..");
    if (sep == std::string::npos) {
        std::fprintf(stderr, "error: --report expects START..END (ISO-8601 timestamps)\n");
        return 2;
    }
    if (mn_parse_iso8601(text.substr(0, sep).c_str(), start_ms) != MN_OK ||
        mn_parse_iso8601(text.substr(sep + 2).c_str(), end_ms) != MN_OK) {
        std::fprintf(stderr, "error: %s\n", mn_last_error());
        return 2;
    }
    return 0;
}

int cmd_detect(DetectOpts d, bool with_monitor) {
    if (d.log_path.empty()) d.log_path = d.out_dir + "/records.jsonl";
    KvList kv;
    detect_kv(kv, d);
    if (with_monitor) {
        kv.emplace_back("min_conf", fmt_g(d.min_conf));
        kv.emplace_back("streak", std::to_string(d.streak));
        kv.emplace_back("cooldown", std::to_string(d.cooldown));
        std::string sink_list;
        for (const auto& s : d.sinks) sink_list += (sink_list.empty() ? "" : ",") + s;
        kv.emplace_back("sinks", sink_list);
        kv.emplace_back("report", d.report_window);
    }
    if (int rc = echo_config(with_monitor ? "monitor" : "detect", kv, d.out_dir)) return rc;

    const bool have_frames = !d.frames_dir.empty() || !d.raw_path.empty();
    if (!d.frames_dir.empty() && !d.raw_path.empty()) {
        std::fprintf(stderr, "error: --frames and --raw are mutually exclusive\n");
        return 2;
    }
    const bool report_only = with_monitor && !d.report_window.empty() && !have_frames;
    if (!have_frames && !report_only) {
        std::fprintf(stderr, "error: provide --frames DIR or --raw FILE\n");
        return 2;
    }

    mn_alert_policy policy;
    mn_alert_policy_init(&policy);
    policy.min_confidence = static_cast<float>(d.min_conf);
    policy.consecutive_frames = d.streak;
    policy.cooldown_frames = d.cooldown;

    if (!report_only) {
        mn_model* model_raw = nullptr;
        CHECK_MN(mn_model_load(d.weights.c_str(), &model_raw));
        ModelPtr model(model_raw, mn_model_free);

        int64_t fixed_ms = -1;
        if (!d.fixed_time.empty() && mn_parse_iso8601(d.fixed_time.c_str(), &fixed_ms) != MN_OK) {
            std::fprintf(stderr, "error: %s\n", mn_last_error());
            return 2;
        }

        std::vector<const char*> sink_ptrs;
        for (const auto& s : d.sinks) sink_ptrs.push_back(s.c_str());

        mn_pipeline_options opts;
        mn_pipeline_options_init(&opts);
        opts.locator = d.locator.c_str();
        opts.annotate_dir = d.annotate_dir.empty() ? nullptr : d.annotate_dir.c_str();
        opts.log_path = d.log_path.c_str();
        opts.source_id = d.source_id.c_str();
        opts.fixed_time_ms = fixed_ms;
        opts.frame_interval_ms = d.interval_ms;
        if (with_monitor) {
            opts.policy = &policy;
            opts.sinks = sink_ptrs.data();
            opts.n_sinks = static_cast<int32_t>(sink_ptrs.size());
            opts.on_alert = alert_printer;
        }

        const bool is_rvid = !d.raw_path.empty();
        const std::string frames_path = is_rvid ? d.raw_path : d.frames_dir;
        mn_pipeline_summary summary;
        CHECK_MN(mn_pipeline_run(model.get(), frames_path.c_str(), is_rvid ? 1 : 0, &opts,
                                 &summary));

        std::printf("frames = %lld\n", static_cast<long long>(summary.frames));
        std::printf("detections = %lld\n", static_cast<long long>(summary.detections));
        std::printf("with_mask = %lld\n", static_cast<long long>(summary.with_mask));
        std::printf("without_mask = %lld\n", static_cast<long long>(summary.without_mask));
        if (with_monitor)
            std::printf("alerts = %lld\n", static_cast<long long>(summary.alerts));
        std::printf("log = %s\n", d.log_path.c_str());
    }

    if (with_monitor && !d.report_window.empty()) {
        int64_t start_ms = 0, end_ms = 0;
        if (int rc = parse_window(d.report_window, &start_ms, &end_ms)) return rc;
        mn_report rep;
        CHECK_MN(mn_report_run(d.log_path.c_str(), start_ms, end_ms, &policy, &rep));
        std::printf("report window = %s\n", d.report_window.c_str());
        std::printf("report frames = %lld\n", static_cast<long long>(rep.frames));
        std::printf("report detections = %lld\n", static_cast<long long>(rep.detections));
        std::printf("report with_mask = %lld\n", static_cast<long long>(rep.with_mask));
        std::printf("report without_mask = %lld\n", static_cast<long long>(rep.without_mask));
        std::printf("report alerts = %lld\n", static_cast<long long>(rep.alerts));
        std::printf("report compliance = %s\n", fmt_metric(rep.compliance).c_str());
    }
    return 0;
}

struct BenchOpts {
    int resolution = 224;
    double width = 1.0;
    int repeat = 3;
    uint64_t seed = 0;
    std::string weights;
    std::string out_dir = "masknet_out";
};

int cmd_bench(const BenchOpts& b) {
    KvList kv;
    kv.emplace_back("resolution", std::to_string(b.resolution));
    kv.emplace_back("width", fmt_g(b.width));
    kv.emplace_back("repeat", std::to_string(b.repeat));
    kv.emplace_back("seed", std::to_string(b.seed));
    kv.emplace_back("weights", b.weights);
    kv.emplace_back("out", b.out_dir);
    if (int rc = echo_config("bench", kv, b.out_dir)) return rc;

    mn_model* model_raw = nullptr;
    if (!b.weights.empty()) {
        CHECK_MN(mn_model_load(b.weights.c_str(), &model_raw));
    } else {
        mn_model_config cfg;
        mn_model_config_init(&cfg);
        cfg.input_resolution = b.resolution;
        cfg.width_multiplier = static_cast<float>(b.width);
        CHECK_MN(mn_model_build(&cfg, b.seed, &model_raw));
    }
    ModelPtr model(model_raw, mn_model_free);

    mn_bench_result result;
    char* table = nullptr;
    CHECK_MN(mn_bench_forward(model.get(), b.repeat, &result, &table));
    std::fputs(table, stdout);
    mn_string_free(table);
    std::printf("naive ms/frame = %.3f\n", result.naive_total_ms);
    std::printf("gemm ms/frame = %.3f\n", result.gemm_total_ms);
    std::printf("speedup = %.2fx\n", result.speedup);
    return 0;
}

struct PlotOpts {
    std::string history_csv;
    std::string out_dir = "masknet_out";
};

int cmd_plot(const PlotOpts& p) {
    KvList kv;
    kv.emplace_back("history", p.history_csv);
    kv.emplace_back("out", p.out_dir);
    if (int rc = echo_config("plot", kv, p.out_dir)) return rc;

    mn_history* history_raw = nullptr;
    CHECK_MN(mn_history_read_csv(p.history_csv.c_str(), &history_raw));
    HistoryPtr history(history_raw, mn_history_free);
    const std::string svg_path = p.out_dir + "/history.svg";
    CHECK_MN(mn_history_write_svg(history.get(), svg_path.c_str()));
    std::printf("svg = %s\n", svg_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MobileNetV2 face-mask monitoring toolkit"};
    app.require_subcommand(1);

    TrainOpts train_opts;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_train_flags(train_cmd, train_opts, true);

    EvalOpts eval_opts;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate saved weights on a dataset");
    eval_cmd->add_option("--weights", eval_opts.weights, "trained .mnv2w weights")->required();
    add_data_flags(eval_cmd, eval_opts.data);
    eval_cmd->add_option("--batch", eval_opts.batch, "batch size");
    eval_cmd->add_option("--seed", eval_opts.seed, "seed for synthetic data");
    eval_cmd->add_option("--out", eval_opts.out_dir, "output directory");

    SweepOpts sweep_opts;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sweep over learning rates");
    add_train_flags(sweep_cmd, sweep_opts.base, false);
    sweep_cmd->add_option("--lr", sweep_opts.lrs, "learning rates (repeatable)");
    sweep_cmd->add_option("--jobs", sweep_opts.jobs, "worker threads");

    DetectOpts detect_opts;
    CLI::App* detect_cmd = app.add_subcommand("detect", "classify a frame stream, log records");
    add_detect_flags(detect_cmd, detect_opts);

    DetectOpts monitor_opts;
    CLI::App* monitor_cmd =
        app.add_subcommand("monitor", "detect plus debounced alerts, sinks and reports");
    add_detect_flags(monitor_cmd, monitor_opts);
    monitor_cmd->add_option("--min-conf", monitor_opts.min_conf, "violation confidence floor");
    monitor_cmd->add_option("--streak", monitor_opts.streak, "consecutive violating frames K");
    monitor_cmd->add_option("--cooldown", monitor_opts.cooldown, "observations between alerts");
    monitor_cmd->add_option("--sink", monitor_opts.sinks,
                            "alert sink: stdout | file:PATH | http://... (repeatable)");
    monitor_cmd->add_option("--report", monitor_opts.report_window,
                            "aggregate the log over START..END after the run");

    BenchOpts bench_opts;
    CLI::App* bench_cmd = app.add_subcommand("bench", "time naive vs gemm forward passes");
    bench_cmd->add_option("--resolution", bench_opts.resolution, "input resolution");
    bench_cmd->add_option("--width", bench_opts.width, "width multiplier");
    bench_cmd->add_option("--repeat", bench_opts.repeat, "timing repetitions (median)");
    bench_cmd->add_option("--seed", bench_opts.seed, "input seed");
    bench_cmd->add_option("--weights", bench_opts.weights, "bench saved weights instead");
    bench_cmd->add_option("--out", bench_opts.out_dir, "output directory");

    PlotOpts plot_opts;
    CLI::App* plot_cmd = app.add_subcommand("plot", "render history.csv to an SVG curve plot");
    plot_cmd->add_option("--history", plot_opts.history_csv, "history.csv path")->required();
    plot_cmd->add_option("--out", plot_opts.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(train_opts, train_cmd);
        if (*eval_cmd) return cmd_eval(eval_opts, eval_cmd);
        if (*sweep_cmd) return cmd_sweep(sweep_opts, sweep_cmd);
        if (*detect_cmd) return cmd_detect(detect_opts, false);
        if (*monitor_cmd) return cmd_detect(monitor_opts, true);
        if (*bench_cmd) return cmd_bench(bench_opts);
        if (*plot_cmd) return cmd_plot(plot_opts);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    std::cerr << app.help() << "\n";
    return 2;
}
