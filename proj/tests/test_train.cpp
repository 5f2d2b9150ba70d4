#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/error.hpp"
#include "core/model.hpp"
#include "core/train.hpp"

using namespace masknet;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error to be thrown");
    return ErrorCode::invalid_argument;
}

Tensor row_tensor(std::vector<float> v, int64_t n, int64_t k) {
    return Tensor::from_data({n, k, 1, 1}, std::move(v));
}

// Head-only model over constant images: GAP collapses a constant image to its
// normalized value z per channel, and the linear layer maps to logits (z, 0),
// so prediction is WithMask exactly when the pixel value exceeds 127.5.
Model threshold_model() {
    Model m;
    m.config = {32, 1.0f, 2, 0.0f};
    m.class_names = default_class_names(2);

    auto pool = std::make_unique<GlobalAvgPoolLayer>();
    pool->name = "pool";
    m.layers.push_back(std::move(pool));

    auto fc = std::make_unique<LinearLayer>();
    fc->name = "fc";
    fc->weight = Tensor::from_data({2, 3, 1, 1}, {1, 0, 0, 0, 0, 0});
    fc->bias = {0.0f, 0.0f};
    m.layers.push_back(std::move(fc));

    auto sm = std::make_unique<SoftmaxLayer>();
    sm->name = "softmax";
    m.layers.push_back(std::move(sm));
    return m;
}

// Constant bias head: predicts the same class regardless of input.
Model constant_model(int predicted_class) {
    Model m = threshold_model();
    for (auto& layer : m.layers)
        if (auto* fc = dynamic_cast<LinearLayer*>(layer.get())) {
            for (int64_t i = 0; i < fc->weight.size(); ++i) fc->weight[i] = 0.0f;
            fc->bias = {predicted_class == 0 ? 1.0f : 0.0f, predicted_class == 1 ? 1.0f : 0.0f};
        }
    return m;
}

LabeledDataset constant_items(const std::vector<std::pair<uint8_t, int>>& spec) {
    LabeledDataset ds;
    ds.class_names = {"with_mask", "without_mask"};
    for (auto [value, label] : spec) {
        LabeledItem item;
        item.image = make_image(1, 1, value, value, value);
        item.label = label;
        ds.items.push_back(std::move(item));
    }
    return ds;
}

struct TinyRun {
    LabeledDataset train;
    LabeledDataset val;
    Model model;
};

TinyRun tiny_run(uint64_t data_seed = 11, uint64_t model_seed = 21) {
    TinyRun r;
    auto data = synth_mask_dataset(30, 32, data_seed);
    auto [tr, va] = split(data, 0.8, data_seed);
    r.train = std::move(tr);
    r.val = std::move(va);
    r.model = build_mobilenet_v2({32, 0.25f, 2, 0.2f}, model_seed);
    return r;
}

Hyperparams tiny_hp() {
    Hyperparams hp;
    hp.learning_rate = 1e-3;
    hp.epochs = 3;
    hp.batch_size = 16;
    hp.seed = 5;
    return hp;
}

std::vector<std::vector<float>> snapshot(const Model& m, bool include_buffers) {
    std::vector<std::vector<float>> out;
    for (const auto& v : m.params(include_buffers))
        out.emplace_back(v.data, v.data + v.count);
    return out;
}

bool histories_equal(const TrainingHistory& a, const TrainingHistory& b) {
    if (a.epochs.size() != b.epochs.size()) return false;
    for (size_t i = 0; i < a.epochs.size(); ++i) {
        if (a.epochs[i].train_loss != b.epochs[i].train_loss) return false;
        if (a.epochs[i].val_loss != b.epochs[i].val_loss) return false;
        if (a.epochs[i].train_accuracy != b.epochs[i].train_accuracy) return false;
        if (a.epochs[i].val_accuracy != b.epochs[i].val_accuracy) return false;
    }
    return true;
}

} // namespace

TEST_CASE("cross_entropy closed-form examples") {
    CHECK(cross_entropy(row_tensor({1.0f, 0.0f}, 1, 2), {0}) == doctest::Approx(0.0));
    CHECK(cross_entropy(row_tensor({0.5f, 0.5f}, 1, 2), {1}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
    // batch of a perfect and a uniform prediction: mean of 0 and ln 2
    CHECK(cross_entropy(row_tensor({1.0f, 0.0f, 0.5f, 0.5f}, 2, 2), {0, 0}) ==
          doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-6));
    CHECK(cross_entropy(row_tensor({1.0f, 0.0f, 0.5f, 0.5f}, 2, 2), {0, 0}) ==
          doctest::Approx(0.3466).epsilon(1e-3));
}

TEST_CASE("cross_entropy clamps zero probability instead of producing inf") {
    const double loss = cross_entropy(row_tensor({0.0f, 1.0f}, 1, 2), {0});
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("cross_entropy rejects bad labels and mismatched batches") {
    CHECK(code_of([] { cross_entropy(row_tensor({0.5f, 0.5f}, 1, 2), {2}); }) ==
          ErrorCode::invalid_argument);
    CHECK(code_of([] { cross_entropy(row_tensor({0.5f, 0.5f}, 1, 2), {-1}); }) ==
          ErrorCode::invalid_argument);
    CHECK(code_of([] { cross_entropy(row_tensor({0.5f, 0.5f}, 1, 2), {0, 1}); }) ==
          ErrorCode::shape_mismatch);
}

TEST_CASE("sgd step: p=1.0, g=0.5, lr=0.1 gives 0.95") {
    float p = 1.0f;
    ParamView view;
    view.name = "p";
    view.data = &p;
    view.count = 1;
    view.trainable = true;

    Hyperparams hp;
    hp.optimizer = OptimizerKind::sgd;
    hp.learning_rate = 0.1;
    Optimizer opt(hp, 1);
    opt.step({view}, {{0.5f}});
    CHECK(p == doctest::Approx(0.95).epsilon(1e-7));
}

TEST_CASE("adam first step moves against the gradient sign by about lr") {
    float p_pos = 1.0f, p_neg = 1.0f;
    ParamView vp;
    vp.data = &p_pos;
    vp.count = 1;
    vp.trainable = true;
    ParamView vn = vp;
    vn.data = &p_neg;

    Hyperparams hp;
    hp.learning_rate = 0.01;
    Optimizer opt(hp, 2);
    opt.step({vp, vn}, {{0.5f}, {-0.5f}});

    CHECK(p_pos < 1.0f);
    CHECK(p_neg > 1.0f);
    // bias-corrected first step: |update| = lr * g/sqrt(g^2) ~= lr
    CHECK(p_pos == doctest::Approx(0.99).epsilon(1e-4));
    CHECK(p_neg == doctest::Approx(1.01).epsilon(1e-4));
}

TEST_CASE("zero gradient is a fixed point for both optimizers") {
    for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
        float p = 0.75f;
        ParamView view;
        view.data = &p;
        view.count = 1;
        view.trainable = true;
        Hyperparams hp;
        hp.optimizer = kind;
        hp.learning_rate = 0.5;
        Optimizer opt(hp, 1);
        for (int i = 0; i < 3; ++i) opt.step({view}, {{0.0f}});
        CHECK(p == 0.75f);
    }
}

TEST_CASE("optimizer skips non-trainable views and empty gradient slots") {
    float frozen = 2.0f, skipped = 3.0f;
    ParamView vf;
    vf.data = &frozen;
    vf.count = 1;
    vf.trainable = false;
    ParamView vs;
    vs.data = &skipped;
    vs.count = 1;
    vs.trainable = true;

    Hyperparams hp;
    hp.optimizer = OptimizerKind::sgd;
    hp.learning_rate = 1.0;
    Optimizer opt(hp, 2);
    opt.step({vf, vs}, {{5.0f}, {}});
    CHECK(frozen == 2.0f);
    CHECK(skipped == 3.0f);
}

TEST_CASE("optimizer validates slot alignment") {
    float p = 1.0f;
    ParamView view;
    view.data = &p;
    view.count = 1;
    view.trainable = true;
    Hyperparams hp;
    Optimizer opt(hp, 1);
    CHECK(code_of([&] { opt.step({view}, {}); }) == ErrorCode::shape_mismatch);
    CHECK(code_of([&] { opt.step({view}, {{1.0f, 2.0f}}); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("evaluate: TP=8 FP=2 FN=1 TN=9 gives precision 0.8, recall 8/9, accuracy 0.85") {
    Model m = threshold_model();
    std::vector<std::pair<uint8_t, int>> spec;
    for (int i = 0; i < 8; ++i) spec.push_back({200, kWithMask});     // TP
    for (int i = 0; i < 2; ++i) spec.push_back({200, kWithoutMask}); // FP
    for (int i = 0; i < 1; ++i) spec.push_back({50, kWithMask});     // FN
    for (int i = 0; i < 9; ++i) spec.push_back({50, kWithoutMask});  // TN

    Metrics metrics = evaluate(m, constant_items(spec), 4);
    CHECK(metrics.tp == 8);
    CHECK(metrics.fp == 2);
    CHECK(metrics.fn == 1);
    CHECK(metrics.tn == 9);
    CHECK(metrics.count() == 20);
    REQUIRE(metrics.precision.has_value());
    REQUIRE(metrics.recall.has_value());
    CHECK(*metrics.precision == doctest::Approx(0.8));
    CHECK(*metrics.recall == doctest::Approx(8.0 / 9.0));
    CHECK(metrics.accuracy == doctest::Approx(0.85));
    // identity: accuracy recomputable from the stored confusion counts
    CHECK(metrics.accuracy ==
          doctest::Approx(static_cast<double>(metrics.tp + metrics.tn) / metrics.count()));
    CHECK(std::isfinite(metrics.loss));
    CHECK(metrics.loss > 0.0);
}

TEST_CASE("a predict-everything-WithMask model scores recall 1.0, precision 0.5 on balanced data") {
    Model m = constant_model(kWithMask);
    std::vector<std::pair<uint8_t, int>> spec;
    for (int i = 0; i < 10; ++i) spec.push_back({100, kWithMask});
    for (int i = 0; i < 10; ++i) spec.push_back({100, kWithoutMask});
    Metrics metrics = evaluate(m, constant_items(spec), 32);
    REQUIRE(metrics.recall.has_value());
    REQUIRE(metrics.precision.has_value());
    CHECK(*metrics.recall == 1.0);
    CHECK(*metrics.precision == 0.5);
    CHECK(metrics.accuracy == 0.5);
}

TEST_CASE("zero positive items: recall is absent, not silently zero") {
    std::vector<std::pair<uint8_t, int>> spec;
    for (int i = 0; i < 6; ++i) spec.push_back({100, kWithoutMask});

    Metrics pred_pos = evaluate(constant_model(kWithMask), constant_items(spec), 32);
    CHECK_FALSE(pred_pos.recall.has_value());
    REQUIRE(pred_pos.precision.has_value());
    CHECK(*pred_pos.precision == 0.0);
    CHECK(pred_pos.accuracy == 0.0);

    Metrics pred_neg = evaluate(constant_model(kWithoutMask), constant_items(spec), 32);
    CHECK_FALSE(pred_neg.recall.has_value());
    CHECK_FALSE(pred_neg.precision.has_value());  // no positive predictions either
    CHECK(pred_neg.accuracy == 1.0);
}

TEST_CASE("training is deterministic: same seed, same data, same weights twice") {
    TinyRun r = tiny_run();
    Hyperparams hp = tiny_hp();

    Model m1 = r.model.clone();
    Model m2 = r.model.clone();
    TrainingHistory h1 = train_model(m1, r.train, r.val, hp);
    TrainingHistory h2 = train_model(m2, r.train, r.val, hp);

    REQUIRE(h1.epochs.size() == 3);
    CHECK(histories_equal(h1, h2));
    CHECK(snapshot(m1, true) == snapshot(m2, true));
}

TEST_CASE("training reduces the train loss on the tiny seeded run") {
    TinyRun r = tiny_run();
    Model m = r.model.clone();
    TrainingHistory h = train_model(m, r.train, r.val, tiny_hp());
    CHECK(h.epochs.back().train_loss < h.epochs.front().train_loss);
    for (const auto& e : h.epochs) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.train_accuracy >= 0.0);
        CHECK(e.train_accuracy <= 1.0);
        CHECK(e.val_accuracy >= 0.0);
        CHECK(e.val_accuracy <= 1.0);
    }
}

TEST_CASE("freeze_backbone leaves every backbone tensor bit-identical") {
    TinyRun r = tiny_run();
    Model m = r.model.clone();
    Hyperparams hp = tiny_hp();
    hp.epochs = 1;
    hp.freeze_backbone = true;

    auto before = m.params(true);
    std::vector<std::pair<std::string, std::vector<float>>> backbone_before;
    std::vector<float> fc_before;
    for (const auto& v : before) {
        if (v.name.rfind("fc.", 0) == 0)
            fc_before.insert(fc_before.end(), v.data, v.data + v.count);
        else
            backbone_before.emplace_back(v.name, std::vector<float>(v.data, v.data + v.count));
    }

    train_model(m, r.train, r.val, hp);

    std::vector<float> fc_after;
    size_t bi = 0;
    for (const auto& v : m.params(true)) {
        if (v.name.rfind("fc.", 0) == 0) {
            fc_after.insert(fc_after.end(), v.data, v.data + v.count);
            continue;
        }
        REQUIRE(backbone_before[bi].first == v.name);
        const auto& old = backbone_before[bi].second;
        for (int64_t j = 0; j < v.count; ++j) REQUIRE(old[static_cast<size_t>(j)] == v.data[j]);
        ++bi;
    }
    CHECK(bi == backbone_before.size());
    CHECK(fc_after != fc_before);  // the head did move
    CHECK(m.param_count(ParamScope::trainable) < m.param_count(ParamScope::all));
}

TEST_CASE("divergence aborts with an error naming epoch and batch") {
    TinyRun r = tiny_run();
    Model m = r.model.clone();
    Hyperparams hp = tiny_hp();
    hp.learning_rate = 1e30;
    hp.optimizer = OptimizerKind::sgd;
    try {
        train_model(m, r.train, r.val, hp);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::divergence);
        const std::string what = e.what();
        CHECK(what.find("epoch 1") != std::string::npos);
        CHECK(what.find("batch 2") != std::string::npos);
    }
}

TEST_CASE("train_model validates hyperparameters and datasets") {
    TinyRun r = tiny_run();
    Hyperparams hp = tiny_hp();

    Hyperparams bad = hp;
    bad.learning_rate = 0.0;
    CHECK(code_of([&] { Model m = r.model.clone(); train_model(m, r.train, r.val, bad); }) ==
          ErrorCode::invalid_argument);
    bad = hp;
    bad.epochs = 0;
    CHECK(code_of([&] { Model m = r.model.clone(); train_model(m, r.train, r.val, bad); }) ==
          ErrorCode::invalid_argument);
    bad = hp;
    bad.batch_size = 0;
    CHECK(code_of([&] { Model m = r.model.clone(); train_model(m, r.train, r.val, bad); }) ==
          ErrorCode::invalid_argument);

    LabeledDataset empty;
    CHECK(code_of([&] { Model m = r.model.clone(); train_model(m, empty, r.val, hp); }) ==
          ErrorCode::data);

    LabeledDataset bad_labels = r.train;
    bad_labels.items[0].label = 7;
    CHECK(code_of([&] { Model m = r.model.clone(); train_model(m, bad_labels, r.val, hp); }) ==
          ErrorCode::data);
}

TEST_CASE("single-config sweep equals a direct train+evaluate run") {
    TinyRun r = tiny_run();
    Hyperparams hp = tiny_hp();

    SweepResult sw = sweep(r.model, r.train, r.val, {hp}, 1);
    REQUIRE(sw.rows.size() == 1);
    CHECK_FALSE(sw.rows[0].diverged);

    Model direct = r.model.clone();
    TrainingHistory h = train_model(direct, r.train, r.val, hp);
    Metrics m = evaluate(direct, r.val, hp.batch_size);

    CHECK(histories_equal(sw.rows[0].history, h));
    CHECK(sw.rows[0].final_metrics.accuracy == m.accuracy);
    CHECK(sw.rows[0].final_metrics.tp == m.tp);
    CHECK(sw.rows[0].final_metrics.loss == m.loss);
}

TEST_CASE("sweep keeps input order and records divergence without stopping") {
    TinyRun r = tiny_run();
    Hyperparams good = tiny_hp();
    good.epochs = 1;
    Hyperparams bad = good;
    bad.learning_rate = 1e30;
    bad.optimizer = OptimizerKind::sgd;
    Hyperparams good2 = good;
    good2.learning_rate = 5e-4;

    SweepResult sw = sweep(r.model, r.train, r.val, {good, bad, good2}, 1);
    REQUIRE(sw.rows.size() == 3);
    CHECK(sw.rows[0].hp.learning_rate == good.learning_rate);
    CHECK(sw.rows[1].hp.learning_rate == bad.learning_rate);
    CHECK(sw.rows[2].hp.learning_rate == good2.learning_rate);
    CHECK_FALSE(sw.rows[0].diverged);
    CHECK(sw.rows[1].diverged);
    CHECK(sw.rows[1].error.find("diverged") != std::string::npos);
    CHECK(sw.rows[1].history.epochs.empty());
    CHECK_FALSE(sw.rows[2].diverged);
    CHECK(sw.rows[0].history.epochs.size() == 1);
    CHECK(sw.rows[2].history.epochs.size() == 1);
}

TEST_CASE("parallel sweep matches the sequential sweep row for row") {
    TinyRun r = tiny_run();
    Hyperparams a = tiny_hp();
    a.epochs = 1;
    Hyperparams b = a;
    b.learning_rate = 5e-4;
    Hyperparams c = a;
    c.learning_rate = 1e-4;

    SweepResult seq = sweep(r.model, r.train, r.val, {a, b, c}, 1);
    SweepResult par = sweep(r.model, r.train, r.val, {a, b, c}, 3);
    REQUIRE(seq.rows.size() == par.rows.size());
    for (size_t i = 0; i < seq.rows.size(); ++i) {
        CHECK(histories_equal(seq.rows[i].history, par.rows[i].history));
        CHECK(seq.rows[i].final_metrics.accuracy == par.rows[i].final_metrics.accuracy);
    }
}

TEST_CASE("default sweep is the three paper learning rates at epochs 20, batch 32") {
    auto configs = default_sweep_configs(77);
    REQUIRE(configs.size() == 3);
    CHECK(configs[0].learning_rate == 1e-4);
    CHECK(configs[1].learning_rate == 1e-3);
    CHECK(configs[2].learning_rate == 1e-2);
    for (const auto& hp : configs) {
        CHECK(hp.epochs == 20);
        CHECK(hp.batch_size == 32);
        CHECK(hp.seed == 77);
    }
}

TEST_CASE("history csv: 20 epochs give 21 lines and a 6-significant-digit round trip") {
    TrainingHistory h;
    for (int i = 0; i < 20; ++i) {
        EpochRecord r;
        r.train_loss = 0.9 / (i + 1);
        r.val_loss = 1.1 / (i + 1);
        r.train_accuracy = 0.5 + 0.02 * i;
        r.val_accuracy = 0.48 + 0.021 * i;
        h.epochs.push_back(r);
    }
    const std::string csv = history_csv(h);

    int lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 21);
    CHECK(csv.rfind("epoch,train_loss,val_loss,train_acc,val_acc\n", 0) == 0);

    TrainingHistory back = history_from_csv(csv);
    REQUIRE(back.epochs.size() == 20);
    for (size_t i = 0; i < 20; ++i) {
        CHECK(back.epochs[i].train_loss ==
              doctest::Approx(h.epochs[i].train_loss).epsilon(1e-5));
        CHECK(back.epochs[i].val_loss == doctest::Approx(h.epochs[i].val_loss).epsilon(1e-5));
        CHECK(back.epochs[i].train_accuracy ==
              doctest::Approx(h.epochs[i].train_accuracy).epsilon(1e-5));
        CHECK(back.epochs[i].val_accuracy ==
              doctest::Approx(h.epochs[i].val_accuracy).epsilon(1e-5));
    }
}

TEST_CASE("history csv parser rejects malformed input") {
    CHECK(code_of([] { history_from_csv("nope\n1,2,3,4,5\n"); }) == ErrorCode::parse);
    CHECK(code_of([] {
        history_from_csv("epoch,train_loss,val_loss,train_acc,val_acc\n1,0.5,bad,0.7,0.8\n");
    }) == ErrorCode::parse);
    CHECK(code_of([] { history_from_csv("epoch,train_loss,val_loss,train_acc,val_acc\n"); }) ==
          ErrorCode::parse);
}

TEST_CASE("history svg is a self-contained plot with the four named series") {
    TrainingHistory h;
    for (int i = 0; i < 5; ++i) {
        EpochRecord r;
        r.train_loss = 1.0 - 0.1 * i;
        r.val_loss = 1.1 - 0.1 * i;
        r.train_accuracy = 0.5 + 0.1 * i;
        r.val_accuracy = 0.5 + 0.09 * i;
        h.epochs.push_back(r);
    }
    const std::string svg = history_svg(h);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    for (const char* label : {"train_loss", "val_loss", "train_acc", "val_acc"})
        CHECK(svg.find(label) != std::string::npos);

    size_t polylines = 0, pos = 0;
    while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
        ++polylines;
        pos += 9;
    }
    CHECK(polylines == 4);
    CHECK(code_of([] { history_svg(TrainingHistory{}); }) == ErrorCode::invalid_argument);
}
