#include "core/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace masknet {

double cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    const auto& s = probs.shape();
    const int64_t k = s.c * s.h * s.w;
    if (static_cast<int64_t>(labels.size()) != s.n)
        fail(ErrorCode::shape_mismatch, "cross_entropy: " + std::to_string(labels.size()) +
                                            " labels for batch of " + std::to_string(s.n));
    double total = 0.0;
    for (int64_t n = 0; n < s.n; ++n) {
        const int label = labels[static_cast<size_t>(n)];
        if (label < 0 || label >= k)
            fail(ErrorCode::invalid_argument, "cross_entropy: label " + std::to_string(label) +
                                                  " outside [0," + std::to_string(k) + ")");
        const double p = std::max(static_cast<double>(probs[n * k + label]), 1e-12);
        total -= std::log(p);
    }
    return total / static_cast<double>(s.n);
}

Tensor cross_entropy_backward(const Tensor& probs, const std::vector<int>& labels) {
    const auto& s = probs.shape();
    const int64_t k = s.c * s.h * s.w;
    Tensor g(s);
    const float inv_n = 1.0f / static_cast<float>(s.n);
    for (int64_t n = 0; n < s.n; ++n) {
        const int label = labels[static_cast<size_t>(n)];
        const double p = std::max(static_cast<double>(probs[n * k + label]), 1e-12);
        g[n * k + label] = static_cast<float>(-inv_n / p);
    }
    return g;
}

Optimizer::Optimizer(const Hyperparams& hp, size_t n_slots) : hp_(hp) {
    if (hp.optimizer == OptimizerKind::adam) {
        m_.resize(n_slots);
        v_.resize(n_slots);
    }
}

void Optimizer::step(const std::vector<ParamView>& views, const GradStore& grads) {
    if (views.size() != grads.size())
        fail(ErrorCode::shape_mismatch, "optimizer: " + std::to_string(grads.size()) +
                                            " gradient slots for " + std::to_string(views.size()) +
                                            " parameters");
    ++t_;
    const float lr = static_cast<float>(hp_.learning_rate);
    for (size_t i = 0; i < views.size(); ++i) {
        const ParamView& p = views[i];
        const std::vector<float>& g = grads[i];
        if (!p.trainable || g.empty()) continue;
        if (static_cast<int64_t>(g.size()) != p.count)
            fail(ErrorCode::shape_mismatch, "optimizer: gradient for '" + p.name + "' has " +
                                                std::to_string(g.size()) + " values, parameter has " +
                                                std::to_string(p.count));
        if (hp_.optimizer == OptimizerKind::sgd) {
            for (int64_t j = 0; j < p.count; ++j) p.data[j] -= lr * g[static_cast<size_t>(j)];
            continue;
        }
        auto& m = m_[i];
        auto& v = v_[i];
        if (m.empty()) {
            m.assign(g.size(), 0.0f);
            v.assign(g.size(), 0.0f);
        }
        const float b1 = static_cast<float>(hp_.beta1);
        const float b2 = static_cast<float>(hp_.beta2);
        const float eps = static_cast<float>(hp_.adam_eps);
        const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t_));
        const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t_));
        for (int64_t j = 0; j < p.count; ++j) {
            const size_t ji = static_cast<size_t>(j);
            const float gj = g[ji];
            m[ji] = b1 * m[ji] + (1.0f - b1) * gj;
            v[ji] = b2 * v[ji] + (1.0f - b2) * gj * gj;
            const float mhat = m[ji] / bc1;
            const float vhat = v[ji] / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void freeze_backbone_layers(Model& model) {
    for (auto& layer : model.layers) {
        const std::string k = layer->kind();
        const bool head =
            k == "global_avg_pool" || k == "dropout" || k == "linear" || k == "softmax";
        if (!head) layer->trainable = false;
    }
}

namespace {

int argmax_row(const Tensor& probs, int64_t row, int64_t k) {
    int best = 0;
    float best_v = probs[row * k];
    for (int64_t j = 1; j < k; ++j) {
        const float v = probs[row * k + j];
        if (v > best_v) {  // ties keep the lower index
            best_v = v;
            best = static_cast<int>(j);
        }
    }
    return best;
}

void validate_labels(const LabeledDataset& d, int num_classes, const char* which) {
    if (d.items.empty())
        fail(ErrorCode::data, std::string(which) + " dataset is empty");
    for (const auto& item : d.items)
        if (item.label < 0 || item.label >= num_classes)
            fail(ErrorCode::data, std::string(which) + " dataset has label " +
                                      std::to_string(item.label) + " but the model has " +
                                      std::to_string(num_classes) + " classes");
}

} // namespace

TrainingHistory train_model(Model& model, const LabeledDataset& train_set,
                            const LabeledDataset& val_set, const Hyperparams& hp) {
    if (hp.learning_rate <= 0.0)
        fail(ErrorCode::invalid_argument, "learning_rate must be > 0");
    if (hp.epochs < 1) fail(ErrorCode::invalid_argument, "epochs must be >= 1");
    if (hp.batch_size < 1) fail(ErrorCode::invalid_argument, "batch_size must be >= 1");
    validate_labels(train_set, model.config.num_classes, "train");
    validate_labels(val_set, model.config.num_classes, "validation");

    if (hp.freeze_backbone) freeze_backbone_layers(model);

    Optimizer opt(hp, model.total_slots());
    const auto views = model.params(false);

    TrainingHistory history;
    std::vector<LayerState> trace;
    GradStore grads;
    Tensor batch;
    std::vector<int> labels;

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        Rng dropout_rng(derive_seed(hp.seed, static_cast<uint64_t>(epoch) * 2 + 2));
        BatchStream batches(train_set, hp.batch_size, true,
                            derive_seed(hp.seed, static_cast<uint64_t>(epoch) * 2 + 1),
                            model.config.input_resolution);
        double loss_sum = 0.0;
        int64_t correct = 0, seen = 0;
        int batch_index = 0;
        while (batches.next(batch, labels)) {
            const Tensor probs = model.forward_train(batch, trace, dropout_rng);
            const double loss = cross_entropy(probs, labels);
            if (!std::isfinite(loss))
                fail(ErrorCode::divergence,
                     "training diverged (non-finite loss) at epoch " + std::to_string(epoch + 1) +
                         ", batch " + std::to_string(batch_index + 1));
            const int64_t n = probs.shape().n;
            const int64_t k = model.config.num_classes;
            loss_sum += loss * static_cast<double>(n);
            for (int64_t row = 0; row < n; ++row)
                if (argmax_row(probs, row, k) == labels[static_cast<size_t>(row)]) ++correct;
            seen += n;

            model.backward(trace, cross_entropy_backward(probs, labels), grads);
            opt.step(views, grads);
            ++batch_index;
        }

        const Metrics val = evaluate(model, val_set, hp.batch_size);
        EpochRecord rec;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
        rec.val_loss = val.loss;
        rec.val_accuracy = val.accuracy;
        history.epochs.push_back(rec);
    }
    return history;
}

Metrics evaluate(const Model& model, const LabeledDataset& dataset, int batch_size) {
    if (dataset.items.empty()) fail(ErrorCode::data, "evaluate: dataset is empty");
    validate_labels(dataset, model.config.num_classes, "evaluate");
    Metrics m;
    double loss_sum = 0.0;
    int64_t correct = 0, seen = 0;
    BatchStream batches(dataset, batch_size, false, 0, model.config.input_resolution);
    Tensor batch;
    std::vector<int> labels;
    const int64_t k = model.config.num_classes;
    while (batches.next(batch, labels)) {
        const Tensor probs = model.forward(batch);
        loss_sum += cross_entropy(probs, labels) * static_cast<double>(probs.shape().n);
        for (int64_t row = 0; row < probs.shape().n; ++row) {
            const int truth = labels[static_cast<size_t>(row)];
            const int pred = argmax_row(probs, row, k);
            if (pred == truth) ++correct;
            // positive class = WithMask (0); any other class is negative
            const bool pred_pos = pred == kWithMask;
            const bool truth_pos = truth == kWithMask;
            if (pred_pos && truth_pos) ++m.tp;
            else if (pred_pos && !truth_pos) ++m.fp;
            else if (!pred_pos && truth_pos) ++m.fn;
            else ++m.tn;
        }
        seen += probs.shape().n;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    m.loss = loss_sum / static_cast<double>(seen);
    if (m.tp + m.fp > 0)
        m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn > 0)
        m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    return m;
}

SweepResult sweep(const Model& base_model, const LabeledDataset& train_set,
                  const LabeledDataset& val_set, const std::vector<Hyperparams>& configs,
                  int jobs) {
    if (configs.empty()) fail(ErrorCode::invalid_argument, "sweep: no configurations");
    SweepResult result;
    result.rows.resize(configs.size());

    auto run_one = [&](size_t i) {
        SweepRow& row = result.rows[i];
        row.hp = configs[i];
        Model m = base_model.clone();
        try {
            row.history = train_model(m, train_set, val_set, configs[i]);
            row.final_metrics = evaluate(m, val_set, configs[i].batch_size);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::divergence) throw;
            row.diverged = true;
            row.error = e.what();
        }
    };

    const int workers = std::min<int>(std::max(jobs, 1), static_cast<int>(configs.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < configs.size(); ++i) run_one(i);
        return result;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < configs.size(); i = next.fetch_add(1))
                run_one(i);
        });
    for (auto& t : pool) t.join();
    return result;
}

std::vector<Hyperparams> default_sweep_configs(uint64_t seed) {
    std::vector<Hyperparams> configs(3);
    configs[0].learning_rate = 1e-4;
    configs[1].learning_rate = 1e-3;
    configs[2].learning_rate = 1e-2;
    for (auto& hp : configs) {
        hp.epochs = 20;
        hp.batch_size = 32;
        hp.seed = seed;
    }
    return configs;
}

std::string history_csv(const TrainingHistory& history) {
    std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
    char buf[160];
    for (size_t i = 0; i < history.epochs.size(); ++i) {
        const EpochRecord& r = history.epochs[i];
        std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g,%.6g\n", i + 1, r.train_loss,
                      r.val_loss, r.train_accuracy, r.val_accuracy);
        out += buf;
    }
    return out;
}

TrainingHistory history_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_loss,val_loss,train_acc,val_acc")
        fail(ErrorCode::parse, "history csv: bad header");
    TrainingHistory h;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        EpochRecord r;
        int epoch = 0;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &epoch, &r.train_loss, &r.val_loss,
                        &r.train_accuracy, &r.val_accuracy) != 5)
            fail(ErrorCode::parse, "history csv: bad row at line " + std::to_string(lineno));
        h.epochs.push_back(r);
    }
    if (h.epochs.empty()) fail(ErrorCode::parse, "history csv: no rows");
    return h;
}

namespace {

std::string svg_polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                         const char* color) {
    std::string pts;
    char buf[64];
    for (size_t i = 0; i < xs.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", xs[i], ys[i]);
        pts += buf;
    }
    return "  <polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
}

} // namespace

std::string history_svg(const TrainingHistory& history) {
    if (history.epochs.empty()) fail(ErrorCode::invalid_argument, "history_svg: empty history");
    const double width = 640, height = 400;
    const double ml = 50, mr = 160, mt = 20, mb = 40;
    const double pw = width - ml - mr, ph = height - mt - mb;
    const size_t n = history.epochs.size();

    struct Series {
        const char* label;
        const char* color;
        std::vector<double> values;
    };
    std::vector<Series> series = {{"train_loss", "#d62728", {}},
                                  {"val_loss", "#ff7f0e", {}},
                                  {"train_acc", "#2ca02c", {}},
                                  {"val_acc", "#1f77b4", {}}};
    for (const auto& r : history.epochs) {
        series[0].values.push_back(r.train_loss);
        series[1].values.push_back(r.val_loss);
        series[2].values.push_back(r.train_accuracy);
        series[3].values.push_back(r.val_accuracy);
    }
    double ymax = 1.0;
    for (const auto& s : series)
        for (double v : s.values) ymax = std::max(ymax, v);

    auto x_of = [&](size_t i) {
        return n == 1 ? ml + pw / 2 : ml + pw * static_cast<double>(i) / (n - 1);
    };
    auto y_of = [&](double v) { return mt + ph * (1.0 - v / ymax); };

    std::string out;
    char buf[256];
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                  "viewBox=\"0 0 %.0f %.0f\">\n",
                  width, height, width, height);
    out += buf;
    out += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // axes
    std::snprintf(buf, sizeof buf,
                  "  <line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  ml, mt, ml, mt + ph);
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "  <line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  ml, mt + ph, ml + pw, mt + ph);
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "  <text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">epoch"
                  "</text>\n",
                  ml + pw / 2, height - 8);
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "  <text x=\"%.1f\" y=\"%.1f\" font-size=\"10\">%.3g</text>\n", 8.0, mt + 10,
                  ymax);
    out += buf;
    out += "  <text x=\"8\" y=\"" + std::to_string(static_cast<int>(mt + ph)) +
           "\" font-size=\"10\">0</text>\n";

    std::vector<double> xs(n);
    for (size_t i = 0; i < n; ++i) xs[i] = x_of(i);
    double legend_y = mt + 16;
    for (const auto& s : series) {
        std::vector<double> ys(n);
        for (size_t i = 0; i < n; ++i) ys[i] = y_of(s.values[i]);
        out += svg_polyline(xs, ys, s.color);
        std::snprintf(buf, sizeof buf,
                      "  <line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
                      "stroke-width=\"2\"/>\n  <text x=\"%.1f\" y=\"%.1f\" font-size=\"12\">%s"
                      "</text>\n",
                      ml + pw + 10, legend_y - 4, ml + pw + 34, legend_y - 4, s.color,
                      ml + pw + 40, legend_y, s.label);
        out += buf;
        legend_y += 18;
    }
    out += "</svg>\n";
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
    f << content;
    if (!f) fail(ErrorCode::io, "failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    if (f.bad()) fail(ErrorCode::io, "failed reading '" + path + "'");
    return ss.str();
}

} // namespace masknet
