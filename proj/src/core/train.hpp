#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"

namespace masknet {

enum class OptimizerKind { adam, sgd };

struct Hyperparams {
    double learning_rate = 1e-4;
    int epochs = 20;
    int batch_size = 32;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    bool freeze_backbone = false;
};

// Positive class for precision/recall is WithMask (class 0). Undefined
// denominators stay absent rather than silently becoming 0.
struct Metrics {
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    double loss = 0.0;

    int64_t count() const { return tp + fp + tn + fn; }
};

struct EpochRecord {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

struct TrainingHistory {
    std::vector<EpochRecord> epochs;
};

struct SweepRow {
    Hyperparams hp;
    Metrics final_metrics;  // on the validation set
    TrainingHistory history;
    bool diverged = false;
    std::string error;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

// Mean over the batch of -ln(p[label]), p clamped to >= 1e-12.
double cross_entropy(const Tensor& probs, const std::vector<int>& labels);

// d(cross_entropy)/d(probs), matching the clamping above.
Tensor cross_entropy_backward(const Tensor& probs, const std::vector<int>& labels);

class Optimizer {
public:
    Optimizer(const Hyperparams& hp, size_t n_slots);
    // views must align with grads (one per non-buffer ParamView, model
    // order); only trainable views with a present gradient are updated.
    void step(const std::vector<ParamView>& views, const GradStore& grads);

private:
    Hyperparams hp_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

// Marks every layer outside the pool/dropout/linear/softmax head
// non-trainable (their BN then runs on running statistics).
void freeze_backbone_layers(Model& model);

// hp.epochs of seeded shuffled batches; mutates the model in place and
// returns the per-epoch curves. Throws a divergence error naming epoch and
// batch when the loss turns non-finite.
TrainingHistory train_model(Model& model, const LabeledDataset& train_set,
                            const LabeledDataset& val_set, const Hyperparams& hp);

Metrics evaluate(const Model& model, const LabeledDataset& dataset, int batch_size = 32);

// One row per configuration, in input order; each run starts from a fresh
// clone of base_model. A diverging run is recorded in its row and the sweep
// continues. jobs > 1 runs configurations on worker threads.
SweepResult sweep(const Model& base_model, const LabeledDataset& train_set,
                  const LabeledDataset& val_set, const std::vector<Hyperparams>& configs,
                  int jobs = 1);

// Default sweep: learning rates 1e-4, 1e-3, 1e-2 at epochs 20, batch 32.
std::vector<Hyperparams> default_sweep_configs(uint64_t seed);

std::string history_csv(const TrainingHistory& history);
std::string history_svg(const TrainingHistory& history);
TrainingHistory history_from_csv(const std::string& text);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace masknet
