#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/ops.hpp"

namespace masknet {

struct ModelConfig {
    int input_resolution = 224;  // must be divisible by 32
    float width_multiplier = 1.0f;
    int num_classes = 2;
    float dropout_rate = 0.5f;
};

// Mutable view of one parameter array. The optimizer, the serializer and
// param_count all walk the same deterministic view list.
struct ParamView {
    int layer_index = 0;
    std::string name;
    float* data = nullptr;
    int64_t count = 0;
    std::vector<int64_t> extents;
    bool buffer = false;  // BN running statistics
    bool trainable = false;
};

// Per-unit context saved by a train-mode forward for the backward pass.
struct ConvBnCtx {
    Tensor input;
    Tensor pre_act;  // BN output before ReLU6; empty for linear-activation units
    BnContext bn;
    BnBatchStats stats;
    bool bn_infer = false;  // frozen layers normalize with running stats
};

struct LayerState {
    std::vector<ConvBnCtx> units;
    Tensor saved;  // linear input, softmax probs, or dropout mask
    Shape4 in_shape{};
};

// Parameter gradients, one slot per non-buffer ParamView in model order.
using GradStore = std::vector<std::vector<float>>;

class Layer {
public:
    virtual ~Layer() = default;

    std::string name;
    bool trainable = true;

    virtual std::string kind() const = 0;
    virtual Tensor forward(const Tensor& x) const = 0;
    // Same result as forward() but with the convolution path pinned; the
    // benchmark uses it to time naive vs gemm per layer.
    virtual Tensor forward_path(const Tensor& x, ConvPath) const { return forward(x); }
    virtual Tensor forward_train(const Tensor& x, LayerState& st, Rng& rng) const = 0;
    // Writes parameter gradients into slots[base .. base+slot_count()) and
    // returns the input gradient when requested. Train-mode BN running
    // statistics are committed here, once per step.
    virtual Tensor backward(const LayerState& st, const Tensor& grad_out,
                            GradStore& slots, size_t base, bool need_input_grad) = 0;
    virtual size_t slot_count() const = 0;
    virtual void collect_params(std::vector<ParamView>& out, bool include_buffers) = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;
};

// Conv (full or depthwise) + batch norm + optional ReLU6: the building block
// of the stem, the bottlenecks and the final feature layer. Convs carry no
// bias; BN provides the shift.
struct ConvBnUnit {
    ConvParams conv;
    BatchNormParams bn;
    bool depthwise = false;
    bool act = true;

    int64_t out_channels() const { return conv.weight.shape().n; }

    Tensor forward(const Tensor& x, ConvPath path = ConvPath::gemm) const;
    Tensor forward_train(const Tensor& x, ConvBnCtx& ctx, bool bn_infer) const;
    Tensor backward(const ConvBnCtx& ctx, const Tensor& grad_out,
                    GradStore& slots, size_t base, bool need_input_grad);
    void collect_params(const std::string& prefix, std::vector<ParamView>& out,
                        bool include_buffers);
};

class ConvBnActLayer : public Layer {
public:
    ConvBnUnit unit;

    std::string kind() const override { return "conv_bn_act"; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_path(const Tensor& x, ConvPath path) const override {
        return unit.forward(x, path);
    }
    Tensor forward_train(const Tensor& x, LayerState& st, Rng& rng) const override;
    Tensor backward(const LayerState& st, const Tensor& grad_out,
                    GradStore& slots, size_t base, bool need_input_grad) override;
    size_t slot_count() const override { return 3; }
    void collect_params(std::vector<ParamView>& out, bool include_buffers) override;
    std::unique_ptr<Layer> clone() const override;
};

// Inverted residual bottleneck: [1x1 expand]+BN+ReLU6 -> 3x3 depthwise
// +BN+ReLU6 -> 1x1 project+BN, skip connection iff stride 1 and in == out.
// t = 1 blocks have no expand unit.
class InvertedResidualLayer : public Layer {
public:
    std::optional<ConvBnUnit> expand;
    ConvBnUnit dw;
    ConvBnUnit project;
    int expansion = 6;
    int stride = 1;
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    bool use_residual = false;

    std::string kind() const override { return "bottleneck"; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_path(const Tensor& x, ConvPath path) const override;
    Tensor forward_train(const Tensor& x, LayerState& st, Rng& rng) const override;
    Tensor backward(const LayerState& st, const Tensor& grad_out,
                    GradStore& slots, size_t base, bool need_input_grad) override;
    size_t slot_count() const override { return expand ? 9 : 6; }
    void collect_params(std::vector<ParamView>& out, bool include_buffers) override;
    std::unique_ptr<Layer> clone() const override;
};

class GlobalAvgPoolLayer : public Layer {
public:
    std::string kind() const override { return "global_avg_pool"; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerState& st, Rng& rng) const override;
    Tensor backward(const LayerState& st, const Tensor& grad_out,
                    GradStore& slots, size_t base, bool need_input_grad) override;
    size_t slot_count() const override { return 0; }
    void collect_params(std::vector<ParamView>&, bool) override {}
    std::unique_ptr<Layer> clone() const override;
};

class DropoutLayer : public Layer {
public:
    float rate = 0.5f;

    std::string kind() const override { return "dropout"; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerState& st, Rng& rng) const override;
    Tensor backward(const LayerState& st, const Tensor& grad_out,
                    GradStore& slots, size_t base, bool need_input_grad) override;
    size_t slot_count() const override { return 0; }
    void collect_params(std::vector<ParamView>&, bool) override {}
    std::unique_ptr<Layer> clone() const override;
};

class LinearLayer : public Layer {
public:
    Tensor weight;  // (O, F, 1, 1)
    std::vector<float> bias;

    std::string kind() const override { return "linear"; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerState& st, Rng& rng) const override;
    Tensor backward(const LayerState& st, const Tensor& grad_out,
                    GradStore& slots, size_t base, bool need_input_grad) override;
    size_t slot_count() const override { return 2; }
    void collect_params(std::vector<ParamView>& out, bool include_buffers) override;
    std::unique_ptr<Layer> clone() const override;
};

class SoftmaxLayer : public Layer {
public:
    std::string kind() const override { return "softmax"; }
    Tensor forward(const Tensor& x) const override;
    Tensor forward_train(const Tensor& x, LayerState& st, Rng& rng) const override;
    Tensor backward(const LayerState& st, const Tensor& grad_out,
                    GradStore& slots, size_t base, bool need_input_grad) override;
    size_t slot_count() const override { return 0; }
    void collect_params(std::vector<ParamView>&, bool) override {}
    std::unique_ptr<Layer> clone() const override;
};

// Parameter counting scopes. `all` covers conv/linear weights, biases and BN
// gamma/beta; running statistics are reported separately under `buffers`.
enum class ParamScope { all, trainable, buffers };

class Model {
public:
    ModelConfig config;
    std::vector<std::string> class_names;
    std::vector<std::unique_ptr<Layer>> layers;

    Model() = default;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    Tensor forward(const Tensor& batch) const;
    // Records per-layer state for backward; dropout draws from rng.
    Tensor forward_train(const Tensor& batch, std::vector<LayerState>& trace, Rng& rng) const;
    // grad_out is d(loss)/d(model output). Fills grads (aligned with
    // params(false)) and commits BN running updates on trainable layers.
    void backward(const std::vector<LayerState>& trace, const Tensor& grad_out, GradStore& grads);

    std::vector<ParamView> params(bool include_buffers = false);
    std::vector<ParamView> params(bool include_buffers = false) const;
    int64_t param_count(ParamScope scope) const;
    size_t total_slots() const;
    // Index of the first layer owning trainable parameters; layers.size()
    // when fully frozen. Backward stops there.
    size_t first_trainable_layer() const;

    Model clone() const;

private:
    void check_input(const Shape4& s) const;
};

std::vector<std::string> default_class_names(int num_classes);
int64_t scale_channels(int64_t channels, float width_multiplier);

Model build_mobilenet_v2(const ModelConfig& config, uint64_t seed);
// Removes any pooling/dropout/linear/softmax head layers from the tail.
void strip_head(Model& model);
// Appends global_avg_pool -> dropout -> linear(num_classes) -> softmax to a
// backbone ending at the feature convolution. freeze_backbone marks all
// pre-existing layers non-trainable and locks their BN to infer mode.
void attach_head(Model& model, int num_classes, bool freeze_backbone, uint64_t seed);

} // namespace masknet
