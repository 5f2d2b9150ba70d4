#pragma once

#include <optional>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace masknet {

// Every convolution carries two implementations behind one interface: the
// naive loop path is the always-correct reference, the im2col+GEMM path is
// the fast one. Tests pin them together.
enum class ConvPath { naive, gemm };

struct ConvParams {
    Tensor weight;            // (Cout, Cin, kh, kw); depthwise weights are (C, 1, kh, kw)
    std::vector<float> bias;  // empty when batch norm follows
    int stride = 1;
    int padding = 0;
};

struct ConvOutDims {
    int64_t hout = 0;
    int64_t wout = 0;
};

// Validates geometry and returns output extents (floor semantics, matching
// mainstream frameworks). Throws shape_mismatch naming the offending
// dimensions on any violation.
ConvOutDims conv_out_dims(const Shape4& input, const ConvParams& p, const char* op_name);

Tensor conv2d(const Tensor& input, const ConvParams& p, ConvPath path = ConvPath::gemm);
Tensor depthwise_conv2d(const Tensor& input, const ConvParams& p, ConvPath path = ConvPath::gemm);

struct ConvGrads {
    Tensor input;
    Tensor weight;
    std::vector<float> bias;  // populated only when the forward had a bias
};

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& p,
                          const Tensor& grad_out, ConvPath path = ConvPath::gemm,
                          bool need_input_grad = true);
ConvGrads depthwise_conv2d_backward(const Tensor& input, const ConvParams& p,
                                    const Tensor& grad_out, bool need_input_grad = true);

Tensor relu6(const Tensor& input);
// Subgradient at the kinks (0 and 6) is 0.
Tensor relu6_backward(const Tensor& input, const Tensor& grad_out);

struct BatchNormParams {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> running_mean;
    std::vector<float> running_var;
    float eps = 1e-5f;
    float momentum = 0.1f;

    static BatchNormParams identity(int64_t channels);
};

enum class BnMode { train, infer };

// Saved by the train-mode forward for the backward pass.
struct BnContext {
    Tensor x_hat;
    std::vector<float> inv_std;
};

struct BnBatchStats {
    std::vector<float> mean;
    std::vector<float> var;   // biased (divide by m)
    int64_t m = 0;            // N*H*W
};

Tensor batchnorm_infer(const Tensor& input, const BatchNormParams& p);
Tensor batchnorm_train_forward(const Tensor& input, const BatchNormParams& p,
                               BnContext& ctx, BnBatchStats& stats);
void batchnorm_update_running(BatchNormParams& p, const BnBatchStats& stats);

// Spec-level entry point: train mode normalizes by batch statistics and
// updates the running ones in place.
Tensor batchnorm(const Tensor& input, BatchNormParams& p, BnMode mode, BnContext* ctx = nullptr);

struct BnGrads {
    Tensor input;
    std::vector<float> gamma;
    std::vector<float> beta;
};

BnGrads batchnorm_backward(const BnContext& ctx, const std::vector<float>& gamma,
                           const Tensor& grad_out);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape4& input_shape, const Tensor& grad_out);

// x is treated as (N, F) with F = C*H*W; weight is (O, F) stored as a
// (O, F, 1, 1) tensor; output is (N, O, 1, 1).
Tensor linear(const Tensor& input, const Tensor& weight, const std::vector<float>& bias);

struct LinearGrads {
    Tensor input;
    Tensor weight;
    std::vector<float> bias;
};

LinearGrads linear_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& grad_out, bool has_bias);

// Row-wise softmax over (N, K) with max subtraction for stability.
Tensor softmax(const Tensor& logits);
Tensor softmax_backward(const Tensor& probs, const Tensor& grad_out);

// Inverted-scaling dropout: kept activations are scaled by 1/(1-rate) at
// train time. mask_out receives the applied scale per element.
Tensor dropout(const Tensor& input, float rate, Rng& rng, Tensor* mask_out);
Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out);

} // namespace masknet
