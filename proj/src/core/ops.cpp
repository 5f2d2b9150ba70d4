#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "core/gemm.hpp"

namespace masknet {

namespace {

void im2col(const float* img, int64_t c, int64_t h, int64_t w,
            int64_t kh, int64_t kw, int64_t stride, int64_t pad,
            int64_t hout, int64_t wout, float* cols) {
    const int64_t col_w = hout * wout;
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t i = 0; i < kh; ++i) {
            for (int64_t j = 0; j < kw; ++j) {
                float* row = cols + ((ci * kh + i) * kw + j) * col_w;
                for (int64_t y = 0; y < hout; ++y) {
                    const int64_t sy = y * stride - pad + i;
                    float* dst = row + y * wout;
                    if (sy < 0 || sy >= h) {
                        std::memset(dst, 0, static_cast<size_t>(wout) * sizeof(float));
                        continue;
                    }
                    const float* src = img + (ci * h + sy) * w;
                    for (int64_t x = 0; x < wout; ++x) {
                        const int64_t sx = x * stride - pad + j;
                        dst[x] = (sx >= 0 && sx < w) ? src[sx] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* cols, int64_t c, int64_t h, int64_t w,
                int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                int64_t hout, int64_t wout, float* img) {
    const int64_t col_w = hout * wout;
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t i = 0; i < kh; ++i) {
            for (int64_t j = 0; j < kw; ++j) {
                const float* row = cols + ((ci * kh + i) * kw + j) * col_w;
                for (int64_t y = 0; y < hout; ++y) {
                    const int64_t sy = y * stride - pad + i;
                    if (sy < 0 || sy >= h) continue;
                    float* dst = img + (ci * h + sy) * w;
                    const float* src = row + y * wout;
                    for (int64_t x = 0; x < wout; ++x) {
                        const int64_t sx = x * stride - pad + j;
                        if (sx >= 0 && sx < w) dst[sx] += src[x];
                    }
                }
            }
        }
    }
}

void add_bias(Tensor& out, const std::vector<float>& bias) {
    if (bias.empty()) return;
    const auto& s = out.shape();
    const int64_t hw = s.h * s.w;
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c) {
            float* p = out.data() + (n * s.c + c) * hw;
            const float b = bias[static_cast<size_t>(c)];
            for (int64_t i = 0; i < hw; ++i) p[i] += b;
        }
}

bool is_pointwise(const ConvParams& p) {
    return p.weight.shape().h == 1 && p.weight.shape().w == 1 &&
           p.stride == 1 && p.padding == 0;
}

} // namespace

ConvOutDims conv_out_dims(const Shape4& input, const ConvParams& p, const char* op_name) {
    const auto& ws = p.weight.shape();
    const std::string op(op_name);
    if (ws.h < 1 || ws.w < 1)
        fail(ErrorCode::invalid_argument,
             op + ": kernel extents must be >= 1, got " + std::to_string(ws.h) + "x" + std::to_string(ws.w));
    if (p.stride < 1)
        fail(ErrorCode::invalid_argument, op + ": stride must be >= 1, got " + std::to_string(p.stride));
    if (p.padding < 0)
        fail(ErrorCode::invalid_argument, op + ": padding must be >= 0, got " + std::to_string(p.padding));
    if (!p.bias.empty() && static_cast<int64_t>(p.bias.size()) != ws.n)
        fail(ErrorCode::shape_mismatch,
             op + ": bias length " + std::to_string(p.bias.size()) +
                 " != output channels " + std::to_string(ws.n));
    const int64_t hout = (input.h + 2 * p.padding - ws.h) / p.stride + 1;
    const int64_t wout = (input.w + 2 * p.padding - ws.w) / p.stride + 1;
    if (input.h + 2 * p.padding < ws.h || input.w + 2 * p.padding < ws.w || hout < 1 || wout < 1)
        fail(ErrorCode::shape_mismatch,
             op + ": kernel " + std::to_string(ws.h) + "x" + std::to_string(ws.w) +
                 " does not fit input " + input.str() + " with stride " +
                 std::to_string(p.stride) + " pad " + std::to_string(p.padding));
    return {hout, wout};
}

Tensor conv2d(const Tensor& input, const ConvParams& p, ConvPath path) {
    const auto& is = input.shape();
    const auto& ws = p.weight.shape();
    if (is.c != ws.c)
        fail(ErrorCode::shape_mismatch,
             "conv2d: input channels " + std::to_string(is.c) +
                 " != weight in-channels " + std::to_string(ws.c));
    const auto [hout, wout] = conv_out_dims(is, p, "conv2d");
    const int64_t cout = ws.n, cin = ws.c, kh = ws.h, kw = ws.w;
    Tensor out(Shape4{is.n, cout, hout, wout});

    if (path == ConvPath::naive) {
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t co = 0; co < cout; ++co)
                for (int64_t y = 0; y < hout; ++y)
                    for (int64_t x = 0; x < wout; ++x) {
                        float acc = 0.0f;
                        for (int64_t ci = 0; ci < cin; ++ci)
                            for (int64_t i = 0; i < kh; ++i) {
                                const int64_t sy = y * p.stride - p.padding + i;
                                if (sy < 0 || sy >= is.h) continue;
                                for (int64_t j = 0; j < kw; ++j) {
                                    const int64_t sx = x * p.stride - p.padding + j;
                                    if (sx < 0 || sx >= is.w) continue;
                                    acc += input.at(n, ci, sy, sx) * p.weight.at(co, ci, i, j);
                                }
                            }
                        out.at(n, co, y, x) = acc;
                    }
        add_bias(out, p.bias);
        return out;
    }

    const int64_t hw = hout * wout;
    const int64_t k = cin * kh * kw;
    std::vector<float> cols;
    if (!is_pointwise(p)) cols.resize(static_cast<size_t>(k * hw));
    for (int64_t n = 0; n < is.n; ++n) {
        const float* img = input.data() + n * cin * is.h * is.w;
        float* dst = out.data() + n * cout * hw;
        if (is_pointwise(p)) {
            sgemm(cout, hw, k, p.weight.data(), k, img, hw, dst, hw);
        } else {
            im2col(img, cin, is.h, is.w, kh, kw, p.stride, p.padding, hout, wout, cols.data());
            sgemm(cout, hw, k, p.weight.data(), k, cols.data(), hw, dst, hw);
        }
    }
    add_bias(out, p.bias);
    return out;
}

Tensor depthwise_conv2d(const Tensor& input, const ConvParams& p, ConvPath path) {
    const auto& is = input.shape();
    const auto& ws = p.weight.shape();
    if (ws.c != 1)
        fail(ErrorCode::shape_mismatch,
             "depthwise_conv2d: weight in-channel extent must be 1, got " + std::to_string(ws.c));
    if (is.c != ws.n)
        fail(ErrorCode::shape_mismatch,
             "depthwise_conv2d: input channels " + std::to_string(is.c) +
                 " != weight channels " + std::to_string(ws.n));
    const auto [hout, wout] = conv_out_dims(is, p, "depthwise_conv2d");
    const int64_t c = is.c, kh = ws.h, kw = ws.w;
    Tensor out(Shape4{is.n, c, hout, wout});

    if (path == ConvPath::naive) {
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t y = 0; y < hout; ++y)
                    for (int64_t x = 0; x < wout; ++x) {
                        float acc = 0.0f;
                        for (int64_t i = 0; i < kh; ++i) {
                            const int64_t sy = y * p.stride - p.padding + i;
                            if (sy < 0 || sy >= is.h) continue;
                            for (int64_t j = 0; j < kw; ++j) {
                                const int64_t sx = x * p.stride - p.padding + j;
                                if (sx < 0 || sx >= is.w) continue;
                                acc += input.at(n, ci, sy, sx) * p.weight.at(ci, 0, i, j);
                            }
                        }
                        out.at(n, ci, y, x) = acc;
                    }
        add_bias(out, p.bias);
        return out;
    }

    const int64_t hw = hout * wout;
    const int64_t k = kh * kw;
    std::vector<float> cols(static_cast<size_t>(k * hw));
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t ci = 0; ci < c; ++ci) {
            const float* img = input.data() + (n * c + ci) * is.h * is.w;
            im2col(img, 1, is.h, is.w, kh, kw, p.stride, p.padding, hout, wout, cols.data());
            float* dst = out.data() + (n * c + ci) * hw;
            sgemm(1, hw, k, p.weight.data() + ci * k, k, cols.data(), hw, dst, hw);
        }
    add_bias(out, p.bias);
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& p,
                          const Tensor& grad_out, ConvPath path,
                          bool need_input_grad) {
    const auto& is = input.shape();
    const auto& ws = p.weight.shape();
    const auto [hout, wout] = conv_out_dims(is, p, "conv2d_backward");
    if (grad_out.shape() != Shape4{is.n, ws.n, hout, wout})
        fail(ErrorCode::shape_mismatch,
             "conv2d_backward: grad shape " + grad_out.shape().str() +
                 " != forward output shape " + Shape4{is.n, ws.n, hout, wout}.str());

    const int64_t cout = ws.n, cin = ws.c, kh = ws.h, kw = ws.w;
    ConvGrads g;
    g.weight = Tensor(ws);
    if (need_input_grad) g.input = Tensor(is);
    if (!p.bias.empty()) g.bias.assign(p.bias.size(), 0.0f);

    const int64_t hw = hout * wout;
    if (!p.bias.empty()) {
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t co = 0; co < cout; ++co) {
                const float* gp = grad_out.data() + (n * cout + co) * hw;
                float acc = 0.0f;
                for (int64_t i = 0; i < hw; ++i) acc += gp[i];
                g.bias[static_cast<size_t>(co)] += acc;
            }
    }

    if (path == ConvPath::naive) {
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t co = 0; co < cout; ++co)
                for (int64_t y = 0; y < hout; ++y)
                    for (int64_t x = 0; x < wout; ++x) {
                        const float gv = grad_out.at(n, co, y, x);
                        for (int64_t ci = 0; ci < cin; ++ci)
                            for (int64_t i = 0; i < kh; ++i) {
                                const int64_t sy = y * p.stride - p.padding + i;
                                if (sy < 0 || sy >= is.h) continue;
                                for (int64_t j = 0; j < kw; ++j) {
                                    const int64_t sx = x * p.stride - p.padding + j;
                                    if (sx < 0 || sx >= is.w) continue;
                                    g.weight.at(co, ci, i, j) += gv * input.at(n, ci, sy, sx);
                                    if (need_input_grad)
                                        g.input.at(n, ci, sy, sx) += gv * p.weight.at(co, ci, i, j);
                                }
                            }
                    }
        return g;
    }

    const int64_t k = cin * kh * kw;
    std::vector<float> wt;
    if (need_input_grad) {
        wt.resize(static_cast<size_t>(k * cout));
        transpose(cout, k, p.weight.data(), k, wt.data(), cout);
    }
    std::vector<float> cols;
    std::vector<float> grad_cols;
    const bool pointwise = is_pointwise(p);
    if (!pointwise) cols.resize(static_cast<size_t>(k * hw));
    if (need_input_grad && !pointwise) grad_cols.resize(static_cast<size_t>(k * hw));

    for (int64_t n = 0; n < is.n; ++n) {
        const float* img = input.data() + n * cin * is.h * is.w;
        const float* gmat = grad_out.data() + n * cout * hw;
        const float* colp = img;
        if (!pointwise) {
            im2col(img, cin, is.h, is.w, kh, kw, p.stride, p.padding, hout, wout, cols.data());
            colp = cols.data();
        }
        sgemm_abt(cout, k, hw, gmat, hw, colp, hw, g.weight.data(), k, /*accumulate=*/true);
        if (need_input_grad) {
            float* gin = g.input.data() + n * cin * is.h * is.w;
            if (pointwise) {
                sgemm(k, hw, cout, wt.data(), cout, gmat, hw, gin, hw, /*accumulate=*/true);
            } else {
                sgemm(k, hw, cout, wt.data(), cout, gmat, hw, grad_cols.data(), hw);
                col2im_add(grad_cols.data(), cin, is.h, is.w, kh, kw, p.stride, p.padding,
                           hout, wout, gin);
            }
        }
    }
    return g;
}

ConvGrads depthwise_conv2d_backward(const Tensor& input, const ConvParams& p,
                                    const Tensor& grad_out, bool need_input_grad) {
    const auto& is = input.shape();
    const auto& ws = p.weight.shape();
    if (ws.c != 1 || is.c != ws.n)
        fail(ErrorCode::shape_mismatch,
             "depthwise_conv2d_backward: weight shape " + ws.str() +
                 " incompatible with input " + is.str());
    const auto [hout, wout] = conv_out_dims(is, p, "depthwise_conv2d_backward");
    if (grad_out.shape() != Shape4{is.n, is.c, hout, wout})
        fail(ErrorCode::shape_mismatch,
             "depthwise_conv2d_backward: grad shape " + grad_out.shape().str() +
                 " != forward output shape");

    ConvGrads g;
    g.weight = Tensor(ws);
    if (need_input_grad) g.input = Tensor(is);
    if (!p.bias.empty()) g.bias.assign(p.bias.size(), 0.0f);

    const int64_t kh = ws.h, kw = ws.w;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t ci = 0; ci < is.c; ++ci)
            for (int64_t y = 0; y < hout; ++y)
                for (int64_t x = 0; x < wout; ++x) {
                    const float gv = grad_out.at(n, ci, y, x);
                    if (!p.bias.empty()) g.bias[static_cast<size_t>(ci)] += gv;
                    for (int64_t i = 0; i < kh; ++i) {
                        const int64_t sy = y * p.stride - p.padding + i;
                        if (sy < 0 || sy >= is.h) continue;
                        for (int64_t j = 0; j < kw; ++j) {
                            const int64_t sx = x * p.stride - p.padding + j;
                            if (sx < 0 || sx >= is.w) continue;
                            g.weight.at(ci, 0, i, j) += gv * input.at(n, ci, sy, sx);
                            if (need_input_grad)
                                g.input.at(n, ci, sy, sx) += gv * p.weight.at(ci, 0, i, j);
                        }
                    }
                }
    return g;
}

Tensor relu6(const Tensor& input) {
    Tensor out(input.shape());
    const float* x = input.data();
    float* y = out.data();
    const int64_t n = input.size();
    for (int64_t i = 0; i < n; ++i)
        y[i] = std::min(std::max(x[i], 0.0f), 6.0f);
    return out;
}

Tensor relu6_backward(const Tensor& input, const Tensor& grad_out) {
    if (input.shape() != grad_out.shape())
        fail(ErrorCode::shape_mismatch, "relu6_backward: grad shape " + grad_out.shape().str() +
                                            " != input shape " + input.shape().str());
    Tensor g(input.shape());
    const float* x = input.data();
    const float* go = grad_out.data();
    float* gi = g.data();
    const int64_t n = input.size();
    for (int64_t i = 0; i < n; ++i)
        gi[i] = (x[i] > 0.0f && x[i] < 6.0f) ? go[i] : 0.0f;
    return g;
}

BatchNormParams BatchNormParams::identity(int64_t channels) {
    BatchNormParams p;
    p.gamma.assign(static_cast<size_t>(channels), 1.0f);
    p.beta.assign(static_cast<size_t>(channels), 0.0f);
    p.running_mean.assign(static_cast<size_t>(channels), 0.0f);
    p.running_var.assign(static_cast<size_t>(channels), 1.0f);
    return p;
}

namespace {

void check_bn_channels(const Tensor& input, size_t channels, const char* op) {
    if (input.shape().c != static_cast<int64_t>(channels))
        fail(ErrorCode::shape_mismatch,
             std::string(op) + ": input channels " + std::to_string(input.shape().c) +
                 " != parameter channels " + std::to_string(channels));
}

} // namespace

Tensor batchnorm_infer(const Tensor& input, const BatchNormParams& p) {
    check_bn_channels(input, p.gamma.size(), "batchnorm");
    const auto& s = input.shape();
    Tensor out(s);
    const int64_t hw = s.h * s.w;
    for (int64_t c = 0; c < s.c; ++c) {
        const size_t ci = static_cast<size_t>(c);
        const float inv_std = 1.0f / std::sqrt(p.running_var[ci] + p.eps);
        const float scale = p.gamma[ci] * inv_std;
        const float shift = p.beta[ci] - p.running_mean[ci] * scale;
        for (int64_t n = 0; n < s.n; ++n) {
            const float* x = input.data() + (n * s.c + c) * hw;
            float* y = out.data() + (n * s.c + c) * hw;
            for (int64_t i = 0; i < hw; ++i) y[i] = x[i] * scale + shift;
        }
    }
    return out;
}

Tensor batchnorm_train_forward(const Tensor& input, const BatchNormParams& p,
                               BnContext& ctx, BnBatchStats& stats) {
    check_bn_channels(input, p.gamma.size(), "batchnorm");
    const auto& s = input.shape();
    const int64_t hw = s.h * s.w;
    const int64_t m = s.n * hw;
    if (m < 1) fail(ErrorCode::invalid_argument, "batchnorm: empty batch");

    stats.mean.assign(static_cast<size_t>(s.c), 0.0f);
    stats.var.assign(static_cast<size_t>(s.c), 0.0f);
    stats.m = m;
    for (int64_t c = 0; c < s.c; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (int64_t n = 0; n < s.n; ++n) {
            const float* x = input.data() + (n * s.c + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                sum += x[i];
                sum_sq += static_cast<double>(x[i]) * x[i];
            }
        }
        const double mean = sum / static_cast<double>(m);
        const double var = std::max(0.0, sum_sq / static_cast<double>(m) - mean * mean);
        stats.mean[static_cast<size_t>(c)] = static_cast<float>(mean);
        stats.var[static_cast<size_t>(c)] = static_cast<float>(var);
    }

    ctx.x_hat = Tensor(s);
    ctx.inv_std.assign(static_cast<size_t>(s.c), 0.0f);
    Tensor out(s);
    for (int64_t c = 0; c < s.c; ++c) {
        const size_t ci = static_cast<size_t>(c);
        const float inv_std = 1.0f / std::sqrt(stats.var[ci] + p.eps);
        ctx.inv_std[ci] = inv_std;
        const float mean = stats.mean[ci];
        const float gamma = p.gamma[ci], beta = p.beta[ci];
        for (int64_t n = 0; n < s.n; ++n) {
            const float* x = input.data() + (n * s.c + c) * hw;
            float* xh = ctx.x_hat.data() + (n * s.c + c) * hw;
            float* y = out.data() + (n * s.c + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                xh[i] = (x[i] - mean) * inv_std;
                y[i] = gamma * xh[i] + beta;
            }
        }
    }
    return out;
}

void batchnorm_update_running(BatchNormParams& p, const BnBatchStats& stats) {
    const float mom = p.momentum;
    const double m = static_cast<double>(stats.m);
    const float unbiased = stats.m > 1 ? static_cast<float>(m / (m - 1.0)) : 1.0f;
    for (size_t c = 0; c < p.running_mean.size(); ++c) {
        p.running_mean[c] = (1.0f - mom) * p.running_mean[c] + mom * stats.mean[c];
        p.running_var[c] = (1.0f - mom) * p.running_var[c] + mom * stats.var[c] * unbiased;
    }
}

Tensor batchnorm(const Tensor& input, BatchNormParams& p, BnMode mode, BnContext* ctx) {
    if (mode == BnMode::infer) return batchnorm_infer(input, p);
    BnContext local;
    BnBatchStats stats;
    Tensor out = batchnorm_train_forward(input, p, ctx ? *ctx : local, stats);
    batchnorm_update_running(p, stats);
    return out;
}

BnGrads batchnorm_backward(const BnContext& ctx, const std::vector<float>& gamma,
                           const Tensor& grad_out) {
    const auto& s = ctx.x_hat.shape();
    if (grad_out.shape() != s)
        fail(ErrorCode::shape_mismatch, "batchnorm_backward: grad shape mismatch");
    const int64_t hw = s.h * s.w;
    const int64_t m = s.n * hw;

    BnGrads g;
    g.input = Tensor(s);
    g.gamma.assign(static_cast<size_t>(s.c), 0.0f);
    g.beta.assign(static_cast<size_t>(s.c), 0.0f);

    for (int64_t c = 0; c < s.c; ++c) {
        const size_t ci = static_cast<size_t>(c);
        double sum_g = 0.0, sum_g_xhat = 0.0;
        for (int64_t n = 0; n < s.n; ++n) {
            const float* go = grad_out.data() + (n * s.c + c) * hw;
            const float* xh = ctx.x_hat.data() + (n * s.c + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                sum_g += go[i];
                sum_g_xhat += static_cast<double>(go[i]) * xh[i];
            }
        }
        g.beta[ci] = static_cast<float>(sum_g);
        g.gamma[ci] = static_cast<float>(sum_g_xhat);
        const float mean_g = static_cast<float>(sum_g / static_cast<double>(m));
        const float mean_g_xhat = static_cast<float>(sum_g_xhat / static_cast<double>(m));
        const float scale = gamma[ci] * ctx.inv_std[ci];
        for (int64_t n = 0; n < s.n; ++n) {
            const float* go = grad_out.data() + (n * s.c + c) * hw;
            const float* xh = ctx.x_hat.data() + (n * s.c + c) * hw;
            float* gi = g.input.data() + (n * s.c + c) * hw;
            for (int64_t i = 0; i < hw; ++i)
                gi[i] = scale * (go[i] - mean_g - xh[i] * mean_g_xhat);
        }
    }
    return g;
}

Tensor global_avg_pool(const Tensor& input) {
    const auto& s = input.shape();
    if (s.h < 1 || s.w < 1)
        fail(ErrorCode::invalid_argument, "global_avg_pool: spatial extents must be >= 1");
    Tensor out(Shape4{s.n, s.c, 1, 1});
    const int64_t hw = s.h * s.w;
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c) {
            const float* x = input.data() + (n * s.c + c) * hw;
            double sum = 0.0;
            for (int64_t i = 0; i < hw; ++i) sum += x[i];
            out.at(n, c, 0, 0) = static_cast<float>(sum / static_cast<double>(hw));
        }
    return out;
}

Tensor global_avg_pool_backward(const Shape4& input_shape, const Tensor& grad_out) {
    if (grad_out.shape() != Shape4{input_shape.n, input_shape.c, 1, 1})
        fail(ErrorCode::shape_mismatch, "global_avg_pool_backward: grad shape mismatch");
    Tensor g(input_shape);
    const int64_t hw = input_shape.h * input_shape.w;
    const float inv = 1.0f / static_cast<float>(hw);
    for (int64_t n = 0; n < input_shape.n; ++n)
        for (int64_t c = 0; c < input_shape.c; ++c) {
            const float gv = grad_out.at(n, c, 0, 0) * inv;
            float* p = g.data() + (n * input_shape.c + c) * hw;
            for (int64_t i = 0; i < hw; ++i) p[i] = gv;
        }
    return g;
}

Tensor linear(const Tensor& input, const Tensor& weight, const std::vector<float>& bias) {
    const auto& is = input.shape();
    const auto& ws = weight.shape();
    const int64_t f = is.c * is.h * is.w;
    const int64_t o = ws.n;
    const int64_t wf = ws.c * ws.h * ws.w;
    if (f != wf)
        fail(ErrorCode::shape_mismatch,
             "linear: input features " + std::to_string(f) + " != weight features " +
                 std::to_string(wf));
    if (!bias.empty() && static_cast<int64_t>(bias.size()) != o)
        fail(ErrorCode::shape_mismatch,
             "linear: bias length " + std::to_string(bias.size()) + " != outputs " +
                 std::to_string(o));
    Tensor out(Shape4{is.n, o, 1, 1});
    sgemm_abt(is.n, o, f, input.data(), f, weight.data(), f, out.data(), o);
    if (!bias.empty())
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t j = 0; j < o; ++j)
                out[n * o + j] += bias[static_cast<size_t>(j)];
    return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& grad_out, bool has_bias) {
    const auto& is = input.shape();
    const auto& ws = weight.shape();
    const int64_t f = is.c * is.h * is.w;
    const int64_t o = ws.n;
    if (grad_out.shape() != Shape4{is.n, o, 1, 1})
        fail(ErrorCode::shape_mismatch, "linear_backward: grad shape mismatch");

    LinearGrads g;
    g.input = Tensor(is);
    g.weight = Tensor(ws);
    if (has_bias) g.bias.assign(static_cast<size_t>(o), 0.0f);

    // grad_x (N,F) = g (N,O) * W (O,F)
    sgemm(is.n, f, o, grad_out.data(), o, weight.data(), f, g.input.data(), f);
    // grad_W (O,F) = g^T (O,N) * x (N,F)
    std::vector<float> gt(static_cast<size_t>(o * is.n));
    transpose(is.n, o, grad_out.data(), o, gt.data(), is.n);
    sgemm(o, f, is.n, gt.data(), is.n, input.data(), f, g.weight.data(), f);
    if (has_bias)
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t j = 0; j < o; ++j)
                g.bias[static_cast<size_t>(j)] += grad_out[n * o + j];
    return g;
}

Tensor softmax(const Tensor& logits) {
    const auto& s = logits.shape();
    const int64_t k = s.c * s.h * s.w;
    if (k < 1) fail(ErrorCode::invalid_argument, "softmax: needs at least one class");
    Tensor out(s);
    for (int64_t n = 0; n < s.n; ++n) {
        const float* x = logits.data() + n * k;
        float* y = out.data() + n * k;
        float mx = x[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int64_t j = 0; j < k; ++j) y[j] *= inv;
    }
    return out;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& grad_out) {
    if (probs.shape() != grad_out.shape())
        fail(ErrorCode::shape_mismatch, "softmax_backward: grad shape mismatch");
    const auto& s = probs.shape();
    const int64_t k = s.c * s.h * s.w;
    Tensor g(s);
    for (int64_t n = 0; n < s.n; ++n) {
        const float* p = probs.data() + n * k;
        const float* go = grad_out.data() + n * k;
        float* gi = g.data() + n * k;
        double dot = 0.0;
        for (int64_t j = 0; j < k; ++j) dot += static_cast<double>(go[j]) * p[j];
        const float d = static_cast<float>(dot);
        for (int64_t j = 0; j < k; ++j) gi[j] = p[j] * (go[j] - d);
    }
    return g;
}

Tensor dropout(const Tensor& input, float rate, Rng& rng, Tensor* mask_out) {
    if (rate < 0.0f || rate >= 1.0f)
        fail(ErrorCode::invalid_argument, "dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (rate == 0.0f) {
        if (mask_out) *mask_out = Tensor();
        return input;
    }
    const float keep = 1.0f - rate;
    const float scale = 1.0f / keep;
    Tensor mask(input.shape());
    Tensor out(input.shape());
    const int64_t n = input.size();
    for (int64_t i = 0; i < n; ++i) {
        const float m = rng.next_float() < keep ? scale : 0.0f;
        mask[i] = m;
        out[i] = input[i] * m;
    }
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out) {
    if (mask.empty()) return grad_out;
    if (mask.shape() != grad_out.shape())
        fail(ErrorCode::shape_mismatch, "dropout_backward: mask shape mismatch");
    Tensor g(grad_out.shape());
    const int64_t n = grad_out.size();
    for (int64_t i = 0; i < n; ++i) g[i] = grad_out[i] * mask[i];
    return g;
}

} // namespace masknet
