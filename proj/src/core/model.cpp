#include "core/model.hpp"

#include <cmath>

namespace masknet {

// ---- ConvBnUnit ----

Tensor ConvBnUnit::forward(const Tensor& x, ConvPath path) const {
    Tensor h = depthwise ? depthwise_conv2d(x, conv, path) : conv2d(x, conv, path);
    h = batchnorm_infer(h, bn);
    return act ? relu6(h) : h;
}

Tensor ConvBnUnit::forward_train(const Tensor& x, ConvBnCtx& ctx, bool bn_infer) const {
    ctx.input = x;
    ctx.bn_infer = bn_infer;
    Tensor h = depthwise ? depthwise_conv2d(x, conv) : conv2d(x, conv);
    h = bn_infer ? batchnorm_infer(h, bn)
                 : batchnorm_train_forward(h, bn, ctx.bn, ctx.stats);
    if (!act) return h;
    ctx.pre_act = h;
    return relu6(h);
}

Tensor ConvBnUnit::backward(const ConvBnCtx& ctx, const Tensor& grad_out,
                            GradStore& slots, size_t base, bool need_input_grad) {
    const Tensor g_act = act ? relu6_backward(ctx.pre_act, grad_out) : Tensor();
    const Tensor& g = act ? g_act : grad_out;

    if (ctx.bn_infer) {
        // Frozen unit: only the input gradient can matter, and infer-mode BN
        // is a fixed per-channel affine map.
        if (!need_input_grad) return Tensor();
        Tensor g_conv(g.shape());
        const auto& s = g.shape();
        const int64_t hw = s.h * s.w;
        for (int64_t c = 0; c < s.c; ++c) {
            const size_t ci = static_cast<size_t>(c);
            const float scale = bn.gamma[ci] / std::sqrt(bn.running_var[ci] + bn.eps);
            for (int64_t n = 0; n < s.n; ++n) {
                const float* src = g.data() + (n * s.c + c) * hw;
                float* dst = g_conv.data() + (n * s.c + c) * hw;
                for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * scale;
            }
        }
        ConvGrads cg = depthwise
                           ? depthwise_conv2d_backward(ctx.input, conv, g_conv, true)
                           : conv2d_backward(ctx.input, conv, g_conv, ConvPath::gemm, true);
        return std::move(cg.input);
    }

    BnGrads bg = batchnorm_backward(ctx.bn, bn.gamma, g);
    slots[base + 1] = std::move(bg.gamma);
    slots[base + 2] = std::move(bg.beta);
    batchnorm_update_running(bn, ctx.stats);

    ConvGrads cg = depthwise
                       ? depthwise_conv2d_backward(ctx.input, conv, bg.input, need_input_grad)
                       : conv2d_backward(ctx.input, conv, bg.input, ConvPath::gemm, need_input_grad);
    slots[base + 0] = cg.weight.take_data();
    return need_input_grad ? std::move(cg.input) : Tensor();
}

void ConvBnUnit::collect_params(const std::string& prefix, std::vector<ParamView>& out,
                                bool include_buffers) {
    const auto& ws = conv.weight.shape();
    out.push_back(ParamView{0, prefix + "weight", conv.weight.data(), conv.weight.size(),
                            {ws.n, ws.c, ws.h, ws.w}, false, false});
    auto vec1 = [&](const char* nm, std::vector<float>& v, bool buf) {
        out.push_back(ParamView{0, prefix + nm, v.data(), static_cast<int64_t>(v.size()),
                                {static_cast<int64_t>(v.size())}, buf, false});
    };
    vec1("bn.gamma", bn.gamma, false);
    vec1("bn.beta", bn.beta, false);
    if (include_buffers) {
        vec1("bn.running_mean", bn.running_mean, true);
        vec1("bn.running_var", bn.running_var, true);
    }
}

// ---- ConvBnActLayer ----

Tensor ConvBnActLayer::forward(const Tensor& x) const { return unit.forward(x); }

Tensor ConvBnActLayer::forward_train(const Tensor& x, LayerState& st, Rng&) const {
    st.units.resize(1);
    return unit.forward_train(x, st.units[0], !trainable);
}

Tensor ConvBnActLayer::backward(const LayerState& st, const Tensor& grad_out,
                                GradStore& slots, size_t base, bool need_input_grad) {
    return unit.backward(st.units[0], grad_out, slots, base, need_input_grad);
}

void ConvBnActLayer::collect_params(std::vector<ParamView>& out, bool include_buffers) {
    unit.collect_params("", out, include_buffers);
}

std::unique_ptr<Layer> ConvBnActLayer::clone() const {
    return std::make_unique<ConvBnActLayer>(*this);
}

// ---- InvertedResidualLayer ----

Tensor InvertedResidualLayer::forward(const Tensor& x) const {
    return forward_path(x, ConvPath::gemm);
}

Tensor InvertedResidualLayer::forward_path(const Tensor& x, ConvPath path) const {
    Tensor h = expand ? expand->forward(x, path) : Tensor();
    const Tensor& mid_in = expand ? h : x;
    Tensor d = dw.forward(mid_in, path);
    Tensor out = project.forward(d, path);
    if (use_residual)
        for (int64_t i = 0; i < out.size(); ++i) out[i] += x[i];
    return out;
}

Tensor InvertedResidualLayer::forward_train(const Tensor& x, LayerState& st, Rng&) const {
    const bool infer_bn = !trainable;
    st.units.resize(expand ? 3 : 2);
    size_t u = 0;
    Tensor h = expand ? expand->forward_train(x, st.units[u++], infer_bn) : Tensor();
    const Tensor& mid_in = expand ? h : x;
    Tensor d = dw.forward_train(mid_in, st.units[u++], infer_bn);
    Tensor out = project.forward_train(d, st.units[u], infer_bn);
    if (use_residual)
        for (int64_t i = 0; i < out.size(); ++i) out[i] += x[i];
    return out;
}

Tensor InvertedResidualLayer::backward(const LayerState& st, const Tensor& grad_out,
                                       GradStore& slots, size_t base, bool need_input_grad) {
    const bool has_expand = expand.has_value();
    const size_t dw_base = base + (has_expand ? 3 : 0);
    const size_t proj_base = dw_base + 3;
    const size_t last = st.units.size() - 1;

    Tensor g = project.backward(st.units[last], grad_out, slots, proj_base, true);
    g = dw.backward(st.units[last - 1], g, slots, dw_base,
                    has_expand ? true : need_input_grad);
    if (has_expand)
        g = expand->backward(st.units[0], g, slots, base, need_input_grad);
    if (!need_input_grad) return Tensor();
    if (use_residual)
        for (int64_t i = 0; i < g.size(); ++i) g[i] += grad_out[i];
    return g;
}

void InvertedResidualLayer::collect_params(std::vector<ParamView>& out, bool include_buffers) {
    if (expand) expand->collect_params("expand.", out, include_buffers);
    dw.collect_params("dw.", out, include_buffers);
    project.collect_params("proj.", out, include_buffers);
}

std::unique_ptr<Layer> InvertedResidualLayer::clone() const {
    return std::make_unique<InvertedResidualLayer>(*this);
}

// ---- head layers ----

Tensor GlobalAvgPoolLayer::forward(const Tensor& x) const { return global_avg_pool(x); }

Tensor GlobalAvgPoolLayer::forward_train(const Tensor& x, LayerState& st, Rng&) const {
    st.in_shape = x.shape();
    return global_avg_pool(x);
}

Tensor GlobalAvgPoolLayer::backward(const LayerState& st, const Tensor& grad_out,
                                    GradStore&, size_t, bool need_input_grad) {
    return need_input_grad ? global_avg_pool_backward(st.in_shape, grad_out) : Tensor();
}

std::unique_ptr<Layer> GlobalAvgPoolLayer::clone() const {
    return std::make_unique<GlobalAvgPoolLayer>(*this);
}

Tensor DropoutLayer::forward(const Tensor& x) const { return x; }

Tensor DropoutLayer::forward_train(const Tensor& x, LayerState& st, Rng& rng) const {
    Tensor mask;
    Tensor out = dropout(x, rate, rng, &mask);
    st.saved = std::move(mask);
    return out;
}

Tensor DropoutLayer::backward(const LayerState& st, const Tensor& grad_out,
                              GradStore&, size_t, bool need_input_grad) {
    return need_input_grad ? dropout_backward(st.saved, grad_out) : Tensor();
}

std::unique_ptr<Layer> DropoutLayer::clone() const {
    return std::make_unique<DropoutLayer>(*this);
}

Tensor LinearLayer::forward(const Tensor& x) const { return linear(x, weight, bias); }

Tensor LinearLayer::forward_train(const Tensor& x, LayerState& st, Rng&) const {
    st.saved = x;
    return linear(x, weight, bias);
}

Tensor LinearLayer::backward(const LayerState& st, const Tensor& grad_out,
                             GradStore& slots, size_t base, bool need_input_grad) {
    LinearGrads lg = linear_backward(st.saved, weight, grad_out, !bias.empty());
    slots[base + 0] = lg.weight.take_data();
    slots[base + 1] = std::move(lg.bias);
    return need_input_grad ? std::move(lg.input) : Tensor();
}

void LinearLayer::collect_params(std::vector<ParamView>& out, bool include_buffers) {
    (void)include_buffers;
    const auto& ws = weight.shape();
    out.push_back(ParamView{0, "weight", weight.data(), weight.size(), {ws.n, ws.c}, false, false});
    out.push_back(ParamView{0, "bias", bias.data(), static_cast<int64_t>(bias.size()),
                            {static_cast<int64_t>(bias.size())}, false, false});
}

std::unique_ptr<Layer> LinearLayer::clone() const {
    return std::make_unique<LinearLayer>(*this);
}

Tensor SoftmaxLayer::forward(const Tensor& x) const { return softmax(x); }

Tensor SoftmaxLayer::forward_train(const Tensor& x, LayerState& st, Rng&) const {
    Tensor out = softmax(x);
    st.saved = out;
    return out;
}

Tensor SoftmaxLayer::backward(const LayerState& st, const Tensor& grad_out,
                              GradStore&, size_t, bool need_input_grad) {
    return need_input_grad ? softmax_backward(st.saved, grad_out) : Tensor();
}

std::unique_ptr<Layer> SoftmaxLayer::clone() const {
    return std::make_unique<SoftmaxLayer>(*this);
}

// ---- Model ----

void Model::check_input(const Shape4& s) const {
    const int64_t r = config.input_resolution;
    if (s.n < 1 || s.c != 3 || s.h != r || s.w != r)
        fail(ErrorCode::shape_mismatch,
             "model forward: expected (N,3," + std::to_string(r) + "," + std::to_string(r) +
                 "), got " + s.str());
}

Tensor Model::forward(const Tensor& batch) const {
    check_input(batch.shape());
    Tensor x = batch;
    for (const auto& l : layers) x = l->forward(x);
    return x;
}

Tensor Model::forward_train(const Tensor& batch, std::vector<LayerState>& trace, Rng& rng) const {
    check_input(batch.shape());
    trace.assign(layers.size(), LayerState{});
    Tensor x = batch;
    for (size_t i = 0; i < layers.size(); ++i)
        x = layers[i]->forward_train(x, trace[i], rng);
    return x;
}

void Model::backward(const std::vector<LayerState>& trace, const Tensor& grad_out,
                     GradStore& grads) {
    if (trace.size() != layers.size())
        fail(ErrorCode::invalid_argument, "model backward: trace does not match this model");
    grads.assign(total_slots(), {});
    std::vector<size_t> bases(layers.size(), 0);
    size_t acc = 0;
    for (size_t i = 0; i < layers.size(); ++i) {
        bases[i] = acc;
        acc += layers[i]->slot_count();
    }
    const size_t first = first_trainable_layer();
    if (first >= layers.size()) return;
    Tensor g = grad_out;
    for (size_t i = layers.size(); i-- > first;)
        g = layers[i]->backward(trace[i], g, grads, bases[i], i > first);
}

std::vector<ParamView> Model::params(bool include_buffers) {
    std::vector<ParamView> out;
    for (size_t i = 0; i < layers.size(); ++i) {
        const size_t from = out.size();
        layers[i]->collect_params(out, include_buffers);
        for (size_t j = from; j < out.size(); ++j) {
            out[j].layer_index = static_cast<int>(i);
            out[j].name = layers[i]->name + "." + out[j].name;
            out[j].trainable = layers[i]->trainable && !out[j].buffer;
        }
    }
    return out;
}

std::vector<ParamView> Model::params(bool include_buffers) const {
    // Views expose mutable storage by design (optimizer, loader); a const
    // model hands them out for read-only walks like counting and saving.
    return const_cast<Model*>(this)->params(include_buffers);
}

int64_t Model::param_count(ParamScope scope) const {
    int64_t total = 0;
    for (const auto& v : params(true)) {
        const bool counted = scope == ParamScope::buffers  ? v.buffer
                             : scope == ParamScope::all    ? !v.buffer
                                                           : v.trainable;
        if (counted) total += v.count;
    }
    return total;
}

size_t Model::total_slots() const {
    size_t acc = 0;
    for (const auto& l : layers) acc += l->slot_count();
    return acc;
}

size_t Model::first_trainable_layer() const {
    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i]->trainable && layers[i]->slot_count() > 0) return i;
    return layers.size();
}

Model Model::clone() const {
    Model m;
    m.config = config;
    m.class_names = class_names;
    m.layers.reserve(layers.size());
    for (const auto& l : layers) m.layers.push_back(l->clone());
    return m;
}

// ---- construction ----

std::vector<std::string> default_class_names(int num_classes) {
    if (num_classes == 2) return {"with_mask", "without_mask"};
    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(num_classes));
    for (int i = 0; i < num_classes; ++i) names.push_back("class_" + std::to_string(i));
    return names;
}

// Round half up to the nearest multiple of 8, floor 8.
int64_t scale_channels(int64_t channels, float width_multiplier) {
    const double scaled = static_cast<double>(channels) * static_cast<double>(width_multiplier) / 8.0;
    const int64_t rounded = static_cast<int64_t>(std::floor(scaled + 0.5)) * 8;
    return std::max<int64_t>(8, rounded);
}

namespace {

Tensor he_uniform(Shape4 shape, int64_t fan_in, Rng& rng) {
    Tensor t(shape);
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

ConvBnUnit make_conv_unit(int64_t cin, int64_t cout, int kernel, int stride, int padding,
                          bool act, Rng& rng) {
    ConvBnUnit u;
    u.conv.weight = he_uniform(Shape4{cout, cin, kernel, kernel}, cin * kernel * kernel, rng);
    u.conv.stride = stride;
    u.conv.padding = padding;
    u.bn = BatchNormParams::identity(cout);
    u.act = act;
    return u;
}

ConvBnUnit make_dw_unit(int64_t c, int kernel, int stride, int padding, Rng& rng) {
    ConvBnUnit u;
    u.depthwise = true;
    u.conv.weight = he_uniform(Shape4{c, 1, kernel, kernel},
                               static_cast<int64_t>(kernel) * kernel, rng);
    u.conv.stride = stride;
    u.conv.padding = padding;
    u.bn = BatchNormParams::identity(c);
    u.act = true;
    return u;
}

void validate_config(const ModelConfig& c) {
    if (c.input_resolution < 32 || c.input_resolution % 32 != 0)
        fail(ErrorCode::invalid_argument,
             "model config: input_resolution must be a positive multiple of 32, got " +
                 std::to_string(c.input_resolution));
    if (!(c.width_multiplier > 0.0f && c.width_multiplier <= 1.0f))
        fail(ErrorCode::invalid_argument, "model config: width_multiplier must be in (0,1]");
    if (c.num_classes < 2)
        fail(ErrorCode::invalid_argument, "model config: num_classes must be >= 2");
    if (c.dropout_rate < 0.0f || c.dropout_rate >= 1.0f)
        fail(ErrorCode::invalid_argument, "model config: dropout_rate must be in [0,1)");
}

void append_head(Model& m, int num_classes, float dropout_rate, Rng& rng) {
    const auto* feat = dynamic_cast<const ConvBnActLayer*>(m.layers.back().get());
    if (!feat)
        fail(ErrorCode::invalid_argument,
             "attach_head: backbone must end at the feature convolution");
    const int64_t features = feat->unit.out_channels();

    auto pool = std::make_unique<GlobalAvgPoolLayer>();
    pool->name = "pool";
    m.layers.push_back(std::move(pool));

    auto drop = std::make_unique<DropoutLayer>();
    drop->name = "dropout";
    drop->rate = dropout_rate;
    m.layers.push_back(std::move(drop));

    auto fc = std::make_unique<LinearLayer>();
    fc->name = "fc";
    fc->weight = he_uniform(Shape4{num_classes, features, 1, 1}, features, rng);
    fc->bias.assign(static_cast<size_t>(num_classes), 0.0f);
    m.layers.push_back(std::move(fc));

    auto sm = std::make_unique<SoftmaxLayer>();
    sm->name = "softmax";
    m.layers.push_back(std::move(sm));
}

} // namespace

Model build_mobilenet_v2(const ModelConfig& config, uint64_t seed) {
    validate_config(config);

    Model m;
    m.config = config;
    m.class_names = default_class_names(config.num_classes);
    Rng rng(derive_seed(seed, 0));

    struct StageSpec {
        int t;
        int64_t c;
        int n;
        int s;
    };
    constexpr StageSpec stages[] = {{1, 16, 1, 1},  {6, 24, 2, 2}, {6, 32, 3, 2},
                                    {6, 64, 4, 2},  {6, 96, 3, 1}, {6, 160, 3, 2},
                                    {6, 320, 1, 1}};

    int64_t in_ch = scale_channels(32, config.width_multiplier);
    auto stem = std::make_unique<ConvBnActLayer>();
    stem->name = "stem";
    stem->unit = make_conv_unit(3, in_ch, 3, 2, 1, true, rng);
    m.layers.push_back(std::move(stem));

    int block_id = 0;
    for (const auto& stage : stages) {
        const int64_t out_ch = scale_channels(stage.c, config.width_multiplier);
        for (int rep = 0; rep < stage.n; ++rep) {
            const int stride = rep == 0 ? stage.s : 1;
            auto blk = std::make_unique<InvertedResidualLayer>();
            blk->name = "block" + std::to_string(++block_id);
            blk->expansion = stage.t;
            blk->stride = stride;
            blk->in_channels = in_ch;
            blk->out_channels = out_ch;
            blk->use_residual = (stride == 1 && in_ch == out_ch);
            const int64_t mid = in_ch * stage.t;
            if (stage.t != 1) blk->expand = make_conv_unit(in_ch, mid, 1, 1, 0, true, rng);
            blk->dw = make_dw_unit(mid, 3, stride, 1, rng);
            blk->project = make_conv_unit(mid, out_ch, 1, 1, 0, false, rng);
            m.layers.push_back(std::move(blk));
            in_ch = out_ch;
        }
    }

    const int64_t last_ch =
        static_cast<int64_t>(1280.0f * std::max(1.0f, config.width_multiplier));
    auto last = std::make_unique<ConvBnActLayer>();
    last->name = "last_conv";
    last->unit = make_conv_unit(in_ch, last_ch, 1, 1, 0, true, rng);
    m.layers.push_back(std::move(last));

    append_head(m, config.num_classes, config.dropout_rate, rng);
    return m;
}

void strip_head(Model& model) {
    auto is_head = [](const Layer& l) {
        const std::string k = l.kind();
        return k == "softmax" || k == "linear" || k == "dropout" || k == "global_avg_pool";
    };
    while (!model.layers.empty() && is_head(*model.layers.back()))
        model.layers.pop_back();
    if (model.layers.empty())
        fail(ErrorCode::invalid_argument, "strip_head: nothing left after removing the head");
}

void attach_head(Model& model, int num_classes, bool freeze_backbone, uint64_t seed) {
    if (num_classes < 2)
        fail(ErrorCode::invalid_argument, "attach_head: num_classes must be >= 2");
    if (model.layers.empty() || model.layers.back()->kind() != "conv_bn_act")
        fail(ErrorCode::invalid_argument,
             "attach_head: backbone must end at the feature convolution");
    if (freeze_backbone)
        for (auto& l : model.layers) l->trainable = false;
    Rng rng(derive_seed(seed, 1));
    append_head(model, num_classes, model.config.dropout_rate, rng);
    model.config.num_classes = num_classes;
    model.class_names = default_class_names(num_classes);
}

} // namespace masknet
