#include "core/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace masknet {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One forward pass with each layer timed; returns per-layer ms.
std::vector<double> timed_pass(const Model& model, const Tensor& input, ConvPath path) {
    using clock = std::chrono::steady_clock;
    std::vector<double> ms;
    ms.reserve(model.layers.size());
    Tensor x = input;
    for (const auto& layer : model.layers) {
        const auto t0 = clock::now();
        x = layer->forward_path(x, path);
        const auto t1 = clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return ms;
}

} // namespace

BenchResult bench_forward(const Model& model, int repeats, uint64_t seed) {
    if (repeats < 1) fail(ErrorCode::invalid_argument, "bench repeats must be >= 1");
    const int res = model.config.input_resolution;
    Tensor input({1, 3, res, res});
    Rng rng(seed);
    for (int64_t i = 0; i < input.size(); ++i) input[i] = rng.uniform(-1.0f, 1.0f);

    BenchResult result;
    result.config = model.config;
    result.repeats = repeats;

    (void)model.forward(input);  // warmup

    const size_t n_layers = model.layers.size();
    std::vector<std::vector<double>> naive_samples(n_layers), gemm_samples(n_layers);
    std::vector<double> naive_totals, gemm_totals;
    for (int r = 0; r < repeats; ++r) {
        std::vector<double> naive_ms = timed_pass(model, input, ConvPath::naive);
        std::vector<double> gemm_ms = timed_pass(model, input, ConvPath::gemm);
        double naive_total = 0.0, gemm_total = 0.0;
        for (size_t i = 0; i < n_layers; ++i) {
            naive_samples[i].push_back(naive_ms[i]);
            gemm_samples[i].push_back(gemm_ms[i]);
            naive_total += naive_ms[i];
            gemm_total += gemm_ms[i];
        }
        naive_totals.push_back(naive_total);
        gemm_totals.push_back(gemm_total);
    }

    for (size_t i = 0; i < n_layers; ++i) {
        LayerTiming t;
        t.name = model.layers[i]->name;
        t.kind = model.layers[i]->kind();
        t.naive_ms = median(naive_samples[i]);
        t.gemm_ms = median(gemm_samples[i]);
        result.layers.push_back(std::move(t));
    }
    result.naive_total_ms = median(naive_totals);
    result.gemm_total_ms = median(gemm_totals);
    return result;
}

std::string bench_table(const BenchResult& result) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %-14s %12s %12s %9s\n", "layer", "kind",
                  "naive ms", "gemm ms", "speedup");
    out << line;
    for (const LayerTiming& t : result.layers) {
        const double ratio = t.gemm_ms > 0.0 ? t.naive_ms / t.gemm_ms : 0.0;
        std::snprintf(line, sizeof(line), "%-12s %-14s %12.3f %12.3f %8.2fx\n", t.name.c_str(),
                      t.kind.c_str(), t.naive_ms, t.gemm_ms, ratio);
        out << line;
    }
    std::snprintf(line, sizeof(line), "%-12s %-14s %12.3f %12.3f %8.2fx\n", "total", "",
                  result.naive_total_ms, result.gemm_total_ms, result.speedup());
    out << line;
    std::snprintf(line, sizeof(line), "(%dx%d input, width %.2f, median of %d)\n",
                  result.config.input_resolution, result.config.input_resolution,
                  static_cast<double>(result.config.width_multiplier), result.repeats);
    out << line;
    return out.str();
}

} // namespace masknet
