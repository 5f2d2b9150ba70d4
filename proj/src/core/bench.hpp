#pragma once

#include <string>
#include <vector>

#include "core/model.hpp"

namespace masknet {

struct LayerTiming {
    std::string name;
    std::string kind;
    double naive_ms = 0.0;
    double gemm_ms = 0.0;
};

struct BenchResult {
    ModelConfig config;
    int repeats = 0;
    std::vector<LayerTiming> layers;
    double naive_total_ms = 0.0;  // median whole-forward time per path
    double gemm_total_ms = 0.0;
    double speedup() const { return gemm_total_ms > 0.0 ? naive_total_ms / gemm_total_ms : 0.0; }
};

// Times a single-image forward per layer on both convolution paths,
// reporting the median over `repeats` passes.
BenchResult bench_forward(const Model& model, int repeats = 3, uint64_t seed = 7);

std::string bench_table(const BenchResult& result);

} // namespace masknet
