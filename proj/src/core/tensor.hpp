#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace masknet {

// Extents of a dense 4-D tensor in (batch, channel, height, width) order.
struct Shape4 {
    int64_t n = 0;
    int64_t c = 0;
    int64_t h = 0;
    int64_t w = 0;

    int64_t count() const { return n * c * h * w; }
    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

// Dense row-major float32 tensor in (N,C,H,W) order. The data buffer length
// always equals the shape's element count.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape4 shape, float fill = 0.0f)
        : shape_(shape), data_(check_count(shape), fill) {}

    static Tensor from_data(Shape4 shape, std::vector<float> data);

    const Shape4& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    int64_t index(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    float& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(index(n, c, h, w))];
    }
    float at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(index(n, c, h, w))];
    }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    const std::vector<float>& vec() const { return data_; }

    // Moves the storage out, leaving an empty tensor.
    std::vector<float> take_data() {
        shape_ = {};
        return std::move(data_);
    }

private:
    static size_t check_count(const Shape4& s);

    Shape4 shape_{};
    std::vector<float> data_;
};

} // namespace masknet
