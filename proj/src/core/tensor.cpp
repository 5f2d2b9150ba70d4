#include "core/tensor.hpp"

namespace masknet {

std::string Shape4::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
}

size_t Tensor::check_count(const Shape4& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
        fail(ErrorCode::invalid_argument, "tensor extents must be non-negative, got " + s.str());
    return static_cast<size_t>(s.count());
}

Tensor Tensor::from_data(Shape4 shape, std::vector<float> data) {
    if (static_cast<int64_t>(data.size()) != shape.count())
        fail(ErrorCode::shape_mismatch,
             "tensor data length " + std::to_string(data.size()) +
                 " does not match shape " + shape.str());
    Tensor t;
    t.shape_ = shape;
    t.data_ = std::move(data);
    return t;
}

} // namespace masknet
