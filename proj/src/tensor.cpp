#include "casseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "casseg/errors.hpp"

namespace casseg {

namespace {

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void require_finite(std::span<const double> values, const char* op) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value");
    }
}

} // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    require_finite(std::span<const double>(&fill, 1), "Tensor");
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_size(shape_)) {
        throw ShapeError("Tensor: " + std::to_string(data_.size()) + " values for shape " + shape_string(shape_));
    }
    require_finite(data_, "Tensor");
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw ShapeError("Tensor::extent: axis out of range");
    return shape_[axis];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor zip_map(const Tensor& a, const Tensor& b, const std::function<double(double, double)>& f) {
    if (a.shape() != b.shape()) {
        throw ShapeError("zip_map: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return Tensor(a.shape(), std::move(out));
}

Tensor reduce(const Tensor& a, std::optional<std::size_t> axis, ReduceKind kind) {
    auto combine = [kind](double acc, double v) { return kind == ReduceKind::max ? std::max(acc, v) : acc + v; };
    const double init = kind == ReduceKind::max ? -std::numeric_limits<double>::infinity() : 0.0;

    if (!axis) {
        if (a.size() == 0) throw ShapeError("reduce: empty tensor");
        double acc = init;
        for (double v : a.data()) acc = combine(acc, v);
        if (kind == ReduceKind::mean) acc /= static_cast<double>(a.size());
        return Tensor(Shape{}, acc);
    }

    const std::size_t ax = *axis;
    if (ax >= a.rank()) {
        throw ShapeError("reduce: axis " + std::to_string(ax) + " out of range for rank " + std::to_string(a.rank()));
    }
    const Shape& in = a.shape();
    const std::size_t extent = in[ax];
    if (extent == 0) throw ShapeError("reduce: zero extent on reduced axis");

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= in[i];
    for (std::size_t i = ax + 1; i < in.size(); ++i) inner *= in[i];

    Shape out_shape;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (i != ax) out_shape.push_back(in[i]);
    }
    std::vector<double> out(outer * inner, init);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t e = 0; e < extent; ++e) {
            const double* row = a.data().data() + (o * extent + e) * inner;
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = combine(out[o * inner + i], row[i]);
        }
    }
    if (kind == ReduceKind::mean) {
        for (auto& v : out) v /= static_cast<double>(extent);
    }
    return Tensor(std::move(out_shape), std::move(out));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: rank-2 operands required");
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: inner extents " + std::to_string(k) + " and " + std::to_string(b.shape()[0]));
    }
    Tensor out({n, m}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out.at(i, j) += av * b.at(p, j);
        }
    }
    return out;
}

Tensor identity(std::size_t n) {
    Tensor out({n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
    return out;
}

} // namespace casseg
