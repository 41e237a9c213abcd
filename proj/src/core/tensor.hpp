#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace m2d2 {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense n-dimensional array of doubles, row-major. A 0-d tensor is a scalar
// holding one element (product over an empty extent list is 1).
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            fail(ErrorKind::shape, "element count " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.data_[0] = v;
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

    static Tensor identity(std::size_t n) {
        Tensor t(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
        return t;
    }

    static Tensor randn(Shape shape, Rng& rng, double std = 1.0) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = std * rng.normal();
        return t;
    }

    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = rng.uniform(lo, hi);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }
    std::size_t numel() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

    double item() const {
        if (numel() != 1)
            fail(ErrorKind::shape, "item() on tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    Tensor reshaped(Shape shape) const {
        if (count(shape) != numel())
            fail(ErrorKind::shape, "cannot reshape " + shape_str(shape_) + " to " +
                                       shape_str(shape));
        return Tensor(std::move(shape), data_);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const;

    static std::size_t count(const Shape& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        std::size_t off = 0, d = 0;
        for (std::size_t i : idx) off = off * shape_[d++] + i;
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

// --- shape utilities -------------------------------------------------------

// Numpy-style broadcast of two shapes; extents must match or one must be 1.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Strides of `from` viewed under broadcast shape `to` (0 on broadcast axes).
std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to);

std::vector<std::size_t> row_major_strides(const Shape& s);

// --- plain (non-autodiff) linear algebra -----------------------------------

// Lower-triangular L with L * L^T = K. K must be symmetric within 1e-10 and
// positive definite; a pivot <= 1e-12 raises DecompositionError with the
// failing index.
Tensor cholesky(const Tensor& k);

// Solve L x = b (lower triangular) or L^T x = b when transposed.
Tensor tri_solve_lower(const Tensor& l, const Tensor& b, bool transposed = false);

// Solve K x = b for SPD K via Cholesky plus two triangular solves.
Tensor solve_spd(const Tensor& k, const Tensor& b);

// log det K for SPD K, via the Cholesky diagonal.
double logdet_spd_value(const Tensor& k);

Tensor matmul_plain(const Tensor& a, const Tensor& b);

}  // namespace m2d2
