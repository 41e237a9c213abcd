#include "core/tensor.hpp"

#include <cmath>

namespace m2d2 {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    std::size_t n = std::max(a.size(), b.size());
    Shape out(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
        std::size_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (ea != eb && ea != 1 && eb != 1)
            fail(ErrorKind::shape, "shapes not broadcastable: " + shape_str(a) + " vs " +
                                       shape_str(b));
        out[n - 1 - i] = std::max(ea, eb);
    }
    return out;
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to) {
    auto own = row_major_strides(from);
    std::vector<std::size_t> st(to.size(), 0);
    for (std::size_t i = 0; i < from.size(); ++i) {
        std::size_t axis = to.size() - from.size() + i;
        st[axis] = (from[i] == 1 && to[axis] != 1) ? 0 : own[i];
    }
    return st;
}

Tensor cholesky(const Tensor& k) {
    if (k.ndim() != 2 || k.extent(0) != k.extent(1))
        fail(ErrorKind::shape, "cholesky expects a square matrix, got " + shape_str(k.shape()));
    std::size_t n = k.extent(0);
    const double* a = k.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(a[i * n + j] - a[j * n + i]) > 1e-10)
                fail(ErrorKind::invalid_argument,
                     "cholesky input not symmetric at (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");

    Tensor out(Shape{n, n});
    double* l = out.data();
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a[j * n + j];
        for (std::size_t p = 0; p < j; ++p) diag -= l[j * n + p] * l[j * n + p];
        if (diag <= 1e-12) throw DecompositionError(j, diag);
        double lj = std::sqrt(diag);
        l[j * n + j] = lj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a[i * n + j];
            for (std::size_t p = 0; p < j; ++p) v -= l[i * n + p] * l[j * n + p];
            l[i * n + j] = v / lj;
        }
    }
    return out;
}

Tensor tri_solve_lower(const Tensor& l, const Tensor& b, bool transposed) {
    std::size_t n = l.extent(0);
    if (b.numel() != n)
        fail(ErrorKind::shape, "triangular solve: matrix " + shape_str(l.shape()) +
                                   " vs vector " + shape_str(b.shape()));
    Tensor x = b.reshaped(Shape{n});
    const double* lm = l.data();
    double* xv = x.data();
    if (!transposed) {
        for (std::size_t i = 0; i < n; ++i) {
            double v = xv[i];
            for (std::size_t j = 0; j < i; ++j) v -= lm[i * n + j] * xv[j];
            xv[i] = v / lm[i * n + i];
        }
    } else {
        for (std::size_t i = n; i-- > 0;) {
            double v = xv[i];
            for (std::size_t j = i + 1; j < n; ++j) v -= lm[j * n + i] * xv[j];
            xv[i] = v / lm[i * n + i];
        }
    }
    return x;
}

Tensor solve_spd(const Tensor& k, const Tensor& b) {
    Tensor l = cholesky(k);
    Tensor y = tri_solve_lower(l, b, false);
    return tri_solve_lower(l, y, true);
}

double logdet_spd_value(const Tensor& k) {
    Tensor l = cholesky(k);
    std::size_t n = l.extent(0);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::log(l.data()[i * n + i]);
    return 2.0 * acc;
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.extent(1) != b.extent(0))
        fail(ErrorKind::shape,
             "matmul shapes do not conform: " + shape_str(a.shape()) + " x " +
                 shape_str(b.shape()));
    std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out(Shape{m, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av = ap[i * k + p];
            if (av == 0.0) continue;
            const double* brow = bp + p * n;
            double* orow = op + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    return out;
}

}  // namespace m2d2
