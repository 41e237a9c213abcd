#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.hpp"

namespace m2d2 {

// Reverse-mode autodiff over Tensor values. Nodes form an acyclic tape held
// together by shared_ptr; dropping the root releases the step's graph, leaves
// persist across steps. A graph belongs to one logical thread from
// construction through backward().
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.shape() != value.shape()) grad = Tensor::zeros(value.shape());
    }
};

using Var = std::shared_ptr<Node>;

// Leaf holding a learnable value; grad is allocated up front so untouched
// leaves read as zero gradients after a backward pass.
Var leaf(Tensor value, bool requires_grad = true);

// Non-learnable input.
Var constant(Tensor value);
Var scalar_const(double v);

// Reverse pass from a scalar-valued root. Gradients of all reachable interior
// nodes are reset first; leaf gradients accumulate (use zero_grad between
// steps).
void backward(const Var& root);

void zero_grad(const std::vector<Var>& leaves);

// --- elementwise (broadcasting over size-1 extents) -------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);

// --- elementwise unary -------------------------------------------------------
Var exp_op(const Var& a);
Var log_op(const Var& a);
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);
Var softplus(const Var& a);
Var sqrt_op(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);

// --- reductions --------------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var mean_axis(const Var& a, std::size_t axis);  // squeezes the axis

// --- structure -----------------------------------------------------------------
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);  // 2-D
Var reshape(const Var& a, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t len);

// 2-D cross-correlation, stride 1, valid padding.
// x: [B, C, H, W], w: [OC, C, kh, kw] -> [B, OC, H-kh+1, W-kw+1]
Var conv2d(const Var& x, const Var& w);

// 2x2 max pool, stride 2, floor on odd extents. x: [B, C, H, W]
Var maxpool2x2(const Var& x);

// --- SPD kernels used by the context likelihood ------------------------------
// delta^T K^-1 delta for SPD K, via Cholesky solve.
Var mahalanobis_sq(const Var& delta, const Var& k);
// log det K for SPD K.
Var logdet_spd(const Var& k);

// --- operators ---------------------------------------------------------------
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double b) { return add(a, scalar_const(b)); }
inline Var operator*(const Var& a, double b) { return mul(a, scalar_const(b)); }
inline Var operator*(double a, const Var& b) { return mul(scalar_const(a), b); }
inline Var operator-(const Var& a, double b) { return sub(a, scalar_const(b)); }
inline Var operator-(double a, const Var& b) { return sub(scalar_const(a), b); }

// --- finite-difference oracle --------------------------------------------------
// Central differences (f(x+h e_i) - f(x-h e_i)) / (2h) per coordinate.
// h must lie in [1e-7, 1e-4]; a non-finite f value raises an oracle error.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h = 1e-5);

}  // namespace m2d2
