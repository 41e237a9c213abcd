#include "core/autodiff.hpp"

#include <cmath>
#include <unordered_set>

namespace m2d2 {

namespace {

void accum(Node& n, const Tensor& g) {
    n.ensure_grad();
    double* dst = n.grad.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) dst[i] += src[i];
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents)
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

// Odometer walk over `out_shape`, yielding offsets into two broadcast inputs.
template <class F>
void bcast_walk(const Shape& out_shape, const Shape& sa_shape, const Shape& sb_shape, F&& body) {
    auto sa = broadcast_strides(sa_shape, out_shape);
    auto sb = broadcast_strides(sb_shape, out_shape);
    std::size_t n = Tensor::count(out_shape);
    std::size_t nd = out_shape.size();
    if (nd == 0) {
        body(0, 0, 0);
        return;
    }
    std::vector<std::size_t> idx(nd, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < n; ++i) {
        body(i, oa, ob);
        for (std::size_t d = nd; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out_shape[d]) break;
            idx[d] = 0;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
        }
    }
}

template <class F>
Tensor ew_bcast(const Tensor& a, const Tensor& b, F&& f) {
    if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        double* o = out.data();
        const double* pa = a.data();
        const double* pb = b.data();
        for (std::size_t i = 0; i < out.numel(); ++i) o[i] = f(pa[i], pb[i]);
        return out;
    }
    Shape os = broadcast_shapes(a.shape(), b.shape());
    Tensor out(os);
    double* o = out.data();
    const double* pa = a.data();
    const double* pb = b.data();
    bcast_walk(os, a.shape(), b.shape(),
               [&](std::size_t i, std::size_t oa, std::size_t ob) { o[i] = f(pa[oa], pb[ob]); });
    return out;
}

// Sum `g` down to `target` shape (inverse of broadcasting).
Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g;
    Tensor out(target);
    double* o = out.data();
    const double* src = g.data();
    bcast_walk(g.shape(), target, target,
               [&](std::size_t i, std::size_t ot, std::size_t) { o[ot] += src[i]; });
    return out;
}

template <class F, class DFA, class DFB>
Var binary_op(const Var& a, const Var& b, F f, DFA dfa, DFB dfb) {
    Tensor out = ew_bcast(a->value, b->value, f);
    return make_node(std::move(out), {a, b}, [a, b, dfa, dfb](Node& n) {
        if (a->requires_grad) {
            Tensor ga = ew_bcast(a->value, b->value, dfa);
            accum(*a, reduce_to_shape(ew_bcast(n.grad, ga, [](double x, double y) { return x * y; }),
                                      a->value.shape()));
        }
        if (b->requires_grad) {
            Tensor gb = ew_bcast(a->value, b->value, dfb);
            accum(*b, reduce_to_shape(ew_bcast(n.grad, gb, [](double x, double y) { return x * y; }),
                                      b->value.shape()));
        }
    });
}

// df receives (input, output) and returns the local derivative.
template <class DF>
Var unary_op(const Var& a, Tensor out, DF df) {
    return make_node(std::move(out), {a}, [a, df](Node& n) {
        Tensor gi(a->value.shape());
        const double* g = n.grad.data();
        const double* x = a->value.data();
        const double* y = n.value.data();
        double* o = gi.data();
        for (std::size_t i = 0; i < gi.numel(); ++i) o[i] = g[i] * df(x[i], y[i]);
        accum(*a, gi);
    });
}

template <class F>
Tensor map_tensor(const Tensor& a, F&& f) {
    Tensor out(a.shape());
    double* o = out.data();
    const double* x = a.data();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = f(x[i]);
    return out;
}

Tensor transpose_plain(const Tensor& a) {
    std::size_t r = a.extent(0), c = a.extent(1);
    Tensor out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
    return out;
}

double softplus_val(double x) {
    // log(1 + e^x), stable for large |x|
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_val(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->ensure_grad();
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var scalar_const(double v) { return constant(Tensor::scalar(v)); }

void backward(const Var& root) {
    if (root->value.numel() != 1)
        fail(ErrorKind::invalid_argument,
             "backward requires a scalar root, got shape " + shape_str(root->value.shape()));
    if (!root->requires_grad) return;

    // Iterative post-order DFS; reversed post-order processes every node
    // before its parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (!n->parents.empty())
            n->grad = Tensor::zeros(n->value.shape());
        else
            n->ensure_grad();
    }
    root->ensure_grad();
    root->grad.data()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

void zero_grad(const std::vector<Var>& leaves) {
    for (const auto& l : leaves) l->grad = Tensor::zeros(l->value.shape());
}

Var add(const Var& a, const Var& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
    return binary_op(
        a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Var neg(const Var& a) {
    return unary_op(a, map_tensor(a->value, [](double x) { return -x; }),
                    [](double, double) { return -1.0; });
}

Var exp_op(const Var& a) {
    return unary_op(a, map_tensor(a->value, [](double x) { return std::exp(x); }),
                    [](double, double y) { return y; });
}

Var log_op(const Var& a) {
    return unary_op(a, map_tensor(a->value, [](double x) { return std::log(x); }),
                    [](double x, double) { return 1.0 / x; });
}

Var sigmoid(const Var& a) {
    return unary_op(a, map_tensor(a->value, sigmoid_val),
                    [](double, double y) { return y * (1.0 - y); });
}

Var tanh_op(const Var& a) {
    return unary_op(a, map_tensor(a->value, [](double x) { return std::tanh(x); }),
                    [](double, double y) { return 1.0 - y * y; });
}

Var softplus(const Var& a) {
    return unary_op(a, map_tensor(a->value, softplus_val),
                    [](double x, double) { return sigmoid_val(x); });
}

Var sqrt_op(const Var& a) {
    return unary_op(a, map_tensor(a->value, [](double x) { return std::sqrt(x); }),
                    [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
    return unary_op(a, map_tensor(a->value, [](double x) { return x * x; }),
                    [](double x, double) { return 2.0 * x; });
}

Var clamp(const Var& a, double lo, double hi) {
    return unary_op(a,
                    map_tensor(a->value, [lo, hi](double x) { return std::min(std::max(x, lo), hi); }),
                    [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    return make_node(Tensor::scalar(acc), {a}, [a](Node& n) {
        accum(*a, Tensor::full(a->value.shape(), n.grad[0]));
    });
}

Var mean(const Var& a) {
    std::size_t n = a->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a->value[i];
    return make_node(Tensor::scalar(acc / static_cast<double>(n)), {a}, [a, n](Node& nd) {
        accum(*a, Tensor::full(a->value.shape(), nd.grad[0] / static_cast<double>(n)));
    });
}

Var mean_axis(const Var& a, std::size_t axis) {
    const Shape& s = a->value.shape();
    if (axis >= s.size())
        fail(ErrorKind::shape, "mean_axis: axis " + std::to_string(axis) + " out of range for " +
                                   shape_str(s));
    Shape os;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) os.push_back(s[i]);
    std::size_t outer = 1, inner = 1, e = s[axis];
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

    Tensor out(os);
    const double* x = a->value.data();
    double* o = out.data();
    for (std::size_t u = 0; u < outer; ++u)
        for (std::size_t k = 0; k < e; ++k)
            for (std::size_t v = 0; v < inner; ++v)
                o[u * inner + v] += x[(u * e + k) * inner + v];
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] /= static_cast<double>(e);

    return make_node(std::move(out), {a}, [a, outer, inner, e](Node& n) {
        Tensor gi(a->value.shape());
        double* gd = gi.data();
        const double* g = n.grad.data();
        double scale = 1.0 / static_cast<double>(e);
        for (std::size_t u = 0; u < outer; ++u)
            for (std::size_t k = 0; k < e; ++k)
                for (std::size_t v = 0; v < inner; ++v)
                    gd[(u * e + k) * inner + v] = g[u * inner + v] * scale;
        accum(*a, gi);
    });
}

Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul_plain(a->value, b->value);
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) accum(*a, matmul_plain(n.grad, transpose_plain(b->value)));
        if (b->requires_grad) accum(*b, matmul_plain(transpose_plain(a->value), n.grad));
    });
}

Var transpose(const Var& a) {
    if (a->value.ndim() != 2)
        fail(ErrorKind::shape, "transpose expects 2-D, got " + shape_str(a->value.shape()));
    return make_node(transpose_plain(a->value), {a},
                     [a](Node& n) { accum(*a, transpose_plain(n.grad)); });
}

Var reshape(const Var& a, Shape shape) {
    Tensor out = a->value.reshaped(shape);
    return make_node(std::move(out), {a},
                     [a](Node& n) { accum(*a, n.grad.reshaped(a->value.shape())); });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) fail(ErrorKind::invalid_argument, "concat of zero tensors");
    const Shape& s0 = parts[0]->value.shape();
    if (axis >= s0.size())
        fail(ErrorKind::shape, "concat: axis " + std::to_string(axis) + " out of range for " +
                                   shape_str(s0));
    Shape os = s0;
    os[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p->value.shape();
        if (s.size() != s0.size())
            fail(ErrorKind::shape, "concat rank mismatch: " + shape_str(s0) + " vs " + shape_str(s));
        for (std::size_t d = 0; d < s.size(); ++d)
            if (d != axis && s[d] != s0[d])
                fail(ErrorKind::shape,
                     "concat extent mismatch: " + shape_str(s0) + " vs " + shape_str(s));
        os[axis] += s[axis];
    }

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= os[i];
    for (std::size_t i = axis + 1; i < os.size(); ++i) inner *= os[i];

    Tensor out(os);
    std::size_t row = os[axis] * inner;
    std::vector<std::size_t> chunks;
    chunks.reserve(parts.size());
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::size_t pe = p->value.extent(axis) * inner;
        chunks.push_back(pe);
        const double* src = p->value.data();
        for (std::size_t u = 0; u < outer; ++u)
            for (std::size_t i = 0; i < pe; ++i) out.data()[u * row + off + i] = src[u * pe + i];
        off += pe;
    }

    return make_node(std::move(out), parts, [parts, chunks, outer, row](Node& n) {
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            const auto& p = parts[pi];
            std::size_t pe = chunks[pi];
            if (p->requires_grad) {
                Tensor gi(p->value.shape());
                for (std::size_t u = 0; u < outer; ++u)
                    for (std::size_t i = 0; i < pe; ++i)
                        gi.data()[u * pe + i] = n.grad.data()[u * row + offset + i];
                accum(*p, gi);
            }
            offset += pe;
        }
    });
}

Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t len) {
    const Shape& s = a->value.shape();
    if (axis >= s.size() || start + len > s[axis])
        fail(ErrorKind::shape, "slice [" + std::to_string(start) + ", " +
                                   std::to_string(start + len) + ") on axis " +
                                   std::to_string(axis) + " of " + shape_str(s));
    Shape os = s;
    os[axis] = len;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

    Tensor out(os);
    std::size_t src_row = s[axis] * inner, dst_row = len * inner;
    for (std::size_t u = 0; u < outer; ++u)
        for (std::size_t i = 0; i < dst_row; ++i)
            out.data()[u * dst_row + i] = a->value.data()[u * src_row + start * inner + i];

    return make_node(std::move(out), {a}, [a, outer, inner, start, src_row, dst_row](Node& n) {
        Tensor gi(a->value.shape());
        for (std::size_t u = 0; u < outer; ++u)
            for (std::size_t i = 0; i < dst_row; ++i)
                gi.data()[u * src_row + start * inner + i] = n.grad.data()[u * dst_row + i];
        accum(*a, gi);
    });
}

Var conv2d(const Var& x, const Var& w) {
    const Shape& xs = x->value.shape();
    const Shape& ws = w->value.shape();
    if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
        fail(ErrorKind::shape,
             "conv2d expects x[B,C,H,W], w[OC,C,kh,kw]; got " + shape_str(xs) + " and " +
                 shape_str(ws));
    std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    std::size_t OC = ws[0], kh = ws[2], kw = ws[3];
    if (kh > H || kw > W)
        fail(ErrorKind::shape, "conv2d kernel " + shape_str(ws) + " larger than input " +
                                   shape_str(xs));
    std::size_t OH = H - kh + 1, OW = W - kw + 1;

    Tensor out(Shape{B, OC, OH, OW});
    const double* xp = x->value.data();
    const double* wp = w->value.data();
    double* op = out.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t oc = 0; oc < OC; ++oc)
            for (std::size_t c = 0; c < C; ++c) {
                const double* xim = xp + (b * C + c) * H * W;
                const double* ker = wp + (oc * C + c) * kh * kw;
                double* oim = op + (b * OC + oc) * OH * OW;
                for (std::size_t i = 0; i < OH; ++i)
                    for (std::size_t p = 0; p < kh; ++p) {
                        const double* xrow = xim + (i + p) * W;
                        const double* krow = ker + p * kw;
                        double* orow = oim + i * OW;
                        for (std::size_t q = 0; q < kw; ++q) {
                            double kv = krow[q];
                            if (kv == 0.0) continue;
                            for (std::size_t j = 0; j < OW; ++j) orow[j] += kv * xrow[j + q];
                        }
                    }
            }

    return make_node(std::move(out), {x, w}, [x, w, B, C, H, W, OC, kh, kw, OH, OW](Node& n) {
        const double* g = n.grad.data();
        if (x->requires_grad) {
            Tensor gx(x->value.shape());
            double* gxp = gx.data();
            const double* wp = w->value.data();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t oc = 0; oc < OC; ++oc)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* ker = wp + (oc * C + c) * kh * kw;
                        const double* gim = g + (b * OC + oc) * OH * OW;
                        double* gxim = gxp + (b * C + c) * H * W;
                        for (std::size_t i = 0; i < OH; ++i)
                            for (std::size_t p = 0; p < kh; ++p)
                                for (std::size_t q = 0; q < kw; ++q) {
                                    double kv = ker[p * kw + q];
                                    if (kv == 0.0) continue;
                                    const double* grow = gim + i * OW;
                                    double* xrow = gxim + (i + p) * W + q;
                                    for (std::size_t j = 0; j < OW; ++j) xrow[j] += kv * grow[j];
                                }
                    }
            accum(*x, gx);
        }
        if (w->requires_grad) {
            Tensor gw(w->value.shape());
            double* gwp = gw.data();
            const double* xp = x->value.data();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t oc = 0; oc < OC; ++oc)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* xim = xp + (b * C + c) * H * W;
                        const double* gim = g + (b * OC + oc) * OH * OW;
                        double* ker = gwp + (oc * C + c) * kh * kw;
                        for (std::size_t p = 0; p < kh; ++p)
                            for (std::size_t q = 0; q < kw; ++q) {
                                double acc = 0.0;
                                for (std::size_t i = 0; i < OH; ++i) {
                                    const double* xrow = xim + (i + p) * W + q;
                                    const double* grow = gim + i * OW;
                                    for (std::size_t j = 0; j < OW; ++j) acc += xrow[j] * grow[j];
                                }
                                ker[p * kw + q] += acc;
                            }
                    }
            accum(*w, gw);
        }
    });
}

Var maxpool2x2(const Var& x) {
    const Shape& xs = x->value.shape();
    if (xs.size() != 4)
        fail(ErrorKind::shape, "maxpool2x2 expects x[B,C,H,W], got " + shape_str(xs));
    std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    std::size_t OH = H / 2, OW = W / 2;
    if (OH == 0 || OW == 0)
        fail(ErrorKind::shape, "maxpool2x2 input too small: " + shape_str(xs));

    Tensor out(Shape{B, C, OH, OW});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
    const double* xp = x->value.data();
    double* op = out.data();
    std::size_t k = 0;
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double* im = xp + bc * H * W;
        for (std::size_t i = 0; i < OH; ++i)
            for (std::size_t j = 0; j < OW; ++j, ++k) {
                std::size_t base = (2 * i) * W + 2 * j;
                std::size_t best = base;
                double bv = im[base];
                for (std::size_t p = 0; p < 2; ++p)
                    for (std::size_t q = 0; q < 2; ++q) {
                        std::size_t off = base + p * W + q;
                        if (im[off] > bv) {
                            bv = im[off];
                            best = off;
                        }
                    }
                op[k] = bv;
                (*argmax)[k] = bc * H * W + best;
            }
    }

    return make_node(std::move(out), {x}, [x, argmax](Node& n) {
        Tensor gi(x->value.shape());
        for (std::size_t k = 0; k < n.grad.numel(); ++k)
            gi.data()[(*argmax)[k]] += n.grad.data()[k];
        accum(*x, gi);
    });
}

Var mahalanobis_sq(const Var& delta, const Var& k) {
    const Tensor& kv = k->value;
    std::size_t m = kv.extent(0);
    if (delta->value.numel() != m)
        fail(ErrorKind::shape, "mahalanobis_sq: delta " + shape_str(delta->value.shape()) +
                                   " vs K " + shape_str(kv.shape()));
    Tensor solved = solve_spd(kv, delta->value);  // K^-1 delta
    double val = 0.0;
    for (std::size_t i = 0; i < m; ++i) val += delta->value[i] * solved[i];

    auto cache = std::make_shared<Tensor>(std::move(solved));
    return make_node(Tensor::scalar(val), {delta, k}, [delta, k, cache, m](Node& n) {
        double g = n.grad[0];
        const Tensor& x = *cache;
        if (delta->requires_grad) {
            Tensor gd(delta->value.shape());
            for (std::size_t i = 0; i < m; ++i) gd[i] = 2.0 * g * x[i];
            accum(*delta, gd);
        }
        if (k->requires_grad) {
            Tensor gk(Shape{m, m});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j) gk.data()[i * m + j] = -g * x[i] * x[j];
            accum(*k, gk);
        }
    });
}

Var logdet_spd(const Var& k) {
    Tensor l = cholesky(k->value);
    std::size_t m = l.extent(0);
    double val = 0.0;
    for (std::size_t i = 0; i < m; ++i) val += std::log(l.data()[i * m + i]);
    val *= 2.0;

    auto chol = std::make_shared<Tensor>(std::move(l));
    return make_node(Tensor::scalar(val), {k}, [k, chol, m](Node& n) {
        if (!k->requires_grad) return;
        double g = n.grad[0];
        // d(log det K)/dK = K^-1; columns of K^-1 from the cached factor
        Tensor inv(Shape{m, m});
        for (std::size_t j = 0; j < m; ++j) {
            Tensor e(Shape{m});
            e[j] = 1.0;
            Tensor y = tri_solve_lower(*chol, e, false);
            Tensor col = tri_solve_lower(*chol, y, true);
            for (std::size_t i = 0; i < m; ++i) inv.data()[i * m + j] = col[i];
        }
        Tensor gk(Shape{m, m});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                gk.data()[i * m + j] = g * 0.5 * (inv.data()[i * m + j] + inv.data()[j * m + i]);
        accum(*k, gk);
    });
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h) {
    if (h < 1e-7 || h > 1e-4)
        fail(ErrorKind::invalid_argument, "finite difference step must lie in [1e-7, 1e-4]");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double orig = probe[i];
        probe[i] = orig + h;
        double fp = f(probe);
        probe[i] = orig - h;
        double fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            fail(ErrorKind::runtime, "finite difference oracle hit a non-finite value at coordinate " +
                                         std::to_string(i));
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace m2d2
