#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "doctest.h"

using namespace m2d2;

namespace {

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(got), 1e-6);
}

void check_grad_matches_fd(const std::function<Var(const Var&)>& build, const Tensor& x0,
                           double tol = 1e-4) {
    Var x = leaf(x0);
    Var y = build(x);
    REQUIRE(y->value.numel() == 1);
    zero_grad({x});
    backward(y);

    Tensor fd = finite_diff_gradient(
        [&](const Tensor& xt) { return build(constant(xt))->value.item(); }, x0, 1e-5);

    for (std::size_t i = 0; i < x0.numel(); ++i) {
        INFO("coordinate ", i, ": grad=", x->grad[i], " fd=", fd[i]);
        CHECK(rel_err(x->grad[i], fd[i]) < tol);
    }
}

}  // namespace

TEST_CASE("forward op spot values") {
    CHECK(sigmoid(scalar_const(0.0))->value.item() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(softplus(scalar_const(0.0))->value.item() ==
          doctest::Approx(0.6931471805599453).epsilon(1e-12));

    Var a = constant(Tensor(Shape{2, 2}, {1, 2, 3, 4}));
    Var i2 = constant(Tensor::identity(2));
    Tensor prod = matmul(a, i2)->value;
    for (std::size_t k = 0; k < 4; ++k) CHECK(prod[k] == doctest::Approx(a->value[k]));
}

TEST_CASE("shape mismatch names both shapes") {
    Var a = constant(Tensor::ones(Shape{2, 3}));
    Var b = constant(Tensor::ones(Shape{4}));
    try {
        add(a, b);
        FAIL("expected shape error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::shape);
        CHECK(std::string(e.what()).find("[2, 3]") != std::string::npos);
        CHECK(std::string(e.what()).find("[4]") != std::string::npos);
    }

    Var c = constant(Tensor::ones(Shape{2, 3}));
    Var d = constant(Tensor::ones(Shape{2, 3}));
    CHECK_THROWS_AS(matmul(c, d), Error);
}

TEST_CASE("backward basics") {
    SUBCASE("d/dx x^2 at 3 is 6") {
        Var x = leaf(Tensor::scalar(3.0));
        Var y = square(x);
        backward(y);
        CHECK(x->grad[0] == doctest::Approx(6.0).epsilon(1e-12));
    }
    SUBCASE("d/dx sigmoid at 0 is 0.25") {
        Var x = leaf(Tensor::scalar(0.0));
        backward(sigmoid(x));
        CHECK(x->grad[0] == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("gradient of mean of squares of 2x2 ones is 0.5 everywhere") {
        Var x = leaf(Tensor::ones(Shape{2, 2}));
        backward(mean(square(x)));
        for (std::size_t i = 0; i < 4; ++i) CHECK(x->grad[i] == doctest::Approx(0.5));
    }
    SUBCASE("non-scalar root rejected") {
        Var x = leaf(Tensor::ones(Shape{2}));
        CHECK_THROWS_AS(backward(add(x, x)), Error);
    }
    SUBCASE("leaves without a path to the root keep zero gradients") {
        Var x = leaf(Tensor::scalar(2.0));
        Var unused = leaf(Tensor::ones(Shape{3}));
        zero_grad({x, unused});
        backward(square(x));
        for (std::size_t i = 0; i < 3; ++i) CHECK(unused->grad[i] == 0.0);
    }
}

TEST_CASE("shared subexpression gradients sum over paths") {
    // y = u + u with u = x^2: dy/dx = 4x
    Var x = leaf(Tensor::scalar(1.5));
    Var u = square(x);
    backward(add(u, u));
    CHECK(x->grad[0] == doctest::Approx(6.0).epsilon(1e-12));

    // and running backward twice accumulates into the leaf
    Var x2 = leaf(Tensor::scalar(2.0));
    Var y2 = square(x2);
    backward(y2);
    backward(y2);
    CHECK(x2->grad[0] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("cholesky and solve") {
    SUBCASE("identity") {
        Tensor l = cholesky(Tensor::identity(3));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(l.at({i, j}) == doctest::Approx(i == j ? 1.0 : 0.0));
    }
    SUBCASE("diagonal") {
        Tensor k(Shape{2, 2}, {4, 0, 0, 9});
        Tensor l = cholesky(k);
        CHECK(l.at({0, 0}) == doctest::Approx(2.0));
        CHECK(l.at({1, 1}) == doctest::Approx(3.0));
        CHECK(l.at({0, 1}) == doctest::Approx(0.0));
    }
    SUBCASE("2x2 dense reconstructs") {
        Tensor k(Shape{2, 2}, {2, 1, 1, 2});
        Tensor l = cholesky(k);
        CHECK(l.at({0, 0}) == doctest::Approx(1.41421).epsilon(1e-5));
        CHECK(l.at({1, 0}) == doctest::Approx(0.70711).epsilon(1e-5));
        CHECK(l.at({1, 1}) == doctest::Approx(1.22474).epsilon(1e-5));
        Tensor rec = matmul_plain(l, Tensor(Shape{2, 2}, {l[0], l[2], 0, l[3]}).reshaped(Shape{2, 2}));
        // reconstruct explicitly: L * L^T
        Tensor lt(Shape{2, 2}, {l[0], l[2], l[1], l[3]});
        rec = matmul_plain(l, lt);
        for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(rec[i] - k[i]) < 1e-8);
    }
    SUBCASE("non-positive-definite carries failing pivot") {
        Tensor k(Shape{2, 2}, {1, 2, 2, 1});  // eigenvalues 3, -1
        try {
            cholesky(k);
            FAIL("expected decomposition error");
        } catch (const DecompositionError& e) {
            CHECK(e.pivot_index() == 1);
        }
    }
    SUBCASE("solve_spd") {
        Tensor b(Shape{3}, {1, 2, 3});
        Tensor x = solve_spd(Tensor::identity(3), b);
        for (std::size_t i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(b[i]));

        Tensor d(Shape{2, 2}, {2, 0, 0, 4});
        Tensor x2 = solve_spd(d, Tensor(Shape{2}, {2, 4}));
        CHECK(x2[0] == doctest::Approx(1.0));
        CHECK(x2[1] == doctest::Approx(1.0));

        Tensor k(Shape{2, 2}, {2, 1, 1, 2});
        Tensor x3 = solve_spd(k, Tensor(Shape{2}, {3, 3}));
        CHECK(x3[0] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(x3[1] == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("cholesky reconstructs random SPD matrices") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        std::size_t n = 1 + rng.index(6);
        Tensor b = Tensor::randn(Shape{n, n}, rng);
        Tensor a(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = i == j ? 1.0 : 0.0;
                for (std::size_t p = 0; p < n; ++p) acc += b.at({p, i}) * b.at({p, j});
                a.at({i, j}) = acc;
            }
        Tensor l = cholesky(a);
        double fro = 0.0, ref = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p <= std::min(i, j); ++p)
                    acc += l.at({i, p}) * l.at({j, p});
                fro += (acc - a.at({i, j})) * (acc - a.at({i, j}));
                ref += a.at({i, j}) * a.at({i, j});
            }
        CHECK(std::sqrt(fro / ref) < 1e-8);
    }
}

TEST_CASE("finite difference oracle") {
    Tensor x = Tensor::scalar(3.0);
    Tensor g = finite_diff_gradient([](const Tensor& t) { return t[0] * t[0]; }, x, 1e-5);
    CHECK(std::abs(g[0] - 6.0) < 1e-6);

    Rng rng(3);
    Tensor v = Tensor::randn(Shape{4}, rng);
    Tensor gs = finite_diff_gradient(
        [](const Tensor& t) {
            double acc = 0;
            for (std::size_t i = 0; i < t.numel(); ++i) acc += t[i];
            return acc;
        },
        v, 1e-5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(gs[i] == doctest::Approx(1.0).epsilon(1e-8));

    CHECK_THROWS_AS(finite_diff_gradient([](const Tensor& t) { return t[0]; }, x, 1e-2), Error);
}

TEST_CASE("backward matches finite differences for every op") {
    struct OpCase {
        std::string name;
        Shape shape;
        std::function<Var(const Var&)> build;
        bool positive = false;  // sample from (0.5, 2) instead of normal
    };

    std::vector<OpCase> cases = {
        {"add_bcast", {2, 3},
         [](const Var& x) { return sum(sigmoid(add(x, constant(Tensor(Shape{3}, {0.1, -0.2, 0.3}))))); }},
        {"sub", {2, 3}, [](const Var& x) { return sum(square(sub(x, x * 0.3))); }},
        {"mul_bcast", {2, 3},
         [](const Var& x) { return sum(mul(x, constant(Tensor(Shape{2, 1}, {1.5, -0.5})))); }},
        {"div", {2, 3}, [](const Var& x) { return sum(div(scalar_const(1.0), x)); }, true},
        {"matmul", {2, 3},
         [](const Var& x) {
             Var w = constant(Tensor(Shape{3, 2}, {0.5, -1, 2, 0.25, -0.75, 1}));
             return sum(tanh_op(matmul(x, w)));
         }},
        {"exp", {2, 2}, [](const Var& x) { return sum(exp_op(x * 0.5)); }},
        {"log", {2, 2}, [](const Var& x) { return sum(log_op(x)); }, true},
        {"sigmoid", {3}, [](const Var& x) { return sum(sigmoid(x)); }},
        {"tanh", {3}, [](const Var& x) { return sum(tanh_op(x)); }},
        {"softplus", {3}, [](const Var& x) { return sum(softplus(x)); }},
        {"sqrt", {3}, [](const Var& x) { return sum(sqrt_op(x)); }, true},
        {"square", {3}, [](const Var& x) { return sum(square(x)); }},
        {"mean", {2, 3}, [](const Var& x) { return mean(square(x)); }},
        {"mean_axis", {2, 3}, [](const Var& x) { return sum(square(mean_axis(x, 1))); }},
        {"clamp", {4}, [](const Var& x) { return sum(square(clamp(x, 0.6, 1.8))); }, true},
        {"neg", {3}, [](const Var& x) { return sum(exp_op(neg(x))); }},
        {"concat", {2, 2},
         [](const Var& x) {
             Var other = constant(Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
             return sum(square(concat({x, other}, 1)));
         }},
        {"slice", {3, 4}, [](const Var& x) { return sum(square(slice(x, 1, 1, 2))); }},
        {"transpose", {2, 3},
         [](const Var& x) {
             Var w = constant(Tensor(Shape{2, 1}, {1.0, -2.0}));
             return sum(matmul(transpose(x), w));
         }},
        {"reshape", {2, 3}, [](const Var& x) { return sum(square(reshape(x, Shape{3, 2}))); }},
        {"conv2d_x", {1, 2, 5, 5},
         [](const Var& x) {
             Rng krng(99);
             Var w = constant(Tensor::randn(Shape{3, 2, 3, 3}, krng, 0.5));
             return sum(tanh_op(conv2d(x, w)));
         }},
        {"conv2d_w", {2, 1, 3, 3},
         [](const Var& w) {
             Rng xrng(98);
             Var x = constant(Tensor::randn(Shape{2, 1, 6, 6}, xrng));
             return sum(sigmoid(conv2d(x, w)));
         }},
        {"maxpool", {1, 1, 6, 6}, [](const Var& x) { return sum(square(maxpool2x2(x))); }, true},
        {"mahalanobis_delta", {3},
         [](const Var& d) {
             Var k = constant(Tensor(Shape{3, 3}, {2, 0.5, 0.1, 0.5, 3, 0.2, 0.1, 0.2, 1.5}));
             return mahalanobis_sq(d, k);
         }},
        {"mahalanobis_K", {3, 3},
         [](const Var& a) {
             // SPD through a symmetric parameterization so perturbations stay valid
             Var sym = (add(a, transpose(a)) * 0.5);
             Var k = add(matmul(sym, transpose(sym)), constant(Tensor::identity(3)));
             Var d = constant(Tensor(Shape{3}, {1.0, -0.5, 0.25}));
             return mahalanobis_sq(d, k);
         }},
        {"logdet", {3, 3},
         [](const Var& a) {
             Var sym = (add(a, transpose(a)) * 0.5);
             Var k = add(matmul(sym, transpose(sym)), constant(Tensor::identity(3)));
             return logdet_spd(k);
         }},
    };

    for (const auto& c : cases) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            INFO("op=", c.name, " seed=", seed);
            Rng rng(seed * 1000 + 17);
            Tensor x0 = c.positive ? Tensor::uniform(c.shape, rng, 0.5, 2.0)
                                   : Tensor::randn(c.shape, rng);
            check_grad_matches_fd(c.build, x0);
        }
    }
}
