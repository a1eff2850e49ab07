#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "trw/autodiff.hpp"
#include "trw/rng.hpp"

using namespace trw;
using namespace trw::ad;

namespace {

bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

Tensor random_tensor(Shape shape, StreamRng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.next_uniform(lo, hi);
    return t;
}

// FD check of d(root)/d(param `name`) against the reverse-mode value
void check_grad_vs_fd(const Expr& root, const std::string& name, const Bindings& bindings,
                      double h, double tol) {
    auto g = gradient(root, {name}, bindings);
    const Tensor& analytic = g.entries.at(name).value;
    Tensor fd = finite_diff_gradient(
        [&](const Tensor& p) {
            Bindings b = bindings;
            b[name] = p;
            return evaluate(root, b).scalar_value();
        },
        bindings.at(name), h);
    REQUIRE(analytic.shape == fd.shape);
    for (std::size_t i = 0; i < fd.data.size(); ++i) {
        INFO("param ", name, " coordinate ", i);
        CHECK(close_rel(analytic.data[i], fd.data[i], tol));
    }
}

}  // namespace

TEST_CASE("evaluate: basic examples") {
    Bindings b;
    b["x"] = Tensor::scalar(3.0);
    Expr x = param("x", {});
    CHECK(evaluate(mul(x, x), b).scalar_value() == doctest::Approx(9.0));

    Expr logits = constant(Tensor({4}, {0.0, 0.0, 0.0, 0.0}));
    Tensor p = evaluate(softmax(logits), {});
    for (double v : p.data) CHECK(v == doctest::Approx(0.25));

    Bindings b1;
    b1["y"] = Tensor::scalar(1.0);
    CHECK(evaluate(log_(param("y", {})), b1).scalar_value() == doctest::Approx(0.0));
}

TEST_CASE("evaluate: errors") {
    Expr x = param("x", {2});
    CHECK_THROWS_AS(evaluate(sum(x), {}), UnboundSymbolError);

    Bindings bad;
    bad["x"] = Tensor::scalar(1.0);
    CHECK_THROWS_AS(evaluate(sum(x), bad), ShapeError);

    // exp overflow surfaces as a numeric error
    Bindings big;
    big["x"] = Tensor({2}, {1000.0, 1000.0});
    CHECK_THROWS_AS(evaluate(sum(exp_(x)), big), NumericError);

    // incompatible shapes rejected at construction
    CHECK_THROWS_AS(add(param("a", {2}), param("b", {3})), ShapeError);
    CHECK_THROWS_AS(matvec(param("w", {2, 3}), param("v", {2})), ShapeError);
}

TEST_CASE("gradient: basic examples") {
    Bindings b;
    b["x"] = Tensor::scalar(3.0);
    Expr x = param("x", {});
    auto g = gradient(mul(x, x), {"x"}, b);
    CHECK(g.entries.at("x").value.scalar_value() == doctest::Approx(6.0));

    Bindings b2;
    b2["x"] = Tensor::scalar(2.0);
    b2["y"] = Tensor::scalar(5.0);
    Expr f = mul(param("x", {}), param("y", {}));
    auto g2 = gradient(f, {"x", "y"}, b2);
    CHECK(g2.entries.at("x").value.scalar_value() == doctest::Approx(5.0));
    CHECK(g2.entries.at("y").value.scalar_value() == doctest::Approx(2.0));

    Bindings b3;
    b3["w"] = Tensor({2}, {1.0, -2.0});
    auto g3 = gradient(squared_norm(param("w", {2})), {"w"}, b3);
    CHECK(g3.entries.at("w").value.data[0] == doctest::Approx(2.0));
    CHECK(g3.entries.at("w").value.data[1] == doctest::Approx(-4.0));
}

TEST_CASE("gradient: non-scalar root is a rank error") {
    Expr v = param("v", {3});
    CHECK_THROWS_AS(gradient_graph(v, {"v"}), ShapeError);
}

TEST_CASE("gradient: unreachable parameter gives exact zeros") {
    Bindings b;
    b["x"] = Tensor::scalar(2.0);
    b["unused"] = Tensor({3}, {1.0, 2.0, 3.0});
    Expr x = param("x", {});
    auto g = gradient(mul(x, x), {"x", "unused"}, b);
    const Tensor& z = g.entries.at("unused").value;
    CHECK(z.shape == Shape{3});
    for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("gradient vs finite differences per node kind, 100 random instances") {
    StreamRng rng(7, Stream::kScratch);
    const double h = 1e-5;
    const double tol = 1e-5;
    for (int inst = 0; inst < 100; ++inst) {
        Bindings b;
        b["x"] = random_tensor({4}, rng);
        b["y"] = random_tensor({4}, rng);
        b["s"] = random_tensor({}, rng, 0.2, 1.5);
        b["w"] = random_tensor({3, 4}, rng);
        b["a2"] = random_tensor({3, 4}, rng);
        b["b2"] = random_tensor({4, 2}, rng);
        b["u"] = random_tensor({3}, rng);
        b["xp"] = random_tensor({4}, rng, 0.3, 2.0);  // positive, for log

        Expr x = param("x", {4}), y = param("y", {4}), s = param("s", {});
        Expr w = param("w", {3, 4}), a2 = param("a2", {3, 4}), b2m = param("b2", {4, 2});
        Expr u = param("u", {3}), xp = param("xp", {4});
        Expr probe = constant(random_tensor({4}, rng));

        check_grad_vs_fd(sum(add(x, y)), "x", b, h, tol);
        check_grad_vs_fd(sum(add(x, s)), "s", b, h, tol);
        check_grad_vs_fd(sum(mul(x, y)), "y", b, h, tol);
        check_grad_vs_fd(sum(mul(x, s)), "s", b, h, tol);
        check_grad_vs_fd(sum(emax(x, y)), "x", b, h, tol);
        check_grad_vs_fd(sum(matvec(w, x)), "w", b, h, tol);
        check_grad_vs_fd(sum(matvec(w, u, /*trans_w=*/true)), "u", b, h, tol);
        check_grad_vs_fd(sum(matmul(a2, b2m)), "a2", b, h, tol);
        check_grad_vs_fd(sum(matmul(a2, b2m)), "b2", b, h, tol);
        check_grad_vs_fd(sum(outer_product(u, x)), "u", b, h, tol);
        check_grad_vs_fd(sum(exp_(x)), "x", b, h, tol);
        check_grad_vs_fd(sum(log_(xp)), "xp", b, h, tol);
        check_grad_vs_fd(sum(sigmoid(x)), "x", b, h, tol);
        check_grad_vs_fd(dot(softmax(x), probe), "x", b, h, tol);
        check_grad_vs_fd(squared_norm(x), "x", b, h, tol);
        check_grad_vs_fd(sum(x), "x", b, h, tol);
        check_grad_vs_fd(mean(x), "x", b, h, tol);
        check_grad_vs_fd(sum(tanh_(x)), "x", b, h, tol);
    }
}

TEST_CASE("gradient: step and stop_gradient block adjoint flow") {
    Bindings b;
    b["x"] = Tensor({3}, {0.5, -0.25, 1.5});
    Expr x = param("x", {3});

    auto g = gradient(sum(step(x)), {"x"}, b);
    for (double v : g.entries.at("x").value.data) CHECK(v == 0.0);

    // d/dx [x * sg(x)] = sg(x), the detached factor is treated as constant
    auto g2 = gradient(sum(mul(x, stop_gradient(x))), {"x"}, b);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(g2.entries.at("x").value.data[i] == doctest::Approx(b["x"].data[i]));
}

TEST_CASE("second order: scalar examples") {
    // f(x) = x^3, f''(2) = 12
    Bindings b;
    b["x"] = Tensor::scalar(2.0);
    Expr x = param("x", {});
    Expr f = mul(mul(x, x), x);
    auto g1 = gradient_graph(f, {"x"});
    auto g2 = gradient(g1.at("x"), {"x"}, b);
    CHECK(g2.entries.at("x").value.scalar_value() == doctest::Approx(12.0));

    // outer(theta') = theta'^2 with theta' = theta - eta * 2 theta, theta=1, eta=0.1
    Bindings bt;
    bt["theta"] = Tensor::scalar(1.0);
    Expr theta = param("theta", {});
    Expr inner_loss = mul(theta, theta);
    auto inner = gradient(inner_loss, {"theta"}, bt);
    Expr theta_next = add(theta, scale(inner.entries.at("theta").graph, -0.1));
    Expr outer = mul(theta_next, theta_next);
    auto meta = second_order_gradient(outer, inner, {"theta"}, bt);
    CHECK(meta.at("theta").scalar_value() == doctest::Approx(1.28));
}

TEST_CASE("second order: detached inner gradient is rejected") {
    Bindings b;
    b["x"] = Tensor::scalar(2.0);
    Expr x = param("x", {});
    GradientMap detached;
    detached.graph_valued = false;
    detached.entries["x"] = {Expr(), Tensor::scalar(4.0)};
    CHECK_THROWS_AS(second_order_gradient(mul(x, x), detached, {"x"}, b), DetachedGradientError);
}

TEST_CASE("second order: meta-gradient through one inner step matches finite differences") {
    // two-layer network, inner CE-like loss over (w1, w2), outer loss after one
    // step depends on a weighting scalar alpha; FD over alpha with h = 1e-4
    StreamRng rng(13, Stream::kScratch);
    for (int inst = 0; inst < 10; ++inst) {
        Bindings b;
        b["w1"] = random_tensor({5, 3}, rng, -0.5, 0.5);
        b["w2"] = random_tensor({2, 5}, rng, -0.5, 0.5);
        b["alpha"] = random_tensor({4}, rng, -0.8, 0.8);
        Tensor xin = random_tensor({3}, rng);
        Tensor target = random_tensor({2}, rng);

        Expr w1 = param("w1", {5, 3});
        Expr w2 = param("w2", {2, 5});
        Expr alpha = param("alpha", {4});

        Expr hmid = tanh_(matvec(w1, constant(xin)));
        Expr out = matvec(w2, hmid);
        // alpha enters through a sigmoid weight on the inner loss
        Expr wgt = sigmoid(sum(alpha));
        Expr inner_loss = mul(wgt, squared_norm(sub(out, constant(target))));
        auto inner = gradient(inner_loss, {"w1", "w2"}, b);
        const double eta = 0.2;
        Expr w1n = add(w1, scale(inner.entries.at("w1").graph, -eta));
        Expr w2n = add(w2, scale(inner.entries.at("w2").graph, -eta));
        Expr outn = matvec(w2n, tanh_(matvec(w1n, constant(xin))));
        Expr outer = squared_norm(sub(outn, constant(target)));
        auto meta = second_order_gradient(outer, inner, {"alpha"}, b);

        Tensor fd = finite_diff_gradient(
            [&](const Tensor& a) {
                Bindings bb = b;
                bb["alpha"] = a;
                return evaluate(outer, bb).scalar_value();
            },
            b.at("alpha"), 1e-4);

        for (std::size_t i = 0; i < fd.data.size(); ++i) {
            INFO("instance ", inst, " coordinate ", i);
            CHECK(close_rel(meta.at("alpha").data[i], fd.data[i], 1e-4));
        }
    }
}

TEST_CASE("second order vs finite differences of the gradient") {
    StreamRng rng(21, Stream::kScratch);
    for (int inst = 0; inst < 20; ++inst) {
        Bindings b;
        b["x"] = random_tensor({3}, rng, -0.9, 0.9);
        Expr x = param("x", {3});
        Expr f = add(squared_norm(sigmoid(x)), sum(exp_(scale(x, 0.5))));
        auto g1 = gradient_graph(f, {"x"});
        // d/dx_j of (sum_i dF/dx_i): scalarize the gradient, differentiate again
        Expr gsum = sum(g1.at("x"));
        auto analytic = gradient(gsum, {"x"}, b);
        Tensor fd = finite_diff_gradient(
            [&](const Tensor& p) {
                Bindings bb = b;
                bb["x"] = p;
                auto g = gradient(f, {"x"}, bb);
                double s = 0.0;
                for (double v : g.entries.at("x").value.data) s += v;
                return s;
            },
            b.at("x"), 1e-4);
        for (std::size_t i = 0; i < fd.data.size(); ++i)
            CHECK(close_rel(analytic.entries.at("x").value.data[i], fd.data[i], 1e-4));
    }
}

TEST_CASE("finite_diff_gradient: quadratic and cubic probes") {
    auto square = [](const Tensor& t) { return t.data[0] * t.data[0]; };
    Tensor at3 = Tensor::scalar(3.0);
    CHECK(std::abs(finite_diff_gradient(square, at3, 1e-5).data[0] - 6.0) < 1e-6);

    auto cube = [](const Tensor& t) { return t.data[0] * t.data[0] * t.data[0]; };
    Tensor at2 = Tensor::scalar(2.0);
    CHECK(std::abs(finite_diff_gradient(cube, at2, 1e-4).data[0] - 12.0) < 1e-7);

    CHECK_THROWS_AS(finite_diff_gradient(square, at3, 0.0), Error);
}

TEST_CASE("finite_diff_gradient agrees with gradient() on a random MLP loss") {
    StreamRng rng(31, Stream::kScratch);
    Bindings b;
    b["w1"] = random_tensor({6, 4}, rng, -0.5, 0.5);
    b["w2"] = random_tensor({3, 6}, rng, -0.5, 0.5);
    Tensor xin = random_tensor({4}, rng);

    Expr w1 = param("w1", {6, 4});
    Expr w2 = param("w2", {3, 6});
    Expr out = matvec(w2, tanh_(matvec(w1, constant(xin))));
    Expr loss = squared_norm(out);

    for (const char* name : {"w1", "w2"}) {
        auto g = gradient(loss, {name}, b);
        Tensor fd = finite_diff_gradient(
            [&](const Tensor& p) {
                Bindings bb = b;
                bb[name] = p;
                return evaluate(loss, bb).scalar_value();
            },
            b.at(name), 1e-6);
        for (std::size_t i = 0; i < fd.data.size(); ++i)
            CHECK(close_rel(g.entries.at(name).value.data[i], fd.data[i], 1e-6));
    }
}

TEST_CASE("determinism: identical inputs give bitwise-identical outputs") {
    StreamRng rng(41, Stream::kScratch);
    Bindings b;
    b["w"] = random_tensor({4, 4}, rng);
    b["x"] = random_tensor({4}, rng);
    Expr w = param("w", {4, 4});
    Expr x = param("x", {4});
    Expr f = squared_norm(softmax(matvec(w, sigmoid(x))));

    Tensor v1 = evaluate(f, b);
    Tensor v2 = evaluate(f, b);
    CHECK(v1.data == v2.data);

    auto g1 = gradient(f, {"w", "x"}, b);
    auto g2 = gradient(f, {"w", "x"}, b);
    CHECK(g1.entries.at("w").value.data == g2.entries.at("w").value.data);
    CHECK(g1.entries.at("x").value.data == g2.entries.at("x").value.data);
}

TEST_CASE("compiled graph: rebinding reuses buffers and matches one-shot evaluation") {
    Expr x = param("x", {3});
    Expr f = sum(mul(sigmoid(x), x));
    CompiledGraph g({f});
    StreamRng rng(51, Stream::kScratch);
    for (int i = 0; i < 5; ++i) {
        Tensor xv = random_tensor({3}, rng);
        g.bind("x", xv);
        g.run();
        Bindings b;
        b["x"] = xv;
        CHECK(g.output(0).scalar_value() == evaluate(f, b).scalar_value());
    }
}
