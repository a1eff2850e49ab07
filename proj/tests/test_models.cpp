#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "trw/models.hpp"
#include "trw/datasim.hpp"
#include "trw/rng.hpp"

using namespace trw;
using namespace trw::model;

namespace {

bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

ClassifierParams zero_classifier(const ModelConfig& cfg) {
    ClassifierParams p;
    p.w1 = Tensor::zeros({cfg.hidden, cfg.input_dim});
    p.b1 = Tensor::zeros({cfg.hidden});
    p.w2 = Tensor::zeros({cfg.classes, cfg.hidden});
    p.b2 = Tensor::zeros({cfg.classes});
    return p;
}

WeightNetParams zero_weightnet(const ModelConfig& cfg) {
    WeightNetParams p;
    p.pairwise = cfg.weight_pairwise;
    p.ball_radius = cfg.ball_radius;
    p.wa = Tensor::zeros({cfg.weightnet_hidden, cfg.hidden});
    if (cfg.weight_pairwise) p.wo = Tensor::zeros({cfg.weightnet_hidden, cfg.hidden});
    p.b1 = Tensor::zeros({cfg.weightnet_hidden});
    p.v = Tensor::zeros({cfg.weightnet_hidden});
    p.b2 = Tensor::zeros({});
    return p;
}

std::vector<double> random_vec(std::int64_t n, StreamRng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.next_uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("classifier: zero parameters give zero logits and uniform probs") {
    ModelConfig cfg;
    auto theta = zero_classifier(cfg);
    StreamRng rng(1, Stream::kScratch);
    auto r = classifier_forward(random_vec(cfg.input_dim, rng), theta, cfg);
    for (double v : r.logits) CHECK(v == 0.0);
    for (double v : r.probs) CHECK(v == doctest::Approx(1.0 / static_cast<double>(cfg.classes)));
}

TEST_CASE("classifier: probs is a probability vector for 1000 random inputs") {
    ModelConfig cfg;
    StreamRng rng(2, Stream::kScratch);
    ClassifierEvaluator ev(cfg);
    for (int trial = 0; trial < 10; ++trial) {
        auto [theta, alpha] = init_params(cfg, 100 + static_cast<std::uint64_t>(trial));
        ev.set_params(theta);
        for (int i = 0; i < 100; ++i) {
            auto r = ev.forward(random_vec(cfg.input_dim, rng, -3.0, 3.0));
            double s = 0.0;
            for (double p : r.probs) {
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
                s += p;
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("classifier: argmax of probs is invariant to constant logit shifts") {
    ModelConfig cfg;
    StreamRng rng(3, Stream::kScratch);
    auto [theta, alpha] = init_params(cfg, 7);
    // shift the output bias by a constant: logits move by c, argmax must not
    auto x = random_vec(cfg.input_dim, rng);
    auto base = classifier_forward(x, theta, cfg);
    auto argmax = [](const std::vector<double>& v) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i] > v[best]) best = i;
        return best;
    };
    auto shifted = theta;
    for (auto& b : shifted.b2.data) b += 7.5;
    auto moved = classifier_forward(x, shifted, cfg);
    CHECK(argmax(base.probs) == argmax(moved.probs));
}

TEST_CASE("classifier: softmax-CE gradient wrt logits equals probs - onehot") {
    ModelConfig cfg;
    StreamRng rng(4, Stream::kScratch);
    for (int inst = 0; inst < 20; ++inst) {
        Tensor logits = Tensor::vector(random_vec(cfg.classes, rng, -2.0, 2.0));
        std::int64_t y = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(cfg.classes)));

        ad::Expr lg = ad::param("logits", {cfg.classes});
        ad::Expr probs = ad::softmax(lg);
        ad::Expr picked = ad::sum(ad::mul(probs, ad::constant(Tensor::onehot(y, cfg.classes))));
        ad::Expr ce = ad::neg(ad::log_(ad::emax(picked, ad::scalar(1e-12))));

        ad::Bindings b;
        b["logits"] = logits;
        auto g = ad::gradient(ce, {"logits"}, b);
        Tensor p = ad::evaluate(probs, b);
        for (std::int64_t k = 0; k < cfg.classes; ++k) {
            double expected = p.at(k) - (k == y ? 1.0 : 0.0);
            CHECK(close_rel(g.entries.at("logits").value.at(k), expected, 1e-10));
        }
    }
}

TEST_CASE("weightnet: zero parameters give weight 0.5; outputs strictly inside (0,1)") {
    ModelConfig cfg;
    auto alpha0 = zero_weightnet(cfg);
    StreamRng rng(5, Stream::kScratch);
    WeightNetEvaluator ev(cfg);
    ev.set_params(alpha0);
    CHECK(ev.forward(random_vec(cfg.hidden, rng), random_vec(cfg.hidden, rng)) == doctest::Approx(0.5));

    for (int trial = 0; trial < 10; ++trial) {
        auto [theta, alpha] = init_params(cfg, 200 + static_cast<std::uint64_t>(trial));
        ev.set_params(alpha);
        for (int i = 0; i < 1000; ++i) {
            double w = ev.forward(random_vec(cfg.hidden, rng, -5.0, 5.0), random_vec(cfg.hidden, rng, -5.0, 5.0));
            CHECK(w > 0.0);
            CHECK(w < 1.0);
        }
    }
}

TEST_CASE("weightnet: gradient wrt alpha matches finite differences") {
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.weightnet_hidden = 4;
    StreamRng rng(6, Stream::kScratch);
    auto [theta, alpha] = init_params(cfg, 11);
    auto ea = random_vec(cfg.hidden, rng);
    auto eo = random_vec(cfg.hidden, rng);

    auto exprs = weightnet_param_exprs(cfg);
    ad::Expr w = weightnet_graph(exprs, ad::constant(Tensor::vector(ea)), ad::constant(Tensor::vector(eo)));
    ad::Bindings b;
    bind_params(b, alpha);

    for (const auto& name : alpha.names()) {
        auto g = ad::gradient(w, {name}, b);
        Tensor fd = ad::finite_diff_gradient(
            [&](const Tensor& p) {
                ad::Bindings bb = b;
                bb[name] = p;
                return ad::evaluate(w, bb).scalar_value();
            },
            b.at(name), 1e-6);
        for (std::size_t i = 0; i < fd.data.size(); ++i)
            CHECK(close_rel(g.entries.at(name).value.data[i], fd.data[i], 1e-5));
    }
}

TEST_CASE("weightnet: unary form ignores the origin embedding") {
    ModelConfig cfg;
    cfg.weight_pairwise = false;
    auto [theta, alpha] = init_params(cfg, 13);
    StreamRng rng(7, Stream::kScratch);
    auto ea = random_vec(cfg.hidden, rng);
    WeightNetEvaluator ev(cfg);
    ev.set_params(alpha);
    double w1 = ev.forward(ea, random_vec(cfg.hidden, rng));
    double w2 = ev.forward(ea, random_vec(cfg.hidden, rng));
    CHECK(w1 == w2);
}

TEST_CASE("project_unit_ball: scaling, interior points, idempotence") {
    ModelConfig cfg;
    cfg.ball_radius = 1.0;
    auto alpha = zero_weightnet(cfg);
    alpha.ball_radius = 1.0;

    // norm 2 -> every entry halved
    for (auto& [name, t] : alpha.entries())
        for (auto& v : t->data) v = 0.0;
    alpha.v.data[0] = 2.0;
    auto projected = project_unit_ball(alpha);
    CHECK(projected.v.data[0] == doctest::Approx(1.0));
    CHECK(projected.norm() == doctest::Approx(1.0));

    // interior point unchanged
    alpha.v.data[0] = 0.5;
    auto same = project_unit_ball(alpha);
    CHECK(same.v.data == alpha.v.data);

    // idempotence (up to one rounding of the rescale factor)
    StreamRng rng(8, Stream::kScratch);
    for (auto& [name, t] : alpha.entries())
        for (auto& v : t->data) v = rng.next_uniform(-0.3, 0.3);
    auto p1 = project_unit_ball(alpha);
    auto p2 = project_unit_ball(p1);
    CHECK(p1.norm() <= p1.ball_radius * (1.0 + 1e-15));
    for (std::size_t i = 0; i < p1.entries().size(); ++i) {
        const auto& d1 = p1.entries()[i].second->data;
        const auto& d2 = p2.entries()[i].second->data;
        REQUIRE(d1.size() == d2.size());
        for (std::size_t k = 0; k < d1.size(); ++k)
            CHECK(d2[k] == doctest::Approx(d1[k]).epsilon(1e-14));
    }
}

TEST_CASE("init_params: determinism, ball constraint, chance-level accuracy") {
    ModelConfig cfg;
    auto [t1, a1] = init_params(cfg, 42);
    auto [t2, a2] = init_params(cfg, 42);
    CHECK(t1.w1.data == t2.w1.data);
    CHECK(t1.b2.data == t2.b2.data);
    CHECK(a1.wa.data == a2.wa.data);
    CHECK(a1.norm() <= cfg.ball_radius + 1e-12);

    // untrained classifier sits at chance on balanced data
    sim::SimConfig scfg;
    scfg.seed = 99;
    auto test_set = sim::make_test(scfg, 400);
    double acc_sum = 0.0;
    const int reps = 5;
    for (int r = 0; r < reps; ++r) {
        auto [theta, alpha] = init_params(cfg, 300 + static_cast<std::uint64_t>(r));
        ClassifierEvaluator ev(cfg);
        ev.set_params(theta);
        std::int64_t hits = 0;
        for (const auto& s : test_set.samples) {
            auto fr = ev.forward(s.features);
            std::size_t best = 0;
            for (std::size_t k = 1; k < fr.probs.size(); ++k)
                if (fr.probs[k] > fr.probs[best]) best = k;
            hits += static_cast<std::int64_t>(best) == s.label ? 1 : 0;
        }
        acc_sum += static_cast<double>(hits) / static_cast<double>(test_set.size());
    }
    CHECK(std::abs(acc_sum / reps - 1.0 / static_cast<double>(cfg.classes)) < 0.05);
}
