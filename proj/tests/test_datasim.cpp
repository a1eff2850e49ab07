#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "trw/datasim.hpp"
#include "trw/errors.hpp"

using namespace trw;
using namespace trw::sim;

namespace {

// exact binomial central interval, used as the oracle for noisy counts
std::pair<std::int64_t, std::int64_t> binomial_central_interval(std::int64_t n, double p, double mass) {
    auto log_pmf = [&](std::int64_t k) {
        return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
               std::lgamma(static_cast<double>(n - k + 1)) + static_cast<double>(k) * std::log(p) +
               static_cast<double>(n - k) * std::log1p(-p);
    };
    const double tail = (1.0 - mass) / 2.0;
    double cdf = 0.0;
    std::int64_t lo = 0, hi = n;
    bool lo_set = false;
    for (std::int64_t k = 0; k <= n; ++k) {
        cdf += std::exp(log_pmf(k));
        if (!lo_set && cdf >= tail) {
            lo = k;
            lo_set = true;
        }
        if (cdf >= 1.0 - tail) {
            hi = k;
            break;
        }
    }
    return {lo, hi};
}

// nearest empirical-class-mean rule: the optimal linear classifier for
// isotropic same-variance clusters, trained on the dataset itself
double nearest_mean_accuracy(const OriginalDataset& train, const OriginalDataset& eval) {
    std::vector<std::vector<double>> mean(static_cast<std::size_t>(train.classes),
                                          std::vector<double>(static_cast<std::size_t>(train.input_dim), 0.0));
    std::vector<std::int64_t> count(static_cast<std::size_t>(train.classes), 0);
    for (const auto& s : train.samples) {
        for (std::size_t d = 0; d < s.features.size(); ++d)
            mean[static_cast<std::size_t>(s.label)][d] += s.features[d];
        count[static_cast<std::size_t>(s.label)]++;
    }
    for (std::size_t k = 0; k < mean.size(); ++k)
        for (auto& v : mean[k]) v /= static_cast<double>(count[k]);
    std::int64_t hits = 0;
    for (const auto& s : eval.samples) {
        std::int64_t best = 0;
        double best_d = squared_distance(s.features, mean[0]);
        for (std::size_t k = 1; k < mean.size(); ++k) {
            double d = squared_distance(s.features, mean[k]);
            if (d < best_d) {
                best_d = d;
                best = static_cast<std::int64_t>(k);
            }
        }
        hits += best == s.label ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(eval.size());
}

}  // namespace

TEST_CASE("config validation") {
    SimConfig cfg;
    cfg.validate();
    cfg.gamma = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.gamma = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.gamma = 0.0;
    cfg.validate();  // degenerate cases accepted
    cfg.gamma = 1.0;
    cfg.validate();
    cfg.input_dim = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("class means are mutually separated; extra mean sits at its offset") {
    SimConfig cfg;
    for (auto [d, c] : {std::pair<std::int64_t, std::int64_t>{16, 5}, {2, 7}, {4, 4}}) {
        cfg.input_dim = d;
        cfg.classes = c;
        auto means = class_means(cfg);
        REQUIRE(static_cast<std::int64_t>(means.size()) == c);
        for (std::size_t i = 0; i < means.size(); ++i)
            for (std::size_t j = i + 1; j < means.size(); ++j)
                CHECK(std::sqrt(squared_distance(means[i], means[j])) >= cfg.class_separation - 1e-9);
        auto extra = extra_class_mean(cfg);
        double nearest = 1e300;
        for (const auto& m : means) nearest = std::min(nearest, std::sqrt(squared_distance(extra, m)));
        CHECK(nearest == doctest::Approx(cfg.extra_class_offset).epsilon(0.25));
    }
}

TEST_CASE("make_original: counts, labels, determinism") {
    SimConfig cfg;
    cfg.classes = 2;
    cfg.n_per_class = 50;
    auto ds = make_original(cfg);
    CHECK(ds.size() == 100);
    std::map<std::int64_t, int> counts;
    for (const auto& s : ds.samples) counts[s.label]++;
    CHECK(counts[0] == 50);
    CHECK(counts[1] == 50);

    auto ds2 = make_original(cfg);
    REQUIRE(ds2.size() == ds.size());
    for (std::int64_t i = 0; i < ds.size(); ++i)
        CHECK(ds.samples[static_cast<std::size_t>(i)].features == ds2.samples[static_cast<std::size_t>(i)].features);
}

TEST_CASE("make_original: a trained linear rule separates well-separated clusters") {
    SimConfig cfg;
    cfg.input_dim = 2;
    cfg.classes = 3;
    cfg.n_per_class = 200;
    cfg.class_separation = 8.0;
    auto ds = make_original(cfg);
    auto held_out = make_test(cfg, 200);
    CHECK(nearest_mean_accuracy(ds, held_out) > 0.99);
}

TEST_CASE("augment: degenerate gammas and provenance") {
    SimConfig cfg;
    cfg.n_per_class = 20;
    cfg.gamma = 0.0;
    auto ds = make_original(cfg);
    auto pool0 = augment(ds, cfg);
    CHECK(pool0.size() == ds.size() * cfg.expansion);
    for (const auto& g : pool0.samples) CHECK(!g.hidden_noisy);

    cfg.gamma = 1.0;
    auto pool1 = augment(ds, cfg);
    for (const auto& g : pool1.samples) {
        CHECK(g.hidden_noisy);
        CHECK(g.hidden_true_class == cfg.classes);
    }

    // provenance is total: exactly m generated samples per original
    std::map<std::int64_t, std::int64_t> per_origin;
    for (const auto& g : pool1.samples) {
        REQUIRE(g.origin_index >= 0);
        REQUIRE(g.origin_index < ds.size());
        per_origin[g.origin_index]++;
    }
    CHECK(static_cast<std::int64_t>(per_origin.size()) == ds.size());
    for (auto& [_, m] : per_origin) CHECK(m == cfg.expansion);

    // hidden flag consistency
    for (const auto& g : pool0.samples) CHECK(g.hidden_noisy == (g.hidden_true_class == cfg.classes));
}

TEST_CASE("augment: noisy count falls in the central 99.9% binomial interval") {
    SimConfig cfg;
    cfg.classes = 5;
    cfg.n_per_class = 20;  // n = 100
    cfg.expansion = 5;     // n*m = 500
    cfg.gamma = 0.3;
    auto ds = make_original(cfg);
    auto pool = augment(ds, cfg);
    std::int64_t noisy = 0;
    for (const auto& g : pool.samples) noisy += g.hidden_noisy ? 1 : 0;
    auto [lo, hi] = binomial_central_interval(pool.size(), cfg.gamma, 0.999);
    CHECK(noisy >= lo);
    CHECK(noisy <= hi);
}

TEST_CASE("augment: empirical noisy fraction converges to gamma (n*m = 1e5)") {
    SimConfig cfg;
    cfg.classes = 5;
    cfg.n_per_class = 2000;  // n = 1e4
    cfg.expansion = 10;      // n*m = 1e5
    cfg.gamma = 0.3;
    auto ds = make_original(cfg);
    auto pool = augment(ds, cfg);
    std::int64_t noisy = 0;
    for (const auto& g : pool.samples) noisy += g.hidden_noisy ? 1 : 0;
    double frac = static_cast<double>(noisy) / static_cast<double>(pool.size());
    CHECK(std::abs(frac - cfg.gamma) < 0.01);
}

TEST_CASE("perturb: identity at sigma=0, chi concentration, determinism") {
    std::vector<double> x(1000);
    StreamRng fill(3, Stream::kScratch);
    for (auto& v : x) v = fill.next_uniform(-2.0, 2.0);

    auto same = perturb(x, 0.0, /*seed=*/7);
    CHECK(same == x);

    auto moved = perturb(x, 0.1, /*seed=*/7);
    double d = std::sqrt(squared_distance(moved, x) / static_cast<double>(x.size()));
    CHECK(d == doctest::Approx(0.1).epsilon(0.10));

    auto again = perturb(x, 0.1, /*seed=*/7);
    CHECK(again == moved);
}

TEST_CASE("sample_triplets: contract and two-class case") {
    SimConfig cfg;
    cfg.classes = 2;
    cfg.n_per_class = 10;
    auto ds = make_original(cfg);
    auto pool = augment(ds, cfg);

    std::vector<std::int64_t> batch;
    for (std::int64_t i = 0; i < 10; ++i) batch.push_back(i);
    auto triplets = sample_triplets(batch, pool, ds, /*seed=*/5);
    REQUIRE(triplets.size() == batch.size());
    for (const auto& t : triplets) {
        const auto& anchor = pool.samples[static_cast<std::size_t>(t.anchor_pool_index)];
        CHECK(t.positive_index == anchor.origin_index);
        auto pos_label = ds.samples[static_cast<std::size_t>(t.positive_index)].label;
        auto neg_label = ds.samples[static_cast<std::size_t>(t.negative_index)].label;
        CHECK(pos_label != neg_label);
        CHECK(neg_label == 1 - pos_label);  // c=2: only the other label
    }
}

TEST_CASE("sample_triplets: single-class originals rejected") {
    SimConfig cfg;
    cfg.classes = 2;
    cfg.n_per_class = 5;
    auto ds = make_original(cfg);
    OriginalDataset single;
    single.input_dim = ds.input_dim;
    single.classes = ds.classes;
    for (const auto& s : ds.samples)
        if (s.label == 0) single.samples.push_back(s);
    auto pool = augment(ds, cfg);
    CHECK_THROWS_AS(sample_triplets({0}, pool, single, 1), InsufficientClassesError);
}

TEST_CASE("sample_triplets: negatives are uniform over eligible originals") {
    // 2 classes; anchor class has 17 originals, the other class exactly 3
    SimConfig cfg;
    cfg.classes = 2;
    cfg.n_per_class = 3;
    auto small = make_original(cfg);
    OriginalDataset ds;
    ds.input_dim = small.input_dim;
    ds.classes = 2;
    ds.samples = small.samples;  // 3 per class
    // pad class 0 up to 17
    for (int i = 0; i < 14; ++i) {
        auto s = small.samples[0];
        s.features[0] += 0.01 * (i + 1);
        ds.samples.push_back(s);
    }
    SimConfig aug_cfg = cfg;
    aug_cfg.gamma = 0.0;
    auto pool = augment(ds, aug_cfg);

    // anchors generated from class-0 originals; 3 eligible negatives
    std::vector<std::int64_t> anchors;
    for (std::int64_t i = 0; i < pool.size(); ++i)
        if (ds.samples[static_cast<std::size_t>(pool.samples[static_cast<std::size_t>(i)].origin_index)].label == 0)
            anchors.push_back(i);
    REQUIRE(anchors.size() >= 1);

    std::map<std::int64_t, std::int64_t> counts;
    const std::int64_t draws = 100000;
    std::vector<std::int64_t> batch = {anchors[0]};
    for (std::int64_t it = 0; it < draws; ++it) {
        auto t = sample_triplets(batch, pool, ds, /*seed=*/9, static_cast<std::uint64_t>(it));
        counts[t[0].negative_index]++;
    }
    REQUIRE(counts.size() == 3);
    for (auto& [idx, cnt] : counts) {
        CHECK(ds.samples[static_cast<std::size_t>(idx)].label == 1);
        CHECK(std::abs(static_cast<double>(cnt) / draws - 1.0 / 3.0) < 0.01);
    }
}

TEST_CASE("triplet assumption rate: limits and desk configuration") {
    SimConfig cfg;
    cfg.n_per_class = 40;

    // sigma -> 0, gamma = 0: anchors coincide with their origins
    cfg.gamma = 0.0;
    cfg.perturb_sigma = 1e-9;
    auto ds = make_original(cfg);
    auto pool = augment(ds, cfg);
    CHECK(measure_triplet_assumption_rate(pool, ds) == doctest::Approx(1.0));

    // gamma = 1: anchors are independent of their origin; the strict-argmin
    // hits a uniformly assigned origin with probability 1/n
    cfg.gamma = 1.0;
    cfg.perturb_sigma = 0.5;
    cfg.expansion = 50;
    auto noisy_pool = augment(ds, cfg);
    double rate = measure_triplet_assumption_rate(noisy_pool, ds);
    double n = static_cast<double>(ds.size());
    double chance = 1.0 / n;
    double se = std::sqrt(chance * (1.0 - chance) / static_cast<double>(noisy_pool.size()));
    CHECK(std::abs(rate - chance) <= 5.0 * se + 1e-12);

    // the paper-style premise: most generated samples are closest to their origin
    SimConfig desk;
    desk.gamma = 0.1;
    desk.perturb_sigma = 0.3;
    desk.class_separation = 8.0;
    auto desk_ds = make_original(desk);
    auto desk_pool = augment(desk_ds, desk);
    CHECK(measure_triplet_assumption_rate(desk_pool, desk_ds) >= 0.9);
}
