// exp.cpp — scratch experiment driver for tuning desk defaults (dev only).
#include <chrono>
#include <cstdio>
#include <cstring>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "trw/trainer.hpp"

using namespace trw;

namespace {

struct DeskSetup {
    sim::SimConfig scfg;
    train::TrainerConfig cfg;
};

DeskSetup desk(double gamma, std::uint64_t data_seed) {
    DeskSetup d;
    d.scfg.gamma = gamma;
    d.scfg.seed = data_seed;
    if (const char* gs = std::getenv("GEN_SIGMA")) d.scfg.perturb_sigma = std::atof(gs);
    if (const char* se = std::getenv("SIGMA_EXTRA")) d.scfg.extra_class_sigma = std::atof(se);
    if (const char* of2 = std::getenv("OFFSET")) d.scfg.extra_class_offset = std::atof(of2);
    if (const char* np = std::getenv("NPC")) d.scfg.n_per_class = std::atoll(np);
    d.cfg.model.input_dim = d.scfg.input_dim;
    d.cfg.model.classes = d.scfg.classes;

    return d;
}

double auc_clean_over_noisy(const std::vector<train::WeightRow>& rows,
                            const std::vector<bool>& noisy) {
    double wins = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (noisy[i]) continue;
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (!noisy[j]) continue;
            ++pairs;
            if (rows[i].weight > rows[j].weight)
                wins += 1.0;
            else if (rows[i].weight == rows[j].weight)
                wins += 0.5;
        }
    }
    return pairs ? wins / static_cast<double>(pairs) : 0.5;
}

void headline(double gamma, int n_seeds, std::int64_t T) {
    std::printf("== headline gamma=%.2f T=%lld ==\n", gamma, static_cast<long long>(T));
    int ok_sl = 0, ok_nsl = 0, ok_test = 0, nsl_worse_sl = 0;
    for (int s = 0; s < n_seeds; ++s) {
        auto d = desk(gamma, 1000 + static_cast<std::uint64_t>(s));
        d.cfg.seed = 10 + static_cast<std::uint64_t>(s);
        d.cfg.iterations = T;
        auto originals = sim::make_original(d.scfg);
        auto pool = sim::augment(originals, d.scfg);
        auto test = sim::make_test(d.scfg, 200);

        auto t0 = std::chrono::steady_clock::now();
        auto tri = train::train_trireweight(originals, pool, test, d.cfg);
        auto t1 = std::chrono::steady_clock::now();
        auto sl = train::train_baseline_sl(originals, test, d.cfg);
        auto nsl = train::train_baseline_nsl(originals, pool, test, d.cfg);

        auto risk = [&](const model::ClassifierParams& th) {
            return train::evaluate(th, originals, d.cfg.model, d.cfg.loss.prob_floor).risk;
        };
        auto acc = [&](const model::ClassifierParams& th) {
            return train::evaluate(th, test, d.cfg.model, d.cfg.loss.prob_floor).accuracy;
        };
        double r_tri = risk(tri.theta), r_sl = risk(sl.theta), r_nsl = risk(nsl.theta);
        double a_tri = acc(tri.theta), a_sl = acc(sl.theta), a_nsl = acc(nsl.theta);

        std::vector<bool> noisy;
        for (const auto& g : pool.samples) noisy.push_back(g.hidden_noisy);
        double auc = auc_clean_over_noisy(tri.metrics.final_weights, noisy);

        double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        std::printf(
            "seed %d: risk tri=%.5f sl=%.5f nsl=%.5f | acc tri=%.3f sl=%.3f nsl=%.3f | auc=%.3f | %.0f ms\n",
            s, r_tri, r_sl, r_nsl, a_tri, a_sl, a_nsl, auc, ms);
        ok_sl += r_tri <= r_sl + 1e-3;
        ok_nsl += r_tri <= r_nsl + 1e-3;
        ok_test += a_tri > a_sl;
        nsl_worse_sl += a_nsl < a_sl;
    }
    std::printf("risk<=SL: %d/%d  risk<=NSL: %d/%d  acc>SL: %d/%d  nsl<sl: %d/%d\n\n", ok_sl, n_seeds,
                ok_nsl, n_seeds, ok_test, n_seeds, nsl_worse_sl, n_seeds);
}

void monotone(double gamma) {
    std::printf("== theorem 4.5 full batch ==\n");
    auto d = desk(gamma, 2000);
    d.cfg.iterations = 500;
    d.cfg.eta_theta = 0.01;
    d.cfg.full_batch = true;
    d.cfg.eval_every = 1;
    auto originals = sim::make_original(d.scfg);
    auto pool = sim::augment(originals, d.scfg);
    auto test = sim::make_test(d.scfg, 50);
    auto t0 = std::chrono::steady_clock::now();
    auto r = train::train_trireweight(originals, pool, test, d.cfg);
    auto t1 = std::chrono::steady_clock::now();
    int violations = 0;
    double prev = r.metrics.initial_l_weight;
    double worst = 0.0;
    for (const auto& rec : r.metrics.records) {
        double delta = rec.l_weight - prev;
        if (delta > 1e-9) {
            ++violations;
            worst = std::max(worst, delta);
        }
        prev = rec.l_weight;
    }
    std::printf("full-batch: %d violations, worst delta %.3e, final %.5f vs initial %.5f (%.1f s)\n",
                violations, worst, r.metrics.records.back().l_weight, r.metrics.initial_l_weight,
                std::chrono::duration<double>(t1 - t0).count());

    // stochastic relaxed
    auto d2 = desk(gamma, 2000);
    d2.cfg.iterations = 2000;
    d2.cfg.eval_every = 1;
    if (const char* bo = std::getenv("BATCH_O")) d2.cfg.batch_original = std::atoll(bo);
    if (const char* bg = std::getenv("BATCH_G")) d2.cfg.batch_generated = std::atoll(bg);
    if (const char* et = std::getenv("ETA_T")) d2.cfg.eta_theta = std::atof(et);
    auto r2 = train::train_trireweight(originals, pool, test, d2.cfg);
    int nonincreasing = 0;
    prev = r2.metrics.initial_l_weight;
    for (const auto& rec : r2.metrics.records) {
        if (rec.l_weight <= prev + 1e-9) ++nonincreasing;
        prev = rec.l_weight;
    }
    std::printf("stochastic: %.1f%% nonincreasing, final %.5f vs initial %.5f\n\n",
                100.0 * nonincreasing / static_cast<double>(r2.metrics.records.size()),
                r2.metrics.records.back().l_weight, r2.metrics.initial_l_weight);
}

void ablation(double gamma, int n_seeds, std::int64_t T) {
    std::printf("== ablation gamma=%.2f T=%lld ==\n", gamma, static_cast<long long>(T));
    auto d = desk(gamma, 3000);
    d.cfg.iterations = T;
    if (const char* bt = std::getenv("BETA")) d.cfg.loss.beta = std::atof(bt);
    auto originals = sim::make_original(d.scfg);
    auto pool = sim::augment(originals, d.scfg);
    auto test = sim::make_test(d.scfg, 200);
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < n_seeds; ++s) seeds.push_back(50 + static_cast<std::uint64_t>(s));
    auto t0 = std::chrono::steady_clock::now();
    auto cells = train::run_ablation_matrix(originals, pool, test, d.cfg,
                                            train::all_supervision_combos(), seeds, 2);
    auto t1 = std::chrono::steady_clock::now();
    for (const auto& c : cells)
        std::printf("%-32s %.4f +- %.4f %s\n", c.combo.name().c_str(), c.mean_accuracy, c.sd_accuracy,
                    c.failed ? "FAILED" : "");
    std::printf("(%.1f s)\n\n", std::chrono::duration<double>(t1 - t0).count());
}

void quintiles(double gamma, std::int64_t T) {
    std::printf("== weight quintiles gamma=%.2f ==\n", gamma);
    auto d = desk(gamma, 1000);
    d.cfg.iterations = T;
    d.cfg.seed = 10;
    auto originals = sim::make_original(d.scfg);
    auto pool = sim::augment(originals, d.scfg);
    auto test = sim::make_test(d.scfg, 50);
    auto r = train::train_trireweight(originals, pool, test, d.cfg);
    std::vector<bool> noisy;
    for (const auto& g : pool.samples) noisy.push_back(g.hidden_noisy);
    auto rows = r.metrics.final_weights;
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return rows[a].weight < rows[b].weight; });
    for (int q = 0; q < 5; ++q) {
        std::size_t lo = order.size() * q / 5, hi = order.size() * (q + 1) / 5;
        double clean = 0.0;
        for (std::size_t k = lo; k < hi; ++k) clean += noisy[order[k]] ? 0.0 : 1.0;
        std::printf("quintile %d: clean %.3f (w in [%.3f, %.3f])\n", q,
                    clean / static_cast<double>(hi - lo), rows[order[lo]].weight,
                    rows[order[hi - 1]].weight);
    }
    std::printf("\n");
}

void gamma_zero(std::int64_t T) {
    std::printf("== gamma 0: mean weight ==\n");
    auto d = desk(0.0, 1000);
    d.cfg.iterations = T;
    auto originals = sim::make_original(d.scfg);
    auto pool = sim::augment(originals, d.scfg);
    auto test = sim::make_test(d.scfg, 50);
    auto r = train::train_trireweight(originals, pool, test, d.cfg);
    double mean = 0.0;
    for (const auto& w : r.metrics.final_weights) mean += w.weight;
    std::printf("mean weight %.4f\n\n", mean / static_cast<double>(r.metrics.final_weights.size()));
}

void trend(std::int64_t T) {
    std::printf("== generalization trend ==\n");
    std::vector<std::int64_t> ns = {50, 100, 200, 400, 800};
    const std::int64_t n_ref = 3200;
    const int n_seeds = 5;
    auto risk_for = [&](std::int64_t n_total, std::uint64_t seed) {
        auto d = desk(0.3, 7000 + seed);
        d.scfg.n_per_class = n_total / d.scfg.classes;
        d.cfg.iterations = T;
        d.cfg.seed = seed;
        auto originals = sim::make_original(d.scfg);
        auto pool = sim::augment(originals, d.scfg);
        sim::SimConfig test_cfg = d.scfg;
        test_cfg.seed = 424242;  // one shared big test set
        auto test = sim::make_test(test_cfg, 400);
        auto r = train::train_trireweight(originals, pool, test, d.cfg);
        return train::evaluate(r.theta, test, d.cfg.model, d.cfg.loss.prob_floor).risk;
    };
    double ref = 0.0;
    for (int s = 0; s < 2; ++s) ref += risk_for(n_ref, static_cast<std::uint64_t>(s));
    ref /= 2.0;
    std::printf("reference risk (n=%lld): %.5f\n", static_cast<long long>(n_ref), ref);
    for (auto n : ns) {
        double mean = 0.0;
        for (int s = 0; s < n_seeds; ++s) mean += risk_for(n, static_cast<std::uint64_t>(s));
        mean /= n_seeds;
        std::printf("n=%4lld risk=%.5f gap=%.5f\n", static_cast<long long>(n), mean, mean - ref);
    }
    std::printf("\n");
}

void sweep(std::int64_t T, double sep, double eta_a, double radius, int n_seeds, double gamma,
           double off, double margin) {
    std::printf("== sweep T=%lld sep=%.1f eta_a=%.3f radius=%.0f gamma=%.2f off=%.1f margin=%.2f ==\n",
                static_cast<long long>(T), sep, eta_a, radius, gamma, off, margin);
    int ok_sl = 0, ok_nsl = 0, acc_gt_sl = 0;
    double mean_auc = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
        auto d = desk(gamma, 1000 + static_cast<std::uint64_t>(s));
        d.scfg.class_separation = sep;
        d.scfg.extra_class_offset = off;
        d.cfg.seed = 10 + static_cast<std::uint64_t>(s);
        d.cfg.iterations = T;
        d.cfg.eta_alpha = eta_a;
        d.cfg.model.ball_radius = radius;
        d.cfg.loss.margin = margin;
        if (const char* ts = std::getenv("TRIPLET_SPACE"); ts && std::string(ts) == "probs")
            d.cfg.model.triplet_space = model::TripletSpace::kProbs;
        if (const char* ps = std::getenv("PERT_SIGMA")) d.cfg.perturb_sigma = std::atof(ps);
        if (const char* bt = std::getenv("BETA")) d.cfg.loss.beta = std::atof(bt);
        auto originals = sim::make_original(d.scfg);
        auto pool = sim::augment(originals, d.scfg);
        auto test = sim::make_test(d.scfg, 800);
        auto tri = train::train_trireweight(originals, pool, test, d.cfg);
        auto sl = train::train_baseline_sl(originals, test, d.cfg);
        auto nsl = train::train_baseline_nsl(originals, pool, test, d.cfg);
        auto risk = [&](const model::ClassifierParams& th) {
            return train::evaluate(th, originals, d.cfg.model, d.cfg.loss.prob_floor).risk;
        };
        auto acc = [&](const model::ClassifierParams& th) {
            return train::evaluate(th, test, d.cfg.model, d.cfg.loss.prob_floor).accuracy;
        };
        std::vector<bool> noisy;
        for (const auto& g : pool.samples) noisy.push_back(g.hidden_noisy);
        double auc = auc_clean_over_noisy(tri.metrics.final_weights, noisy);
        mean_auc += auc;
        double r_tri = risk(tri.theta), r_sl = risk(sl.theta), r_nsl = risk(nsl.theta);
        ok_sl += r_tri <= r_sl + 1e-3;
        ok_nsl += r_tri <= r_nsl + 1e-3;
        acc_gt_sl += acc(tri.theta) > acc(sl.theta);
        double wc = 0, wn = 0;
        int nc = 0, nn = 0;
        for (std::size_t i = 0; i < noisy.size(); ++i) {
            if (noisy[i]) { wn += tri.metrics.final_weights[i].weight; ++nn; }
            else { wc += tri.metrics.final_weights[i].weight; ++nc; }
        }
        std::printf(
            "  s%d risk tri/sl/nsl %.4f/%.4f/%.4f acc %.3f/%.3f/%.3f auc %.3f w %.3f/%.3f\n", s,
            r_tri, r_sl, r_nsl, acc(tri.theta), acc(sl.theta), acc(nsl.theta), auc,
            nc ? wc / nc : 0.0, nn ? wn / nn : 0.0);
    }
    std::printf("ok_sl %d/%d ok_nsl %d/%d acc>sl %d/%d mean auc %.3f\n\n", ok_sl, n_seeds, ok_nsl,
                n_seeds, acc_gt_sl, n_seeds, mean_auc / n_seeds);
}

void t43(std::int64_t T, double eta_t, double eta_a, double sep, double margin, int n_seeds) {
    std::printf("== t43 full-batch T=%lld eta_t=%.2f eta_a=%.2f sep=%.1f margin=%.2f ==\n",
                static_cast<long long>(T), eta_t, eta_a, sep, margin);
    int ok_sl = 0, ok_nsl = 0;
    double mean_auc = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
        auto d = desk(0.3, 1000 + static_cast<std::uint64_t>(s));
        d.scfg.class_separation = sep;
        if (const char* of = std::getenv("OFFSET")) d.scfg.extra_class_offset = std::atof(of);
        d.cfg.seed = 10 + static_cast<std::uint64_t>(s);
        d.cfg.iterations = T;
        d.cfg.eta_theta = eta_t;
        d.cfg.eta_alpha = eta_a;
        d.cfg.loss.margin = margin;
        d.cfg.full_batch = true;
        d.cfg.eval_every = T;
        if (const char* ps = std::getenv("PERT_SIGMA")) d.cfg.perturb_sigma = std::atof(ps);
        if (const char* bt = std::getenv("BETA")) d.cfg.loss.beta = std::atof(bt);
        auto originals = sim::make_original(d.scfg);
        auto pool = sim::augment(originals, d.scfg);
        auto test = sim::make_test(d.scfg, 200);
        auto t0 = std::chrono::steady_clock::now();
        auto tri = train::train_trireweight(originals, pool, test, d.cfg);
        auto t1 = std::chrono::steady_clock::now();
        auto sl = train::train_baseline_sl(originals, test, d.cfg);
        auto nsl = train::train_baseline_nsl(originals, pool, test, d.cfg);
        auto risk = [&](const model::ClassifierParams& th) {
            return train::evaluate(th, originals, d.cfg.model, d.cfg.loss.prob_floor).risk;
        };
        std::vector<bool> noisy;
        for (const auto& g : pool.samples) noisy.push_back(g.hidden_noisy);
        double auc = auc_clean_over_noisy(tri.metrics.final_weights, noisy);
        mean_auc += auc;
        double r_tri = risk(tri.theta), r_sl = risk(sl.theta), r_nsl = risk(nsl.theta);
        ok_sl += r_tri <= r_sl + 1e-3;
        ok_nsl += r_tri <= r_nsl + 1e-3;
        double wc = 0, wn = 0; int nc = 0, nn = 0;
        for (std::size_t i = 0; i < noisy.size(); ++i) {
            if (noisy[i]) { wn += tri.metrics.final_weights[i].weight; ++nn; }
            else { wc += tri.metrics.final_weights[i].weight; ++nc; }
        }
        std::printf("  s%d risk tri/sl/nsl %.5f/%.5f/%.5f auc %.3f w %.3f/%.3f (%.0f s/run)\n", s,
                    r_tri, r_sl, r_nsl, auc, wc / nc, wn / nn,
                    std::chrono::duration<double>(t1 - t0).count());
    }
    std::printf("ok_sl %d/%d ok_nsl %d/%d mean auc %.3f\n\n", ok_sl, n_seeds, ok_nsl, n_seeds,
                mean_auc / n_seeds);
}

}  // namespace

int main(int argc, char** argv) {
    std::string what = argc > 1 ? argv[1] : "headline";
    std::int64_t T = argc > 2 ? std::atoll(argv[2]) : 2000;
    if (what == "headline") headline(0.3, 5, T);
    if (what == "headline0") headline(0.0, 5, T);
    if (what == "headline5") headline(0.5, 5, T);
    if (what == "monotone") monotone(0.3);
    if (what == "ablation") ablation(0.3, argc > 3 ? std::atoi(argv[3]) : 3, T);
    if (what == "quintiles") quintiles(0.3, T);
    if (what == "gamma0") gamma_zero(T);
    if (what == "trend") trend(T);
    if (what == "t43") {
        double eta_t = argc > 3 ? std::atof(argv[3]) : 0.2;
        double eta_a = argc > 4 ? std::atof(argv[4]) : 2.0;
        double sep = argc > 5 ? std::atof(argv[5]) : 4.0;
        double margin = argc > 6 ? std::atof(argv[6]) : 1.0;
        int seeds = argc > 7 ? std::atoi(argv[7]) : 2;
        t43(T, eta_t, eta_a, sep, margin, seeds);
    }
    if (what == "sweep") {
        double sep = argc > 3 ? std::atof(argv[3]) : 6.0;
        double eta_a = argc > 4 ? std::atof(argv[4]) : 0.01;
        double radius = argc > 5 ? std::atof(argv[5]) : 10.0;
        int seeds = argc > 6 ? std::atoi(argv[6]) : 3;
        double gamma = argc > 7 ? std::atof(argv[7]) : 0.3;
        double off = argc > 8 ? std::atof(argv[8]) : 6.0;
        double margin = argc > 9 ? std::atof(argv[9]) : 0.2;
        sweep(T, sep, eta_a, radius, seeds, gamma, off, margin);
    }
    return 0;
}
