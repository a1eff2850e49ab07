// trainer.cpp
#include "trw/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "trw/errors.hpp"
#include "trw/rng.hpp"

namespace trw::train {

using namespace trw::ad;
using loss::WeightMode;

void TrainerConfig::validate() const {
    if (iterations < 0) throw ConfigError("trainer: iterations must be >= 0");
    if (eta_theta < 0.0 || eta_alpha < 0.0) throw ConfigError("trainer: learning rates must be >= 0");
    if (batch_original < 1 || batch_generated < 1) throw ConfigError("trainer: batch sizes must be >= 1");
    if (eval_every < 1) throw ConfigError("trainer: eval_every must be >= 1");
    if (meta_split_fraction < 0.0 || meta_split_fraction >= 1.0)
        throw ConfigError("trainer: meta_split_fraction must lie in [0, 1)");
    if (perturb_sigma < 0.0) throw ConfigError("trainer: perturb_sigma must be >= 0");
    model.validate();
}

// ---- BilevelStepper ---------------------------------------------------------------

BilevelStepper::BilevelStepper(const TrainerConfig& cfg, std::int64_t n_orig, std::int64_t n_gen,
                               std::int64_t n_meta, WeightMode weight_mode)
    : cfg_(cfg), weight_mode_(weight_mode), n_orig_(n_orig), n_gen_(n_gen), n_meta_(n_meta) {
    if (n_orig < 1) throw ConfigError("stepper: need at least one original per batch");
    if (n_meta < 1) throw ConfigError("stepper: need at least one meta sample per batch");

    const auto& mcfg = cfg.model;
    auto theta = model::classifier_param_exprs(mcfg);
    auto alpha = model::weightnet_param_exprs(mcfg);

    std::vector<Expr> xs, ys;
    for (std::int64_t i = 0; i < n_orig; ++i) {
        xs.push_back(input("xo" + std::to_string(i), {mcfg.input_dim}));
        ys.push_back(input("yo" + std::to_string(i), {mcfg.classes}));
    }
    std::vector<loss::GeneratedSlots> gen(static_cast<std::size_t>(n_gen));
    for (std::int64_t k = 0; k < n_gen; ++k) {
        auto& g = gen[static_cast<std::size_t>(k)];
        g.x_anchor = input("ga" + std::to_string(k), {mcfg.input_dim});
        g.x_positive = input("gp" + std::to_string(k), {mcfg.input_dim});
        g.x_negative = input("gn" + std::to_string(k), {mcfg.input_dim});
        g.x_perturbed = input("gq" + std::to_string(k), {mcfg.input_dim});
        g.y_onehot = input("gy" + std::to_string(k), {mcfg.classes});
    }

    auto inner = loss::build_inner_loss(theta, alpha, xs, ys, gen, cfg.loss, mcfg, weight_mode);

    auto theta_names = model::ClassifierParams::names();
    auto g_theta = gradient_graph(inner.total, theta_names);
    model::ClassifierExprs theta_next{
        add(theta.w1, scale(g_theta.at("theta.w1"), -cfg.eta_theta)),
        add(theta.b1, scale(g_theta.at("theta.b1"), -cfg.eta_theta)),
        add(theta.w2, scale(g_theta.at("theta.w2"), -cfg.eta_theta)),
        add(theta.b2, scale(g_theta.at("theta.b2"), -cfg.eta_theta)),
    };

    std::vector<Expr> xm, ym;
    for (std::int64_t i = 0; i < n_meta; ++i) {
        xm.push_back(input("xm" + std::to_string(i), {mcfg.input_dim}));
        ym.push_back(input("ym" + std::to_string(i), {mcfg.classes}));
    }
    Expr outer = loss::build_outer_loss(theta_next, xm, ym, cfg.loss.prob_floor);

    // alpha enters the outer loss only through the retained update graph;
    // absent entries (empty generated batch, constant weights) are exact zeros
    std::vector<std::string> alpha_names;
    {
        model::WeightNetParams probe;
        probe.pairwise = mcfg.weight_pairwise;
        alpha_names = probe.names();
    }
    auto g_alpha = gradient_graph(outer, alpha_names);
    has_alpha_ = !g_alpha.empty();

    std::vector<Expr> outputs = {inner.total, outer};
    out_theta_begin_ = outputs.size();
    outputs.push_back(theta_next.w1);
    outputs.push_back(theta_next.b1);
    outputs.push_back(theta_next.w2);
    outputs.push_back(theta_next.b2);
    out_alpha_grad_begin_ = outputs.size();
    if (has_alpha_) {
        auto alpha_exprs = std::vector<std::pair<std::string, Expr>>{
            {"alpha.wa", alpha.wa}, {"alpha.wo", alpha.wo}, {"alpha.b1", alpha.b1},
            {"alpha.v", alpha.v},   {"alpha.b2", alpha.b2}};
        for (const auto& name : alpha_names) {
            auto it = g_alpha.find(name);
            if (it != g_alpha.end()) {
                outputs.push_back(it->second);
            } else {
                for (const auto& [n2, e] : alpha_exprs)
                    if (n2 == name) outputs.push_back(constant(Tensor::zeros(e.shape())));
            }
        }
    }
    out_weights_begin_ = outputs.size();
    for (const auto& w : inner.weights) outputs.push_back(w);

    graph_ = std::make_unique<CompiledGraph>(std::move(outputs));

    auto slot_or_minus_one = [&](const std::string& name) {
        return graph_->has_leaf(name) ? graph_->leaf_slot(name) : -1;
    };
    for (std::int64_t i = 0; i < n_orig; ++i) {
        xo_.push_back(slot_or_minus_one("xo" + std::to_string(i)));
        yo_.push_back(slot_or_minus_one("yo" + std::to_string(i)));
    }
    for (std::int64_t k = 0; k < n_gen; ++k) {
        ga_.push_back(slot_or_minus_one("ga" + std::to_string(k)));
        gp_.push_back(slot_or_minus_one("gp" + std::to_string(k)));
        gn_.push_back(slot_or_minus_one("gn" + std::to_string(k)));
        gq_.push_back(slot_or_minus_one("gq" + std::to_string(k)));
        gy_.push_back(slot_or_minus_one("gy" + std::to_string(k)));
    }
    for (std::int64_t i = 0; i < n_meta; ++i) {
        xm_.push_back(slot_or_minus_one("xm" + std::to_string(i)));
        ym_.push_back(slot_or_minus_one("ym" + std::to_string(i)));
    }
    for (const auto& name : theta_names) theta_slots_.push_back(slot_or_minus_one(name));
    for (const auto& name : alpha_names) alpha_slots_.push_back(slot_or_minus_one(name));
}

BilevelStepper::StepResult BilevelStepper::step(const model::ClassifierParams& theta,
                                                const model::WeightNetParams& alpha,
                                                const Batch& batch) {
    if (static_cast<std::int64_t>(batch.x_orig.size()) != n_orig_ ||
        static_cast<std::int64_t>(batch.x_anchor.size()) != n_gen_ ||
        static_cast<std::int64_t>(batch.x_meta.size()) != n_meta_)
        throw ConfigError("stepper: batch sizes do not match the compiled graph");

    const std::size_t c = static_cast<std::size_t>(cfg_.model.classes);
    std::vector<double> onehot(c);
    auto bind_onehot = [&](int slot, std::int64_t label) {
        if (slot < 0) return;
        std::fill(onehot.begin(), onehot.end(), 0.0);
        onehot[static_cast<std::size_t>(label)] = 1.0;
        graph_->bind_slot(slot, onehot.data(), onehot.size());
    };
    auto bind_vec = [&](int slot, const std::vector<double>& v) {
        if (slot < 0) return;
        graph_->bind_slot(slot, v.data(), v.size());
    };

    for (std::size_t i = 0; i < batch.x_orig.size(); ++i) {
        bind_vec(xo_[i], *batch.x_orig[i]);
        bind_onehot(yo_[i], batch.y_orig[i]);
    }
    for (std::size_t k = 0; k < batch.x_anchor.size(); ++k) {
        bind_vec(ga_[k], *batch.x_anchor[k]);
        bind_vec(gp_[k], *batch.x_positive[k]);
        bind_vec(gn_[k], *batch.x_negative[k]);
        bind_vec(gq_[k], batch.x_perturbed[k]);
        bind_onehot(gy_[k], batch.y_strong[k]);
    }
    for (std::size_t i = 0; i < batch.x_meta.size(); ++i) {
        bind_vec(xm_[i], *batch.x_meta[i]);
        bind_onehot(ym_[i], batch.y_meta[i]);
    }

    auto theta_entries = theta.entries();
    for (std::size_t i = 0; i < theta_entries.size(); ++i)
        if (theta_slots_[i] >= 0)
            graph_->bind_slot(theta_slots_[i], theta_entries[i].second->data.data(),
                              theta_entries[i].second->data.size());
    auto alpha_entries = alpha.entries();
    for (std::size_t i = 0; i < alpha_entries.size(); ++i)
        if (alpha_slots_[i] >= 0)
            graph_->bind_slot(alpha_slots_[i], alpha_entries[i].second->data.data(),
                              alpha_entries[i].second->data.size());

    graph_->run();

    StepResult r;
    r.l_cls = graph_->output(0).scalar_value();
    r.l_weight_after = graph_->output(1).scalar_value();

    r.theta_next.w1 = graph_->output(out_theta_begin_ + 0);
    r.theta_next.b1 = graph_->output(out_theta_begin_ + 1);
    r.theta_next.w2 = graph_->output(out_theta_begin_ + 2);
    r.theta_next.b2 = graph_->output(out_theta_begin_ + 3);

    r.alpha_next = alpha;
    if (has_alpha_ && cfg_.eta_alpha > 0.0) {
        auto entries = r.alpha_next.entries();
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const Tensor& g = graph_->output(out_alpha_grad_begin_ + i);
            auto& data = entries[i].second->data;
            for (std::size_t j = 0; j < data.size(); ++j) data[j] -= cfg_.eta_alpha * g.data[j];
        }
        r.alpha_next = model::project_unit_ball(std::move(r.alpha_next));
    }
    double grad_sq = 0.0;
    for (std::size_t i = 0; i < alpha_entries.size(); ++i) {
        Tensor g = has_alpha_ ? graph_->output(out_alpha_grad_begin_ + i)
                              : Tensor::zeros(alpha_entries[i].second->shape);
        for (double v : g.data) grad_sq += v * v;
        r.alpha_grads.push_back(std::move(g));
    }
    r.alpha_grad_norm = std::sqrt(grad_sq);

    for (std::int64_t k = 0; k < n_gen_; ++k)
        r.weights.push_back(graph_->output(out_weights_begin_ + static_cast<std::size_t>(k)).scalar_value());
    return r;
}

model::ClassifierParams inner_step(BilevelStepper& stepper, const model::ClassifierParams& theta,
                                   const model::WeightNetParams& alpha,
                                   const BilevelStepper::Batch& batch) {
    return stepper.step(theta, alpha, batch).theta_next;
}

model::WeightNetParams outer_step(BilevelStepper& stepper, const model::ClassifierParams& theta,
                                  const model::WeightNetParams& alpha,
                                  const BilevelStepper::Batch& batch) {
    return stepper.step(theta, alpha, batch).alpha_next;
}

// ---- batching helpers ---------------------------------------------------------------

namespace {

// Floyd's algorithm: uniform k-subset of [0, n), deterministic under the rng
std::vector<std::int64_t> sample_indices(std::int64_t n, std::int64_t k, StreamRng rng) {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(k));
    std::unordered_set<std::int64_t> seen;
    for (std::int64_t j = n - k; j < n; ++j) {
        std::int64_t t = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(j) + 1));
        if (seen.count(t)) t = j;
        seen.insert(t);
        out.push_back(t);
    }
    return out;
}

std::vector<std::int64_t> iota_indices(std::int64_t n) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
    return out;
}

double balanced_mean(std::vector<double>& terms) {
    if (terms.empty()) return 0.0;
    return loss::balanced_sum(terms) * (1.0 / static_cast<double>(terms.size()));
}

struct Evaluators {
    model::ClassifierEvaluator classifier;
    model::WeightNetEvaluator weightnet;
    explicit Evaluators(const model::ModelConfig& mcfg) : classifier(mcfg), weightnet(mcfg) {}
};

double full_outer_loss(Evaluators& ev, const model::ClassifierParams& theta,
                       const sim::OriginalDataset& originals, double prob_floor) {
    ev.classifier.set_params(theta);
    std::vector<double> terms;
    terms.reserve(originals.samples.size());
    for (const auto& s : originals.samples)
        terms.push_back(loss::ce_loss(ev.classifier.forward(s.features).probs, s.label, prob_floor));
    return balanced_mean(terms);
}

EvalResult eval_with(Evaluators& ev, const model::ClassifierParams& theta,
                     const sim::OriginalDataset& ds, double prob_floor) {
    ev.classifier.set_params(theta);
    std::vector<double> terms;
    terms.reserve(ds.samples.size());
    std::int64_t hits = 0;
    for (const auto& s : ds.samples) {
        auto fr = ev.classifier.forward(s.features);
        std::size_t best = 0;
        for (std::size_t k = 1; k < fr.probs.size(); ++k)
            if (fr.probs[k] > fr.probs[best]) best = k;
        hits += static_cast<std::int64_t>(best) == s.label ? 1 : 0;
        terms.push_back(loss::ce_loss(fr.probs, s.label, prob_floor));
    }
    EvalResult r;
    r.accuracy = static_cast<double>(hits) / static_cast<double>(ds.samples.size());
    r.risk = balanced_mean(terms);
    return r;
}

std::vector<WeightRow> weight_table_with(Evaluators& ev, const model::ClassifierParams& theta,
                                         const model::WeightNetParams& alpha,
                                         const sim::OriginalDataset& originals,
                                         const sim::GeneratedPool& pool) {
    ev.classifier.set_params(theta);
    ev.weightnet.set_params(alpha);
    std::vector<std::vector<double>> origin_emb(originals.samples.size());
    for (std::size_t i = 0; i < originals.samples.size(); ++i)
        origin_emb[i] = ev.classifier.forward(originals.samples[i].features).embedding;
    std::vector<WeightRow> rows;
    rows.reserve(pool.samples.size());
    for (const auto& g : pool.samples) {
        auto emb = ev.classifier.forward(g.features).embedding;
        double w = ev.weightnet.forward(emb, origin_emb[static_cast<std::size_t>(g.origin_index)]);
        rows.push_back({g.origin_index, g.gen_index, w});
    }
    return rows;
}

struct RunSpec {
    const sim::OriginalDataset& originals;
    const sim::GeneratedPool* pool;  // nullptr or empty: supervised-only
    const sim::OriginalDataset& test_set;
    TrainerConfig cfg;
    WeightMode weight_mode;
    const PoolAnnotation* annotation;
    const ResumeState* resume;
    const TrainHooks* hooks;
};

TrainResult run_training(const RunSpec& spec) {
    const TrainerConfig& cfg = spec.cfg;
    cfg.validate();
    const auto& originals = spec.originals;
    if (originals.samples.empty()) throw ConfigError("train: empty original dataset");
    const bool have_pool = spec.pool != nullptr && !spec.pool->samples.empty();
    const sim::GeneratedPool empty_pool;
    const sim::GeneratedPool& pool = have_pool ? *spec.pool : empty_pool;

    // optional held-out meta pool for the outer objective
    std::vector<std::int64_t> train_idx = iota_indices(originals.size());
    std::vector<std::int64_t> meta_idx = train_idx;
    if (cfg.meta_split_fraction > 0.0) {
        auto shuffled = sample_indices(originals.size(), originals.size(),
                                       StreamRng(cfg.seed, Stream::kBatchMeta, ~std::uint64_t{0}));
        std::int64_t n_meta =
            std::max<std::int64_t>(1, static_cast<std::int64_t>(cfg.meta_split_fraction *
                                                                static_cast<double>(originals.size())));
        meta_idx.assign(shuffled.begin(), shuffled.begin() + n_meta);
        train_idx.assign(shuffled.begin() + n_meta, shuffled.end());
        if (train_idx.empty()) throw ConfigError("train: meta split leaves no training originals");
    }

    const std::int64_t nb_o = cfg.full_batch
                                  ? static_cast<std::int64_t>(train_idx.size())
                                  : std::min<std::int64_t>(cfg.batch_original,
                                                           static_cast<std::int64_t>(train_idx.size()));
    const std::int64_t nb_g =
        have_pool ? (cfg.full_batch ? pool.size() : std::min<std::int64_t>(cfg.batch_generated, pool.size()))
                  : 0;
    const std::int64_t nb_m = cfg.full_batch
                                  ? static_cast<std::int64_t>(meta_idx.size())
                                  : std::min<std::int64_t>(cfg.batch_original,
                                                           static_cast<std::int64_t>(meta_idx.size()));

    WeightMode mode = spec.weight_mode;
    if (cfg.force_weight_zero) mode = WeightMode::kZero;

    BilevelStepper stepper(cfg, nb_o, nb_g, nb_m, mode);
    Evaluators ev(cfg.model);

    model::ClassifierParams theta;
    model::WeightNetParams alpha;
    std::int64_t t0 = 0;
    TrainResult result;
    if (spec.resume != nullptr) {
        theta = spec.resume->theta;
        alpha = spec.resume->alpha;
        t0 = spec.resume->iteration;
        result.metrics = spec.resume->metrics_so_far;
    } else {
        std::tie(theta, alpha) = model::init_params(cfg.model, cfg.seed);
        result.metrics.initial_l_weight = full_outer_loss(ev, theta, originals, cfg.loss.prob_floor);
    }

    BilevelStepper::Batch batch;
    const bool track_weights = have_pool && mode == WeightMode::kNet;

    for (std::int64_t t = t0 + 1; t <= cfg.iterations; ++t) {
        auto o_idx = cfg.full_batch ? train_idx
                                    : [&] {
                                          auto picks = sample_indices(
                                              static_cast<std::int64_t>(train_idx.size()), nb_o,
                                              StreamRng(cfg.seed, Stream::kBatchOriginal,
                                                        static_cast<std::uint64_t>(t)));
                                          for (auto& p : picks) p = train_idx[static_cast<std::size_t>(p)];
                                          return picks;
                                      }();
        auto m_idx = cfg.full_batch ? meta_idx
                                    : [&] {
                                          auto picks = sample_indices(
                                              static_cast<std::int64_t>(meta_idx.size()), nb_m,
                                              StreamRng(cfg.seed, Stream::kBatchMeta,
                                                        static_cast<std::uint64_t>(t)));
                                          for (auto& p : picks) p = meta_idx[static_cast<std::size_t>(p)];
                                          return picks;
                                      }();

        batch.x_orig.clear();
        batch.y_orig.clear();
        for (auto i : o_idx) {
            batch.x_orig.push_back(&originals.samples[static_cast<std::size_t>(i)].features);
            batch.y_orig.push_back(originals.samples[static_cast<std::size_t>(i)].label);
        }
        batch.x_meta.clear();
        batch.y_meta.clear();
        for (auto i : m_idx) {
            batch.x_meta.push_back(&originals.samples[static_cast<std::size_t>(i)].features);
            batch.y_meta.push_back(originals.samples[static_cast<std::size_t>(i)].label);
        }

        batch.x_anchor.clear();
        batch.x_positive.clear();
        batch.x_negative.clear();
        batch.x_perturbed.clear();
        batch.y_strong.clear();
        if (nb_g > 0) {
            auto g_idx = cfg.full_batch
                             ? iota_indices(pool.size())
                             : sample_indices(pool.size(), nb_g,
                                              StreamRng(cfg.seed, Stream::kBatchGenerated,
                                                        static_cast<std::uint64_t>(t)));
            auto triplets = sim::sample_triplets(g_idx, pool, originals, cfg.seed,
                                                 static_cast<std::uint64_t>(t));
            for (std::size_t k = 0; k < g_idx.size(); ++k) {
                const auto& g = pool.samples[static_cast<std::size_t>(g_idx[k])];
                batch.x_anchor.push_back(&g.features);
                batch.x_positive.push_back(
                    &originals.samples[static_cast<std::size_t>(triplets[k].positive_index)].features);
                batch.x_negative.push_back(
                    &originals.samples[static_cast<std::size_t>(triplets[k].negative_index)].features);
                batch.x_perturbed.push_back(sim::perturb(g.features, cfg.perturb_sigma, cfg.seed,
                                                         static_cast<std::uint64_t>(t),
                                                         static_cast<std::uint64_t>(k)));
                batch.y_strong.push_back(
                    originals.samples[static_cast<std::size_t>(g.origin_index)].label);
            }
        }

        auto sr = stepper.step(theta, alpha, batch);

        if (!std::isfinite(sr.l_cls) || sr.l_cls > 1e6 || !sr.theta_next.all_finite() ||
            !sr.alpha_next.all_finite())
            throw DivergedRunError("training diverged", t);

        theta = std::move(sr.theta_next);
        alpha = std::move(sr.alpha_next);

        if (t % cfg.eval_every == 0) {
            MetricsRecord rec;
            rec.t = t;
            rec.l_cls = sr.l_cls;
            rec.l_weight = full_outer_loss(ev, theta, originals, cfg.loss.prob_floor);
            rec.train_accuracy = eval_with(ev, theta, originals, cfg.loss.prob_floor).accuracy;
            rec.test_accuracy = spec.test_set.samples.empty()
                                    ? 0.0
                                    : eval_with(ev, theta, spec.test_set, cfg.loss.prob_floor).accuracy;
            if (track_weights && spec.annotation != nullptr &&
                spec.annotation->noisy.size() == pool.samples.size()) {
                auto rows = weight_table_with(ev, theta, alpha, originals, pool);
                double sum_c = 0.0, sum_n = 0.0;
                std::int64_t n_c = 0, n_n = 0;
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (spec.annotation->noisy[i]) {
                        sum_n += rows[i].weight;
                        ++n_n;
                    } else {
                        sum_c += rows[i].weight;
                        ++n_c;
                    }
                }
                rec.mean_weight_clean = n_c > 0 ? sum_c / static_cast<double>(n_c) : 0.0;
                rec.mean_weight_noisy = n_n > 0 ? sum_n / static_cast<double>(n_n) : 0.0;
                rec.has_weight_stats = n_c > 0 && n_n > 0;
            }
            if (!result.metrics.records.empty() && result.metrics.records.back().t >= t)
                throw Error("train: non-increasing metrics iteration index");
            result.metrics.records.push_back(rec);
        }

        if (spec.hooks != nullptr && spec.hooks->on_checkpoint &&
            (t % cfg.checkpoint_every() == 0 || t == cfg.iterations))
            spec.hooks->on_checkpoint(t, theta, alpha, result.metrics);
    }

    if (track_weights) result.metrics.final_weights = weight_table_with(ev, theta, alpha, originals, pool);

    result.theta = std::move(theta);
    result.alpha = std::move(alpha);
    return result;
}

}  // namespace

// ---- entry points ---------------------------------------------------------------------

TrainResult train_trireweight(const sim::OriginalDataset& originals, const sim::GeneratedPool& pool,
                              const sim::OriginalDataset& test_set, const TrainerConfig& cfg,
                              const PoolAnnotation* annotation, const ResumeState* resume,
                              const TrainHooks* hooks) {
    RunSpec spec{originals, &pool, test_set, cfg, WeightMode::kNet, annotation, resume, hooks};
    return run_training(spec);
}

TrainResult train_baseline_sl(const sim::OriginalDataset& originals, const sim::OriginalDataset& test_set,
                              const TrainerConfig& cfg, const TrainHooks* hooks) {
    RunSpec spec{originals, nullptr, test_set, cfg, WeightMode::kNet, nullptr, nullptr, hooks};
    return run_training(spec);
}

TrainResult train_baseline_nsl(const sim::OriginalDataset& originals, const sim::GeneratedPool& pool,
                               const sim::OriginalDataset& test_set, const TrainerConfig& cfg,
                               const TrainHooks* hooks) {
    TrainerConfig nsl_cfg = cfg;
    nsl_cfg.loss.strong = true;
    nsl_cfg.loss.pairwise = false;
    nsl_cfg.loss.no_connection = false;
    RunSpec spec{originals, &pool, test_set, nsl_cfg, WeightMode::kOne, nullptr, nullptr, hooks};
    return run_training(spec);
}

EvalResult evaluate(const model::ClassifierParams& theta, const sim::OriginalDataset& dataset,
                    const model::ModelConfig& mcfg, double prob_floor) {
    if (dataset.samples.empty()) throw ConfigError("evaluate: empty dataset");
    Evaluators ev(mcfg);
    return eval_with(ev, theta, dataset, prob_floor);
}

std::string SupervisionCombo::name() const {
    std::string out;
    if (strong) out += "strong";
    if (pairwise) out += out.empty() ? "pairwise" : "+pairwise";
    if (no_connection) out += out.empty() ? "no_connection" : "+no_connection";
    return out.empty() ? "none" : out;
}

std::vector<SupervisionCombo> all_supervision_combos() {
    return {
        {true, false, false}, {false, true, false}, {true, true, false},  {false, false, true},
        {true, false, true},  {false, true, true},  {true, true, true},
    };
}

std::vector<AblationCell> run_ablation_matrix(const sim::OriginalDataset& originals,
                                              const sim::GeneratedPool& pool,
                                              const sim::OriginalDataset& test_set,
                                              const TrainerConfig& base_cfg,
                                              const std::vector<SupervisionCombo>& combos,
                                              const std::vector<std::uint64_t>& seeds, int jobs) {
    for (const auto& c : combos)
        if (!c.strong && !c.pairwise && !c.no_connection)
            throw ConfigError("ablation: every combo needs at least one flag");

    std::vector<AblationCell> cells(combos.size());
    for (std::size_t i = 0; i < combos.size(); ++i) {
        cells[i].combo = combos[i];
        cells[i].per_seed_accuracy.assign(seeds.size(), 0.0);
    }

    struct Task {
        std::size_t cell;
        std::size_t seed_pos;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < combos.size(); ++c)
        for (std::size_t s = 0; s < seeds.size(); ++s) tasks.push_back({c, s});

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            std::size_t k = next.fetch_add(1);
            if (k >= tasks.size()) return;
            const Task& task = tasks[k];
            TrainerConfig cfg = base_cfg;
            cfg.loss.strong = combos[task.cell].strong;
            cfg.loss.pairwise = combos[task.cell].pairwise;
            cfg.loss.no_connection = combos[task.cell].no_connection;
            cfg.seed = seeds[task.seed_pos];
            try {
                auto r = train_trireweight(originals, pool, test_set, cfg);
                double acc = evaluate(r.theta, test_set, cfg.model, cfg.loss.prob_floor).accuracy;
                std::lock_guard<std::mutex> lk(mu);
                cells[task.cell].per_seed_accuracy[task.seed_pos] = acc;
            } catch (const Error& e) {
                std::lock_guard<std::mutex> lk(mu);
                cells[task.cell].failed = true;
                cells[task.cell].error = e.what();
            }
        }
    };
    std::vector<std::thread> pool_threads;
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    for (int i = 0; i < n_threads; ++i) pool_threads.emplace_back(worker);
    for (auto& th : pool_threads) th.join();

    for (auto& cell : cells) {
        double s = 0.0;
        for (double a : cell.per_seed_accuracy) s += a;
        cell.mean_accuracy = s / static_cast<double>(cell.per_seed_accuracy.size());
        double var = 0.0;
        for (double a : cell.per_seed_accuracy) var += (a - cell.mean_accuracy) * (a - cell.mean_accuracy);
        cell.sd_accuracy = cell.per_seed_accuracy.size() > 1
                               ? std::sqrt(var / static_cast<double>(cell.per_seed_accuracy.size() - 1))
                               : 0.0;
    }
    return cells;
}

std::vector<WeightRow> weight_table(const model::ClassifierParams& theta,
                                    const model::WeightNetParams& alpha,
                                    const sim::OriginalDataset& originals, const sim::GeneratedPool& pool,
                                    const model::ModelConfig& mcfg) {
    Evaluators ev(mcfg);
    return weight_table_with(ev, theta, alpha, originals, pool);
}

}  // namespace trw::train
