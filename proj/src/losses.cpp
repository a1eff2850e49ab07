// losses.cpp
#include "trw/losses.hpp"

#include <cmath>

#include "trw/errors.hpp"

namespace trw::loss {

using namespace trw::ad;

void LossConfig::validate(bool generated_present) const {
    if (beta < 0.0 || beta > 1.0) throw ConfigError("loss: beta must lie in [0, 1]");
    if (margin <= 0.0) throw ConfigError("loss: margin must be > 0");
    if (prob_floor <= 0.0 || prob_floor > 1e-3) throw ConfigError("loss: prob_floor must lie in (0, 1e-3]");
    if (generated_present && !strong && !pairwise && !no_connection)
        throw ConfigError("loss: generated data present but every supervision flag is off");
}

double LossConfig::loss_bound() const { return -std::log(prob_floor); }

Expr ce_graph(Expr probs, Expr onehot, double prob_floor) {
    Expr picked = sum(mul(std::move(probs), std::move(onehot)));
    return neg(log_(emax(picked, scalar(prob_floor))));
}

Expr distance_graph(Expr a, Expr b, double eps) {
    return sqrt_eps(squared_norm(sub(std::move(a), std::move(b))), eps);
}

Expr triplet_graph(Expr anchor, Expr positive, Expr negative, double margin, double eps) {
    Expr d_pos = distance_graph(anchor, std::move(positive), eps);
    Expr d_neg = distance_graph(std::move(anchor), std::move(negative), eps);
    return emax(add(sub(d_pos, d_neg), scalar(margin)), scalar(0.0));
}

Expr consistency_graph(Expr out_perturbed, Expr out_clean) {
    return squared_norm(sub(std::move(out_perturbed), std::move(out_clean)));
}

Expr batch_mean(const std::vector<Expr>& terms) {
    if (terms.empty()) return scalar(0.0);
    return mul(sum_tree(terms), scalar(1.0 / static_cast<double>(terms.size())));
}

InnerLossGraph build_inner_loss(const model::ClassifierExprs& theta,
                                const model::WeightNetExprs& alpha,
                                std::span<const Expr> x_originals,
                                std::span<const Expr> y_original_onehots,
                                std::span<const GeneratedSlots> generated,
                                const LossConfig& lcfg, const model::ModelConfig& mcfg,
                                WeightMode weight_mode) {
    lcfg.validate(!generated.empty());

    std::vector<Expr> ce_terms;
    ce_terms.reserve(x_originals.size());
    for (std::size_t i = 0; i < x_originals.size(); ++i) {
        auto nodes = model::classifier_graph(theta, x_originals[i]);
        ce_terms.push_back(ce_graph(nodes.probs, y_original_onehots[i], lcfg.prob_floor));
    }

    InnerLossGraph out;
    std::vector<Expr> gen_terms;
    gen_terms.reserve(generated.size());
    for (const auto& g : generated) {
        auto anchor = model::classifier_graph(theta, g.x_anchor);
        auto positive = model::classifier_graph(theta, g.x_positive);

        Expr weight;
        if (weight_mode == WeightMode::kZero) {
            weight = scalar(0.0);
        } else if (weight_mode == WeightMode::kOne) {
            weight = scalar(1.0);
        } else {
            // embeddings are detached here: the weight is a coefficient for
            // the theta update, a function of alpha (and data) only
            weight = model::weightnet_graph(alpha, stop_gradient(anchor.embedding),
                                            stop_gradient(positive.embedding));
        }
        out.weights.push_back(weight);

        std::vector<Expr> parts;
        if (lcfg.pairwise) {
            auto negative = model::classifier_graph(theta, g.x_negative);
            const bool probs_space = mcfg.triplet_space == model::TripletSpace::kProbs;
            Expr phi = triplet_graph(probs_space ? anchor.probs : anchor.embedding,
                                     probs_space ? positive.probs : positive.embedding,
                                     probs_space ? negative.probs : negative.embedding,
                                     lcfg.margin, lcfg.distance_eps);
            parts.push_back(scale(phi, lcfg.beta));
        }
        if (lcfg.no_connection) {
            auto perturbed = model::classifier_graph(theta, g.x_perturbed);
            const bool logit_space = mcfg.consistency_space == model::ConsistencySpace::kLogits;
            Expr omega = consistency_graph(logit_space ? perturbed.logits : perturbed.probs,
                                           logit_space ? anchor.logits : anchor.probs);
            parts.push_back(scale(omega, 1.0 - lcfg.beta));
        }
        if (lcfg.strong) parts.push_back(ce_graph(anchor.probs, g.y_onehot, lcfg.prob_floor));

        Expr bracket = parts.empty() ? scalar(0.0) : sum_tree(parts);
        gen_terms.push_back(mul(weight, bracket));
    }

    out.total = generated.empty() ? batch_mean(ce_terms)
                                  : add(batch_mean(ce_terms), batch_mean(gen_terms));
    return out;
}

Expr build_outer_loss(const model::ClassifierExprs& theta, std::span<const Expr> x_originals,
                      std::span<const Expr> y_original_onehots, double prob_floor) {
    std::vector<Expr> ce_terms;
    ce_terms.reserve(x_originals.size());
    for (std::size_t i = 0; i < x_originals.size(); ++i) {
        auto nodes = model::classifier_graph(theta, x_originals[i]);
        ce_terms.push_back(ce_graph(nodes.probs, y_original_onehots[i], prob_floor));
    }
    return batch_mean(ce_terms);
}

// ---- numeric operations ------------------------------------------------------------

double ce_loss(const std::vector<double>& probs, std::int64_t y, double prob_floor) {
    if (y < 0 || y >= static_cast<std::int64_t>(probs.size()))
        throw ConfigError("ce_loss: label " + std::to_string(y) + " out of range");
    return -std::log(std::max(probs[static_cast<std::size_t>(y)], prob_floor));
}

double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                    const std::vector<double>& negative, double margin, double eps) {
    if (anchor.size() != positive.size() || anchor.size() != negative.size())
        throw ShapeError("triplet_loss: embedding lengths differ");
    if (margin <= 0.0) throw ConfigError("triplet_loss: margin must be > 0");
    double d_pos = std::sqrt(squared_distance(anchor, positive) + eps);
    double d_neg = std::sqrt(squared_distance(anchor, negative) + eps);
    return std::max(d_pos - d_neg + margin, 0.0);
}

double consistency_loss(const std::vector<double>& out_perturbed, const std::vector<double>& out_clean) {
    if (out_perturbed.size() != out_clean.size())
        throw ShapeError("consistency_loss: vector lengths differ");
    return squared_distance(out_perturbed, out_clean);
}

double balanced_sum(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    std::vector<double> level = values;
    while (level.size() > 1) {
        std::vector<double> next;
        next.reserve((level.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(level[i] + level[i + 1]);
        if (level.size() % 2) next.push_back(level.back());
        level = std::move(next);
    }
    return level[0];
}

double inner_loss(const model::ClassifierParams& theta, const model::WeightNetParams& alpha,
                  const sim::OriginalDataset& originals,
                  std::span<const sim::LabeledSample> original_batch,
                  std::span<const sim::GeneratedSample> generated_batch,
                  std::span<const std::vector<double>> perturbed,
                  std::span<const sim::Triplet> triplets, const LossConfig& lcfg,
                  const model::ModelConfig& mcfg, WeightMode weight_mode) {
    if (original_batch.empty()) throw ConfigError("inner_loss: empty original batch");
    if (generated_batch.size() != perturbed.size() || generated_batch.size() != triplets.size())
        throw ConfigError("inner_loss: generated batch, perturbed features and triplets must align");

    auto theta_exprs = model::classifier_param_exprs(mcfg);
    auto alpha_exprs = model::weightnet_param_exprs(mcfg);

    std::vector<Expr> xs, ys;
    for (const auto& s : original_batch) {
        xs.push_back(constant(Tensor::vector(s.features)));
        ys.push_back(constant(Tensor::onehot(s.label, mcfg.classes)));
    }
    std::vector<GeneratedSlots> gen;
    for (std::size_t k = 0; k < generated_batch.size(); ++k) {
        const auto& g = generated_batch[k];
        const auto& t = triplets[k];
        GeneratedSlots slots;
        slots.x_anchor = constant(Tensor::vector(g.features));
        slots.x_positive =
            constant(Tensor::vector(originals.samples[static_cast<std::size_t>(t.positive_index)].features));
        slots.x_negative =
            constant(Tensor::vector(originals.samples[static_cast<std::size_t>(t.negative_index)].features));
        slots.x_perturbed = constant(Tensor::vector(perturbed[k]));
        slots.y_onehot = constant(Tensor::onehot(
            originals.samples[static_cast<std::size_t>(g.origin_index)].label, mcfg.classes));
        gen.push_back(std::move(slots));
    }

    auto graph = build_inner_loss(theta_exprs, alpha_exprs, xs, ys, gen, lcfg, mcfg, weight_mode);
    Bindings b;
    model::bind_params(b, theta);
    model::bind_params(b, alpha);
    return evaluate(graph.total, b).scalar_value();
}

double outer_loss(const model::ClassifierParams& theta, const sim::OriginalDataset& originals,
                  const LossConfig& lcfg, const model::ModelConfig& mcfg) {
    if (originals.samples.empty()) throw ConfigError("outer_loss: empty dataset");
    model::ClassifierEvaluator ev(mcfg);
    ev.set_params(theta);
    std::vector<double> terms;
    terms.reserve(originals.samples.size());
    for (const auto& s : originals.samples)
        terms.push_back(ce_loss(ev.forward(s.features).probs, s.label, lcfg.prob_floor));
    return balanced_sum(terms) * (1.0 / static_cast<double>(terms.size()));
}

}  // namespace trw::loss
