// losses.hpp — the loss terms of the weighted objective and their assembly.
//
// inner:  mean_i ce(h(x_i), y_i)
//       + mean_j w_j * [ beta*triplet_j + (1-beta)*consistency_j (+ ce_j if strong) ]
// outer:  mean_i ce(h(x_i), y_i)            (clean originals only)
//
// Cross-entropy is clamped by prob_floor, which realizes the finite loss
// bound A = -log(prob_floor) the risk analysis assumes.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "trw/autodiff.hpp"
#include "trw/datasim.hpp"
#include "trw/models.hpp"

namespace trw::loss {

struct LossConfig {
    double beta = 0.5;          // triplet/consistency mix
    double margin = 1.0;        // triplet hinge margin
    double prob_floor = 1e-6;   // ce clamp; A = -log(prob_floor)
    bool strong = false;        // ablation only: adds w * ce(h(gen), inherited label)
    bool pairwise = true;       // triplet term
    bool no_connection = true;  // consistency term
    double distance_eps = 1e-12;

    void validate(bool generated_present) const;
    double loss_bound() const;  // A
};

// ---- graph builders ------------------------------------------------------------

ad::Expr ce_graph(ad::Expr probs, ad::Expr onehot, double prob_floor);
// Euclidean distance with a small eps inside the root, so the gradient
// stays bounded when the points coincide.
ad::Expr distance_graph(ad::Expr a, ad::Expr b, double eps);
ad::Expr triplet_graph(ad::Expr anchor, ad::Expr positive, ad::Expr negative, double margin, double eps);
ad::Expr consistency_graph(ad::Expr out_perturbed, ad::Expr out_clean);

// mean as mul(sum_tree(terms), 1/n); empty -> 0
ad::Expr batch_mean(const std::vector<ad::Expr>& terms);

// Per-generated-sample leaf expressions (Input leaves in the trainer's
// static graph, Const leaves in the one-shot ops).
struct GeneratedSlots {
    ad::Expr x_anchor;      // generated features
    ad::Expr x_positive;    // origin's features
    ad::Expr x_negative;    // different-class original's features
    ad::Expr x_perturbed;   // perturb(x_anchor), drawn by the caller
    ad::Expr y_onehot;      // inherited label, used by the strong term only
};

struct InnerLossGraph {
    ad::Expr total;
    std::vector<ad::Expr> weights;  // per generated sample; empty if none
};

// How the per-sample weight factor is produced: the learned net, or a
// constant 0 (the supervised reduction) or 1 (the unweighted baseline).
enum class WeightMode { kNet, kZero, kOne };

// One assembly point for the inner objective, shared by the trainer's
// static graph and the one-shot inner_loss below. The weight net reads
// stop-gradient embeddings: weights act as coefficients in the theta
// gradient, matching the bi-level formulation where w is a free function.
InnerLossGraph build_inner_loss(const model::ClassifierExprs& theta,
                                const model::WeightNetExprs& alpha,
                                std::span<const ad::Expr> x_originals,
                                std::span<const ad::Expr> y_original_onehots,
                                std::span<const GeneratedSlots> generated,
                                const LossConfig& lcfg, const model::ModelConfig& mcfg,
                                WeightMode weight_mode = WeightMode::kNet);

ad::Expr build_outer_loss(const model::ClassifierExprs& theta, std::span<const ad::Expr> x_originals,
                          std::span<const ad::Expr> y_original_onehots, double prob_floor);

// ---- numeric operations ------------------------------------------------------------

double ce_loss(const std::vector<double>& probs, std::int64_t y, double prob_floor);
double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                    const std::vector<double>& negative, double margin, double eps = 1e-12);
double consistency_loss(const std::vector<double>& out_perturbed, const std::vector<double>& out_clean);

// mirrors the graph's sum_tree reduction
double balanced_sum(const std::vector<double>& values);

// One-shot evaluation of the inner objective for given parameters.
// perturbed[k] and triplets[k] align with generated_batch[k].
double inner_loss(const model::ClassifierParams& theta, const model::WeightNetParams& alpha,
                  const sim::OriginalDataset& originals,
                  std::span<const sim::LabeledSample> original_batch,
                  std::span<const sim::GeneratedSample> generated_batch,
                  std::span<const std::vector<double>> perturbed,
                  std::span<const sim::Triplet> triplets, const LossConfig& lcfg,
                  const model::ModelConfig& mcfg, WeightMode weight_mode = WeightMode::kNet);

// Mean clamped cross-entropy of the classifier over a dataset.
double outer_loss(const model::ClassifierParams& theta, const sim::OriginalDataset& originals,
                  const LossConfig& lcfg, const model::ModelConfig& mcfg);

}  // namespace trw::loss
