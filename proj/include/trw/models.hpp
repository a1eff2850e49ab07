// models.hpp — the classifier h(x; theta) and the weight function w(.; alpha).
//
// Both are small tanh MLPs on the autodiff graph. The weight net reads
// classifier embeddings (anchor and origin) and squashes through a sigmoid,
// so weights live strictly inside (0,1); alpha is kept inside a norm ball
// by projection after every update.
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "trw/autodiff.hpp"
#include "trw/tensor.hpp"

namespace trw::model {

enum class TripletSpace { kEmbedding, kProbs };
enum class ConsistencySpace { kProbs, kLogits };

struct ModelConfig {
    std::int64_t input_dim = 16;
    std::int64_t hidden = 32;
    std::int64_t classes = 5;
    std::int64_t weightnet_hidden = 16;
    double ball_radius = 10.0;
    bool weight_pairwise = true;  // w(anchor_emb, origin_emb); unary form drops the origin input
    TripletSpace triplet_space = TripletSpace::kEmbedding;
    ConsistencySpace consistency_space = ConsistencySpace::kProbs;

    void validate() const;
};

struct ClassifierParams {
    Tensor w1, b1, w2, b2;  // [h,D], [h], [c,h], [c]

    std::vector<std::pair<std::string, const Tensor*>> entries() const;
    std::vector<std::pair<std::string, Tensor*>> entries();
    bool all_finite() const;
    static std::vector<std::string> names();
};

struct WeightNetParams {
    // first layer split into an anchor block and an origin block; summing the
    // two matvecs equals one matrix on the concatenated embeddings
    Tensor wa, wo, b1, v, b2;  // [q,h], [q,h] (pairwise only), [q], [q], []
    bool pairwise = true;
    double ball_radius = 10.0;

    std::vector<std::pair<std::string, const Tensor*>> entries() const;
    std::vector<std::pair<std::string, Tensor*>> entries();
    bool all_finite() const;
    std::vector<std::string> names() const;

    std::int64_t dim() const;    // flat size of alpha
    double norm() const;         // l2 over all entries
};

struct ForwardResult {
    std::vector<double> logits;
    std::vector<double> probs;
    std::vector<double> embedding;
};

// ---- graph builders ----------------------------------------------------------

struct ClassifierExprs {
    ad::Expr w1, b1, w2, b2;
};

// Parameter leaves under the canonical "theta.*" names.
ClassifierExprs classifier_param_exprs(const ModelConfig& cfg);

struct ClassifierNodes {
    ad::Expr logits, probs, embedding;
};

// Forward pass wired from arbitrary parameter expressions, so the same
// builder serves both theta leaves and updated-theta graphs.
ClassifierNodes classifier_graph(const ClassifierExprs& p, ad::Expr x);

struct WeightNetExprs {
    ad::Expr wa, wo, b1, v, b2;
    bool pairwise = true;
};

// Parameter leaves under the canonical "alpha.*" names.
WeightNetExprs weightnet_param_exprs(const ModelConfig& cfg);

// Scalar weight in (0,1). emb_origin is ignored in unary mode.
ad::Expr weightnet_graph(const WeightNetExprs& p, ad::Expr emb_anchor, ad::Expr emb_origin);

// ---- numeric evaluation --------------------------------------------------------

// Compiled single-sample forward; set_params once, forward per sample.
class ClassifierEvaluator {
public:
    explicit ClassifierEvaluator(const ModelConfig& cfg);
    void set_params(const ClassifierParams& p);
    ForwardResult forward(const std::vector<double>& x);

private:
    std::unique_ptr<ad::CompiledGraph> graph_;
    int x_slot_;
};

class WeightNetEvaluator {
public:
    explicit WeightNetEvaluator(const ModelConfig& cfg);
    void set_params(const WeightNetParams& p);
    double forward(const std::vector<double>& emb_anchor, const std::vector<double>& emb_origin);

private:
    std::unique_ptr<ad::CompiledGraph> graph_;
    bool pairwise_;
    int anchor_slot_;
    int origin_slot_ = -1;
};

// one-shot convenience wrappers
ForwardResult classifier_forward(const std::vector<double>& x, const ClassifierParams& theta,
                                 const ModelConfig& cfg);
double weightnet_forward(const std::vector<double>& emb_anchor, const std::vector<double>& emb_origin,
                         const WeightNetParams& alpha, const ModelConfig& cfg);

// ---- parameter management --------------------------------------------------------

// Scale alpha back onto the ball when its norm exceeds ball_radius.
WeightNetParams project_unit_ball(WeightNetParams alpha);

std::pair<ClassifierParams, WeightNetParams> init_params(const ModelConfig& cfg, std::uint64_t seed);

// binding helpers
void bind_params(ad::Bindings& b, const ClassifierParams& p);
void bind_params(ad::Bindings& b, const WeightNetParams& p);

}  // namespace trw::model
