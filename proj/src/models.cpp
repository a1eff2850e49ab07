// models.cpp
#include "trw/models.hpp"

#include <cmath>

#include "trw/errors.hpp"
#include "trw/rng.hpp"

namespace trw::model {

using namespace trw::ad;

void ModelConfig::validate() const {
    if (input_dim < 1 || hidden < 1 || classes < 2 || weightnet_hidden < 1)
        throw ConfigError("model: widths must be positive and classes >= 2");
    if (ball_radius <= 0.0) throw ConfigError("model: ball_radius must be > 0");
}

std::vector<std::pair<std::string, const Tensor*>> ClassifierParams::entries() const {
    return {{"theta.w1", &w1}, {"theta.b1", &b1}, {"theta.w2", &w2}, {"theta.b2", &b2}};
}
std::vector<std::pair<std::string, Tensor*>> ClassifierParams::entries() {
    return {{"theta.w1", &w1}, {"theta.b1", &b1}, {"theta.w2", &w2}, {"theta.b2", &b2}};
}
bool ClassifierParams::all_finite() const {
    return w1.all_finite() && b1.all_finite() && w2.all_finite() && b2.all_finite();
}
std::vector<std::string> ClassifierParams::names() {
    return {"theta.w1", "theta.b1", "theta.w2", "theta.b2"};
}

std::vector<std::pair<std::string, const Tensor*>> WeightNetParams::entries() const {
    std::vector<std::pair<std::string, const Tensor*>> out = {{"alpha.wa", &wa}};
    if (pairwise) out.emplace_back("alpha.wo", &wo);
    out.emplace_back("alpha.b1", &b1);
    out.emplace_back("alpha.v", &v);
    out.emplace_back("alpha.b2", &b2);
    return out;
}
std::vector<std::pair<std::string, Tensor*>> WeightNetParams::entries() {
    std::vector<std::pair<std::string, Tensor*>> out = {{"alpha.wa", &wa}};
    if (pairwise) out.emplace_back("alpha.wo", &wo);
    out.emplace_back("alpha.b1", &b1);
    out.emplace_back("alpha.v", &v);
    out.emplace_back("alpha.b2", &b2);
    return out;
}
bool WeightNetParams::all_finite() const {
    for (const auto& [name, t] : entries())
        if (!t->all_finite()) return false;
    return true;
}
std::vector<std::string> WeightNetParams::names() const {
    std::vector<std::string> out;
    for (const auto& [name, t] : entries()) out.push_back(name);
    return out;
}
std::int64_t WeightNetParams::dim() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries()) n += t->numel();
    return n;
}
double WeightNetParams::norm() const {
    double s = 0.0;
    for (const auto& [name, t] : entries())
        for (double v2 : t->data) s += v2 * v2;
    return std::sqrt(s);
}

ClassifierExprs classifier_param_exprs(const ModelConfig& cfg) {
    return {param("theta.w1", {cfg.hidden, cfg.input_dim}), param("theta.b1", {cfg.hidden}),
            param("theta.w2", {cfg.classes, cfg.hidden}), param("theta.b2", {cfg.classes})};
}

ClassifierNodes classifier_graph(const ClassifierExprs& p, ad::Expr x) {
    Expr z1 = add(matvec(p.w1, std::move(x)), p.b1);
    Expr emb = tanh_(z1);
    Expr logits = add(matvec(p.w2, emb), p.b2);
    Expr probs = softmax(logits);
    return {logits, probs, emb};
}

WeightNetExprs weightnet_param_exprs(const ModelConfig& cfg) {
    WeightNetExprs e;
    e.pairwise = cfg.weight_pairwise;
    e.wa = param("alpha.wa", {cfg.weightnet_hidden, cfg.hidden});
    if (cfg.weight_pairwise) e.wo = param("alpha.wo", {cfg.weightnet_hidden, cfg.hidden});
    e.b1 = param("alpha.b1", {cfg.weightnet_hidden});
    e.v = param("alpha.v", {cfg.weightnet_hidden});
    e.b2 = param("alpha.b2", {});
    return e;
}

ad::Expr weightnet_graph(const WeightNetExprs& p, ad::Expr emb_anchor, ad::Expr emb_origin) {
    Expr z = add(matvec(p.wa, std::move(emb_anchor)), p.b1);
    if (p.pairwise) z = add(z, matvec(p.wo, std::move(emb_origin)));
    Expr h = tanh_(z);
    return sigmoid(add(dot(p.v, h), p.b2));
}

// ---- numeric evaluation ------------------------------------------------------------

ClassifierEvaluator::ClassifierEvaluator(const ModelConfig& cfg) {
    cfg.validate();
    Expr x = input("x", {cfg.input_dim});
    auto nodes = classifier_graph(classifier_param_exprs(cfg), x);
    graph_ = std::make_unique<CompiledGraph>(std::vector<Expr>{nodes.logits, nodes.probs, nodes.embedding});
    x_slot_ = graph_->leaf_slot("x");
}

void ClassifierEvaluator::set_params(const ClassifierParams& p) {
    for (const auto& [name, t] : p.entries()) graph_->bind(name, *t);
}

ForwardResult ClassifierEvaluator::forward(const std::vector<double>& x) {
    graph_->bind_slot(x_slot_, x.data(), x.size());
    graph_->run();
    return {graph_->output(0).data, graph_->output(1).data, graph_->output(2).data};
}

WeightNetEvaluator::WeightNetEvaluator(const ModelConfig& cfg) : pairwise_(cfg.weight_pairwise) {
    cfg.validate();
    Expr ea = input("emb_anchor", {cfg.hidden});
    Expr eo = input("emb_origin", {cfg.hidden});
    Expr w = weightnet_graph(weightnet_param_exprs(cfg), ea, eo);
    graph_ = std::make_unique<CompiledGraph>(std::vector<Expr>{w});
    anchor_slot_ = graph_->leaf_slot("emb_anchor");
    if (pairwise_) origin_slot_ = graph_->leaf_slot("emb_origin");
}

void WeightNetEvaluator::set_params(const WeightNetParams& p) {
    for (const auto& [name, t] : p.entries()) graph_->bind(name, *t);
}

double WeightNetEvaluator::forward(const std::vector<double>& emb_anchor,
                                   const std::vector<double>& emb_origin) {
    graph_->bind_slot(anchor_slot_, emb_anchor.data(), emb_anchor.size());
    if (pairwise_) graph_->bind_slot(origin_slot_, emb_origin.data(), emb_origin.size());
    graph_->run();
    return graph_->output(0).scalar_value();
}

ForwardResult classifier_forward(const std::vector<double>& x, const ClassifierParams& theta,
                                 const ModelConfig& cfg) {
    if (static_cast<std::int64_t>(x.size()) != cfg.input_dim)
        throw ShapeError("classifier_forward: input has length " + std::to_string(x.size()) +
                         ", expected " + std::to_string(cfg.input_dim));
    ClassifierEvaluator ev(cfg);
    ev.set_params(theta);
    return ev.forward(x);
}

double weightnet_forward(const std::vector<double>& emb_anchor, const std::vector<double>& emb_origin,
                         const WeightNetParams& alpha, const ModelConfig& cfg) {
    WeightNetEvaluator ev(cfg);
    ev.set_params(alpha);
    return ev.forward(emb_anchor, emb_origin);
}

// ---- parameter management ------------------------------------------------------------

WeightNetParams project_unit_ball(WeightNetParams alpha) {
    const double n = alpha.norm();
    if (n <= alpha.ball_radius) return alpha;
    const double s = alpha.ball_radius / n;
    for (auto& [name, t] : alpha.entries())
        for (double& v : t->data) v *= s;
    return alpha;
}

namespace {

Tensor uniform_init(Shape shape, double bound, StreamRng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.next_uniform(-bound, bound);
    return t;
}

}  // namespace

std::pair<ClassifierParams, WeightNetParams> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    StreamRng rng(seed, Stream::kInit);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));

    ClassifierParams theta;
    theta.w1 = uniform_init({cfg.hidden, cfg.input_dim}, s1, rng);
    theta.b1 = uniform_init({cfg.hidden}, s1, rng);
    theta.w2 = uniform_init({cfg.classes, cfg.hidden}, s2, rng);
    theta.b2 = uniform_init({cfg.classes}, s2, rng);

    WeightNetParams alpha;
    alpha.pairwise = cfg.weight_pairwise;
    alpha.ball_radius = cfg.ball_radius;
    const double fan_in = static_cast<double>(cfg.weight_pairwise ? 2 * cfg.hidden : cfg.hidden);
    const double sw = 1.0 / std::sqrt(fan_in);
    const double sv = 1.0 / std::sqrt(static_cast<double>(cfg.weightnet_hidden));
    alpha.wa = uniform_init({cfg.weightnet_hidden, cfg.hidden}, sw, rng);
    if (cfg.weight_pairwise) alpha.wo = uniform_init({cfg.weightnet_hidden, cfg.hidden}, sw, rng);
    alpha.b1 = uniform_init({cfg.weightnet_hidden}, sw, rng);
    alpha.v = uniform_init({cfg.weightnet_hidden}, sv, rng);
    alpha.b2 = uniform_init({}, sv, rng);

    return {std::move(theta), project_unit_ball(std::move(alpha))};
}

void bind_params(ad::Bindings& b, const ClassifierParams& p) {
    for (const auto& [name, t] : p.entries()) b[name] = *t;
}

void bind_params(ad::Bindings& b, const WeightNetParams& p) {
    for (const auto& [name, t] : p.entries()) b[name] = *t;
}

}  // namespace trw::model
