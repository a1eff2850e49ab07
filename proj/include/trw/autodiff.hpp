// autodiff.hpp — reverse-mode differentiation over small dense graphs.
//
// Gradients are built symbolically: gradient_graph() returns new Expr
// graphs rather than numbers, so a gradient can be differentiated again.
// That is what makes the bi-level meta-gradient exact — the classifier
// update step stays inside the graph and the weight-net gradient is
// plain double backprop, with finite differences kept only as an oracle.
//
// Graphs are immutable DAGs of shared nodes. For hot loops, compile the
// outputs once (CompiledGraph) and rebind leaf values per evaluation;
// nothing is allocated after compilation.
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "trw/errors.hpp"
#include "trw/tensor.hpp"

namespace trw::ad {

enum class OpKind {
    kInput,
    kParam,
    kConst,
    kAdd,
    kMul,      // elementwise; one operand may be scalar
    kMatMul,   // canonical 2-D product with transpose flags
    kMax,      // elementwise max; one operand may be scalar
    kExp,
    kLog,
    kSigmoid,
    kSoftmax,
    kSquaredNorm,
    kSum,
    kMean,
    kStep,          // heaviside(x > 0); zero derivative everywhere (hinge subgradient)
    kStopGradient,  // identity value, blocks adjoint flow
};

struct Node;

class Expr {
public:
    Expr() = default;
    explicit Expr(std::shared_ptr<const Node> n) : n_(std::move(n)) {}

    bool valid() const { return n_ != nullptr; }
    const Node* node() const { return n_.get(); }
    const Node& operator*() const { return *n_; }
    const Node* operator->() const { return n_.get(); }
    const Shape& shape() const;

    bool operator==(const Expr& o) const { return n_ == o.n_; }

private:
    std::shared_ptr<const Node> n_;
};

struct Node {
    OpKind kind;
    Shape shape;
    std::string name;            // kInput / kParam
    Tensor value;                // kConst
    std::vector<Expr> children;
    bool trans_a = false;        // kMatMul
    bool trans_b = false;
};

inline const Shape& Expr::shape() const { return n_->shape; }

using Bindings = std::unordered_map<std::string, Tensor>;

// ---- graph construction ----------------------------------------------------

Expr input(std::string name, Shape shape);
Expr param(std::string name, Shape shape);
Expr constant(Tensor value);
Expr scalar(double v);

Expr add(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr emax(Expr a, Expr b);
Expr exp_(Expr a);
Expr log_(Expr a);
Expr sigmoid(Expr a);
Expr softmax(Expr a);
Expr squared_norm(Expr a);
Expr sum(Expr a);
Expr mean(Expr a);
Expr step(Expr a);
Expr stop_gradient(Expr a);

// W [r,c] times vector; transpose applies to W.
Expr matvec(Expr w, Expr x, bool trans_w = false);
// rank-2 by rank-2 product with transpose flags.
Expr matmul(Expr a, Expr b, bool trans_a = false, bool trans_b = false);
// u [r] v [c] -> [r,c]
Expr outer_product(Expr u, Expr v);

// compositions
Expr scale(Expr a, double s);
Expr neg(Expr a);
Expr sub(Expr a, Expr b);
Expr dot(Expr a, Expr b);
Expr tanh_(Expr a);                       // 2*sigmoid(2x) - 1
Expr sqrt_eps(Expr x, double eps);        // exp(0.5 * log(x + eps)), x >= 0
Expr sum_tree(const std::vector<Expr>& terms);  // balanced pairwise sum

// ---- evaluation -------------------------------------------------------------

// One-shot evaluation with full shape/finiteness checks.
Tensor evaluate(const Expr& expr, const Bindings& bindings);

// Compile once, bind and run many times. Leaf values persist across runs.
class CompiledGraph {
public:
    explicit CompiledGraph(std::vector<Expr> outputs);

    bool has_leaf(const std::string& name) const { return leaf_slots_.count(name) > 0; }
    int leaf_slot(const std::string& name) const;
    void bind(const std::string& name, const Tensor& value);
    void bind_slot(int slot, const double* data, std::size_t n);

    void run(bool check_finite = false);

    const Tensor& output(std::size_t i) const { return slots_[static_cast<std::size_t>(output_slots_[i])]; }
    const Tensor& value(const Expr& e) const;

    // leaf name -> slot, for callers that cache slot ids
    const std::unordered_map<std::string, int>& leaves() const { return leaf_slots_; }

private:
    struct Instr {
        OpKind kind;
        int out;
        int a = -1;
        int b = -1;
        bool ta = false;
        bool tb = false;
    };

    std::vector<Instr> instrs_;
    std::vector<Tensor> slots_;
    std::vector<bool> needs_binding_;
    std::vector<bool> bound_;
    std::vector<std::string> slot_names_;
    std::unordered_map<const Node*, int> slot_index_;
    std::unordered_map<std::string, int> leaf_slots_;
    std::vector<int> output_slots_;
};

// ---- differentiation ---------------------------------------------------------

// Symbolic reverse pass. Returns one gradient graph per requested leaf;
// absent entries mean the leaf does not appear in the graph at all.
std::map<std::string, Expr> gradient_graph(const Expr& scalar_root,
                                           const std::vector<std::string>& wrt);

struct GradientEntry {
    Expr graph;    // invalid when the map is numeric-only
    Tensor value;
};

struct GradientMap {
    std::map<std::string, GradientEntry> entries;
    bool graph_valued = true;
};

// Gradient graphs plus their values under the given bindings. Leaves not
// reachable from the root get exact-zero gradients of the binding's shape.
GradientMap gradient(const Expr& scalar_root, const std::vector<std::string>& wrt,
                     const Bindings& bindings);

// Differentiates `outer` (built on top of inner.graph entries) a second
// time. Rejects numeric-only inner maps: double backprop needs the graph.
std::map<std::string, Tensor> second_order_gradient(const Expr& outer,
                                                    const GradientMap& inner,
                                                    const std::vector<std::string>& wrt,
                                                    const Bindings& bindings);

// Central differences, one probe pair per coordinate of `point`.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& loss_fn,
                            const Tensor& point, double step);

}  // namespace trw::ad
