// autodiff.cpp — graph construction, compilation, kernels, reverse pass.
#include "trw/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace trw::ad {

namespace {

Expr make_node(Node n) { return Expr(std::make_shared<const Node>(std::move(n))); }

void require_valid(const Expr& e, const char* who) {
    if (!e.valid()) throw Error(std::string(who) + ": empty expression");
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* who) {
    if (a == b) return a;
    if (shape_numel(a) == 1) return b;
    if (shape_numel(b) == 1) return a;
    throw ShapeError(std::string(who) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

// rank-1 tensors participate in matmul as column matrices
void canonical_dims(const Shape& s, std::int64_t& rows, std::int64_t& cols) {
    if (s.size() == 2) {
        rows = s[0];
        cols = s[1];
    } else if (s.size() == 1) {
        rows = s[0];
        cols = 1;
    } else {
        throw ShapeError("matmul operand must be rank 1 or 2, got " + shape_str(s));
    }
}

Expr matmul_shaped(Expr a, Expr b, bool ta, bool tb, Shape out_shape) {
    require_valid(a, "matmul");
    require_valid(b, "matmul");
    std::int64_t ar, ac, br, bc;
    canonical_dims(a.shape(), ar, ac);
    canonical_dims(b.shape(), br, bc);
    std::int64_t m = ta ? ac : ar;
    std::int64_t k = ta ? ar : ac;
    std::int64_t k2 = tb ? bc : br;
    std::int64_t n = tb ? br : bc;
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         (ta ? "^T" : "") + " x " + shape_str(b.shape()) + (tb ? "^T" : ""));
    if (shape_numel(out_shape) != m * n)
        throw ShapeError("matmul: result shape " + shape_str(out_shape) + " cannot hold " +
                         std::to_string(m) + "x" + std::to_string(n));
    Node node;
    node.kind = OpKind::kMatMul;
    node.shape = std::move(out_shape);
    node.children = {std::move(a), std::move(b)};
    node.trans_a = ta;
    node.trans_b = tb;
    return make_node(std::move(node));
}

Expr unary(OpKind kind, Expr a, Shape out) {
    require_valid(a, "unary op");
    Node node;
    node.kind = kind;
    node.shape = std::move(out);
    node.children = {std::move(a)};
    return make_node(std::move(node));
}

Expr binary_elementwise(OpKind kind, Expr a, Expr b, const char* who) {
    require_valid(a, who);
    require_valid(b, who);
    Shape out = broadcast_shape(a.shape(), b.shape(), who);
    Node node;
    node.kind = kind;
    node.shape = std::move(out);
    node.children = {std::move(a), std::move(b)};
    return make_node(std::move(node));
}

// deterministic iterative post-order over the DAG
std::vector<const Node*> topo_order(const std::vector<Expr>& roots) {
    std::vector<const Node*> order;
    std::unordered_map<const Node*, int> state;  // 0 unseen, 1 open, 2 done
    std::vector<std::pair<const Node*, std::size_t>> stack;
    for (const auto& r : roots) {
        if (!r.valid()) throw Error("topo_order: empty expression");
        if (state[r.node()] == 2) continue;
        stack.emplace_back(r.node(), 0);
        state[r.node()] = 1;
        while (!stack.empty()) {
            auto& [node, next_child] = stack.back();
            if (next_child < node->children.size()) {
                const Node* c = node->children[next_child++].node();
                if (state[c] == 0) {
                    state[c] = 1;
                    stack.emplace_back(c, 0);
                }
            } else {
                state[node] = 2;
                order.push_back(node);
                stack.pop_back();
            }
        }
    }
    return order;
}

}  // namespace

// ---- builders ----------------------------------------------------------------

Expr input(std::string name, Shape shape) {
    Node n;
    n.kind = OpKind::kInput;
    n.shape = std::move(shape);
    n.name = std::move(name);
    return make_node(std::move(n));
}

Expr param(std::string name, Shape shape) {
    Node n;
    n.kind = OpKind::kParam;
    n.shape = std::move(shape);
    n.name = std::move(name);
    return make_node(std::move(n));
}

Expr constant(Tensor value) {
    Node n;
    n.kind = OpKind::kConst;
    n.shape = value.shape;
    n.value = std::move(value);
    return make_node(std::move(n));
}

Expr scalar(double v) { return constant(Tensor::scalar(v)); }

Expr add(Expr a, Expr b) { return binary_elementwise(OpKind::kAdd, std::move(a), std::move(b), "add"); }
Expr mul(Expr a, Expr b) { return binary_elementwise(OpKind::kMul, std::move(a), std::move(b), "mul"); }
Expr emax(Expr a, Expr b) { return binary_elementwise(OpKind::kMax, std::move(a), std::move(b), "max"); }

Expr exp_(Expr a) {
    Shape s = a.shape();
    return unary(OpKind::kExp, std::move(a), std::move(s));
}
Expr log_(Expr a) {
    Shape s = a.shape();
    return unary(OpKind::kLog, std::move(a), std::move(s));
}
Expr sigmoid(Expr a) {
    Shape s = a.shape();
    return unary(OpKind::kSigmoid, std::move(a), std::move(s));
}
Expr step(Expr a) {
    Shape s = a.shape();
    return unary(OpKind::kStep, std::move(a), std::move(s));
}
Expr stop_gradient(Expr a) {
    Shape s = a.shape();
    return unary(OpKind::kStopGradient, std::move(a), std::move(s));
}

Expr softmax(Expr a) {
    if (a.shape().size() != 1) throw ShapeError("softmax expects a vector, got " + shape_str(a.shape()));
    Shape s = a.shape();
    return unary(OpKind::kSoftmax, std::move(a), std::move(s));
}

Expr squared_norm(Expr a) { return unary(OpKind::kSquaredNorm, std::move(a), {}); }
Expr sum(Expr a) { return unary(OpKind::kSum, std::move(a), {}); }
Expr mean(Expr a) {
    if (shape_numel(a.shape()) == 0) throw ShapeError("mean of empty tensor");
    return unary(OpKind::kMean, std::move(a), {});
}

Expr matvec(Expr w, Expr x, bool trans_w) {
    if (w.shape().size() != 2 || x.shape().size() != 1)
        throw ShapeError("matvec expects matrix and vector, got " + shape_str(w.shape()) + ", " +
                         shape_str(x.shape()));
    std::int64_t out = trans_w ? w.shape()[1] : w.shape()[0];
    return matmul_shaped(std::move(w), std::move(x), trans_w, false, {out});
}

Expr matmul(Expr a, Expr b, bool trans_a, bool trans_b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ShapeError("matmul expects rank-2 operands");
    std::int64_t m = trans_a ? a.shape()[1] : a.shape()[0];
    std::int64_t n = trans_b ? b.shape()[0] : b.shape()[1];
    return matmul_shaped(std::move(a), std::move(b), trans_a, trans_b, {m, n});
}

Expr outer_product(Expr u, Expr v) {
    if (u.shape().size() != 1 || v.shape().size() != 1)
        throw ShapeError("outer_product expects vectors");
    std::int64_t r = u.shape()[0];
    std::int64_t c = v.shape()[0];
    return matmul_shaped(std::move(u), std::move(v), false, true, {r, c});
}

Expr scale(Expr a, double s) { return mul(std::move(a), scalar(s)); }
Expr neg(Expr a) { return scale(std::move(a), -1.0); }
Expr sub(Expr a, Expr b) { return add(std::move(a), neg(std::move(b))); }
Expr dot(Expr a, Expr b) { return sum(mul(std::move(a), std::move(b))); }

Expr tanh_(Expr a) { return add(scale(sigmoid(scale(std::move(a), 2.0)), 2.0), scalar(-1.0)); }

Expr sqrt_eps(Expr x, double eps) { return exp_(scale(log_(add(std::move(x), scalar(eps))), 0.5)); }

Expr sum_tree(const std::vector<Expr>& terms) {
    if (terms.empty()) return scalar(0.0);
    std::vector<Expr> level = terms;
    while (level.size() > 1) {
        std::vector<Expr> next;
        next.reserve((level.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(add(level[i], level[i + 1]));
        if (level.size() % 2) next.push_back(level.back());
        level = std::move(next);
    }
    return level[0];
}

// ---- compiled execution --------------------------------------------------------

CompiledGraph::CompiledGraph(std::vector<Expr> outputs) {
    auto order = topo_order(outputs);
    slots_.reserve(order.size());
    for (const Node* node : order) {
        int slot = static_cast<int>(slots_.size());
        slot_index_[node] = slot;
        slots_.emplace_back(node->kind == OpKind::kConst ? node->value : Tensor(node->shape));
        needs_binding_.push_back(node->kind == OpKind::kInput || node->kind == OpKind::kParam);
        bound_.push_back(false);
        slot_names_.push_back(node->name);
        if (needs_binding_.back()) {
            auto [it, inserted] = leaf_slots_.emplace(node->name, slot);
            if (!inserted && slot_index_.at(node) != it->second)
                throw Error("duplicate leaf name in graph: " + node->name);
        }
        if (node->kind == OpKind::kInput || node->kind == OpKind::kParam || node->kind == OpKind::kConst)
            continue;
        Instr ins;
        ins.kind = node->kind;
        ins.out = slot;
        ins.a = slot_index_.at(node->children[0].node());
        if (node->children.size() > 1) ins.b = slot_index_.at(node->children[1].node());
        ins.ta = node->trans_a;
        ins.tb = node->trans_b;
        instrs_.push_back(ins);
    }
    for (const auto& e : outputs) output_slots_.push_back(slot_index_.at(e.node()));
}

int CompiledGraph::leaf_slot(const std::string& name) const {
    auto it = leaf_slots_.find(name);
    if (it == leaf_slots_.end()) throw UnboundSymbolError("no such leaf: " + name);
    return it->second;
}

void CompiledGraph::bind(const std::string& name, const Tensor& value) {
    int slot = leaf_slot(name);
    if (value.shape != slots_[static_cast<std::size_t>(slot)].shape)
        throw ShapeError("binding for '" + name + "' has shape " + shape_str(value.shape) +
                         ", expected " + shape_str(slots_[static_cast<std::size_t>(slot)].shape));
    slots_[static_cast<std::size_t>(slot)].data = value.data;
    bound_[static_cast<std::size_t>(slot)] = true;
}

void CompiledGraph::bind_slot(int slot, const double* data, std::size_t n) {
    auto& t = slots_[static_cast<std::size_t>(slot)];
    if (n != t.data.size()) throw ShapeError("bind_slot: length mismatch");
    std::copy(data, data + n, t.data.begin());
    bound_[static_cast<std::size_t>(slot)] = true;
}

const Tensor& CompiledGraph::value(const Expr& e) const {
    auto it = slot_index_.find(e.node());
    if (it == slot_index_.end()) throw Error("expression was not part of this compiled graph");
    return slots_[static_cast<std::size_t>(it->second)];
}

namespace {

inline void kernel_elementwise(OpKind kind, const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t n = out.data.size();
    const bool a_scalar = a.data.size() == 1 && n != 1;
    const bool b_scalar = b.data.size() == 1 && n != 1;
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* po = out.data.data();
    switch (kind) {
        case OpKind::kAdd:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[a_scalar ? 0 : i] + pb[b_scalar ? 0 : i];
            break;
        case OpKind::kMul:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[a_scalar ? 0 : i] * pb[b_scalar ? 0 : i];
            break;
        case OpKind::kMax:
            for (std::size_t i = 0; i < n; ++i) {
                double x = pa[a_scalar ? 0 : i], y = pb[b_scalar ? 0 : i];
                po[i] = x > y ? x : y;
            }
            break;
        default:
            throw Error("kernel_elementwise: bad kind");
    }
}

inline void kernel_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb, Tensor& out) {
    std::int64_t ar, ac, br, bc;
    canonical_dims(a.shape, ar, ac);
    canonical_dims(b.shape, br, bc);
    const std::int64_t m = ta ? ac : ar;
    const std::int64_t k = ta ? ar : ac;
    const std::int64_t n = tb ? br : bc;
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* po = out.data.data();
    std::fill(out.data.begin(), out.data.end(), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t l = 0; l < k; ++l) {
            const double av = ta ? pa[l * ac + i] : pa[i * ac + l];
            if (av == 0.0) continue;
            const double* brow = tb ? pb + l : pb + l * bc;
            double* orow = po + i * n;
            if (tb) {
                for (std::int64_t j = 0; j < n; ++j) orow[j] += av * pb[j * bc + l];
            } else {
                for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    }
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline void kernel_softmax(const Tensor& a, Tensor& out) {
    const std::size_t n = a.data.size();
    double m = a.data[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, a.data[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.data[i] = std::exp(a.data[i] - m);
        s += out.data[i];
    }
    for (std::size_t i = 0; i < n; ++i) out.data[i] /= s;
}

}  // namespace

void CompiledGraph::run(bool check_finite) {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        if (needs_binding_[i] && !bound_[i])
            throw UnboundSymbolError("unbound leaf: " + slot_names_[i]);
    }
    for (const Instr& ins : instrs_) {
        Tensor& out = slots_[static_cast<std::size_t>(ins.out)];
        const Tensor& a = slots_[static_cast<std::size_t>(ins.a)];
        switch (ins.kind) {
            case OpKind::kAdd:
            case OpKind::kMul:
            case OpKind::kMax:
                kernel_elementwise(ins.kind, a, slots_[static_cast<std::size_t>(ins.b)], out);
                break;
            case OpKind::kMatMul:
                kernel_matmul(a, slots_[static_cast<std::size_t>(ins.b)], ins.ta, ins.tb, out);
                break;
            case OpKind::kExp:
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::exp(a.data[i]);
                break;
            case OpKind::kLog:
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::log(a.data[i]);
                break;
            case OpKind::kSigmoid:
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = stable_sigmoid(a.data[i]);
                break;
            case OpKind::kSoftmax:
                kernel_softmax(a, out);
                break;
            case OpKind::kSquaredNorm: {
                double s = 0.0;
                for (double v : a.data) s += v * v;
                out.data[0] = s;
                break;
            }
            case OpKind::kSum: {
                double s = 0.0;
                for (double v : a.data) s += v;
                out.data[0] = s;
                break;
            }
            case OpKind::kMean: {
                double s = 0.0;
                for (double v : a.data) s += v;
                out.data[0] = s / static_cast<double>(a.data.size());
                break;
            }
            case OpKind::kStep:
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] > 0.0 ? 1.0 : 0.0;
                break;
            case OpKind::kStopGradient:
                out.data = a.data;
                break;
            default:
                throw Error("CompiledGraph::run: unexpected instruction");
        }
        if (check_finite && !out.all_finite())
            throw NumericError("non-finite intermediate value in graph evaluation");
    }
}

Tensor evaluate(const Expr& expr, const Bindings& bindings) {
    require_valid(expr, "evaluate");
    CompiledGraph g({expr});
    for (const auto& [name, slot] : g.leaves()) {
        auto it = bindings.find(name);
        if (it == bindings.end()) throw UnboundSymbolError("no binding for symbol: " + name);
        g.bind(name, it->second);
    }
    g.run(/*check_finite=*/true);
    return g.output(0);
}

// ---- reverse pass ---------------------------------------------------------------

std::map<std::string, Expr> gradient_graph(const Expr& scalar_root,
                                           const std::vector<std::string>& wrt) {
    require_valid(scalar_root, "gradient");
    if (shape_numel(scalar_root.shape()) != 1 || scalar_root.shape().size() != 0)
        throw ShapeError("gradient root must be scalar, got shape " + shape_str(scalar_root.shape()));

    auto order = topo_order({scalar_root});

    // re-walk with Expr handles so adjoint graphs can reference forward nodes
    std::unordered_map<const Node*, Expr> handle;
    {
        std::vector<Expr> stack = {scalar_root};
        while (!stack.empty()) {
            Expr e = stack.back();
            stack.pop_back();
            if (handle.count(e.node())) continue;
            handle.emplace(e.node(), e);
            for (const auto& c : e->children) stack.push_back(c);
        }
    }

    std::unordered_map<const Node*, Expr> adjoint;
    adjoint[scalar_root.node()] = scalar(1.0);

    auto accumulate = [&adjoint](const Expr& child, Expr contrib) {
        auto it = adjoint.find(child.node());
        if (it == adjoint.end())
            adjoint.emplace(child.node(), std::move(contrib));
        else
            it->second = add(it->second, std::move(contrib));
    };

    // adjoint may be broadcast-shaped; reduce to the child's shape when the child is scalar
    auto fit = [](Expr adj_term, const Expr& child) {
        if (shape_numel(child.shape()) == 1 && shape_numel(adj_term.shape()) != 1) return sum(adj_term);
        return adj_term;
    };

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Node* node = *it;
        auto ait = adjoint.find(node);
        if (ait == adjoint.end()) continue;  // no path to the root (or blocked by step/stop_gradient)
        Expr adj = ait->second;
        const Expr self = handle.at(node);

        switch (node->kind) {
            case OpKind::kInput:
            case OpKind::kParam:
            case OpKind::kConst:
            case OpKind::kStep:
            case OpKind::kStopGradient:
                break;  // leaves, or zero derivative by definition
            case OpKind::kAdd:
                accumulate(node->children[0], fit(adj, node->children[0]));
                accumulate(node->children[1], fit(adj, node->children[1]));
                break;
            case OpKind::kMul:
                accumulate(node->children[0], fit(mul(adj, node->children[1]), node->children[0]));
                accumulate(node->children[1], fit(mul(adj, node->children[0]), node->children[1]));
                break;
            case OpKind::kMax: {
                const Expr& a = node->children[0];
                const Expr& b = node->children[1];
                accumulate(a, fit(mul(adj, step(sub(a, b))), a));
                accumulate(b, fit(mul(adj, step(sub(b, a))), b));
                break;
            }
            case OpKind::kMatMul: {
                const Expr& a = node->children[0];
                const Expr& b = node->children[1];
                const bool ta = node->trans_a, tb = node->trans_b;
                Expr adj_a = ta ? matmul_shaped(b, adj, tb, true, a.shape())
                                : matmul_shaped(adj, b, false, !tb, a.shape());
                Expr adj_b = tb ? matmul_shaped(adj, a, true, ta, b.shape())
                                : matmul_shaped(a, adj, !ta, false, b.shape());
                accumulate(a, std::move(adj_a));
                accumulate(b, std::move(adj_b));
                break;
            }
            case OpKind::kExp:
                accumulate(node->children[0], mul(adj, self));
                break;
            case OpKind::kLog:
                // 1/x as exp(-log x); the log node is already in the forward graph
                accumulate(node->children[0], mul(adj, exp_(neg(self))));
                break;
            case OpKind::kSigmoid:
                accumulate(node->children[0], mul(adj, mul(self, sub(scalar(1.0), self))));
                break;
            case OpKind::kSoftmax: {
                Expr t = mul(self, adj);
                accumulate(node->children[0], sub(t, mul(self, sum(t))));
                break;
            }
            case OpKind::kSquaredNorm:
                accumulate(node->children[0], mul(scale(adj, 2.0), node->children[0]));
                break;
            case OpKind::kSum:
                accumulate(node->children[0], mul(adj, constant(Tensor::full(node->children[0].shape(), 1.0))));
                break;
            case OpKind::kMean: {
                double inv = 1.0 / static_cast<double>(shape_numel(node->children[0].shape()));
                accumulate(node->children[0], mul(adj, constant(Tensor::full(node->children[0].shape(), inv))));
                break;
            }
        }
    }

    // collect named leaves, rejecting distinct nodes that share a name
    std::unordered_map<std::string, const Node*> named;
    for (const Node* node : order) {
        if (node->kind != OpKind::kParam && node->kind != OpKind::kInput) continue;
        auto [it, inserted] = named.emplace(node->name, node);
        if (!inserted && it->second != node)
            throw Error("two distinct leaves named '" + node->name + "' in one graph");
    }

    std::map<std::string, Expr> result;
    for (const auto& name : wrt) {
        auto nit = named.find(name);
        if (nit == named.end()) continue;  // absent from graph entirely
        auto ait = adjoint.find(nit->second);
        if (ait != adjoint.end())
            result[name] = ait->second;
        else
            result[name] = constant(Tensor::zeros(nit->second->shape));
    }
    return result;
}

GradientMap gradient(const Expr& scalar_root, const std::vector<std::string>& wrt,
                     const Bindings& bindings) {
    auto graphs = gradient_graph(scalar_root, wrt);
    GradientMap out;
    out.graph_valued = true;
    for (const auto& name : wrt) {
        GradientEntry entry;
        auto git = graphs.find(name);
        if (git != graphs.end()) {
            entry.graph = git->second;
            entry.value = evaluate(git->second, bindings);
        } else {
            auto bit = bindings.find(name);
            if (bit == bindings.end())
                throw UnboundSymbolError("gradient: '" + name +
                                         "' is absent from the graph and has no binding to take a shape from");
            entry.graph = constant(Tensor::zeros(bit->second.shape));
            entry.value = Tensor::zeros(bit->second.shape);
        }
        out.entries.emplace(name, std::move(entry));
    }
    return out;
}

std::map<std::string, Tensor> second_order_gradient(const Expr& outer, const GradientMap& inner,
                                                    const std::vector<std::string>& wrt,
                                                    const Bindings& bindings) {
    if (!inner.graph_valued)
        throw DetachedGradientError(
            "inner gradient is numeric-only; a graph-valued gradient is required to differentiate through it");
    for (const auto& [name, entry] : inner.entries)
        if (!entry.graph.valid())
            throw DetachedGradientError("inner gradient entry '" + name + "' carries no graph");
    auto g = gradient(outer, wrt, bindings);
    std::map<std::string, Tensor> out;
    for (auto& [name, entry] : g.entries) out.emplace(name, std::move(entry.value));
    return out;
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& loss_fn,
                            const Tensor& point, double stepsize) {
    if (!(stepsize > 0.0)) throw Error("finite_diff_gradient: step must be positive");
    Tensor grad(point.shape);
    Tensor probe = point;
    for (std::size_t i = 0; i < point.data.size(); ++i) {
        const double x = point.data[i];
        probe.data[i] = x + stepsize;
        double fp = loss_fn(probe);
        probe.data[i] = x - stepsize;
        double fm = loss_fn(probe);
        probe.data[i] = x;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_gradient: non-finite evaluation");
        grad.data[i] = (fp - fm) / (2.0 * stepsize);
    }
    return grad;
}

}  // namespace trw::ad
