#include "lease/graph.hpp"

namespace lease {

const Tensor& Var::value() const { return g_->value(id_); }

Var Graph::leaf(Tensor v) {
    require_finite("leaf", v);
    nodes_.push_back(Node{"leaf", {}, std::move(v), nullptr, true});
    int id = static_cast<int>(nodes_.size()) - 1;
    leaves_.push_back(id);
    return Var(this, id);
}

Var Graph::constant(Tensor v) {
    require_finite("constant", v);
    nodes_.push_back(Node{"constant", {}, std::move(v), nullptr, false});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::emplace(std::string op, std::vector<int> parents, Tensor value, BackwardFn backward) {
    bool rg = false;
    for (int p : parents) rg = rg || nodes_[static_cast<size_t>(p)].requires_grad;
    nodes_.push_back(Node{std::move(op), std::move(parents), std::move(value),
                          rg ? std::move(backward) : nullptr, rg});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::accumulate(int id, const Tensor& g) {
    if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
    if (!has_grad_[static_cast<size_t>(id)]) {
        grads_[static_cast<size_t>(id)] = g;
        has_grad_[static_cast<size_t>(id)] = 1;
    } else {
        Tensor& acc = grads_[static_cast<size_t>(id)];
        const double* src = g.data();
        double* dst = acc.data();
        for (int64_t i = 0; i < acc.numel(); ++i) dst[i] += src[i];
    }
}

GradMap Graph::backward(const Var& root) {
    if (root.graph() != this) throw ShapeError("backward: root belongs to another graph");
    const Tensor& rv = value(root.id());
    if (!rv.is_scalar())
        throw ShapeError("backward: root must be scalar, got shape " + rv.shape_str());

    grads_.assign(nodes_.size(), Tensor());
    has_grad_.assign(nodes_.size(), 0);
    grads_[static_cast<size_t>(root.id())] = Tensor::scalar(1.0);
    has_grad_[static_cast<size_t>(root.id())] = 1;

    for (int id = root.id(); id >= 0; --id) {
        if (!has_grad_[static_cast<size_t>(id)]) continue;
        const Node& n = nodes_[static_cast<size_t>(id)];
        if (n.backward) n.backward(*this, grads_[static_cast<size_t>(id)]);
    }

    GradMap out;
    out.reserve(leaves_.size());
    for (int id : leaves_) {
        if (has_grad_[static_cast<size_t>(id)])
            out.emplace(id, std::move(grads_[static_cast<size_t>(id)]));
        else
            out.emplace(id, Tensor::zeros(nodes_[static_cast<size_t>(id)].value.shape()));
    }
    grads_.clear();
    has_grad_.clear();
    return out;
}

}  // namespace lease
