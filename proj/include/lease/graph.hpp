#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lease/tensor.hpp"

namespace lease {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid as long as the graph lives.
class Var {
  public:
    Var() = default;
    const Tensor& value() const;
    int id() const { return id_; }
    Graph* graph() const { return g_; }

  private:
    friend class Graph;
    Var(Graph* g, int id) : g_(g), id_(id) {}
    Graph* g_ = nullptr;
    int id_ = -1;
};

// Gradient of the backward root with respect to each traced leaf, keyed by node id.
using GradMap = std::unordered_map<int, Tensor>;

// Receives the upstream gradient and accumulates into the parents via Graph::accumulate.
using BackwardFn = std::function<void(Graph&, const Tensor& gout)>;

struct Node {
    std::string op;
    std::vector<int> parents;
    Tensor value;
    BackwardFn backward;  // empty for leaves and constants
    bool requires_grad = false;
};

// Single-trace reverse-mode tape. Nodes are appended in topological order, so a
// backward sweep in descending id order is a valid reverse traversal.
class Graph {
  public:
    Var leaf(Tensor v);      // traced input; gradient is collected for it
    Var constant(Tensor v);  // untraced value; no gradient flows into it

    Var emplace(std::string op, std::vector<int> parents, Tensor value, BackwardFn backward);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    size_t size() const { return nodes_.size(); }
    bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

    // Reverse accumulation from a scalar root. Returns gradients for every leaf
    // (zeros for leaves the root does not depend on).
    GradMap backward(const Var& root);

    // Valid only inside a backward sweep; used by the ops' backward closures.
    void accumulate(int id, const Tensor& g);

  private:
    std::vector<Node> nodes_;
    std::vector<int> leaves_;
    std::vector<Tensor> grads_;
    std::vector<char> has_grad_;
};

}  // namespace lease
