#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "lease/graph.hpp"
#include "lease/ops.hpp"
#include "lease/weights.hpp"

namespace lease {

// Searchable cell: a DAG over two input nodes (0, 1) and n_nodes intermediate
// nodes, with every edge (i -> j), i < j, carrying a mixture of candidate ops.
// The cell output is the channel-concat of the intermediate nodes.
struct CellSpec {
    int n_nodes = 3;
    std::vector<std::string> ops = {"zero", "skip", "conv3x3_relu", "avg_pool3", "max_pool3"};
    int channels = 8;

    int num_ops() const { return static_cast<int>(ops.size()); }
    void validate() const;
};

// Edges are ordered by target node, then source node: for node j (j = 2 ..
// n_nodes+1), edges (0->j), (1->j), ..., (j-1->j).
int num_edges(const CellSpec& spec);
std::pair<int, int> edge_endpoints(const CellSpec& spec, int e);
int edge_index(const CellSpec& spec, int i, int j);

bool op_is_parametric(const std::string& op);  // true only for conv3x3_relu

// Per-edge, per-op logits; the outer optimization variable.
struct ArchParams {
    Tensor logits;  // (num_edges, num_ops)
};

ArchParams init_arch(const CellSpec& spec, uint64_t seed, double init_scale = 1e-3);

struct GenotypeSlot {
    int from = 0;
    std::string op;
};

// Discrete cell: per intermediate node, the two retained (input, op) pairs.
struct Genotype {
    int n_nodes = 0;
    std::vector<std::array<GenotypeSlot, 2>> nodes;
};

// DARTS-style rule: per intermediate node keep the two incoming edges whose
// strongest non-zero op has the highest softmax weight; ties broken by lower
// edge index, then lower op index.
Genotype discretize(const ArchParams& a, const CellSpec& spec);

void save_genotype(const std::string& path, const Genotype& g);
Genotype load_genotype(const std::string& path);
bool genotype_equal(const Genotype& a, const Genotype& b);

// sum_o softmax(edge_logits)_o * op_o(x); `zero` contributes nothing,
// `skip` contributes x itself. edge_kernels maps parametric op names to their
// traced kernels.
Var mixed_edge_forward(Var x, Var edge_logits, const std::map<std::string, Var>& edge_kernels,
                       const CellSpec& spec);

// Single candidate op applied discretely (used by the evaluation-phase network).
Var apply_candidate_op(const std::string& op, Var x, const Var* kernel);

// inputs are two (N, C, H, W) tensors already projected to the cell width.
// arch_logits is the full (num_edges, num_ops) leaf; edge_kernels[e] holds the
// parametric kernels of edge e.
Var cell_forward(Var in0, Var in1, Var arch_logits,
                 const std::vector<std::map<std::string, Var>>& edge_kernels,
                 const CellSpec& spec);

}  // namespace lease
