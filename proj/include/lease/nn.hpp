#pragma once

#include <map>
#include <string>

#include "lease/searchspace.hpp"

namespace lease {

// Explainer: stem conv -> stacked searchable cells (with 1x1 input projections
// between cells) -> global average pool -> dense head.
struct ExplainerSpec {
    CellSpec cell;
    int in_channels = 1;
    int n_cells = 2;
    int n_classes = 4;

    int cell_out_channels() const { return cell.n_nodes * cell.channels; }
    // input channel count seen by projection `slot` (0 or 1) of cell k
    int pre_in_channels(int k, int slot) const {
        if (k == 0) return cell.channels;
        if (k == 1) return slot == 0 ? cell.channels : cell_out_channels();
        return cell_out_channels();
    }
};

// Fixed two-conv audience standing in for a human-designed reference net.
struct AudienceSpec {
    int in_channels = 1;
    int c1 = 8;
    int c2 = 16;
    int n_classes = 4;
};

WeightMap init_explainer_weights(const ExplainerSpec& spec, uint64_t seed);
WeightMap init_audience_weights(const AudienceSpec& spec, uint64_t seed);
WeightMap init_discrete_weights(const ExplainerSpec& spec, const Genotype& g, uint64_t seed);

// Weight tensors lifted into a graph, keyed by name.
using TracedMap = std::map<std::string, Var>;
TracedMap make_leaves(Graph& g, const WeightMap& w);
TracedMap make_constants(Graph& g, const WeightMap& w);

// Gathers d(root)/d(weight) for every entry of `traced` out of a backward pass.
WeightMap collect_grads(const GradMap& grads, const TracedMap& traced);

Var explainer_forward(Graph& g, Var x, const TracedMap& e, Var arch_logits,
                      const ExplainerSpec& spec);
Var audience_forward(Graph& g, Var x, const TracedMap& w, const AudienceSpec& spec);
// Evaluation-phase network: the discrete genotype cell stacked n_cells times.
Var discrete_forward(Graph& g, Var x, const TracedMap& e, const Genotype& geno,
                     const ExplainerSpec& spec);

// Untraced convenience wrappers.
Tensor explainer_logits(const Tensor& x, const WeightMap& e, const ArchParams& a,
                        const ExplainerSpec& spec);
Tensor audience_logits(const Tensor& x, const WeightMap& w, const AudienceSpec& spec);
Tensor discrete_logits(const Tensor& x, const WeightMap& e, const Genotype& geno,
                       const ExplainerSpec& spec);

}  // namespace lease
