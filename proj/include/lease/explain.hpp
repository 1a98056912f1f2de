#pragma once

#include <random>

#include "lease/nn.hpp"

namespace lease {

enum class ReweighMode { literal, abs_normalized };

ReweighMode parse_reweigh_mode(const std::string& s);
std::string reweigh_mode_name(ReweighMode m);

// Per-example perturbations, one row per image, kept inside the eps box.
struct PerturbationSet {
    Tensor delta;  // same shape as the image batch
    double step = 0.01;
    double bound = 0.1;
};

// Entries drawn uniformly from [-0.01*eps, +0.01*eps].
PerturbationSet init_perturbations(const std::vector<int64_t>& x_shape, double step, double bound,
                                   std::mt19937_64& rng);

void clip_inplace(Tensor& t, double bound);

// Mean over the batch of l(f(x_i + d_i; E), f(x_i; E)) with l the cross-entropy
// between the two predicted distributions. When detach_target is true the
// f(x_i; E) branch is held constant; gradients w.r.t. delta are identical
// either way, but gradients w.r.t. E are not.
double attack_objective(const Tensor& x, const Tensor& delta, const WeightMap& e,
                        const ArchParams& a, const ExplainerSpec& spec,
                        Tensor* grad_delta = nullptr, WeightMap* grad_e = nullptr,
                        bool detach_target = true);

// One ascent step on the attack objective followed by projection onto the
// infinity-norm box of radius `bound`.
PerturbationSet perturb_step(const Tensor& x, const PerturbationSet& p, const WeightMap& e,
                             const ArchParams& a, const ExplainerSpec& spec);

Tensor reweigh_inputs(const Tensor& x, const Tensor& delta, ReweighMode mode);
Var reweigh_inputs(Graph& g, Var x, Var delta, ReweighMode mode);

}  // namespace lease
