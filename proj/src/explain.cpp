#include "lease/explain.hpp"

#include <algorithm>

namespace lease {

ReweighMode parse_reweigh_mode(const std::string& s) {
    if (s == "literal") return ReweighMode::literal;
    if (s == "abs-normalized" || s == "abs_normalized") return ReweighMode::abs_normalized;
    throw ConfigError("unknown reweigh mode '" + s + "' (expected literal or abs-normalized)");
}

std::string reweigh_mode_name(ReweighMode m) {
    return m == ReweighMode::literal ? "literal" : "abs-normalized";
}

PerturbationSet init_perturbations(const std::vector<int64_t>& x_shape, double step, double bound,
                                   std::mt19937_64& rng) {
    if (step <= 0.0) throw ConfigError("perturbation step must be positive");
    if (bound < 0.0) throw ConfigError("perturbation bound must be nonnegative");
    PerturbationSet p;
    p.step = step;
    p.bound = bound;
    p.delta = Tensor(x_shape);
    fill_uniform(rng, p.delta, -0.01 * bound, 0.01 * bound);
    return p;
}

void clip_inplace(Tensor& t, double bound) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], -bound, bound);
}

double attack_objective(const Tensor& x, const Tensor& delta, const WeightMap& e,
                        const ArchParams& a, const ExplainerSpec& spec, Tensor* grad_delta,
                        WeightMap* grad_e, bool detach_target) {
    require_same_shape("attack_objective", x, delta);

    Graph g;
    Var xv = g.constant(x);
    Var dv = grad_delta ? g.leaf(delta) : g.constant(delta);
    TracedMap ev = grad_e ? make_leaves(g, e) : make_constants(g, e);
    Var arch = g.constant(a.logits);

    Var perturbed_probs = softmax_rows(explainer_forward(g, add(xv, dv), ev, arch, spec));
    Var target_probs = softmax_rows(explainer_forward(g, xv, ev, arch, spec));
    if (detach_target) target_probs = detach(target_probs);
    Var obj = cross_entropy(perturbed_probs, target_probs);

    if (grad_delta || grad_e) {
        GradMap grads = g.backward(obj);
        if (grad_delta) *grad_delta = grads.at(dv.id());
        if (grad_e) *grad_e = collect_grads(grads, ev);
    }
    return obj.value()[0];
}

PerturbationSet perturb_step(const Tensor& x, const PerturbationSet& p, const WeightMap& e,
                             const ArchParams& a, const ExplainerSpec& spec) {
    Tensor grad;
    attack_objective(x, p.delta, e, a, spec, &grad);
    if (!grad.all_finite()) throw NumericError("perturb_step: non-finite attack gradient");

    PerturbationSet out = p;
    for (int64_t i = 0; i < out.delta.numel(); ++i) out.delta[i] += p.step * grad[i];
    clip_inplace(out.delta, p.bound);
    return out;
}

Tensor reweigh_inputs(const Tensor& x, const Tensor& delta, ReweighMode mode) {
    Graph g;
    return reweigh_inputs(g, g.constant(x), g.constant(delta), mode).value();
}

Var reweigh_inputs(Graph& g, Var x, Var delta, ReweighMode mode) {
    require_same_shape("reweigh_inputs", x.value(), delta.value());
    switch (mode) {
        case ReweighMode::literal:
            return mul(delta, x);
        case ReweighMode::abs_normalized:
            return mul(maxabs_normalize(delta), x);
    }
    throw ConfigError("reweigh_inputs: unknown mode");
}

}  // namespace lease
