#include "lease/lease.hpp"

#include <cmath>

namespace lease {

void Hyperparams::validate() const {
    if (xi_e <= 0.0 && xi_e != 0.0) throw ConfigError("xi_e must be nonnegative");
    if (xi_e < 0.0 || xi_delta < 0.0 || xi_w < 0.0)
        throw ConfigError("step sizes must be nonnegative");
    if (eta < 0.0) throw ConfigError("eta must be nonnegative");
    if (gamma < 0.0) throw ConfigError("gamma must be nonnegative");
    if (eps < 0.0) throw ConfigError("eps must be nonnegative");
    if (alpha_scale <= 0.0) throw ConfigError("alpha_scale must be positive");
    if (attack_steps < 1) throw ConfigError("attack_steps must be >= 1");
}

Mode parse_mode(const std::string& s) {
    if (s == "lease") return Mode::lease;
    if (s == "darts1st") return Mode::darts1st;
    if (s == "audience-only" || s == "audience_only") return Mode::audience_only;
    throw ConfigError("unknown mode '" + s + "' (expected lease, darts1st or audience-only)");
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::lease: return "lease";
        case Mode::darts1st: return "darts1st";
        case Mode::audience_only: return "audience-only";
    }
    return "?";
}

WeightMap fd_hvp(const GradFn& grad_fn, const WeightMap& y0, const WeightMap& v,
                 const WeightMap& x_like, double alpha_scale) {
    double n = wm_norm(v);
    if (!std::isfinite(n)) throw NumericError("fd_hvp: non-finite direction vector");
    if (n < 1e-12) return wm_zeros_like(x_like);

    double alpha = alpha_scale / n;
    WeightMap gp = grad_fn(wm_add_scaled(y0, v, alpha));
    WeightMap gm = grad_fn(wm_add_scaled(y0, v, -alpha));
    WeightMap out = wm_scale(wm_add_scaled(gp, gm, -1.0), 1.0 / (2.0 * alpha));
    if (!wm_all_finite(out)) throw NumericError("fd_hvp: non-finite result");
    return out;
}

WeightMap chain_audience_hypergrad(const WeightMap& grad_val_w,
                                   const GradFn& grad_delta_of_aud_train, const WeightMap& w0,
                                   const WeightMap& delta_like, const GradFn& grad_e_of_attack,
                                   const WeightMap& delta0, const WeightMap& e_like,
                                   const GradFn& grad_a_of_expl_train, const WeightMap& e0,
                                   const WeightMap& a_like, const Hyperparams& hp) {
    if (hp.xi_w == 0.0 || hp.xi_delta == 0.0 || hp.xi_e == 0.0) return wm_zeros_like(a_like);
    if (wm_norm(grad_val_w) < 1e-12) return wm_zeros_like(a_like);

    WeightMap v2 = wm_scale(fd_hvp(grad_delta_of_aud_train, w0, grad_val_w, delta_like,
                                   hp.alpha_scale),
                            -hp.xi_w);
    if (wm_norm(v2) < 1e-12) return wm_zeros_like(a_like);

    WeightMap v3 = wm_scale(fd_hvp(grad_e_of_attack, delta0, v2, e_like, hp.alpha_scale),
                            -hp.xi_delta);
    if (wm_norm(v3) < 1e-12) return wm_zeros_like(a_like);

    return wm_scale(fd_hvp(grad_a_of_expl_train, e0, v3, a_like, hp.alpha_scale), -hp.xi_e);
}

ArchParams arch_update(const ArchParams& a, const Tensor& g_explainer, const Tensor* g_audience,
                       double eta, double gamma) {
    require_same_shape("arch_update", a.logits, g_explainer);
    ArchParams out = a;
    for (int64_t i = 0; i < out.logits.numel(); ++i)
        out.logits[i] -= eta * g_explainer[i];
    if (g_audience != nullptr) {
        require_same_shape("arch_update", a.logits, *g_audience);
        for (int64_t i = 0; i < out.logits.numel(); ++i)
            out.logits[i] -= eta * gamma * (*g_audience)[i];
    }
    return out;
}

LeaseEngine::LeaseEngine(ExplainerSpec espec, AudienceSpec aspec, Hyperparams hp)
    : espec_(std::move(espec)), aspec_(std::move(aspec)), hp_(hp) {
    espec_.cell.validate();
    hp_.validate();
    if (espec_.n_classes != aspec_.n_classes)
        throw ConfigError("explainer and audience class counts differ");
}

double LeaseEngine::explainer_loss(const WeightMap& e, const ArchParams& a, const Batch& b,
                                   WeightMap* grad_e, Tensor* grad_a) const {
    Graph g;
    Var x = g.constant(b.x);
    TracedMap ev = grad_e ? make_leaves(g, e) : make_constants(g, e);
    Var arch = grad_a ? g.leaf(a.logits) : g.constant(a.logits);
    Var targets = g.constant(one_hot(b.labels, espec_.n_classes));
    Var loss = cross_entropy(softmax_rows(explainer_forward(g, x, ev, arch, espec_)), targets);
    if (grad_e || grad_a) {
        GradMap grads = g.backward(loss);
        if (grad_e) *grad_e = collect_grads(grads, ev);
        if (grad_a) *grad_a = grads.at(arch.id());
    }
    return loss.value()[0];
}

double LeaseEngine::audience_loss(const Tensor& x, const std::vector<int>& labels,
                                  const WeightMap& w, WeightMap* grad_w) const {
    Graph g;
    Var xv = g.constant(x);
    TracedMap wv = grad_w ? make_leaves(g, w) : make_constants(g, w);
    Var targets = g.constant(one_hot(labels, aspec_.n_classes));
    Var loss = cross_entropy(softmax_rows(audience_forward(g, xv, wv, aspec_)), targets);
    if (grad_w) {
        GradMap grads = g.backward(loss);
        *grad_w = collect_grads(grads, wv);
    }
    return loss.value()[0];
}

double LeaseEngine::audience_loss_reweighted(const Batch& b, const Tensor& delta,
                                             const WeightMap& w, WeightMap* grad_w,
                                             Tensor* grad_delta) const {
    Graph g;
    Var xv = g.constant(b.x);
    Var dv = grad_delta ? g.leaf(delta) : g.constant(delta);
    TracedMap wv = grad_w ? make_leaves(g, w) : make_constants(g, w);
    Var targets = g.constant(one_hot(b.labels, aspec_.n_classes));
    Var inputs = reweigh_inputs(g, xv, dv, hp_.reweigh);
    Var loss = cross_entropy(softmax_rows(audience_forward(g, inputs, wv, aspec_)), targets);
    if (grad_w || grad_delta) {
        GradMap grads = g.backward(loss);
        if (grad_w) *grad_w = collect_grads(grads, wv);
        if (grad_delta) *grad_delta = grads.at(dv.id());
    }
    return loss.value()[0];
}

WeightMap LeaseEngine::virtual_explainer_step(const WeightMap& e, const ArchParams& a,
                                              const Batch& e_tr, double* train_loss) const {
    WeightMap grad;
    double loss = explainer_loss(e, a, e_tr, &grad);
    if (!wm_all_finite(grad)) throw NumericError("virtual_explainer_step: non-finite gradient");
    if (train_loss) *train_loss = loss;
    return wm_add_scaled(e, grad, -hp_.xi_e);
}

WeightMap LeaseEngine::virtual_audience_step(const WeightMap& w, const Batch& a_tr,
                                             const Tensor& delta, double* train_loss) const {
    WeightMap grad;
    double loss = audience_loss_reweighted(a_tr, delta, w, &grad);
    if (!wm_all_finite(grad)) throw NumericError("virtual_audience_step: non-finite gradient");
    if (train_loss) *train_loss = loss;
    return wm_add_scaled(w, grad, -hp_.xi_w);
}

double LeaseEngine::outer_objective(const WeightMap& e_prime, const ArchParams& a,
                                    const WeightMap& w_prime, const Batch& e_val,
                                    const Batch& a_val) const {
    double lv = explainer_loss(e_prime, a, e_val);
    double la = audience_loss(a_val.x, a_val.labels, w_prime);
    return lv + hp_.gamma * la;
}

Tensor LeaseEngine::hypergrad_explainer_path(const WeightMap& e, const ArchParams& a,
                                             const WeightMap& e_prime, const Batch& e_tr,
                                             const Batch& e_val, double* val_loss) const {
    // One validation backward yields both the direct partial w.r.t. the
    // architecture and the weight gradient that seeds the curvature factor.
    WeightMap grad_val_e;
    Tensor direct;
    double lv = explainer_loss(e_prime, a, e_val, &grad_val_e, &direct);
    if (val_loss) *val_loss = lv;

    if (hp_.xi_e == 0.0) return direct;

    GradFn grad_a_of_train = [&](const WeightMap& e_probe) {
        Tensor ga;
        explainer_loss(e_probe, a, e_tr, nullptr, &ga);
        return WeightMap{{"arch", std::move(ga)}};
    };
    WeightMap a_like{{"arch", Tensor::zeros(a.logits.shape())}};
    WeightMap hvp = fd_hvp(grad_a_of_train, e, grad_val_e, a_like, hp_.alpha_scale);

    Tensor out = direct;
    const Tensor& h = hvp.at("arch");
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= hp_.xi_e * h[i];
    return out;
}

Tensor LeaseEngine::hypergrad_audience_path(const WeightMap& e, const ArchParams& a,
                                            const WeightMap& e_prime, const WeightMap& w,
                                            const Tensor& delta0, const Tensor& delta_prime,
                                            const WeightMap& w_prime,
                                            const IterationBatches& batches,
                                            double* aud_val_loss) const {
    WeightMap v1;
    double la = audience_loss(batches.a_val.x, batches.a_val.labels, w_prime, &v1);
    if (aud_val_loss) *aud_val_loss = la;

    GradFn grad_delta_of_aud_train = [&](const WeightMap& w_probe) {
        Tensor gd;
        audience_loss_reweighted(batches.a_tr, delta_prime, w_probe, nullptr, &gd);
        return WeightMap{{"delta", std::move(gd)}};
    };
    GradFn grad_e_of_attack = [&](const WeightMap& d_probe) {
        WeightMap ge;
        attack_objective(batches.a_tr.x, d_probe.at("delta"), e_prime, a, espec_, nullptr, &ge,
                         /*detach_target=*/false);
        return ge;
    };
    GradFn grad_a_of_expl_train = [&](const WeightMap& e_probe) {
        Tensor ga;
        explainer_loss(e_probe, a, batches.e_tr, nullptr, &ga);
        return WeightMap{{"arch", std::move(ga)}};
    };

    WeightMap delta_like{{"delta", Tensor::zeros(delta0.shape())}};
    WeightMap a_like{{"arch", Tensor::zeros(a.logits.shape())}};
    WeightMap result = chain_audience_hypergrad(
        v1, grad_delta_of_aud_train, w, delta_like, grad_e_of_attack,
        WeightMap{{"delta", delta0}}, wm_zeros_like(e), grad_a_of_expl_train, e, a_like, hp_);
    return result.at("arch");
}

IterationStats LeaseEngine::lease_iteration(LeaseState& state, const IterationBatches& batches,
                                            Mode mode) const {
    IterationStats stats;
    bool audience_active =
        mode == Mode::audience_only || (mode == Mode::lease && hp_.gamma > 0.0);

    // Stage 1: explainer virtual step; committed at the end of the iteration.
    WeightMap e_prime =
        virtual_explainer_step(state.explainer, state.arch, batches.e_tr, &stats.expl_train_loss);

    // Stages 2 and 3: explanations on the audience's training batch, then the
    // audience virtual step on the reweighed inputs.
    Tensor delta0, delta_prime;
    WeightMap w_prime = state.audience;
    if (audience_active) {
        PerturbationSet p = init_perturbations(batches.a_tr.x.shape(), hp_.xi_delta, hp_.eps,
                                               state.rng);
        delta0 = p.delta;
        for (int s = 0; s < hp_.attack_steps; ++s)
            p = perturb_step(batches.a_tr.x, p, e_prime, state.arch, espec_);
        delta_prime = p.delta;
        stats.attack_obj = attack_objective(batches.a_tr.x, delta_prime, e_prime, state.arch,
                                            espec_);
        w_prime = virtual_audience_step(state.audience, batches.a_tr, delta_prime,
                                        &stats.aud_train_loss);
        stats.has_audience = true;
    }

    // Stage 4: architecture update.
    ArchParams a_next;
    if (!audience_active) {
        // First-order update: the direct validation gradient at the stepped weights.
        Tensor direct;
        stats.expl_val_loss = explainer_loss(e_prime, state.arch, batches.e_val, nullptr, &direct);
        a_next = arch_update(state.arch, direct, nullptr, hp_.eta, 0.0);
        stats.outer_obj = stats.expl_val_loss;
    } else {
        Tensor g_a = hypergrad_audience_path(state.explainer, state.arch, e_prime, state.audience,
                                             delta0, delta_prime, w_prime, batches,
                                             &stats.aud_val_loss);
        if (mode == Mode::audience_only) {
            stats.expl_val_loss = explainer_loss(e_prime, state.arch, batches.e_val);
            Tensor zero = Tensor::zeros(state.arch.logits.shape());
            a_next = arch_update(state.arch, zero, &g_a, hp_.eta, hp_.gamma);
        } else {
            Tensor g_e = hypergrad_explainer_path(state.explainer, state.arch, e_prime,
                                                  batches.e_tr, batches.e_val,
                                                  &stats.expl_val_loss);
            a_next = arch_update(state.arch, g_e, &g_a, hp_.eta, hp_.gamma);
        }
        stats.outer_obj = stats.expl_val_loss + hp_.gamma * stats.aud_val_loss;
    }

    state.explainer = std::move(e_prime);
    state.audience = std::move(w_prime);
    state.arch = a_next;
    state.iteration += 1;

    if (!wm_all_finite(state.explainer))
        throw NumericError("lease_iteration: non-finite explainer weights");
    if (!wm_all_finite(state.audience))
        throw NumericError("lease_iteration: non-finite audience weights");
    if (!state.arch.logits.all_finite())
        throw NumericError("lease_iteration: non-finite architecture parameters");
    return stats;
}

}  // namespace lease
