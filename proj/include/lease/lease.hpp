#pragma once

#include <functional>
#include <optional>

#include "lease/data.hpp"
#include "lease/explain.hpp"
#include "lease/nn.hpp"

namespace lease {

struct Hyperparams {
    double xi_e = 0.025;      // explainer virtual step
    double xi_delta = 0.01;   // explanation ascent step
    double xi_w = 0.025;      // audience virtual step
    double eta = 3e-4;        // architecture step
    double gamma = 1.0;       // weight of the audience validation loss
    double eps = 0.1;         // infinity-norm perturbation bound
    double alpha_scale = 0.01;  // numerator of the finite-difference step rule
    int attack_steps = 1;
    ReweighMode reweigh = ReweighMode::abs_normalized;

    void validate() const;
};

enum class Mode { lease, darts1st, audience_only };

Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

struct LeaseState {
    WeightMap explainer;  // E
    WeightMap audience;   // W
    ArchParams arch;      // A
    int64_t iteration = 0;
    std::mt19937_64 rng;
};

struct IterationBatches {
    Batch e_tr, a_tr, e_val, a_val;
};

// Per-iteration losses; audience/attack entries are meaningful only when
// has_audience is set.
struct IterationStats {
    double expl_train_loss = 0.0;
    double expl_val_loss = 0.0;
    double aud_train_loss = 0.0;
    double aud_val_loss = 0.0;
    double attack_obj = 0.0;
    double outer_obj = 0.0;
    bool has_audience = false;
};

using GradFn = std::function<WeightMap(const WeightMap&)>;

// Central-difference mixed-second-derivative--vector product:
//   (grad_fn(y0 + a*v) - grad_fn(y0 - a*v)) / (2a),  a = alpha_scale / ||v||.
// Returns zeros shaped like x_like when ||v|| < 1e-12.
WeightMap fd_hvp(const GradFn& grad_fn, const WeightMap& y0, const WeightMap& v,
                 const WeightMap& x_like, double alpha_scale);

// The three-factor chain through the audience: starting from v1 (the audience
// validation gradient), applies the explanation-reweighing, attack, and
// explainer-training curvature factors right-to-left, each as an fd_hvp with
// its own -xi coefficient. Exposed generically so synthetic compositions can
// exercise the chain mechanics directly.
WeightMap chain_audience_hypergrad(const WeightMap& grad_val_w,                       //
                                   const GradFn& grad_delta_of_aud_train,             // W -> d/dDelta
                                   const WeightMap& w0, const WeightMap& delta_like,  //
                                   const GradFn& grad_e_of_attack,                    // Delta -> d/dE
                                   const WeightMap& delta0, const WeightMap& e_like,  //
                                   const GradFn& grad_a_of_expl_train,                // E -> d/dA
                                   const WeightMap& e0, const WeightMap& a_like,      //
                                   const Hyperparams& hp);

// A - eta * (g_explainer + gamma * g_audience); g_audience may be null.
ArchParams arch_update(const ArchParams& a, const Tensor& g_explainer, const Tensor* g_audience,
                       double eta, double gamma);

class LeaseEngine {
  public:
    LeaseEngine(ExplainerSpec espec, AudienceSpec aspec, Hyperparams hp);

    double explainer_loss(const WeightMap& e, const ArchParams& a, const Batch& b,
                          WeightMap* grad_e = nullptr, Tensor* grad_a = nullptr) const;
    double audience_loss(const Tensor& x, const std::vector<int>& labels, const WeightMap& w,
                         WeightMap* grad_w = nullptr) const;
    double audience_loss_reweighted(const Batch& b, const Tensor& delta, const WeightMap& w,
                                    WeightMap* grad_w = nullptr,
                                    Tensor* grad_delta = nullptr) const;

    WeightMap virtual_explainer_step(const WeightMap& e, const ArchParams& a, const Batch& e_tr,
                                     double* train_loss = nullptr) const;
    WeightMap virtual_audience_step(const WeightMap& w, const Batch& a_tr, const Tensor& delta,
                                    double* train_loss = nullptr) const;

    double outer_objective(const WeightMap& e_prime, const ArchParams& a,
                           const WeightMap& w_prime, const Batch& e_val,
                           const Batch& a_val) const;

    // Eq.-style two-term architecture gradient through the explainer's virtual
    // step: -xi_e * (curvature x validation gradient) + direct partial.
    Tensor hypergrad_explainer_path(const WeightMap& e, const ArchParams& a,
                                    const WeightMap& e_prime, const Batch& e_tr,
                                    const Batch& e_val, double* val_loss = nullptr) const;

    // The audience path of the architecture gradient (three fd_hvp factors).
    Tensor hypergrad_audience_path(const WeightMap& e, const ArchParams& a,
                                   const WeightMap& e_prime, const WeightMap& w,
                                   const Tensor& delta0, const Tensor& delta_prime,
                                   const WeightMap& w_prime, const IterationBatches& batches,
                                   double* aud_val_loss = nullptr) const;

    // One full outer iteration: virtual explainer step (committed), explanation
    // update, virtual audience step (committed), architecture update. With
    // gamma == 0 (or in darts1st mode) the explanation/audience stages are
    // skipped and the architecture update reduces to the first-order direct
    // gradient at the stepped weights.
    IterationStats lease_iteration(LeaseState& state, const IterationBatches& batches,
                                   Mode mode) const;

    const ExplainerSpec& explainer_spec() const { return espec_; }
    const AudienceSpec& audience_spec() const { return aspec_; }
    const Hyperparams& hyperparams() const { return hp_; }

  private:
    ExplainerSpec espec_;
    AudienceSpec aspec_;
    Hyperparams hp_;
};

}  // namespace lease
