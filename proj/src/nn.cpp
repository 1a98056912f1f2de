#include "lease/nn.hpp"

#include <cmath>

namespace lease {

namespace {

void add_kaiming(WeightMap& w, std::mt19937_64& rng, const std::string& name,
                 std::vector<int64_t> shape, int64_t fan_in) {
    Tensor t(std::move(shape));
    fill_normal(rng, t, std::sqrt(2.0 / static_cast<double>(fan_in)));
    w.emplace(name, std::move(t));
}

std::string cell_key(int k, const std::string& rest) {
    return "cell" + std::to_string(k) + "." + rest;
}

}  // namespace

WeightMap init_explainer_weights(const ExplainerSpec& spec, uint64_t seed) {
    spec.cell.validate();
    std::mt19937_64 rng(seed);
    WeightMap w;
    int C = spec.cell.channels;
    add_kaiming(w, rng, "stem", {C, spec.in_channels, 3, 3}, spec.in_channels * 9);
    for (int k = 0; k < spec.n_cells; ++k) {
        for (int slot = 0; slot < 2; ++slot) {
            int in = spec.pre_in_channels(k, slot);
            add_kaiming(w, rng, cell_key(k, "pre" + std::to_string(slot)), {C, in, 1, 1}, in);
        }
        for (int e = 0; e < num_edges(spec.cell); ++e)
            for (const auto& op : spec.cell.ops)
                if (op_is_parametric(op))
                    add_kaiming(w, rng, cell_key(k, "edge" + std::to_string(e) + "." + op),
                                {C, C, 3, 3}, C * 9);
    }
    int feat = spec.cell_out_channels();
    add_kaiming(w, rng, "head.weight", {feat, spec.n_classes}, feat);
    w.emplace("head.bias", Tensor({spec.n_classes}));
    return w;
}

WeightMap init_audience_weights(const AudienceSpec& spec, uint64_t seed) {
    std::mt19937_64 rng(seed);
    WeightMap w;
    add_kaiming(w, rng, "conv1", {spec.c1, spec.in_channels, 3, 3}, spec.in_channels * 9);
    add_kaiming(w, rng, "conv2", {spec.c2, spec.c1, 3, 3}, spec.c1 * 9);
    add_kaiming(w, rng, "dense.weight", {spec.c2, spec.n_classes}, spec.c2);
    w.emplace("dense.bias", Tensor({spec.n_classes}));
    return w;
}

WeightMap init_discrete_weights(const ExplainerSpec& spec, const Genotype& geno, uint64_t seed) {
    if (geno.n_nodes != spec.cell.n_nodes)
        throw ConfigError("genotype has " + std::to_string(geno.n_nodes) +
                          " nodes but the cell spec expects " +
                          std::to_string(spec.cell.n_nodes));
    std::mt19937_64 rng(seed);
    WeightMap w;
    int C = spec.cell.channels;
    add_kaiming(w, rng, "stem", {C, spec.in_channels, 3, 3}, spec.in_channels * 9);
    for (int k = 0; k < spec.n_cells; ++k) {
        for (int slot = 0; slot < 2; ++slot) {
            int in = spec.pre_in_channels(k, slot);
            add_kaiming(w, rng, cell_key(k, "pre" + std::to_string(slot)), {C, in, 1, 1}, in);
        }
        for (int j = 0; j < geno.n_nodes; ++j)
            for (int s = 0; s < 2; ++s) {
                const auto& slot = geno.nodes[static_cast<size_t>(j)][static_cast<size_t>(s)];
                if (op_is_parametric(slot.op))
                    add_kaiming(w, rng,
                                cell_key(k, "node" + std::to_string(j + 2) + ".in" +
                                                std::to_string(s) + "." + slot.op),
                                {C, C, 3, 3}, C * 9);
            }
    }
    int feat = spec.cell_out_channels();
    add_kaiming(w, rng, "head.weight", {feat, spec.n_classes}, feat);
    w.emplace("head.bias", Tensor({spec.n_classes}));
    return w;
}

TracedMap make_leaves(Graph& g, const WeightMap& w) {
    TracedMap out;
    for (const auto& [name, t] : w) out.emplace(name, g.leaf(t));
    return out;
}

TracedMap make_constants(Graph& g, const WeightMap& w) {
    TracedMap out;
    for (const auto& [name, t] : w) out.emplace(name, g.constant(t));
    return out;
}

WeightMap collect_grads(const GradMap& grads, const TracedMap& traced) {
    WeightMap out;
    for (const auto& [name, var] : traced) {
        auto it = grads.find(var.id());
        if (it != grads.end())
            out.emplace(name, it->second);
        else
            out.emplace(name, Tensor::zeros(var.value().shape()));
    }
    return out;
}

namespace {

const Var& traced_at(const TracedMap& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) throw ShapeError("missing weight tensor '" + name + "'");
    return it->second;
}

Var head(Graph&, Var features, const TracedMap& e) {
    return add(matmul(features, traced_at(e, "head.weight")), traced_at(e, "head.bias"));
}

}  // namespace

Var explainer_forward(Graph& g, Var x, const TracedMap& e, Var arch_logits,
                      const ExplainerSpec& spec) {
    const Tensor& lv = arch_logits.value();
    if (lv.rank() != 2 || lv.dim(0) != num_edges(spec.cell) ||
        lv.dim(1) != spec.cell.num_ops())
        throw ShapeError("explainer_forward: arch logits shape " + lv.shape_str() +
                         " does not match the cell spec");

    Var stem = conv2d(x, traced_at(e, "stem"), 1, 1);
    Var s0 = stem, s1 = stem;
    for (int k = 0; k < spec.n_cells; ++k) {
        Var h0 = conv2d(s0, traced_at(e, cell_key(k, "pre0")), 1, 0);
        Var h1 = conv2d(s1, traced_at(e, cell_key(k, "pre1")), 1, 0);
        std::vector<std::map<std::string, Var>> kernels(
            static_cast<size_t>(num_edges(spec.cell)));
        for (int edge = 0; edge < num_edges(spec.cell); ++edge)
            for (const auto& op : spec.cell.ops)
                if (op_is_parametric(op))
                    kernels[static_cast<size_t>(edge)].emplace(
                        op, traced_at(e, cell_key(k, "edge" + std::to_string(edge) + "." + op)));
        Var out = cell_forward(h0, h1, arch_logits, kernels, spec.cell);
        s0 = s1;
        s1 = out;
    }
    return head(g, global_avg_pool(s1), e);
}

Var audience_forward(Graph& g, Var x, const TracedMap& w, const AudienceSpec&) {
    Var h = relu(conv2d(x, traced_at(w, "conv1"), 1, 1));
    h = max_pool3(h);
    h = relu(conv2d(h, traced_at(w, "conv2"), 1, 1));
    Var feat = global_avg_pool(h);
    return add(matmul(feat, traced_at(w, "dense.weight")), traced_at(w, "dense.bias"));
}

Var discrete_forward(Graph& g, Var x, const TracedMap& e, const Genotype& geno,
                     const ExplainerSpec& spec) {
    Var stem = conv2d(x, traced_at(e, "stem"), 1, 1);
    Var s0 = stem, s1 = stem;
    for (int k = 0; k < spec.n_cells; ++k) {
        Var h0 = conv2d(s0, traced_at(e, cell_key(k, "pre0")), 1, 0);
        Var h1 = conv2d(s1, traced_at(e, cell_key(k, "pre1")), 1, 0);
        std::vector<Var> nodes = {h0, h1};
        std::vector<Var> intermediates;
        for (int j = 0; j < geno.n_nodes; ++j) {
            Var acc;
            for (int s = 0; s < 2; ++s) {
                const auto& slot = geno.nodes[static_cast<size_t>(j)][static_cast<size_t>(s)];
                const Var* kernel = nullptr;
                Var kvar;
                if (op_is_parametric(slot.op)) {
                    kvar = traced_at(e, cell_key(k, "node" + std::to_string(j + 2) + ".in" +
                                                        std::to_string(s) + "." + slot.op));
                    kernel = &kvar;
                }
                Var term =
                    apply_candidate_op(slot.op, nodes[static_cast<size_t>(slot.from)], kernel);
                acc = (s == 0) ? term : add(acc, term);
            }
            nodes.push_back(acc);
            intermediates.push_back(acc);
        }
        Var out = concat_channels(intermediates);
        s0 = s1;
        s1 = out;
    }
    return head(g, global_avg_pool(s1), e);
}

Tensor explainer_logits(const Tensor& x, const WeightMap& e, const ArchParams& a,
                        const ExplainerSpec& spec) {
    Graph g;
    return explainer_forward(g, g.constant(x), make_constants(g, e), g.constant(a.logits), spec)
        .value();
}

Tensor audience_logits(const Tensor& x, const WeightMap& w, const AudienceSpec& spec) {
    Graph g;
    return audience_forward(g, g.constant(x), make_constants(g, w), spec).value();
}

Tensor discrete_logits(const Tensor& x, const WeightMap& e, const Genotype& geno,
                       const ExplainerSpec& spec) {
    Graph g;
    return discrete_forward(g, g.constant(x), make_constants(g, e), geno, spec).value();
}

}  // namespace lease
