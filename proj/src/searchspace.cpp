#include "lease/searchspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lease {

void CellSpec::validate() const {
    if (n_nodes < 1) throw ConfigError("cell: n_nodes must be >= 1");
    if (channels < 1) throw ConfigError("cell: channels must be >= 1");
    if (ops.empty()) throw ConfigError("cell: candidate op list is empty");
    if (std::find(ops.begin(), ops.end(), "zero") == ops.end())
        throw ConfigError("cell: candidate op list must include 'zero'");
    for (const auto& op : ops)
        if (op != "zero" && op != "skip" && op != "conv3x3_relu" && op != "avg_pool3" &&
            op != "max_pool3")
            throw ConfigError("cell: unknown candidate op '" + op + "'");
}

int num_edges(const CellSpec& spec) {
    int n = 0;
    for (int j = 2; j < spec.n_nodes + 2; ++j) n += j;
    return n;
}

std::pair<int, int> edge_endpoints(const CellSpec& spec, int e) {
    for (int j = 2; j < spec.n_nodes + 2; ++j) {
        if (e < j) return {e, j};
        e -= j;
    }
    throw ShapeError("edge_endpoints: edge index out of range");
}

int edge_index(const CellSpec& spec, int i, int j) {
    if (j < 2 || j >= spec.n_nodes + 2 || i < 0 || i >= j)
        throw ShapeError("edge_index: invalid edge (" + std::to_string(i) + "->" +
                         std::to_string(j) + ")");
    int base = 0;
    for (int t = 2; t < j; ++t) base += t;
    return base + i;
}

bool op_is_parametric(const std::string& op) { return op == "conv3x3_relu"; }

ArchParams init_arch(const CellSpec& spec, uint64_t seed, double init_scale) {
    ArchParams a;
    a.logits = Tensor({num_edges(spec), spec.num_ops()});
    std::mt19937_64 rng(seed);
    fill_normal(rng, a.logits, init_scale);
    return a;
}

Genotype discretize(const ArchParams& a, const CellSpec& spec) {
    require_finite("discretize", a.logits);
    int E = num_edges(spec), K = spec.num_ops();
    if (a.logits.rank() != 2 || a.logits.dim(0) != E || a.logits.dim(1) != K)
        throw ShapeError("discretize: logits shape " + a.logits.shape_str() +
                         " does not match the cell spec");

    // Best non-zero op and its softmax weight, per edge.
    std::vector<double> best_w(static_cast<size_t>(E), -1.0);
    std::vector<int> best_op(static_cast<size_t>(E), -1);
    for (int e = 0; e < E; ++e) {
        double m = -1e300;
        for (int o = 0; o < K; ++o) m = std::max(m, a.logits[a.logits.at2(e, o)]);
        double z = 0.0;
        std::vector<double> w(static_cast<size_t>(K));
        for (int o = 0; o < K; ++o) {
            w[static_cast<size_t>(o)] = std::exp(a.logits[a.logits.at2(e, o)] - m);
            z += w[static_cast<size_t>(o)];
        }
        for (int o = 0; o < K; ++o) {
            if (spec.ops[static_cast<size_t>(o)] == "zero") continue;
            double sw = w[static_cast<size_t>(o)] / z;
            if (sw > best_w[static_cast<size_t>(e)]) {
                best_w[static_cast<size_t>(e)] = sw;
                best_op[static_cast<size_t>(e)] = o;
            }
        }
        if (best_op[static_cast<size_t>(e)] < 0)
            throw ConfigError("discretize: no non-zero candidate op available");
    }

    Genotype g;
    g.n_nodes = spec.n_nodes;
    for (int j = 2; j < spec.n_nodes + 2; ++j) {
        std::vector<int> in_edges;
        for (int i = 0; i < j; ++i) in_edges.push_back(edge_index(spec, i, j));
        std::stable_sort(in_edges.begin(), in_edges.end(), [&](int ea, int eb) {
            if (best_w[static_cast<size_t>(ea)] != best_w[static_cast<size_t>(eb)])
                return best_w[static_cast<size_t>(ea)] > best_w[static_cast<size_t>(eb)];
            return ea < eb;
        });
        std::array<GenotypeSlot, 2> slots;
        for (int s = 0; s < 2; ++s) {
            int e = in_edges[static_cast<size_t>(s)];
            slots[static_cast<size_t>(s)] = {
                edge_endpoints(spec, e).first,
                spec.ops[static_cast<size_t>(best_op[static_cast<size_t>(e)])]};
        }
        // Present slots in input order for a stable file format.
        if (slots[0].from > slots[1].from) std::swap(slots[0], slots[1]);
        g.nodes.push_back(slots);
    }
    return g;
}

void save_genotype(const std::string& path, const Genotype& g) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    os << "# lease genotype v1\n";
    os << "nodes = " << g.n_nodes << "\n";
    for (int j = 0; j < g.n_nodes; ++j) {
        const auto& slots = g.nodes[static_cast<size_t>(j)];
        os << "node" << (j + 2) << " = " << slots[0].from << ":" << slots[0].op << ", "
           << slots[1].from << ":" << slots[1].op << "\n";
    }
}

Genotype load_genotype(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open genotype file '" + path + "'");
    Genotype g;
    std::string line;
    int expected = -1;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("genotype: missing '=' in line: " + line);
        auto trim = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "nodes") {
            expected = std::stoi(val);
            if (expected < 1) throw ConfigError("genotype: nodes must be >= 1");
        } else if (key.rfind("node", 0) == 0) {
            int j = std::stoi(key.substr(4));
            std::array<GenotypeSlot, 2> slots;
            std::istringstream vs(val);
            std::string part;
            int s = 0;
            while (std::getline(vs, part, ',')) {
                part = trim(part);
                auto colon = part.find(':');
                if (colon == std::string::npos || s >= 2)
                    throw ConfigError("genotype: bad slot list for " + key);
                slots[static_cast<size_t>(s)].from = std::stoi(part.substr(0, colon));
                slots[static_cast<size_t>(s)].op = trim(part.substr(colon + 1));
                if (slots[static_cast<size_t>(s)].op == "zero")
                    throw ConfigError("genotype: retained op may not be 'zero'");
                ++s;
            }
            if (s != 2) throw ConfigError("genotype: node needs exactly 2 inputs: " + key);
            if (static_cast<int>(g.nodes.size()) != j - 2)
                throw ConfigError("genotype: nodes out of order at " + key);
            for (const auto& slot : slots)
                if (slot.from < 0 || slot.from >= j)
                    throw ConfigError("genotype: input out of range at " + key);
            g.nodes.push_back(slots);
        } else {
            throw ConfigError("genotype: unknown key '" + key + "'");
        }
    }
    g.n_nodes = static_cast<int>(g.nodes.size());
    if (g.n_nodes == 0) throw ConfigError("genotype: no nodes in '" + path + "'");
    if (expected >= 0 && expected != g.n_nodes)
        throw ConfigError("genotype: declared node count " + std::to_string(expected) +
                          " does not match " + std::to_string(g.n_nodes));
    return g;
}

bool genotype_equal(const Genotype& a, const Genotype& b) {
    if (a.n_nodes != b.n_nodes) return false;
    for (size_t j = 0; j < a.nodes.size(); ++j)
        for (size_t s = 0; s < 2; ++s)
            if (a.nodes[j][s].from != b.nodes[j][s].from || a.nodes[j][s].op != b.nodes[j][s].op)
                return false;
    return true;
}

Var apply_candidate_op(const std::string& op, Var x, const Var* kernel) {
    if (op == "skip") return x;
    if (op == "conv3x3_relu") {
        if (kernel == nullptr) throw ShapeError("candidate op conv3x3_relu: missing kernel");
        return relu(conv2d(x, *kernel, 1, 1));
    }
    if (op == "avg_pool3") return avg_pool3(x);
    if (op == "max_pool3") return max_pool3(x);
    throw ShapeError("unknown candidate op '" + op + "'");
}

Var mixed_edge_forward(Var x, Var edge_logits, const std::map<std::string, Var>& edge_kernels,
                       const CellSpec& spec) {
    const Tensor& lv = edge_logits.value();
    if (lv.rank() != 2 || lv.dim(0) != 1 || lv.dim(1) != spec.num_ops())
        throw ShapeError("mixed_edge_forward: logits shape " + lv.shape_str() +
                         " does not match " + std::to_string(spec.num_ops()) + " candidate ops");

    Var weights = softmax_rows(edge_logits);
    Var out;
    bool first = true;
    for (int o = 0; o < spec.num_ops(); ++o) {
        const std::string& op = spec.ops[static_cast<size_t>(o)];
        if (op == "zero") continue;  // exact zero contribution
        const Var* kernel = nullptr;
        if (op_is_parametric(op)) {
            auto it = edge_kernels.find(op);
            if (it == edge_kernels.end())
                throw ShapeError("mixed_edge_forward: missing kernel for op '" + op + "'");
            kernel = &it->second;
        }
        Var term = mul(apply_candidate_op(op, x, kernel), select_elem(weights, 0, o));
        out = first ? term : add(out, term);
        first = false;
    }
    if (first) {
        // only `zero` in the op list: constant zeros, no gradient path
        return x.graph()->constant(Tensor::zeros(x.value().shape()));
    }
    return out;
}

Var cell_forward(Var in0, Var in1, Var arch_logits,
                 const std::vector<std::map<std::string, Var>>& edge_kernels,
                 const CellSpec& spec) {
    require_same_shape("cell_forward", in0.value(), in1.value());
    if (static_cast<int>(edge_kernels.size()) != num_edges(spec))
        throw ShapeError("cell_forward: kernel list does not cover every edge");

    std::vector<Var> nodes = {in0, in1};
    for (int j = 2; j < spec.n_nodes + 2; ++j) {
        Var acc;
        for (int i = 0; i < j; ++i) {
            int e = edge_index(spec, i, j);
            Var term = mixed_edge_forward(nodes[static_cast<size_t>(i)],
                                          select_row(arch_logits, e),
                                          edge_kernels[static_cast<size_t>(e)], spec);
            acc = (i == 0) ? term : add(acc, term);
        }
        nodes.push_back(acc);
    }
    return concat_channels(std::vector<Var>(nodes.begin() + 2, nodes.end()));
}

}  // namespace lease
