#include "lease/weights.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lease/errors.hpp"

namespace lease {

namespace {
void require_same_keys(const char* what, const WeightMap& a, const WeightMap& b) {
    if (a.size() != b.size())
        throw ShapeError(std::string(what) + ": weight maps differ in entry count");
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first)
            throw ShapeError(std::string(what) + ": weight maps differ at entry '" + ia->first +
                             "' vs '" + ib->first + "'");
        require_same_shape(what, ia->second, ib->second);
    }
}
}  // namespace

WeightMap wm_zeros_like(const WeightMap& a) {
    WeightMap out;
    for (const auto& [k, v] : a) out.emplace(k, Tensor::zeros(v.shape()));
    return out;
}

WeightMap wm_add_scaled(const WeightMap& a, const WeightMap& b, double s) {
    require_same_keys("wm_add_scaled", a, b);
    WeightMap out = a;
    auto ib = b.begin();
    for (auto io = out.begin(); io != out.end(); ++io, ++ib) {
        double* d = io->second.data();
        const double* src = ib->second.data();
        for (int64_t i = 0; i < io->second.numel(); ++i) d[i] += s * src[i];
    }
    return out;
}

WeightMap wm_scale(const WeightMap& a, double s) {
    WeightMap out = a;
    for (auto& [k, v] : out)
        for (int64_t i = 0; i < v.numel(); ++i) v[i] *= s;
    return out;
}

double wm_norm(const WeightMap& a) { return std::sqrt(wm_dot(a, a)); }

double wm_dot(const WeightMap& a, const WeightMap& b) {
    require_same_keys("wm_dot", a, b);
    double s = 0.0;
    auto ib = b.begin();
    for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib)
        for (int64_t i = 0; i < ia->second.numel(); ++i) s += ia->second[i] * ib->second[i];
    return s;
}

bool wm_all_finite(const WeightMap& a) {
    for (const auto& [k, v] : a)
        if (!v.all_finite()) return false;
    return true;
}

int64_t wm_numel(const WeightMap& a) {
    int64_t n = 0;
    for (const auto& [k, v] : a) n += v.numel();
    return n;
}

void save_weights(const std::string& path, const WeightMap& w) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    os << "# lease tensors v1\n";
    char buf[32];
    for (const auto& [name, t] : w) {
        os << "tensor " << name << " " << t.rank();
        for (int64_t d : t.shape()) os << " " << d;
        os << "\n";
        for (int64_t i = 0; i < t.numel(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", t[i]);
            os << (i ? " " : "") << buf;
        }
        os << "\n";
    }
}

WeightMap load_weights(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open '" + path + "' for reading");
    WeightMap out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream hs(line);
        std::string kw, name;
        int rank = 0;
        hs >> kw >> name >> rank;
        if (kw != "tensor" || name.empty() || rank < 0 || !hs)
            throw ConfigError("bad tensor header in '" + path + "': " + line);
        std::vector<int64_t> shape(static_cast<size_t>(rank));
        for (auto& d : shape) hs >> d;
        if (!hs) throw ConfigError("bad tensor shape in '" + path + "': " + line);
        if (!std::getline(is, line))
            throw ConfigError("missing values for tensor '" + name + "' in '" + path + "'");
        std::istringstream vs(line);
        std::vector<double> vals(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : vals)
            if (!(vs >> v))
                throw ConfigError("short value row for tensor '" + name + "' in '" + path + "'");
        out.emplace(name, Tensor(std::move(shape), std::move(vals)));
    }
    return out;
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    // splitmix64 over seed ^ golden-ratio-scaled stream index
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void fill_normal(std::mt19937_64& rng, Tensor& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

void fill_uniform(std::mt19937_64& rng, Tensor& t, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

}  // namespace lease
