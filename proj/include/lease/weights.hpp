#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>

#include "lease/tensor.hpp"

namespace lease {

// Named collection of tensors. std::map keeps iteration order deterministic,
// which every seeded init and checkpoint relies on.
using WeightMap = std::map<std::string, Tensor>;

WeightMap wm_zeros_like(const WeightMap& a);
WeightMap wm_add_scaled(const WeightMap& a, const WeightMap& b, double s);  // a + s*b
WeightMap wm_scale(const WeightMap& a, double s);
double wm_norm(const WeightMap& a);
double wm_dot(const WeightMap& a, const WeightMap& b);
bool wm_all_finite(const WeightMap& a);
int64_t wm_numel(const WeightMap& a);

// Plain-text checkpoint: one `tensor <name> <rank> <d0> ... <dk>` line followed
// by one line of values with round-trip precision.
void save_weights(const std::string& path, const WeightMap& w);
WeightMap load_weights(const std::string& path);

// Deterministic stream splitting: one run seed, independent substreams per role.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

void fill_normal(std::mt19937_64& rng, Tensor& t, double stddev);
void fill_uniform(std::mt19937_64& rng, Tensor& t, double lo, double hi);

}  // namespace lease
