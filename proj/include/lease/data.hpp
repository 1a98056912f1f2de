#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "lease/tensor.hpp"

namespace lease {

// Images in [0,1], one class index per image.
struct LabeledSet {
    Tensor images;  // (N, 1, H, W)
    std::vector<int> labels;

    int64_t size() const { return images.numel() == 0 ? 0 : images.dim(0); }
};

struct DatasetSplits {
    LabeledSet e_train, a_train, e_val, a_val;
};

struct Batch {
    Tensor x;  // (B, 1, H, W)
    std::vector<int> labels;
};

struct SynthSpec {
    int height = 8;
    int n_classes = 4;
    int n_per_split = 128;
    double noise = 0.1;
    uint64_t seed = 0;
};

// Oriented-bar images: horizontal, vertical, diagonal, anti-diagonal prototype
// plus clipped Gaussian pixel noise. Classes are balanced round-robin.
Tensor class_prototype(int k, int height);
LabeledSet generate_synthetic_set(const SynthSpec& spec, uint64_t seed, int n);
DatasetSplits generate_synthetic(const SynthSpec& spec);

// IDX-format reader (big-endian; magic 0x803 for images, 0x801 for labels).
LabeledSet load_idx(const std::string& images_path, const std::string& labels_path);

// Seeded shuffle, then contiguous partition; the remainder after flooring the
// fraction sizes goes to the earliest splits.
DatasetSplits split_four(const LabeledSet& ds, const std::array<double, 4>& fractions,
                         uint64_t seed);

LabeledSet take_subset(const LabeledSet& ds, const std::vector<int64_t>& indices);
LabeledSet concat_sets(const LabeledSet& a, const LabeledSet& b);

// Reshuffles each epoch; the final short batch is kept.
class BatchIterator {
  public:
    BatchIterator(const LabeledSet& set, int batch_size, uint64_t seed);
    Batch next();

  private:
    const LabeledSet* set_;
    int batch_size_;
    std::mt19937_64 rng_;
    std::vector<int64_t> order_;
    size_t cursor_ = 0;
    void reshuffle();
};

Tensor one_hot(const std::vector<int>& labels, int n_classes);

}  // namespace lease
