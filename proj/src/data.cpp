#include "lease/data.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>

#include "lease/weights.hpp"

namespace lease {

Tensor class_prototype(int k, int height) {
    if (k < 0 || k > 3) throw ConfigError("synthetic data supports at most 4 classes");
    Tensor img({1, 1, height, height});
    int64_t h = height;
    int64_t mid = h / 2;
    for (int64_t i = 0; i < h; ++i) {
        switch (k) {
            case 0: img[img.at4(0, 0, mid, i)] = 1.0; break;      // horizontal bar
            case 1: img[img.at4(0, 0, i, mid)] = 1.0; break;      // vertical bar
            case 2: img[img.at4(0, 0, i, i)] = 1.0; break;        // diagonal
            case 3: img[img.at4(0, 0, i, h - 1 - i)] = 1.0; break;  // anti-diagonal
        }
    }
    return img;
}

LabeledSet generate_synthetic_set(const SynthSpec& spec, uint64_t seed, int n) {
    if (spec.height < 2) throw ConfigError("synthetic height must be >= 2");
    if (spec.n_classes < 2 || spec.n_classes > 4)
        throw ConfigError("synthetic n_classes must be in [2,4]");
    if (spec.noise < 0.0) throw ConfigError("synthetic noise must be nonnegative");
    if (n < spec.n_classes) throw ConfigError("split size must be >= number of classes");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, spec.noise);
    int64_t h = spec.height;
    LabeledSet out;
    out.images = Tensor({n, 1, h, h});
    out.labels.resize(static_cast<size_t>(n));

    std::vector<Tensor> protos;
    for (int k = 0; k < spec.n_classes; ++k) protos.push_back(class_prototype(k, spec.height));

    for (int i = 0; i < n; ++i) {
        int k = i % spec.n_classes;  // balanced
        out.labels[static_cast<size_t>(i)] = k;
        const Tensor& p = protos[static_cast<size_t>(k)];
        for (int64_t j = 0; j < h * h; ++j) {
            double v = p[j] + (spec.noise > 0.0 ? noise(rng) : 0.0);
            out.images[static_cast<int64_t>(i) * h * h + j] = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

DatasetSplits generate_synthetic(const SynthSpec& spec) {
    DatasetSplits s;
    s.e_train = generate_synthetic_set(spec, mix_seed(spec.seed, 11), spec.n_per_split);
    s.a_train = generate_synthetic_set(spec, mix_seed(spec.seed, 12), spec.n_per_split);
    s.e_val = generate_synthetic_set(spec, mix_seed(spec.seed, 13), spec.n_per_split);
    s.a_val = generate_synthetic_set(spec, mix_seed(spec.seed, 14), spec.n_per_split);
    return s;
}

namespace {

uint32_t read_be32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IdxTruncatedError("idx: truncated header in '" + path + "'");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace

LabeledSet load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IdxError("idx: cannot open '" + images_path + "'");
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IdxError("idx: cannot open '" + labels_path + "'");

    uint32_t magic_i = read_be32(imgs, images_path);
    if (magic_i != 0x00000803u)
        throw IdxBadMagicError("idx: bad image magic in '" + images_path + "'");
    uint32_t n_images = read_be32(imgs, images_path);
    uint32_t rows = read_be32(imgs, images_path);
    uint32_t cols = read_be32(imgs, images_path);

    uint32_t magic_l = read_be32(labs, labels_path);
    if (magic_l != 0x00000801u)
        throw IdxBadMagicError("idx: bad label magic in '" + labels_path + "'");
    uint32_t n_labels = read_be32(labs, labels_path);

    if (n_images != n_labels)
        throw IdxCountMismatchError("idx: " + std::to_string(n_images) + " images vs " +
                                    std::to_string(n_labels) + " labels");

    LabeledSet out;
    if (n_images == 0) {
        out.images = Tensor();
        return out;
    }

    size_t n_pix = size_t(n_images) * rows * cols;
    std::vector<unsigned char> pix(n_pix);
    if (!imgs.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(n_pix)))
        throw IdxTruncatedError("idx: truncated image data in '" + images_path + "'");
    std::vector<unsigned char> lab(n_labels);
    if (!labs.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(n_labels)))
        throw IdxTruncatedError("idx: truncated label data in '" + labels_path + "'");

    out.images = Tensor({int64_t(n_images), 1, int64_t(rows), int64_t(cols)});
    for (size_t i = 0; i < n_pix; ++i)
        out.images[static_cast<int64_t>(i)] = static_cast<double>(pix[i]) / 255.0;
    out.labels.assign(lab.begin(), lab.end());
    return out;
}

LabeledSet take_subset(const LabeledSet& ds, const std::vector<int64_t>& indices) {
    int64_t h = ds.images.dim(2), w = ds.images.dim(3);
    int64_t per = h * w;
    LabeledSet out;
    out.images = Tensor({static_cast<int64_t>(indices.size()), 1, h, w});
    out.labels.resize(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        int64_t src = indices[i];
        for (int64_t j = 0; j < per; ++j)
            out.images[static_cast<int64_t>(i) * per + j] = ds.images[src * per + j];
        out.labels[i] = ds.labels[static_cast<size_t>(src)];
    }
    return out;
}

LabeledSet concat_sets(const LabeledSet& a, const LabeledSet& b) {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    if (a.images.dim(2) != b.images.dim(2) || a.images.dim(3) != b.images.dim(3))
        throw ShapeError("concat_sets: image sizes differ");
    LabeledSet out;
    int64_t h = a.images.dim(2), w = a.images.dim(3);
    out.images = Tensor({a.size() + b.size(), 1, h, w});
    std::copy(a.images.vec().begin(), a.images.vec().end(), out.images.vec().begin());
    std::copy(b.images.vec().begin(), b.images.vec().end(),
              out.images.vec().begin() + a.images.numel());
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

DatasetSplits split_four(const LabeledSet& ds, const std::array<double, 4>& fractions,
                         uint64_t seed) {
    double fsum = fractions[0] + fractions[1] + fractions[2] + fractions[3];
    if (std::abs(fsum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

    int64_t n = ds.size();
    std::array<int64_t, 4> sizes{};
    int64_t assigned = 0;
    for (int i = 0; i < 4; ++i) {
        sizes[static_cast<size_t>(i)] = static_cast<int64_t>(fractions[static_cast<size_t>(i)] *
                                                             static_cast<double>(n));
        assigned += sizes[static_cast<size_t>(i)];
    }
    for (int i = 0; assigned < n; ++i, ++assigned) sizes[static_cast<size_t>(i % 4)] += 1;
    for (int i = 0; i < 4; ++i)
        if (sizes[static_cast<size_t>(i)] == 0)
            throw ConfigError("split fraction " + std::to_string(i) +
                              " rounds to an empty split");

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    DatasetSplits out;
    int64_t off = 0;
    LabeledSet* dests[4] = {&out.e_train, &out.a_train, &out.e_val, &out.a_val};
    for (int i = 0; i < 4; ++i) {
        std::vector<int64_t> idx(order.begin() + off, order.begin() + off + sizes[static_cast<size_t>(i)]);
        *dests[i] = take_subset(ds, idx);
        off += sizes[static_cast<size_t>(i)];
    }
    return out;
}

BatchIterator::BatchIterator(const LabeledSet& set, int batch_size, uint64_t seed)
    : set_(&set), batch_size_(batch_size), rng_(seed) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (set.size() == 0) throw ConfigError("cannot iterate an empty set");
    order_.resize(static_cast<size_t>(set.size()));
    reshuffle();
}

void BatchIterator::reshuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

Batch BatchIterator::next() {
    if (cursor_ >= order_.size()) reshuffle();
    size_t take = std::min(static_cast<size_t>(batch_size_), order_.size() - cursor_);
    std::vector<int64_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                             order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
    cursor_ += take;
    LabeledSet sub = take_subset(*set_, idx);
    return Batch{std::move(sub.images), std::move(sub.labels)};
}

Tensor one_hot(const std::vector<int>& labels, int n_classes) {
    Tensor t({static_cast<int64_t>(labels.size()), n_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw ConfigError("label " + std::to_string(labels[i]) + " out of range");
        t[t.at2(static_cast<int64_t>(i), labels[i])] = 1.0;
    }
    return t;
}

}  // namespace lease
