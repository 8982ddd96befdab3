#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "fedsa/rng.hpp"

namespace fedsa::num {

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct Dataset {
    Matrix features;          // n_samples x n_features
    std::vector<int> labels;  // dense class ids in [0, n_classes)
    int n_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t n_features() const noexcept { return features.cols; }

    // Rows selected by `indices`, in that order.
    Dataset subset(std::span<const std::size_t> indices) const;
    // Per-class sample counts.
    std::vector<std::size_t> class_counts() const;
};

// Per-client sample indices into one Dataset.
struct Partition {
    std::vector<std::vector<std::size_t>> assignments;

    std::size_t clients() const noexcept { return assignments.size(); }
    // Disjoint, in range, every client non-empty.
    bool valid_for(std::size_t n_samples) const;
};

// Reads an IDX image/label pair (big-endian headers, unsigned byte payloads).
// Pixels are scaled by 1/255. `limit` keeps only the first `limit` samples
// (0 keeps all). Throws FormatError with the offending byte offset.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, std::size_t limit = 0);

// Isotropic unit-variance Gaussian blobs, one per class, with class means at
// pairwise distance `separation`. Labels are balanced (sample i has class
// i mod n_classes).
Dataset gen_synthetic(int n_classes, int n_features, int n_samples, double separation,
                      RngStream& rng);

// Class-stratified IID split; per-class counts differ by at most one across
// clients and leftovers are dealt round-robin by client index.
Partition iid_partition(const Dataset& data, std::size_t n_clients, RngStream& rng);

// Label-skewed split: per class, proportions ~ Dirichlet(alpha * 1_N).
Partition dirichlet_partition(const Dataset& data, std::size_t n_clients, double alpha,
                              RngStream& rng);

// Mean over clients of the label entropy divided by log(n_classes).
double mean_normalized_label_entropy(const Dataset& data, const Partition& part);

}  // namespace fedsa::num
