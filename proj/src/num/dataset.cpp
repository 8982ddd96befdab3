#include "fedsa/num/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "fedsa/errors.hpp"

namespace fedsa::num {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.n_classes = n_classes;
    out.features = Matrix(indices.size(), features.cols);
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= size()) throw InvalidInput("Dataset::subset: index out of range");
        auto src = features.row(indices[k]);
        std::copy(src.begin(), src.end(), out.features.row(k).begin());
        out.labels.push_back(labels[indices[k]]);
    }
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

bool Partition::valid_for(std::size_t n_samples) const {
    std::vector<char> seen(n_samples, 0);
    for (const auto& shard : assignments) {
        if (shard.empty()) return false;
        for (auto idx : shard) {
            if (idx >= n_samples || seen[idx]) return false;
            seen[idx] = 1;
        }
    }
    return true;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string(), 0, "cannot open file");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const std::string& path) {
    if (off + 4 > buf.size()) throw FormatError(path, off, "truncated header");
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
           std::uint32_t{buf[off + 3]};
}

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       std::size_t limit) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);
    const std::string ip = images_path.string(), lp = labels_path.string();

    if (auto magic = read_be32(img, 0, ip); magic != 0x00000803u) {
        throw FormatError(ip, 0, "bad image magic " + std::to_string(magic));
    }
    const std::size_t n_img = read_be32(img, 4, ip);
    const std::size_t n_rows = read_be32(img, 8, ip);
    const std::size_t n_cols = read_be32(img, 12, ip);
    if (auto magic = read_be32(lab, 0, lp); magic != 0x00000801u) {
        throw FormatError(lp, 0, "bad label magic " + std::to_string(magic));
    }
    const std::size_t n_lab = read_be32(lab, 4, lp);
    if (n_lab != n_img) {
        throw FormatError(lp, 4, "label count " + std::to_string(n_lab) + " != image count " + std::to_string(n_img));
    }
    const std::size_t pixels = n_rows * n_cols;
    if (img.size() < 16 + n_img * pixels) throw FormatError(ip, img.size(), "truncated image payload");
    if (lab.size() < 8 + n_lab) throw FormatError(lp, lab.size(), "truncated label payload");

    const std::size_t n = (limit == 0) ? n_img : std::min(limit, n_img);
    Dataset ds;
    ds.features = Matrix(n, pixels);
    ds.labels.resize(n);
    int max_label = -1;
    for (std::size_t s = 0; s < n; ++s) {
        const unsigned char* src = img.data() + 16 + s * pixels;
        auto row = ds.features.row(s);
        for (std::size_t p = 0; p < pixels; ++p) row[p] = static_cast<double>(src[p]) / 255.0;
        ds.labels[s] = lab[8 + s];
        max_label = std::max(max_label, ds.labels[s]);
    }
    ds.n_classes = max_label + 1;
    return ds;
}

Dataset gen_synthetic(int n_classes, int n_features, int n_samples, double separation, RngStream& rng) {
    if (n_classes <= 0 || n_features <= 0 || n_samples <= 0) throw InvalidInput("gen_synthetic: sizes must be positive");
    if (separation < 0.0) throw InvalidInput("gen_synthetic: separation must be non-negative");
    const auto k = static_cast<std::size_t>(n_classes);
    const auto d = static_cast<std::size_t>(n_features);

    // Class means: scaled basis vectors, so any two sit `separation` apart.
    // With more classes than features, fall back to random directions.
    Matrix means(k, d);
    const double radius = separation / std::sqrt(2.0);
    for (std::size_t c = 0; c < k; ++c) {
        if (k <= d) {
            means(c, c) = radius;
        } else {
            auto row = means.row(c);
            double nrm = 0.0;
            for (auto& v : row) {
                v = rng.normal();
                nrm += v * v;
            }
            for (auto& v : row) v *= radius / std::sqrt(nrm);
        }
    }

    Dataset ds;
    ds.n_classes = n_classes;
    ds.features = Matrix(static_cast<std::size_t>(n_samples), d);
    ds.labels.resize(static_cast<std::size_t>(n_samples));
    for (std::size_t s = 0; s < ds.labels.size(); ++s) {
        const auto c = s % k;
        ds.labels[s] = static_cast<int>(c);
        auto row = ds.features.row(s);
        for (std::size_t j = 0; j < d; ++j) row[j] = means(c, j) + rng.normal();
    }
    return ds;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.n_classes));
    for (std::size_t s = 0; s < data.size(); ++s) by_class[static_cast<std::size_t>(data.labels[s])].push_back(s);
    return by_class;
}

}  // namespace

Partition iid_partition(const Dataset& data, std::size_t n_clients, RngStream& rng) {
    if (n_clients == 0) throw InvalidInput("iid_partition: need at least one client");
    if (n_clients > data.size()) {
        throw InvalidInput("iid_partition: " + std::to_string(n_clients) + " clients for " +
                           std::to_string(data.size()) + " samples");
    }
    Partition part;
    part.assignments.resize(n_clients);
    // The dealing cursor carries over between classes so leftovers rotate
    // through the clients instead of always landing on client 0.
    std::size_t cursor = 0;
    for (auto& idx : indices_by_class(data)) {
        rng.shuffle(std::span<std::size_t>(idx));
        for (auto s : idx) {
            part.assignments[cursor].push_back(s);
            cursor = (cursor + 1) % n_clients;
        }
    }
    return part;
}

Partition dirichlet_partition(const Dataset& data, std::size_t n_clients, double alpha, RngStream& rng) {
    if (!(alpha > 0.0)) throw InvalidInput("dirichlet_partition: alpha must be > 0");
    if (n_clients == 0) throw InvalidInput("dirichlet_partition: need at least one client");
    if (n_clients > data.size()) {
        throw ConfigError("dirichlet_partition: cannot give " + std::to_string(n_clients) +
                          " clients a sample each from " + std::to_string(data.size()));
    }
    const auto by_class = indices_by_class(data);
    constexpr int kMaxRedraws = 100;

    Partition part;
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        part.assignments.assign(n_clients, {});
        for (auto idx : by_class) {
            if (idx.empty()) continue;
            rng.shuffle(std::span<std::size_t>(idx));
            std::vector<double> props(n_clients);
            double total = 0.0;
            for (auto& p : props) {
                p = rng.gamma(alpha);
                total += p;
            }
            if (!(total > 0.0)) {
                // Every gamma draw underflowed; a tiny alpha concentrates the mass on one client.
                std::fill(props.begin(), props.end(), 0.0);
                props[rng.index(n_clients)] = 1.0;
                total = 1.0;
            }
            double cum = 0.0;
            std::size_t begin = 0;
            for (std::size_t c = 0; c < n_clients; ++c) {
                cum += props[c] / total;
                const std::size_t end =
                    (c + 1 == n_clients) ? idx.size()
                                         : std::min(idx.size(), static_cast<std::size_t>(std::floor(cum * idx.size())));
                for (std::size_t k = begin; k < std::max(begin, end); ++k) part.assignments[c].push_back(idx[k]);
                begin = std::max(begin, end);
            }
        }
        const bool all_nonempty = std::none_of(part.assignments.begin(), part.assignments.end(),
                                               [](const auto& a) { return a.empty(); });
        if (all_nonempty) return part;
    }

    // Still empty shards after the redraw budget: hand each one a sample from
    // the currently largest client.
    for (auto& shard : part.assignments) {
        if (!shard.empty()) continue;
        auto largest = std::max_element(part.assignments.begin(), part.assignments.end(),
                                        [](const auto& a, const auto& b) { return a.size() < b.size(); });
        if (largest->size() < 2) throw ConfigError("dirichlet_partition: cannot make every shard non-empty");
        shard.push_back(largest->back());
        largest->pop_back();
    }
    return part;
}

double mean_normalized_label_entropy(const Dataset& data, const Partition& part) {
    if (part.clients() == 0 || data.n_classes < 2) return 0.0;
    const double log_k = std::log(static_cast<double>(data.n_classes));
    double acc = 0.0;
    for (const auto& shard : part.assignments) {
        std::vector<double> hist(static_cast<std::size_t>(data.n_classes), 0.0);
        for (auto s : shard) hist[static_cast<std::size_t>(data.labels[s])] += 1.0;
        double h = 0.0;
        for (double c : hist) {
            if (c > 0.0) {
                const double p = c / static_cast<double>(shard.size());
                h -= p * std::log(p);
            }
        }
        acc += h / log_k;
    }
    return acc / static_cast<double>(part.clients());
}

}  // namespace fedsa::num
