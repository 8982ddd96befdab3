#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fedsa/errors.hpp"
#include "fedsa/num/dataset.hpp"
#include "fedsa/num/mlp.hpp"

using namespace fedsa;
using namespace fedsa::num;

namespace {

Dataset make_dataset(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels, int n_classes) {
    Dataset d;
    d.features = Matrix(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), d.features.row(i).begin());
    d.labels = labels;
    d.n_classes = n_classes;
    return d;
}

// n_per_class samples for each class, one feature holding the label.
Dataset labelled(int n_classes, int n_per_class) {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int c = 0; c < n_classes; ++c) {
        for (int i = 0; i < n_per_class; ++i) {
            rows.push_back({static_cast<double>(c)});
            labels.push_back(c);
        }
    }
    return make_dataset(rows, labels, n_classes);
}

std::vector<std::size_t> random_dims(RngStream& rng, std::size_t max_params) {
    for (;;) {
        std::vector<std::size_t> dims{1 + rng.index(6)};
        const std::size_t hidden = rng.index(3);
        for (std::size_t h = 0; h < hidden; ++h) dims.push_back(1 + rng.index(6));
        dims.push_back(2 + rng.index(4));
        if (param_count(dims) <= max_params) return dims;
    }
}

Matrix random_batch(RngStream& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.normal();
    return m;
}

void expect_valid_partition(const Partition& p, std::size_t n) {
    EXPECT_TRUE(p.valid_for(n));
    std::set<std::size_t> seen;
    for (const auto& a : p.assignments) {
        EXPECT_FALSE(a.empty());
        for (auto s : a) {
            EXPECT_LT(s, n);
            EXPECT_TRUE(seen.insert(s).second) << "index " << s << " assigned twice";
        }
    }
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxFiles {
    std::filesystem::path images, labels;
};

IdxFiles write_idx(const std::string& tag, std::uint32_t n_img, std::uint32_t n_lab, std::uint32_t img_magic = 0x803,
                   std::uint32_t lab_magic = 0x801, std::size_t drop_tail = 0) {
    const auto dir = std::filesystem::temp_directory_path() / ("fedsa_idx_" + tag);
    std::filesystem::create_directories(dir);
    IdxFiles f{dir / "images", dir / "labels"};
    {
        std::ofstream out(f.images, std::ios::binary);
        write_be32(out, img_magic);
        write_be32(out, n_img);
        write_be32(out, 28);
        write_be32(out, 28);
        std::vector<unsigned char> px(static_cast<std::size_t>(n_img) * 784);
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<unsigned char>(i % 256);
        out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size() - drop_tail));
    }
    {
        std::ofstream out(f.labels, std::ios::binary);
        write_be32(out, lab_magic);
        write_be32(out, n_lab);
        for (std::uint32_t i = 0; i < n_lab; ++i) out.put(static_cast<char>(i % 10));
    }
    return f;
}

}  // namespace

TEST(RngStream, SameSeedAndStreamRepeat) {
    RngStream a(7, 3), b(7, 3), c(7, 4);
    std::vector<double> xa, xb, xc;
    for (int i = 0; i < 50; ++i) {
        xa.push_back(a.normal());
        xb.push_back(b.normal());
        xc.push_back(c.normal());
    }
    EXPECT_EQ(xa, xb);
    EXPECT_NE(xa, xc);
}

TEST(Mlp, ParamCountSumsLayerBlocks) {
    const std::vector<std::size_t> dims{784, 32, 10};
    EXPECT_EQ(param_count(dims), 784u * 32 + 32 + 32 * 10 + 10);
    EXPECT_THROW(zero_model({5}), InvalidInput);
    EXPECT_THROW(zero_model({5, 0, 2}), InvalidInput);
}

TEST(Mlp, FlattenUnflattenRoundTripsBitExact) {
    RngStream rng(11, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto dims = random_dims(rng, 400);
        ParamVec p(param_count(dims));
        for (auto& v : p) v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
        const auto back = flatten(unflatten(dims, p));
        ASSERT_EQ(back.size(), p.size());
        EXPECT_EQ(0, std::memcmp(back.data(), p.data(), p.size() * sizeof(double)));
    }
}

TEST(Mlp, ZeroModelGivesUniformProbabilities) {
    const auto m = zero_model({3, 4, 5});
    RngStream rng(1, 1);
    const auto probs = forward(m, random_batch(rng, 6, 3));
    for (double v : probs.data) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(Mlp, SingleLayerSoftmaxByHand) {
    // logits = W x + b with W = [[2, 0], [0, 1]], b = [0.5, -0.5], x = [1, 0]
    MlpModel m({2, 2}, {2.0, 0.0, 0.0, 1.0, 0.5, -0.5});
    Matrix x(1, 2);
    x(0, 0) = 1.0;
    const auto p = forward(m, x);
    const double z0 = 2.5, z1 = -0.5;
    const double denom = std::exp(z0) + std::exp(z1);
    EXPECT_NEAR(p(0, 0), std::exp(z0) / denom, 1e-15);
    EXPECT_NEAR(p(0, 1), std::exp(z1) / denom, 1e-15);
}

TEST(Mlp, ProbabilityRowsSumToOne) {
    RngStream rng(2, 2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto dims = random_dims(rng, 200);
        const auto m = uniform_init(dims, 3.0, rng);
        const auto p = forward(m, random_batch(rng, 7, dims.front()));
        for (std::size_t i = 0; i < p.rows; ++i) {
            double s = 0.0;
            for (double v : p.row(i)) {
                EXPECT_GE(v, 0.0);
                s += v;
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Mlp, ForwardRejectsWidthMismatch) {
    const auto m = zero_model({3, 2});
    EXPECT_THROW(forward(m, Matrix(1, 4)), InvalidInput);
}

// Central differences with step 1e-5 against backprop, 100 random nets.
TEST(Mlp, GradientMatchesCentralDifferences) {
    RngStream rng(99, 0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto dims = random_dims(rng, 200);
        auto model = uniform_init(dims, 1.0, rng);
        const std::size_t rows = 1 + rng.index(6);
        const auto batch = random_batch(rng, rows, dims.front());
        std::vector<int> labels(rows);
        for (auto& y : labels) y = static_cast<int>(rng.index(dims.back()));

        const auto analytic = loss_grad(model, batch, labels).grad;
        ASSERT_EQ(analytic.size(), model.params.size());
        const double h = 1e-5;
        double num = 0.0, den = 1e-8;
        for (std::size_t j = 0; j < model.params.size(); ++j) {
            const double keep = model.params[j];
            model.params[j] = keep + h;
            const double up = loss_grad(model, batch, labels).loss;
            model.params[j] = keep - h;
            const double down = loss_grad(model, batch, labels).loss;
            model.params[j] = keep;
            const double fd = (up - down) / (2 * h);
            num = std::max(num, std::abs(fd - analytic[j]));
            den = std::max({den, std::abs(fd), std::abs(analytic[j])});
        }
        worst = std::max(worst, num / den);
    }
    EXPECT_LE(worst, 1e-4);
}

TEST(Mlp, ConfidentCorrectModelHasVanishingLossAndGradient) {
    // Bias of class 1 dominates every logit.
    MlpModel m({2, 3}, {0, 0, 0, 0, 0, 0, 0.0, 60.0, 0.0});
    Matrix x(2, 2);
    x(0, 0) = 0.3;
    x(1, 1) = -0.7;
    const auto lg = loss_grad(m, x, std::vector<int>{1, 1});
    EXPECT_GE(lg.loss, 0.0);
    EXPECT_LT(lg.loss, 1e-20);
    for (double g : lg.grad) EXPECT_LT(std::abs(g), 1e-20);
}

TEST(Mlp, DuplicatingTheBatchLeavesLossAndGradient) {
    RngStream rng(5, 5);
    const auto m = uniform_init({4, 3, 3}, 1.0, rng);
    const auto x = random_batch(rng, 3, 4);
    Matrix xx(6, 4);
    std::copy(x.data.begin(), x.data.end(), xx.data.begin());
    std::copy(x.data.begin(), x.data.end(), xx.data.begin() + 12);
    const std::vector<int> y{0, 2, 1}, yy{0, 2, 1, 0, 2, 1};
    const auto a = loss_grad(m, x, y), b = loss_grad(m, xx, yy);
    EXPECT_NEAR(a.loss, b.loss, 1e-14);
    for (std::size_t j = 0; j < a.grad.size(); ++j) EXPECT_NEAR(a.grad[j], b.grad[j], 1e-14);
}

TEST(Mlp, LossGradRejectsBadBatches) {
    const auto m = zero_model({2, 3});
    EXPECT_THROW(loss_grad(m, Matrix(0, 2), std::vector<int>{}), InvalidInput);
    EXPECT_THROW(loss_grad(m, Matrix(1, 2), std::vector<int>{3}), InvalidInput);
    EXPECT_THROW(loss_grad(m, Matrix(1, 2), std::vector<int>{-1}), InvalidInput);
}

TEST(LocalTrain, ZeroLearningRateKeepsParamsExactly) {
    RngStream rng(3, 0);
    const auto data = gen_synthetic(3, 4, 60, 3.0, rng);
    const auto m = uniform_init({4, 5, 3}, 0.5, rng);
    RngStream train_rng(3, 1);
    const auto out = local_train(m, data, {2, 4, 0.0}, train_rng);
    EXPECT_EQ(out.params, m.params);
}

TEST(LocalTrain, LogisticRegressionSeparatesOneDimensionalData) {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 1; i <= 20; ++i) {
        rows.push_back({0.05 * i});
        labels.push_back(1);
        rows.push_back({-0.05 * i});
        labels.push_back(0);
    }
    const auto data = make_dataset(rows, labels, 2);
    RngStream rng(4, 0);
    const auto out = local_train(zero_model({1, 2}), data, {50, 4, 0.5}, rng);
    EXPECT_DOUBLE_EQ(evaluate_accuracy(out, data), 1.0);
}

TEST(LocalTrain, SameStreamIsBitIdentical) {
    RngStream g(8, 0);
    const auto data = gen_synthetic(4, 6, 200, 2.0, g);
    const auto m = uniform_init({6, 8, 4}, 0.1, g);
    RngStream a(8, 17), b(8, 17);
    EXPECT_EQ(local_train(m, data, {3, 5, 0.05}, a).params, local_train(m, data, {3, 5, 0.05}, b).params);
}

TEST(LocalTrain, RejectsEmptyShardAndBadOptions) {
    RngStream rng(1, 0);
    const auto data = gen_synthetic(2, 2, 10, 1.0, rng);
    const auto m = zero_model({2, 2});
    EXPECT_THROW(local_train(m, data, std::vector<std::size_t>{}, {1, 1, 0.1}, rng), InvalidInput);
    EXPECT_THROW(local_train(m, data, {0, 1, 0.1}, rng), InvalidInput);
    EXPECT_THROW(local_train(m, data, {1, 0, 0.1}, rng), InvalidInput);
}

TEST(Accuracy, ConstantPredictorScoresItsClassFraction) {
    auto data = labelled(4, 5);  // 20 rows, 5 of class 2
    MlpModel m({1, 4}, {0, 0, 0, 0, 0, 0, 1.0, 0});
    EXPECT_DOUBLE_EQ(evaluate_accuracy(m, data), 0.25);
}

TEST(Accuracy, ZeroModelPredictsClassZeroByTieBreak) {
    RngStream rng(6, 0);
    const auto data = gen_synthetic(10, 5, 1000, 4.0, rng);
    const auto counts = data.class_counts();
    EXPECT_DOUBLE_EQ(evaluate_accuracy(zero_model({5, 10}), data),
                     static_cast<double>(counts[0]) / static_cast<double>(data.size()));
}

TEST(Accuracy, InvariantToRowPermutation) {
    RngStream rng(7, 0);
    const auto data = gen_synthetic(3, 4, 90, 2.0, rng);
    const auto m = uniform_init({4, 6, 3}, 1.0, rng);
    std::vector<std::size_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    const double a = evaluate_accuracy(m, data);
    EXPECT_DOUBLE_EQ(a, evaluate_accuracy(m, data.subset(perm)));
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
}

TEST(Synthetic, ZeroSeparationIsUnlearnable) {
    RngStream rng(12, 0);
    const auto train = gen_synthetic(4, 6, 800, 0.0, rng);
    const auto test = gen_synthetic(4, 6, 4000, 0.0, rng);
    RngStream t(12, 1);
    const auto m = local_train(zero_model({6, 4}), train, {5, 10, 0.05}, t);
    EXPECT_LE(evaluate_accuracy(m, test), 0.25 + 0.05);
}

TEST(Synthetic, WideSeparationIsLinearlySolvable) {
    RngStream rng(13, 0);
    const auto data = gen_synthetic(2, 5, 1000, 10.0, rng);
    RngStream t(13, 1);
    const auto m = local_train(zero_model({5, 2}), data, {5, 10, 0.05}, t);
    EXPECT_GE(evaluate_accuracy(m, data), 0.99);
}

TEST(Synthetic, FixedSeedReproduces) {
    RngStream a(14, 0), b(14, 0);
    const auto x = gen_synthetic(3, 4, 50, 2.0, a), y = gen_synthetic(3, 4, 50, 2.0, b);
    EXPECT_EQ(x.features.data, y.features.data);
    EXPECT_EQ(x.labels, y.labels);
}

TEST(IidPartition, TenByTenGivesOnePerClass) {
    const auto data = labelled(10, 10);
    RngStream rng(1, 0);
    const auto p = iid_partition(data, 10, rng);
    expect_valid_partition(p, 100);
    for (const auto& shard : p.assignments) {
        std::vector<int> hist(10, 0);
        for (auto s : shard) ++hist[static_cast<std::size_t>(data.labels[s])];
        for (int h : hist) EXPECT_EQ(h, 1);
    }
}

TEST(IidPartition, ClassHistogramsDifferByAtMostOne) {
    RngStream rng(2, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng.index(8));
        std::vector<std::vector<double>> rows;
        std::vector<int> labels;
        const std::size_t n = 20 + rng.index(300);
        for (std::size_t i = 0; i < n; ++i) {
            labels.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(k))));
            rows.push_back({0.0});
        }
        const auto data = make_dataset(rows, labels, k);
        const std::size_t clients = 1 + rng.index(std::min<std::size_t>(n, 20));
        const auto p = iid_partition(data, clients, rng);
        std::size_t total = 0;
        for (const auto& a : p.assignments) total += a.size();
        EXPECT_EQ(total, n);
        EXPECT_TRUE(p.valid_for(n));
        for (int c = 0; c < k; ++c) {
            std::size_t lo = SIZE_MAX, hi = 0;
            for (const auto& shard : p.assignments) {
                const auto cnt = static_cast<std::size_t>(
                    std::count_if(shard.begin(), shard.end(), [&](std::size_t s) { return data.labels[s] == c; }));
                lo = std::min(lo, cnt);
                hi = std::max(hi, cnt);
            }
            EXPECT_LE(hi - lo, 1u);
        }
    }
}

TEST(IidPartition, MoreClientsThanSamplesIsInvalid) {
    RngStream rng(3, 0);
    EXPECT_THROW(iid_partition(labelled(2, 2), 5, rng), InvalidInput);
}

TEST(DirichletPartition, HugeAlphaIsNearlyUniform) {
    const auto data = labelled(5, 10000);
    RngStream rng(4, 0);
    const auto p = dirichlet_partition(data, 10, 1e6, rng);
    expect_valid_partition(p, data.size());
    for (const auto& shard : p.assignments) {
        std::vector<double> hist(5, 0.0);
        for (auto s : shard) hist[static_cast<std::size_t>(data.labels[s])] += 1.0;
        for (double h : hist) EXPECT_NEAR(h, 1000.0, 50.0);
    }
}

TEST(DirichletPartition, SmallAlphaSkewsLabelsMoreThanLargeAlpha) {
    RngStream g(5, 0);
    const auto data = gen_synthetic(10, 2, 5000, 1.0, g);
    double low = 0.0, high = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngStream a(seed, 1), b(seed, 2);
        const auto p1 = dirichlet_partition(data, 50, 0.1, a);
        const auto p9 = dirichlet_partition(data, 50, 0.9, b);
        expect_valid_partition(p1, data.size());
        expect_valid_partition(p9, data.size());
        low += mean_normalized_label_entropy(data, p1);
        high += mean_normalized_label_entropy(data, p9);
    }
    EXPECT_LT(low / 20, high / 20);
}

TEST(DirichletPartition, EveryShardNonEmptyEvenWhenTight) {
    const auto data = labelled(2, 15);
    RngStream rng(6, 0);
    const auto p = dirichlet_partition(data, 25, 0.05, rng);
    expect_valid_partition(p, data.size());
    EXPECT_THROW(dirichlet_partition(data, 31, 0.5, rng), ConfigError);
    EXPECT_THROW(dirichlet_partition(data, 3, 0.0, rng), InvalidInput);
}

TEST(MnistIdx, ParsesHeaderAndScalesPixels) {
    const auto f = write_idx("ok", 10000, 10000);
    const auto d = load_mnist_idx(f.images, f.labels);
    EXPECT_EQ(d.size(), 10000u);
    EXPECT_EQ(d.n_features(), 784u);
    EXPECT_EQ(d.n_classes, 10);
    EXPECT_DOUBLE_EQ(d.features.data[255], 1.0);
    EXPECT_DOUBLE_EQ(d.features.data[0], 0.0);
    EXPECT_EQ(d.labels[13], 3);
    EXPECT_EQ(load_mnist_idx(f.images, f.labels, 25).size(), 25u);
}

TEST(MnistIdx, CountMismatchReportsLabelHeaderOffset) {
    const auto f = write_idx("count", 20, 19);
    try {
        load_mnist_idx(f.images, f.labels);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
}

TEST(MnistIdx, BadMagicAndTruncationAreFormatErrors) {
    const auto magic = write_idx("magic", 5, 5, 0x804);
    try {
        load_mnist_idx(magic.images, magic.labels);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
    const auto lab = write_idx("labmagic", 5, 5, 0x803, 0x803);
    EXPECT_THROW(load_mnist_idx(lab.images, lab.labels), FormatError);
    const auto cut = write_idx("cut", 5, 5, 0x803, 0x801, 10);
    EXPECT_THROW(load_mnist_idx(cut.images, cut.labels), FormatError);
    EXPECT_THROW(load_mnist_idx("/nonexistent/images", "/nonexistent/labels"), FormatError);
}
