#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedsa/num/dataset.hpp"
#include "fedsa/rng.hpp"
#include "fedsa/vec.hpp"

namespace fedsa::num {

// Fully connected network: ReLU on hidden layers, softmax head. Parameters are
// stored flat, layer by layer, each layer as an out x in row-major weight
// block followed by its out biases.
struct MlpModel {
    std::vector<std::size_t> layer_dims;  // e.g. {784, 32, 10}
    ParamVec params;

    MlpModel() = default;
    MlpModel(std::vector<std::size_t> dims, ParamVec p);

    std::size_t n_inputs() const { return layer_dims.front(); }
    std::size_t n_classes() const { return layer_dims.back(); }
};

// r = sum over layers of (in * out + out).
std::size_t param_count(std::span<const std::size_t> layer_dims);

MlpModel zero_model(std::vector<std::size_t> layer_dims);
MlpModel uniform_init(std::vector<std::size_t> layer_dims, double half_width, RngStream& rng);

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> bias;     // out
};

std::vector<DenseLayer> unflatten(std::span<const std::size_t> layer_dims, std::span<const double> params);
ParamVec flatten(const std::vector<DenseLayer>& layers);

// Row-wise class probabilities.
Matrix forward(const MlpModel& model, const Matrix& batch);

struct LossGrad {
    double loss = 0.0;
    ParamVec grad;
};

// Mean softmax cross-entropy over the batch and its gradient w.r.t. params.
LossGrad loss_grad(const MlpModel& model, const Matrix& batch, std::span<const int> labels);

struct TrainOptions {
    int epochs = 1;
    int batch_size = 1;
    double lr = 0.01;
};

// Plain mini-batch SGD over the shard rows of `data`; the shard order is
// reshuffled from `rng` every epoch.
MlpModel local_train(const MlpModel& model, const Dataset& data, std::span<const std::size_t> shard,
                     const TrainOptions& opts, RngStream& rng);
MlpModel local_train(const MlpModel& model, const Dataset& shard, const TrainOptions& opts, RngStream& rng);

// Fraction of argmax-correct rows; ties go to the lowest class id.
double evaluate_accuracy(const MlpModel& model, const Dataset& test);

}  // namespace fedsa::num
