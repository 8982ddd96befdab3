#include "fedsa/num/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedsa/errors.hpp"

namespace fedsa::num {

namespace {

void check_dims(std::span<const std::size_t> dims) {
    if (dims.size() < 2) throw InvalidInput("layer_dims needs at least an input and an output layer");
    for (auto d : dims) {
        if (d == 0) throw InvalidInput("layer_dims entries must be positive");
    }
}

// Scratch buffers for one backprop pass, reused across mini-batches.
struct Workspace {
    std::vector<std::vector<double>> act;  // per layer, batch x width (post-activation)
    std::vector<double> delta;
    std::vector<double> delta_prev;
};

// Forward + backward over rows[0..batch). Accumulates the mean-loss gradient
// into `grad` (which must be zeroed by the caller) and returns the mean loss.
double backprop(std::span<const std::size_t> dims, std::span<const double> params,
                std::span<const double* const> rows, std::span<const int> labels, std::span<double> grad,
                Workspace& ws) {
    const std::size_t n_layers = dims.size() - 1;
    const std::size_t batch = rows.size();
    ws.act.resize(n_layers + 1);
    for (std::size_t l = 1; l <= n_layers; ++l) ws.act[l].assign(batch * dims[l], 0.0);

    // Forward.
    std::size_t offset = 0;
    std::vector<std::size_t> offsets(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        offsets[l] = offset;
        const std::size_t in = dims[l], out = dims[l + 1];
        const double* w = params.data() + offset;
        const double* b = w + in * out;
        for (std::size_t s = 0; s < batch; ++s) {
            const double* a = (l == 0) ? rows[s] : ws.act[l].data() + s * in;
            double* z = ws.act[l + 1].data() + s * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double* wr = w + o * in;
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += wr[i] * a[i];
                z[o] = (l + 1 < n_layers) ? std::max(acc, 0.0) : acc;
            }
        }
        offset += in * out + out;
    }

    // Softmax + cross-entropy; delta = (p - onehot) / batch.
    const std::size_t n_out = dims.back();
    const double inv_batch = 1.0 / static_cast<double>(batch);
    double loss = 0.0;
    ws.delta.assign(batch * n_out, 0.0);
    for (std::size_t s = 0; s < batch; ++s) {
        const double* z = ws.act[n_layers].data() + s * n_out;
        const double zmax = *std::max_element(z, z + n_out);
        double denom = 0.0;
        for (std::size_t o = 0; o < n_out; ++o) denom += std::exp(z[o] - zmax);
        const double log_denom = std::log(denom);
        const int y = labels[s];
        loss += -(z[y] - zmax - log_denom);
        for (std::size_t o = 0; o < n_out; ++o) {
            const double p = std::exp(z[o] - zmax - log_denom);
            ws.delta[s * n_out + o] = (p - (static_cast<int>(o) == y ? 1.0 : 0.0)) * inv_batch;
        }
    }

    // Backward.
    for (std::size_t l = n_layers; l-- > 0;) {
        const std::size_t in = dims[l], out = dims[l + 1];
        const double* w = params.data() + offsets[l];
        double* gw = grad.data() + offsets[l];
        double* gb = gw + in * out;
        const bool need_prev = l > 0;
        if (need_prev) ws.delta_prev.assign(batch * in, 0.0);
        for (std::size_t s = 0; s < batch; ++s) {
            const double* a = (l == 0) ? rows[s] : ws.act[l].data() + s * in;
            const double* d = ws.delta.data() + s * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                gb[o] += dv;
                double* gwr = gw + o * in;
                for (std::size_t i = 0; i < in; ++i) gwr[i] += dv * a[i];
                if (need_prev) {
                    const double* wr = w + o * in;
                    double* dp = ws.delta_prev.data() + s * in;
                    for (std::size_t i = 0; i < in; ++i) dp[i] += dv * wr[i];
                }
            }
            if (need_prev) {
                // ReLU derivative: the stored activation is zero where the unit was off.
                double* dp = ws.delta_prev.data() + s * in;
                for (std::size_t i = 0; i < in; ++i) {
                    if (a[i] <= 0.0) dp[i] = 0.0;
                }
            }
        }
        if (need_prev) ws.delta.swap(ws.delta_prev);
    }
    return loss * inv_batch;
}

}  // namespace

MlpModel::MlpModel(std::vector<std::size_t> dims, ParamVec p) : layer_dims(std::move(dims)), params(std::move(p)) {
    check_dims(layer_dims);
    if (params.size() != param_count(layer_dims)) {
        throw InvalidInput("MlpModel: expected " + std::to_string(param_count(layer_dims)) + " params, got " +
                           std::to_string(params.size()));
    }
}

std::size_t param_count(std::span<const std::size_t> layer_dims) {
    std::size_t r = 0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) r += layer_dims[l] * layer_dims[l + 1] + layer_dims[l + 1];
    return r;
}

MlpModel zero_model(std::vector<std::size_t> layer_dims) {
    check_dims(layer_dims);
    const auto r = param_count(layer_dims);
    return MlpModel(std::move(layer_dims), ParamVec(r, 0.0));
}

MlpModel uniform_init(std::vector<std::size_t> layer_dims, double half_width, RngStream& rng) {
    check_dims(layer_dims);
    ParamVec p(param_count(layer_dims));
    for (auto& v : p) v = rng.uniform(-half_width, half_width);
    return MlpModel(std::move(layer_dims), std::move(p));
}

std::vector<DenseLayer> unflatten(std::span<const std::size_t> layer_dims, std::span<const double> params) {
    check_dims(layer_dims);
    require_same_size(params.size(), param_count(layer_dims), "unflatten");
    std::vector<DenseLayer> layers;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        DenseLayer layer;
        layer.in = layer_dims[l];
        layer.out = layer_dims[l + 1];
        layer.weights.assign(params.begin() + off, params.begin() + off + layer.in * layer.out);
        off += layer.in * layer.out;
        layer.bias.assign(params.begin() + off, params.begin() + off + layer.out);
        off += layer.out;
        layers.push_back(std::move(layer));
    }
    return layers;
}

ParamVec flatten(const std::vector<DenseLayer>& layers) {
    ParamVec out;
    for (const auto& layer : layers) {
        out.insert(out.end(), layer.weights.begin(), layer.weights.end());
        out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    }
    return out;
}

namespace {

Matrix compute_logits(const MlpModel& model, const Matrix& batch) {
    if (batch.cols != model.n_inputs()) {
        throw InvalidInput("forward: batch width " + std::to_string(batch.cols) + " != input width " +
                           std::to_string(model.n_inputs()));
    }
    const auto& dims = model.layer_dims;
    const std::size_t n_layers = dims.size() - 1;
    Matrix logits(batch.rows, model.n_classes());
    std::vector<double> cur, next;
    for (std::size_t s = 0; s < batch.rows; ++s) {
        auto x = batch.row(s);
        cur.assign(x.begin(), x.end());
        std::size_t off = 0;
        for (std::size_t l = 0; l < n_layers; ++l) {
            const std::size_t in = dims[l], out = dims[l + 1];
            const double* w = model.params.data() + off;
            const double* b = w + in * out;
            next.assign(out, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double* wr = w + o * in;
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += wr[i] * cur[i];
                next[o] = (l + 1 < n_layers) ? std::max(acc, 0.0) : acc;
            }
            cur.swap(next);
            off += in * out + out;
        }
        std::copy(cur.begin(), cur.end(), logits.row(s).begin());
    }
    return logits;
}

}  // namespace

Matrix forward(const MlpModel& model, const Matrix& batch) {
    Matrix probs = compute_logits(model, batch);
    for (std::size_t s = 0; s < probs.rows; ++s) {
        auto row = probs.row(s);
        const double zmax = *std::max_element(row.begin(), row.end());
        double denom = 0.0;
        for (double z : row) denom += std::exp(z - zmax);
        for (double& z : row) z = std::exp(z - zmax) / denom;
    }
    return probs;
}

LossGrad loss_grad(const MlpModel& model, const Matrix& batch, std::span<const int> labels) {
    if (batch.rows == 0) throw InvalidInput("loss_grad: empty batch");
    if (batch.cols != model.n_inputs()) throw InvalidInput("loss_grad: batch width does not match input layer");
    require_same_size(batch.rows, labels.size(), "loss_grad labels");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= model.n_classes()) {
            throw InvalidInput("loss_grad: label " + std::to_string(y) + " out of range");
        }
    }
    std::vector<const double*> rows(batch.rows);
    for (std::size_t s = 0; s < batch.rows; ++s) rows[s] = batch.row(s).data();
    LossGrad out;
    out.grad.assign(model.params.size(), 0.0);
    Workspace ws;
    out.loss = backprop(model.layer_dims, model.params, rows, labels, out.grad, ws);
    return out;
}

MlpModel local_train(const MlpModel& model, const Dataset& data, std::span<const std::size_t> shard,
                     const TrainOptions& opts, RngStream& rng) {
    if (shard.empty()) throw InvalidInput("local_train: empty shard");
    if (opts.epochs < 1 || opts.batch_size < 1) throw InvalidInput("local_train: epochs and batch_size must be >= 1");
    if (!(opts.lr >= 0.0)) throw InvalidInput("local_train: lr must be non-negative");
    if (data.n_features() != model.n_inputs()) throw InvalidInput("local_train: feature width mismatch");

    MlpModel out = model;
    std::vector<std::size_t> order(shard.begin(), shard.end());
    std::vector<double> grad(out.params.size());
    std::vector<const double*> rows;
    std::vector<int> labels;
    Workspace ws;
    const auto bs = static_cast<std::size_t>(opts.batch_size);
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t stop = std::min(order.size(), start + bs);
            rows.clear();
            labels.clear();
            for (std::size_t k = start; k < stop; ++k) {
                rows.push_back(data.features.row(order[k]).data());
                labels.push_back(data.labels[order[k]]);
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            backprop(out.layer_dims, out.params, rows, labels, grad, ws);
            for (std::size_t i = 0; i < grad.size(); ++i) out.params[i] -= opts.lr * grad[i];
        }
    }
    return out;
}

MlpModel local_train(const MlpModel& model, const Dataset& shard, const TrainOptions& opts, RngStream& rng) {
    std::vector<std::size_t> all(shard.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return local_train(model, shard, all, opts, rng);
}

double evaluate_accuracy(const MlpModel& model, const Dataset& test) {
    if (test.size() == 0) throw InvalidInput("evaluate_accuracy: empty test set");
    const Matrix logits = compute_logits(model, test.features);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < test.size(); ++s) {
        auto row = logits.row(s);
        // max_element returns the first maximum, i.e. the lowest class id on ties.
        const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (pred == test.labels[s]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace fedsa::num
