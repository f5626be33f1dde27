#include "ccam/order_task.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "ccam/rng.hpp"

namespace ccam {

OrderDataset make_order_dataset(const OrderDatasetSpec& spec) {
    if (spec.n_examples < 2 || spec.n_frames < 2 || spec.tokens < 1 || spec.channels < 1) {
        throw std::invalid_argument(
            "make_order_dataset: need >= 2 examples, >= 2 frames, >= 1 token and channel");
    }
    if (!(spec.noise >= 0.0)) throw std::invalid_argument("make_order_dataset: noise must be >= 0");

    Rng rng(spec.seed, kDatasetStream);
    OrderDataset data;
    data.spec = spec;
    data.event_a.resize(spec.channels);
    data.event_b.resize(spec.channels);
    for (Index c = 0; c < spec.channels; ++c) data.event_a(c) = rng.normal();
    for (Index c = 0; c < spec.channels; ++c) data.event_b(c) = rng.normal();

    std::vector<int> labels(static_cast<std::size_t>(spec.n_examples));
    for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = k < labels.size() / 2 ? 1 : 0;
    rng.shuffle(labels.begin(), labels.end());

    const Index tokens = spec.tokens;
    for (int label : labels) {
        const Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.n_frames)));
        Index second = static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.n_frames - 1)));
        if (second >= first) ++second;
        const Index early = std::min(first, second);
        const Index late = std::max(first, second);
        OrderExample ex{FrameEmbeddings<double>(spec.n_frames, tokens,
                                                Matrix::Zero(spec.n_frames * tokens, spec.channels)),
                        label, label == 1 ? early : late, label == 1 ? late : early};
        Matrix& x = ex.frames.tokens();
        x.middleRows(ex.time_a * tokens, tokens).rowwise() += data.event_a;
        x.middleRows(ex.time_b * tokens, tokens).rowwise() += data.event_b;
        if (spec.noise > 0.0) {
            for (Index k = 0; k < x.size(); ++k) x.data()[k] += spec.noise * rng.normal();
        }
        data.examples.push_back(std::move(ex));
    }

    std::vector<std::size_t> order(data.examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    const auto n_train = order.size() * 4 / 5;
    data.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    data.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return data;
}

double OrderProbe::logit(const FrameEmbeddings<double>& frames) const {
    const Matrix y = forward_video(projector, frames, mask);
    return y.colwise().mean().dot(readout) + bias;
}

double probe_accuracy(const OrderProbe& probe, const OrderDataset& data,
                      const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t k : indices) {
        const OrderExample& ex = data.examples[k];
        const int predicted = probe.logit(ex.frames) > 0.0 ? 1 : 0;
        correct += predicted == ex.label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

namespace {

double logistic_loss(double z, int label) {
    return std::max(z, 0.0) - (label == 1 ? z : 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double mean_loss(const OrderProbe& probe, const OrderDataset& data) {
    double total = 0.0;
    for (std::size_t k : data.train) {
        total += logistic_loss(probe.logit(data.examples[k].frames), data.examples[k].label);
    }
    return total / static_cast<double>(data.train.size());
}

}  // namespace

TrainReport train_order_probe(const ProjectorConfig& cfg, const OrderDataset& data, MaskRule rule,
                              const TrainOptions& options, OrderProbe* trained) {
    if (data.spec.channels != cfg.input_dim) {
        throw std::invalid_argument("train_order_probe: dataset has " +
                                    std::to_string(data.spec.channels) +
                                    " channels, projector expects " +
                                    std::to_string(cfg.input_dim));
    }
    if (options.epochs < 0 || options.batch_size < 1 || !(options.learning_rate > 0.0) ||
        options.momentum < 0.0 || options.momentum >= 1.0) {
        throw std::invalid_argument("train_order_probe: invalid training options");
    }
    if (data.train.empty()) throw std::invalid_argument("train_order_probe: empty training split");
    const auto start = std::chrono::steady_clock::now();

    ProjectorConfig run_cfg = cfg;
    run_cfg.mask_rule = rule;
    Rng rng(cfg.seed, kTrainStream);
    OrderProbe probe{init_params(run_cfg), build_mask(rule, cfg.n_queries, data.spec.n_frames),
                     RowVec<double>(cfg.model_dim), 0.0};
    const double readout_scale = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
    for (Index c = 0; c < cfg.model_dim; ++c) probe.readout(c) = readout_scale * rng.normal();

    // Momentum buffers, same layout as the parameters.
    ParamTensors<double> velocity = probe.projector;
    velocity.for_each([](std::string_view, Matrix& m) { m.setZero(); });
    RowVec<double> readout_velocity = RowVec<double>::Zero(cfg.model_dim);
    double bias_velocity = 0.0;

    TrainReport report;
    report.mask_rule = rule;
    report.use_tpe = cfg.use_tpe;
    report.epochs = options.epochs;
    report.seed = cfg.seed;

    const double inv_queries = 1.0 / static_cast<double>(cfg.n_queries);
    std::vector<std::size_t> order = data.train;
    std::size_t step = 0;
    for (Index epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(options.batch_size), ++step) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(options.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - begin);

            ParamTensors<double> grad = velocity;
            grad.for_each([](std::string_view, Matrix& m) { m.setZero(); });
            RowVec<double> readout_grad = RowVec<double>::Zero(cfg.model_dim);
            double bias_grad = 0.0;
            double batch_loss = 0.0;

            for (std::size_t k = begin; k < end; ++k) {
                const OrderExample& ex = data.examples[order[k]];
                ForwardTrace<double> trace;
                try {
                    trace = forward_trace(probe.projector, ex.frames, probe.mask);
                } catch (const NumericError& e) {
                    throw NumericError("train_order_probe: diverged at epoch " +
                                       std::to_string(epoch) + ", step " + std::to_string(step) +
                                       ": " + e.what());
                }
                const RowVec<double> pooled = trace.output.colwise().mean();
                const double z = pooled.dot(probe.readout) + probe.bias;
                batch_loss += logistic_loss(z, ex.label);
                const double dz = (sigmoid(z) - ex.label) * inv_batch;
                readout_grad += dz * pooled;
                bias_grad += dz;
                const Matrix upstream =
                    Matrix::Ones(cfg.n_queries, 1) * (dz * inv_queries * probe.readout);
                const Gradients<double> g = backward(probe.projector, trace, upstream);
                std::vector<const Matrix*> parts;
                g.for_each([&](std::string_view, const Matrix& m) { parts.push_back(&m); });
                std::size_t s = 0;
                grad.for_each([&](std::string_view, Matrix& m) { m += *parts[s++]; });
            }
            if (!std::isfinite(batch_loss)) {
                throw NumericError("train_order_probe: loss diverged at epoch " +
                                   std::to_string(epoch) + ", step " + std::to_string(step));
            }

            std::vector<Matrix*> grads;
            grad.for_each([&](std::string_view, Matrix& m) { grads.push_back(&m); });
            std::vector<Matrix*> params;
            probe.projector.for_each([&](std::string_view, Matrix& m) { params.push_back(&m); });
            std::size_t s = 0;
            velocity.for_each([&](std::string_view, Matrix& v) {
                v = options.momentum * v + *grads[s];
                *params[s] -= options.learning_rate * v;
                ++s;
            });
            readout_velocity = options.momentum * readout_velocity + readout_grad;
            probe.readout -= options.learning_rate * readout_velocity;
            bias_velocity = options.momentum * bias_velocity + bias_grad;
            probe.bias -= options.learning_rate * bias_velocity;
        }
        double loss = std::numeric_limits<double>::quiet_NaN();
        try {
            loss = mean_loss(probe, data);
        } catch (const NumericError&) {
        }
        if (!std::isfinite(loss)) {
            throw NumericError("train_order_probe: loss diverged at epoch " +
                               std::to_string(epoch) + ", step " + std::to_string(step));
        }
        report.loss_curve.push_back(loss);
    }

    report.train_accuracy = probe_accuracy(probe, data, data.train);
    report.test_accuracy = probe_accuracy(probe, data, data.test);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (trained) *trained = std::move(probe);
    return report;
}

}  // namespace ccam
