#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ccam/projector.hpp"

namespace ccam {

/// Gradients of a scalar with respect to every projector tensor and the
/// input frames (same layout as FrameEmbeddings::tokens()).
template <typename Scalar>
struct Gradients : ParamTensors<Scalar> {
    Mat<Scalar> frames;
};

namespace detail {

template <typename Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dy, const Mat<Scalar>& x_hat,
                                const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& rstd,
                                const Mat<Scalar>& gain, Mat<Scalar>& d_gain,
                                Mat<Scalar>& d_bias) {
    d_gain = (dy.array() * x_hat.array()).colwise().sum().matrix();
    d_bias = dy.colwise().sum();
    const Mat<Scalar> dx_hat = (dy.array().rowwise() * gain.row(0).array()).matrix();
    const Scalar width = static_cast<Scalar>(dy.cols());
    Mat<Scalar> dx(dy.rows(), dy.cols());
    for (Index i = 0; i < dy.rows(); ++i) {
        const Scalar mean_d = dx_hat.row(i).sum() / width;
        const Scalar mean_dx = dx_hat.row(i).dot(x_hat.row(i)) / width;
        dx.row(i) =
            rstd(i) * (dx_hat.row(i).array() - mean_d - x_hat.row(i).array() * mean_dx).matrix();
    }
    return dx;
}

}  // namespace detail

/// Reverse-mode gradients of <upstream, output> for a recorded forward pass.
template <typename Scalar>
Gradients<Scalar> backward(const ProjectorParams<Scalar>& p, const ForwardTrace<Scalar>& t,
                           const Mat<Scalar>& upstream) {
    if (upstream.rows() != t.output.rows() || upstream.cols() != t.output.cols()) {
        throw std::invalid_argument("backward: upstream " + shape_of(upstream) +
                                    " vs output " + shape_of(t.output));
    }
    Gradients<Scalar> g;

    // Feed-forward sublayer.
    Mat<Scalar> d_hidden = upstream;
    g.ffn_out = t.ffn_act.transpose() * upstream;
    g.ffn_out_bias = upstream.colwise().sum();
    const Mat<Scalar> d_act = upstream * p.ffn_out.transpose();
    const Mat<Scalar> d_pre =
        (d_act.array() *
         t.ffn_pre.unaryExpr([](Scalar u) { return detail::gelu_grad(u); }).array())
            .matrix();
    g.ffn_in = t.hidden_norm.transpose() * d_pre;
    g.ffn_in_bias = d_pre.colwise().sum();
    const Mat<Scalar> d_hidden_norm = d_pre * p.ffn_in.transpose();
    d_hidden += detail::layer_norm_backward(d_hidden_norm, t.hidden_hat, t.hidden_rstd,
                                            p.norm2_gain, g.norm2_gain, g.norm2_bias);

    // Attention sublayer.
    g.queries = d_hidden;
    g.out_proj = t.attention.transpose() * d_hidden;
    const Mat<Scalar> d_attention = d_hidden * p.out_proj.transpose();

    const Index d = p.config.head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
    Mat<Scalar> d_query_norm(t.query_norm.rows(), t.query_norm.cols());
    Mat<Scalar> d_keys(t.keys.rows(), t.keys.cols());
    Mat<Scalar> d_values(t.values.rows(), t.values.cols());
    for (Index h = 0; h < p.config.n_heads; ++h) {
        const Mat<Scalar>& w = t.weights[static_cast<std::size_t>(h)];
        const auto d_out = d_attention.middleCols(h * d, d);
        d_values.middleCols(h * d, d) = w.transpose() * d_out;
        const Mat<Scalar> d_w = d_out * t.values.middleCols(h * d, d).transpose();
        // Softmax Jacobian; masked weights are exact zeros so their logits get none.
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner =
            (d_w.array() * w.array()).rowwise().sum();
        const Mat<Scalar> d_logits =
            (w.array() * (d_w.array().colwise() - inner.array())).matrix() * scale;
        d_query_norm.middleCols(h * d, d) = d_logits * t.keys.middleCols(h * d, d);
        d_keys.middleCols(h * d, d) = d_logits.transpose() * t.query_norm.middleCols(h * d, d);
    }
    g.queries += detail::layer_norm_backward(d_query_norm, t.query_hat, t.query_rstd,
                                             p.norm1_gain, g.norm1_gain, g.norm1_bias);
    g.key_proj = t.tokens.transpose() * d_keys;
    g.value_proj = t.tokens.transpose() * d_values;
    // The temporal embedding is additive, so it passes gradients unchanged.
    g.frames = d_keys * p.key_proj.transpose() + d_values * p.value_proj.transpose();
    return g;
}

template <typename Scalar>
Gradients<Scalar> backward(const ProjectorParams<Scalar>& p, const FrameEmbeddings<Scalar>& frames,
                           const FrameMask& mask, const Mat<Scalar>& upstream) {
    return backward(p, forward_trace(p, frames, mask), upstream);
}

/// (f(theta + h) - f(theta - h)) / 2h.
inline double central_difference(const std::function<double(double)>& f, double theta,
                                 double h = 1e-5) {
    return (f(theta + h) - f(theta - h)) / (2.0 * h);
}

/// Central-difference gradient of scalar_loss(forward_video(...)) with
/// respect to every parameter coordinate and every frame coordinate.
template <typename Loss>
Gradients<double> finite_diff(const ProjectorParams<double>& params,
                              const FrameEmbeddings<double>& frames, const FrameMask& mask,
                              Loss&& scalar_loss, double h = 1e-5) {
    ProjectorParams<double> probe = params;
    FrameEmbeddings<double> probe_frames = frames;
    auto evaluate = [&] { return scalar_loss(forward_video(probe, probe_frames, mask)); };
    auto differentiate = [&](Matrix& target, Matrix& out) {
        out.resize(target.rows(), target.cols());
        for (Index k = 0; k < target.size(); ++k) {
            double& slot = target.data()[k];
            const double saved = slot;
            out.data()[k] = central_difference(
                [&](double v) {
                    slot = v;
                    return evaluate();
                },
                saved, h);
            slot = saved;
        }
    };

    Gradients<double> g;
    std::vector<Matrix*> targets;
    probe.for_each([&](std::string_view, Matrix& m) { targets.push_back(&m); });
    std::size_t k = 0;
    g.for_each([&](std::string_view, Matrix& out) { differentiate(*targets[k++], out); });
    differentiate(probe_frames.tokens(), g.frames);
    return g;
}

/// Per-section agreement between analytic and numeric gradients.
struct GradientComparison {
    std::string section;
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    Index checked = 0;  ///< coordinates with |analytic| above the floor
};

/// Relative error |a - n| / |a| over coordinates with |a| > floor.
std::vector<GradientComparison> compare_gradients(const Gradients<double>& analytic,
                                                  const Gradients<double>& numeric,
                                                  double floor = 1e-8);

}  // namespace ccam
