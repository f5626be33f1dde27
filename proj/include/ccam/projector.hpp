#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ccam/masks.hpp"
#include "ccam/numkernel.hpp"

namespace ccam {

struct ProjectorConfig {
    Index n_queries = 1024;
    Index model_dim = 64;
    Index input_dim = 32;
    Index n_heads = 8;
    Index ffn_expansion = 4;
    MaskRule mask_rule = MaskRule::CcamFloor;
    bool use_tpe = false;
    std::uint64_t seed = 0;

    Index head_dim() const { return model_dim / n_heads; }
    Index ffn_dim() const { return ffn_expansion * model_dim; }
    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    friend bool operator==(const ProjectorConfig&, const ProjectorConfig&) = default;
};

/// The learnable tensors of the projector, visited in a fixed section order.
/// Gains and biases are stored as 1 x dim matrices.
template <typename Scalar>
struct ParamTensors {
    Mat<Scalar> queries;       // N x C
    Mat<Scalar> key_proj;      // C_in x C
    Mat<Scalar> value_proj;    // C_in x C
    Mat<Scalar> out_proj;      // C x C
    Mat<Scalar> ffn_in;        // C x F
    Mat<Scalar> ffn_in_bias;   // 1 x F
    Mat<Scalar> ffn_out;       // F x C
    Mat<Scalar> ffn_out_bias;  // 1 x C
    Mat<Scalar> norm1_gain;    // 1 x C
    Mat<Scalar> norm1_bias;
    Mat<Scalar> norm2_gain;
    Mat<Scalar> norm2_bias;

    template <typename F>
    void for_each(F&& f) {
        visit(*this, f);
    }
    template <typename F>
    void for_each(F&& f) const {
        visit(*this, f);
    }

private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f) {
        f(std::string_view("queries"), self.queries);
        f(std::string_view("key_proj"), self.key_proj);
        f(std::string_view("value_proj"), self.value_proj);
        f(std::string_view("out_proj"), self.out_proj);
        f(std::string_view("ffn_in"), self.ffn_in);
        f(std::string_view("ffn_in_bias"), self.ffn_in_bias);
        f(std::string_view("ffn_out"), self.ffn_out);
        f(std::string_view("ffn_out_bias"), self.ffn_out_bias);
        f(std::string_view("norm1_gain"), self.norm1_gain);
        f(std::string_view("norm1_bias"), self.norm1_bias);
        f(std::string_view("norm2_gain"), self.norm2_gain);
        f(std::string_view("norm2_bias"), self.norm2_bias);
    }
};

template <typename Scalar>
struct ProjectorParams : ParamTensors<Scalar> {
    ProjectorConfig config;
};

/// Gaussian init from cfg.seed: projections with std 1/sqrt(fan_in), queries
/// with std 1/sqrt(C), gains 1, biases 0.
ProjectorParams<double> init_params(const ProjectorConfig& cfg);

template <typename To, typename From>
ProjectorParams<To> cast_params(const ProjectorParams<From>& p) {
    ProjectorParams<To> out;
    out.config = p.config;
    std::vector<const Mat<From>*> mats;
    p.for_each([&](std::string_view, const Mat<From>& m) { mats.push_back(&m); });
    std::size_t k = 0;
    out.for_each([&](std::string_view, Mat<To>& m) { m = mats[k++]->template cast<To>(); });
    return out;
}

/// A sampled video: frames x tokens x channels, stored as one
/// (frames * tokens) x channels matrix with frame-major rows.
template <typename Scalar>
class FrameEmbeddings {
public:
    FrameEmbeddings(Index n_frames, Index tokens_per_frame, Mat<Scalar> data)
        : n_frames_(n_frames), tokens_(tokens_per_frame), data_(std::move(data)) {
        if (n_frames_ < 1 || tokens_ < 1 || data_.cols() < 1 ||
            data_.rows() != n_frames_ * tokens_) {
            throw std::invalid_argument("frame embeddings: " + std::to_string(n_frames_) +
                                        " frames of " + std::to_string(tokens_) +
                                        " tokens do not fit a " + shape_of(data_) + " matrix");
        }
        require_finite(data_, "frame embeddings");
    }

    static FrameEmbeddings from_frames(const std::vector<Mat<Scalar>>& frames) {
        if (frames.empty()) throw std::invalid_argument("frame embeddings: no frames");
        const Index tokens = frames.front().rows();
        Mat<Scalar> data(static_cast<Index>(frames.size()) * tokens, frames.front().cols());
        for (std::size_t j = 0; j < frames.size(); ++j) {
            if (frames[j].rows() != tokens || frames[j].cols() != data.cols()) {
                throw std::invalid_argument("frame embeddings: frame " + std::to_string(j) +
                                            " is " + shape_of(frames[j]) + ", expected " +
                                            std::to_string(tokens) + "x" +
                                            std::to_string(data.cols()));
            }
            data.middleRows(static_cast<Index>(j) * tokens, tokens) = frames[j];
        }
        return FrameEmbeddings(static_cast<Index>(frames.size()), tokens, std::move(data));
    }

    Index n_frames() const { return n_frames_; }
    Index tokens_per_frame() const { return tokens_; }
    Index channels() const { return data_.cols(); }
    Index n_tokens() const { return data_.rows(); }

    const Mat<Scalar>& tokens() const { return data_; }
    Mat<Scalar>& tokens() { return data_; }
    Mat<Scalar> frame(Index j) const { return data_.middleRows(j * tokens_, tokens_); }

    /// Frames reordered so that new frame k is old frame order[k].
    FrameEmbeddings permuted(const std::vector<Index>& order) const {
        Mat<Scalar> out(data_.rows(), data_.cols());
        for (std::size_t k = 0; k < order.size(); ++k) {
            out.middleRows(static_cast<Index>(k) * tokens_, tokens_) =
                data_.middleRows(order[k] * tokens_, tokens_);
        }
        return FrameEmbeddings(n_frames_, tokens_, std::move(out));
    }

    /// The given frames, in the given order.
    FrameEmbeddings select(const std::vector<Index>& frames) const {
        Mat<Scalar> out(static_cast<Index>(frames.size()) * tokens_, data_.cols());
        for (std::size_t k = 0; k < frames.size(); ++k) {
            out.middleRows(static_cast<Index>(k) * tokens_, tokens_) =
                data_.middleRows(frames[k] * tokens_, tokens_);
        }
        return FrameEmbeddings(static_cast<Index>(frames.size()), tokens_, std::move(out));
    }

    template <typename To>
    FrameEmbeddings<To> cast() const {
        return FrameEmbeddings<To>(n_frames_, tokens_, data_.template cast<To>());
    }

private:
    Index n_frames_;
    Index tokens_;
    Mat<Scalar> data_;
};

/// Sinusoidal embedding of frame index j over `channels` channels: channel
/// 2k carries sin(j / 10000^(2k/channels)), channel 2k+1 the matching cos.
template <typename Scalar>
RowVec<Scalar> temporal_embedding(Index frame, Index channels) {
    RowVec<Scalar> e(channels);
    for (Index c = 0; c < channels; ++c) {
        const Index pair = c / 2;
        const double rate =
            std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(channels));
        const double angle = static_cast<double>(frame) * rate;
        e(c) = static_cast<Scalar>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
    return e;
}

/// Adds the frame-index embedding to every token of each frame.
template <typename Scalar>
FrameEmbeddings<Scalar> add_tpe(const FrameEmbeddings<Scalar>& frames) {
    Mat<Scalar> data = frames.tokens();
    const Index tokens = frames.tokens_per_frame();
    for (Index j = 0; j < frames.n_frames(); ++j) {
        const RowVec<Scalar> e = temporal_embedding<Scalar>(j, frames.channels());
        data.middleRows(j * tokens, tokens).rowwise() += e;
    }
    return FrameEmbeddings<Scalar>(frames.n_frames(), tokens, std::move(data));
}

// ---------------------------------------------------------------------------
// Forward pass

inline constexpr double kNormEpsilon = 1e-6;

/// Every intermediate of one forward pass; consumed by backward().
template <typename Scalar>
struct ForwardTrace {
    Mat<Scalar> tokens;   // T*L x C_in, temporal embedding included
    Mat<Scalar> keys;     // T*L x C
    Mat<Scalar> values;   // T*L x C
    Mat<Scalar> query_hat;                 // standardized queries
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> query_rstd;
    Mat<Scalar> query_norm;                // normalized queries fed to attention
    std::vector<Mat<Scalar>> weights;      // per head, N x T*L
    Mat<Scalar> attention;                 // heads concatenated, N x C
    Mat<Scalar> hidden;                    // queries + attention * out_proj
    Mat<Scalar> hidden_hat;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> hidden_rstd;
    Mat<Scalar> hidden_norm;
    Mat<Scalar> ffn_pre;                   // before the nonlinearity
    Mat<Scalar> ffn_act;
    Mat<Scalar> output;                    // N x C
};

namespace detail {

template <typename Scalar>
void layer_norm(const Mat<Scalar>& x, const Mat<Scalar>& gain, const Mat<Scalar>& bias,
                Mat<Scalar>& x_hat, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& rstd,
                Mat<Scalar>& y) {
    const Index n = x.rows();
    const Scalar width = static_cast<Scalar>(x.cols());
    x_hat.resize(n, x.cols());
    rstd.resize(n);
    for (Index i = 0; i < n; ++i) {
        const Scalar mean = x.row(i).sum() / width;
        const Scalar var = (x.row(i).array() - mean).square().sum() / width;
        rstd(i) = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kNormEpsilon));
        x_hat.row(i) = (x.row(i).array() - mean) * rstd(i);
    }
    y = (x_hat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

template <typename Scalar>
Scalar gelu(Scalar u) {
    return Scalar(0.5) * u * (Scalar(1) + std::erf(u / std::numbers::sqrt2_v<Scalar>));
}

template <typename Scalar>
Scalar gelu_grad(Scalar u) {
    const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(u / std::numbers::sqrt2_v<Scalar>));
    const Scalar pdf = std::exp(Scalar(-0.5) * u * u) * std::numbers::inv_sqrtpi_v<Scalar> /
                       std::numbers::sqrt2_v<Scalar>;
    return cdf + u * pdf;
}

template <typename Scalar>
void check_params(const ProjectorParams<Scalar>& p, Index input_dim) {
    if (input_dim != p.config.input_dim) {
        throw std::invalid_argument("projector: frames have " + std::to_string(input_dim) +
                                    " channels, params expect " +
                                    std::to_string(p.config.input_dim));
    }
}

}  // namespace detail

/// Normalization of the learnable queries ahead of the attention sublayer.
template <typename Scalar>
void normalize_queries(const ProjectorParams<Scalar>& p, ForwardTrace<Scalar>& t) {
    detail::layer_norm(p.queries, p.norm1_gain, p.norm1_bias, t.query_hat, t.query_rstd,
                       t.query_norm);
}

/// Everything after the attention weighting: output projection, residual
/// onto the queries, then a normalized GELU feed-forward with residual.
/// Expects t.attention to be filled.
template <typename Scalar>
void finish_forward(const ProjectorParams<Scalar>& p, ForwardTrace<Scalar>& t) {
    t.hidden = p.queries + t.attention * p.out_proj;
    detail::layer_norm(t.hidden, p.norm2_gain, p.norm2_bias, t.hidden_hat, t.hidden_rstd,
                       t.hidden_norm);
    t.ffn_pre = (t.hidden_norm * p.ffn_in).rowwise() + p.ffn_in_bias.row(0);
    t.ffn_act = t.ffn_pre.unaryExpr([](Scalar u) { return detail::gelu(u); });
    t.output = t.hidden + ((t.ffn_act * p.ffn_out).rowwise() + p.ffn_out_bias.row(0));
}

/// Applies the post-attention dressing to pre-computed attention rows.
template <typename Scalar>
Mat<Scalar> project_attention(const ProjectorParams<Scalar>& p, const Mat<Scalar>& attention) {
    if (attention.rows() != p.config.n_queries || attention.cols() != p.config.model_dim) {
        throw std::invalid_argument("project_attention: attention " + shape_of(attention) +
                                    " does not match " + shape_of(p.queries) + " queries");
    }
    ForwardTrace<Scalar> t;
    t.attention = attention;
    finish_forward(p, t);
    return t.output;
}

/// Forward pass over already-encoded tokens (temporal embedding applied).
template <typename Scalar>
ForwardTrace<Scalar> forward_tokens(const ProjectorParams<Scalar>& p, const Mat<Scalar>& tokens,
                                    const TokenMask& mask) {
    detail::check_params(p, tokens.cols());
    if (mask.n_queries() != p.config.n_queries || mask.n_keys() != tokens.rows()) {
        throw std::invalid_argument("projector: token mask " + shape_of(mask.bits()) +
                                    " vs " + std::to_string(p.config.n_queries) +
                                    " queries over " + std::to_string(tokens.rows()) +
                                    " tokens");
    }
    ForwardTrace<Scalar> t;
    t.tokens = tokens;
    t.keys = tokens * p.key_proj;
    t.values = tokens * p.value_proj;
    normalize_queries(p, t);

    const Index d = p.config.head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
    t.attention.resize(p.config.n_queries, p.config.model_dim);
    t.weights.clear();
    for (Index h = 0; h < p.config.n_heads; ++h) {
        const Mat<Scalar> logits =
            (t.query_norm.middleCols(h * d, d) * t.keys.middleCols(h * d, d).transpose()) *
            scale;
        t.weights.push_back(rowwise_weights(logits, mask));
        t.attention.middleCols(h * d, d) = t.weights.back() * t.values.middleCols(h * d, d);
    }
    finish_forward(p, t);
    return t;
}

template <typename Scalar>
ForwardTrace<Scalar> forward_trace(const ProjectorParams<Scalar>& p,
                                   const FrameEmbeddings<Scalar>& frames, const FrameMask& mask) {
    detail::check_params(p, frames.channels());
    if (mask.n_queries() != p.config.n_queries || mask.n_frames() != frames.n_frames()) {
        throw std::invalid_argument("forward_video: mask " + shape_of(mask.bits()) +
                                    " does not match " + std::to_string(p.config.n_queries) +
                                    " queries x " + std::to_string(frames.n_frames()) +
                                    " frames");
    }
    const TokenMask tokens_mask = expand_to_tokens(mask, frames.tokens_per_frame());
    if (p.config.use_tpe) return forward_tokens(p, add_tpe(frames).tokens(), tokens_mask);
    return forward_tokens(p, frames.tokens(), tokens_mask);
}

/// N x C projector output for a video under the given frame mask.
template <typename Scalar>
Mat<Scalar> forward_video(const ProjectorParams<Scalar>& p, const FrameEmbeddings<Scalar>& frames,
                          const FrameMask& mask) {
    return forward_trace(p, frames, mask).output;
}

/// Single image (L x C_in tokens): a one-frame video under a full mask.
template <typename Scalar>
Mat<Scalar> forward_image(const ProjectorParams<Scalar>& p, const Mat<Scalar>& tokens) {
    const FrameEmbeddings<Scalar> frames(1, tokens.rows(), tokens);
    return forward_video(p, frames, build_full(p.config.n_queries, 1));
}

/// Recomputes output row `query` from only the frames that query can see,
/// using a one-query projector and an all-true mask.
template <typename Scalar>
RowVec<Scalar> query_output_independence_check(const ProjectorParams<Scalar>& p,
                                               const FrameEmbeddings<Scalar>& frames,
                                               const FrameMask& mask, Index query) {
    if (query < 0 || query >= p.config.n_queries || query >= mask.n_queries()) {
        throw std::invalid_argument("query_output_independence_check: query index " +
                                    std::to_string(query) + " out of range");
    }
    const FrameEmbeddings<Scalar> encoded = p.config.use_tpe ? add_tpe(frames) : frames;
    std::vector<Index> visible;
    for (Index j = 0; j < mask.n_frames(); ++j) {
        if (mask(query, j)) visible.push_back(j);
    }
    const FrameEmbeddings<Scalar> seen = encoded.select(visible);

    ProjectorParams<Scalar> single = p;
    single.queries = p.queries.row(query);
    single.config.n_queries = 1;
    const TokenMask all = TokenMask::all(1, seen.n_tokens());
    return forward_tokens(single, seen.tokens(), all).output.row(0);
}

}  // namespace ccam
