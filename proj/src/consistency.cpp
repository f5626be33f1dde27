#include "ccam/consistency.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "ccam/rng.hpp"

namespace ccam {

Matrix ContinuousVideoSignal::evaluate(double t) const {
    Matrix x(tokens, channels);
    for (Index e = 0; e < tokens * channels; ++e) {
        double v = offsets[static_cast<std::size_t>(e)];
        for (const Harmonic& h : harmonics[static_cast<std::size_t>(e)]) {
            v += h.amplitude * std::sin(h.angular_frequency * t + h.phase);
        }
        x.data()[e] = v;
    }
    return x;
}

double ContinuousVideoSignal::amplitude_bound() const {
    double bound = 0.0;
    for (std::size_t e = 0; e < offsets.size(); ++e) {
        double sum = std::abs(offsets[e]);
        for (const Harmonic& h : harmonics[e]) sum += std::abs(h.amplitude);
        bound = std::max(bound, sum);
    }
    return bound;
}

ContinuousVideoSignal make_signal(Index tokens, Index channels, double duration,
                                  std::uint64_t seed, const SignalOptions& options) {
    if (tokens < 1 || channels < 1) {
        throw std::invalid_argument("make_signal: tokens and channels must be >= 1");
    }
    if (!(duration > 0.0)) throw std::invalid_argument("make_signal: duration must be > 0");
    if (options.n_harmonics < 0) throw std::invalid_argument("make_signal: negative harmonics");
    if (!(options.max_cycles > 0.0) || options.max_cycles > 16.0) {
        throw std::invalid_argument("make_signal: max_cycles must lie in (0, 16]");
    }
    if (!(options.amplitude_budget >= 0.0)) {
        throw std::invalid_argument("make_signal: amplitude budget must be >= 0");
    }

    Rng rng(seed, kSignalStream);
    ContinuousVideoSignal s;
    s.duration = duration;
    s.tokens = tokens;
    s.channels = channels;
    s.seed = seed;
    const auto entries = static_cast<std::size_t>(tokens * channels);
    s.offsets.resize(entries);
    s.harmonics.resize(entries);
    const auto k = static_cast<std::size_t>(options.n_harmonics);
    for (std::size_t e = 0; e < entries; ++e) {
        // Split the budget across the offset and the harmonics.
        std::vector<double> share(k + 1);
        double total = 0.0;
        for (double& w : share) total += (w = rng.uniform(0.1, 1.0));
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        s.offsets[e] = sign * options.amplitude_budget * share[0] / total;
        s.harmonics[e].resize(k);
        for (std::size_t h = 0; h < k; ++h) {
            Harmonic& hm = s.harmonics[e][h];
            hm.amplitude = options.amplitude_budget * share[h + 1] / total;
            hm.angular_frequency =
                2.0 * std::numbers::pi * rng.uniform(0.0, options.max_cycles) / duration;
            hm.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
    }
    return s;
}

FrameEmbeddings<double> sample_frames(const ContinuousVideoSignal& signal, Index n_frames) {
    if (n_frames < 1) throw std::invalid_argument("sample_frames: need at least one frame");
    Matrix data(n_frames * signal.tokens, signal.channels);
    const double step = signal.duration / static_cast<double>(n_frames);
    for (Index j = 0; j < n_frames; ++j) {
        data.middleRows(j * signal.tokens, signal.tokens) =
            signal.evaluate(static_cast<double>(j) * step);
    }
    return FrameEmbeddings<double>(n_frames, signal.tokens, std::move(data));
}

namespace {

void require_reference_inputs(const ProjectorParams<double>& params,
                              const ContinuousVideoSignal& signal, const char* who) {
    if (params.config.use_tpe) {
        throw std::invalid_argument(std::string(who) +
                                    ": temporal position embeddings index frames, not time; "
                                    "disable them for continuous-signal experiments");
    }
    if (signal.channels != params.config.input_dim) {
        throw std::invalid_argument(std::string(who) + ": signal has " +
                                    std::to_string(signal.channels) + " channels, params expect " +
                                    std::to_string(params.config.input_dim));
    }
}

}  // namespace

Matrix quadrature_reference(const ProjectorParams<double>& params,
                            const ContinuousVideoSignal& signal, Index grid_points) {
    require_reference_inputs(params, signal, "quadrature_reference");
    const Index n = params.config.n_queries;
    if (grid_points < 2 * n) {
        throw std::invalid_argument("quadrature_reference: " + std::to_string(grid_points) +
                                    " grid points is fewer than twice the " + std::to_string(n) +
                                    " queries");
    }
    const Index heads = params.config.n_heads;
    const Index d = params.config.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    ForwardTrace<double> trace;
    normalize_queries(params, trace);
    const Matrix& queries = trace.query_norm;

    // Online softmax accumulators per (query, head). Node weights are in
    // units of the grid step and cancel in the ratio.
    Matrix peak = Matrix::Constant(n, heads, -std::numeric_limits<double>::infinity());
    Matrix denom = Matrix::Zero(n, heads);
    Matrix numer = Matrix::Zero(n, params.config.model_dim);

    auto absorb = [&](Index row_begin, Index row_end, const Matrix& x, auto&& weight_of) {
        const Matrix keys = x * params.key_proj;
        const Matrix values = x * params.value_proj;
        const Index active = row_end - row_begin;
        for (Index h = 0; h < heads; ++h) {
            const Matrix logits = (queries.middleRows(row_begin, active).middleCols(h * d, d) *
                                   keys.middleCols(h * d, d).transpose()) *
                                  scale;
            for (Index r = 0; r < active; ++r) {
                const Index i = row_begin + r;
                const double weight = weight_of(i);
                if (weight == 0.0) continue;
                const double row_peak = logits.row(r).maxCoeff();
                if (row_peak > peak(i, h)) {
                    const double rescale = std::exp(peak(i, h) - row_peak);
                    denom(i, h) *= rescale;
                    numer.row(i).segment(h * d, d) *= rescale;
                    peak(i, h) = row_peak;
                }
                for (Index l = 0; l < x.rows(); ++l) {
                    const double w = weight * std::exp(logits(r, l) - peak(i, h));
                    denom(i, h) += w;
                    numer.row(i).segment(h * d, d) += w * values.row(l).segment(h * d, d);
                }
            }
        }
    };

    // Query i integrates over [0, T_i] with T_i = (i + 1) G / N grid steps:
    // trapezoid on the whole cells [0, last_i], then one partial cell up to T_i.
    auto last_node = [&](Index i) { return ((i + 1) * grid_points) / n; };
    auto partial = [&](Index i) {
        return static_cast<double>(((i + 1) * grid_points) % n) / static_cast<double>(n);
    };
    const double step = signal.duration / static_cast<double>(grid_points);
    for (Index g = 0; g <= grid_points; ++g) {
        // Smallest i with last_node(i) >= g.
        Index first = (g * n + grid_points - 1) / grid_points - 1;
        first = std::max<Index>(first, 0);
        while (first < n && last_node(first) < g) ++first;
        if (first >= n) break;
        const Matrix x = signal.evaluate(static_cast<double>(g) * step);
        absorb(first, n, x, [&](Index i) {
            const Index last = last_node(i);
            double w = (g == 0 || g == last) ? 0.5 : 1.0;
            if (g == last) w += 0.5 * partial(i);
            return w;
        });
    }
    for (Index i = 0; i < n; ++i) {
        const double frac = partial(i);
        if (frac == 0.0) continue;
        const double t_end = signal.duration * static_cast<double>(i + 1) / static_cast<double>(n);
        absorb(i, i + 1, signal.evaluate(t_end), [&](Index) { return 0.5 * frac; });
    }

    Matrix attention(n, params.config.model_dim);
    for (Index i = 0; i < n; ++i) {
        for (Index h = 0; h < heads; ++h) {
            attention.row(i).segment(h * d, d) = numer.row(i).segment(h * d, d) / denom(i, h);
        }
    }
    return project_attention(params, attention);
}

Matrix sampled_output(const ProjectorParams<double>& params, const ContinuousVideoSignal& signal,
                      Index n_frames) {
    require_reference_inputs(params, signal, "sampled_output");
    return forward_video(params, sample_frames(signal, n_frames),
                         build_ccam_continuous(params.config.n_queries, n_frames));
}

double max_row_relative_error(const Matrix& approx, const Matrix& reference) {
    if (approx.rows() != reference.rows() || approx.cols() != reference.cols()) {
        throw std::invalid_argument("max_row_relative_error: " + shape_of(approx) + " vs " +
                                    shape_of(reference));
    }
    double worst = 0.0;
    for (Index i = 0; i < reference.rows(); ++i) {
        worst = std::max(worst, (approx.row(i) - reference.row(i)).norm() / reference.row(i).norm());
    }
    return worst;
}

double log_log_slope(const std::vector<Index>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(y[k] > 0.0) || x[k] <= 0) return std::numeric_limits<double>::quiet_NaN();
        const double lx = std::log(static_cast<double>(x[k]));
        const double ly = std::log(y[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double m = static_cast<double>(x.size());
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

bool ConvergenceReport::strictly_decreasing() const {
    for (std::size_t k = 1; k < errors.size(); ++k) {
        if (!(errors[k] < errors[k - 1])) return false;
    }
    return true;
}

bool ConvergenceReport::triangle_bound_holds() const {
    for (const auto& p : pairs) {
        if (!(p.discrepancy <= p.bound)) return false;
    }
    return true;
}

ConvergenceReport convergence_run(const ProjectorParams<double>& params,
                                  const ContinuousVideoSignal& signal,
                                  const std::vector<Index>& frame_counts, Index grid_points) {
    if (frame_counts.empty()) throw std::invalid_argument("convergence_run: no frame counts");
    for (std::size_t k = 0; k < frame_counts.size(); ++k) {
        if (frame_counts[k] < 1 || (k > 0 && frame_counts[k] <= frame_counts[k - 1])) {
            throw std::invalid_argument("convergence_run: frame counts must be positive and "
                                        "strictly increasing");
        }
    }
    const Matrix reference = quadrature_reference(params, signal, grid_points);

    ConvergenceReport report;
    report.frame_counts = frame_counts;
    report.seed = signal.seed;
    std::vector<Matrix> outputs;
    for (Index t : frame_counts) {
        outputs.push_back(sampled_output(params, signal, t));
        const double e = max_row_relative_error(outputs.back(), reference);
        if (!std::isfinite(e)) {
            throw NumericError("convergence_run: non-finite error at " + std::to_string(t) +
                               " frames");
        }
        report.errors.push_back(e);
    }
    report.slope = log_log_slope(report.frame_counts, report.errors);
    for (std::size_t a = 0; a < outputs.size(); ++a) {
        for (std::size_t b = a + 1; b < outputs.size(); ++b) {
            report.pairs.push_back(
                {frame_counts[a], frame_counts[b],
                 (outputs[a] - outputs[b]).norm() / outputs[b].norm(),
                 report.errors[a] + report.errors[b]});
        }
    }
    return report;
}

double cross_count_consistency(const ProjectorParams<double>& params,
                               const ContinuousVideoSignal& signal, Index frames_a,
                               Index frames_b) {
    const Matrix b = sampled_output(params, signal, frames_b);
    if (frames_a == frames_b) return 0.0;
    const Matrix a = sampled_output(params, signal, frames_a);
    return (a - b).norm() / b.norm();
}

}  // namespace ccam
