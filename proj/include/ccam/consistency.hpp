#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccam/projector.hpp"

namespace ccam {

struct Harmonic {
    double amplitude = 0.0;
    double angular_frequency = 0.0;
    double phase = 0.0;
};

/// x(t) on [0, duration] with values in R^{tokens x channels}; each entry is
/// an offset plus a short sum of sinusoids.
struct ContinuousVideoSignal {
    double duration = 1.0;
    Index tokens = 0;
    Index channels = 0;
    std::uint64_t seed = 0;
    std::vector<double> offsets;                   // tokens * channels, row-major
    std::vector<std::vector<Harmonic>> harmonics;  // per entry

    Matrix evaluate(double t) const;
    /// max over entries of |offset| + sum |amplitude|; bounds |x(t)| everywhere.
    double amplitude_bound() const;
};

struct SignalOptions {
    Index n_harmonics = 7;
    /// Highest frequency in cycles per duration. At most 16, so the shortest
    /// period is no less than duration / 16.
    double max_cycles = 4.0;
    double amplitude_budget = 3.0;
};

ContinuousVideoSignal make_signal(Index tokens, Index channels, double duration,
                                  std::uint64_t seed, const SignalOptions& options = {});

/// x(j * duration / n_frames) for j = 0 .. n_frames - 1.
FrameEmbeddings<double> sample_frames(const ContinuousVideoSignal& signal, Index n_frames);

inline constexpr Index kDefaultGridPoints = 8192;

/// Continuous-time projector output. For query i both integrals over
/// [0, (i + 1) / N * duration] use the composite trapezoid rule on a uniform
/// grid of grid_points cells (with a partial last cell when the upper limit
/// falls between nodes); the attention rows then go through the same dressing
/// as the discrete forward pass.
Matrix quadrature_reference(const ProjectorParams<double>& params,
                            const ContinuousVideoSignal& signal,
                            Index grid_points = kDefaultGridPoints);

/// Discrete projector output at n_frames samples under the continuous CCAM rule.
Matrix sampled_output(const ProjectorParams<double>& params, const ContinuousVideoSignal& signal,
                      Index n_frames);

/// max over rows i of |approx_i - reference_i| / |reference_i|.
double max_row_relative_error(const Matrix& approx, const Matrix& reference);

struct PairDiscrepancy {
    Index frames_a = 0;
    Index frames_b = 0;
    double discrepancy = 0.0;
    double bound = 0.0;  ///< e(frames_a) + e(frames_b)
};

struct ConvergenceReport {
    std::vector<Index> frame_counts;
    std::vector<double> errors;
    double slope = 0.0;  ///< least-squares slope of log error on log frame count
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<PairDiscrepancy> pairs;

    bool strictly_decreasing() const;
    bool triangle_bound_holds() const;
};

ConvergenceReport convergence_run(const ProjectorParams<double>& params,
                                  const ContinuousVideoSignal& signal,
                                  const std::vector<Index>& frame_counts,
                                  Index grid_points = kDefaultGridPoints);

/// |Y(frames_a) - Y(frames_b)|_F / |Y(frames_b)|_F.
double cross_count_consistency(const ProjectorParams<double>& params,
                               const ContinuousVideoSignal& signal, Index frames_a,
                               Index frames_b);

/// Least-squares slope of log(y) against log(x); NaN if any value is not positive.
double log_log_slope(const std::vector<Index>& x, const std::vector<double>& y);

}  // namespace ccam
