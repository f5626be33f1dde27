#include "doctest.h"

#include "ccam/gradcheck.hpp"
#include "helpers.hpp"

using namespace ccam;
using testing::random_frames;
using testing::random_matrix;
using testing::tiny_config;

namespace {

double inner(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

double max_relative_error(const std::vector<GradientComparison>& sections) {
    double worst = 0.0;
    for (const auto& s : sections) worst = std::max(worst, s.max_relative_error);
    return worst;
}

}  // namespace

TEST_CASE("central_difference on a quadratic") {
    const auto square = [](double t) { return t * t; };
    CHECK(std::abs(central_difference(square, 3.0, 1e-5) - 6.0) < 1e-8);
    CHECK(central_difference(square, 3.0, 1e-5) == central_difference(square, 3.0, -1e-5));
    const auto cubic = [](double t) { return t * t * t - 2.0 * t; };
    CHECK(central_difference(cubic, 0.7, 1e-3) == central_difference(cubic, 0.7, -1e-3));
}

TEST_CASE("backward: zero upstream gives zero gradients") {
    const auto p = init_params(tiny_config(42));
    Rng rng(1);
    const auto frames = random_frames(rng, 3, 2, 5);
    const auto g = backward(p, frames, build_ccam_floor(4, 3), Matrix(Matrix::Zero(4, 8)));
    bool all_zero = g.frames.isZero(0.0);
    g.for_each([&](std::string_view, const Matrix& m) { all_zero = all_zero && m.isZero(0.0); });
    CHECK(all_zero);
}

TEST_CASE("backward: frames hidden from every loaded query get exactly zero") {
    const auto p = init_params(tiny_config(3));
    Rng rng(3);
    const auto frames = random_frames(rng, 3, 2, 5);
    // Floor rule with N=4, T=3: queries 0 sees frame 0, query 1 sees {0, 1}.
    const FrameMask mask = build_ccam_floor(4, 3);
    Matrix upstream = Matrix::Zero(4, 8);
    upstream.topRows(2) = random_matrix(rng, 2, 8);
    const auto g = backward(p, frames, mask, upstream);
    CHECK(g.frames.middleRows(4, 2).isZero(0.0));
    CHECK(!g.frames.middleRows(2, 2).isZero(0.0));

    upstream.topRows(1) = random_matrix(rng, 1, 8);
    upstream.row(1).setZero();
    const auto g0 = backward(p, frames, mask, upstream);
    CHECK(g0.frames.bottomRows(4).isZero(0.0));

    // Under the full mask every frame gets gradient from every query.
    const auto gf = backward(p, frames, build_full(4, 3), upstream);
    for (Index r = 0; r < 6; ++r) CHECK(!gf.frames.row(r).isZero(0.0));
}

TEST_CASE("backward agrees with central differences") {
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
        for (bool tpe : {false, true}) {
            for (MaskRule rule : {MaskRule::Full, MaskRule::CcamFloor, MaskRule::CcamContinuous}) {
                auto cfg = tiny_config(42 + seed);
                cfg.use_tpe = tpe;
                const auto p = init_params(cfg);
                Rng rng(seed, 7);
                const auto frames = random_frames(rng, 3, 2, 5);
                const Matrix upstream = random_matrix(rng, 4, 8);
                const FrameMask mask = build_mask(rule, 4, 3);

                const auto analytic = backward(p, frames, mask, upstream);
                const auto numeric = finite_diff(
                    p, frames, mask, [&](const Matrix& y) { return inner(upstream, y); });
                const auto sections = compare_gradients(analytic, numeric);
                CHECK(sections.size() == 13);
                CHECK(max_relative_error(sections) < 1e-4);
            }
        }
    }
}

TEST_CASE("backward through the float instantiation is close to double") {
    const auto p = init_params(tiny_config(42));
    Rng rng(2);
    const auto frames = random_frames(rng, 3, 2, 5);
    const Matrix upstream = random_matrix(rng, 4, 8);
    const FrameMask mask = build_ccam_floor(4, 3);
    const auto gd = backward(p, frames, mask, upstream);
    const auto gf = backward(cast_params<float>(p), frames.cast<float>(), mask,
                             Mat<float>(upstream.cast<float>()));
    CHECK((gf.frames.cast<double>() - gd.frames).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("backward: shape mismatch") {
    const auto p = init_params(tiny_config());
    Rng rng(1);
    const auto frames = random_frames(rng, 3, 2, 5);
    CHECK_THROWS_AS(backward(p, frames, build_full(4, 3), Matrix(Matrix::Zero(3, 8))),
                    std::invalid_argument);
}
