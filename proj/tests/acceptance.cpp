// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ccam/cli.hpp"
#include "ccam/consistency.hpp"
#include "ccam/gradcheck.hpp"
#include "ccam/masks.hpp"
#include "ccam/order_task.hpp"
#include "ccam/projector.hpp"
#include "helpers.hpp"

using namespace ccam;
using testing::random_frames;
using testing::random_matrix;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

double max_norm(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

ProjectorConfig config(Index n, Index c, Index c_in, Index h, std::uint64_t seed) {
    ProjectorConfig cfg;
    cfg.n_queries = n;
    cfg.model_dim = c;
    cfg.input_dim = c_in;
    cfg.n_heads = h;
    cfg.seed = seed;
    return cfg;
}

Outcome masks_match_predicates() {
    Outcome o;
    Index checked = 0;
    for (Index n = 1; n <= 32; ++n) {
        for (Index t = 1; t <= n; ++t) {
            const auto floor_mask = build_ccam_floor(n, t);
            const auto cont_mask = build_ccam_continuous(n, t);
            const Index stride = n / t;
            for (Index i = 0; i < n; ++i) {
                for (Index j = 0; j < t; ++j) {
                    o.pass = o.pass && floor_mask(i, j) == (i >= j * stride);
                    o.pass = o.pass && cont_mask(i, j) == (j * n <= (i + 1) * t);
                }
            }
            for (const auto* m : {&floor_mask, &cont_mask}) {
                for (Index i = 0; i < n; ++i) {
                    const Index seen = m->visible_count(i);
                    for (Index j = 0; j < t; ++j) o.pass = o.pass && (*m)(i, j) == (j < seen);
                    o.pass = o.pass && (*m)(i, 0);
                    if (i > 0) o.pass = o.pass && seen >= m->visible_count(i - 1);
                }
                o.pass = o.pass && m->visible_count(n - 1) == t;
            }
            ++checked;
        }
    }
    o.detail = std::to_string(checked) + " (N, T) pairs x 2 rules";
    return o;
}

Outcome full_mask_permutation_invariance() {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto p = init_params(config(32, 16, 8, 4, 100 + s));
        Rng rng(s, kInputStream);
        const auto frames = random_frames(rng, 8, 4, 8);
        std::vector<Index> order(8);
        std::iota(order.begin(), order.end(), Index{0});
        rng.shuffle(order.begin(), order.end());
        const auto mask = build_full(32, 8);
        worst = std::max(worst, max_norm(forward_video(p, frames, mask),
                                         forward_video(p, frames.permuted(order), mask)));
    }
    return {worst <= 1e-10, "20 triples, max deviation " + fmt("%.3g", worst) + " (limit 1e-10)"};
}

Outcome ccam_order_sensitivity() {
    Outcome o;
    std::string detail;
    for (MaskRule rule : {MaskRule::CcamFloor, MaskRule::CcamContinuous}) {
        int sensitive = 0;
        double smallest = 1e300;
        for (std::uint64_t s = 0; s < 10; ++s) {
            const auto p = init_params(config(32, 16, 8, 4, 200 + s));
            Rng rng(s, kInputStream);
            const auto frames = random_frames(rng, 8, 4, 8);
            std::vector<Index> order(8);
            std::iota(order.begin(), order.end(), Index{0});
            std::swap(order.front(), order.back());
            const auto mask = build_mask(rule, 32, 8);
            const double change = max_norm(forward_video(p, frames, mask),
                                           forward_video(p, frames.permuted(order), mask));
            smallest = std::min(smallest, change);
            if (change >= 1e-6) ++sensitive;
        }
        o.pass = o.pass && sensitive == 10;
        detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(rule)) + " " +
                  std::to_string(sensitive) + "/10 seeds, min change " + fmt("%.3g", smallest);
    }
    o.detail = detail;
    return o;
}

Outcome reduction_identities() {
    bool image_identical = true;
    double last_row = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto p = init_params(config(32, 16, 8, 4, 300 + s));
        Rng rng(s, kInputStream);
        const Matrix tokens = random_matrix(rng, 4, 8);
        const auto single = FrameEmbeddings<double>(1, 4, tokens);
        for (MaskRule rule : {MaskRule::Full, MaskRule::CcamFloor, MaskRule::CcamContinuous}) {
            image_identical = image_identical &&
                              forward_video(p, single, build_mask(rule, 32, 1)) == forward_image(p, tokens);
        }
        const auto frames = random_frames(rng, 8, 4, 8);
        const Matrix full = forward_video(p, frames, build_full(32, 8));
        for (MaskRule rule : {MaskRule::CcamFloor, MaskRule::CcamContinuous}) {
            const Matrix causal = forward_video(p, frames, build_mask(rule, 32, 8));
            last_row = std::max(last_row, max_norm(causal.row(31), full.row(31)));
        }
    }

    double collapse = 0.0;
    SignalOptions constant;
    constant.n_harmonics = 0;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto p = init_params(config(32, 16, 8, 4, 400 + s));
        const auto signal = make_signal(4, 8, 1.0, s, constant);
        const Matrix reference = quadrature_reference(p, signal);
        const Matrix one = sampled_output(p, signal, 1);
        collapse = std::max(collapse, max_norm(one, reference));
        for (Index t : {1, 8, 16, 96, 128}) {
            const Matrix y = sampled_output(p, signal, t);
            collapse = std::max({collapse, max_norm(y, reference), max_norm(y, one)});
        }
    }
    const bool pass = image_identical && last_row <= 1e-12 && collapse <= 1e-9;
    return {pass, std::string("T=1 video == image: ") + (image_identical ? "bit-identical" : "DIFFERENT") +
                      "; last row vs full " + fmt("%.3g", last_row) + " (limit 1e-12)" +
                      "; constant collapse " + fmt("%.3g", collapse) + " (limit 1e-9)"};
}

Outcome gradient_verification() {
    const auto start = Clock::now();
    double worst = 0.0;
    Index checked = 0;
    int runs = 0;
    for (MaskRule rule : {MaskRule::Full, MaskRule::CcamFloor, MaskRule::CcamContinuous}) {
        for (bool tpe : {false, true}) {
            for (std::uint64_t seed : {42, 1, 2, 3, 4}) {
                auto cfg = testing::tiny_config(seed);
                cfg.use_tpe = tpe;
                const auto p = init_params(cfg);
                Rng rng(seed, kInputStream);
                const auto frames = random_frames(rng, 3, 2, 5);
                const Matrix upstream = random_matrix(rng, 4, 8);
                const auto mask = build_mask(rule, 4, 3);
                const auto analytic = backward(p, frames, mask, upstream);
                const auto numeric = finite_diff(
                    p, frames, mask, [&](const Matrix& y) { return (y.array() * upstream.array()).sum(); },
                    1e-5);
                for (const auto& section : compare_gradients(analytic, numeric, 1e-8)) {
                    worst = std::max(worst, section.max_relative_error);
                    checked += section.checked;
                }
                ++runs;
            }
        }
    }
    const double elapsed = seconds_since(start);
    return {worst < 1e-4 && elapsed < 120.0,
            std::to_string(runs) + " runs, " + std::to_string(checked) + " coordinates, max relative error " +
                fmt("%.3g", worst) + " (limit 1e-4), " + fmt("%.1fs", elapsed)};
}

Outcome convergence() {
    const auto start = Clock::now();
    int decreasing = 0;
    bool triangle = true;
    double slope_sum = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = init_params(config(32, 16, 8, 4, seed));
        const auto signal = make_signal(4, 8, 1.0, seed);
        const auto report = convergence_run(p, signal, {8, 16, 32, 64, 128});
        if (report.strictly_decreasing()) ++decreasing;
        triangle = triangle && report.triangle_bound_holds();
        slope_sum += report.slope;
    }
    const double mean_slope = slope_sum / 10.0;
    const double elapsed = seconds_since(start);
    return {decreasing >= 9 && mean_slope <= -0.8 && triangle && elapsed < 300.0,
            "strictly decreasing " + std::to_string(decreasing) + "/10 (need 9), mean slope " +
                fmt("%.3f", mean_slope) + " (need <= -0.8), triangle bound " +
                (triangle ? "held in every run" : "VIOLATED") + ", " + fmt("%.1fs", elapsed)};
}

struct OrderRun {
    double ccam = 0.0;
    double full = 0.0;
    double ccam_tpe = 0.0;
    double logit_drift = 0.0;
};

std::vector<OrderRun> order_runs;
double order_seconds = 0.0;

void run_order_task() {
    const auto start = Clock::now();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        OrderDatasetSpec spec;
        spec.n_examples = 2000;
        spec.n_frames = 8;
        spec.tokens = 1;
        spec.channels = 8;
        spec.noise = 0.1;
        spec.seed = seed;
        const auto data = make_order_dataset(spec);
        auto cfg = config(16, 16, 8, 4, seed);

        OrderRun run;
        run.ccam = train_order_probe(cfg, data, MaskRule::CcamFloor, TrainOptions{}).test_accuracy;
        OrderProbe probe{init_params(cfg), build_full(16, 8), RowVec<double>(), 0.0};
        run.full = train_order_probe(cfg, data, MaskRule::Full, TrainOptions{}, &probe).test_accuracy;
        Rng rng(seed, 99);
        for (std::size_t k : data.test) {
            const auto& frames = data.examples[k].frames;
            std::vector<Index> order(8);
            std::iota(order.begin(), order.end(), Index{0});
            rng.shuffle(order.begin(), order.end());
            run.logit_drift =
                std::max(run.logit_drift, std::abs(probe.logit(frames) - probe.logit(frames.permuted(order))));
        }
        cfg.use_tpe = true;
        run.ccam_tpe = train_order_probe(cfg, data, MaskRule::CcamFloor, TrainOptions{}).test_accuracy;
        order_runs.push_back(run);
    }
    order_seconds = seconds_since(start);
}

Outcome order_direction() {
    if (order_runs.empty()) run_order_task();
    int good = 0;
    std::string per_seed;
    for (const auto& r : order_runs) {
        const bool ok = r.ccam >= 0.85 && r.full >= 0.40 && r.full <= 0.60 && r.logit_drift <= 1e-10;
        if (ok) ++good;
        per_seed += " [" + fmt("%.3f", r.ccam) + "/" + fmt("%.3f", r.full) + " drift " +
                    fmt("%.2g", r.logit_drift) + "]";
    }
    return {good >= 4 && order_seconds < 300.0,
            std::to_string(good) + "/5 seeds (need 4); ccam/full test accuracy:" + per_seed + ", " +
                fmt("%.1fs", order_seconds)};
}

Outcome tpe_neutrality() {
    if (order_runs.empty()) run_order_task();
    int good = 0;
    std::string per_seed;
    for (const auto& r : order_runs) {
        const double delta = std::abs(r.ccam_tpe - r.ccam);
        if (delta <= 0.05) ++good;
        per_seed += " " + fmt("%.4f", delta);
    }
    return {good >= 4, std::to_string(good) + "/5 seeds within 0.05 (need 4); |delta accuracy|:" + per_seed};
}

Outcome cli_determinism() {
    testing::ScratchDir dir("acceptance_cli");
    const std::vector<std::vector<std::string>> commands = {
        {"mask", "--rule", "ccam-continuous", "--queries", "12", "--frames", "5"},
        {"forward", "--seed", "7", "--tpe"},
        {"gradcheck", "--seed", "3", "--rule", "ccam-floor"},
        {"converge", "--seed", "3", "--frames", "8,16,32,64,128"},
        {"consistency", "--seed", "3"},
        {"ordertask", "--seed", "2", "--mask", "ccam-floor"},
    };
    Outcome o;
    int compared = 0;
    for (std::size_t c = 0; c < commands.size(); ++c) {
        std::vector<std::string> outs;
        for (const char* copy : {"a", "b"}) {
            auto args = commands[c];
            const auto out = (dir / (std::to_string(c) + copy)).string();
            args.insert(args.end(), {"--out", out});
            std::ostringstream sink;
            std::ostringstream err;
            if (run(args, sink, err) != 0) {
                o.pass = false;
                o.detail += " " + args[0] + " failed: " + err.str();
            }
            outs.push_back(out);
        }
        if (!o.pass) continue;
        const auto meta = nlohmann::json::parse(testing::read_file(std::filesystem::path(outs[0]) / "run.json"));
        for (const auto& name : meta["files"]) {
            const auto file = name.get<std::string>();
            if (testing::read_file(std::filesystem::path(outs[0]) / file) !=
                testing::read_file(std::filesystem::path(outs[1]) / file)) {
                o.pass = false;
                o.detail += " " + commands[c][0] + "/" + file + " differs;";
            }
            ++compared;
        }
    }
    o.detail = std::to_string(commands.size()) + " subcommands, " + std::to_string(compared) +
               " data files compared byte for byte" + o.detail;
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"mask oracle equality", masks_match_predicates},
        {"full-mask permutation invariance", full_mask_permutation_invariance},
        {"CCAM order sensitivity", ccam_order_sensitivity},
        {"reduction identities", reduction_identities},
        {"gradient verification", gradient_verification},
        {"convergence under frame refinement", convergence},
        {"order task: CCAM vs full mask", order_direction},
        {"order task: TPE neutrality", tpe_neutrality},
        {"CLI determinism", cli_determinism},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto start = Clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double elapsed = seconds_since(start);
        if (k == 0 && elapsed >= 1.0) {
            o.pass = false;
            o.detail += ", over the 1 s budget";
        }
        if (!o.pass) ++failures;
        std::printf("%s criterion %zu (%s): %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", k + 1,
                    criteria[k].first.c_str(), o.detail.c_str(), elapsed);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
