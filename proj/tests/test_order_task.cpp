#include "doctest.h"

#include <numeric>

#include "ccam/order_task.hpp"
#include "ccam/rng.hpp"

using namespace ccam;

namespace {

ProjectorConfig probe_config(std::uint64_t seed) {
    ProjectorConfig cfg;
    cfg.n_queries = 16;
    cfg.model_dim = 16;
    cfg.input_dim = 8;
    cfg.n_heads = 4;
    cfg.seed = seed;
    return cfg;
}

OrderDatasetSpec spec(std::uint64_t seed, Index examples, double noise) {
    OrderDatasetSpec s;
    s.n_examples = examples;
    s.n_frames = 8;
    s.tokens = 1;
    s.channels = 8;
    s.noise = noise;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("order dataset: balance, events, split") {
    for (Index n : {401, 400}) {
        const auto data = make_order_dataset(spec(3, n, 0.0));
        int positives = 0;
        for (const auto& ex : data.examples) {
            positives += ex.label;
            CHECK(ex.time_a != ex.time_b);
            CHECK((ex.label == 1) == (ex.time_a < ex.time_b));
            int a_hits = 0, b_hits = 0;
            for (Index j = 0; j < 8; ++j) {
                const Matrix f = ex.frames.frame(j);
                a_hits += f.row(0) == data.event_a ? 1 : 0;
                b_hits += f.row(0) == data.event_b ? 1 : 0;
                if (j != ex.time_a && j != ex.time_b) CHECK(f.isZero(0.0));
            }
            CHECK(a_hits == 1);
            CHECK(b_hits == 1);
        }
        CHECK(std::abs(2 * positives - static_cast<int>(n)) <= 1);
        CHECK(data.train.size() == static_cast<std::size_t>(n) * 4 / 5);
        std::vector<std::size_t> all = data.train;
        all.insert(all.end(), data.test.begin(), data.test.end());
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expected(static_cast<std::size_t>(n));
        std::iota(expected.begin(), expected.end(), std::size_t{0});
        CHECK(all == expected);
    }
    const auto a = make_order_dataset(spec(4, 50, 0.1));
    const auto b = make_order_dataset(spec(4, 50, 0.1));
    CHECK(a.examples[7].frames.tokens() == b.examples[7].frames.tokens());
    CHECK(a.test == b.test);
    CHECK_THROWS_AS(make_order_dataset(spec(1, 1, 0.0)), std::invalid_argument);
}

TEST_CASE("order probe: noise-free CCAM task is learned") {
    const auto data = make_order_dataset(spec(1, 400, 0.0));
    TrainOptions opt;
    opt.epochs = 200;
    const auto report = train_order_probe(probe_config(1), data, MaskRule::CcamFloor, opt);
    CHECK(report.test_accuracy >= 0.95);
    CHECK(report.loss_curve.size() == 200);
}

TEST_CASE("order probe: loss is non-increasing at the stable learning rate") {
    const auto data = make_order_dataset(spec(2, 400, 0.0));
    TrainOptions opt;
    opt.epochs = 60;
    opt.learning_rate = kStableLearningRate;
    opt.batch_size = static_cast<Index>(data.train.size());
    const auto report = train_order_probe(probe_config(2), data, MaskRule::CcamFloor, opt);
    for (std::size_t k = 1; k < report.loss_curve.size(); ++k)
        CHECK(report.loss_curve[k] <= report.loss_curve[k - 1]);
}

TEST_CASE("order probe: full mask stays at chance and ignores frame order") {
    const auto data = make_order_dataset(spec(5, 2000, 0.1));
    for (Index epochs : {0, 3}) {
        TrainOptions opt;
        opt.epochs = epochs;
        OrderProbe probe{init_params(probe_config(5)), build_full(16, 8), RowVec<double>(), 0.0};
        const auto report = train_order_probe(probe_config(5), data, MaskRule::Full, opt, &probe);
        CHECK(report.test_accuracy >= 0.40);
        CHECK(report.test_accuracy <= 0.60);

        Rng rng(5, 77);
        for (std::size_t k = 0; k < 50; ++k) {
            const auto& frames = data.examples[data.test[k]].frames;
            std::vector<Index> order(8);
            std::iota(order.begin(), order.end(), Index{0});
            rng.shuffle(order.begin(), order.end());
            CHECK(std::abs(probe.logit(frames) - probe.logit(frames.permuted(order))) <= 1e-10);
        }
    }
}

TEST_CASE("order probe: deterministic given the seed") {
    const auto data = make_order_dataset(spec(6, 200, 0.1));
    TrainOptions opt;
    opt.epochs = 3;
    const auto a = train_order_probe(probe_config(6), data, MaskRule::CcamFloor, opt);
    const auto b = train_order_probe(probe_config(6), data, MaskRule::CcamFloor, opt);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.test_accuracy == b.test_accuracy);
    CHECK(a.train_accuracy == b.train_accuracy);
}

TEST_CASE("order probe: divergence and bad inputs are reported") {
    const auto data = make_order_dataset(spec(7, 100, 0.1));
    TrainOptions opt;
    opt.epochs = 5;
    opt.learning_rate = 1e12;
    CHECK_THROWS_WITH_AS(train_order_probe(probe_config(7), data, MaskRule::CcamFloor, opt),
                         doctest::Contains("epoch"), NumericError);

    auto cfg = probe_config(7);
    cfg.input_dim = 5;
    CHECK_THROWS_AS(train_order_probe(cfg, data, MaskRule::CcamFloor, TrainOptions{}),
                    std::invalid_argument);
}
