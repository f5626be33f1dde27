#include "ccam/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ccam/config.hpp"
#include "ccam/errors.hpp"
#include "ccam/gradcheck.hpp"
#include "ccam/params_io.hpp"
#include "ccam/rng.hpp"
#include "ccam/version.hpp"

namespace ccam {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

Index parse_count(const std::string& text, const std::string& flag) {
    Index v = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [end, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || end != last) {
        throw ConfigError("option " + flag + ": '" + text + "' is not an integer");
    }
    return v;
}

std::vector<Index> parse_counts(const std::string& text, const std::string& flag) {
    std::vector<Index> out;
    std::stringstream in(text);
    std::string piece;
    while (std::getline(in, piece, ',')) out.push_back(parse_count(piece, flag));
    if (out.empty()) throw ConfigError("option " + flag + ": empty list");
    return out;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Everything a subcommand may override on top of its preset and config file.
struct Flags {
    std::string config;
    std::string out;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> rule;
    std::optional<Index> queries;
    std::optional<std::string> frames;
    std::optional<Index> tokens;
    std::optional<std::string> precision;
    std::optional<Index> epochs;
    std::optional<double> learning_rate;
    std::optional<Index> batch_size;
    std::optional<Index> examples;
    std::optional<double> noise;
    std::optional<double> step;
    std::optional<Index> grid_points;
    std::string params;
    CLI::Option* tpe = nullptr;
    CLI::Option* no_tpe = nullptr;
};

void set_path(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("option --set: expected key=value, got '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const json::json_pointer ptr(pointer);
    if (!doc.contains(ptr) || doc.at(ptr).is_object()) {
        throw ConfigError("command line: key '" + key + "' is not recognized");
    }
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    doc[ptr] = value;
}

ExperimentConfig resolve(const std::string& sub, const Flags& f) {
    const ExperimentConfig base = preset(sub);
    const ExperimentConfig from_file = f.config.empty() ? base : load_config(f.config, base);
    json doc = to_json(from_file);

    if (f.seed) doc["seed"] = *f.seed;
    if (f.rule) doc["projector"]["mask"] = *f.rule;
    if (f.queries) doc["projector"]["queries"] = *f.queries;
    if (f.precision) doc["precision"] = *f.precision;
    if (f.tpe && f.tpe->count() > 0) doc["projector"]["tpe"] = true;
    if (f.no_tpe && f.no_tpe->count() > 0) doc["projector"]["tpe"] = false;
    if (f.frames) {
        if (sub == "converge" || sub == "consistency") {
            doc["frame_counts"] = parse_counts(*f.frames, "--frames");
        } else if (sub == "ordertask") {
            doc["dataset"]["frames"] = parse_count(*f.frames, "--frames");
        } else {
            doc["input"]["frames"] = parse_count(*f.frames, "--frames");
        }
    }
    if (f.tokens) {
        if (sub == "converge" || sub == "consistency") {
            doc["signal"]["tokens"] = *f.tokens;
        } else if (sub == "ordertask") {
            doc["dataset"]["tokens"] = *f.tokens;
        } else {
            doc["input"]["tokens"] = *f.tokens;
        }
    }
    if (f.epochs) doc["train"]["epochs"] = *f.epochs;
    if (f.learning_rate) doc["train"]["learning_rate"] = *f.learning_rate;
    if (f.batch_size) doc["train"]["batch_size"] = *f.batch_size;
    if (f.examples) doc["dataset"]["examples"] = *f.examples;
    if (f.noise) doc["dataset"]["noise"] = *f.noise;
    if (f.step) doc["gradcheck"]["step"] = *f.step;
    if (f.grid_points) doc["signal"]["grid_points"] = *f.grid_points;
    for (const auto& s : f.sets) set_path(doc, s);
    return config_from_json(doc, base, {}, "command line");
}

class OutputDir {
public:
    OutputDir(fs::path root, std::string digest, std::uint64_t seed)
        : root_(std::move(root)), digest_(std::move(digest)), seed_(seed) {
        std::error_code ec;
        fs::create_directories(root_, ec);
        if (ec) throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());
    }

    void text(const std::string& name, const std::string& content) {
        std::ofstream out(root_ / name, std::ios::binary | std::ios::trunc);
        out << content;
        out.close();
        if (!out) throw IoError("cannot write " + (root_ / name).string());
        files_.push_back(name);
    }

    /// CSV with the digest and seed on a leading comment line.
    void csv(const std::string& name, const std::string& header_and_rows) {
        text(name, "# config_digest=" + digest_ + " seed=" + std::to_string(seed_) + "\n" +
                       header_and_rows);
    }

    void data_json(const std::string& name, json body) {
        body["config_digest"] = digest_;
        body["seed"] = seed_;
        text(name, body.dump(2) + "\n");
    }

    void params(const std::string& name, const ProjectorParams<double>& p) {
        write_params(p, root_ / name);
        files_.push_back(name);
    }

    const fs::path& root() const { return root_; }
    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path root_;
    std::string digest_;
    std::uint64_t seed_;
    std::vector<std::string> files_;
};

void require_double(const ExperimentConfig& cfg, const std::string& sub) {
    if (cfg.precision != Precision::Double) {
        throw ConfigError("command line: key 'precision' must be \"double\" for " + sub);
    }
}

void require_continuous(const ExperimentConfig& cfg, const std::string& sub) {
    if (cfg.projector.mask_rule != MaskRule::CcamContinuous) {
        throw ConfigError("command line: key 'projector.mask' must be ccam-continuous for " + sub);
    }
}

FrameEmbeddings<double> synthetic_frames(const ExperimentConfig& cfg, Rng& rng) {
    Matrix data(cfg.input.frames * cfg.input.tokens, cfg.projector.input_dim);
    for (Index r = 0; r < data.rows(); ++r) {
        for (Index c = 0; c < data.cols(); ++c) data(r, c) = rng.normal();
    }
    return FrameEmbeddings<double>(cfg.input.frames, cfg.input.tokens, std::move(data));
}

std::string matrix_csv(const Matrix& m, const std::string& row_name, const std::string& col_prefix) {
    std::string s = row_name;
    for (Index c = 0; c < m.cols(); ++c) s += "," + col_prefix + std::to_string(c);
    s += "\n";
    for (Index r = 0; r < m.rows(); ++r) {
        s += std::to_string(r);
        for (Index c = 0; c < m.cols(); ++c) s += "," + number(m(r, c));
        s += "\n";
    }
    return s;
}

std::string series_csv(const std::vector<Index>& counts, const std::vector<double>& errors) {
    std::string s = "frame_count,error\n";
    for (std::size_t k = 0; k < counts.size(); ++k) {
        s += std::to_string(counts[k]) + "," + number(errors[k]) + "\n";
    }
    return s;
}

json run_mask(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& out) {
    const auto mask = build_mask(cfg.projector.mask_rule, cfg.projector.n_queries, cfg.input.frames);
    out << mask.to_grid();
    dir.csv("mask.csv", mask.to_csv());
    return {{"rule", to_string(mask.rule())},
            {"queries", mask.n_queries()},
            {"frames", mask.n_frames()},
            {"visible", mask.bits().count()}};
}

json run_forward(const ExperimentConfig& cfg, const std::string& digest, const std::string& params_path,
                 OutputDir& dir, std::ostream& out) {
    const auto params =
        params_path.empty() ? init_params(cfg.projector) : read_params(params_path, cfg.projector);
    Rng rng(cfg.seed(), kInputStream);
    const auto frames = synthetic_frames(cfg, rng);
    const auto mask = build_mask(cfg.projector.mask_rule, cfg.projector.n_queries, cfg.input.frames);
    const Matrix y = cfg.precision == Precision::Double
                         ? forward_video(params, frames, mask)
                         : Matrix(forward_video(cast_params<float>(params), frames.cast<float>(), mask)
                                      .cast<double>());
    dir.csv("output.csv", matrix_csv(y, "query", "c"));
    dir.params("params.bin", params);
    dir.text("params.json", params_manifest(params, digest).dump(2) + "\n");
    out << "forward: " << shape_of(y) << " output, norm " << number(y.norm()) << "\n";
    return {{"output_rows", y.rows()},
            {"output_cols", y.cols()},
            {"precision", to_string(cfg.precision)},
            {"params_source", params_path.empty() ? "init" : params_path}};
}

json run_gradcheck(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& out) {
    require_double(cfg, "gradcheck");
    const auto params = init_params(cfg.projector);
    Rng rng(cfg.seed(), kInputStream);
    const auto frames = synthetic_frames(cfg, rng);
    Matrix upstream(cfg.projector.n_queries, cfg.projector.model_dim);
    for (Index k = 0; k < upstream.size(); ++k) upstream.data()[k] = rng.normal();
    const auto mask = build_mask(cfg.projector.mask_rule, cfg.projector.n_queries, cfg.input.frames);

    const auto analytic = backward(params, frames, mask, upstream);
    const auto numeric = finite_diff(
        params, frames, mask, [&](const Matrix& y) { return (y.array() * upstream.array()).sum(); },
        cfg.gradcheck.step);
    const auto sections = compare_gradients(analytic, numeric, cfg.gradcheck.floor);

    double worst = 0.0;
    Index checked = 0;
    std::string rows = "section,checked,max_relative_error,max_absolute_error\n";
    for (const auto& s : sections) {
        worst = std::max(worst, s.max_relative_error);
        checked += s.checked;
        rows += s.section + "," + std::to_string(s.checked) + "," + number(s.max_relative_error) + "," +
                number(s.max_absolute_error) + "\n";
    }
    const bool passed = worst < cfg.gradcheck.tolerance;
    dir.csv("gradcheck.csv", rows);
    json summary = {{"mask", to_string(cfg.projector.mask_rule)},
                    {"tpe", cfg.projector.use_tpe},
                    {"step", cfg.gradcheck.step},
                    {"floor", cfg.gradcheck.floor},
                    {"tolerance", cfg.gradcheck.tolerance},
                    {"coordinates_checked", checked},
                    {"max_relative_error", worst},
                    {"passed", passed}};
    dir.data_json("gradcheck.json", summary);
    out << "gradcheck: max relative error " << number(worst) << " over " << checked << " coordinates ("
        << (passed ? "pass" : "FAIL") << ")\n";
    if (!passed) {
        throw NumericError("gradcheck: max relative error " + number(worst) + " exceeds tolerance " +
                           number(cfg.gradcheck.tolerance));
    }
    return summary;
}

ContinuousVideoSignal signal_for(const ExperimentConfig& cfg) {
    return make_signal(cfg.signal.tokens, cfg.projector.input_dim, cfg.signal.duration, cfg.seed(),
                       cfg.signal_options());
}

json run_converge(const ExperimentConfig& cfg, const std::string& digest, OutputDir& dir,
                  std::ostream& out) {
    require_double(cfg, "converge");
    require_continuous(cfg, "converge");
    const auto params = init_params(cfg.projector);
    auto report = convergence_run(params, signal_for(cfg), cfg.frame_counts, cfg.signal.grid_points);
    report.config_digest = digest;
    dir.csv("convergence.csv", series_csv(report.frame_counts, report.errors));

    json pairs = json::array();
    for (const auto& p : report.pairs) {
        pairs.push_back({{"frames_a", p.frames_a},
                         {"frames_b", p.frames_b},
                         {"discrepancy", p.discrepancy},
                         {"bound", p.bound}});
    }
    json summary = {{"seeds", {report.seed}},
                    {"frame_counts", report.frame_counts},
                    {"errors", report.errors},
                    {"slope", report.slope},
                    {"grid_points", cfg.signal.grid_points},
                    {"strictly_decreasing", report.strictly_decreasing()},
                    {"triangle_bound_holds", report.triangle_bound_holds()},
                    {"pairs", pairs}};
    dir.data_json("convergence.json", summary);
    out << series_csv(report.frame_counts, report.errors) << "slope " << number(report.slope) << "\n";
    return summary;
}

json run_consistency(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& out) {
    require_double(cfg, "consistency");
    require_continuous(cfg, "consistency");
    const auto params = init_params(cfg.projector);
    const auto signal = signal_for(cfg);
    const Index reference = cfg.frame_counts.back();
    std::vector<double> errors;
    for (Index t : cfg.frame_counts) errors.push_back(cross_count_consistency(params, signal, t, reference));

    std::vector<Index> coarse(cfg.frame_counts.begin(), cfg.frame_counts.end() - 1);
    std::vector<double> coarse_errors(errors.begin(), errors.end() - 1);
    const double slope = coarse.size() >= 2 ? log_log_slope(coarse, coarse_errors) : std::nan("");
    dir.csv("consistency.csv", series_csv(cfg.frame_counts, errors));
    json summary = {{"seeds", {cfg.seed()}},
                    {"reference_frames", reference},
                    {"frame_counts", cfg.frame_counts},
                    {"errors", errors},
                    {"slope", std::isfinite(slope) ? json(slope) : json(nullptr)}};
    dir.data_json("consistency.json", summary);
    out << series_csv(cfg.frame_counts, errors);
    return summary;
}

json run_ordertask(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& out, double& wall) {
    require_double(cfg, "ordertask");
    const auto data = make_order_dataset(cfg.dataset_spec());
    const auto report = train_order_probe(cfg.projector, data, cfg.projector.mask_rule, cfg.train);
    wall = report.wall_seconds;

    std::string rows = "epoch,loss\n";
    for (std::size_t e = 0; e < report.loss_curve.size(); ++e) {
        rows += std::to_string(e + 1) + "," + number(report.loss_curve[e]) + "\n";
    }
    dir.csv("loss.csv", rows);
    json body = {{"mask", to_string(report.mask_rule)},
                 {"tpe", report.use_tpe},
                 {"epochs", report.epochs},
                 {"train_accuracy", report.train_accuracy},
                 {"test_accuracy", report.test_accuracy},
                 {"final_loss", report.loss_curve.empty() ? json(nullptr) : json(report.loss_curve.back())},
                 {"train_examples", data.train.size()},
                 {"test_examples", data.test.size()}};
    dir.data_json("report.json", body);
    out << "ordertask: mask " << to_string(report.mask_rule) << " train " << number(report.train_accuracy)
        << " test " << number(report.test_accuracy) << "\n";
    return body;
}

int fail(std::ostream& err, int code, std::string_view kind, const std::string& message) {
    err << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << "\n";
    return code;
}

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON config file");
    app->add_option("--seed", f.seed, "Run seed");
    app->add_option("--out", f.out, std::string("Output directory (overrides ") + kOutDirEnv + ")");
    app->add_option("--set", f.sets, "Override a config leaf: key.path=value")
        ->allow_extra_args(false)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app->add_option("--rule,--mask", f.rule, "full, ccam-floor or ccam-continuous");
    app->add_option("--queries", f.queries, "Number of learnable queries");
    app->add_option("--frames", f.frames, "Frame count (comma list for sweeps)");
    app->add_option("--tokens", f.tokens, "Tokens per frame");
}

void add_projector(CLI::App* app, Flags& f) {
    f.tpe = app->add_flag("--tpe", "Add temporal position embeddings");
    f.no_tpe = app->add_flag("--no-tpe", "Disable temporal position embeddings");
    f.tpe->excludes(f.no_tpe);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("Causal cross-attention mask projector experiments", "ccam");
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Flags f;
    auto* mask = app.add_subcommand("mask", "Print a query-by-frame mask and write mask.csv");
    add_common(mask, f);

    auto* forward = app.add_subcommand("forward", "Project synthetic frames; write output and params");
    add_common(forward, f);
    add_projector(forward, f);
    forward->add_option("--precision", f.precision, "double or float");
    forward->add_option("--params", f.params, "Load parameters from a params.bin file");

    auto* grad = app.add_subcommand("gradcheck", "Compare backward against finite differences");
    add_common(grad, f);
    add_projector(grad, f);
    grad->add_option("--step", f.step, "Finite-difference step");

    auto* converge = app.add_subcommand("converge", "Frame-count sweep against the quadrature reference");
    add_common(converge, f);
    converge->add_option("--grid-points", f.grid_points, "Quadrature cells");

    auto* consistency = app.add_subcommand("consistency", "Frame-count sweep against the densest count");
    add_common(consistency, f);

    auto* order = app.add_subcommand("ordertask", "Train the event-order probe");
    add_common(order, f);
    add_projector(order, f);
    order->add_option("--epochs", f.epochs, "Training epochs");
    order->add_option("--lr", f.learning_rate, "Learning rate");
    order->add_option("--batch-size", f.batch_size, "Minibatch size");
    order->add_option("--examples", f.examples, "Dataset size");
    order->add_option("--noise", f.noise, "Noise standard deviation");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        return fail(err, 2, "usage", e.what());
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    const auto started = std::chrono::steady_clock::now();
    const std::string started_at = utc_now();
    try {
        const ExperimentConfig cfg = resolve(sub, f);
        const std::string digest = config_digest(cfg);
        std::string root = cfg.output_dir;
        if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') root = env;
        if (!f.out.empty()) root = f.out;
        OutputDir dir(root, digest, cfg.seed());
        dir.text("config.json", serialize(cfg));

        json payload;
        double wall = 0.0;
        if (sub == "mask") {
            payload = run_mask(cfg, dir, out);
        } else if (sub == "forward") {
            payload = run_forward(cfg, digest, f.params, dir, out);
        } else if (sub == "gradcheck") {
            payload = run_gradcheck(cfg, dir, out);
        } else if (sub == "converge") {
            payload = run_converge(cfg, digest, dir, out);
        } else if (sub == "consistency") {
            payload = run_consistency(cfg, dir, out);
        } else {
            payload = run_ordertask(cfg, dir, out, wall);
        }

        const double duration =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        json meta = {{"tool", "ccam"},
                     {"version", kVersion},
                     {"subcommand", sub},
                     {"config_digest", digest},
                     {"seed", cfg.seed()},
                     {"prng", Rng::algorithm},
                     {"started_at", started_at},
                     {"duration_seconds", duration},
                     {"files", dir.files()},
                     {"payload", payload}};
        if (sub == "ordertask") meta["train_wall_seconds"] = wall;
        std::ofstream run_file(dir.root() / "run.json", std::ios::binary | std::ios::trunc);
        run_file << meta.dump(2) << "\n";
        run_file.close();
        if (!run_file) throw IoError("cannot write " + (dir.root() / "run.json").string());
        return 0;
    } catch (const ConfigError& e) {
        return fail(err, 2, "config", e.what());
    } catch (const std::invalid_argument& e) {
        return fail(err, 2, "config", e.what());
    } catch (const NumericError& e) {
        return fail(err, 3, "numeric", e.what());
    } catch (const IoError& e) {
        return fail(err, 4, "io", e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(err, 4, "io", e.what());
    } catch (const std::exception& e) {
        return fail(err, 1, "internal", e.what());
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace ccam
