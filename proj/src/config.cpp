#include "ccam/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "ccam/errors.hpp"

namespace ccam {

using nlohmann::json;

std::string_view to_string(Precision p) { return p == Precision::Double ? "double" : "float"; }

OrderDatasetSpec ExperimentConfig::dataset_spec() const {
    OrderDatasetSpec spec = dataset;
    spec.channels = projector.input_dim;
    spec.seed = projector.seed;
    return spec;
}

SignalOptions ExperimentConfig::signal_options() const {
    SignalOptions o;
    o.n_harmonics = signal.harmonics;
    o.max_cycles = signal.max_cycles;
    o.amplitude_budget = signal.amplitude;
    return o;
}

ExperimentConfig preset(std::string_view subcommand) {
    ExperimentConfig cfg;
    auto& p = cfg.projector;
    if (subcommand == "gradcheck") {
        p.n_queries = 4;
        p.model_dim = 8;
        p.input_dim = 5;
        p.n_heads = 2;
        cfg.input = {3, 2};
    } else if (subcommand == "converge" || subcommand == "consistency") {
        p.n_queries = 32;
        p.model_dim = 16;
        p.input_dim = 8;
        p.n_heads = 4;
        p.mask_rule = MaskRule::CcamContinuous;
    } else if (subcommand == "ordertask") {
        p.n_queries = 16;
        p.model_dim = 16;
        p.input_dim = 8;
        p.n_heads = 4;
    }
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    const auto& p = cfg.projector;
    return {
        {"seed", p.seed},
        {"precision", std::string(to_string(cfg.precision))},
        {"projector",
         {{"queries", p.n_queries},
          {"model_dim", p.model_dim},
          {"input_dim", p.input_dim},
          {"heads", p.n_heads},
          {"ffn_expansion", p.ffn_expansion},
          {"mask", std::string(to_string(p.mask_rule))},
          {"tpe", p.use_tpe}}},
        {"input", {{"frames", cfg.input.frames}, {"tokens", cfg.input.tokens}}},
        {"signal",
         {{"tokens", cfg.signal.tokens},
          {"duration", cfg.signal.duration},
          {"harmonics", cfg.signal.harmonics},
          {"max_cycles", cfg.signal.max_cycles},
          {"amplitude", cfg.signal.amplitude},
          {"grid_points", cfg.signal.grid_points}}},
        {"frame_counts", cfg.frame_counts},
        {"dataset",
         {{"examples", cfg.dataset.n_examples},
          {"frames", cfg.dataset.n_frames},
          {"tokens", cfg.dataset.tokens},
          {"noise", cfg.dataset.noise}}},
        {"train",
         {{"epochs", cfg.train.epochs},
          {"learning_rate", cfg.train.learning_rate},
          {"momentum", cfg.train.momentum},
          {"batch_size", cfg.train.batch_size}}},
        {"gradcheck",
         {{"step", cfg.gradcheck.step},
          {"tolerance", cfg.gradcheck.tolerance},
          {"floor", cfg.gradcheck.floor}}},
        {"output", {{"dir", cfg.output_dir}}},
    };
}

std::string serialize(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

namespace {

class Reader {
public:
    Reader(std::string_view text, std::string_view source) : text_(text), source_(source) {}

    [[noreturn]] void fail(const std::string& path, const std::string& what) const {
        std::string where(source_);
        if (const auto line = line_of(path); line > 0) where += ":" + std::to_string(line);
        throw ConfigError(where + ": key '" + path + "' " + what);
    }

    void keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) const {
        if (!j.is_object()) fail(path, "must be an object");
        for (const auto& [key, value] : j.items()) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                fail(join(path, key), "is not recognized");
            }
        }
    }

    void count(const json& j, const std::string& path, std::string_view key, Index& out,
               Index min = 1) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(std::string(key));
        const auto full = join(path, key);
        if (!v.is_number_integer()) fail(full, "must be an integer");
        const bool huge = v.is_number_unsigned() && v.get<std::uint64_t>() > std::uint64_t{1} << 30;
        if (huge || v.get<std::int64_t>() < min || v.get<std::int64_t>() > std::int64_t{1} << 30) {
            fail(full, "must be an integer in [" + std::to_string(min) + ", 2^30]");
        }
        out = v.get<Index>();
    }

    void real(const json& j, const std::string& path, std::string_view key, double& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(std::string(key));
        if (!v.is_number()) fail(join(path, key), "must be a number");
        out = v.get<double>();
        if (!std::isfinite(out)) fail(join(path, key), "must be finite");
    }

    void boolean(const json& j, const std::string& path, std::string_view key, bool& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(std::string(key));
        if (!v.is_boolean()) fail(join(path, key), "must be true or false");
        out = v.get<bool>();
    }

    void string(const json& j, const std::string& path, std::string_view key, std::string& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(std::string(key));
        if (!v.is_string()) fail(join(path, key), "must be a string");
        out = v.get<std::string>();
    }

    static std::string join(const std::string& path, std::string_view key) {
        return path.empty() ? std::string(key) : path + "." + std::string(key);
    }

private:
    // Finds each path component in turn; good enough for hand-written files.
    std::size_t line_of(const std::string& path) const {
        if (text_.empty()) return 0;
        std::size_t pos = 0;
        std::size_t start = 0;
        while (start <= path.size()) {
            const auto dot = path.find('.', start);
            const auto part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            const auto hit = text_.find("\"" + part + "\"", pos);
            if (hit == std::string_view::npos) return 0;
            pos = hit;
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        return 1 + static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + pos, '\n'));
    }

    std::string_view text_;
    std::string_view source_;
};

std::string hex(const unsigned char* bytes, unsigned length) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned k = 0; k < length; ++k) {
        out += digits[bytes[k] >> 4];
        out += digits[bytes[k] & 0xf];
    }
    return out;
}

void check(const ExperimentConfig& cfg, const Reader& r) {
    try {
        cfg.projector.validate();
    } catch (const std::invalid_argument& e) {
        r.fail("projector", e.what());
    }
    const auto& s = cfg.signal;
    if (!(s.duration > 0.0)) r.fail("signal.duration", "must be > 0");
    if (!(s.max_cycles > 0.0 && s.max_cycles <= 16.0)) r.fail("signal.max_cycles", "must lie in (0, 16]");
    if (!(s.amplitude >= 0.0)) r.fail("signal.amplitude", "must be >= 0");
    if (cfg.frame_counts.empty()) r.fail("frame_counts", "must not be empty");
    for (std::size_t k = 1; k < cfg.frame_counts.size(); ++k) {
        if (cfg.frame_counts[k] <= cfg.frame_counts[k - 1]) r.fail("frame_counts", "must be strictly increasing");
    }
    if (cfg.frame_counts.front() < 1) r.fail("frame_counts", "must be positive");
    if (!(cfg.dataset.noise >= 0.0)) r.fail("dataset.noise", "must be >= 0");
    if (!(cfg.train.learning_rate > 0.0)) r.fail("train.learning_rate", "must be > 0");
    if (!(cfg.train.momentum >= 0.0 && cfg.train.momentum < 1.0)) r.fail("train.momentum", "must lie in [0, 1)");
    if (!(cfg.gradcheck.step > 0.0)) r.fail("gradcheck.step", "must be > 0");
    if (!(cfg.gradcheck.tolerance > 0.0)) r.fail("gradcheck.tolerance", "must be > 0");
    if (!(cfg.gradcheck.floor >= 0.0)) r.fail("gradcheck.floor", "must be >= 0");
    if (cfg.output_dir.empty()) r.fail("output.dir", "must not be empty");
}

}  // namespace

void validate(const ExperimentConfig& cfg) { check(cfg, Reader({}, "config")); }

ExperimentConfig config_from_json(const json& doc, const ExperimentConfig& base,
                                  std::string_view source_text, std::string_view source_name) {
    const Reader r(source_text, source_name);
    ExperimentConfig cfg = base;
    auto& p = cfg.projector;
    r.keys(doc, "", {"seed", "precision", "projector", "input", "signal", "frame_counts", "dataset",
                     "train", "gradcheck", "output"});

    if (doc.contains("seed")) {
        const auto& v = doc.at("seed");
        if (!v.is_number_unsigned()) r.fail("seed", "must be a non-negative 64-bit integer");
        p.seed = v.get<std::uint64_t>();
    }
    if (doc.contains("precision")) {
        std::string name;
        r.string(doc, "", "precision", name);
        if (name == "double") {
            cfg.precision = Precision::Double;
        } else if (name == "float") {
            cfg.precision = Precision::Float;
        } else {
            r.fail("precision", "must be \"double\" or \"float\", got \"" + name + "\"");
        }
    }
    if (doc.contains("projector")) {
        const auto& j = doc.at("projector");
        r.keys(j, "projector", {"queries", "model_dim", "input_dim", "heads", "ffn_expansion", "mask", "tpe"});
        r.count(j, "projector", "queries", p.n_queries);
        r.count(j, "projector", "model_dim", p.model_dim);
        r.count(j, "projector", "input_dim", p.input_dim);
        r.count(j, "projector", "heads", p.n_heads);
        r.count(j, "projector", "ffn_expansion", p.ffn_expansion);
        r.boolean(j, "projector", "tpe", p.use_tpe);
        if (j.contains("mask")) {
            std::string name;
            r.string(j, "projector", "mask", name);
            try {
                p.mask_rule = parse_mask_rule(name);
            } catch (const std::invalid_argument& e) {
                r.fail("projector.mask", e.what());
            }
        }
        if (p.model_dim % p.n_heads != 0) {
            r.fail("projector.heads", "must divide projector.model_dim (" + std::to_string(p.model_dim) +
                                          " % " + std::to_string(p.n_heads) + " != 0)");
        }
    }
    if (doc.contains("input")) {
        const auto& j = doc.at("input");
        r.keys(j, "input", {"frames", "tokens"});
        r.count(j, "input", "frames", cfg.input.frames);
        r.count(j, "input", "tokens", cfg.input.tokens);
    }
    if (doc.contains("signal")) {
        const auto& j = doc.at("signal");
        r.keys(j, "signal", {"tokens", "duration", "harmonics", "max_cycles", "amplitude", "grid_points"});
        r.count(j, "signal", "tokens", cfg.signal.tokens);
        r.real(j, "signal", "duration", cfg.signal.duration);
        r.count(j, "signal", "harmonics", cfg.signal.harmonics, 0);
        r.real(j, "signal", "max_cycles", cfg.signal.max_cycles);
        r.real(j, "signal", "amplitude", cfg.signal.amplitude);
        r.count(j, "signal", "grid_points", cfg.signal.grid_points, 2);
    }
    if (doc.contains("frame_counts")) {
        const auto& j = doc.at("frame_counts");
        if (!j.is_array() || j.empty()) r.fail("frame_counts", "must be a non-empty array of integers");
        cfg.frame_counts.clear();
        for (const auto& v : j) {
            if (!v.is_number_integer() || v.get<std::int64_t>() < 1 || v.get<std::int64_t>() > 1 << 20) {
                r.fail("frame_counts", "entries must be integers in [1, 2^20]");
            }
            cfg.frame_counts.push_back(v.get<Index>());
        }
    }
    if (doc.contains("dataset")) {
        const auto& j = doc.at("dataset");
        r.keys(j, "dataset", {"examples", "frames", "tokens", "noise"});
        r.count(j, "dataset", "examples", cfg.dataset.n_examples, 2);
        r.count(j, "dataset", "frames", cfg.dataset.n_frames, 2);
        r.count(j, "dataset", "tokens", cfg.dataset.tokens);
        r.real(j, "dataset", "noise", cfg.dataset.noise);
    }
    if (doc.contains("train")) {
        const auto& j = doc.at("train");
        r.keys(j, "train", {"epochs", "learning_rate", "momentum", "batch_size"});
        r.count(j, "train", "epochs", cfg.train.epochs, 0);
        r.real(j, "train", "learning_rate", cfg.train.learning_rate);
        r.real(j, "train", "momentum", cfg.train.momentum);
        r.count(j, "train", "batch_size", cfg.train.batch_size);
    }
    if (doc.contains("gradcheck")) {
        const auto& j = doc.at("gradcheck");
        r.keys(j, "gradcheck", {"step", "tolerance", "floor"});
        r.real(j, "gradcheck", "step", cfg.gradcheck.step);
        r.real(j, "gradcheck", "tolerance", cfg.gradcheck.tolerance);
        r.real(j, "gradcheck", "floor", cfg.gradcheck.floor);
    }
    if (doc.contains("output")) {
        const auto& j = doc.at("output");
        r.keys(j, "output", {"dir"});
        r.string(j, "output", "dir", cfg.output_dir);
    }
    check(cfg, r);
    return cfg;
}

ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base,
                              std::string_view source_name) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + upto, '\n');
        std::string what = e.what();
        if (const auto cut = what.find("syntax error"); cut != std::string::npos) what = what.substr(cut);
        throw ConfigError(std::string(source_name) + ":" + std::to_string(line) + ": " + what);
    }
    return config_from_json(doc, base, text, source_name);
}

ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), base, path.string());
}

std::string config_digest(const ExperimentConfig& cfg) {
    json doc = to_json(cfg);
    doc.erase("output");
    const std::string canonical = doc.dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned length = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("config_digest: SHA-256 failed");
    }
    return hex(digest, length);
}

}  // namespace ccam
