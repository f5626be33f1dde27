#include "ccam/params_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "ccam/errors.hpp"

namespace ccam {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& out, T value) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::filesystem::path& path) {
    std::array<char, sizeof(T)> bytes{};
    if (!in.read(bytes.data(), sizeof(T))) {
        throw IoError("read_params: " + path.string() + " is truncated");
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

}  // namespace

void write_params(const ProjectorParams<double>& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_params: cannot open " + path.string());
    std::uint64_t count = 0;
    params.for_each([&](std::string_view, const Matrix&) { ++count; });
    put<std::uint64_t>(out, count);
    params.for_each([&](std::string_view name, const Matrix& m) {
        put<std::uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint64_t>(out, 2);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        for (Index k = 0; k < m.size(); ++k) put<double>(out, m.data()[k]);
    });
    if (!out) throw IoError("write_params: failed writing " + path.string());
}

ProjectorParams<double> read_params(const std::filesystem::path& path, const ProjectorConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_params: cannot open " + path.string());
    ProjectorParams<double> expected = init_params(cfg);

    std::uint64_t sections = 0;
    expected.for_each([&](std::string_view, const Matrix&) { ++sections; });
    const auto count = take<std::uint64_t>(in, path);
    if (count != sections) {
        throw IoError("read_params: " + path.string() + " has " + std::to_string(count) +
                      " sections, expected " + std::to_string(sections));
    }
    expected.for_each([&](std::string_view name, Matrix& m) {
        const auto name_length = take<std::uint64_t>(in, path);
        if (name_length > 256) throw IoError("read_params: corrupt section name length");
        std::string got(name_length, '\0');
        if (!in.read(got.data(), static_cast<std::streamsize>(name_length))) {
            throw IoError("read_params: " + path.string() + " is truncated");
        }
        if (got != name) {
            throw IoError("read_params: expected section '" + std::string(name) + "', found '" +
                          got + "'");
        }
        const auto rank = take<std::uint64_t>(in, path);
        if (rank != 2) throw IoError("read_params: section " + got + " has rank " + std::to_string(rank));
        const auto rows = take<std::uint64_t>(in, path);
        const auto cols = take<std::uint64_t>(in, path);
        if (rows != static_cast<std::uint64_t>(m.rows()) ||
            cols != static_cast<std::uint64_t>(m.cols())) {
            throw IoError("read_params: section " + got + " is " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", config expects " + shape_of(m));
        }
        for (Index k = 0; k < m.size(); ++k) m.data()[k] = take<double>(in, path);
        require_finite(m, "read_params: section " + got);
    });
    if (in.peek() != std::char_traits<char>::eof()) {
        throw IoError("read_params: trailing bytes in " + path.string());
    }
    return expected;
}

nlohmann::json config_to_json(const ProjectorConfig& cfg) {
    return {
        {"queries", cfg.n_queries},       {"model_dim", cfg.model_dim},
        {"input_dim", cfg.input_dim},     {"heads", cfg.n_heads},
        {"ffn_expansion", cfg.ffn_expansion}, {"mask", std::string(to_string(cfg.mask_rule))},
        {"tpe", cfg.use_tpe},             {"seed", cfg.seed},
    };
}

nlohmann::json params_manifest(const ProjectorParams<double>& params,
                               const std::string& config_digest) {
    nlohmann::json sections = nlohmann::json::array();
    params.for_each([&](std::string_view name, const Matrix& m) {
        sections.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
    });
    return {{"format", "ccam-params"},
            {"version", 1},
            {"byte_order", "little"},
            {"config", config_to_json(params.config)},
            {"seed", params.config.seed},
            {"config_digest", config_digest},
            {"sections", sections}};
}

}  // namespace ccam
