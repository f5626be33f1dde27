#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ccam/numkernel.hpp"
#include "ccam/projector.hpp"
#include "ccam/rng.hpp"

namespace ccam::testing {

inline Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

inline FrameEmbeddings<double> random_frames(Rng& rng, Index frames, Index tokens, Index channels) {
    return FrameEmbeddings<double>(frames, tokens, random_matrix(rng, frames * tokens, channels));
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

/// The tiny configuration used for golden and gradient checks.
inline ProjectorConfig tiny_config(std::uint64_t seed = 42) {
    ProjectorConfig cfg;
    cfg.n_queries = 4;
    cfg.model_dim = 8;
    cfg.input_dim = 5;
    cfg.n_heads = 2;
    cfg.seed = seed;
    return cfg;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("ccam_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

}  // namespace ccam::testing
