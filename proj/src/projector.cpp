#include "ccam/projector.hpp"

#include "ccam/rng.hpp"

namespace ccam {

void ProjectorConfig::validate() const {
    auto positive = [](Index v, const char* name) {
        if (v < 1) {
            throw std::invalid_argument(std::string("projector config: ") + name +
                                        " must be >= 1, got " + std::to_string(v));
        }
    };
    positive(n_queries, "n_queries");
    positive(model_dim, "model_dim");
    positive(input_dim, "input_dim");
    positive(n_heads, "n_heads");
    positive(ffn_expansion, "ffn_expansion");
    if (model_dim % n_heads != 0) {
        throw std::invalid_argument("projector config: model_dim " + std::to_string(model_dim) +
                                    " is not divisible by n_heads " + std::to_string(n_heads));
    }
}

namespace {

Matrix gaussian(Rng& rng, Index rows, Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
    }
    return m;
}

}  // namespace

ProjectorParams<double> init_params(const ProjectorConfig& cfg) {
    cfg.validate();
    const Index n = cfg.n_queries;
    const Index c = cfg.model_dim;
    const Index c_in = cfg.input_dim;
    const Index f = cfg.ffn_dim();
    auto inv_sqrt = [](Index fan) { return 1.0 / std::sqrt(static_cast<double>(fan)); };

    Rng rng(cfg.seed, kParamStream);
    ProjectorParams<double> p;
    p.config = cfg;
    p.queries = gaussian(rng, n, c, inv_sqrt(c));
    p.key_proj = gaussian(rng, c_in, c, inv_sqrt(c_in));
    p.value_proj = gaussian(rng, c_in, c, inv_sqrt(c_in));
    p.out_proj = gaussian(rng, c, c, inv_sqrt(c));
    p.ffn_in = gaussian(rng, c, f, inv_sqrt(c));
    p.ffn_in_bias = Matrix::Zero(1, f);
    p.ffn_out = gaussian(rng, f, c, inv_sqrt(f));
    p.ffn_out_bias = Matrix::Zero(1, c);
    p.norm1_gain = Matrix::Ones(1, c);
    p.norm1_bias = Matrix::Zero(1, c);
    p.norm2_gain = Matrix::Ones(1, c);
    p.norm2_bias = Matrix::Zero(1, c);
    return p;
}

}  // namespace ccam
