#include "ccam/masks.hpp"

#include <sstream>
#include <stdexcept>

namespace ccam {

std::string_view to_string(MaskRule rule) {
    switch (rule) {
        case MaskRule::Full: return "full";
        case MaskRule::CcamFloor: return "ccam-floor";
        case MaskRule::CcamContinuous: return "ccam-continuous";
    }
    return "unknown";
}

MaskRule parse_mask_rule(std::string_view name) {
    if (name == "full") return MaskRule::Full;
    if (name == "ccam-floor" || name == "ccam") return MaskRule::CcamFloor;
    if (name == "ccam-continuous") return MaskRule::CcamContinuous;
    throw std::invalid_argument("unknown mask rule '" + std::string(name) +
                                "' (expected full, ccam-floor or ccam-continuous)");
}

FrameMask::FrameMask(BoolGrid bits, MaskRule rule) : bits_(std::move(bits)), rule_(rule) {
    if (bits_.rows() < 1 || bits_.cols() < 1) {
        throw std::invalid_argument("frame mask: empty " + shape_of(bits_) + " grid");
    }
    for (Index i = 0; i < bits_.rows(); ++i) {
        if (!bits_.row(i).any()) {
            throw std::invalid_argument("frame mask: query " + std::to_string(i) +
                                        " sees no frames");
        }
    }
}

Index FrameMask::visible_count(Index i) const { return bits_.row(i).count(); }

std::string FrameMask::to_grid() const {
    std::ostringstream out;
    for (Index i = 0; i < bits_.rows(); ++i) {
        for (Index j = 0; j < bits_.cols(); ++j) {
            out << (j ? " " : "") << (bits_(i, j) ? '1' : '0');
        }
        out << '\n';
    }
    return out.str();
}

std::string FrameMask::to_csv() const {
    std::ostringstream out;
    out << "query";
    for (Index j = 0; j < bits_.cols(); ++j) out << ",frame_" << j;
    out << '\n';
    for (Index i = 0; i < bits_.rows(); ++i) {
        out << i;
        for (Index j = 0; j < bits_.cols(); ++j) out << ',' << (bits_(i, j) ? 1 : 0);
        out << '\n';
    }
    return out.str();
}

bool operator==(const FrameMask& a, const FrameMask& b) {
    return a.rule_ == b.rule_ && a.bits_.rows() == b.bits_.rows() &&
           a.bits_.cols() == b.bits_.cols() && (a.bits_ == b.bits_).all();
}

namespace {

void require_dims(const char* who, Index n_queries, Index n_frames) {
    if (n_queries < 1 || n_frames < 1) {
        throw std::invalid_argument(std::string(who) + ": need at least one query and one frame, got " +
                                    std::to_string(n_queries) + "x" + std::to_string(n_frames));
    }
}

}  // namespace

FrameMask build_full(Index n_queries, Index n_frames) {
    require_dims("build_full", n_queries, n_frames);
    return FrameMask(BoolGrid::Constant(n_queries, n_frames, true), MaskRule::Full);
}

FrameMask build_ccam_floor(Index n_queries, Index n_frames) {
    require_dims("build_ccam_floor", n_queries, n_frames);
    if (n_queries < n_frames) {
        throw std::invalid_argument(
            "build_ccam_floor: " + std::to_string(n_queries) + " queries < " +
            std::to_string(n_frames) +
            " frames makes floor(N/T) zero and the mask full; use ccam-continuous");
    }
    const Index stride = n_queries / n_frames;
    BoolGrid bits(n_queries, n_frames);
    for (Index i = 0; i < n_queries; ++i) {
        for (Index j = 0; j < n_frames; ++j) bits(i, j) = i >= j * stride;
    }
    return FrameMask(std::move(bits), MaskRule::CcamFloor);
}

FrameMask build_ccam_continuous(Index n_queries, Index n_frames) {
    require_dims("build_ccam_continuous", n_queries, n_frames);
    BoolGrid bits(n_queries, n_frames);
    for (Index i = 0; i < n_queries; ++i) {
        for (Index j = 0; j < n_frames; ++j) bits(i, j) = j * n_queries <= (i + 1) * n_frames;
    }
    return FrameMask(std::move(bits), MaskRule::CcamContinuous);
}

FrameMask build_mask(MaskRule rule, Index n_queries, Index n_frames) {
    switch (rule) {
        case MaskRule::Full: return build_full(n_queries, n_frames);
        case MaskRule::CcamFloor: return build_ccam_floor(n_queries, n_frames);
        case MaskRule::CcamContinuous: return build_ccam_continuous(n_queries, n_frames);
    }
    throw std::invalid_argument("build_mask: unknown rule");
}

TokenMask expand_to_tokens(const FrameMask& mask, Index tokens_per_frame) {
    if (tokens_per_frame < 1) {
        throw std::invalid_argument("expand_to_tokens: tokens per frame must be >= 1");
    }
    BoolGrid bits(mask.n_queries(), mask.n_frames() * tokens_per_frame);
    for (Index j = 0; j < mask.n_frames(); ++j) {
        bits.middleCols(j * tokens_per_frame, tokens_per_frame) =
            mask.bits().col(j).replicate(1, tokens_per_frame);
    }
    return TokenMask(std::move(bits));
}

}  // namespace ccam
