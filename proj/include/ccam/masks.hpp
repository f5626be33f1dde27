#pragma once

#include <string>
#include <string_view>

#include "ccam/numkernel.hpp"

namespace ccam {

enum class MaskRule {
    Full,
    CcamFloor,       ///< query i sees frame j iff i >= j * floor(N / T)
    CcamContinuous,  ///< query i sees frame j iff j * N <= (i + 1) * T
};

std::string_view to_string(MaskRule rule);
/// Accepts "full", "ccam-floor", "ccam-continuous".
MaskRule parse_mask_rule(std::string_view name);

/// Frame-level visibility of N queries over T frames.
///
/// Under the CCAM rules each row is a prefix of frames, prefixes grow with
/// the query index, and the last query sees every frame.
class FrameMask {
public:
    FrameMask(BoolGrid bits, MaskRule rule);

    Index n_queries() const { return bits_.rows(); }
    Index n_frames() const { return bits_.cols(); }
    MaskRule rule() const { return rule_; }
    bool operator()(Index i, Index j) const { return bits_(i, j); }
    const BoolGrid& bits() const { return bits_; }

    /// Number of frames visible to query i.
    Index visible_count(Index i) const;

    /// Rows as lines of space-separated 0/1.
    std::string to_grid() const;
    /// Header "query,frame_0,...", one row per query.
    std::string to_csv() const;

    friend bool operator==(const FrameMask& a, const FrameMask& b);

private:
    BoolGrid bits_;
    MaskRule rule_;
};

FrameMask build_full(Index n_queries, Index n_frames);
FrameMask build_ccam_floor(Index n_queries, Index n_frames);
FrameMask build_ccam_continuous(Index n_queries, Index n_frames);
FrameMask build_mask(MaskRule rule, Index n_queries, Index n_frames);

/// Replicates each frame column once per token of that frame.
TokenMask expand_to_tokens(const FrameMask& mask, Index tokens_per_frame);

}  // namespace ccam
