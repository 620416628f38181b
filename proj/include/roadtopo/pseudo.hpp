// Tri-state pseudo-label selection from probability maps and
// connectivity-based refinement (CBR) that grows road labels from
// high-confidence seeds into the uncertain probability band.
#pragma once

#include <string>
#include <vector>

#include "roadtopo/raster.hpp"

namespace roadtopo {

// Selection/growth thresholds for one prediction head. For the road head the
// defaults are (0.9, 0.7); for the skeleton head (0.5, 0.1). t_low is the
// band floor (one minus the background threshold).
struct ThresholdPair {
    double t_high = 0.9;
    double t_low = 0.7;
};

inline constexpr ThresholdPair kRoadThresholds{0.9, 0.7};
inline constexpr ThresholdPair kSkeletonThresholds{0.5, 0.1};

inline void require_valid(const ThresholdPair& th) {
    if (!(th.t_low < th.t_high) || !(th.t_high <= 1.0) || !(th.t_high > 0.0) ||
        !(th.t_low >= 0.0) || !(th.t_low < 1.0)) {
        throw UsageError("threshold pair must satisfy 0 <= t_low < t_high <= 1, got t_high=" +
                         std::to_string(th.t_high) + " t_low=" + std::to_string(th.t_low));
    }
}

// How probabilities map to tri-state labels.
//
// Partition (default): Road iff p > t_high, Background iff p < t_low,
// NotSelected in between; the band is exactly the CBR growth band.
//
// LiteralArgmax: label by p >= 0.5 and select iff p > t_high or p < t_low;
// selected pixels in [0.5, t_high] become low-confidence Road labels. Kept
// for comparison runs.
enum class SelectionRule {
    Partition,
    LiteralArgmax,
};

inline TriStateMask select_pseudo_labels(const ProbMap& prob, const ThresholdPair& th,
                                         SelectionRule rule = SelectionRule::Partition) {
    require_valid(prob.dims);
    require_valid(th);
    TriStateMask out{prob.dims, std::vector<TriState>(prob.values.size())};
    for (std::size_t i = 0; i < prob.values.size(); ++i) {
        const double p = prob.values[i];
        if (rule == SelectionRule::Partition) {
            if (p > th.t_high) {
                out.values[i] = TriState::Road;
            } else if (p < th.t_low) {
                out.values[i] = TriState::Background;
            } else {
                out.values[i] = TriState::NotSelected;
            }
        } else {
            if (p > th.t_high || p < th.t_low) {
                out.values[i] = p >= 0.5 ? TriState::Road : TriState::Background;
            } else {
                out.values[i] = TriState::NotSelected;
            }
        }
    }
    return out;
}

// Grows Road labels from the seed set (pixels already labeled Road) into
// 8-connected chains of NotSelected pixels whose probability lies strictly
// inside the band (t_low, t_high), repeating until no pixel changes.
// Background pixels never change; the Road set only grows. Accepts any Road
// seed set, including its own output, so refinement is idempotent.
inline TriStateMask cbr_refine(const ProbMap& prob, const TriStateMask& tri,
                               const ThresholdPair& th) {
    require_valid(th);
    require_same_dims(prob.dims, tri.dims, "cbr_refine");
    TriStateMask out = tri;
    std::vector<Pixel> worklist;
    for (int r = 0; r < tri.dims.height; ++r) {
        for (int c = 0; c < tri.dims.width; ++c) {
            if (tri.at(r, c) == TriState::Road) worklist.push_back({r, c});
        }
    }
    while (!worklist.empty()) {
        const Pixel p = worklist.back();
        worklist.pop_back();
        detail::for_each_neighbor(p, out.dims, Connectivity::Eight, [&](Pixel q) {
            const std::size_t qi = flat_index(q, out.dims);
            if (out.values[qi] != TriState::NotSelected) return;
            const double pq = prob.values[qi];
            if (pq > th.t_low && pq < th.t_high) {
                out.values[qi] = TriState::Road;
                worklist.push_back(q);
            }
        });
    }
    return out;
}

}  // namespace roadtopo
