// Thinning of binary road masks to one-pixel-wide skeletons.
//
// Two-subiteration parallel thinning in the Zhang-Suen family: each
// subiteration marks deletion candidates with the classic neighborhood
// conditions, then applies deletions in raster order guarded by a local
// topology test (only 8-simple, non-endpoint pixels are removed). The guard
// keeps the 8-connected component count of the input intact, including the
// small-square configurations the unguarded parallel rule would erase.
// Pixels outside the grid count as background.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <vector>

#include "roadtopo/raster.hpp"

namespace roadtopo {
namespace detail {

// Ring positions in Zhang-Suen order p2..p9; bit i of a neighborhood code is
// set iff that neighbor is foreground.
inline constexpr int kRingOffsets[8][2] = {
    {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}};

// A pixel is 8-simple (for 8-connected foreground over 4-connected
// background) iff its foreground ring forms exactly one 8-connected piece and
// the background ring has exactly one 4-connected piece touching an edge
// neighbor. Deleting such a pixel cannot split, merge, create, or close
// anything locally.
constexpr bool ring_simple(unsigned code) {
    // Foreground pieces under 8-adjacency between ring cells.
    std::array<int, 8> comp{};
    for (int i = 0; i < 8; ++i) comp[i] = (code >> i) & 1u ? i : -1;
    auto adjacent8 = [](int a, int b) {
        const int dr = kRingOffsets[a][0] - kRingOffsets[b][0];
        const int dc = kRingOffsets[a][1] - kRingOffsets[b][1];
        return dr >= -1 && dr <= 1 && dc >= -1 && dc <= 1;
    };
    bool merged = true;
    while (merged) {
        merged = false;
        for (int a = 0; a < 8; ++a) {
            if (comp[a] < 0) continue;
            for (int b = a + 1; b < 8; ++b) {
                if (comp[b] < 0 || comp[a] == comp[b] || !adjacent8(a, b)) continue;
                const int from = comp[b] > comp[a] ? comp[b] : comp[a];
                const int to = comp[b] > comp[a] ? comp[a] : comp[b];
                for (int k = 0; k < 8; ++k) {
                    if (comp[k] == from) comp[k] = to;
                }
                merged = true;
            }
        }
    }
    int fg_pieces = 0;
    for (int i = 0; i < 8; ++i) fg_pieces += comp[i] == i ? 1 : 0;
    if (fg_pieces != 1) return false;

    // Background pieces under 4-adjacency, counting only those that contain
    // an edge (N/E/S/W) cell; corner-only pieces are not 4-adjacent to the
    // center and do not constrain its deletion.
    std::array<int, 8> bg{};
    for (int i = 0; i < 8; ++i) bg[i] = (code >> i) & 1u ? -1 : i;
    auto adjacent4 = [](int a, int b) {
        const int dr = kRingOffsets[a][0] - kRingOffsets[b][0];
        const int dc = kRingOffsets[a][1] - kRingOffsets[b][1];
        return (dr == 0 && (dc == 1 || dc == -1)) || (dc == 0 && (dr == 1 || dr == -1));
    };
    merged = true;
    while (merged) {
        merged = false;
        for (int a = 0; a < 8; ++a) {
            if (bg[a] < 0) continue;
            for (int b = a + 1; b < 8; ++b) {
                if (bg[b] < 0 || bg[a] == bg[b] || !adjacent4(a, b)) continue;
                const int from = bg[b] > bg[a] ? bg[b] : bg[a];
                const int to = bg[b] > bg[a] ? bg[a] : bg[b];
                for (int k = 0; k < 8; ++k) {
                    if (bg[k] == from) bg[k] = to;
                }
                merged = true;
            }
        }
    }
    int bg_pieces = 0;
    for (int root = 0; root < 8; ++root) {
        if (bg[root] != root) continue;
        bool touches_edge = false;
        for (int k = 0; k < 8; ++k) {
            if (bg[k] == root && (k % 2 == 0)) touches_edge = true;  // even = edge cell
        }
        if (touches_edge) ++bg_pieces;
    }
    return bg_pieces == 1;
}

// Number of 0->1 transitions around the ring p2,p3,...,p9,p2.
constexpr int ring_transitions(unsigned code) {
    int t = 0;
    for (int i = 0; i < 8; ++i) {
        const unsigned a = (code >> i) & 1u;
        const unsigned b = (code >> ((i + 1) % 8)) & 1u;
        if (a == 0 && b == 1) ++t;
    }
    return t;
}

constexpr bool thinning_candidate(unsigned code, int subiteration) {
    const int b = std::popcount(code);
    if (b < 2 || b > 6) return false;
    if (ring_transitions(code) != 1) return false;
    const bool p2 = code & 0x01, p4 = code & 0x04, p6 = code & 0x10, p8 = code & 0x40;
    if (subiteration == 0) return !(p2 && p4 && p6) && !(p4 && p6 && p8);
    return !(p2 && p4 && p8) && !(p2 && p6 && p8);
}

struct ThinningTables {
    std::array<bool, 256> simple{};
    std::array<bool, 256> candidate0{};
    std::array<bool, 256> candidate1{};
};

constexpr ThinningTables make_thinning_tables() {
    ThinningTables t{};
    for (unsigned code = 0; code < 256; ++code) {
        t.simple[code] = ring_simple(code);
        t.candidate0[code] = thinning_candidate(code, 0);
        t.candidate1[code] = thinning_candidate(code, 1);
    }
    return t;
}

inline constexpr ThinningTables kThinning = make_thinning_tables();

inline unsigned neighborhood_code(const BinaryMask& img, int r, int c) {
    unsigned code = 0;
    for (int i = 0; i < 8; ++i) {
        const int rr = r + kRingOffsets[i][0];
        const int cc = c + kRingOffsets[i][1];
        if (rr >= 0 && rr < img.dims.height && cc >= 0 && cc < img.dims.width &&
            img.at(rr, cc) != 0) {
            code |= 1u << i;
        }
    }
    return code;
}

// Deletable right now: local topology preserved and not an endpoint.
inline bool guarded_deletable(const BinaryMask& img, int r, int c) {
    const unsigned code = neighborhood_code(img, r, c);
    return std::popcount(code) >= 2 && kThinning.simple[code];
}

inline bool in_full_square(const BinaryMask& img, int r, int c) {
    for (int dr = -1; dr <= 0; ++dr) {
        for (int dc = -1; dc <= 0; ++dc) {
            const int tr = r + dr, tc = c + dc;
            if (tr < 0 || tc < 0 || tr + 1 >= img.dims.height || tc + 1 >= img.dims.width) continue;
            if (img.at(tr, tc) && img.at(tr, tc + 1) && img.at(tr + 1, tc) &&
                img.at(tr + 1, tc + 1)) {
                return true;
            }
        }
    }
    return false;
}

}  // namespace detail

// Thins `mask` to a one-pixel-wide skeleton. The result is a subset of the
// input foreground with the same number of 8-connected components, contains
// no fully-foreground 2x2 block (except where removing one would change
// connectivity), and is a fixpoint: skeletonize(skeletonize(m)) == skeletonize(m).
inline BinaryMask skeletonize(const BinaryMask& mask) {
    require_valid(mask.dims);
    BinaryMask img = mask;
    std::vector<Pixel> candidates;
    bool outer = true;
    while (outer) {
        outer = false;
        bool changed = true;
        while (changed) {
            changed = false;
            for (int sub = 0; sub < 2; ++sub) {
                const auto& table =
                    sub == 0 ? detail::kThinning.candidate0 : detail::kThinning.candidate1;
                candidates.clear();
                for (int r = 0; r < img.dims.height; ++r) {
                    for (int c = 0; c < img.dims.width; ++c) {
                        if (img.at(r, c) && table[detail::neighborhood_code(img, r, c)]) {
                            candidates.push_back({r, c});
                        }
                    }
                }
                // Candidacy comes from the frozen image; the guard re-checks
                // against the live one so each deletion is individually safe.
                for (const Pixel& p : candidates) {
                    if (detail::guarded_deletable(img, p.row, p.col)) {
                        img.at(p.row, p.col) = 0;
                        changed = true;
                    }
                }
            }
        }
        // Residual 2x2 blocks the directional rules left behind: peel simple
        // members until the block is gone. This must wait for the subpass
        // fixpoint. While the shape is still thick every interior pixel sits
        // in a full 2x2 square, so running this sweep earlier turns it into a
        // raster-order bulk eroder that eats the shape from the top left and
        // strands one-pixel teeth on slanted strokes.
        for (int r = 0; r < img.dims.height; ++r) {
            for (int c = 0; c < img.dims.width; ++c) {
                if (img.at(r, c) && detail::in_full_square(img, r, c) &&
                    detail::guarded_deletable(img, r, c)) {
                    img.at(r, c) = 0;
                    outer = true;
                }
            }
        }
    }
    return img;
}

}  // namespace roadtopo
