// Grid primitives shared by every module: dense row-major rasters,
// 4/8-neighborhoods, and connected-component labeling.
//
// Coordinates are (row, col) with the origin at the top-left; all rasters are
// stored row-major. Everything here is a pure function over value types.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "roadtopo/errors.hpp"

namespace roadtopo {

struct GridDims {
    int height = 0;
    int width = 0;

    std::int64_t pixels() const { return static_cast<std::int64_t>(height) * width; }
    bool operator==(const GridDims&) const = default;
};

inline void require_valid(const GridDims& dims) {
    if (dims.height < 1 || dims.width < 1) {
        throw UsageError("grid dimensions must be at least 1x1, got " +
                         std::to_string(dims.height) + "x" + std::to_string(dims.width));
    }
}

struct Pixel {
    int row = 0;
    int col = 0;
    bool operator==(const Pixel&) const = default;
};

inline bool in_bounds(Pixel p, const GridDims& dims) {
    return p.row >= 0 && p.row < dims.height && p.col >= 0 && p.col < dims.width;
}

inline std::size_t flat_index(Pixel p, const GridDims& dims) {
    return static_cast<std::size_t>(p.row) * dims.width + static_cast<std::size_t>(p.col);
}

// Per-pixel probability in [0, 1].
struct ProbMap {
    GridDims dims;
    std::vector<double> values;

    static ProbMap filled(GridDims d, double v) {
        require_valid(d);
        return ProbMap{d, std::vector<double>(static_cast<std::size_t>(d.pixels()), v)};
    }
    static ProbMap zeros(GridDims d) { return filled(d, 0.0); }

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * dims.width + col]; }
    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * dims.width + col]; }
};

// Per-pixel label in {0, 1}.
struct BinaryMask {
    GridDims dims;
    std::vector<std::uint8_t> values;

    static BinaryMask filled(GridDims d, std::uint8_t v) {
        require_valid(d);
        return BinaryMask{d, std::vector<std::uint8_t>(static_cast<std::size_t>(d.pixels()), v)};
    }
    static BinaryMask zeros(GridDims d) { return filled(d, 0); }
    static BinaryMask ones(GridDims d) { return filled(d, 1); }

    std::uint8_t at(int row, int col) const { return values[static_cast<std::size_t>(row) * dims.width + col]; }
    std::uint8_t& at(int row, int col) { return values[static_cast<std::size_t>(row) * dims.width + col]; }

    std::int64_t count_foreground() const {
        std::int64_t n = 0;
        for (std::uint8_t v : values) n += v;
        return n;
    }
};

// Joint encoding of a pseudo-label and its selection mask: a pixel is
// selected iff it is not NotSelected, and its label is 1 iff it is Road.
enum class TriState : std::uint8_t {
    Background = 0,
    Road = 1,
    NotSelected = 2,
};

struct TriStateMask {
    GridDims dims;
    std::vector<TriState> values;

    static TriStateMask filled(GridDims d, TriState v) {
        require_valid(d);
        return TriStateMask{d, std::vector<TriState>(static_cast<std::size_t>(d.pixels()), v)};
    }

    TriState at(int row, int col) const { return values[static_cast<std::size_t>(row) * dims.width + col]; }
    TriState& at(int row, int col) { return values[static_cast<std::size_t>(row) * dims.width + col]; }

    // Selection mask m: 1 iff the pixel carries a usable pseudo-label.
    BinaryMask selection_mask() const {
        BinaryMask m{dims, std::vector<std::uint8_t>(values.size())};
        for (std::size_t i = 0; i < values.size(); ++i) {
            m.values[i] = values[i] != TriState::NotSelected ? 1 : 0;
        }
        return m;
    }

    // Pseudo-label: 1 iff Road. NotSelected pixels read 0 but are masked out.
    BinaryMask label_mask() const {
        BinaryMask y{dims, std::vector<std::uint8_t>(values.size())};
        for (std::size_t i = 0; i < values.size(); ++i) {
            y.values[i] = values[i] == TriState::Road ? 1 : 0;
        }
        return y;
    }
};

enum class Connectivity : int { Four = 4, Eight = 8 };

namespace detail {
// Offsets in raster order so every scan is deterministic.
inline constexpr int kNeighborOffsets8[8][2] = {
    {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
inline constexpr int kNeighborOffsets4[4][2] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};

template <typename Fn>
inline void for_each_neighbor(Pixel p, const GridDims& dims, Connectivity conn, Fn&& fn) {
    if (conn == Connectivity::Eight) {
        for (const auto& off : kNeighborOffsets8) {
            Pixel q{p.row + off[0], p.col + off[1]};
            if (in_bounds(q, dims)) fn(q);
        }
    } else {
        for (const auto& off : kNeighborOffsets4) {
            Pixel q{p.row + off[0], p.col + off[1]};
            if (in_bounds(q, dims)) fn(q);
        }
    }
}
}  // namespace detail

// In-bounds neighbors of `p`, never including `p` itself.
inline std::vector<Pixel> neighbors(Pixel p, const GridDims& dims, Connectivity conn) {
    require_valid(dims);
    if (!in_bounds(p, dims)) {
        throw UsageError("neighbors: pixel (" + std::to_string(p.row) + "," +
                         std::to_string(p.col) + ") out of bounds for " +
                         std::to_string(dims.height) + "x" + std::to_string(dims.width));
    }
    std::vector<Pixel> out;
    out.reserve(static_cast<std::size_t>(conn));
    detail::for_each_neighbor(p, dims, conn, [&](Pixel q) { out.push_back(q); });
    return out;
}

struct ComponentLabeling {
    std::vector<std::int32_t> labels;  // 0 = background, 1..count = components
    int count = 0;
};

// Labels foreground components with an iterative worklist; labels are
// assigned in raster order of each component's first pixel.
inline ComponentLabeling connected_components(const BinaryMask& mask, Connectivity conn) {
    require_valid(mask.dims);
    const std::size_t n = mask.values.size();
    ComponentLabeling out;
    out.labels.assign(n, 0);
    std::vector<Pixel> worklist;
    for (int r = 0; r < mask.dims.height; ++r) {
        for (int c = 0; c < mask.dims.width; ++c) {
            const std::size_t idx = flat_index({r, c}, mask.dims);
            if (mask.values[idx] == 0 || out.labels[idx] != 0) continue;
            const std::int32_t label = ++out.count;
            out.labels[idx] = label;
            worklist.clear();
            worklist.push_back({r, c});
            while (!worklist.empty()) {
                const Pixel p = worklist.back();
                worklist.pop_back();
                detail::for_each_neighbor(p, mask.dims, conn, [&](Pixel q) {
                    const std::size_t qi = flat_index(q, mask.dims);
                    if (mask.values[qi] != 0 && out.labels[qi] == 0) {
                        out.labels[qi] = label;
                        worklist.push_back(q);
                    }
                });
            }
        }
    }
    return out;
}

inline void require_same_dims(const GridDims& a, const GridDims& b, const char* what) {
    if (!(a == b)) {
        throw UsageError(std::string(what) + ": dimension mismatch, " +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

}  // namespace roadtopo
