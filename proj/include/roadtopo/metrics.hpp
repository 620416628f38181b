// Segmentation and topology metrics: IoU/F1 pixel scores, skeleton-to-graph
// extraction, and APLS (average path length similarity) over road graphs.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "roadtopo/raster.hpp"
#include "roadtopo/skeleton.hpp"

namespace roadtopo {

struct GraphEdge {
    std::int32_t a = 0;
    std::int32_t b = 0;
    double length = 0.0;
};

// Undirected road graph. Nodes are pixel coordinates; edge lengths are in
// pixel step units. Self-edges represent isolated cycles.
struct RoadGraph {
    std::vector<Pixel> nodes;
    std::vector<GraphEdge> edges;

    bool empty() const { return nodes.empty(); }
};

inline void require_valid(const RoadGraph& g) {
    const auto n = static_cast<std::int32_t>(g.nodes.size());
    for (const GraphEdge& e : g.edges) {
        if (e.a < 0 || e.a >= n || e.b < 0 || e.b >= n) {
            throw UsageError("graph edge endpoint out of range: " + std::to_string(e.a) + " " +
                             std::to_string(e.b) + " with " + std::to_string(n) + " nodes");
        }
        if (!(e.length > 0.0) || !std::isfinite(e.length)) {
            throw UsageError("graph edge length must be finite and positive, got " +
                             std::to_string(e.length));
        }
    }
}

struct IouF1 {
    double iou = 1.0;
    double f1 = 1.0;
};

struct MetricReport {
    double iou = 1.0;
    double f1 = 1.0;
    double apls = 1.0;
};

// iou = |P∩G| / |P∪G|, f1 = 2|P∩G| / (|P|+|G|); both 1 when pred and gt are
// empty (nothing to find, nothing found).
inline IouF1 iou_f1(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_dims(pred.dims, gt.dims, "iou_f1");
    std::int64_t inter = 0, np = 0, ng = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const bool p = pred.values[i] != 0;
        const bool g = gt.values[i] != 0;
        np += p;
        ng += g;
        inter += p && g;
    }
    if (np == 0 && ng == 0) return {1.0, 1.0};
    const double uni = static_cast<double>(np + ng - inter);
    return {static_cast<double>(inter) / uni,
            2.0 * static_cast<double>(inter) / static_cast<double>(np + ng)};
}

// One-pixel width: no fully-foreground 2x2 block anywhere.
inline bool is_thin(const BinaryMask& mask) {
    require_valid(mask.dims);
    for (int r = 0; r + 1 < mask.dims.height; ++r) {
        for (int c = 0; c + 1 < mask.dims.width; ++c) {
            if (mask.at(r, c) && mask.at(r, c + 1) && mask.at(r + 1, c) && mask.at(r + 1, c + 1)) {
                return false;
            }
        }
    }
    return true;
}

namespace detail {

inline constexpr double kSqrt2 = 1.4142135623730951;

inline bool diagonal_dir(int k) { return k == 0 || k == 2 || k == 5 || k == 7; }
inline double step_length(int k) { return diagonal_dir(k) ? kSqrt2 : 1.0; }

// Adjacency bitmask per pixel over kNeighborOffsets8 indices. A diagonal step
// is dropped when either of the two orthogonal pixels it cuts across is
// foreground: the chain is then routed through that pixel instead, so junction
// neighborhoods don't sprout shortcut edges. Dropping is symmetric (both
// pixels see the same shared cells), and never disconnects anything the
// orthogonal detour doesn't reconnect.
inline std::vector<std::uint8_t> reduced_adjacency(const BinaryMask& mask) {
    std::vector<std::uint8_t> adj(mask.values.size(), 0);
    for (int r = 0; r < mask.dims.height; ++r) {
        for (int c = 0; c < mask.dims.width; ++c) {
            const std::size_t idx = flat_index({r, c}, mask.dims);
            if (mask.values[idx] == 0) continue;
            std::uint8_t bits = 0;
            for (int k = 0; k < 8; ++k) {
                const Pixel q{r + kNeighborOffsets8[k][0], c + kNeighborOffsets8[k][1]};
                if (!in_bounds(q, mask.dims) || mask.values[flat_index(q, mask.dims)] == 0) continue;
                if (diagonal_dir(k)) {
                    const Pixel s1{q.row, c};
                    const Pixel s2{r, q.col};
                    if (mask.values[flat_index(s1, mask.dims)] != 0 ||
                        mask.values[flat_index(s2, mask.dims)] != 0) {
                        continue;
                    }
                }
                bits = static_cast<std::uint8_t>(bits | (1u << k));
            }
            adj[idx] = bits;
        }
    }
    return adj;
}

}  // namespace detail

// Converts a thin mask to a road graph. Nodes are pixels whose chain degree
// (reduced adjacency, see above) differs from 2: endpoints, junctions, and
// isolated pixels. Edges trace the degree-2 chains between nodes; orthogonal
// steps count 1, diagonal steps √2. A pure cycle (all pixels degree 2) gets
// one artificial node at its first pixel in raster order and a self-edge of
// the cycle's perimeter. Non-thin input is skeletonized first.
inline RoadGraph extract_graph(const BinaryMask& skeleton) {
    require_valid(skeleton.dims);
    BinaryMask thinned;
    const BinaryMask* s = &skeleton;
    if (!is_thin(skeleton)) {
        thinned = skeletonize(skeleton);
        s = &thinned;
    }
    const GridDims dims = s->dims;
    const std::vector<std::uint8_t> adj = detail::reduced_adjacency(*s);

    RoadGraph g;
    std::vector<std::int32_t> node_id(adj.size(), -1);
    for (int r = 0; r < dims.height; ++r) {
        for (int c = 0; c < dims.width; ++c) {
            const std::size_t idx = flat_index({r, c}, dims);
            if (s->values[idx] != 0 && std::popcount(adj[idx]) != 2) {
                node_id[idx] = static_cast<std::int32_t>(g.nodes.size());
                g.nodes.push_back({r, c});
            }
        }
    }

    // used[i] holds the outgoing directions already traversed at pixel i;
    // marking both directions of every step makes each chain trace unique.
    std::vector<std::uint8_t> used(adj.size(), 0);
    auto walk = [&](std::size_t from, int k0) -> std::pair<std::size_t, double> {
        std::size_t cur = from;
        int k = k0;
        double len = 0.0;
        do {
            used[cur] = static_cast<std::uint8_t>(used[cur] | (1u << k));
            const Pixel p{static_cast<int>(cur) / dims.width, static_cast<int>(cur) % dims.width};
            const Pixel q{p.row + detail::kNeighborOffsets8[k][0],
                          p.col + detail::kNeighborOffsets8[k][1]};
            const std::size_t qi = flat_index(q, dims);
            used[qi] = static_cast<std::uint8_t>(used[qi] | (1u << (7 - k)));
            len += detail::step_length(k);
            cur = qi;
            if (node_id[cur] >= 0 || cur == from) break;
            const std::uint8_t rest = static_cast<std::uint8_t>(adj[cur] & ~(1u << (7 - k)));
            k = std::countr_zero(rest);
        } while (true);
        return {cur, len};
    };

    for (int r = 0; r < dims.height; ++r) {
        for (int c = 0; c < dims.width; ++c) {
            const std::size_t idx = flat_index({r, c}, dims);
            if (node_id[idx] < 0) continue;
            for (int k = 0; k < 8; ++k) {
                if (!(adj[idx] >> k & 1) || (used[idx] >> k & 1)) continue;
                const auto [end, len] = walk(idx, k);
                g.edges.push_back({node_id[idx], node_id[end], len});
            }
        }
    }

    // Pixels still untouched are pure cycles: every pixel degree 2, no node.
    for (int r = 0; r < dims.height; ++r) {
        for (int c = 0; c < dims.width; ++c) {
            const std::size_t idx = flat_index({r, c}, dims);
            if (s->values[idx] == 0 || node_id[idx] >= 0 || used[idx] != 0) continue;
            const std::int32_t id = static_cast<std::int32_t>(g.nodes.size());
            g.nodes.push_back({r, c});
            const auto [end, len] = walk(idx, std::countr_zero(adj[idx]));
            (void)end;  // a cycle walk always returns to its start
            g.edges.push_back({id, id, len});
        }
    }
    return g;
}

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-path lengths from every node (Dijkstra; self-edges are irrelevant
// to shortest paths and skipped).
inline std::vector<std::vector<double>> all_pairs_lengths(const RoadGraph& g) {
    const std::size_t n = g.nodes.size();
    std::vector<std::vector<std::pair<std::int32_t, double>>> adj(n);
    for (const GraphEdge& e : g.edges) {
        if (e.a == e.b) continue;
        adj[static_cast<std::size_t>(e.a)].push_back({e.b, e.length});
        adj[static_cast<std::size_t>(e.b)].push_back({e.a, e.length});
    }
    std::vector<std::vector<double>> dist(n);
    using Item = std::pair<double, std::int32_t>;
    for (std::size_t src = 0; src < n; ++src) {
        auto& d = dist[src];
        d.assign(n, kInf);
        d[src] = 0.0;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        heap.push({0.0, static_cast<std::int32_t>(src)});
        while (!heap.empty()) {
            const auto [du, u] = heap.top();
            heap.pop();
            if (du > d[static_cast<std::size_t>(u)]) continue;
            for (const auto& [v, w] : adj[static_cast<std::size_t>(u)]) {
                const double nd = du + w;
                if (nd < d[static_cast<std::size_t>(v)]) {
                    d[static_cast<std::size_t>(v)] = nd;
                    heap.push({nd, v});
                }
            }
        }
    }
    return dist;
}

// Nearest Euclidean node of `to` for each node of `from`, within radius;
// -1 when nothing is close enough. Ties resolve to the lowest index.
inline std::vector<std::int32_t> snap_nodes(const RoadGraph& from, const RoadGraph& to,
                                            double radius) {
    std::vector<std::int32_t> match(from.nodes.size(), -1);
    const double r2 = radius * radius;
    for (std::size_t i = 0; i < from.nodes.size(); ++i) {
        double best = kInf;
        for (std::size_t j = 0; j < to.nodes.size(); ++j) {
            const double dr = from.nodes[i].row - to.nodes[j].row;
            const double dc = from.nodes[i].col - to.nodes[j].col;
            const double d2 = dr * dr + dc * dc;
            if (d2 <= r2 && d2 < best) {
                best = d2;
                match[i] = static_cast<std::int32_t>(j);
            }
        }
    }
    return match;
}

struct DirectionalScore {
    double sum = 0.0;
    std::size_t count = 0;

    double mean() const { return count == 0 ? 1.0 : sum / static_cast<double>(count); }
};

// One direction of APLS: reference node pairs scored against the snapped
// counterparts. A pair contributes
//   1 - min(1, |L - L'| / max(L, L'))
// when both path lengths are finite; 0 when exactly one side is connected or
// an endpoint failed to snap; nothing when both sides agree the pair is
// disconnected (otherwise a proposal could raise its score by shedding the
// pairs it serves badly).
inline DirectionalScore directional_terms(const std::vector<std::vector<double>>& ref_dist,
                                          const std::vector<std::vector<double>>& other_dist,
                                          const std::vector<std::int32_t>& match) {
    DirectionalScore out;
    const std::size_t n = ref_dist.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double len_ref = ref_dist[i][j];
            const bool matched = match[i] >= 0 && match[j] >= 0;
            const double len_other =
                matched ? other_dist[static_cast<std::size_t>(match[i])]
                                    [static_cast<std::size_t>(match[j])]
                        : kInf;
            if (std::isfinite(len_ref)) {
                out.count += 1;
                if (std::isfinite(len_other)) {
                    const double rel =
                        std::abs(len_ref - len_other) / std::max(len_ref, len_other);
                    out.sum += 1.0 - std::min(1.0, rel);
                }
            } else if (std::isfinite(len_other)) {
                out.count += 1;  // term 0: proposal connects what reference does not
            }
        }
    }
    return out;
}

}  // namespace detail

// Average path length similarity between two road graphs. Each direction
// snaps the reference nodes onto the other graph (Euclidean, within
// snap_radius) and averages the per-pair terms described above; the score is
// the mean of the two directional means. Both graphs empty (no nodes) -> 1,
// exactly one empty -> 0. A direction with no scorable pairs counts as 1
// (nothing to compare, nothing wrong).
inline double apls(const RoadGraph& gt, const RoadGraph& prop, double snap_radius = 4.0) {
    if (!(snap_radius > 0.0) || !std::isfinite(snap_radius)) {
        throw UsageError("snap radius must be positive, got " + std::to_string(snap_radius));
    }
    require_valid(gt);
    require_valid(prop);
    if (gt.empty() && prop.empty()) return 1.0;
    if (gt.empty() != prop.empty()) return 0.0;
    const auto d_gt = detail::all_pairs_lengths(gt);
    const auto d_prop = detail::all_pairs_lengths(prop);
    const auto fwd =
        detail::directional_terms(d_gt, d_prop, detail::snap_nodes(gt, prop, snap_radius));
    const auto bwd =
        detail::directional_terms(d_prop, d_gt, detail::snap_nodes(prop, gt, snap_radius));
    return 0.5 * (fwd.mean() + bwd.mean());
}

// Mask-level convenience: IoU/F1 on the raw masks, APLS on graphs extracted
// from their skeletons.
inline MetricReport evaluate_masks(const BinaryMask& pred, const BinaryMask& gt,
                                   double snap_radius = 4.0) {
    const IouF1 px = iou_f1(pred, gt);
    const double a = apls(extract_graph(gt), extract_graph(pred), snap_radius);
    return {px.iou, px.f1, a};
}

}  // namespace roadtopo
