#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "roadtopo/errors.hpp"
#include "roadtopo/metrics.hpp"
#include "roadtopo/rng.hpp"
#include "roadtopo/skeleton.hpp"
#include "support/oracles.hpp"

using namespace roadtopo;

namespace {

RoadGraph two_node_graph(double length) {
    RoadGraph g;
    g.nodes = {{0, 0}, {0, 10}};
    g.edges = {{0, 1, length}};
    return g;
}

}  // namespace

TEST_CASE("iou and f1 on a half overlap") {
    BinaryMask gt = BinaryMask::zeros({1, 20});
    BinaryMask pred = BinaryMask::zeros({1, 20});
    for (int c = 0; c < 10; ++c) gt.values[static_cast<std::size_t>(c)] = 1;
    for (int c = 0; c < 5; ++c) pred.values[static_cast<std::size_t>(c)] = 1;
    const IouF1 r = iou_f1(pred, gt);
    REQUIRE(r.iou == Catch::Approx(0.5).epsilon(1e-14));
    REQUIRE(r.f1 == Catch::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("iou and f1 edge cases") {
    const BinaryMask empty = BinaryMask::zeros({4, 4});
    const BinaryMask full = BinaryMask::ones({4, 4});
    REQUIRE(iou_f1(empty, empty).iou == 1.0);
    REQUIRE(iou_f1(empty, empty).f1 == 1.0);
    REQUIRE(iou_f1(full, empty).iou == 0.0);
    REQUIRE(iou_f1(empty, full).f1 == 0.0);
    REQUIRE(iou_f1(full, full).iou == 1.0);
}

TEST_CASE("iou and f1 match the counting oracle on random masks") {
    Rng rng(51);
    for (int trial = 0; trial < 300; ++trial) {
        BinaryMask a = BinaryMask::zeros({10, 10});
        BinaryMask b = BinaryMask::zeros({10, 10});
        for (auto& v : a.values) v = rng.uniform() < 0.3;
        for (auto& v : b.values) v = rng.uniform() < 0.3;
        const IouF1 lib = iou_f1(a, b);
        const IouF1 ref = oracle::iou_f1_count(a, b);
        REQUIRE(lib.iou == ref.iou);
        REQUIRE(lib.f1 == ref.f1);
    }
}

TEST_CASE("iou rejects mismatched dimensions") {
    REQUIRE_THROWS_AS(iou_f1(BinaryMask::zeros({2, 2}), BinaryMask::zeros({2, 3})), UsageError);
}

TEST_CASE("graph of a straight line has two endpoints and one edge") {
    const RoadGraph g = extract_graph(oracle::mask_from_ascii({"#####"}));
    REQUIRE(g.nodes.size() == 2);
    REQUIRE(g.edges.size() == 1);
    REQUIRE(g.nodes[0].row == 0);
    REQUIRE(g.nodes[0].col == 0);
    REQUIRE(g.nodes[1].col == 4);
    REQUIRE(g.edges[0].length == Catch::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("graph of a plus sign has a junction and four arms") {
    const RoadGraph g = extract_graph(oracle::mask_from_ascii({
        "..#..",
        "..#..",
        "#####",
        "..#..",
        "..#..",
    }));
    REQUIRE(g.nodes.size() == 5);
    REQUIRE(g.edges.size() == 4);
    for (const GraphEdge& e : g.edges) {
        REQUIRE(e.length == Catch::Approx(2.0).epsilon(1e-14));
    }
}

TEST_CASE("a closed ring becomes one artificial node with a self-edge") {
    const RoadGraph g = extract_graph(oracle::mask_from_ascii({
        "###",
        "#.#",
        "###",
    }));
    REQUIRE(g.nodes.size() == 1);
    REQUIRE(g.edges.size() == 1);
    REQUIRE(g.edges[0].a == g.edges[0].b);
    REQUIRE(g.edges[0].length == Catch::Approx(8.0).epsilon(1e-12));
    // anchored at the first foreground pixel in raster order
    REQUIRE(g.nodes[0].row == 0);
    REQUIRE(g.nodes[0].col == 0);
}

TEST_CASE("diagonal steps count sqrt(2)") {
    const RoadGraph g = extract_graph(oracle::mask_from_ascii({
        "#..",
        ".#.",
        "..#",
    }));
    REQUIRE(g.nodes.size() == 2);
    REQUIRE(g.edges.size() == 1);
    REQUIRE(g.edges[0].length == Catch::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("non-thin masks are skeletonized before extraction") {
    BinaryMask bar = BinaryMask::zeros({5, 12});
    for (int r = 1; r <= 3; ++r) {
        for (int c = 1; c <= 10; ++c) bar.values[flat_index({r, c}, bar.dims)] = 1;
    }
    const RoadGraph direct = extract_graph(bar);
    const RoadGraph via_skel = extract_graph(skeletonize(bar));
    REQUIRE(direct.nodes.size() == via_skel.nodes.size());
    REQUIRE(direct.edges.size() == via_skel.edges.size());
}

TEST_CASE("graph validation rejects bad graphs") {
    RoadGraph g = two_node_graph(5.0);
    g.edges[0].b = 7;
    REQUIRE_THROWS_AS(require_valid(g), UsageError);
    RoadGraph g2 = two_node_graph(0.0);
    REQUIRE_THROWS_AS(require_valid(g2), UsageError);
    RoadGraph g3 = two_node_graph(std::numeric_limits<double>::infinity());
    REQUIRE_THROWS_AS(require_valid(g3), UsageError);
}

TEST_CASE("apls of a graph against itself is one") {
    Rng rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryMask blob = oracle::random_blob(rng, {24, 24});
        const RoadGraph g = extract_graph(blob);
        REQUIRE(apls(g, g) == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("the worked pair of lengths 10 and 8 scores 0.8 exactly") {
    const RoadGraph gt = two_node_graph(10.0);
    const RoadGraph prop = two_node_graph(8.0);
    REQUIRE(apls(gt, prop) == 0.8);
    REQUIRE(apls(prop, gt) == 0.8);
}

TEST_CASE("apls empty-graph conventions") {
    const RoadGraph empty;
    REQUIRE(apls(empty, empty) == 1.0);
    REQUIRE(apls(two_node_graph(4.0), empty) == 0.0);
    REQUIRE(apls(empty, two_node_graph(4.0)) == 0.0);
}

TEST_CASE("apls is symmetric") {
    Rng rng(54);
    for (int trial = 0; trial < 10; ++trial) {
        const RoadGraph a = extract_graph(oracle::random_blob(rng, {20, 20}));
        const RoadGraph b = extract_graph(oracle::random_blob(rng, {20, 20}));
        REQUIRE(apls(a, b) == Catch::Approx(apls(b, a)).margin(1e-12));
    }
}

TEST_CASE("unmatched nodes zero their reference terms") {
    const RoadGraph gt = two_node_graph(10.0);
    RoadGraph far;
    far.nodes = {{40, 0}, {40, 10}};
    far.edges = {{0, 1, 10.0}};
    // no proposal node within the snap radius of any reference node
    REQUIRE(apls(gt, far) == 0.0);
}

TEST_CASE("snapping tolerates small node displacement") {
    const RoadGraph gt = two_node_graph(10.0);
    RoadGraph near = gt;
    near.nodes[0] = {1, 1};
    REQUIRE(apls(gt, near) > 0.7);
}

TEST_CASE("deleting edges never raises apls") {
    Rng rng(55);
    int tested = 0;
    for (int trial = 0; trial < 40 && tested < 12; ++trial) {
        const RoadGraph g = extract_graph(oracle::random_blob(rng, {28, 28}));
        if (g.edges.size() < 3) continue;
        ++tested;
        RoadGraph degraded = g;
        double prev = apls(g, degraded);
        while (!degraded.edges.empty()) {
            degraded.edges.pop_back();
            const double score = apls(g, degraded);
            REQUIRE(score <= prev + 1e-12);
            prev = score;
        }
    }
    REQUIRE(tested > 0);
}

TEST_CASE("shortest path lengths match Floyd-Warshall") {
    Rng rng(56);
    for (int trial = 0; trial < 30; ++trial) {
        RoadGraph g;
        const int n = 3 + static_cast<int>(rng.below(5));
        for (int i = 0; i < n; ++i) {
            g.nodes.push_back({static_cast<int>(rng.below(20)), static_cast<int>(rng.below(20))});
        }
        const int m = 2 + static_cast<int>(rng.below(8));
        for (int e = 0; e < m; ++e) {
            const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            g.edges.push_back({a, b, rng.uniform(0.5, 5.0)});
        }
        const auto ref = oracle::all_pairs_fw(g);
        const auto got = detail::all_pairs_lengths(g);
        for (int s = 0; s < n; ++s) {
            for (int t = 0; t < n; ++t) {
                const double want = ref[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
                const double have = got[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
                if (std::isinf(want)) {
                    REQUIRE(std::isinf(have));
                } else {
                    REQUIRE(have == Catch::Approx(want).margin(1e-12));
                }
            }
        }
    }
}

TEST_CASE("evaluate_masks scores a perfect prediction as all ones") {
    const BinaryMask gt = oracle::mask_from_ascii({
        "........",
        ".######.",
        "........",
    });
    const MetricReport r = evaluate_masks(gt, gt);
    REQUIRE(r.iou == 1.0);
    REQUIRE(r.f1 == 1.0);
    REQUIRE(r.apls == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("is_thin detects 2x2 blocks") {
    REQUIRE(is_thin(oracle::mask_from_ascii({"##.", ".#."})));
    REQUIRE_FALSE(is_thin(oracle::mask_from_ascii({"##", "##"})));
}

TEST_CASE("apls rejects a non-positive snap radius") {
    const RoadGraph g = two_node_graph(4.0);
    REQUIRE_THROWS_AS(apls(g, g, 0.0), UsageError);
    REQUIRE_THROWS_AS(apls(g, g, -1.0), UsageError);
}
