#include <catch2/catch_amalgamated.hpp>

#include "roadtopo/metrics.hpp"
#include "roadtopo/raster.hpp"
#include "roadtopo/rng.hpp"
#include "roadtopo/skeleton.hpp"
#include "support/oracles.hpp"

using namespace roadtopo;

namespace {

bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
    for (std::size_t i = 0; i < inner.values.size(); ++i) {
        if (inner.values[i] != 0 && outer.values[i] == 0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("skeleton of an empty mask is empty") {
    const BinaryMask empty = BinaryMask::zeros({6, 6});
    REQUIRE(skeletonize(empty).count_foreground() == 0);
}

TEST_CASE("a one pixel wide line is already its own skeleton") {
    const BinaryMask line = oracle::mask_from_ascii({"#####"});
    REQUIRE(skeletonize(line).values == line.values);
}

TEST_CASE("a solid bar thins to a single strand") {
    BinaryMask bar = BinaryMask::ones({3, 10});
    BinaryMask pad = BinaryMask::zeros({5, 12});
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 10; ++c) {
            pad.values[flat_index({r + 1, c + 1}, pad.dims)] = bar.at(r, c);
        }
    }
    const BinaryMask skel = skeletonize(pad);
    REQUIRE(is_thin(skel));
    REQUIRE(is_subset(skel, pad));
    REQUIRE(connected_components(skel, Connectivity::Eight).count == 1);
    // long thin bars keep a strand spanning most of the length
    REQUIRE(skel.count_foreground() >= 8);
}

TEST_CASE("a ring keeps its cycle") {
    const BinaryMask ring = oracle::mask_from_ascii({
        ".....",
        ".###.",
        ".#.#.",
        ".###.",
        ".....",
    });
    const BinaryMask skel = skeletonize(ring);
    REQUIRE(is_thin(skel));
    REQUIRE(connected_components(skel, Connectivity::Eight).count == 1);
    // every pixel of a minimal ring is essential, so it must survive whole
    REQUIRE(skel.values == ring.values);
}

TEST_CASE("a full square shrinks but stays connected") {
    const BinaryMask square = BinaryMask::ones({8, 8});
    const BinaryMask skel = skeletonize(square);
    REQUIRE(is_thin(skel));
    REQUIRE(is_subset(skel, square));
    REQUIRE(skel.count_foreground() > 0);
    REQUIRE(connected_components(skel, Connectivity::Eight).count == 1);
}

TEST_CASE("skeleton invariants hold on random blobs") {
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const BinaryMask blob = oracle::random_blob(rng, {32, 32});
        const BinaryMask skel = skeletonize(blob);
        CAPTURE(trial);
        REQUIRE(is_subset(skel, blob));
        REQUIRE(is_thin(skel));
        REQUIRE(skeletonize(skel).values == skel.values);
        REQUIRE(connected_components(skel, Connectivity::Eight).count ==
                connected_components(blob, Connectivity::Eight).count);
    }
}

TEST_CASE("isolated pixels survive thinning") {
    BinaryMask dots = BinaryMask::zeros({5, 5});
    dots.values[flat_index({1, 1}, dots.dims)] = 1;
    dots.values[flat_index({3, 4}, dots.dims)] = 1;
    REQUIRE(skeletonize(dots).values == dots.values);
}
