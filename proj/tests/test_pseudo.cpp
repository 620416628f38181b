#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "roadtopo/errors.hpp"
#include "roadtopo/pseudo.hpp"
#include "roadtopo/rng.hpp"
#include "support/oracles.hpp"

using namespace roadtopo;

namespace {

ProbMap prob_row(std::vector<double> values) {
    ProbMap m;
    m.dims = {1, static_cast<int>(values.size())};
    m.values = std::move(values);
    return m;
}

// smooth-ish random field so bands form contiguous regions, not speckle
ProbMap random_field(Rng& rng, GridDims dims) {
    ProbMap m = ProbMap::zeros(dims);
    for (auto& v : m.values) v = rng.uniform();
    ProbMap out = ProbMap::zeros(dims);
    for (int r = 0; r < dims.height; ++r) {
        for (int c = 0; c < dims.width; ++c) {
            double sum = 0.0;
            int n = 0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr;
                    const int cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= dims.height || cc >= dims.width) continue;
                    sum += m.at(rr, cc);
                    ++n;
                }
            }
            out.values[flat_index({r, c}, dims)] = 0.1 + 0.85 * (sum / n);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("partition rule maps bands to the three states") {
    const ProbMap p = prob_row({0.95, 0.9, 0.8, 0.7, 0.65, 0.5});
    const TriStateMask t = select_pseudo_labels(p, kRoadThresholds);
    REQUIRE(t.values == std::vector<TriState>{TriState::Road, TriState::NotSelected,
                                              TriState::NotSelected, TriState::NotSelected,
                                              TriState::Background, TriState::Background});
}

TEST_CASE("literal argmax rule selects outside the band and labels by 0.5") {
    const ProbMap p = prob_row({0.95, 0.6, 0.3, 0.8});
    const TriStateMask t = select_pseudo_labels(p, kRoadThresholds, SelectionRule::LiteralArgmax);
    REQUIRE(t.values == std::vector<TriState>{TriState::Road, TriState::Road,
                                              TriState::Background, TriState::NotSelected});
}

TEST_CASE("threshold pairs are validated") {
    REQUIRE_THROWS_AS(require_valid(ThresholdPair{0.5, 0.7}), UsageError);
    REQUIRE_THROWS_AS(require_valid(ThresholdPair{1.2, 0.7}), UsageError);
    REQUIRE_THROWS_AS(require_valid(ThresholdPair{0.9, -0.1}), UsageError);
    REQUIRE_NOTHROW(require_valid(ThresholdPair{0.9, 0.0}));
}

TEST_CASE("cbr grows through the band and stops at low probability") {
    const ProbMap p = prob_row({0.95, 0.80, 0.80, 0.60, 0.80});
    const TriStateMask initial = select_pseudo_labels(p, kRoadThresholds);
    const TriStateMask refined = cbr_refine(p, initial, kRoadThresholds);
    REQUIRE(refined.values == std::vector<TriState>{TriState::Road, TriState::Road,
                                                    TriState::Road, TriState::Background,
                                                    TriState::NotSelected});
}

TEST_CASE("cbr leaves an isolated band untouched") {
    const ProbMap p = prob_row({0.5, 0.8, 0.8, 0.5, 0.5});
    const TriStateMask initial = select_pseudo_labels(p, kRoadThresholds);
    const TriStateMask refined = cbr_refine(p, initial, kRoadThresholds);
    REQUIRE(refined.values == initial.values);
}

TEST_CASE("cbr grows diagonally") {
    ProbMap p = ProbMap::filled({2, 2}, 0.1);
    p.values[0] = 0.95;
    p.values[3] = 0.8;
    const TriStateMask initial = select_pseudo_labels(p, kRoadThresholds);
    const TriStateMask refined = cbr_refine(p, initial, kRoadThresholds);
    REQUIRE(refined.values[3] == TriState::Road);
}

TEST_CASE("cbr matches the sweep oracle on random fields") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const ProbMap p = random_field(rng, {16, 16});
        const ThresholdPair th = trial % 2 == 0 ? kRoadThresholds : ThresholdPair{0.75, 0.45};
        const TriStateMask initial = select_pseudo_labels(p, th);
        const TriStateMask refined = cbr_refine(p, initial, th);
        const TriStateMask expect = oracle::cbr_sweep(p, initial, th);
        CAPTURE(trial);
        REQUIRE(refined.values == expect.values);
    }
}

TEST_CASE("cbr only grows the road set and is idempotent") {
    Rng rng(32);
    for (int trial = 0; trial < 100; ++trial) {
        const ProbMap p = random_field(rng, {16, 16});
        const TriStateMask initial = select_pseudo_labels(p, kRoadThresholds);
        const TriStateMask refined = cbr_refine(p, initial, kRoadThresholds);
        for (std::size_t i = 0; i < refined.values.size(); ++i) {
            if (initial.values[i] == TriState::Road) {
                REQUIRE(refined.values[i] == TriState::Road);
            }
            if (initial.values[i] == TriState::Background) {
                REQUIRE(refined.values[i] == TriState::Background);
            }
        }
        const TriStateMask again = cbr_refine(p, refined, kRoadThresholds);
        REQUIRE(again.values == refined.values);
    }
}

TEST_CASE("cbr rejects mismatched dimensions") {
    const ProbMap p = ProbMap::zeros({2, 2});
    const TriStateMask t = TriStateMask::filled({2, 3}, TriState::Background);
    REQUIRE_THROWS_AS(cbr_refine(p, t, kRoadThresholds), UsageError);
}
