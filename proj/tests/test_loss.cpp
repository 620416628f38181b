#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "roadtopo/errors.hpp"
#include "roadtopo/loss.hpp"
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

BinaryMask mask_row(std::vector<std::uint8_t> values) {
    BinaryMask m;
    m.dims = {1, static_cast<int>(values.size())};
    m.values = std::move(values);
    return m;
}

}  // namespace

TEST_CASE("bce of a coin flip is ln 2") {
    const auto r = masked_bce(prob_row({0.5}), mask_row({1}), mask_row({1}));
    REQUIRE(r.loss == Catch::Approx(0.6931471805599453).epsilon(1e-14));
}

TEST_CASE("bce averages over all pixels by default") {
    const auto r = masked_bce(prob_row({0.9, 0.2}), mask_row({1, 0}), mask_row({1, 1}));
    REQUIRE(r.loss == Catch::Approx(0.164252033486018).epsilon(1e-14));
}

TEST_CASE("masked pixels contribute neither loss nor gradient") {
    const auto r = masked_bce(prob_row({0.9, 0.2}), mask_row({1, 0}), mask_row({1, 0}));
    // only the first pixel counts, still divided by 2 under AllPixels
    REQUIRE(r.loss == Catch::Approx(-std::log(0.9) / 2.0).epsilon(1e-14));
    REQUIRE(r.grad[1] == 0.0);
    REQUIRE(r.grad[0] != 0.0);
}

TEST_CASE("selected-count norm divides by the mask size") {
    const auto r = masked_bce(prob_row({0.9, 0.2}), mask_row({1, 0}), mask_row({1, 0}),
                              BceNorm::SelectedCount);
    REQUIRE(r.loss == Catch::Approx(-std::log(0.9)).epsilon(1e-14));
}

TEST_CASE("an empty selection yields zero loss and gradient") {
    const auto r = masked_bce(prob_row({0.9, 0.2}), mask_row({1, 0}), mask_row({0, 0}),
                              BceNorm::SelectedCount);
    REQUIRE(r.loss == 0.0);
    REQUIRE(r.grad == std::vector<double>{0.0, 0.0});
    const auto r2 = masked_bce(prob_row({0.9, 0.2}), mask_row({1, 0}), mask_row({0, 0}));
    REQUIRE(r2.loss == 0.0);
}

TEST_CASE("probability clamping keeps the loss finite at the endpoints") {
    const auto r = masked_bce(prob_row({0.0}), mask_row({1}), mask_row({1}));
    REQUIRE(std::isfinite(r.loss));
    REQUIRE(r.loss == Catch::Approx(16.11809565095832).epsilon(1e-12));
    const auto r2 = masked_bce(prob_row({1.0}), mask_row({0}), mask_row({1}));
    REQUIRE(std::isfinite(r2.loss));
}

TEST_CASE("bce gradient matches finite differences") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 4;
        std::vector<double> p(n);
        std::vector<std::uint8_t> y(n), m(n);
        for (int i = 0; i < n; ++i) {
            p[static_cast<std::size_t>(i)] = rng.uniform(0.05, 0.95);
            y[static_cast<std::size_t>(i)] = rng.uniform() < 0.5;
            m[static_cast<std::size_t>(i)] = rng.uniform() < 0.8;
        }
        const BceNorm norm = trial % 2 == 0 ? BceNorm::AllPixels : BceNorm::SelectedCount;
        const auto base = masked_bce(prob_row(p), mask_row(y), mask_row(m), norm);
        const double h = 1e-6;
        for (int i = 0; i < n; ++i) {
            std::vector<double> pp = p;
            pp[static_cast<std::size_t>(i)] += h;
            std::vector<double> pm = p;
            pm[static_cast<std::size_t>(i)] -= h;
            const double fd = (masked_bce(prob_row(pp), mask_row(y), mask_row(m), norm).loss -
                               masked_bce(prob_row(pm), mask_row(y), mask_row(m), norm).loss) /
                              (2 * h);
            REQUIRE(oracle::rel_err(base.grad[static_cast<std::size_t>(i)], fd) < 1e-6);
        }
    }
}

TEST_CASE("conformity penalizes head disagreement on skeleton pixels") {
    const auto r = conformity_loss(prob_row({0.8, 0.9}), prob_row({0.6, 0.1}), mask_row({1, 0}));
    REQUIRE(r.loss == Catch::Approx(0.04).epsilon(1e-12));
    REQUIRE(r.grad_road[0] == Catch::Approx(0.4).epsilon(1e-12));
    REQUIRE(r.grad_skel[0] == Catch::Approx(-0.4).epsilon(1e-12));
    REQUIRE(r.grad_road[1] == 0.0);
    REQUIRE(r.grad_skel[1] == 0.0);
}

TEST_CASE("conformity sums without normalization") {
    const auto r =
        conformity_loss(prob_row({0.8, 0.8, 0.8}), prob_row({0.6, 0.6, 0.6}), mask_row({1, 1, 1}));
    REQUIRE(r.loss == Catch::Approx(3 * 0.04).epsilon(1e-12));
}

TEST_CASE("detached skeleton blocks the skeleton-side gradient") {
    const auto r = conformity_loss(prob_row({0.8}), prob_row({0.6}), mask_row({1}), true);
    REQUIRE(r.grad_road[0] != 0.0);
    REQUIRE(r.grad_skel[0] == 0.0);
}

TEST_CASE("discriminator loss against constant labels") {
    const ProbMap d = prob_row({0.25, 0.25});
    REQUIRE(discriminator_loss(d, 0).loss == Catch::Approx(0.2876820724517809).epsilon(1e-14));
    REQUIRE(discriminator_loss(d, 1).loss == Catch::Approx(1.3862943611198906).epsilon(1e-14));
}

TEST_CASE("adversarial loss is the negative log of the discriminator output") {
    const auto r = adversarial_loss(prob_row({0.25, 0.25}));
    REQUIRE(r.loss == Catch::Approx(1.3862943611198906).epsilon(1e-14));
    REQUIRE(r.grad[0] == Catch::Approx(-1.0 / (0.25 * 2)).epsilon(1e-12));
}

TEST_CASE("discriminator and adversarial gradients match finite differences") {
    Rng rng(43);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> d(3);
        for (auto& v : d) v = rng.uniform(0.05, 0.95);
        const int label = trial % 2;
        const auto base_d = discriminator_loss(prob_row(d), label);
        const auto base_a = adversarial_loss(prob_row(d));
        for (std::size_t i = 0; i < d.size(); ++i) {
            std::vector<double> dp = d;
            dp[i] += h;
            std::vector<double> dm = d;
            dm[i] -= h;
            const double fd_d = (discriminator_loss(prob_row(dp), label).loss -
                                 discriminator_loss(prob_row(dm), label).loss) /
                                (2 * h);
            const double fd_a =
                (adversarial_loss(prob_row(dp)).loss - adversarial_loss(prob_row(dm)).loss) /
                (2 * h);
            REQUIRE(oracle::rel_err(base_d.grad[i], fd_d) < 1e-6);
            REQUIRE(oracle::rel_err(base_a.grad[i], fd_a) < 1e-6);
        }
    }
}

TEST_CASE("total loss composes the weighted sum") {
    LossReport parts;
    parts.seg_src = 1.0;
    parts.seg_tgt = 2.0;
    parts.skel_src = 3.0;
    parts.skel_tgt = 4.0;
    parts.conformity = 5.0;
    parts.adversarial = 7.0;
    const LossReport r = total_loss(parts, LossWeights{0.1, 0.01});
    REQUIRE(r.composite == Catch::Approx(10.0).epsilon(1e-14));
    REQUIRE(r.total == Catch::Approx(10.0 + 0.5 + 0.07).epsilon(1e-14));
}

TEST_CASE("non-finite components are numerical errors") {
    LossReport parts;
    parts.seg_src = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(total_loss(parts, LossWeights{}), NumericalError);
    LossReport parts2;
    parts2.adversarial = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(total_loss(parts2, LossWeights{}), NumericalError);
}

TEST_CASE("loss weights are validated") {
    REQUIRE_THROWS_AS(require_valid(LossWeights{-0.1, 0.01}), UsageError);
    REQUIRE_NOTHROW(require_valid(LossWeights{0.0, 0.0}));
}

TEST_CASE("mismatched shapes are rejected") {
    REQUIRE_THROWS_AS(masked_bce(prob_row({0.5}), mask_row({1, 1}), mask_row({1})), UsageError);
    REQUIRE_THROWS_AS(conformity_loss(prob_row({0.5}), prob_row({0.5, 0.5}), mask_row({1})),
                      UsageError);
}
