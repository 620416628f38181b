// Round-based self-training protocol: round-0 supervised training on source,
// then rounds of frozen-model pseudo-label generation (with CBR) and
// retraining on source labels + target pseudo-labels + conformity +
// adversarial feature alignment.
//
// Update schedule per step (batch = batch_size/2 source tiles paired with as
// many target tiles): the discriminator trains first on detached features,
// then the predictor steps with the self-training gradient at lr_selftrain
// and the (already weighted) adversarial gradient at lr_adv, flowing through
// the just-updated discriminator. Discriminator updates never touch predictor
// parameters and vice versa.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "roadtopo/loss.hpp"
#include "roadtopo/metrics.hpp"
#include "roadtopo/model.hpp"
#include "roadtopo/pseudo.hpp"
#include "roadtopo/raster.hpp"
#include "roadtopo/rng.hpp"
#include "roadtopo/synth.hpp"

namespace roadtopo {

struct AdaptConfig {
    ThresholdPair road_thresholds = kRoadThresholds;
    ThresholdPair skel_thresholds = kSkeletonThresholds;
    LossWeights weights;
    double lr_selftrain = 2e-4;
    double lr_adv = 1e-4;
    int rounds = 2;
    int epochs_per_round = 2;
    int batch_size = 2;  // split evenly between the domains
    bool use_cbr = true;
    bool use_conformity = true;
    bool use_adversarial = true;
    std::uint64_t seed = 1;
};

inline void require_valid(const AdaptConfig& c) {
    require_valid(c.road_thresholds);
    require_valid(c.skel_thresholds);
    require_valid(c.weights);
    if (!(c.lr_selftrain > 0.0) || !(c.lr_adv > 0.0) || !std::isfinite(c.lr_selftrain) ||
        !std::isfinite(c.lr_adv)) {
        throw UsageError("learning rates must be positive and finite");
    }
    if (c.rounds < 0) throw UsageError("rounds must be non-negative");
    // 0 epochs is allowed and means "no parameter updates".
    if (c.epochs_per_round < 0) throw UsageError("epochs_per_round must be non-negative");
    if (c.batch_size < 2 || c.batch_size % 2 != 0) {
        throw UsageError("batch_size must be an even number >= 2 (one half per domain), got " +
                         std::to_string(c.batch_size));
    }
}

struct PseudoLabels {
    TriStateMask road;
    TriStateMask skel;
};

// Per-head tri-state selection followed by CBR when enabled. The model (and
// the domain stats) are read-only: every tile derives from the same snapshot,
// so re-running this mid-round reproduces identical masks.
inline std::vector<PseudoLabels> generate_pseudo_labels(const ToyModel& model,
                                                        const FeatureStats& target_stats,
                                                        const std::vector<Tile>& targets,
                                                        const AdaptConfig& cfg) {
    require_valid(cfg);
    std::vector<PseudoLabels> out;
    out.reserve(targets.size());
    for (const Tile& tile : targets) {
        const Forward fwd = predictor_forward(model, tile.image, target_stats);
        TriStateMask road = select_pseudo_labels(fwd.p_road, cfg.road_thresholds);
        TriStateMask skel = select_pseudo_labels(fwd.p_skel, cfg.skel_thresholds);
        if (cfg.use_cbr) {
            road = cbr_refine(fwd.p_road, road, cfg.road_thresholds);
            skel = cbr_refine(fwd.p_skel, skel, cfg.skel_thresholds);
        }
        out.push_back({std::move(road), std::move(skel)});
    }
    return out;
}

// Losses and parameter gradients for one (source tile, target tile) pair.
// g_selftrain carries the composite + beta-weighted conformity gradient;
// g_adv carries the lambda-weighted adversarial gradient (encoder only,
// through a frozen discriminator). The sum of both is the gradient of
// report.total, which is what the finite-difference check verifies.
struct StepResult {
    LossReport report;
    ModelGrads g_selftrain;
    ModelGrads g_adv;
};

inline StepResult compute_step(const ToyModel& model, const ToyDiscriminator* disc,
                               const FeatureGrid& f_src, const BinaryMask& src_mask,
                               const BinaryMask& src_skel, const FeatureGrid& f_tgt,
                               const PseudoLabels& tgt_pseudo, const AdaptConfig& cfg) {
    StepResult out;
    const Forward fwd_s = predictor_forward(model, f_src);
    const Forward fwd_t = predictor_forward(model, f_tgt);
    const BinaryMask ones_s = BinaryMask::ones(f_src.dims);

    const ScalarWithGrad seg_src = masked_bce(fwd_s.p_road, src_mask, ones_s);
    const ScalarWithGrad skel_src = masked_bce(fwd_s.p_skel, src_skel, ones_s);
    const ScalarWithGrad seg_tgt = masked_bce(fwd_t.p_road, tgt_pseudo.road.label_mask(),
                                              tgt_pseudo.road.selection_mask());
    const ScalarWithGrad skel_tgt = masked_bce(fwd_t.p_skel, tgt_pseudo.skel.label_mask(),
                                               tgt_pseudo.skel.selection_mask());
    out.report.seg_src = seg_src.loss;
    out.report.skel_src = skel_src.loss;
    out.report.seg_tgt = seg_tgt.loss;
    out.report.skel_tgt = skel_tgt.loss;

    std::vector<double> d_road_s = seg_src.grad;
    std::vector<double> d_skel_s = skel_src.grad;
    std::vector<double> d_road_t = seg_tgt.grad;
    std::vector<double> d_skel_t = skel_tgt.grad;

    if (cfg.use_conformity) {
        // Source gates on the ground-truth skeleton, target on the refined
        // skeleton pseudo-label road set; gradients reach both heads.
        const ConformityGrad conf_s = conformity_loss(fwd_s.p_road, fwd_s.p_skel, src_skel);
        const ConformityGrad conf_t =
            conformity_loss(fwd_t.p_road, fwd_t.p_skel, tgt_pseudo.skel.label_mask());
        out.report.conformity = conf_s.loss + conf_t.loss;
        const double beta = cfg.weights.beta;
        for (std::size_t i = 0; i < d_road_s.size(); ++i) {
            d_road_s[i] += beta * conf_s.grad_road[i];
            d_skel_s[i] += beta * conf_s.grad_skel[i];
        }
        for (std::size_t i = 0; i < d_road_t.size(); ++i) {
            d_road_t[i] += beta * conf_t.grad_road[i];
            d_skel_t[i] += beta * conf_t.grad_skel[i];
        }
    }

    predictor_backward(model, f_src, fwd_s, d_road_s, d_skel_s, {}, out.g_selftrain);
    predictor_backward(model, f_tgt, fwd_t, d_road_t, d_skel_t, {}, out.g_selftrain);

    if (cfg.use_adversarial && disc != nullptr) {
        const ProbMap d_t = disc_forward(*disc, fwd_t.features, f_tgt.dims);
        const ScalarWithGrad adv = adversarial_loss(d_t);
        out.report.adversarial = adv.loss;
        std::vector<double> d_out(adv.grad.size());
        for (std::size_t i = 0; i < d_out.size(); ++i) {
            d_out[i] = cfg.weights.lambda_adv * adv.grad[i];
        }
        std::vector<double> d_feat;
        disc_backward(*disc, fwd_t.features, d_t, d_out, nullptr, &d_feat);
        predictor_backward(model, f_tgt, fwd_t, {}, {}, d_feat, out.g_adv);
    }

    out.report = total_loss(out.report, cfg.weights);
    return out;
}

// Discriminator loss and gradients for one source/target feature pair
// (domain labels: source 1, target 0); the mean of the two per-image losses.
inline double disc_step_gradients(const ToyDiscriminator& disc,
                                  const std::vector<double>& feat_src, const GridDims& src_dims,
                                  const std::vector<double>& feat_tgt, const GridDims& tgt_dims,
                                  DiscGrads& grads) {
    const ProbMap d_s = disc_forward(disc, feat_src, src_dims);
    const ProbMap d_t = disc_forward(disc, feat_tgt, tgt_dims);
    const ScalarWithGrad loss_s = discriminator_loss(d_s, 1);
    const ScalarWithGrad loss_t = discriminator_loss(d_t, 0);
    std::vector<double> up_s(loss_s.grad.size());
    for (std::size_t i = 0; i < up_s.size(); ++i) up_s[i] = 0.5 * loss_s.grad[i];
    std::vector<double> up_t(loss_t.grad.size());
    for (std::size_t i = 0; i < up_t.size(); ++i) up_t[i] = 0.5 * loss_t.grad[i];
    disc_backward(disc, feat_src, d_s, up_s, &grads, nullptr);
    disc_backward(disc, feat_tgt, d_t, up_t, &grads, nullptr);
    return 0.5 * (loss_s.loss + loss_t.loss);
}

namespace detail {

inline std::vector<FeatureGrid> standardized_features(const std::vector<Tile>& tiles,
                                                      FeatureStats& stats_out) {
    std::vector<FeatureGrid> grids;
    grids.reserve(tiles.size());
    for (const Tile& t : tiles) grids.push_back(compute_features(t.image));
    stats_out = compute_feature_stats(grids);
    for (FeatureGrid& g : grids) standardize(g, stats_out);
    return grids;
}

}  // namespace detail

inline BinaryMask predict_road_mask(const ToyModel& model, const FeatureStats& stats,
                                    const ProbMap& image, double threshold = 0.5) {
    const Forward fwd = predictor_forward(model, image, stats);
    BinaryMask mask = BinaryMask::zeros(image.dims);
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        mask.values[i] = fwd.p_road.values[i] > threshold ? 1 : 0;
    }
    return mask;
}

// Mean per-tile metrics of thresholded road predictions against ground truth.
inline MetricReport evaluate_model(const ToyModel& model, const FeatureStats& stats,
                                   const std::vector<Tile>& tiles, double snap_radius = 4.0) {
    if (tiles.empty()) throw UsageError("evaluate_model needs at least one tile");
    MetricReport mean{0.0, 0.0, 0.0};
    for (const Tile& t : tiles) {
        const BinaryMask pred = predict_road_mask(model, stats, t.image);
        const MetricReport r = evaluate_masks(pred, t.gt_mask, snap_radius);
        mean.iou += r.iou;
        mean.f1 += r.f1;
        mean.apls += r.apls;
    }
    const double n = static_cast<double>(tiles.size());
    mean.iou /= n;
    mean.f1 /= n;
    mean.apls /= n;
    return mean;
}

// Supervised round-0: mini-batch gradient descent on the two source BCE terms
// with all-ones masks. Per-epoch mean losses land in *epoch_losses when given.
inline ToyModel train_round0(ToyModel model, const std::vector<Tile>& source,
                             const AdaptConfig& cfg,
                             std::vector<double>* epoch_losses = nullptr) {
    require_valid(cfg);
    if (source.empty()) throw UsageError("train_round0 needs at least one source tile");
    FeatureStats stats;
    const std::vector<FeatureGrid> feats = detail::standardized_features(source, stats);
    Rng rng = Rng::forked(cfg.seed, 10);
    const int k = cfg.batch_size / 2;
    std::vector<std::size_t> order(source.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t n_steps = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(k)) {
            ModelGrads grads;
            double step_loss = 0.0;
            int in_batch = 0;
            for (int j = 0; j < k && begin + static_cast<std::size_t>(j) < order.size(); ++j) {
                const std::size_t idx = order[begin + static_cast<std::size_t>(j)];
                const Forward fwd = predictor_forward(model, feats[idx]);
                const BinaryMask ones = BinaryMask::ones(feats[idx].dims);
                const ScalarWithGrad seg = masked_bce(fwd.p_road, source[idx].gt_mask, ones);
                const ScalarWithGrad skel =
                    masked_bce(fwd.p_skel, source[idx].gt_skeleton, ones);
                step_loss += seg.loss + skel.loss;
                predictor_backward(model, feats[idx], fwd, seg.grad, skel.grad, {}, grads);
                ++in_batch;
            }
            const double inv = 1.0 / in_batch;
            ModelGrads scaled;
            scaled.add_scaled(grads, inv);
            apply_update(model, scaled, cfg.lr_selftrain);
            epoch_loss += step_loss * inv;
            ++n_steps;
        }
        epoch_loss /= static_cast<double>(n_steps);
        if (!std::isfinite(epoch_loss)) {
            throw NumericalError("round-0 training loss diverged at epoch " +
                                 std::to_string(epoch));
        }
        if (epoch_losses) epoch_losses->push_back(epoch_loss);
    }
    require_finite(model);
    return model;
}

struct RoundRecord {
    int round = 0;  // 0 is the pre-adaptation baseline
    MetricReport target;
    double mean_loss = 0.0;              // last epoch's mean total loss (0 for the baseline row)
    std::int64_t road_pixels_selected = 0;  // pseudo-label coverage entering this round
};

struct AdaptResult {
    ToyModel model;
    std::vector<RoundRecord> rounds;  // baseline + one record per adaptation round
    std::vector<std::string> warnings;
};

// The full protocol after round-0. `model` must already be round-0 trained;
// rounds = 0 returns it unchanged (plus the baseline record).
inline AdaptResult adapt_rounds(ToyModel model, const std::vector<Tile>& source,
                                const std::vector<Tile>& target, const AdaptConfig& cfg) {
    require_valid(cfg);
    if (source.empty() || target.empty()) {
        throw UsageError("adapt_rounds needs non-empty source and target tile sets");
    }
    FeatureStats stats_src, stats_tgt;
    const std::vector<FeatureGrid> f_src = detail::standardized_features(source, stats_src);
    const std::vector<FeatureGrid> f_tgt = detail::standardized_features(target, stats_tgt);

    AdaptResult result;
    result.rounds.push_back({0, evaluate_model(model, stats_tgt, target), 0.0, 0});

    Rng disc_rng = Rng::forked(cfg.seed, 20);
    ToyDiscriminator disc = init_discriminator(disc_rng);
    Rng rng = Rng::forked(cfg.seed, 30);
    const int k = cfg.batch_size / 2;

    for (int round = 1; round <= cfg.rounds; ++round) {
        const std::vector<PseudoLabels> pseudo =
            generate_pseudo_labels(model, stats_tgt, target, cfg);
        std::int64_t selected = 0;
        for (const PseudoLabels& p : pseudo) selected += p.road.selection_mask().count_foreground();
        if (selected == 0) {
            result.warnings.push_back("round " + std::to_string(round) +
                                      ": empty pseudo-label set, training on source terms only");
        }

        std::vector<std::size_t> order_s(source.size()), order_t(target.size());
        for (std::size_t i = 0; i < order_s.size(); ++i) order_s[i] = i;
        for (std::size_t i = 0; i < order_t.size(); ++i) order_t[i] = i;
        const std::size_t pairs = std::max(source.size(), target.size());

        double last_epoch_loss = 0.0;
        for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
            rng.shuffle(order_s);
            rng.shuffle(order_t);
            double epoch_loss = 0.0;
            std::size_t n_steps = 0;
            for (std::size_t begin = 0; begin < pairs; begin += static_cast<std::size_t>(k)) {
                const std::size_t in_batch =
                    std::min<std::size_t>(static_cast<std::size_t>(k), pairs - begin);
                // Discriminator first, on detached features.
                if (cfg.use_adversarial) {
                    DiscGrads dg;
                    for (std::size_t j = 0; j < in_batch; ++j) {
                        const std::size_t is = order_s[(begin + j) % source.size()];
                        const std::size_t it = order_t[(begin + j) % target.size()];
                        const Forward fs = predictor_forward(model, f_src[is]);
                        const Forward ft = predictor_forward(model, f_tgt[it]);
                        disc_step_gradients(disc, fs.features, f_src[is].dims, ft.features,
                                            f_tgt[it].dims, dg);
                    }
                    DiscGrads scaled;
                    for (std::size_t i = 0; i < scaled.w.size(); ++i) {
                        scaled.w[i] = dg.w[i] / static_cast<double>(in_batch);
                    }
                    scaled.b = dg.b / static_cast<double>(in_batch);
                    apply_update(disc, scaled, cfg.lr_adv);
                }
                // Predictor second, through the updated discriminator.
                ModelGrads g_st, g_adv;
                double step_loss = 0.0;
                for (std::size_t j = 0; j < in_batch; ++j) {
                    const std::size_t is = order_s[(begin + j) % source.size()];
                    const std::size_t it = order_t[(begin + j) % target.size()];
                    const StepResult sr =
                        compute_step(model, cfg.use_adversarial ? &disc : nullptr, f_src[is],
                                     source[is].gt_mask, source[is].gt_skeleton, f_tgt[it],
                                     pseudo[it], cfg);
                    g_st.add_scaled(sr.g_selftrain, 1.0);
                    g_adv.add_scaled(sr.g_adv, 1.0);
                    step_loss += sr.report.total;
                }
                const double inv = 1.0 / static_cast<double>(in_batch);
                ModelGrads g1, g2;
                g1.add_scaled(g_st, inv);
                g2.add_scaled(g_adv, inv);
                apply_update(model, g1, cfg.lr_selftrain);
                apply_update(model, g2, cfg.lr_adv);
                epoch_loss += step_loss * inv;
                ++n_steps;
            }
            epoch_loss /= static_cast<double>(n_steps);
            if (!std::isfinite(epoch_loss)) {
                throw NumericalError("adaptation loss diverged in round " + std::to_string(round) +
                                     " epoch " + std::to_string(epoch));
            }
            last_epoch_loss = epoch_loss;
        }
        require_finite(model);
        result.rounds.push_back(
            {round, evaluate_model(model, stats_tgt, target), last_epoch_loss, selected});
    }
    result.model = std::move(model);
    return result;
}

// Fresh model -> round-0 -> adaptation rounds.
inline AdaptResult run_protocol(const std::vector<Tile>& source, const std::vector<Tile>& target,
                                const AdaptConfig& cfg,
                                std::vector<double>* round0_losses = nullptr) {
    require_valid(cfg);
    Rng init_rng = Rng::forked(cfg.seed, 1);
    ToyModel model = init_model(init_rng);
    model = train_round0(std::move(model), source, cfg, round0_losses);
    return adapt_rounds(std::move(model), source, target, cfg);
}

}  // namespace roadtopo
