// Scalar losses with analytic gradients with respect to the input
// probabilities. Reductions run in row-major order so values are
// bit-reproducible. Probabilities are clamped to [kProbEpsilon, 1-kProbEpsilon]
// before any logarithm.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "roadtopo/raster.hpp"

namespace roadtopo {

inline constexpr double kProbEpsilon = 1e-7;

struct LossWeights {
    double beta = 0.1;        // conformity weight
    double lambda_adv = 0.01; // adversarial weight
};

inline void require_valid(const LossWeights& w) {
    if (!(std::isfinite(w.beta) && w.beta >= 0.0) ||
        !(std::isfinite(w.lambda_adv) && w.lambda_adv >= 0.0)) {
        throw UsageError("loss weights must be finite and non-negative");
    }
}

// All scalar terms of one training step. `composite` is the sum of the four
// segmentation terms; `total` adds the weighted conformity and adversarial
// terms. The discriminator loss is tracked but never part of `total`.
struct LossReport {
    double seg_src = 0.0;
    double seg_tgt = 0.0;
    double skel_src = 0.0;
    double skel_tgt = 0.0;
    double conformity = 0.0;
    double adversarial = 0.0;
    double discriminator = 0.0;
    double composite = 0.0;
    double total = 0.0;
};

struct ScalarWithGrad {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as the input probability map
};

// Normalization of the masked cross entropy. AllPixels divides by H*W
// regardless of how many pixels are selected; SelectedCount divides by the
// number of mask=1 pixels (0 selected -> loss 0).
enum class BceNorm {
    AllPixels,
    SelectedCount,
};

namespace detail {
inline double clamp_prob(double p) {
    if (p < kProbEpsilon) return kProbEpsilon;
    if (p > 1.0 - kProbEpsilon) return 1.0 - kProbEpsilon;
    return p;
}
}  // namespace detail

// Binary cross entropy over the masked pixels:
//   loss = -(1/N) * sum_i mask_i * [y_i log p_i + (1-y_i) log(1-p_i)]
// with N = H*W (or the selected count, see BceNorm). The gradient is zero
// wherever mask = 0. Serves both the plain (mask all ones) and the
// pseudo-label (mask from a TriStateMask) segmentation terms.
inline ScalarWithGrad masked_bce(const ProbMap& prob, const BinaryMask& labels,
                                 const BinaryMask& mask, BceNorm norm = BceNorm::AllPixels) {
    require_same_dims(prob.dims, labels.dims, "masked_bce(labels)");
    require_same_dims(prob.dims, mask.dims, "masked_bce(mask)");
    double denom = static_cast<double>(prob.dims.pixels());
    if (norm == BceNorm::SelectedCount) {
        denom = static_cast<double>(mask.count_foreground());
        if (denom == 0.0) return {0.0, std::vector<double>(prob.values.size(), 0.0)};
    }
    ScalarWithGrad out;
    out.grad.assign(prob.values.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < prob.values.size(); ++i) {
        if (mask.values[i] == 0) continue;
        const double p = detail::clamp_prob(prob.values[i]);
        const double y = static_cast<double>(labels.values[i]);
        sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        out.grad[i] = -(y / p - (1.0 - y) / (1.0 - p)) / denom;
    }
    out.loss = -sum / denom;
    return out;
}

struct ConformityGrad {
    double loss = 0.0;
    std::vector<double> grad_road;
    std::vector<double> grad_skel;
};

// Squared difference between the road and skeleton head probabilities,
// summed (unnormalized) over pixels labeled as skeleton:
//   loss = sum_{skel_labels=1} (p_road - p_skel)^2
// On the source side the gate is the ground-truth skeleton; on the target
// side it is the refined skeleton pseudo-label road set. When
// `detach_skeleton` is set the skeleton-side gradient is suppressed.
inline ConformityGrad conformity_loss(const ProbMap& p_road, const ProbMap& p_skel,
                                      const BinaryMask& skel_labels,
                                      bool detach_skeleton = false) {
    require_same_dims(p_road.dims, p_skel.dims, "conformity_loss(p_skel)");
    require_same_dims(p_road.dims, skel_labels.dims, "conformity_loss(labels)");
    ConformityGrad out;
    out.grad_road.assign(p_road.values.size(), 0.0);
    out.grad_skel.assign(p_road.values.size(), 0.0);
    for (std::size_t i = 0; i < p_road.values.size(); ++i) {
        if (skel_labels.values[i] == 0) continue;
        const double d = p_road.values[i] - p_skel.values[i];
        out.loss += d * d;
        out.grad_road[i] = 2.0 * d;
        if (!detach_skeleton) out.grad_skel[i] = -2.0 * d;
    }
    return out;
}

// Cross entropy of the discriminator's per-cell domain prediction against a
// constant domain label (1 = source, 0 = target), averaged over the feature
// grid.
inline ScalarWithGrad discriminator_loss(const ProbMap& d_out, int domain_label) {
    require_valid(d_out.dims);
    if (domain_label != 0 && domain_label != 1) {
        throw UsageError("domain label must be 0 (target) or 1 (source)");
    }
    const double y = static_cast<double>(domain_label);
    const double denom = static_cast<double>(d_out.dims.pixels());
    ScalarWithGrad out;
    out.grad.assign(d_out.values.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < d_out.values.size(); ++i) {
        const double d = detail::clamp_prob(d_out.values[i]);
        sum += y * std::log(d) + (1.0 - y) * std::log(1.0 - d);
        out.grad[i] = -(y / d - (1.0 - y) / (1.0 - d)) / denom;
    }
    out.loss = -sum / denom;
    return out;
}

// Encoder-side adversarial term on target-domain features: pushes the
// discriminator output toward the source label,
//   loss = -(1/N) * sum log d.
inline ScalarWithGrad adversarial_loss(const ProbMap& d_out_target) {
    require_valid(d_out_target.dims);
    const double denom = static_cast<double>(d_out_target.dims.pixels());
    ScalarWithGrad out;
    out.grad.assign(d_out_target.values.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < d_out_target.values.size(); ++i) {
        const double d = detail::clamp_prob(d_out_target.values[i]);
        sum += std::log(d);
        out.grad[i] = -1.0 / (d * denom);
    }
    out.loss = -sum / denom;
    return out;
}

// Fills the composite and total fields from the component scalars:
//   composite = seg_src + skel_src + seg_tgt + skel_tgt
//   total     = composite + beta * conformity + lambda_adv * adversarial
inline LossReport total_loss(LossReport parts, const LossWeights& weights) {
    require_valid(weights);
    const double components[] = {parts.seg_src,     parts.seg_tgt,     parts.skel_src,
                                 parts.skel_tgt,    parts.conformity,  parts.adversarial,
                                 parts.discriminator};
    for (double v : components) {
        if (!std::isfinite(v)) {
            throw NumericalError("total_loss: non-finite loss component " + std::to_string(v));
        }
    }
    parts.composite = parts.seg_src + parts.skel_src + parts.seg_tgt + parts.skel_tgt;
    parts.total = parts.composite + weights.beta * parts.conformity +
                  weights.lambda_adv * parts.adversarial;
    return parts;
}

}  // namespace roadtopo
