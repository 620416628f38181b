// Desk-scale predictor: a per-pixel linear encoder over handcrafted image
// features, two sigmoid heads (road, skeleton) reading the shared encoder
// output, and a per-pixel feature-level discriminator. Forward and backward
// passes are written out by hand so every gradient can be checked against
// finite differences.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "roadtopo/raster.hpp"
#include "roadtopo/rng.hpp"

namespace roadtopo {

inline constexpr int kFeatureDim = 5;  // d_in: handcrafted features per pixel
inline constexpr int kEncoderDim = 8;  // d_f: shared encoder width

// Pixel-major feature grid: entry [i * kFeatureDim + k] is feature k of
// pixel i. Features: raw intensity, 5x5 neighborhood mean, 5x5 neighborhood
// standard deviation, |horizontal gradient|, |vertical gradient| (central
// differences, clamped at the border).
struct FeatureGrid {
    GridDims dims;
    std::vector<double> values;
};

inline FeatureGrid compute_features(const ProbMap& image) {
    require_valid(image.dims);
    const int h = image.dims.height;
    const int w = image.dims.width;
    FeatureGrid out{image.dims,
                    std::vector<double>(static_cast<std::size_t>(image.dims.pixels()) * kFeatureDim)};
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double sum = 0.0, sum2 = 0.0;
            int count = 0;
            for (int dr = -2; dr <= 2; ++dr) {
                for (int dc = -2; dc <= 2; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    const double v = image.at(rr, cc);
                    sum += v;
                    sum2 += v * v;
                    ++count;
                }
            }
            const double mean = sum / count;
            const double var = std::max(0.0, sum2 / count - mean * mean);
            const double gx =
                0.5 * (image.at(r, std::min(c + 1, w - 1)) - image.at(r, std::max(c - 1, 0)));
            const double gy =
                0.5 * (image.at(std::min(r + 1, h - 1), c) - image.at(std::max(r - 1, 0), c));
            double* f = &out.values[flat_index({r, c}, image.dims) * kFeatureDim];
            f[0] = image.at(r, c);
            f[1] = mean;
            f[2] = std::sqrt(var);
            f[3] = std::abs(gx);
            f[4] = std::abs(gy);
        }
    }
    return out;
}

// Per-feature mean and standard deviation over one domain's tiles, used to
// standardize features before the encoder. Frozen at round start: the
// features are handcrafted, so for a fixed tile set the stats are constant
// across rounds by construction.
struct FeatureStats {
    std::array<double, kFeatureDim> mean{};
    std::array<double, kFeatureDim> std{};
};

inline FeatureStats compute_feature_stats(const std::vector<FeatureGrid>& grids) {
    if (grids.empty()) throw UsageError("feature stats need at least one tile");
    FeatureStats s;
    std::array<double, kFeatureDim> sum{}, sum2{};
    std::int64_t n = 0;
    for (const FeatureGrid& g : grids) {
        const std::size_t pixels = g.values.size() / kFeatureDim;
        for (std::size_t i = 0; i < pixels; ++i) {
            for (int k = 0; k < kFeatureDim; ++k) {
                const double v = g.values[i * kFeatureDim + k];
                sum[k] += v;
                sum2[k] += v * v;
            }
        }
        n += static_cast<std::int64_t>(pixels);
    }
    for (int k = 0; k < kFeatureDim; ++k) {
        s.mean[k] = sum[k] / n;
        const double var = std::max(0.0, sum2[k] / n - s.mean[k] * s.mean[k]);
        s.std[k] = std::max(1e-8, std::sqrt(var));
    }
    return s;
}

inline void standardize(FeatureGrid& g, const FeatureStats& s) {
    const std::size_t pixels = g.values.size() / kFeatureDim;
    for (std::size_t i = 0; i < pixels; ++i) {
        for (int k = 0; k < kFeatureDim; ++k) {
            g.values[i * kFeatureDim + k] = (g.values[i * kFeatureDim + k] - s.mean[k]) / s.std[k];
        }
    }
}

struct ToyModel {
    std::array<double, kEncoderDim * kFeatureDim> enc_w{};  // row-major d_f x d_in
    std::array<double, kEncoderDim> enc_b{};
    std::array<double, kEncoderDim> road_w{};
    double road_b = 0.0;
    std::array<double, kEncoderDim> skel_w{};
    double skel_b = 0.0;
};

struct ToyDiscriminator {
    std::array<double, kEncoderDim> w{};
    double b = 0.0;
};

inline constexpr std::size_t kModelParamCount =
    kEncoderDim * kFeatureDim + kEncoderDim + 2 * (kEncoderDim + 1);
inline constexpr std::size_t kDiscParamCount = kEncoderDim + 1;

// Flattening order: enc_w, enc_b, road_w, road_b, skel_w, skel_b. Shared by
// serialization, finite-difference checks, and gradient updates.
inline std::vector<double> to_flat(const ToyModel& m) {
    std::vector<double> v;
    v.reserve(kModelParamCount);
    v.insert(v.end(), m.enc_w.begin(), m.enc_w.end());
    v.insert(v.end(), m.enc_b.begin(), m.enc_b.end());
    v.insert(v.end(), m.road_w.begin(), m.road_w.end());
    v.push_back(m.road_b);
    v.insert(v.end(), m.skel_w.begin(), m.skel_w.end());
    v.push_back(m.skel_b);
    return v;
}

inline ToyModel model_from_flat(const std::vector<double>& v) {
    if (v.size() != kModelParamCount) {
        throw UsageError("model parameter array must hold " + std::to_string(kModelParamCount) +
                         " values, got " + std::to_string(v.size()));
    }
    ToyModel m;
    std::size_t i = 0;
    for (double& p : m.enc_w) p = v[i++];
    for (double& p : m.enc_b) p = v[i++];
    for (double& p : m.road_w) p = v[i++];
    m.road_b = v[i++];
    for (double& p : m.skel_w) p = v[i++];
    m.skel_b = v[i++];
    return m;
}

inline std::vector<double> to_flat(const ToyDiscriminator& d) {
    std::vector<double> v(d.w.begin(), d.w.end());
    v.push_back(d.b);
    return v;
}

inline ToyDiscriminator disc_from_flat(const std::vector<double>& v) {
    if (v.size() != kDiscParamCount) {
        throw UsageError("discriminator parameter array must hold " +
                         std::to_string(kDiscParamCount) + " values, got " +
                         std::to_string(v.size()));
    }
    ToyDiscriminator d;
    for (std::size_t i = 0; i < d.w.size(); ++i) d.w[i] = v[i];
    d.b = v.back();
    return d;
}

inline void require_finite(const ToyModel& m) {
    for (double p : to_flat(m)) {
        if (!std::isfinite(p)) throw NumericalError("model parameter is not finite");
    }
}

inline ToyModel init_model(Rng& rng) {
    ToyModel m;
    for (double& p : m.enc_w) p = 0.1 * rng.normal();
    for (double& p : m.road_w) p = 0.1 * rng.normal();
    for (double& p : m.skel_w) p = 0.1 * rng.normal();
    return m;
}

inline ToyDiscriminator init_discriminator(Rng& rng) {
    ToyDiscriminator d;
    for (double& p : d.w) p = 0.1 * rng.normal();
    return d;
}

inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Forward pass over standardized features. `features` in the result is the
// encoder output (d_f per pixel, pixel-major), the grid the discriminator
// reads.
struct Forward {
    ProbMap p_road;
    ProbMap p_skel;
    std::vector<double> features;
};

inline Forward predictor_forward(const ToyModel& m, const FeatureGrid& input) {
    require_valid(input.dims);
    const std::size_t n = input.values.size() / kFeatureDim;
    Forward out{ProbMap::zeros(input.dims), ProbMap::zeros(input.dims),
                std::vector<double>(n * kEncoderDim)};
    for (std::size_t i = 0; i < n; ++i) {
        const double* f = &input.values[i * kFeatureDim];
        double* e = &out.features[i * kEncoderDim];
        double zr = m.road_b, zs = m.skel_b;
        for (int j = 0; j < kEncoderDim; ++j) {
            double acc = m.enc_b[j];
            const double* wj = &m.enc_w[static_cast<std::size_t>(j) * kFeatureDim];
            for (int k = 0; k < kFeatureDim; ++k) acc += wj[k] * f[k];
            e[j] = acc;
            zr += m.road_w[j] * acc;
            zs += m.skel_w[j] * acc;
        }
        out.p_road.values[i] = sigmoid(zr);
        out.p_skel.values[i] = sigmoid(zs);
    }
    return out;
}

// Convenience wrapper: features -> standardize -> forward.
inline Forward predictor_forward(const ToyModel& m, const ProbMap& image,
                                 const FeatureStats& stats) {
    FeatureGrid f = compute_features(image);
    standardize(f, stats);
    return predictor_forward(m, f);
}

struct ModelGrads {
    std::array<double, kEncoderDim * kFeatureDim> enc_w{};
    std::array<double, kEncoderDim> enc_b{};
    std::array<double, kEncoderDim> road_w{};
    double road_b = 0.0;
    std::array<double, kEncoderDim> skel_w{};
    double skel_b = 0.0;

    void add_scaled(const ModelGrads& o, double s) {
        for (std::size_t i = 0; i < enc_w.size(); ++i) enc_w[i] += s * o.enc_w[i];
        for (std::size_t i = 0; i < enc_b.size(); ++i) enc_b[i] += s * o.enc_b[i];
        for (std::size_t i = 0; i < road_w.size(); ++i) road_w[i] += s * o.road_w[i];
        road_b += s * o.road_b;
        for (std::size_t i = 0; i < skel_w.size(); ++i) skel_w[i] += s * o.skel_w[i];
        skel_b += s * o.skel_b;
    }
};

inline std::vector<double> to_flat(const ModelGrads& g) {
    std::vector<double> v;
    v.reserve(kModelParamCount);
    v.insert(v.end(), g.enc_w.begin(), g.enc_w.end());
    v.insert(v.end(), g.enc_b.begin(), g.enc_b.end());
    v.insert(v.end(), g.road_w.begin(), g.road_w.end());
    v.push_back(g.road_b);
    v.insert(v.end(), g.skel_w.begin(), g.skel_w.end());
    v.push_back(g.skel_b);
    return v;
}

inline void apply_update(ToyModel& m, const ModelGrads& g, double lr) {
    for (std::size_t i = 0; i < m.enc_w.size(); ++i) m.enc_w[i] -= lr * g.enc_w[i];
    for (std::size_t i = 0; i < m.enc_b.size(); ++i) m.enc_b[i] -= lr * g.enc_b[i];
    for (std::size_t i = 0; i < m.road_w.size(); ++i) m.road_w[i] -= lr * g.road_w[i];
    m.road_b -= lr * g.road_b;
    for (std::size_t i = 0; i < m.skel_w.size(); ++i) m.skel_w[i] -= lr * g.skel_w[i];
    m.skel_b -= lr * g.skel_b;
}

// Accumulates parameter gradients for one image given upstream gradients with
// respect to the two head probabilities and (optionally) the encoder output
// (the adversarial path). Any upstream vector may be empty, meaning zero.
inline void predictor_backward(const ToyModel& m, const FeatureGrid& input, const Forward& fwd,
                               const std::vector<double>& d_p_road,
                               const std::vector<double>& d_p_skel,
                               const std::vector<double>& d_features, ModelGrads& grads) {
    const std::size_t n = input.values.size() / kFeatureDim;
    for (std::size_t i = 0; i < n; ++i) {
        const double pr = fwd.p_road.values[i];
        const double ps = fwd.p_skel.values[i];
        const double gr = d_p_road.empty() ? 0.0 : d_p_road[i] * pr * (1.0 - pr);
        const double gs = d_p_skel.empty() ? 0.0 : d_p_skel[i] * ps * (1.0 - ps);
        const double* e = &fwd.features[i * kEncoderDim];
        const double* f = &input.values[i * kFeatureDim];
        if (gr == 0.0 && gs == 0.0 && d_features.empty()) continue;
        grads.road_b += gr;
        grads.skel_b += gs;
        for (int j = 0; j < kEncoderDim; ++j) {
            grads.road_w[j] += gr * e[j];
            grads.skel_w[j] += gs * e[j];
            double de = gr * m.road_w[j] + gs * m.skel_w[j];
            if (!d_features.empty()) de += d_features[i * kEncoderDim + j];
            if (de == 0.0) continue;
            grads.enc_b[j] += de;
            double* gw = &grads.enc_w[static_cast<std::size_t>(j) * kFeatureDim];
            for (int k = 0; k < kFeatureDim; ++k) gw[k] += de * f[k];
        }
    }
}

inline ProbMap disc_forward(const ToyDiscriminator& d, const std::vector<double>& features,
                            const GridDims& dims) {
    require_valid(dims);
    const std::size_t n = features.size() / kEncoderDim;
    ProbMap out = ProbMap::zeros(dims);
    for (std::size_t i = 0; i < n; ++i) {
        const double* e = &features[i * kEncoderDim];
        double z = d.b;
        for (int j = 0; j < kEncoderDim; ++j) z += d.w[j] * e[j];
        out.values[i] = sigmoid(z);
    }
    return out;
}

struct DiscGrads {
    std::array<double, kEncoderDim> w{};
    double b = 0.0;
};

inline void apply_update(ToyDiscriminator& d, const DiscGrads& g, double lr) {
    for (std::size_t i = 0; i < d.w.size(); ++i) d.w[i] -= lr * g.w[i];
    d.b -= lr * g.b;
}

// Backward through the discriminator given upstream gradient d_out with
// respect to its output probabilities. Accumulates parameter gradients into
// `grads` (pass nullptr when the discriminator is held fixed) and, when
// `d_features` is non-null, the gradient with respect to the input features
// (the path that reaches the encoder).
inline void disc_backward(const ToyDiscriminator& d, const std::vector<double>& features,
                          const ProbMap& out, const std::vector<double>& d_out, DiscGrads* grads,
                          std::vector<double>* d_features) {
    const std::size_t n = features.size() / kEncoderDim;
    if (d_features) d_features->assign(features.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = out.values[i];
        const double gz = d_out[i] * p * (1.0 - p);
        if (gz == 0.0) continue;
        const double* e = &features[i * kEncoderDim];
        for (int j = 0; j < kEncoderDim; ++j) {
            if (grads) grads->w[j] += gz * e[j];
            if (d_features) (*d_features)[i * kEncoderDim + j] = gz * d.w[j];
        }
        if (grads) grads->b += gz;
    }
}

}  // namespace roadtopo
