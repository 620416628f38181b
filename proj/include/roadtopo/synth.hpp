// Synthetic paired (image, road mask) tiles for two domains with a
// controllable shift: road width, blur, brightness, clutter, noise. Stands in
// for cross-sensor satellite data at desk scale. Everything is driven by the
// portable Rng, so a (params, n_tiles) pair maps to bit-identical tiles on
// any platform; each tile forks its own stream and can be generated in
// parallel.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "roadtopo/raster.hpp"
#include "roadtopo/rng.hpp"
#include "roadtopo/skeleton.hpp"

namespace roadtopo {

struct DomainParams {
    std::uint64_t seed = 1;
    GridDims tile_size{128, 128};
    double road_width_px = 5.0;    // mean stroke width
    double width_jitter = 0.8;     // per-road width spread
    int n_roads = 2;
    double curvature = 0.35;       // heading wobble strength
    double blur_sigma = 0.0;       // resolution proxy
    double brightness = 0.0;       // global intensity shift
    double clutter_density = 0.0;  // blobs per 4096 px
    double noise_sigma = 0.0;
};

inline void require_valid(const DomainParams& p) {
    if (p.tile_size.height < 64 || p.tile_size.width < 64) {
        throw UsageError("tile_size must be at least 64x64, got " +
                         std::to_string(p.tile_size.height) + "x" +
                         std::to_string(p.tile_size.width));
    }
    if (!(p.road_width_px >= 1.0) || !std::isfinite(p.road_width_px)) {
        throw UsageError("road_width_px must be >= 1, got " + std::to_string(p.road_width_px));
    }
    if (p.n_roads < 1) throw UsageError("n_roads must be positive");
    if (!(p.width_jitter >= 0.0) || !(p.curvature >= 0.0) || !(p.blur_sigma >= 0.0) ||
        !(p.clutter_density >= 0.0) || !(p.noise_sigma >= 0.0) || !std::isfinite(p.brightness)) {
        throw UsageError("domain params must be finite; jitter/curvature/blur/clutter/noise "
                         "must be non-negative");
    }
}

// Wide sharp roads on a plain background: the labeled domain.
inline DomainParams source_preset(std::uint64_t seed) {
    DomainParams p;
    p.seed = seed;
    p.tile_size = {128, 128};
    p.road_width_px = 7.0;
    p.width_jitter = 0.8;
    p.n_roads = 2;
    p.curvature = 0.35;
    p.blur_sigma = 0.0;
    p.brightness = 0.0;
    p.clutter_density = 0.5;
    p.noise_sigma = 0.02;
    return p;
}

// Narrow, blurred, brighter, cluttered: the unlabeled domain.
inline DomainParams target_preset(std::uint64_t seed) {
    DomainParams p;
    p.seed = seed;
    p.tile_size = {128, 128};
    p.road_width_px = 3.0;
    p.width_jitter = 0.5;
    p.n_roads = 3;
    p.curvature = 0.45;
    p.blur_sigma = 1.5;
    p.brightness = 0.15;
    p.clutter_density = 1.0;
    p.noise_sigma = 0.04;
    return p;
}

struct Tile {
    ProbMap image;  // intensity in [0,1]
    BinaryMask gt_mask;
    BinaryMask gt_skeleton;  // always skeletonize(gt_mask)
};

// Road strokes are stamped at ~0.25 intensity, background texture lives in
// [0.46, 0.70]; with zero clutter/noise/blur this threshold separates them
// exactly.
inline double stroke_intensity_threshold(const DomainParams& p) { return 0.37 + p.brightness; }

namespace detail {

inline constexpr double kRoadIntensity = 0.25;
inline constexpr double kRoadIntensityJitter = 0.02;
inline constexpr double kBackgroundLo = 0.46;
inline constexpr double kBackgroundHi = 0.70;
inline constexpr int kBackgroundCell = 16;  // value-noise grid pitch, px

inline void stamp_disk(BinaryMask& mask, double cy, double cx, double radius) {
    const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int r1 = std::min(mask.dims.height - 1, static_cast<int>(std::ceil(cy + radius)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int c1 = std::min(mask.dims.width - 1, static_cast<int>(std::ceil(cx + radius)));
    const double rr = radius * radius;
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double dy = r - cy;
            const double dx = c - cx;
            if (dy * dy + dx * dx <= rr) mask.at(r, c) = 1;
        }
    }
}

// One polyline road: entry and exit on two different tile sides, marched in
// 0.75 px steps with a mean-reverting heading wobble, stroked as overlapping
// disks at subpixel centers (so the measured stroke width tracks the nominal
// width without integer-grid bias).
inline void stamp_road(BinaryMask& mask, Rng& rng, const DomainParams& params) {
    const double h = mask.dims.height;
    const double w = mask.dims.width;
    const double width =
        std::max(1.0, params.road_width_px + params.width_jitter * rng.normal());
    const double radius = width / 2.0;

    const int entry_side = static_cast<int>(rng.below(4));
    const int exit_side = static_cast<int>(entry_side + 1 + rng.below(3)) % 4;
    auto side_point = [&](int side) -> std::pair<double, double> {
        switch (side) {
            case 0: return {0.0, rng.uniform(0.0, w - 1.0)};       // top
            case 1: return {rng.uniform(0.0, h - 1.0), w - 1.0};   // right
            case 2: return {h - 1.0, rng.uniform(0.0, w - 1.0)};   // bottom
            default: return {rng.uniform(0.0, h - 1.0), 0.0};      // left
        }
    };
    auto [y, x] = side_point(entry_side);
    auto [ey, ex] = side_point(exit_side);

    double wobble = 0.0;
    const double step = 0.75;
    const int max_steps = 8 * (mask.dims.height + mask.dims.width);
    for (int i = 0; i < max_steps; ++i) {
        stamp_disk(mask, y, x, radius);
        const double dy = ey - y;
        const double dx = ex - x;
        if (dy * dy + dx * dx <= step * step) break;
        wobble = std::clamp(0.9 * wobble + 0.3 * params.curvature * rng.normal(), -1.0, 1.0);
        const double heading = std::atan2(dy, dx) + wobble;
        y += step * std::sin(heading);
        x += step * std::cos(heading);
        if (y < -radius || y > h - 1 + radius || x < -radius || x > w - 1 + radius) break;
    }
}

// Smooth background texture: uniform values on a coarse lattice, bilinearly
// interpolated.
inline void fill_background(ProbMap& img, Rng& rng) {
    const int gh = img.dims.height / kBackgroundCell + 2;
    const int gw = img.dims.width / kBackgroundCell + 2;
    std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
    for (double& v : grid) v = rng.uniform(kBackgroundLo, kBackgroundHi);
    for (int r = 0; r < img.dims.height; ++r) {
        const double gy = static_cast<double>(r) / kBackgroundCell;
        const int iy = static_cast<int>(gy);
        const double fy = gy - iy;
        for (int c = 0; c < img.dims.width; ++c) {
            const double gx = static_cast<double>(c) / kBackgroundCell;
            const int ix = static_cast<int>(gx);
            const double fx = gx - ix;
            const double v00 = grid[static_cast<std::size_t>(iy) * gw + ix];
            const double v01 = grid[static_cast<std::size_t>(iy) * gw + ix + 1];
            const double v10 = grid[static_cast<std::size_t>(iy + 1) * gw + ix];
            const double v11 = grid[static_cast<std::size_t>(iy + 1) * gw + ix + 1];
            img.at(r, c) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                           fy * ((1 - fx) * v10 + fx * v11);
        }
    }
}

inline void gaussian_blur(ProbMap& img, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (double& k : kernel) k /= sum;

    const int h = img.dims.height;
    const int w = img.dims.width;
    ProbMap tmp = ProbMap::zeros(img.dims);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int cc = std::clamp(c + i, 0, w - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * img.at(r, cc);
            }
            tmp.at(r, c) = acc;
        }
    }
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int rr = std::clamp(r + i, 0, h - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(rr, c);
            }
            img.at(r, c) = acc;
        }
    }
}

inline Tile generate_tile(const DomainParams& params, Rng& rng) {
    Tile tile;
    tile.gt_mask = BinaryMask::zeros(params.tile_size);
    for (int i = 0; i < params.n_roads; ++i) stamp_road(tile.gt_mask, rng, params);
    tile.gt_skeleton = skeletonize(tile.gt_mask);

    tile.image = ProbMap::zeros(params.tile_size);
    fill_background(tile.image, rng);

    // Strokes overwrite the texture; per-pixel jitter is clamped clear of the
    // stroke-intensity threshold.
    for (std::size_t i = 0; i < tile.gt_mask.values.size(); ++i) {
        if (tile.gt_mask.values[i] != 0) {
            tile.image.values[i] =
                std::clamp(kRoadIntensity + kRoadIntensityJitter * rng.normal(), 0.12, 0.35);
        }
    }

    // Clutter blobs sit on background only, so ground truth stays faithful.
    const std::int64_t n_blobs = static_cast<std::int64_t>(std::llround(
        params.clutter_density * static_cast<double>(params.tile_size.pixels()) / 4096.0));
    for (std::int64_t b = 0; b < n_blobs; ++b) {
        const double cy = rng.uniform(0.0, params.tile_size.height - 1.0);
        const double cx = rng.uniform(0.0, params.tile_size.width - 1.0);
        const double radius = rng.uniform(2.0, 6.0);
        const double intensity = rng.uniform(0.2, 0.9);
        BinaryMask blob = BinaryMask::zeros(params.tile_size);
        stamp_disk(blob, cy, cx, radius);
        for (std::size_t i = 0; i < blob.values.size(); ++i) {
            if (blob.values[i] != 0 && tile.gt_mask.values[i] == 0) {
                tile.image.values[i] = intensity;
            }
        }
    }

    for (double& v : tile.image.values) v += params.brightness;
    if (params.noise_sigma > 0.0) {
        for (double& v : tile.image.values) v += params.noise_sigma * rng.normal();
    }
    gaussian_blur(tile.image, params.blur_sigma);
    for (double& v : tile.image.values) v = std::clamp(v, 0.0, 1.0);
    return tile;
}

}  // namespace detail

// Deterministic for fixed (params, n_tiles); tile i depends only on
// (params, i), so any subsequence regenerates identically.
inline std::vector<Tile> generate_domain(const DomainParams& params, int n_tiles) {
    require_valid(params);
    if (n_tiles < 1) throw UsageError("n_tiles must be positive, got " + std::to_string(n_tiles));
    std::vector<Tile> tiles;
    tiles.reserve(static_cast<std::size_t>(n_tiles));
    for (int t = 0; t < n_tiles; ++t) {
        Rng rng = Rng::forked(params.seed, static_cast<std::uint64_t>(t));
        tiles.push_back(detail::generate_tile(params, rng));
    }
    return tiles;
}

}  // namespace roadtopo
