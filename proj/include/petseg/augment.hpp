#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "petseg/errors.hpp"
#include "petseg/resample.hpp"
#include "petseg/rng.hpp"
#include "petseg/volume.hpp"

namespace petseg {

struct AugmentParams {
    double brightness_mult_lo = 0.75;
    double brightness_mult_hi = 1.25;
    double brightness_sigma = 0.10;
    double gamma_lo = 0.70;
    double gamma_hi = 1.50;
    double gamma_prob = 0.30;
    double flip_prob_per_axis = 0.5;
    double rotation_lo_deg = -15.0;
    double rotation_hi_deg = 15.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (brightness_mult_lo > brightness_mult_hi || gamma_lo > gamma_hi ||
            rotation_lo_deg > rotation_hi_deg)
            throw InvalidParameterError("augment params: range lo must be <= hi");
        if (gamma_prob < 0 || gamma_prob > 1 || flip_prob_per_axis < 0 || flip_prob_per_axis > 1)
            throw InvalidParameterError("augment params: probabilities must be in [0,1]");
        if (brightness_sigma < 0)
            throw InvalidParameterError("augment params: sigma must be >= 0");
    }
};

// One sampled realization of the augmentation pipeline.
struct AugmentationPlan {
    double brightness_mult = 1.0;
    std::uint64_t noise_seed = 0;
    bool apply_gamma = false;
    double gamma = 1.0;
    std::array<bool, 3> flips{false, false, false};     // (z, y, x)
    std::array<double, 3> angles_deg{0.0, 0.0, 0.0};    // (z, y, x)
};

// x_out = m * x_in + n, n ~ N(0, sigma) i.i.d. per voxel.
inline Volume3D brightness(const Volume3D& vol, double mult, double sigma,
                           std::uint64_t noise_seed) {
    if (vol.kind() != VoxelKind::Intensity)
        throw InvalidKindError("brightness: requires an Intensity volume, got " +
                               std::string(kind_name(vol.kind())));
    if (sigma < 0) throw InvalidParameterError("brightness: sigma must be >= 0");
    auto src = vol.floats();
    std::vector<float> out(src.size());
    if (sigma == 0.0) {
        for (std::size_t i = 0; i < src.size(); ++i)
            out[i] = static_cast<float>(mult * src[i]);
    } else {
        Rng rng(noise_seed);
        for (std::size_t i = 0; i < src.size(); ++i)
            out[i] = static_cast<float>(mult * src[i] + rng.normal(0.0, sigma));
    }
    return Volume3D::intensity(vol.shape(), vol.spacing(), std::move(out));
}

// Min-max normalize, apply u^(1/gamma), rescale back to [lo, hi].
inline Volume3D gamma_transform(const Volume3D& vol, double gamma) {
    if (vol.kind() != VoxelKind::Intensity)
        throw InvalidKindError("gamma: requires an Intensity volume, got " +
                               std::string(kind_name(vol.kind())));
    if (!(gamma > 0)) throw InvalidParameterError("gamma: exponent must be > 0");
    auto src = vol.floats();
    float lo = src[0], hi = src[0];
    for (float v : src) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<float> out(src.begin(), src.end());
    if (hi > lo) {
        const double range = static_cast<double>(hi) - lo;
        const double inv_g = 1.0 / gamma;
        for (float& v : out) {
            double u = (static_cast<double>(v) - lo) / range;
            v = static_cast<float>(lo + range * std::pow(u, inv_g));
        }
    }
    return Volume3D::intensity(vol.shape(), vol.spacing(), std::move(out));
}

// Mirror along each flagged axis; spacing unchanged.
inline Volume3D flip(const Volume3D& vol, std::array<bool, 3> axes) {
    const Shape3& s = vol.shape();
    auto map = [&](i64 z, i64 y, i64 x) {
        i64 sz = axes[0] ? s.nz - 1 - z : z;
        i64 sy = axes[1] ? s.ny - 1 - y : y;
        i64 sx = axes[2] ? s.nx - 1 - x : x;
        return (sz * s.ny + sy) * s.nx + sx;
    };
    if (vol.is_label()) {
        auto src = vol.labels();
        std::vector<std::uint8_t> out(src.size());
        std::size_t o = 0;
        for (i64 z = 0; z < s.nz; ++z)
            for (i64 y = 0; y < s.ny; ++y)
                for (i64 x = 0; x < s.nx; ++x, ++o) out[o] = src[map(z, y, x)];
        return Volume3D::label(s, vol.spacing(), std::move(out));
    }
    auto src = vol.floats();
    std::vector<float> out(src.size());
    std::size_t o = 0;
    for (i64 z = 0; z < s.nz; ++z)
        for (i64 y = 0; y < s.ny; ++y)
            for (i64 x = 0; x < s.nx; ++x, ++o) out[o] = src[map(z, y, x)];
    return Volume3D::intensity(s, vol.spacing(), std::move(out));
}

namespace detail {

// 3x3 rotation matrix acting on (x, y, z) index offsets; rotations are
// applied z first, then y, then x: R = Rx * Ry * Rz.
inline std::array<std::array<double, 3>, 3> rotation_matrix(double az_deg, double ay_deg,
                                                            double ax_deg) {
    constexpr double d2r = 3.14159265358979323846 / 180.0;
    const double cz = std::cos(az_deg * d2r), sz = std::sin(az_deg * d2r);
    const double cy = std::cos(ay_deg * d2r), sy = std::sin(ay_deg * d2r);
    const double cx = std::cos(ax_deg * d2r), sx = std::sin(ax_deg * d2r);
    const std::array<std::array<double, 3>, 3> Rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
    const std::array<std::array<double, 3>, 3> Ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
    const std::array<std::array<double, 3>, 3> Rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
    auto mul = [](const auto& a, const auto& b) {
        std::array<std::array<double, 3>, 3> c{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
        return c;
    };
    return mul(Rx, mul(Ry, Rz));
}

}  // namespace detail

// Rotation about the volume center in index space; each output voxel is
// pulled from the inversely-rotated input coordinate, with edge clamping
// for out-of-domain samples. Shape and spacing are unchanged.
inline Volume3D rotate(const Volume3D& vol, std::array<double, 3> angles_deg, Interp interp) {
    if (vol.is_label() && interp == Interp::Trilinear)
        throw InvalidInterpolationError("rotate: Label volumes require Nearest interpolation");
    if (angles_deg[0] == 0.0 && angles_deg[1] == 0.0 && angles_deg[2] == 0.0) return vol;

    const Shape3& s = vol.shape();
    // Inverse rotation = transpose.
    const auto R = detail::rotation_matrix(angles_deg[0], angles_deg[1], angles_deg[2]);
    const double cz = (s.nz - 1) / 2.0, cy = (s.ny - 1) / 2.0, cx = (s.nx - 1) / 2.0;
    auto source_coord = [&](i64 z, i64 y, i64 x, double& iz, double& iy, double& ix) {
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        // R^T * (dx, dy, dz)
        ix = R[0][0] * dx + R[1][0] * dy + R[2][0] * dz + cx;
        iy = R[0][1] * dx + R[1][1] * dy + R[2][1] * dz + cy;
        iz = R[0][2] * dx + R[1][2] * dy + R[2][2] * dz + cz;
    };

    if (vol.is_label()) {
        auto src = vol.labels();
        std::vector<std::uint8_t> out(src.size());
        std::size_t o = 0;
        for (i64 z = 0; z < s.nz; ++z)
            for (i64 y = 0; y < s.ny; ++y)
                for (i64 x = 0; x < s.nx; ++x, ++o) {
                    double iz, iy, ix;
                    source_coord(z, y, x, iz, iy, ix);
                    out[o] = src[(detail::nearest_index(iz, s.nz) * s.ny + detail::nearest_index(iy, s.ny)) *
                                     s.nx +
                                 detail::nearest_index(ix, s.nx)];
                }
        return Volume3D::label(s, vol.spacing(), std::move(out));
    }

    auto srcf = vol.floats();
    auto read = [&](i64 z, i64 y, i64 x) -> double {
        return srcf[static_cast<std::size_t>((z * s.ny + y) * s.nx + x)];
    };
    std::vector<float> out(srcf.size());
    std::size_t o = 0;
    for (i64 z = 0; z < s.nz; ++z)
        for (i64 y = 0; y < s.ny; ++y)
            for (i64 x = 0; x < s.nx; ++x, ++o) {
                double iz, iy, ix;
                source_coord(z, y, x, iz, iy, ix);
                if (interp == Interp::Nearest) {
                    out[o] = static_cast<float>(read(detail::nearest_index(iz, s.nz),
                                                     detail::nearest_index(iy, s.ny),
                                                     detail::nearest_index(ix, s.nx)));
                } else {
                    out[o] = detail::trilinear_sample(read, s, iz, iy, ix);
                }
            }
    return Volume3D::intensity(s, vol.spacing(), std::move(out));
}

// Draw one augmentation realization. Draw order is fixed (multiplier,
// gamma gate, gamma, flips, angles, noise seed) so identical seeds yield
// identical plans.
inline AugmentationPlan sample_plan(const AugmentParams& params, Rng& rng) {
    params.validate();
    AugmentationPlan plan;
    plan.brightness_mult = rng.uniform(params.brightness_mult_lo, params.brightness_mult_hi);
    plan.apply_gamma = rng.bernoulli(params.gamma_prob);
    plan.gamma = plan.apply_gamma ? rng.uniform(params.gamma_lo, params.gamma_hi) : 1.0;
    for (int a = 0; a < 3; ++a) plan.flips[a] = rng.bernoulli(params.flip_prob_per_axis);
    for (int a = 0; a < 3; ++a)
        plan.angles_deg[a] = rng.uniform(params.rotation_lo_deg, params.rotation_hi_deg);
    plan.noise_seed = rng.next_u64();
    return plan;
}

inline AugmentationPlan sample_plan(const AugmentParams& params) {
    Rng rng(params.seed);
    return sample_plan(params, rng);
}

// Apply a full plan in pipeline order: brightness, gamma, flip, rotation.
// Label volumes get the spatial transforms only.
inline Volume3D apply_plan(const Volume3D& vol, const AugmentParams& params,
                           const AugmentationPlan& plan) {
    Volume3D v = vol;
    if (!v.is_label()) {
        v = brightness(v, plan.brightness_mult, params.brightness_sigma, plan.noise_seed);
        if (plan.apply_gamma) v = gamma_transform(v, plan.gamma);
    }
    v = flip(v, plan.flips);
    v = rotate(v, plan.angles_deg, v.is_label() ? Interp::Nearest : Interp::Trilinear);
    return v;
}

}  // namespace petseg
