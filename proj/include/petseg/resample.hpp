#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "petseg/errors.hpp"
#include "petseg/volume.hpp"

namespace petseg {

enum class Interp { Trilinear, Nearest };

struct ResampleSpec {
    Spacing3 target_spacing;
    Interp interpolation = Interp::Trilinear;
};

namespace detail {

inline i64 out_size(i64 old_size, double old_sp, double new_sp) {
    return std::max<i64>(1, std::llround(static_cast<double>(old_size) * old_sp / new_sp));
}

// Closest index with ties toward the lower index.
inline i64 nearest_index(double c, i64 n) {
    i64 i = static_cast<i64>(std::ceil(c - 0.5));
    return std::clamp<i64>(i, 0, n - 1);
}

template <typename Read>
inline float trilinear_sample(Read&& read, const Shape3& s, double cz, double cy, double cx) {
    const auto prep = [](double c, i64 n, i64& i0, i64& i1, double& f) {
        double fl = std::floor(c);
        i0 = std::clamp<i64>(static_cast<i64>(fl), 0, n - 1);
        i1 = std::min<i64>(i0 + 1, n - 1);
        f = std::clamp(c - fl, 0.0, 1.0);
        if (c <= 0.0) { i0 = i1 = 0; f = 0.0; }
        if (c >= static_cast<double>(n - 1)) { i0 = i1 = n - 1; f = 0.0; }
    };
    i64 z0, z1, y0, y1, x0, x1;
    double fz, fy, fx;
    prep(cz, s.nz, z0, z1, fz);
    prep(cy, s.ny, y0, y1, fy);
    prep(cx, s.nx, x0, x1, fx);
    double v000 = read(z0, y0, x0), v001 = read(z0, y0, x1);
    double v010 = read(z0, y1, x0), v011 = read(z0, y1, x1);
    double v100 = read(z1, y0, x0), v101 = read(z1, y0, x1);
    double v110 = read(z1, y1, x0), v111 = read(z1, y1, x1);
    double c00 = v000 * (1 - fx) + v001 * fx;
    double c01 = v010 * (1 - fx) + v011 * fx;
    double c10 = v100 * (1 - fx) + v101 * fx;
    double c11 = v110 * (1 - fx) + v111 * fx;
    double c0 = c00 * (1 - fy) + c01 * fy;
    double c1 = c10 * (1 - fy) + c11 * fy;
    return static_cast<float>(c0 * (1 - fz) + c1 * fz);
}

}  // namespace detail

// Corner-aligned resampling: output index 0 maps to input index 0 and the
// sample point for output index i lies at i * new_spacing / old_spacing.
inline Volume3D resample(const Volume3D& vol, const ResampleSpec& spec) {
    if (!spec.target_spacing.valid())
        throw InvalidSpacingError("resample: target spacing must be positive and finite, got " +
                                  spec.target_spacing.str());
    if (vol.is_label() && spec.interpolation == Interp::Trilinear)
        throw InvalidInterpolationError("resample: Label volumes require Nearest interpolation");

    const Shape3& in = vol.shape();
    const Spacing3& sp = vol.spacing();
    const Spacing3& tp = spec.target_spacing;

    if (sp == tp) return vol;  // identity, bit-exact

    const Shape3 out{detail::out_size(in.nz, sp.sz, tp.sz), detail::out_size(in.ny, sp.sy, tp.sy),
                     detail::out_size(in.nx, sp.sx, tp.sx)};
    const double rz = tp.sz / sp.sz, ry = tp.sy / sp.sy, rx = tp.sx / sp.sx;

    if (vol.is_label()) {
        auto src = vol.labels();
        std::vector<std::uint8_t> data(static_cast<std::size_t>(out.count()));
        std::size_t o = 0;
        for (i64 z = 0; z < out.nz; ++z) {
            i64 iz = detail::nearest_index(z * rz, in.nz);
            for (i64 y = 0; y < out.ny; ++y) {
                i64 iy = detail::nearest_index(y * ry, in.ny);
                for (i64 x = 0; x < out.nx; ++x, ++o)
                    data[o] = src[(iz * in.ny + iy) * in.nx + detail::nearest_index(x * rx, in.nx)];
            }
        }
        return Volume3D::label(out, tp, std::move(data));
    }

    auto src = vol.floats();
    auto read = [&](i64 z, i64 y, i64 x) -> double {
        return src[static_cast<std::size_t>((z * in.ny + y) * in.nx + x)];
    };
    std::vector<float> data(static_cast<std::size_t>(out.count()));
    std::size_t o = 0;
    for (i64 z = 0; z < out.nz; ++z)
        for (i64 y = 0; y < out.ny; ++y)
            for (i64 x = 0; x < out.nx; ++x, ++o) {
                if (spec.interpolation == Interp::Nearest) {
                    data[o] = static_cast<float>(read(detail::nearest_index(z * rz, in.nz),
                                                      detail::nearest_index(y * ry, in.ny),
                                                      detail::nearest_index(x * rx, in.nx)));
                } else {
                    data[o] = detail::trilinear_sample(read, in, z * rz, y * ry, x * rx);
                }
            }
    return Volume3D::intensity(out, tp, std::move(data));
}

// Per-channel normalization: optional clip, then (v - mean) / std.
struct ChannelStats {
    double mean = 0.0;
    double stddev = 1.0;
    bool clip = false;
    double clip_lo = 0.0;
    double clip_hi = 0.0;
};

struct NormStats {
    ChannelStats ct;   // clipped then z-scored
    ChannelStats pet;  // z-scored
};

namespace detail {

inline Volume3D normalize_channel(const Volume3D& v, const ChannelStats& s) {
    if (v.is_label()) throw InvalidKindError("normalize: Label volumes cannot be normalized");
    if (!(s.stddev > 0)) throw InvalidParameterError("normalize: std must be positive");
    auto src = v.floats();
    std::vector<float> out(src.begin(), src.end());
    for (float& x : out) {
        double d = x;
        if (s.clip) d = std::clamp(d, s.clip_lo, s.clip_hi);
        x = static_cast<float>((d - s.mean) / s.stddev);
    }
    return Volume3D::intensity(v.shape(), v.spacing(), std::move(out));
}

}  // namespace detail

// Two-channel network input: [CT, PET], CT clipped before z-scoring.
inline MultiChannelVolume assemble_input(const Volume3D& ct, const Volume3D& pet,
                                         const NormStats& norm) {
    if (ct.shape() != pet.shape() || ct.spacing() != pet.spacing())
        throw AlignmentError("assemble_input: CT grid " + ct.shape().str() + " / " +
                             ct.spacing().str() + " does not match PET grid " +
                             pet.shape().str() + " / " + pet.spacing().str());
    std::vector<Volume3D> chans;
    chans.push_back(detail::normalize_channel(ct, norm.ct));
    chans.push_back(detail::normalize_channel(pet, norm.pet));
    return MultiChannelVolume(std::move(chans), {"CT", "PET"});
}

}  // namespace petseg
