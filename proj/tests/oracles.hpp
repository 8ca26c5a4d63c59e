// Independent brute-force oracles used by the unit and acceptance suites.
// These deliberately avoid the library's implementation paths: direct
// index arithmetic, recursive flood fill, per-element loops.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "petseg/metrics.hpp"
#include "petseg/unet.hpp"
#include "petseg/volume.hpp"

namespace oracle {

using petseg::i64;
using petseg::Shape3;
using petseg::Tensor4;

// Zero-padded stride-1 convolution, straight from the definition.
inline Tensor4 conv3d(const Tensor4& in, const std::vector<float>& w, const std::vector<float>& b,
                      int cout, int k) {
    const Shape3 s = in.shape;
    const int pad = k / 2;
    Tensor4 out(cout, s);
    for (int co = 0; co < cout; ++co)
        for (i64 z = 0; z < s.nz; ++z)
            for (i64 y = 0; y < s.ny; ++y)
                for (i64 x = 0; x < s.nx; ++x) {
                    double acc = b[co];
                    for (int ci = 0; ci < in.channels; ++ci)
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx) {
                                    const i64 iz = z + kz - pad, iy = y + ky - pad,
                                              ix = x + kx - pad;
                                    if (iz < 0 || iz >= s.nz || iy < 0 || iy >= s.ny || ix < 0 ||
                                        ix >= s.nx)
                                        continue;
                                    const double wv =
                                        w[(((static_cast<std::size_t>(co) * in.channels + ci) * k +
                                            kz) * k + ky) * k + kx];
                                    acc += wv * in.at(ci, iz, iy, ix);
                                }
                    out.at(co, z, y, x) = static_cast<float>(acc);
                }
    return out;
}

// Transposed convolution defined through its adjoint relation: output
// voxel o receives input voxel i where o = 2*i + d, d in {0,1}^3.
inline Tensor4 tconv2(const Tensor4& in, const std::vector<float>& w, const std::vector<float>& b,
                      int cout) {
    const Shape3 s = in.shape;
    const Shape3 os{s.nz * 2, s.ny * 2, s.nx * 2};
    Tensor4 out(cout, os);
    for (int co = 0; co < cout; ++co)
        for (i64 oz = 0; oz < os.nz; ++oz)
            for (i64 oy = 0; oy < os.ny; ++oy)
                for (i64 ox = 0; ox < os.nx; ++ox) {
                    double acc = b[co];
                    for (int ci = 0; ci < in.channels; ++ci) {
                        const i64 iz = oz / 2, iy = oy / 2, ix = ox / 2;
                        const int dz = static_cast<int>(oz % 2), dy = static_cast<int>(oy % 2),
                                  dx = static_cast<int>(ox % 2);
                        const double wv =
                            w[(((static_cast<std::size_t>(ci) * cout + co) * 2 + dz) * 2 + dy) * 2 +
                              dx];
                        acc += wv * in.at(ci, iz, iy, ix);
                    }
                    out.at(co, oz, oy, ox) = static_cast<float>(acc);
                }
    return out;
}

inline Tensor4 maxpool2(const Tensor4& in) {
    const Shape3 s = in.shape;
    const Shape3 os{s.nz / 2, s.ny / 2, s.nx / 2};
    Tensor4 out(in.channels, os);
    for (int c = 0; c < in.channels; ++c)
        for (i64 z = 0; z < os.nz; ++z)
            for (i64 y = 0; y < os.ny; ++y)
                for (i64 x = 0; x < os.nx; ++x) {
                    float m = in.at(c, 2 * z, 2 * y, 2 * x);
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                m = std::max(m, in.at(c, 2 * z + dz, 2 * y + dy, 2 * x + dx));
                    out.at(c, z, y, x) = m;
                }
    return out;
}

inline Tensor4 instance_norm(const Tensor4& in, const std::vector<float>& scale,
                             const std::vector<float>& shift, double eps = 1e-5) {
    Tensor4 out(in.channels, in.shape);
    const i64 n = in.plane();
    for (int c = 0; c < in.channels; ++c) {
        double sum = 0.0, sum2 = 0.0;
        for (i64 i = 0; i < n; ++i) sum += in.chan(c)[i];
        const double mean = sum / static_cast<double>(n);
        for (i64 i = 0; i < n; ++i) sum2 += (in.chan(c)[i] - mean) * (in.chan(c)[i] - mean);
        const double sd = std::sqrt(sum2 / static_cast<double>(n) + eps);
        for (i64 i = 0; i < n; ++i)
            out.chan(c)[i] =
                static_cast<float>((in.chan(c)[i] - mean) / sd * scale[c] + shift[c]);
    }
    return out;
}

// Recursive flood fill over an adjacency predicate.
inline std::vector<std::vector<i64>> components(const petseg::Volume3D& mask,
                                                petseg::Connectivity conn) {
    const Shape3& s = mask.shape();
    auto vox = mask.labels();
    std::vector<char> seen(vox.size(), 0);
    std::vector<std::vector<i64>> comps;

    const int maxman = conn == petseg::Connectivity::C6 ? 1
                       : conn == petseg::Connectivity::C18 ? 2
                                                           : 3;
    std::function<void(i64, i64, i64, std::vector<i64>&)> fill = [&](i64 z, i64 y, i64 x,
                                                                     std::vector<i64>& comp) {
        const i64 idx = (z * s.ny + y) * s.nx + x;
        if (seen[idx] || !vox[idx]) return;
        seen[idx] = 1;
        comp.push_back(idx);
        for (i64 dz = -1; dz <= 1; ++dz)
            for (i64 dy = -1; dy <= 1; ++dy)
                for (i64 dx = -1; dx <= 1; ++dx) {
                    if (!dz && !dy && !dx) continue;
                    if (std::abs(dz) + std::abs(dy) + std::abs(dx) > maxman) continue;
                    const i64 nz = z + dz, ny = y + dy, nx = x + dx;
                    if (nz < 0 || nz >= s.nz || ny < 0 || ny >= s.ny || nx < 0 || nx >= s.nx)
                        continue;
                    fill(nz, ny, nx, comp);
                }
    };
    for (i64 z = 0; z < s.nz; ++z)
        for (i64 y = 0; y < s.ny; ++y)
            for (i64 x = 0; x < s.nx; ++x) {
                const i64 idx = (z * s.ny + y) * s.nx + x;
                if (vox[idx] && !seen[idx]) {
                    comps.emplace_back();
                    fill(z, y, x, comps.back());
                }
            }
    return comps;
}

inline double dsc(const petseg::Volume3D& pred, const petseg::Volume3D& gt) {
    auto p = pred.labels(), g = gt.labels();
    i64 np = 0, ng = 0, both = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i]) ++np;
        if (g[i]) ++ng;
        if (p[i] && g[i]) ++both;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

// Sum of volumes of pred components with voxel-by-voxel zero gt overlap.
inline double fpv(const petseg::Volume3D& pred, const petseg::Volume3D& gt,
                  petseg::Connectivity conn) {
    auto g = gt.labels();
    double voxels = 0;
    for (const auto& comp : components(pred, conn)) {
        bool overlap = false;
        for (i64 idx : comp)
            if (g[static_cast<std::size_t>(idx)]) overlap = true;
        if (!overlap) voxels += static_cast<double>(comp.size());
    }
    return voxels * petseg::voxel_volume_ml(pred.spacing());
}

inline double fnv(const petseg::Volume3D& pred, const petseg::Volume3D& gt,
                  petseg::Connectivity conn) {
    return oracle::fpv(gt, pred, conn);
}

// Parameter-count oracle: closed-form per-block arithmetic, no shared code
// with layer_inventory.
inline i64 param_count(const std::vector<i64>& ch, i64 in_ch, i64 out_ch, bool norm = true) {
    const i64 k3 = 27;
    auto block = [&](i64 cin, i64 cout) {
        return cin * cout * k3 + cout + (norm ? 2 * cout : 0);
    };
    i64 total = 0;
    i64 prev = in_ch;
    for (i64 c : ch) {
        total += block(prev, c) + block(c, c);
        prev = c;
    }
    for (std::size_t l = 0; l + 1 < ch.size(); ++l) {
        const i64 cl = ch[l], cup = ch[l + 1];
        total += cup * cl * 8 + cl;                      // transposed conv
        total += block(2 * cl, cl) + block(cl, cl);      // post-concat convs
    }
    total += ch.front() * out_ch + out_ch;               // 1x1x1 head
    return total;
}

}  // namespace oracle
