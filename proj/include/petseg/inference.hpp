#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "petseg/errors.hpp"
#include "petseg/unet.hpp"
#include "petseg/volume.hpp"

namespace petseg {

struct InferenceConfig {
    Shape3 patch_shape{192, 192, 192};
    double step_fraction = 0.5;       // stride as a fraction of patch size, (0, 1]
    double gaussian_sigma_scale = 1.0 / 8.0;

    void validate() const {
        if (!(step_fraction > 0.0 && step_fraction <= 1.0))
            throw InvalidParameterError("inference: step_fraction must be in (0, 1]");
        if (!(gaussian_sigma_scale > 0.0))
            throw InvalidParameterError("inference: gaussian_sigma_scale must be > 0");
        if (patch_shape.nz < 1 || patch_shape.ny < 1 || patch_shape.nx < 1)
            throw InvalidParameterError("inference: patch shape must be positive");
    }
};

// Evenly spread tile origins: first at 0, last flush with the end, actual
// step shrunk from the target so the count covers the axis.
inline std::vector<i64> tile_positions(i64 axis_size, i64 patch_size, double step_fraction) {
    if (axis_size < patch_size)
        throw InvalidParameterError("tile_positions: axis " + std::to_string(axis_size) +
                                    " smaller than patch " + std::to_string(patch_size) +
                                    " (pad first)");
    if (!(step_fraction > 0.0 && step_fraction <= 1.0))
        throw InvalidParameterError("tile_positions: step_fraction must be in (0, 1]");
    const double target = static_cast<double>(patch_size) * step_fraction;
    const i64 n =
        static_cast<i64>(std::ceil(static_cast<double>(axis_size - patch_size) / target)) + 1;
    if (n == 1) return {0};
    const double step = static_cast<double>(axis_size - patch_size) / static_cast<double>(n - 1);
    std::vector<i64> origins(static_cast<std::size_t>(n));
    for (i64 i = 0; i < n; ++i)
        origins[static_cast<std::size_t>(i)] = static_cast<i64>(std::floor(i * step + 0.5));
    origins.back() = axis_size - patch_size;
    // sub-voxel steps can round two tiles onto the same origin
    origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
    return origins;
}

// Tile layout over a (padded) volume.
struct TilePlan {
    Shape3 padded;                      // volume size after padding
    std::array<i64, 3> pad_lo{};        // symmetric zero padding, low side
    std::array<std::vector<i64>, 3> axis_origins;
    std::vector<std::array<i64, 3>> origins;  // cartesian product, z-major order

    std::size_t num_tiles() const { return origins.size(); }
};

inline TilePlan build_tile_plan(const Shape3& vol, const Shape3& patch, double step_fraction) {
    TilePlan plan;
    const std::array<i64, 3> v{vol.nz, vol.ny, vol.nx};
    const std::array<i64, 3> p{patch.nz, patch.ny, patch.nx};
    std::array<i64, 3> padded;
    for (int a = 0; a < 3; ++a) {
        padded[a] = std::max(v[a], p[a]);
        plan.pad_lo[a] = (padded[a] - v[a]) / 2;
    }
    plan.padded = {padded[0], padded[1], padded[2]};
    for (int a = 0; a < 3; ++a)
        plan.axis_origins[a] = tile_positions(padded[a], p[a], step_fraction);
    for (i64 oz : plan.axis_origins[0])
        for (i64 oy : plan.axis_origins[1])
            for (i64 ox : plan.axis_origins[2]) plan.origins.push_back({oz, oy, ox});
    return plan;
}

// Separable Gaussian importance map, maximum 1 at the patch center,
// floored at its smallest positive value so no tile voxel gets weight 0.
inline std::vector<float> gaussian_weight_map(const Shape3& patch, double sigma_scale) {
    if (!(sigma_scale > 0)) throw InvalidParameterError("gaussian_weight_map: sigma_scale must be > 0");
    auto axis_weights = [&](i64 n) {
        std::vector<double> w(static_cast<std::size_t>(n));
        const double c = (n - 1) / 2.0;
        const double sigma = sigma_scale * static_cast<double>(n);
        for (i64 i = 0; i < n; ++i) {
            const double d = i - c;
            w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        }
        return w;
    };
    const auto wz = axis_weights(patch.nz), wy = axis_weights(patch.ny), wx = axis_weights(patch.nx);
    std::vector<float> out(static_cast<std::size_t>(patch.count()));
    double mx = 0.0;
    std::size_t o = 0;
    for (i64 z = 0; z < patch.nz; ++z)
        for (i64 y = 0; y < patch.ny; ++y)
            for (i64 x = 0; x < patch.nx; ++x, ++o) {
                const double w = wz[z] * wy[y] * wx[x];
                out[o] = static_cast<float>(w);
                mx = std::max(mx, w);
            }
    float min_pos = std::numeric_limits<float>::max();
    for (float& w : out) {
        w = static_cast<float>(w / mx);
        if (w > 0.0f) min_pos = std::min(min_pos, w);
    }
    for (float& w : out)
        if (w <= 0.0f) w = min_pos;
    return out;
}

// One ensemble member: a forward function plus identity metadata.
struct FoldModel {
    std::function<Tensor4(const Tensor4&)> forward_fn;
    int out_channels = 2;
    std::uint64_t fingerprint = 0;
};

inline FoldModel make_fold_model(const WeightStore& store) {
    return FoldModel{[&store](const Tensor4& patch) { return forward(store, patch); },
                     store.descriptor().out_channels, store.fingerprint()};
}

namespace detail {

inline Tensor4 pad_input(const MultiChannelVolume& input, const TilePlan& plan) {
    Tensor4 padded(static_cast<int>(input.num_channels()), plan.padded);
    const Shape3& s = input.shape();
    for (std::size_t c = 0; c < input.num_channels(); ++c) {
        auto src = input.channel(c).floats();
        float* dst = padded.chan(static_cast<int>(c));
        for (i64 z = 0; z < s.nz; ++z)
            for (i64 y = 0; y < s.ny; ++y) {
                const float* row = src.data() + (z * s.ny + y) * s.nx;
                float* drow = dst + ((z + plan.pad_lo[0]) * plan.padded.ny + y + plan.pad_lo[1]) *
                                        plan.padded.nx +
                              plan.pad_lo[2];
                std::copy(row, row + s.nx, drow);
            }
    }
    return padded;
}

inline Tensor4 extract_patch(const Tensor4& padded, const std::array<i64, 3>& origin,
                             const Shape3& patch) {
    Tensor4 out(padded.channels, patch);
    for (int c = 0; c < padded.channels; ++c) {
        const float* src = padded.chan(c);
        float* dst = out.chan(c);
        for (i64 z = 0; z < patch.nz; ++z)
            for (i64 y = 0; y < patch.ny; ++y) {
                const float* row = src + ((z + origin[0]) * padded.shape.ny + y + origin[1]) *
                                             padded.shape.nx +
                                   origin[2];
                std::copy(row, row + patch.nx, dst + (z * patch.ny + y) * patch.nx);
            }
    }
    return out;
}

}  // namespace detail

// Gaussian-weighted sliding-window prediction over an ensemble of folds.
// Tiles may be evaluated by several workers, but accumulation happens in
// fixed tile order so the result is independent of thread count.
inline std::vector<Volume3D> sliding_window_predict(std::span<const FoldModel> folds,
                                                    const MultiChannelVolume& input,
                                                    const InferenceConfig& cfg, int threads = 1) {
    cfg.validate();
    if (folds.empty()) throw InvalidParameterError("predict: need at least one fold");
    for (const FoldModel& f : folds)
        if (f.fingerprint != folds[0].fingerprint || f.out_channels != folds[0].out_channels)
            throw EnsembleMismatchError("predict: fold models disagree on architecture");
    const int out_ch = folds[0].out_channels;
    if (threads < 1) threads = 1;

    const TilePlan plan = build_tile_plan(input.shape(), cfg.patch_shape, cfg.step_fraction);
    const Tensor4 padded = detail::pad_input(input, plan);
    const std::vector<float> wmap = gaussian_weight_map(cfg.patch_shape, cfg.gaussian_sigma_scale);
    const Shape3& ps = cfg.patch_shape;
    const i64 pvox = plan.padded.count();

    // Mean over folds of the per-fold normalized probability.
    Tensor4 ensemble(out_ch, plan.padded);

    for (const FoldModel& fold : folds) {
        Tensor4 acc(out_ch, plan.padded);
        std::vector<float> wacc(static_cast<std::size_t>(pvox), 0.0f);

        const std::size_t ntiles = plan.num_tiles();
        const std::size_t batch =
            std::max<std::size_t>(1, static_cast<std::size_t>(threads) * 2);
        std::vector<Tensor4> slots(std::min(batch, ntiles));
        for (std::size_t start = 0; start < ntiles; start += batch) {
            const std::size_t end = std::min(ntiles, start + batch);
            std::atomic<std::size_t> next{start};
            auto worker = [&] {
                for (std::size_t t = next.fetch_add(1); t < end; t = next.fetch_add(1)) {
                    Tensor4 patch = detail::extract_patch(padded, plan.origins[t], ps);
                    slots[t - start] = softmax_channels(fold.forward_fn(patch));
                }
            };
            if (threads == 1) {
                worker();
            } else {
                std::vector<std::thread> pool;
                for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
                for (auto& th : pool) th.join();
            }
            // merge in fixed tile order
            for (std::size_t t = start; t < end; ++t) {
                const auto& origin = plan.origins[t];
                const Tensor4& prob = slots[t - start];
                for (int c = 0; c < out_ch; ++c) {
                    float* ap = acc.chan(c);
                    const float* pp = prob.chan(c);
                    std::size_t i = 0;
                    for (i64 z = 0; z < ps.nz; ++z)
                        for (i64 y = 0; y < ps.ny; ++y) {
                            float* arow = ap + ((z + origin[0]) * plan.padded.ny + y + origin[1]) *
                                                   plan.padded.nx +
                                          origin[2];
                            for (i64 x = 0; x < ps.nx; ++x, ++i)
                                arow[x] += pp[i] * wmap[i];
                        }
                }
                std::size_t i = 0;
                for (i64 z = 0; z < ps.nz; ++z)
                    for (i64 y = 0; y < ps.ny; ++y) {
                        float* wrow = wacc.data() +
                                      ((z + origin[0]) * plan.padded.ny + y + origin[1]) *
                                          plan.padded.nx +
                                      origin[2];
                        for (i64 x = 0; x < ps.nx; ++x, ++i) wrow[x] += wmap[i];
                    }
            }
        }

        const float inv_folds = 1.0f / static_cast<float>(folds.size());
        for (int c = 0; c < out_ch; ++c) {
            float* ep = ensemble.chan(c);
            const float* ap = acc.chan(c);
            for (i64 i = 0; i < pvox; ++i) ep[i] += ap[i] / wacc[static_cast<std::size_t>(i)] * inv_folds;
        }
    }

    // Crop back to the original grid.
    const Shape3& s = input.shape();
    std::vector<Volume3D> out;
    out.reserve(static_cast<std::size_t>(out_ch));
    for (int c = 0; c < out_ch; ++c) {
        std::vector<float> data(static_cast<std::size_t>(s.count()));
        const float* src = ensemble.chan(c);
        std::size_t o = 0;
        for (i64 z = 0; z < s.nz; ++z)
            for (i64 y = 0; y < s.ny; ++y)
                for (i64 x = 0; x < s.nx; ++x, ++o) {
                    float v = src[((z + plan.pad_lo[0]) * plan.padded.ny + y + plan.pad_lo[1]) *
                                      plan.padded.nx +
                                  x + plan.pad_lo[2]];
                    data[o] = std::clamp(v, 0.0f, 1.0f);
                }
        out.push_back(Volume3D::probability(s, input.spacing(), std::move(data)));
    }
    return out;
}

inline std::vector<Volume3D> sliding_window_predict(std::span<const WeightStore> folds,
                                                    const MultiChannelVolume& input,
                                                    const InferenceConfig& cfg, int threads = 1) {
    if (!folds.empty()) {
        const i64 div = folds[0].descriptor().divisibility();
        if (cfg.patch_shape.nz % div || cfg.patch_shape.ny % div || cfg.patch_shape.nx % div)
            throw ShapeError("predict: patch sides must be divisible by " + std::to_string(div) +
                             ", got " + cfg.patch_shape.str());
    }
    std::vector<FoldModel> models;
    models.reserve(folds.size());
    for (const WeightStore& s : folds) models.push_back(make_fold_model(s));
    return sliding_window_predict(std::span<const FoldModel>(models), input, cfg, threads);
}

// Per-voxel argmax over class probabilities; ties go to the lower class.
inline Volume3D argmax_mask(std::span<const Volume3D> probs) {
    if (probs.size() < 2) throw InvalidParameterError("argmax_mask: need at least 2 classes");
    for (std::size_t c = 1; c < probs.size(); ++c)
        if (!probs[c].same_grid(probs[0]))
            throw AlignmentError("argmax_mask: class volumes disagree on grid");
    const i64 n = probs[0].size();
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n));
    for (i64 i = 0; i < n; ++i) {
        std::size_t best = 0;
        float bv = probs[0].floats()[static_cast<std::size_t>(i)];
        for (std::size_t c = 1; c < probs.size(); ++c) {
            const float v = probs[c].floats()[static_cast<std::size_t>(i)];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        mask[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
    }
    return Volume3D::label(probs[0].shape(), probs[0].spacing(), std::move(mask));
}

}  // namespace petseg
