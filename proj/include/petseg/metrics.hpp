#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "petseg/errors.hpp"
#include "petseg/volume.hpp"

namespace petseg {

enum class Connectivity { C6 = 6, C18 = 18, C26 = 26 };

struct CaseMetrics {
    std::string case_id;
    double dsc = 0.0;
    double fpv_ml = 0.0;
    double fnv_ml = 0.0;
};

// Component labels in first-voxel scan order: 0 background, 1..K components.
struct ComponentLabeling {
    Shape3 shape;
    std::vector<std::int32_t> labels;
    std::vector<i64> sizes;  // sizes[k-1] = voxel count of component k

    std::int32_t num_components() const { return static_cast<std::int32_t>(sizes.size()); }
};

namespace detail {

inline std::vector<std::array<i64, 3>> neighbor_offsets(Connectivity conn) {
    std::vector<std::array<i64, 3>> offs;
    for (i64 dz = -1; dz <= 1; ++dz)
        for (i64 dy = -1; dy <= 1; ++dy)
            for (i64 dx = -1; dx <= 1; ++dx) {
                if (dz == 0 && dy == 0 && dx == 0) continue;
                const int manhattan = static_cast<int>(std::abs(dz) + std::abs(dy) + std::abs(dx));
                if (conn == Connectivity::C6 && manhattan > 1) continue;
                if (conn == Connectivity::C18 && manhattan > 2) continue;
                offs.push_back({dz, dy, dx});
            }
    return offs;
}

inline void require_binary(const Volume3D& mask, const char* who) {
    if (!mask.is_label()) throw InvalidMaskError(std::string(who) + ": mask must be a Label volume");
    for (std::uint8_t v : mask.labels())
        if (v > 1)
            throw InvalidMaskError(std::string(who) + ": mask must be binary, found value " +
                                   std::to_string(v));
}

}  // namespace detail

inline ComponentLabeling connected_components(const Volume3D& mask, Connectivity conn) {
    detail::require_binary(mask, "connected_components");
    const Shape3& s = mask.shape();
    auto vox = mask.labels();
    const auto offs = detail::neighbor_offsets(conn);

    ComponentLabeling out;
    out.shape = s;
    out.labels.assign(vox.size(), 0);

    std::vector<i64> stack;
    std::int32_t next_label = 0;
    for (i64 z = 0; z < s.nz; ++z)
        for (i64 y = 0; y < s.ny; ++y)
            for (i64 x = 0; x < s.nx; ++x) {
                const i64 seed = (z * s.ny + y) * s.nx + x;
                if (!vox[seed] || out.labels[seed]) continue;
                ++next_label;
                i64 count = 0;
                out.labels[seed] = next_label;
                stack.push_back(seed);
                while (!stack.empty()) {
                    const i64 cur = stack.back();
                    stack.pop_back();
                    ++count;
                    const i64 cz = cur / (s.ny * s.nx);
                    const i64 cy = (cur / s.nx) % s.ny;
                    const i64 cx = cur % s.nx;
                    for (const auto& d : offs) {
                        const i64 nz = cz + d[0], ny = cy + d[1], nx = cx + d[2];
                        if (nz < 0 || nz >= s.nz || ny < 0 || ny >= s.ny || nx < 0 || nx >= s.nx)
                            continue;
                        const i64 ni = (nz * s.ny + ny) * s.nx + nx;
                        if (vox[ni] && !out.labels[ni]) {
                            out.labels[ni] = next_label;
                            stack.push_back(ni);
                        }
                    }
                }
                out.sizes.push_back(count);
            }
    return out;
}

namespace detail {

inline void require_aligned(const Volume3D& a, const Volume3D& b, const char* who) {
    if (a.shape() != b.shape())
        throw AlignmentError(std::string(who) + ": shapes differ, " + a.shape().str() + " vs " +
                             b.shape().str());
}

}  // namespace detail

// Foreground Dice, with both-empty defined as perfect agreement.
inline double dsc(const Volume3D& pred, const Volume3D& gt, double empty_empty_value = 1.0) {
    detail::require_binary(pred, "dsc");
    detail::require_binary(gt, "dsc");
    detail::require_aligned(pred, gt, "dsc");
    auto p = pred.labels(), g = gt.labels();
    i64 np = 0, ng = 0, inter = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        np += p[i];
        ng += g[i];
        inter += p[i] & g[i];
    }
    if (np == 0 && ng == 0) return empty_empty_value;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

// Total volume (ml) of predicted components with zero ground-truth overlap.
inline double fpv(const Volume3D& pred, const Volume3D& gt, Connectivity conn) {
    detail::require_binary(pred, "fpv");
    detail::require_binary(gt, "fpv");
    detail::require_aligned(pred, gt, "fpv");
    const ComponentLabeling cc = connected_components(pred, conn);
    std::vector<char> overlaps(static_cast<std::size_t>(cc.num_components()) + 1, 0);
    auto g = gt.labels();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g[i] && cc.labels[i]) overlaps[static_cast<std::size_t>(cc.labels[i])] = 1;
    i64 voxels = 0;
    for (std::int32_t k = 1; k <= cc.num_components(); ++k)
        if (!overlaps[static_cast<std::size_t>(k)]) voxels += cc.sizes[static_cast<std::size_t>(k) - 1];
    return static_cast<double>(voxels) * voxel_volume_ml(pred.spacing());
}

// Total volume (ml) of ground-truth components missed by the prediction.
inline double fnv(const Volume3D& pred, const Volume3D& gt, Connectivity conn) {
    return fpv(gt, pred, conn);
}

inline CaseMetrics evaluate_case(const std::string& case_id, const Volume3D& pred,
                                 const Volume3D& gt, Connectivity conn,
                                 double empty_empty_dice = 1.0) {
    if (pred.spacing() != gt.spacing())
        throw AlignmentError("evaluate: prediction and ground truth spacing differ for case " +
                             case_id);
    return CaseMetrics{case_id, dsc(pred, gt, empty_empty_dice), fpv(pred, gt, conn),
                       fnv(pred, gt, conn)};
}

struct TeamMetrics {
    std::string team;
    double dsc = 0.0;
    double fpv = 0.0;
    double fnv = 0.0;
};

struct LeaderboardRow {
    std::string team;
    double rank_dsc = 0.0;
    double rank_fpv = 0.0;
    double rank_fnv = 0.0;
    double score = 0.0;  // 0.5 * R_dsc + 0.25 * R_fpv + 0.25 * R_fnv
};

namespace detail {

// Fractional ranking: ties share the mean of the positions they occupy.
// `ascending` ranks smaller-is-better.
inline std::vector<double> fractional_ranks(const std::vector<double>& vals, bool ascending) {
    const std::size_t n = vals.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return ascending ? vals[a] < vals[b] : vals[a] > vals[b];
    });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && vals[idx[j + 1]] == vals[idx[i]]) ++j;
        const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Challenge ranking: DSC higher-better, FPV/FNV lower-better, weighted
// mean of the three fractional ranks. Output ascending by score, then name.
inline std::vector<LeaderboardRow> rank_teams(const std::vector<TeamMetrics>& table) {
    if (table.empty()) throw InvalidMetricError("rank_teams: need at least one team");
    std::vector<double> d, p, n;
    for (const TeamMetrics& t : table) {
        if (!std::isfinite(t.dsc) || !std::isfinite(t.fpv) || !std::isfinite(t.fnv))
            throw InvalidMetricError("rank_teams: non-finite metric for team '" + t.team + "'");
        d.push_back(t.dsc);
        p.push_back(t.fpv);
        n.push_back(t.fnv);
    }
    const auto rd = detail::fractional_ranks(d, false);
    const auto rp = detail::fractional_ranks(p, true);
    const auto rn = detail::fractional_ranks(n, true);
    std::vector<LeaderboardRow> rows;
    for (std::size_t i = 0; i < table.size(); ++i)
        rows.push_back({table[i].team, rd[i], rp[i], rn[i],
                        0.5 * rd[i] + 0.25 * rp[i] + 0.25 * rn[i]});
    std::sort(rows.begin(), rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.team < b.team;
    });
    return rows;
}

}  // namespace petseg
