#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "oracles.hpp"
#include "petseg/metrics.hpp"
#include "petseg/rng.hpp"

using namespace petseg;

namespace {

// 10 mm cubic voxels, so 1 voxel = 1 ml and volumes read off directly.
constexpr Spacing3 kMl{10, 10, 10};

Volume3D mask_of(Shape3 s, const std::vector<std::uint8_t>& vox, Spacing3 sp = kMl) {
    return Volume3D::label(s, sp, vox);
}

Volume3D random_mask(Rng& rng, i64 max_side, double fg_prob) {
    Shape3 s{1 + static_cast<i64>(rng.uniform() * static_cast<double>(max_side)),
             1 + static_cast<i64>(rng.uniform() * static_cast<double>(max_side)),
             1 + static_cast<i64>(rng.uniform() * static_cast<double>(max_side))};
    std::vector<std::uint8_t> vox(static_cast<std::size_t>(s.count()));
    for (auto& v : vox) v = rng.uniform() < fg_prob ? 1 : 0;
    return Volume3D::label(s, kMl, vox);
}

Volume3D random_mask_on(Rng& rng, Shape3 s, double fg_prob) {
    std::vector<std::uint8_t> vox(static_cast<std::size_t>(s.count()));
    for (auto& v : vox) v = rng.uniform() < fg_prob ? 1 : 0;
    return Volume3D::label(s, kMl, vox);
}

}  // namespace

TEST_CASE("two isolated voxels are two components") {
    const Volume3D m = mask_of({1, 1, 3}, {1, 0, 1});
    for (Connectivity c : {Connectivity::C6, Connectivity::C18, Connectivity::C26}) {
        const ComponentLabeling cc = connected_components(m, c);
        CHECK(cc.num_components() == 2);
        CHECK(cc.labels == std::vector<std::int32_t>{1, 0, 2});
        CHECK(cc.sizes == std::vector<i64>{1, 1});
    }
}

TEST_CASE("face, edge and corner adjacency distinguish the connectivities") {
    // edge-diagonal pair in a z-plane
    const Volume3D edge = mask_of({1, 2, 2}, {1, 0, 0, 1});
    CHECK(connected_components(edge, Connectivity::C6).num_components() == 2);
    CHECK(connected_components(edge, Connectivity::C18).num_components() == 1);
    CHECK(connected_components(edge, Connectivity::C26).num_components() == 1);

    // corner-diagonal pair across all three axes
    const Volume3D corner = mask_of({2, 2, 2}, {1, 0, 0, 0, 0, 0, 0, 1});
    CHECK(connected_components(corner, Connectivity::C6).num_components() == 2);
    CHECK(connected_components(corner, Connectivity::C18).num_components() == 2);
    CHECK(connected_components(corner, Connectivity::C26).num_components() == 1);

    // face-adjacent pair is one component everywhere
    const Volume3D face = mask_of({1, 1, 2}, {1, 1});
    for (Connectivity c : {Connectivity::C6, Connectivity::C18, Connectivity::C26})
        CHECK(connected_components(face, c).num_components() == 1);
}

TEST_CASE("labeling matches the recursive flood-fill oracle") {
    Rng rng(31);
    for (int rep = 0; rep < 60; ++rep) {
        const Volume3D m = random_mask(rng, 8, rng.uniform(0.1, 0.7));
        for (Connectivity c : {Connectivity::C6, Connectivity::C18, Connectivity::C26}) {
            const ComponentLabeling cc = connected_components(m, c);
            const auto expect = oracle::components(m, c);
            REQUIRE(cc.num_components() == static_cast<std::int32_t>(expect.size()));
            // oracle scans in the same order, so labels must agree exactly
            for (std::size_t k = 0; k < expect.size(); ++k) {
                CHECK(cc.sizes[k] == static_cast<i64>(expect[k].size()));
                for (i64 idx : expect[k])
                    CHECK(cc.labels[static_cast<std::size_t>(idx)] ==
                          static_cast<std::int32_t>(k + 1));
            }
        }
    }
}

TEST_CASE("component labeling rejects non-binary input") {
    std::vector<std::uint8_t> vox{0, 2};
    const Volume3D m = Volume3D::label({1, 1, 2}, kMl, vox);
    CHECK_THROWS_AS(connected_components(m, Connectivity::C26), InvalidMaskError);
}

TEST_CASE("dice examples") {
    const Volume3D a = mask_of({1, 1, 4}, {1, 1, 0, 0});
    const Volume3D b = mask_of({1, 1, 4}, {0, 1, 1, 0});
    CHECK(dsc(a, a) == 1.0);
    CHECK(dsc(a, b) == Catch::Approx(0.5));  // 2*1 / (2+2)
    const Volume3D empty = mask_of({1, 1, 4}, {0, 0, 0, 0});
    CHECK(dsc(a, empty) == 0.0);
    CHECK(dsc(empty, empty) == 1.0);
    CHECK(dsc(empty, empty, 0.0) == 0.0);
    CHECK(dsc(a, b) == dsc(b, a));
}

TEST_CASE("dice is symmetric on random masks") {
    Rng rng(37);
    for (int rep = 0; rep < 30; ++rep) {
        const Shape3 s{4, 4, 4};
        const Volume3D a = random_mask_on(rng, s, 0.4);
        const Volume3D b = random_mask_on(rng, s, 0.4);
        CHECK(dsc(a, b) == dsc(b, a));
    }
}

TEST_CASE("false positive volume counts only non-overlapping components") {
    const Shape3 s{20, 20, 20};
    std::vector<std::uint8_t> pred(static_cast<std::size_t>(s.count()), 0);
    std::vector<std::uint8_t> gt(static_cast<std::size_t>(s.count()), 0);
    auto at = [&](std::vector<std::uint8_t>& m, i64 z, i64 y, i64 x) -> std::uint8_t& {
        return m[static_cast<std::size_t>((z * 20 + y) * 20 + x)];
    };

    // a 3-voxel predicted run with empty ground truth: all of it is false positive
    at(pred, 10, 10, 10) = at(pred, 10, 10, 11) = at(pred, 10, 10, 12) = 1;
    CHECK(fpv(mask_of(s, pred), mask_of(s, gt), Connectivity::C26) == Catch::Approx(3.0));

    // a second, distant component that touches ground truth is excluded entirely
    at(pred, 2, 2, 2) = at(pred, 2, 2, 3) = 1;
    at(gt, 2, 2, 2) = 1;
    CHECK(fpv(mask_of(s, pred), mask_of(s, gt), Connectivity::C26) == Catch::Approx(3.0));

    // once the 3-voxel run also overlaps, nothing is left
    at(gt, 10, 10, 11) = 1;
    CHECK(fpv(mask_of(s, pred), mask_of(s, gt), Connectivity::C26) == Catch::Approx(0.0));
}

TEST_CASE("false negative volume counts missed ground-truth components") {
    const Shape3 s{20, 20, 20};
    std::vector<std::uint8_t> pred(static_cast<std::size_t>(s.count()), 0);
    std::vector<std::uint8_t> gt(static_cast<std::size_t>(s.count()), 0);
    auto idx = [](i64 z, i64 y, i64 x) { return static_cast<std::size_t>((z * 20 + y) * 20 + x); };
    for (i64 x = 5; x < 10; ++x) gt[idx(5, 5, x)] = 1;  // a 5-voxel lesion, fully missed
    CHECK(fnv(mask_of(s, pred), mask_of(s, gt), Connectivity::C26) == Catch::Approx(5.0));
    pred[idx(5, 5, 7)] = 1;  // touch it anywhere and it no longer counts
    CHECK(fnv(mask_of(s, pred), mask_of(s, gt), Connectivity::C26) == Catch::Approx(0.0));
}

TEST_CASE("fnv(p, g) equals fpv(g, p) on random masks") {
    Rng rng(41);
    for (int rep = 0; rep < 30; ++rep) {
        const Shape3 s{6, 6, 6};
        const Volume3D p = random_mask_on(rng, s, 0.3);
        const Volume3D g = random_mask_on(rng, s, 0.3);
        for (Connectivity c : {Connectivity::C6, Connectivity::C18, Connectivity::C26})
            CHECK(fnv(p, g, c) == fpv(g, p, c));
    }
}

TEST_CASE("fpv and fnv vanish when prediction equals ground truth") {
    Rng rng(43);
    for (int rep = 0; rep < 20; ++rep) {
        const Volume3D m = random_mask(rng, 6, 0.4);
        CHECK(fpv(m, m, Connectivity::C26) == 0.0);
        CHECK(fnv(m, m, Connectivity::C26) == 0.0);
    }
}

TEST_CASE("fpv and fnv match the oracle on random masks") {
    Rng rng(47);
    for (int rep = 0; rep < 40; ++rep) {
        const Shape3 s{6, 6, 6};
        const Volume3D p = random_mask_on(rng, s, rng.uniform(0.1, 0.5));
        const Volume3D g = random_mask_on(rng, s, rng.uniform(0.1, 0.5));
        for (Connectivity c : {Connectivity::C6, Connectivity::C18, Connectivity::C26}) {
            CHECK(fpv(p, g, c) == Catch::Approx(oracle::fpv(p, g, c)).margin(1e-9));
            CHECK(fnv(p, g, c) == Catch::Approx(oracle::fnv(p, g, c)).margin(1e-9));
            CHECK(dsc(p, g) == Catch::Approx(oracle::dsc(p, g)).margin(1e-12));
        }
    }
}

TEST_CASE("volumes scale with voxel size") {
    const Shape3 s{1, 1, 3};
    const Volume3D pred = Volume3D::label(s, {1.5, 1.01821005, 1.01821005}, {1, 1, 1});
    const Volume3D gt = Volume3D::label(s, {1.5, 1.01821005, 1.01821005}, {0, 0, 0});
    const double expected = 3.0 * voxel_volume_ml({1.5, 1.01821005, 1.01821005});
    CHECK(fpv(pred, gt, Connectivity::C26) == Catch::Approx(expected));
}

TEST_CASE("evaluate_case bundles the three metrics") {
    const Shape3 s{1, 1, 4};
    const Volume3D p = mask_of(s, {1, 1, 0, 0});
    const Volume3D g = mask_of(s, {0, 1, 1, 0});
    const CaseMetrics m = evaluate_case("case_7", p, g, Connectivity::C6);
    CHECK(m.case_id == "case_7");
    CHECK(m.dsc == Catch::Approx(0.5));
    CHECK(m.fpv_ml == 0.0);  // the pred run overlaps gt
    CHECK(m.fnv_ml == 0.0);

    const Volume3D g2 = Volume3D::label(s, {1, 1, 1}, {0, 1, 1, 0});
    CHECK_THROWS_AS(evaluate_case("x", p, g2, Connectivity::C6), AlignmentError);
}

TEST_CASE("ranking a single team gives unit ranks") {
    const auto rows = rank_teams({{"solo", 0.9, 1.0, 2.0}});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].rank_dsc == 1.0);
    CHECK(rows[0].rank_fpv == 1.0);
    CHECK(rows[0].rank_fnv == 1.0);
    CHECK(rows[0].score == 1.0);
}

TEST_CASE("challenge leaderboard reproduces the published ordering") {
    // top-5 aggregate metrics (DSC, FPV, FNV) from the 2022 final test set
    const std::vector<TeamMetrics> table{
        {"Blackbean", 0.62, 2.84, 0.54},
        {"BDAV", 0.62, 3.61, 0.75},
        {"FightTumor", 0.60, 5.10, 0.47},
        {"UIH-FL", 0.61, 4.85, 0.83},
        {"heiligerl", 0.61, 5.87, 0.63},
    };
    const auto rows = rank_teams(table);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].team == "Blackbean");
    CHECK(rows[0].rank_dsc == 1.5);  // DSC tie with BDAV
    CHECK(rows[0].rank_fpv == 1.0);
    CHECK(rows[0].rank_fnv == 2.0);
    CHECK(rows[0].score == Catch::Approx(1.5));
    CHECK(rows[1].team == "BDAV");
    CHECK(rows[1].score == Catch::Approx(2.25));
    // the remaining three tie at 3.75 and come out name-ordered
    CHECK(rows[2].team == "FightTumor");
    CHECK(rows[3].team == "UIH-FL");
    CHECK(rows[4].team == "heiligerl");
    for (std::size_t i = 2; i < 5; ++i) CHECK(rows[i].score == Catch::Approx(3.75));
    // scores stay within [1, n]
    for (const auto& r : rows) {
        CHECK(r.score >= 1.0);
        CHECK(r.score <= 5.0);
    }
}

TEST_CASE("fractional ranks average over ties") {
    // two teams tied on every metric share rank 1.5
    const auto rows = rank_teams({{"a", 0.9, 1.0, 1.0}, {"b", 0.9, 1.0, 1.0}});
    CHECK(rows[0].score == Catch::Approx(1.5));
    CHECK(rows[1].score == Catch::Approx(1.5));
    CHECK(rows[0].team == "a");  // name breaks the tie in the output order

    // dsc ties but fpv splits: a gets 0.5*1.5 + 0.25*1 + 0.25*1 = 1.25
    const auto rows2 = rank_teams({{"a", 0.9, 1.0, 1.0}, {"b", 0.9, 2.0, 2.0}});
    CHECK(rows2[0].team == "a");
    CHECK(rows2[0].score == Catch::Approx(1.25));
    CHECK(rows2[1].score == Catch::Approx(1.75));
}

TEST_CASE("ranking is invariant under input permutation") {
    const std::vector<TeamMetrics> table{
        {"x", 0.8, 5.0, 3.0}, {"y", 0.7, 2.0, 4.0}, {"z", 0.9, 3.0, 1.0}};
    std::vector<TeamMetrics> shuffled{table[2], table[0], table[1]};
    const auto a = rank_teams(table);
    const auto b = rank_teams(shuffled);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].team == b[i].team);
        CHECK(a[i].score == b[i].score);
    }
}

TEST_CASE("non-finite metrics are rejected by team name") {
    const std::vector<TeamMetrics> table{{"good", 0.9, 1.0, 1.0},
                                         {"broken", std::nan(""), 1.0, 1.0}};
    CHECK_THROWS_WITH(rank_teams(table), Catch::Matchers::ContainsSubstring("broken"));
    CHECK_THROWS_AS(rank_teams({}), InvalidMetricError);
}

TEST_CASE("merging two components can only reduce fpv") {
    // a bridge voxel joins a clean component to an overlapping one,
    // removing the clean component's contribution
    const Shape3 s{1, 1, 5};
    const Volume3D gt = mask_of(s, {1, 0, 0, 0, 0});
    const Volume3D apart = mask_of(s, {1, 0, 1, 1, 1});
    const Volume3D bridged = mask_of(s, {1, 1, 1, 1, 1});
    CHECK(fpv(apart, gt, Connectivity::C6) == Catch::Approx(3.0));
    CHECK(fpv(bridged, gt, Connectivity::C6) == Catch::Approx(0.0));
}
