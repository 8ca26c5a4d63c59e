#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "petseg/nifti.hpp"
#include "petseg/rng.hpp"
#include "petseg/volume.hpp"

using namespace petseg;

namespace {

void poke16(Bytes& b, std::size_t off, std::int16_t v) { std::memcpy(b.data() + off, &v, 2); }
void poke32(Bytes& b, std::size_t off, std::int32_t v) { std::memcpy(b.data() + off, &v, 4); }
void pokef(Bytes& b, std::size_t off, float v) { std::memcpy(b.data() + off, &v, 4); }

// Assemble a NIfTI-1 file by raw offset arithmetic, independent of the
// library's header struct.
Bytes golden_float_fixture() {
    Bytes b(352 + 8 * 4, 0);
    poke32(b, 0, 348);          // sizeof_hdr
    b[38] = 'r';                // regular
    poke16(b, 40, 3);           // dim[0]
    poke16(b, 42, 2);           // dim[1] = nx
    poke16(b, 44, 2);           // dim[2] = ny
    poke16(b, 46, 2);           // dim[3] = nz
    for (std::size_t a = 4; a < 8; ++a) poke16(b, 40 + 2 * a, 1);
    poke16(b, 70, 16);          // datatype float32
    poke16(b, 72, 32);          // bitpix
    pokef(b, 76, 1.0f);         // pixdim[0] (qfac)
    pokef(b, 80, 1.01821005f);  // pixdim[1] = sx
    pokef(b, 84, 1.01821005f);  // pixdim[2] = sy
    pokef(b, 88, 1.5f);         // pixdim[3] = sz
    pokef(b, 108, 352.0f);      // vox_offset
    pokef(b, 112, 1.0f);        // scl_slope
    pokef(b, 116, 0.0f);        // scl_inter
    b[123] = 2;                 // xyzt_units: mm
    std::memcpy(b.data() + 344, "n+1", 4);
    for (int i = 0; i < 8; ++i) pokef(b, 352 + 4 * i, static_cast<float>(i));
    return b;
}

}  // namespace

TEST_CASE("golden fixture read") {
    const Bytes golden = golden_float_fixture();
    const Volume3D v = read_nifti(golden);
    CHECK(v.shape() == Shape3{2, 2, 2});
    CHECK(v.kind() == VoxelKind::Intensity);
    CHECK(v.spacing().sz == Catch::Approx(1.5));
    CHECK(v.spacing().sy == Catch::Approx(1.01821005).epsilon(1e-7));
    CHECK(v.spacing().sx == Catch::Approx(1.01821005).epsilon(1e-7));
    for (i64 i = 0; i < 8; ++i) CHECK(v.floats()[i] == static_cast<float>(i));
}

TEST_CASE("writer matches the golden file byte for byte") {
    const Bytes golden = golden_float_fixture();
    const Volume3D v = read_nifti(golden);
    const Bytes written = write_nifti(v, false);
    REQUIRE(written.size() == golden.size());
    CHECK(std::memcmp(written.data(), golden.data(), golden.size()) == 0);
}

TEST_CASE("sizeof_hdr violation names the field") {
    Bytes b = golden_float_fixture();
    poke32(b, 0, 347);
    try {
        read_nifti(b);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("sizeof_hdr") != std::string::npos);
    }
}

TEST_CASE("scl_slope and scl_inter are applied") {
    Bytes b = golden_float_fixture();
    pokef(b, 112, 2.0f);  // slope
    pokef(b, 116, 1.0f);  // inter
    pokef(b, 352, 3.0f);  // first stored value
    const Volume3D v = read_nifti(b);
    CHECK(v.floats()[0] == 7.0f);  // 2 * 3 + 1
}

TEST_CASE("distinct parse errors") {
    const Bytes golden = golden_float_fixture();

    Bytes bad_dim0 = golden;
    poke16(bad_dim0, 40, 4);
    CHECK_THROWS_WITH(read_nifti(bad_dim0), Catch::Matchers::ContainsSubstring("dim[0]"));

    Bytes bad_dtype = golden;
    poke16(bad_dtype, 70, 64);  // float64, unsupported
    CHECK_THROWS_WITH(read_nifti(bad_dtype), Catch::Matchers::ContainsSubstring("datatype"));

    Bytes truncated = golden;
    truncated.resize(352 + 7 * 4);
    CHECK_THROWS_WITH(read_nifti(truncated), Catch::Matchers::ContainsSubstring("truncated"));

    Bytes big_endian = golden;
    poke32(big_endian, 0, 0x5C010000);  // 348 byteswapped
    CHECK_THROWS_WITH(read_nifti(big_endian), Catch::Matchers::ContainsSubstring("big-endian"));
}

TEST_CASE("reader rejects every bit corruption of magic and datatype") {
    const Bytes golden = golden_float_fixture();
    const std::vector<std::size_t> offsets{344, 345, 346, 347, 70, 71};
    for (std::size_t off : offsets)
        for (int bit = 0; bit < 8; ++bit) {
            Bytes corrupt = golden;
            corrupt[off] ^= static_cast<std::uint8_t>(1u << bit);
            CHECK_THROWS_AS(read_nifti(corrupt), ParseError);
        }
}

TEST_CASE("uint8 binary data loads as Label, non-binary as Intensity") {
    Bytes b = golden_float_fixture();
    poke16(b, 70, 2);  // uint8
    poke16(b, 72, 8);
    b.resize(352 + 8);
    for (int i = 0; i < 8; ++i) b[352 + i] = static_cast<std::uint8_t>(i % 2);
    const Volume3D mask = read_nifti(b);
    CHECK(mask.kind() == VoxelKind::Label);
    CHECK(mask.labels()[3] == 1);

    b[352 + 3] = 7;
    const Volume3D img = read_nifti(b);
    CHECK(img.kind() == VoxelKind::Intensity);
    CHECK_THROWS_AS(read_nifti(b, MaskPolicy::RequireMask), InvalidMaskError);
}

TEST_CASE("int16 mask normalizes to Label under RequireMask") {
    Bytes b = golden_float_fixture();
    poke16(b, 70, 4);  // int16
    poke16(b, 72, 16);
    b.resize(352 + 16);
    for (int i = 0; i < 8; ++i) poke16(b, 352 + 2 * i, static_cast<std::int16_t>(i % 2));
    const Volume3D mask = read_nifti(b, MaskPolicy::RequireMask);
    CHECK(mask.kind() == VoxelKind::Label);
    CHECK(mask.labels()[5] == 1);
}

TEST_CASE("round trip identity on random volumes, plain and gzipped") {
    Rng rng(99);
    for (int rep = 0; rep < 25; ++rep) {
        Shape3 s{1 + static_cast<i64>(rng.uniform() * 8), 1 + static_cast<i64>(rng.uniform() * 8),
                 1 + static_cast<i64>(rng.uniform() * 8)};
        Spacing3 sp{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
        const bool as_label = rep % 3 == 0;
        const bool gz = rep % 2 == 0;

        if (as_label) {
            std::vector<std::uint8_t> data(static_cast<std::size_t>(s.count()));
            for (auto& v : data) v = rng.uniform() < 0.5 ? 0 : 1;
            const Volume3D v = Volume3D::label(s, sp, data);
            const Volume3D rt = read_nifti(write_nifti(v, gz));
            REQUIRE(rt.kind() == VoxelKind::Label);
            CHECK(rt.shape() == s);
            CHECK(std::equal(data.begin(), data.end(), rt.labels().begin()));
        } else {
            std::vector<float> data(static_cast<std::size_t>(s.count()));
            for (auto& v : data) v = static_cast<float>(rng.uniform(-1000.0, 1000.0));
            const Volume3D v = Volume3D::intensity(s, sp, data);
            const Volume3D rt = read_nifti(write_nifti(v, gz));
            REQUIRE(rt.kind() == VoxelKind::Intensity);
            CHECK(rt.shape() == s);
            // bit-exact for float32
            CHECK(std::memcmp(data.data(), rt.floats().data(), data.size() * 4) == 0);
        }
    }
}

TEST_CASE("affine fields survive a read-write round trip") {
    Bytes b = golden_float_fixture();
    poke16(b, 252, 1);     // qform_code
    pokef(b, 256, 0.5f);   // quatern_b
    pokef(b, 280, 2.5f);   // srow_x[0]
    NiftiMeta meta;
    const Volume3D v = read_nifti(b, MaskPolicy::Auto, &meta);
    const Bytes out = write_nifti(v, false, &meta);
    NiftiMeta meta2;
    read_nifti(out, MaskPolicy::Auto, &meta2);
    CHECK(meta2.qform_code == 1);
    CHECK(meta2.quatern_b == 0.5f);
    CHECK(meta2.srow_x[0] == 2.5f);
}

TEST_CASE("gzip is detected by magic") {
    const Bytes golden = golden_float_fixture();
    const Bytes gz = gzip_compress(golden);
    REQUIRE(is_gzip(gz));
    REQUIRE_FALSE(is_gzip(golden));
    const Volume3D v = read_nifti(gz);
    CHECK(v.shape() == Shape3{2, 2, 2});
}
