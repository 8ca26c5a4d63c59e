#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "petseg/errors.hpp"
#include "petseg/volume.hpp"

namespace petseg {

using Bytes = std::vector<std::uint8_t>;

namespace detail {

// NIfTI-1 header, little-endian on disk. Field layout has no implicit
// padding on any sane ABI; the static_assert below guards that.
struct NiftiHeader {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must pack to 348 bytes");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

}  // namespace detail

inline bool is_gzip(const Bytes& b) {
    return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

inline Bytes gzip_decompress(const Bytes& in) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) throw IoError("zlib inflateInit failed");
    Bytes out;
    out.resize(in.size() * 4 + 1024);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    std::size_t written = 0;
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        written = out.size() - zs.avail_out;
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw ParseError("gzip stream corrupt (zlib rc " + std::to_string(rc) + ")");
        }
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

inline Bytes gzip_compress(const Bytes& in) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw IoError("zlib deflateInit failed");
    Bytes out(deflateBound(&zs, static_cast<uLong>(in.size())) + 32);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    if (deflate(&zs, Z_FINISH) != Z_STREAM_END) {
        deflateEnd(&zs);
        throw IoError("zlib deflate failed");
    }
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

// Orientation carried opaquely through read/write; the pipeline honors
// pixdim only.
struct NiftiMeta {
    std::int16_t qform_code = 0;
    std::int16_t sform_code = 0;
    float quatern_b = 0, quatern_c = 0, quatern_d = 0;
    float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
    std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
    float qfac = 1.0f;  // pixdim[0]
};

// Policy for deciding the loaded volume's kind. Auto promotes uint8 data
// whose values are all 0/1 to a Label mask; RequireMask additionally
// accepts int16/float32 masks and rejects anything not exactly binary
// after scaling.
enum class MaskPolicy { Auto, RequireMask };

inline Volume3D read_nifti(const Bytes& raw, MaskPolicy policy = MaskPolicy::Auto,
                           NiftiMeta* meta_out = nullptr) {
    const Bytes plain = is_gzip(raw) ? gzip_decompress(raw) : raw;
    if (plain.size() < sizeof(detail::NiftiHeader))
        throw ParseError("header truncated: file has " + std::to_string(plain.size()) +
                         " bytes, need 348");
    detail::NiftiHeader h;
    std::memcpy(&h, plain.data(), sizeof(h));

    if (h.sizeof_hdr != 348) {
        std::int32_t swapped;
        std::array<std::uint8_t, 4> b;
        std::memcpy(b.data(), &h.sizeof_hdr, 4);
        std::reverse(b.begin(), b.end());
        std::memcpy(&swapped, b.data(), 4);
        if (swapped == 348)
            throw ParseError("sizeof_hdr indicates big-endian file; only little-endian supported");
        throw ParseError("sizeof_hdr must be 348, got " + std::to_string(h.sizeof_hdr));
    }
    if (std::memcmp(h.magic, "n+1", 4) != 0)
        throw ParseError("magic must be \"n+1\\0\"");
    if (h.dim[0] != 3)
        throw ParseError("dim[0] must be 3 (volumetric), got " + std::to_string(h.dim[0]));
    for (int a = 1; a <= 3; ++a)
        if (h.dim[a] < 1)
            throw ParseError("dim[" + std::to_string(a) + "] must be >= 1, got " +
                             std::to_string(h.dim[a]));
    if (h.datatype != detail::kDtUint8 && h.datatype != detail::kDtInt16 &&
        h.datatype != detail::kDtFloat32)
        throw ParseError("datatype code " + std::to_string(h.datatype) +
                         " unsupported (need 2, 4, or 16)");
    for (int a = 1; a <= 3; ++a)
        if (!(h.pixdim[a] > 0.0f) || !std::isfinite(h.pixdim[a]))
            throw ParseError("pixdim[" + std::to_string(a) + "] must be positive, got " +
                             std::to_string(h.pixdim[a]));

    const i64 nx = h.dim[1], ny = h.dim[2], nz = h.dim[3];
    const i64 nvox = nx * ny * nz;
    const int elem = h.datatype == detail::kDtUint8 ? 1 : (h.datatype == detail::kDtInt16 ? 2 : 4);
    const std::size_t offset =
        h.vox_offset >= 348.0f ? static_cast<std::size_t>(h.vox_offset) : 352u;
    if (plain.size() < offset + static_cast<std::size_t>(nvox) * elem)
        throw ParseError("data section truncated: need " +
                         std::to_string(offset + static_cast<std::size_t>(nvox) * elem) +
                         " bytes, have " + std::to_string(plain.size()));

    if (meta_out) {
        meta_out->qform_code = h.qform_code;
        meta_out->sform_code = h.sform_code;
        meta_out->quatern_b = h.quatern_b;
        meta_out->quatern_c = h.quatern_c;
        meta_out->quatern_d = h.quatern_d;
        meta_out->qoffset_x = h.qoffset_x;
        meta_out->qoffset_y = h.qoffset_y;
        meta_out->qoffset_z = h.qoffset_z;
        std::memcpy(meta_out->srow_x.data(), h.srow_x, sizeof(h.srow_x));
        std::memcpy(meta_out->srow_y.data(), h.srow_y, sizeof(h.srow_y));
        std::memcpy(meta_out->srow_z.data(), h.srow_z, sizeof(h.srow_z));
        meta_out->qfac = h.pixdim[0];
    }

    const Shape3 shape{nz, ny, nx};
    const Spacing3 spacing{h.pixdim[3], h.pixdim[2], h.pixdim[1]};
    const std::uint8_t* src = plain.data() + offset;

    const bool scale = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);

    // File stores x fastest, matching the in-memory z-major layout.
    std::vector<float> vals(static_cast<std::size_t>(nvox));
    if (h.datatype == detail::kDtUint8) {
        for (i64 i = 0; i < nvox; ++i) vals[i] = static_cast<float>(src[i]);
    } else if (h.datatype == detail::kDtInt16) {
        for (i64 i = 0; i < nvox; ++i) {
            std::int16_t v;
            std::memcpy(&v, src + 2 * i, 2);
            vals[i] = static_cast<float>(v);
        }
    } else {
        std::memcpy(vals.data(), src, static_cast<std::size_t>(nvox) * 4);
    }
    if (scale)
        for (float& v : vals) v = h.scl_slope * v + h.scl_inter;

    bool binary = true;
    for (float v : vals)
        if (v != 0.0f && v != 1.0f) {
            binary = false;
            break;
        }

    const bool want_mask =
        policy == MaskPolicy::RequireMask || (h.datatype == detail::kDtUint8 && binary);
    if (policy == MaskPolicy::RequireMask && !binary)
        throw InvalidMaskError("mask volume has values other than 0/1 after scaling");

    if (want_mask) {
        std::vector<std::uint8_t> lab(vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) lab[i] = vals[i] != 0.0f ? 1 : 0;
        return Volume3D::label(shape, spacing, std::move(lab));
    }
    return Volume3D::intensity(shape, spacing, std::move(vals));
}

inline Bytes write_nifti(const Volume3D& vol, bool gzip = false,
                         const NiftiMeta* meta = nullptr) {
    detail::NiftiHeader h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(vol.shape().nx);
    h.dim[2] = static_cast<std::int16_t>(vol.shape().ny);
    h.dim[3] = static_cast<std::int16_t>(vol.shape().nz);
    for (int a = 4; a < 8; ++a) h.dim[a] = 1;
    h.datatype = vol.is_label() ? detail::kDtUint8 : detail::kDtFloat32;
    h.bitpix = vol.is_label() ? 8 : 32;
    h.pixdim[0] = meta ? meta->qfac : 1.0f;
    h.pixdim[1] = static_cast<float>(vol.spacing().sx);
    h.pixdim[2] = static_cast<float>(vol.spacing().sy);
    h.pixdim[3] = static_cast<float>(vol.spacing().sz);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // millimeters
    if (meta) {
        h.qform_code = meta->qform_code;
        h.sform_code = meta->sform_code;
        h.quatern_b = meta->quatern_b;
        h.quatern_c = meta->quatern_c;
        h.quatern_d = meta->quatern_d;
        h.qoffset_x = meta->qoffset_x;
        h.qoffset_y = meta->qoffset_y;
        h.qoffset_z = meta->qoffset_z;
        std::memcpy(h.srow_x, meta->srow_x.data(), sizeof(h.srow_x));
        std::memcpy(h.srow_y, meta->srow_y.data(), sizeof(h.srow_y));
        std::memcpy(h.srow_z, meta->srow_z.data(), sizeof(h.srow_z));
    }
    std::memcpy(h.magic, "n+1", 4);

    const std::size_t nvox = static_cast<std::size_t>(vol.size());
    Bytes out(352 + nvox * (vol.is_label() ? 1 : 4), 0);
    std::memcpy(out.data(), &h, sizeof(h));
    if (vol.is_label()) {
        std::memcpy(out.data() + 352, vol.labels().data(), nvox);
    } else {
        std::memcpy(out.data() + 352, vol.floats().data(), nvox * 4);
    }
    return gzip ? gzip_compress(out) : out;
}

inline Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const Bytes& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline Volume3D read_nifti_file(const std::string& path, MaskPolicy policy = MaskPolicy::Auto,
                                NiftiMeta* meta = nullptr) {
    return read_nifti(read_file(path), policy, meta);
}

inline void write_nifti_file(const std::string& path, const Volume3D& vol,
                             const NiftiMeta* meta = nullptr) {
    const bool gz = path.size() >= 3 && path.substr(path.size() - 3) == ".gz";
    write_file(path, write_nifti(vol, gz, meta));
}

}  // namespace petseg
