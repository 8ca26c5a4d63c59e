#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "petseg/errors.hpp"

namespace petseg {

using i64 = std::int64_t;

// Grid sizes, z slowest / x fastest everywhere in the toolkit.
struct Shape3 {
    i64 nz = 0, ny = 0, nx = 0;

    i64 count() const { return nz * ny * nx; }
    bool operator==(const Shape3&) const = default;
    std::string str() const {
        return "(" + std::to_string(nz) + "," + std::to_string(ny) + "," + std::to_string(nx) + ")";
    }
};

// Voxel spacing in millimeters per axis, same (z, y, x) order.
struct Spacing3 {
    double sz = 1.0, sy = 1.0, sx = 1.0;

    bool operator==(const Spacing3&) const = default;
    bool valid() const {
        return std::isfinite(sz) && std::isfinite(sy) && std::isfinite(sx) && sz > 0 && sy > 0 &&
               sx > 0;
    }
    std::string str() const {
        return "(" + std::to_string(sz) + "," + std::to_string(sy) + "," + std::to_string(sx) + ")";
    }
};

// Physical volume of one voxel in milliliters.
inline double voxel_volume_ml(const Spacing3& s) {
    if (!s.valid()) throw InvalidSpacingError("voxel_volume_ml: spacing must be positive and finite, got " + s.str());
    return s.sz * s.sy * s.sx / 1000.0;
}

enum class VoxelKind { Intensity, Probability, Label };

inline const char* kind_name(VoxelKind k) {
    switch (k) {
        case VoxelKind::Intensity: return "Intensity";
        case VoxelKind::Probability: return "Probability";
        case VoxelKind::Label: return "Label";
    }
    return "?";
}

// Dense 3D scalar grid with physical spacing. Immutable after construction;
// transforms return new volumes. Intensity/Probability volumes store float32,
// Label volumes store uint8.
class Volume3D {
public:
    static Volume3D intensity(Shape3 shape, Spacing3 spacing, std::vector<float> data) {
        return Volume3D(shape, spacing, VoxelKind::Intensity, std::move(data));
    }

    static Volume3D probability(Shape3 shape, Spacing3 spacing, std::vector<float> data) {
        Volume3D v(shape, spacing, VoxelKind::Probability, std::move(data));
        for (float x : v.floats())
            if (!(x >= 0.0f && x <= 1.0f))
                throw InvalidVolumeError("Probability volume has value outside [0,1]: " +
                                         std::to_string(x));
        return v;
    }

    static Volume3D label(Shape3 shape, Spacing3 spacing, std::vector<std::uint8_t> data) {
        return Volume3D(shape, spacing, VoxelKind::Label, std::move(data));
    }

    const Shape3& shape() const { return shape_; }
    const Spacing3& spacing() const { return spacing_; }
    VoxelKind kind() const { return kind_; }
    i64 size() const { return shape_.count(); }

    bool is_label() const { return kind_ == VoxelKind::Label; }

    std::span<const float> floats() const {
        return std::get<std::vector<float>>(data_);
    }
    std::span<const std::uint8_t> labels() const {
        return std::get<std::vector<std::uint8_t>>(data_);
    }

    // Kind-agnostic flat read.
    double value(i64 flat) const {
        if (is_label()) return labels()[static_cast<std::size_t>(flat)];
        return floats()[static_cast<std::size_t>(flat)];
    }

    i64 flat_index(i64 z, i64 y, i64 x) const { return (z * shape_.ny + y) * shape_.nx + x; }

    // Bounds-checked accessor.
    double at(i64 z, i64 y, i64 x) const {
        if (z < 0 || z >= shape_.nz || y < 0 || y >= shape_.ny || x < 0 || x >= shape_.nx)
            throw IndexError("index (" + std::to_string(z) + "," + std::to_string(y) + "," +
                             std::to_string(x) + ") out of bounds for shape " + shape_.str());
        return value(flat_index(z, y, x));
    }

    bool same_grid(const Volume3D& other) const {
        return shape_ == other.shape_ && spacing_ == other.spacing_;
    }

private:
    Volume3D(Shape3 shape, Spacing3 spacing, VoxelKind kind,
             std::variant<std::vector<float>, std::vector<std::uint8_t>> data)
        : shape_(shape), spacing_(spacing), kind_(kind), data_(std::move(data)) {
        if (shape_.nz <= 0 || shape_.ny <= 0 || shape_.nx <= 0)
            throw InvalidVolumeError("shape components must be positive, got " + shape_.str());
        if (!spacing_.valid())
            throw InvalidSpacingError("spacing must be positive and finite, got " + spacing_.str());
        i64 n = std::visit([](const auto& v) { return static_cast<i64>(v.size()); }, data_);
        if (n != shape_.count())
            throw InvalidVolumeError("data length " + std::to_string(n) +
                                     " does not match shape " + shape_.str());
    }

    Shape3 shape_;
    Spacing3 spacing_;
    VoxelKind kind_;
    std::variant<std::vector<float>, std::vector<std::uint8_t>> data_;
};

// Ordered channels over one grid, e.g. {"CT", "PET"}.
class MultiChannelVolume {
public:
    MultiChannelVolume(std::vector<Volume3D> channels, std::vector<std::string> names)
        : channels_(std::move(channels)), names_(std::move(names)) {
        if (channels_.empty()) throw InvalidVolumeError("MultiChannelVolume needs at least one channel");
        if (names_.size() != channels_.size())
            throw InvalidVolumeError("channel name count does not match channel count");
        for (std::size_t i = 1; i < channels_.size(); ++i) {
            if (!channels_[i].same_grid(channels_[0]))
                throw AlignmentError("channel '" + names_[i] + "' grid " +
                                     channels_[i].shape().str() + " does not match channel '" +
                                     names_[0] + "' grid " + channels_[0].shape().str());
        }
    }

    std::size_t num_channels() const { return channels_.size(); }
    const Volume3D& channel(std::size_t i) const { return channels_.at(i); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const Shape3& shape() const { return channels_[0].shape(); }
    const Spacing3& spacing() const { return channels_[0].spacing(); }

private:
    std::vector<Volume3D> channels_;
    std::vector<std::string> names_;
};

}  // namespace petseg
