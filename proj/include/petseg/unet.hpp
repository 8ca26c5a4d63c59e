#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "petseg/errors.hpp"
#include "petseg/volume.hpp"

namespace petseg {

// Declarative U-Net description. The concrete layer inventory (and with it
// the parameter count and the weight-file layout) is derived from this.
struct ArchDescriptor {
    int num_stages = 5;
    std::vector<int> channels = {32, 64, 128, 256, 512};
    int in_channels = 2;
    int out_channels = 2;
    int kernel = 3;
    int convs_per_stage = 2;
    bool instance_norm = true;

    static ArchDescriptor vanilla() { return {}; }
    static ArchDescriptor shallow() { return {4, {16, 32, 64, 128}, 2, 2, 3, 2, true}; }
    static ArchDescriptor deeper() { return {6, {32, 64, 128, 256, 512, 1024}, 2, 2, 3, 2, true}; }

    void validate() const {
        if (num_stages < 2) throw DescriptorError("descriptor: num_stages must be >= 2");
        if (static_cast<int>(channels.size()) != num_stages)
            throw DescriptorError("descriptor: channels list length must equal num_stages");
        for (int i = 0; i + 1 < num_stages; ++i)
            if (channels[i + 1] != 2 * channels[i])
                throw DescriptorError("descriptor: channels must double at each stage, got " +
                                      std::to_string(channels[i]) + " -> " +
                                      std::to_string(channels[i + 1]));
        if (channels[0] < 1 || in_channels < 1 || out_channels < 1)
            throw DescriptorError("descriptor: channel counts must be positive");
        if (kernel < 1 || kernel % 2 == 0)
            throw DescriptorError("descriptor: kernel must be odd and positive");
        if (convs_per_stage < 1) throw DescriptorError("descriptor: convs_per_stage must be >= 1");
    }

    // Patch sides must be divisible by this for the pool/upsample ladder.
    i64 divisibility() const { return i64{1} << (num_stages - 1); }

    std::string canonical_text() const {
        std::ostringstream os;
        os << "unet stages=" << num_stages << " channels=";
        for (std::size_t i = 0; i < channels.size(); ++i)
            os << (i ? "," : "") << channels[i];
        os << " in=" << in_channels << " out=" << out_channels << " kernel=" << kernel
           << " convs=" << convs_per_stage << " norm=" << (instance_norm ? 1 : 0);
        return os.str();
    }

    static ArchDescriptor from_canonical_text(const std::string& text) {
        ArchDescriptor d;
        d.channels.clear();
        std::istringstream is(text);
        std::string tag;
        is >> tag;
        if (tag != "unet") throw ParseError("descriptor text: expected leading 'unet'");
        std::string kv;
        while (is >> kv) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) throw ParseError("descriptor text: bad token '" + kv + "'");
            std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
            if (key == "stages") d.num_stages = std::stoi(val);
            else if (key == "channels") {
                std::istringstream cs(val);
                std::string tok;
                while (std::getline(cs, tok, ',')) d.channels.push_back(std::stoi(tok));
            } else if (key == "in") d.in_channels = std::stoi(val);
            else if (key == "out") d.out_channels = std::stoi(val);
            else if (key == "kernel") d.kernel = std::stoi(val);
            else if (key == "convs") d.convs_per_stage = std::stoi(val);
            else if (key == "norm") d.instance_norm = val != "0";
            else throw ParseError("descriptor text: unknown key '" + key + "'");
        }
        d.validate();
        return d;
    }

    std::uint64_t fingerprint() const {
        // FNV-1a 64 over the canonical text.
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (char c : canonical_text()) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ull;
        }
        return h;
    }

    bool operator==(const ArchDescriptor&) const = default;
};

struct LayerSpec {
    std::string name;
    std::vector<i64> dims;

    i64 count() const {
        return std::accumulate(dims.begin(), dims.end(), i64{1}, std::multiplies<i64>());
    }
};

// Ordered layer list: encoder top-down, decoder deepest-first, final head.
// This order is also the on-disk tensor order of the UNW1 format.
inline std::vector<LayerSpec> layer_inventory(const ArchDescriptor& d) {
    d.validate();
    std::vector<LayerSpec> layers;
    const i64 k = d.kernel;
    auto conv_block = [&](const std::string& prefix, int c, i64 cin, i64 cout) {
        layers.push_back({prefix + ".conv" + std::to_string(c) + ".weight", {cout, cin, k, k, k}});
        layers.push_back({prefix + ".conv" + std::to_string(c) + ".bias", {cout}});
        if (d.instance_norm) {
            layers.push_back({prefix + ".norm" + std::to_string(c) + ".scale", {cout}});
            layers.push_back({prefix + ".norm" + std::to_string(c) + ".shift", {cout}});
        }
    };
    for (int s = 0; s < d.num_stages; ++s) {
        const std::string p = "enc" + std::to_string(s);
        i64 cin = s == 0 ? d.in_channels : d.channels[s - 1];
        for (int c = 0; c < d.convs_per_stage; ++c) {
            conv_block(p, c, cin, d.channels[s]);
            cin = d.channels[s];
        }
    }
    for (int l = d.num_stages - 2; l >= 0; --l) {
        const std::string p = "dec" + std::to_string(l);
        const i64 cl = d.channels[l], cup = d.channels[l + 1];
        layers.push_back({p + ".up.weight", {cup, cl, 2, 2, 2}});
        layers.push_back({p + ".up.bias", {cl}});
        i64 cin = 2 * cl;  // skip concat
        for (int c = 0; c < d.convs_per_stage; ++c) {
            conv_block(p, c, cin, cl);
            cin = cl;
        }
    }
    layers.push_back({"head.weight", {d.out_channels, d.channels[0], 1, 1, 1}});
    layers.push_back({"head.bias", {d.out_channels}});
    return layers;
}

inline i64 param_count(const ArchDescriptor& d) {
    i64 total = 0;
    for (const auto& l : layer_inventory(d)) total += l.count();
    return total;
}

struct NamedTensor {
    std::string name;
    std::vector<i64> dims;
    std::vector<float> data;
};

// Immutable parameter set for one fold, validated against its descriptor.
class WeightStore {
public:
    WeightStore(ArchDescriptor desc, std::vector<NamedTensor> tensors)
        : desc_(std::move(desc)), tensors_(std::move(tensors)) {
        const auto inv = layer_inventory(desc_);
        if (tensors_.size() != inv.size())
            throw DescriptorError("weight store: expected " + std::to_string(inv.size()) +
                                  " tensors, got " + std::to_string(tensors_.size()));
        for (std::size_t i = 0; i < inv.size(); ++i) {
            if (tensors_[i].name != inv[i].name)
                throw DescriptorError("weight store: tensor " + std::to_string(i) + " is '" +
                                      tensors_[i].name + "', expected '" + inv[i].name + "'");
            if (tensors_[i].dims != inv[i].dims)
                throw DescriptorError("weight store: tensor '" + tensors_[i].name +
                                      "' has wrong shape");
            if (static_cast<i64>(tensors_[i].data.size()) != inv[i].count())
                throw DescriptorError("weight store: tensor '" + tensors_[i].name +
                                      "' has wrong element count");
        }
    }

    // All weights/biases zero, norm affine at identity (scale 1, shift 0).
    static WeightStore zeros(const ArchDescriptor& desc) {
        std::vector<NamedTensor> ts;
        for (const auto& l : layer_inventory(desc)) {
            NamedTensor t{l.name, l.dims, std::vector<float>(l.count(), 0.0f)};
            if (l.name.ends_with(".scale")) std::fill(t.data.begin(), t.data.end(), 1.0f);
            ts.push_back(std::move(t));
        }
        return WeightStore(desc, std::move(ts));
    }

    template <typename Gen>
    static WeightStore generate(const ArchDescriptor& desc, Gen&& gen) {
        std::vector<NamedTensor> ts;
        for (const auto& l : layer_inventory(desc)) {
            NamedTensor t{l.name, l.dims, std::vector<float>(l.count())};
            for (float& v : t.data) v = gen();
            ts.push_back(std::move(t));
        }
        return WeightStore(desc, std::move(ts));
    }

    const ArchDescriptor& descriptor() const { return desc_; }
    std::uint64_t fingerprint() const { return desc_.fingerprint(); }
    std::size_t num_tensors() const { return tensors_.size(); }
    const NamedTensor& tensor(std::size_t i) const { return tensors_.at(i); }

    const NamedTensor& tensor(const std::string& name) const {
        for (const auto& t : tensors_)
            if (t.name == name) return t;
        throw DescriptorError("weight store: no tensor named '" + name + "'");
    }

    NamedTensor& mutable_tensor(const std::string& name) {
        for (auto& t : tensors_)
            if (t.name == name) return t;
        throw DescriptorError("weight store: no tensor named '" + name + "'");
    }

private:
    ArchDescriptor desc_;
    std::vector<NamedTensor> tensors_;
};

// Channel-major 4D feature map over a 3D grid.
struct Tensor4 {
    int channels = 0;
    Shape3 shape;
    std::vector<float> data;  // [c][z][y][x]

    Tensor4() = default;
    Tensor4(int c, Shape3 s) : channels(c), shape(s) {
        data.assign(static_cast<std::size_t>(c) * s.count(), 0.0f);
    }

    i64 plane() const { return shape.count(); }
    float* chan(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
    const float* chan(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }
    float& at(int c, i64 z, i64 y, i64 x) {
        return data[static_cast<std::size_t>(c) * plane() + (z * shape.ny + y) * shape.nx + x];
    }
    float at(int c, i64 z, i64 y, i64 x) const {
        return data[static_cast<std::size_t>(c) * plane() + (z * shape.ny + y) * shape.nx + x];
    }
};

namespace nn {

// 3D convolution, zero padding k/2, stride 1.
// w layout: [cout][cin][kz][ky][kx].
inline Tensor4 conv3d(const Tensor4& in, const std::vector<float>& w, const std::vector<float>& b,
                      int cout, int k) {
    const Shape3 s = in.shape;
    const int pad = k / 2;
    Tensor4 out(cout, s);
    const i64 ksz = static_cast<i64>(k) * k * k;
    for (int co = 0; co < cout; ++co) {
        float* op = out.chan(co);
        for (int ci = 0; ci < in.channels; ++ci) {
            const float* ip = in.chan(ci);
            const float* wp = w.data() + (static_cast<std::size_t>(co) * in.channels + ci) * ksz;
            for (i64 z = 0; z < s.nz; ++z)
                for (i64 y = 0; y < s.ny; ++y)
                    for (i64 x = 0; x < s.nx; ++x) {
                        double acc = 0.0;
                        for (int kz = 0; kz < k; ++kz) {
                            const i64 iz = z + kz - pad;
                            if (iz < 0 || iz >= s.nz) continue;
                            for (int ky = 0; ky < k; ++ky) {
                                const i64 iy = y + ky - pad;
                                if (iy < 0 || iy >= s.ny) continue;
                                const i64 x0 = std::max<i64>(0, pad - x);
                                const i64 x1 = std::min<i64>(k, s.nx + pad - x);
                                const float* row = ip + (iz * s.ny + iy) * s.nx + x - pad;
                                const float* wrow = wp + (static_cast<i64>(kz) * k + ky) * k;
                                for (i64 kx = x0; kx < x1; ++kx) acc += wrow[kx] * row[kx];
                            }
                        }
                        op[(z * s.ny + y) * s.nx + x] += static_cast<float>(acc);
                    }
        }
        const float bias = b[co];
        for (i64 i = 0; i < out.plane(); ++i) op[i] += bias;
    }
    return out;
}

// Transposed convolution, kernel 2, stride 2, output side = 2 * input side.
// w layout: [cin][cout][2][2][2].
inline Tensor4 tconv2(const Tensor4& in, const std::vector<float>& w, const std::vector<float>& b,
                      int cout) {
    const Shape3 s = in.shape;
    const Shape3 os{s.nz * 2, s.ny * 2, s.nx * 2};
    Tensor4 out(cout, os);
    for (int co = 0; co < cout; ++co) {
        float* op = out.chan(co);
        for (int ci = 0; ci < in.channels; ++ci) {
            const float* ip = in.chan(ci);
            const float* wp = w.data() + (static_cast<std::size_t>(ci) * cout + co) * 8;
            for (i64 z = 0; z < s.nz; ++z)
                for (i64 y = 0; y < s.ny; ++y)
                    for (i64 x = 0; x < s.nx; ++x) {
                        const float v = ip[(z * s.ny + y) * s.nx + x];
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx)
                                    op[((2 * z + dz) * os.ny + 2 * y + dy) * os.nx + 2 * x + dx] +=
                                        v * wp[(dz * 2 + dy) * 2 + dx];
                    }
        }
        const float bias = b[co];
        for (i64 i = 0; i < out.plane(); ++i) op[i] += bias;
    }
    return out;
}

// 2x2x2 max pooling, stride 2. Sides must be even.
inline Tensor4 maxpool2(const Tensor4& in) {
    const Shape3 s = in.shape;
    if (s.nz % 2 || s.ny % 2 || s.nx % 2)
        throw ShapeError("maxpool2: all sides must be even, got " + s.str());
    const Shape3 os{s.nz / 2, s.ny / 2, s.nx / 2};
    Tensor4 out(in.channels, os);
    for (int c = 0; c < in.channels; ++c) {
        const float* ip = in.chan(c);
        float* op = out.chan(c);
        for (i64 z = 0; z < os.nz; ++z)
            for (i64 y = 0; y < os.ny; ++y)
                for (i64 x = 0; x < os.nx; ++x) {
                    float m = -std::numeric_limits<float>::infinity();
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                m = std::max(m, ip[((2 * z + dz) * s.ny + 2 * y + dy) * s.nx +
                                                   2 * x + dx]);
                    op[(z * os.ny + y) * os.nx + x] = m;
                }
    }
    return out;
}

// Per-channel normalization over the spatial extent, learned affine.
inline Tensor4 instance_norm(const Tensor4& in, const std::vector<float>& scale,
                             const std::vector<float>& shift, double eps = 1e-5) {
    Tensor4 out(in.channels, in.shape);
    const i64 n = in.plane();
    for (int c = 0; c < in.channels; ++c) {
        const float* ip = in.chan(c);
        float* op = out.chan(c);
        double mean = 0.0;
        for (i64 i = 0; i < n; ++i) mean += ip[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (i64 i = 0; i < n; ++i) {
            const double d = ip[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        const double g = scale[c], bta = shift[c];
        for (i64 i = 0; i < n; ++i)
            op[i] = static_cast<float>((ip[i] - mean) * inv * g + bta);
    }
    return out;
}

inline Tensor4 leaky_relu(Tensor4 in, float slope = 0.01f) {
    for (float& v : in.data)
        if (v < 0) v *= slope;
    return in;
}

inline Tensor4 concat(const Tensor4& a, const Tensor4& b) {
    if (!(a.shape == b.shape)) throw ShapeError("concat: spatial shapes differ");
    Tensor4 out(a.channels + b.channels, a.shape);
    std::memcpy(out.data.data(), a.data.data(), a.data.size() * sizeof(float));
    std::memcpy(out.data.data() + a.data.size(), b.data.data(), b.data.size() * sizeof(float));
    return out;
}

}  // namespace nn

// Per-voxel softmax across channels, max-shifted for stability.
inline Tensor4 softmax_channels(const Tensor4& logits) {
    if (logits.channels < 1) throw ShapeError("softmax: need at least one channel");
    for (float v : logits.data)
        if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
    Tensor4 out(logits.channels, logits.shape);
    const i64 n = logits.plane();
    for (i64 i = 0; i < n; ++i) {
        float mx = logits.chan(0)[i];
        for (int c = 1; c < logits.channels; ++c) mx = std::max(mx, logits.chan(c)[i]);
        double sum = 0.0;
        for (int c = 0; c < logits.channels; ++c)
            sum += std::exp(static_cast<double>(logits.chan(c)[i]) - mx);
        for (int c = 0; c < logits.channels; ++c)
            out.chan(c)[i] = static_cast<float>(
                std::exp(static_cast<double>(logits.chan(c)[i]) - mx) / sum);
    }
    return out;
}

// Full encoder/decoder forward pass. Spatial output shape equals the input
// patch shape; channel count equals out_channels.
inline Tensor4 forward(const WeightStore& store, const Tensor4& patch) {
    const ArchDescriptor& d = store.descriptor();
    if (patch.channels != d.in_channels)
        throw ShapeError("forward: patch has " + std::to_string(patch.channels) +
                         " channels, descriptor wants " + std::to_string(d.in_channels));
    const i64 div = d.divisibility();
    const Shape3& s = patch.shape;
    if (s.nz % div || s.ny % div || s.nx % div)
        throw ShapeError("forward: patch sides must be divisible by " + std::to_string(div) +
                         ", got " + s.str());

    auto stage = [&](Tensor4 x, const std::string& prefix, int cout) {
        for (int c = 0; c < d.convs_per_stage; ++c) {
            const std::string cs = std::to_string(c);
            x = nn::conv3d(x, store.tensor(prefix + ".conv" + cs + ".weight").data,
                           store.tensor(prefix + ".conv" + cs + ".bias").data, cout, d.kernel);
            if (d.instance_norm)
                x = nn::instance_norm(x, store.tensor(prefix + ".norm" + cs + ".scale").data,
                                      store.tensor(prefix + ".norm" + cs + ".shift").data);
            x = nn::leaky_relu(std::move(x));
        }
        return x;
    };

    std::vector<Tensor4> skips;
    Tensor4 x = patch;
    for (int st = 0; st < d.num_stages; ++st) {
        if (st > 0) x = nn::maxpool2(x);
        x = stage(std::move(x), "enc" + std::to_string(st), d.channels[st]);
        if (st < d.num_stages - 1) skips.push_back(x);
    }
    for (int l = d.num_stages - 2; l >= 0; --l) {
        const std::string p = "dec" + std::to_string(l);
        x = nn::tconv2(x, store.tensor(p + ".up.weight").data, store.tensor(p + ".up.bias").data,
                       d.channels[l]);
        x = nn::concat(skips[l], x);
        x = stage(std::move(x), p, d.channels[l]);
    }
    return nn::conv3d(x, store.tensor("head.weight").data, store.tensor("head.bias").data,
                      d.out_channels, 1);
}

inline Tensor4 to_tensor(const MultiChannelVolume& mc) {
    Tensor4 t(static_cast<int>(mc.num_channels()), mc.shape());
    for (std::size_t c = 0; c < mc.num_channels(); ++c) {
        auto src = mc.channel(c).floats();
        std::copy(src.begin(), src.end(), t.chan(static_cast<int>(c)));
    }
    return t;
}

inline Tensor4 forward(const WeightStore& store, const MultiChannelVolume& patch) {
    return forward(store, to_tensor(patch));
}

// ---- UNW1 binary weight format ----
// 4-byte magic "UNW1", u32 version, length-prefixed canonical descriptor
// text, u32 tensor count, then per tensor: length-prefixed name, u32 rank,
// u32 dims, raw little-endian float32 data.

inline std::vector<std::uint8_t> save_weights(const WeightStore& store) {
    std::vector<std::uint8_t> out;
    auto put_u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    out.insert(out.end(), {'U', 'N', 'W', '1'});
    put_u32(1);
    const std::string text = store.descriptor().canonical_text();
    put_u32(static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    put_u32(static_cast<std::uint32_t>(store.num_tensors()));
    for (std::size_t i = 0; i < store.num_tensors(); ++i) {
        const NamedTensor& t = store.tensor(i);
        put_u32(static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_u32(static_cast<std::uint32_t>(t.dims.size()));
        for (i64 dim : t.dims) put_u32(static_cast<std::uint32_t>(dim));
        const std::size_t off = out.size();
        out.resize(off + t.data.size() * 4);
        std::memcpy(out.data() + off, t.data.data(), t.data.size() * 4);
    }
    return out;
}

inline WeightStore load_weights(const std::vector<std::uint8_t>& in) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n, const std::string& what) {
        if (pos + n > in.size())
            throw ParseError("UNW1 truncated while reading " + what);
    };
    auto get_u32 = [&](const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
        pos += 4;
        return v;
    };
    need(4, "magic");
    if (std::memcmp(in.data(), "UNW1", 4) != 0) throw ParseError("UNW1 magic mismatch");
    pos = 4;
    const std::uint32_t version = get_u32("version");
    if (version != 1) throw ParseError("UNW1 unsupported version " + std::to_string(version));
    const std::uint32_t tlen = get_u32("descriptor length");
    need(tlen, "descriptor text");
    const std::string text(in.begin() + pos, in.begin() + pos + tlen);
    pos += tlen;
    const ArchDescriptor desc = ArchDescriptor::from_canonical_text(text);
    const std::uint32_t ntensors = get_u32("tensor count");
    std::vector<NamedTensor> tensors;
    tensors.reserve(ntensors);
    for (std::uint32_t i = 0; i < ntensors; ++i) {
        const std::uint32_t nlen = get_u32("tensor name length");
        need(nlen, "tensor name");
        NamedTensor t;
        t.name.assign(in.begin() + pos, in.begin() + pos + nlen);
        pos += nlen;
        const std::uint32_t rank = get_u32("rank of '" + t.name + "'");
        i64 count = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint32_t dim = get_u32("dims of '" + t.name + "'");
            t.dims.push_back(dim);
            count *= dim;
        }
        need(static_cast<std::size_t>(count) * 4, "data of layer '" + t.name + "'");
        t.data.resize(static_cast<std::size_t>(count));
        std::memcpy(t.data.data(), in.data() + pos, static_cast<std::size_t>(count) * 4);
        pos += static_cast<std::size_t>(count) * 4;
        tensors.push_back(std::move(t));
    }
    return WeightStore(desc, std::move(tensors));
}

}  // namespace petseg
