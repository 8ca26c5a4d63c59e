#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "petseg/errors.hpp"
#include "petseg/metrics.hpp"
#include "petseg/resample.hpp"
#include "petseg/volume.hpp"

namespace petseg {

// Whole-pipeline configuration. Defaults mirror the final-submission
// settings; everything is overridable from the config file and CLI flags.
struct PipelineConfig {
    Spacing3 target_spacing{1.5, 1.01821005, 1.01821005};

    NormStats norm{
        // CT clipped to a generous HU window, PET passed through.
        {0.0, 1.0, true, -1024.0, 3071.0},
        {0.0, 1.0, false, 0.0, 0.0},
    };

    Shape3 patch_shape{192, 192, 192};
    double step_fraction = 0.5;
    double sigma_scale = 1.0 / 8.0;
    std::vector<std::string> fold_weights;

    Connectivity connectivity = Connectivity::C26;
    double empty_empty_dice = 1.0;

    std::uint64_t seed = 0;
    int threads = 1;

    bool operator==(const PipelineConfig&) const = default;
};

inline bool operator==(const ChannelStats& a, const ChannelStats& b) {
    return a.mean == b.mean && a.stddev == b.stddev && a.clip == b.clip && a.clip_lo == b.clip_lo &&
           a.clip_hi == b.clip_hi;
}
inline bool operator==(const NormStats& a, const NormStats& b) {
    return a.ct == b.ct && a.pet == b.pet;
}

namespace detail {

struct ConfigValue {
    std::string raw;
    int line = 0;

    double as_number() const {
        try {
            std::size_t used = 0;
            double v = std::stod(raw, &used);
            if (used != raw.size()) throw std::invalid_argument(raw);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("line " + std::to_string(line) + ": expected a number, got '" + raw +
                              "'");
        }
    }

    bool as_bool() const {
        if (raw == "true") return true;
        if (raw == "false") return false;
        throw ConfigError("line " + std::to_string(line) + ": expected true/false, got '" + raw +
                          "'");
    }

    std::string as_string() const {
        if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
            return raw.substr(1, raw.size() - 2);
        throw ConfigError("line " + std::to_string(line) + ": expected a quoted string, got '" +
                          raw + "'");
    }

    std::vector<ConfigValue> as_array() const {
        if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
            throw ConfigError("line " + std::to_string(line) + ": expected an array, got '" + raw +
                              "'");
        std::vector<ConfigValue> out;
        std::string body = raw.substr(1, raw.size() - 2);
        std::string cur;
        for (char c : body) {
            if (c == ',') {
                out.push_back({trim(cur), line});
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!trim(cur).empty()) out.push_back({trim(cur), line});
        return out;
    }

    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t");
        if (b == std::string::npos) return "";
        auto e = s.find_last_not_of(" \t");
        return s.substr(b, e - b + 1);
    }
};

}  // namespace detail

inline PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    cfg.fold_weights.clear();
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments outside quotes
        bool quoted = false;
        std::string clean;
        for (char c : line) {
            if (c == '"') quoted = !quoted;
            if (c == '#' && !quoted) break;
            clean += c;
        }
        clean = detail::ConfigValue::trim(clean);
        if (clean.empty()) continue;
        if (clean.front() == '[') {
            if (clean.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = clean.substr(1, clean.size() - 2);
            if (section != "preprocess" && section != "normalization" && section != "inference" &&
                section != "metrics" && section != "runtime")
                throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            continue;
        }
        auto eq = clean.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::ConfigValue::trim(clean.substr(0, eq));
        const detail::ConfigValue val{detail::ConfigValue::trim(clean.substr(eq + 1)), lineno};

        auto spacing3 = [&] {
            auto a = val.as_array();
            if (a.size() != 3)
                throw ConfigError("line " + std::to_string(lineno) + ": " + key +
                                  " needs 3 components");
            return Spacing3{a[0].as_number(), a[1].as_number(), a[2].as_number()};
        };
        auto shape3 = [&] {
            auto a = val.as_array();
            if (a.size() != 3)
                throw ConfigError("line " + std::to_string(lineno) + ": " + key +
                                  " needs 3 components");
            return Shape3{static_cast<i64>(a[0].as_number()), static_cast<i64>(a[1].as_number()),
                          static_cast<i64>(a[2].as_number())};
        };

        const std::string qual = section + "." + key;
        if (qual == "preprocess.target_spacing") cfg.target_spacing = spacing3();
        else if (qual == "normalization.ct_mean") cfg.norm.ct.mean = val.as_number();
        else if (qual == "normalization.ct_std") cfg.norm.ct.stddev = val.as_number();
        else if (qual == "normalization.ct_clip") cfg.norm.ct.clip = val.as_bool();
        else if (qual == "normalization.ct_clip_lo") cfg.norm.ct.clip_lo = val.as_number();
        else if (qual == "normalization.ct_clip_hi") cfg.norm.ct.clip_hi = val.as_number();
        else if (qual == "normalization.pet_mean") cfg.norm.pet.mean = val.as_number();
        else if (qual == "normalization.pet_std") cfg.norm.pet.stddev = val.as_number();
        else if (qual == "inference.patch_shape") cfg.patch_shape = shape3();
        else if (qual == "inference.step_fraction") cfg.step_fraction = val.as_number();
        else if (qual == "inference.sigma_scale") cfg.sigma_scale = val.as_number();
        else if (qual == "inference.fold_weights") {
            for (const auto& v : val.as_array()) cfg.fold_weights.push_back(v.as_string());
        } else if (qual == "metrics.connectivity") {
            const int c = static_cast<int>(val.as_number());
            if (c != 6 && c != 18 && c != 26)
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": connectivity must be 6, 18 or 26");
            cfg.connectivity = static_cast<Connectivity>(c);
        } else if (qual == "metrics.empty_empty_dice") cfg.empty_empty_dice = val.as_number();
        else if (qual == "runtime.seed") cfg.seed = static_cast<std::uint64_t>(val.as_number());
        else if (qual == "runtime.threads") cfg.threads = static_cast<int>(val.as_number());
        else
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key +
                              "' in section [" + section + "]");
    }

    if (!(cfg.step_fraction > 0.0 && cfg.step_fraction <= 1.0))
        throw ConfigError("step_fraction must be in (0, 1]");
    if (!cfg.target_spacing.valid()) throw ConfigError("target_spacing must be positive");
    if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
    return cfg;
}

inline std::string serialize_config(const PipelineConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "[preprocess]\n";
    os << "target_spacing = [" << cfg.target_spacing.sz << ", " << cfg.target_spacing.sy << ", "
       << cfg.target_spacing.sx << "]\n\n";
    os << "[normalization]\n";
    os << "ct_mean = " << cfg.norm.ct.mean << "\n";
    os << "ct_std = " << cfg.norm.ct.stddev << "\n";
    os << "ct_clip = " << (cfg.norm.ct.clip ? "true" : "false") << "\n";
    os << "ct_clip_lo = " << cfg.norm.ct.clip_lo << "\n";
    os << "ct_clip_hi = " << cfg.norm.ct.clip_hi << "\n";
    os << "pet_mean = " << cfg.norm.pet.mean << "\n";
    os << "pet_std = " << cfg.norm.pet.stddev << "\n\n";
    os << "[inference]\n";
    os << "patch_shape = [" << cfg.patch_shape.nz << ", " << cfg.patch_shape.ny << ", "
       << cfg.patch_shape.nx << "]\n";
    os << "step_fraction = " << cfg.step_fraction << "\n";
    os << "sigma_scale = " << cfg.sigma_scale << "\n";
    os << "fold_weights = [";
    for (std::size_t i = 0; i < cfg.fold_weights.size(); ++i)
        os << (i ? ", " : "") << '"' << cfg.fold_weights[i] << '"';
    os << "]\n\n";
    os << "[metrics]\n";
    os << "connectivity = " << static_cast<int>(cfg.connectivity) << "\n";
    os << "empty_empty_dice = " << cfg.empty_empty_dice << "\n\n";
    os << "[runtime]\n";
    os << "seed = " << cfg.seed << "\n";
    os << "threads = " << cfg.threads << "\n";
    return os.str();
}

}  // namespace petseg
