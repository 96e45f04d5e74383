#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "u3m/model.hpp"

namespace u3m {

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline size_t parse_size(const std::string& v, size_t line, const std::string& key) {
    try {
        size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument("");
        return static_cast<size_t>(x);
    } catch (...) {
        throw config_error("line " + std::to_string(line) + ": key '" + key + "' needs a non-negative integer, got '" +
                           v + "'");
    }
}

inline double parse_double(const std::string& v, size_t line, const std::string& key) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw config_error("line " + std::to_string(line) + ": key '" + key + "' needs a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, size_t line, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("line " + std::to_string(line) + ": key '" + key + "' needs true/false, got '" + v + "'");
}

template <size_t N>
inline std::array<size_t, N> parse_size_array(const std::string& v, size_t line, const std::string& key) {
    std::vector<std::string> parts = split_csv(v);
    if (parts.size() != N)
        throw config_error("line " + std::to_string(line) + ": key '" + key + "' needs " + std::to_string(N) +
                           " comma-separated entries, got " + std::to_string(parts.size()));
    std::array<size_t, N> out{};
    for (size_t i = 0; i < N; ++i) out[i] = parse_size(parts[i], line, key);
    return out;
}

inline std::vector<size_t> parse_size_list(const std::string& v, size_t line, const std::string& key) {
    std::vector<size_t> out;
    for (const std::string& p : split_csv(v)) out.push_back(parse_size(p, line, key));
    return out;
}

template <size_t N>
inline std::string join(const std::array<size_t, N>& a) {
    std::string s;
    for (size_t i = 0; i < N; ++i) {
        if (i) s += ",";
        s += std::to_string(a[i]);
    }
    return s;
}

inline std::string join(const std::vector<size_t>& a) {
    std::string s;
    for (size_t i = 0; i < a.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(a[i]);
    }
    return s;
}

}  // namespace detail

/// Flat-section key=value config text. Unknown keys are errors (citing the
/// line); missing keys keep their documented defaults; an empty file is the
/// all-defaults desk-scale config (M=1).
inline ModelConfig parse_config_text(const std::string& text) {
    ModelConfig cfg;
    bool saw_in_channels = false;
    std::string section = "model";
    std::istringstream in(text);
    std::string raw;
    size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section != "model" && section != "encoder" && section != "fusion" && section != "head" &&
                section != "train")
                throw config_error("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        std::string qual = section + "." + key;

        if (qual == "model.modalities") {
            cfg.modalities = detail::parse_size(val, lineno, key);
        } else if (qual == "model.in_channels") {
            cfg.in_channels = detail::parse_size_list(val, lineno, key);
            saw_in_channels = true;
        } else if (qual == "model.num_classes") {
            cfg.head.num_classes = detail::parse_size(val, lineno, key);
        } else if (qual == "encoder.stage_channels") {
            cfg.encoder.stage_channels = detail::parse_size_array<4>(val, lineno, key);
        } else if (qual == "encoder.stage_depths") {
            cfg.encoder.stage_depths = detail::parse_size_array<4>(val, lineno, key);
        } else if (qual == "encoder.heads") {
            cfg.encoder.heads = detail::parse_size_array<4>(val, lineno, key);
        } else if (qual == "encoder.sr_ratios") {
            cfg.encoder.sr_ratios = detail::parse_size_array<4>(val, lineno, key);
        } else if (qual == "encoder.patch_sizes") {
            cfg.encoder.patch_sizes = detail::parse_size_array<4>(val, lineno, key);
        } else if (qual == "encoder.patch_strides") {
            cfg.encoder.patch_strides = detail::parse_size_array<4>(val, lineno, key);
        } else if (qual == "encoder.ffn_expand") {
            cfg.encoder.ffn_expand = detail::parse_size(val, lineno, key);
        } else if (qual == "fusion.pool_bins") {
            cfg.fusion.pool_bins = detail::parse_size_list(val, lineno, key);
        } else if (qual == "fusion.conv_kernels") {
            cfg.fusion.conv_kernels = detail::parse_size_list(val, lineno, key);
        } else if (qual == "fusion.ca_reduction") {
            cfg.fusion.ca_reduction = detail::parse_size(val, lineno, key);
        } else if (qual == "head.decoder_dim") {
            cfg.head.decoder_dim = detail::parse_size(val, lineno, key);
        } else if (qual == "train.lr") {
            cfg.train.lr = detail::parse_double(val, lineno, key);
        } else if (qual == "train.schedule") {
            if (val == "constant")
                cfg.train.schedule = LrSchedule::constant;
            else if (val == "cosine")
                cfg.train.schedule = LrSchedule::cosine;
            else
                throw config_error("line " + std::to_string(lineno) + ": schedule must be constant or cosine");
        } else if (qual == "train.batch_size") {
            cfg.train.batch_size = detail::parse_size(val, lineno, key);
        } else if (qual == "train.epochs") {
            cfg.train.epochs = detail::parse_size(val, lineno, key);
        } else if (qual == "train.seed") {
            cfg.train.seed = static_cast<uint64_t>(detail::parse_size(val, lineno, key));
        } else if (qual == "train.freeze_encoders") {
            cfg.train.freeze_encoders = detail::parse_bool(val, lineno, key);
        } else if (qual == "train.hflip") {
            cfg.train.aug_hflip = detail::parse_bool(val, lineno, key);
        } else if (qual == "train.rotate") {
            cfg.train.aug_rotate = detail::parse_bool(val, lineno, key);
        } else if (qual == "train.scale") {
            cfg.train.aug_scale = detail::parse_bool(val, lineno, key);
        } else if (qual == "train.ignore_index") {
            cfg.train.ignore_index = static_cast<int>(detail::parse_size(val, lineno, key));
        } else if (qual == "train.pad_to_32") {
            cfg.train.pad_to_32 = detail::parse_bool(val, lineno, key);
        } else {
            throw config_error("line " + std::to_string(lineno) + ": unknown key '" + key + "' in section [" +
                               section + "]");
        }
    }

    if (!saw_in_channels && cfg.modalities >= 1) {
        // default: first modality 3-channel, the rest 1-channel
        cfg.in_channels.assign(cfg.modalities, 1);
        cfg.in_channels[0] = 3;
    }
    cfg.validate();
    return cfg;
}

inline ModelConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Canonical serialization; parse_config_text(serialize_config(c)) == c.
inline std::string serialize_config(const ModelConfig& cfg) {
    std::ostringstream o;
    o << "[model]\n";
    o << "modalities = " << cfg.modalities << "\n";
    o << "in_channels = " << detail::join(cfg.in_channels) << "\n";
    o << "num_classes = " << cfg.head.num_classes << "\n";
    o << "[encoder]\n";
    o << "stage_channels = " << detail::join(cfg.encoder.stage_channels) << "\n";
    o << "stage_depths = " << detail::join(cfg.encoder.stage_depths) << "\n";
    o << "heads = " << detail::join(cfg.encoder.heads) << "\n";
    o << "sr_ratios = " << detail::join(cfg.encoder.sr_ratios) << "\n";
    o << "patch_sizes = " << detail::join(cfg.encoder.patch_sizes) << "\n";
    o << "patch_strides = " << detail::join(cfg.encoder.patch_strides) << "\n";
    o << "ffn_expand = " << cfg.encoder.ffn_expand << "\n";
    o << "[fusion]\n";
    o << "pool_bins = " << detail::join(cfg.fusion.pool_bins) << "\n";
    o << "conv_kernels = " << detail::join(cfg.fusion.conv_kernels) << "\n";
    o << "ca_reduction = " << cfg.fusion.ca_reduction << "\n";
    o << "[head]\n";
    o << "decoder_dim = " << cfg.head.decoder_dim << "\n";
    o << "[train]\n";
    std::ostringstream lr;
    lr.precision(17);
    lr << cfg.train.lr;
    o << "lr = " << lr.str() << "\n";
    o << "schedule = " << (cfg.train.schedule == LrSchedule::cosine ? "cosine" : "constant") << "\n";
    o << "batch_size = " << cfg.train.batch_size << "\n";
    o << "epochs = " << cfg.train.epochs << "\n";
    o << "seed = " << cfg.train.seed << "\n";
    o << "freeze_encoders = " << (cfg.train.freeze_encoders ? "true" : "false") << "\n";
    o << "hflip = " << (cfg.train.aug_hflip ? "true" : "false") << "\n";
    o << "rotate = " << (cfg.train.aug_rotate ? "true" : "false") << "\n";
    o << "scale = " << (cfg.train.aug_scale ? "true" : "false") << "\n";
    o << "ignore_index = " << cfg.train.ignore_index << "\n";
    o << "pad_to_32 = " << (cfg.train.pad_to_32 ? "true" : "false") << "\n";
    return o.str();
}

}  // namespace u3m
