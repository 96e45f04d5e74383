#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "u3m/config.hpp"
#include "u3m/model.hpp"
#include "u3m/netpbm.hpp"

namespace u3m {

/// Checkpoint layout (all integers little-endian):
///   magic "U3M\x01" | version u32 | config length u64 + UTF-8 config text |
///   parameter records (name length u64, name bytes, rank u64, dims u64...,
///   payload float32...) until 4 bytes remain | CRC-32 of everything before.
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'U', '3', 'M', '\x01'};

namespace detail {

inline uint32_t crc32_bytes(const uint8_t* data, size_t n) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct ByteReader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    void need(size_t n) const {
        if (b.size() - pos < n) throw data_error("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(b.begin() + static_cast<long>(pos), b.begin() + static_cast<long>(pos + n));
        pos += n;
        return s;
    }
};

}  // namespace detail

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct CheckpointData {
    ModelConfig config;
    std::vector<NamedTensor> params;
};

/// Serializes config + parameters; values are stored as 32-bit floats.
inline std::vector<uint8_t> encode_checkpoint(const ModelConfig& cfg, const ParamStore& params) {
    std::vector<uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
    detail::put_u32(out, kCheckpointVersion);
    std::string cfg_text = serialize_config(cfg);
    detail::put_u64(out, cfg_text.size());
    out.insert(out.end(), cfg_text.begin(), cfg_text.end());
    for (const Parameter& p : params.items()) {
        detail::put_u64(out, p.name.size());
        out.insert(out.end(), p.name.begin(), p.name.end());
        detail::put_u64(out, p.value.rank());
        for (size_t d : p.value.shape()) detail::put_u64(out, d);
        const double* d = p.value.data();
        for (size_t i = 0; i < p.value.numel(); ++i) detail::put_f32(out, static_cast<float>(d[i]));
    }
    detail::put_u32(out, detail::crc32_bytes(out.data(), out.size()));
    return out;
}

inline CheckpointData decode_checkpoint(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12) throw data_error("checkpoint truncated");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw data_error("bad checkpoint magic");

    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i) stored_crc |= static_cast<uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
    if (detail::crc32_bytes(bytes.data(), bytes.size() - 4) != stored_crc)
        throw data_error("checkpoint CRC mismatch (file corrupt or truncated)");

    detail::ByteReader r{bytes, 4};
    uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw data_error("unsupported checkpoint version " + std::to_string(version));

    CheckpointData ck;
    uint64_t cfg_len = r.u64();
    ck.config = parse_config_text(r.str(cfg_len));

    size_t payload_end = bytes.size() - 4;
    while (r.pos < payload_end) {
        NamedTensor nt;
        uint64_t name_len = r.u64();
        nt.name = r.str(name_len);
        uint64_t rank = r.u64();
        Shape shape(rank);
        for (uint64_t i = 0; i < rank; ++i) shape[i] = r.u64();
        Tensor t(shape);
        double* d = t.mut();
        for (size_t i = 0; i < t.numel(); ++i) d[i] = static_cast<double>(r.f32());
        nt.value = std::move(t);
        ck.params.push_back(std::move(nt));
    }
    if (r.pos != payload_end) throw data_error("checkpoint has trailing garbage");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    write_file_bytes(path, encode_checkpoint(model.config(), model.params()));
}

/// Loads parameter values into an existing model; every stored record must
/// match a parameter of the same name and shape and cover all of them.
inline void load_checkpoint_into(const CheckpointData& ck, Model& model) {
    size_t assigned = 0;
    for (const NamedTensor& nt : ck.params) {
        if (!model.params().contains(nt.name))
            throw data_error("checkpoint parameter " + nt.name + " does not exist in this model");
        Tensor& dst = model.params().tensor(nt.name);
        if (dst.shape() != nt.value.shape())
            throw data_error("checkpoint parameter " + nt.name + " has shape " + shape_str(nt.value.shape()) +
                             ", model expects " + shape_str(dst.shape()));
        dst = nt.value;
        ++assigned;
    }
    if (assigned != model.params().size())
        throw data_error("checkpoint provides " + std::to_string(assigned) + " parameters, model has " +
                         std::to_string(model.params().size()));
}

/// Builds the model the checkpoint describes and restores its parameters.
inline Model load_checkpoint(const std::filesystem::path& path) {
    CheckpointData ck = decode_checkpoint(read_file_bytes(path));
    Model model(ck.config);
    load_checkpoint_into(ck, model);
    return model;
}

}  // namespace u3m
