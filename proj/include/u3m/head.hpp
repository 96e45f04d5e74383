#pragma once

#include <array>
#include <string>
#include <vector>

#include "u3m/ops.hpp"
#include "u3m/params.hpp"
#include "u3m/segmap.hpp"

namespace u3m {

/// Shared MLP decoder configuration.
struct HeadConfig {
    size_t decoder_dim = 64;
    size_t num_classes = 3;

    void validate() const {
        if (decoder_dim < 1) throw config_error("decoder_dim must be >= 1");
        if (num_classes < 2) throw config_error("num_classes must be >= 2");
    }
};

/// One parameter set regardless of modality count; the head never sees
/// modality identity.
inline void init_head_params(ParamStore& ps, const std::string& prefix, const std::array<size_t, 4>& stage_channels,
                             const HeadConfig& cfg, Rng& rng) {
    cfg.validate();
    for (size_t i = 0; i < 4; ++i) {
        std::string sp = prefix + ".proj" + std::to_string(i + 1);
        ps.add(sp + ".w", init_conv_weight({cfg.decoder_dim, stage_channels[i], 1, 1}, rng));
        ps.add(sp + ".b", Tensor::zeros({cfg.decoder_dim}));
    }
    ps.add(prefix + ".fuse.w", init_conv_weight({cfg.decoder_dim, 4 * cfg.decoder_dim, 1, 1}, rng));
    ps.add(prefix + ".fuse.b", Tensor::zeros({cfg.decoder_dim}));
    ps.add(prefix + ".cls.w", init_conv_weight({cfg.num_classes, cfg.decoder_dim, 1, 1}, rng));
    ps.add(prefix + ".cls.b", Tensor::zeros({cfg.num_classes}));
}

/// Pointwise projection of one fused stage to the common decoder width.
inline Tensor stage_project(const Tensor& fused, ParamView& pv, const std::string& prefix, size_t stage) {
    std::string sp = prefix + ".proj" + std::to_string(stage);
    return conv2d(fused, pv[sp + ".w"], pv[sp + ".b"], 1, 0);
}

/// Decoder: project each stage, bilinearly upsample to 1/4 scale, concat,
/// fuse to decoder_dim, classify to N channels, upsample logits to full
/// resolution. Returns [B, N, H, W].
inline Tensor decode(const std::array<Tensor, 4>& stages, ParamView& pv, const std::string& prefix,
                     const HeadConfig& cfg, size_t full_h, size_t full_w) {
    cfg.validate();
    size_t h4 = full_h / 4, w4 = full_w / 4;
    for (size_t i = 0; i < 4; ++i) {
        size_t denom = 4ull << i;
        if (stages[i].extent(2) * denom != full_h || stages[i].extent(3) * denom != full_w)
            throw shape_error("stage " + std::to_string(i + 1) + " feature " + shape_str(stages[i].shape()) +
                              " is not 1/" + std::to_string(denom) + " of " + std::to_string(full_h) + "x" +
                              std::to_string(full_w));
    }
    std::vector<Tensor> projected;
    for (size_t i = 0; i < 4; ++i) {
        Tensor p = stage_project(stages[i], pv, prefix, i + 1);
        projected.push_back(bilinear_upsample(p, h4, w4));
    }
    Tensor fused = concat(projected, 1);
    fused = conv2d(fused, pv[prefix + ".fuse.w"], pv[prefix + ".fuse.b"], 1, 0);
    Tensor logits = conv2d(fused, pv[prefix + ".cls.w"], pv[prefix + ".cls.b"], 1, 0);
    return bilinear_upsample(logits, full_h, full_w);
}

/// Per-pixel argmax over the class axis; ties break toward the smallest
/// class index.
inline std::vector<SegMap> predict_labels(const Tensor& logits) {
    if (logits.rank() != 4) throw shape_error("predict_labels expects [B,N,H,W], got " + shape_str(logits.shape()));
    size_t B = logits.extent(0), N = logits.extent(1), H = logits.extent(2), W = logits.extent(3);
    if (N < 2) throw shape_error("predict_labels needs at least two classes");
    std::vector<SegMap> out;
    out.reserve(B);
    const double* d = logits.data();
    for (size_t b = 0; b < B; ++b) {
        SegMap m(H, W);
        for (size_t p = 0; p < H * W; ++p) {
            size_t best = 0;
            double bv = d[(b * N) * H * W + p];
            for (size_t c = 1; c < N; ++c) {
                double v = d[(b * N + c) * H * W + p];
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            m.v[p] = static_cast<int32_t>(best);
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace u3m
