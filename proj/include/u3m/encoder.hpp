#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "u3m/ops.hpp"
#include "u3m/params.hpp"

namespace u3m {

/// Hierarchical mix-transformer encoder configuration. The defaults are the
/// desk-scale setup: gradient checks and overfit runs finish in seconds and
/// every divisibility constraint holds for inputs divisible by 32.
struct EncoderConfig {
    size_t in_channels = 3;
    std::array<size_t, 4> stage_channels{16, 32, 64, 128};
    std::array<size_t, 4> stage_depths{1, 1, 1, 1};
    std::array<size_t, 4> heads{1, 2, 4, 8};
    std::array<size_t, 4> sr_ratios{4, 4, 2, 1};
    std::array<size_t, 4> patch_sizes{7, 3, 3, 3};
    std::array<size_t, 4> patch_strides{4, 2, 2, 2};
    size_t ffn_expand = 2;

    size_t patch_pad(size_t stage) const { return patch_sizes[stage] / 2; }

    void validate() const {
        if (in_channels < 1) throw config_error("encoder in_channels must be >= 1");
        if (ffn_expand < 1) throw config_error("encoder ffn_expand must be >= 1");
        for (size_t i = 0; i < 4; ++i) {
            if (stage_channels[i] < 1 || stage_depths[i] < 1 || heads[i] < 1 || sr_ratios[i] < 1)
                throw config_error("encoder stage " + std::to_string(i + 1) + " has a zero entry");
            if (stage_channels[i] % heads[i] != 0)
                throw config_error("stage " + std::to_string(i + 1) + " channels " +
                                   std::to_string(stage_channels[i]) + " not divisible by heads " +
                                   std::to_string(heads[i]));
            if (patch_sizes[i] % 2 == 0) throw config_error("patch sizes must be odd for same-style padding");
            if (patch_strides[i] < 1) throw config_error("patch strides must be >= 1");
        }
    }

    /// Total stride up to and including stage (0-based): 4, 8, 16, 32 by default.
    size_t cumulative_stride(size_t stage) const {
        size_t s = 1;
        for (size_t i = 0; i <= stage; ++i) s *= patch_strides[i];
        return s;
    }
};

/// The four feature maps at 1/4, 1/8, 1/16, 1/32 of the input resolution.
struct StagePyramid {
    std::array<Tensor, 4> f;
};

// --- token/map reshuffles ---------------------------------------------------

inline Tensor tokens_from_map(const Tensor& x) {
    // [B,C,H,W] -> [B,N,C]
    size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    return transpose(reshape(x, {B, C, H * W}), 1, 2);
}

inline Tensor map_from_tokens(const Tensor& x, size_t H, size_t W) {
    // [B,N,C] -> [B,C,H,W]
    size_t B = x.extent(0), N = x.extent(1), C = x.extent(2);
    if (N != H * W) throw shape_error("token count " + std::to_string(N) + " != " + std::to_string(H) + "x" + std::to_string(W));
    return reshape(transpose(x, 1, 2), {B, C, H, W});
}

// --- parameter construction -------------------------------------------------

inline void init_layer_norm_params(ParamStore& ps, const std::string& prefix, size_t C) {
    ps.add(prefix + ".g", Tensor::ones({C}));
    ps.add(prefix + ".b", Tensor::zeros({C}));
}

/// Builds every parameter of one modality encoder under `prefix` (e.g. "enc0").
inline void init_encoder_params(ParamStore& ps, const std::string& prefix, const EncoderConfig& cfg, Rng& rng,
                                bool trainable = true) {
    cfg.validate();
    size_t in_ch = cfg.in_channels;
    size_t watermark = ps.size();
    for (size_t i = 0; i < 4; ++i) {
        std::string sp = prefix + ".s" + std::to_string(i + 1);
        size_t C = cfg.stage_channels[i];
        ps.add(sp + ".patch.w", init_conv_weight({C, in_ch, cfg.patch_sizes[i], cfg.patch_sizes[i]}, rng));
        ps.add(sp + ".patch.b", Tensor::zeros({C}));
        init_layer_norm_params(ps, sp + ".patch.ln", C);
        for (size_t blk = 0; blk < cfg.stage_depths[i]; ++blk) {
            std::string bp = sp + ".blk" + std::to_string(blk);
            init_layer_norm_params(ps, bp + ".ln1", C);
            ps.add(bp + ".attn.wq", init_linear_weight({C, C}, rng));
            ps.add(bp + ".attn.bq", Tensor::zeros({C}));
            // no key bias: softmax is invariant to it, so its gradient is
            // identically zero and it could never train
            ps.add(bp + ".attn.wk", init_linear_weight({C, C}, rng));
            ps.add(bp + ".attn.wv", init_linear_weight({C, C}, rng));
            ps.add(bp + ".attn.bv", Tensor::zeros({C}));
            ps.add(bp + ".attn.wo", init_linear_weight({C, C}, rng));
            ps.add(bp + ".attn.bo", Tensor::zeros({C}));
            if (cfg.sr_ratios[i] > 1) {
                ps.add(bp + ".attn.sr.w", init_linear_weight({C * cfg.sr_ratios[i], C}, rng));
                ps.add(bp + ".attn.sr.b", Tensor::zeros({C}));
                init_layer_norm_params(ps, bp + ".attn.sr.ln", C);
            }
            init_layer_norm_params(ps, bp + ".ln2", C);
            size_t E = C * cfg.ffn_expand;
            ps.add(bp + ".ffn.w1", init_linear_weight({C, E}, rng));
            ps.add(bp + ".ffn.b1", Tensor::zeros({E}));
            ps.add(bp + ".ffn.dw.w", init_conv_weight({E, 1, 3, 3}, rng));
            ps.add(bp + ".ffn.dw.b", Tensor::zeros({E}));
            ps.add(bp + ".ffn.w2", init_linear_weight({E, C}, rng));
            ps.add(bp + ".ffn.b2", Tensor::zeros({C}));
        }
        in_ch = C;
    }
    if (!trainable)
        for (size_t i = watermark; i < ps.items().size(); ++i) ps.items()[i].trainable = false;
}

// --- forward ops --------------------------------------------------------------

/// Strided overlapping convolution plus channel layer norm; stage 1 uses
/// k7/s4/p3, later stages k3/s2/p1. Returns the map [B,C_i,H_i,W_i].
inline Tensor overlap_patch_embed(const Tensor& x, size_t stage, const EncoderConfig& cfg, ParamView& pv,
                                  const std::string& prefix) {
    if (stage < 1 || stage > 4) throw config_error("stage index must be in 1..4");
    size_t stride = cfg.patch_strides[stage - 1];
    if (x.extent(2) % stride != 0 || x.extent(3) % stride != 0)
        throw shape_error("input extent " + std::to_string(x.extent(2)) + "x" + std::to_string(x.extent(3)) +
                          " not divisible by stage stride " + std::to_string(stride));
    std::string sp = prefix + ".s" + std::to_string(stage);
    Tensor y = conv2d(x, pv[sp + ".patch.w"], pv[sp + ".patch.b"], stride, cfg.patch_pad(stage - 1),
                      /*groups=*/1, /*require_exact=*/false);
    size_t H = y.extent(2), W = y.extent(3);
    Tensor tok = tokens_from_map(y);
    tok = layer_norm(tok, pv[sp + ".patch.ln.g"], pv[sp + ".patch.ln.b"]);
    return map_from_tokens(tok, H, W);
}

/// Shortens the token axis by R: reshape NxC -> (N/R)x(C*R), project back to
/// C, layer norm. R=1 is the degenerate ratio and passes through untouched.
inline Tensor spatial_reduce(const Tensor& x, size_t R, ParamView& pv, const std::string& prefix) {
    if (R == 1) return x;
    size_t B = x.extent(0), N = x.extent(1), C = x.extent(2);
    if (N % R != 0)
        throw shape_error("token count " + std::to_string(N) + " not divisible by reduction ratio " +
                          std::to_string(R));
    Tensor y = reshape(x, {B, N / R, C * R});
    y = linear(y, pv[prefix + ".w"], pv[prefix + ".b"]);
    return layer_norm(y, pv[prefix + ".ln.g"], pv[prefix + ".ln.b"]);
}

/// Multi-head self-attention with spatially reduced keys/values:
/// per head, softmax(Q K^T / sqrt(d_k)) V, heads concatenated, then W^O.
inline Tensor mhsa(const Tensor& x, ParamView& pv, const std::string& prefix, size_t heads, size_t R) {
    size_t B = x.extent(0), N = x.extent(1), C = x.extent(2);
    if (C % heads != 0)
        throw shape_error("channels " + std::to_string(C) + " not divisible by heads " + std::to_string(heads));
    size_t dk = C / heads;

    Tensor q = linear(x, pv[prefix + ".wq"], pv[prefix + ".bq"]);
    Tensor kv = spatial_reduce(x, R, pv, prefix + ".sr");
    size_t Nr = kv.extent(1);
    Tensor k = matmul(kv, pv[prefix + ".wk"]);
    Tensor v = linear(kv, pv[prefix + ".wv"], pv[prefix + ".bv"]);

    Tensor qh = transpose(reshape(q, {B, N, heads, dk}), 1, 2);   // [B,h,N,dk]
    Tensor kh = transpose(reshape(k, {B, Nr, heads, dk}), 1, 2);  // [B,h,Nr,dk]
    Tensor vh = transpose(reshape(v, {B, Nr, heads, dk}), 1, 2);

    Tensor scores = scale(matmul(qh, transpose(kh, 2, 3)), 1.0 / std::sqrt(static_cast<double>(dk)));
    Tensor attn = softmax(scores, -1);
    Tensor ctx = matmul(attn, vh);  // [B,h,N,dk]
    Tensor merged = reshape(transpose(ctx, 1, 2), {B, N, C});
    return linear(merged, pv[prefix + ".wo"], pv[prefix + ".bo"]);
}

/// Mix-FFN: MLP2(GELU(DWConv3x3(MLP1(x)))) + x, with the conv applied on the
/// HxW map view of the tokens. Zero inner weights make this the identity.
inline Tensor mix_ffn(const Tensor& x, ParamView& pv, const std::string& prefix, size_t H, size_t W) {
    size_t N = x.extent(1);
    if (N != H * W)
        throw shape_error("mix_ffn token count " + std::to_string(N) + " != " + std::to_string(H) + "x" +
                          std::to_string(W));
    Tensor h = linear(x, pv[prefix + ".w1"], pv[prefix + ".b1"]);
    size_t E = h.extent(2);
    Tensor m = map_from_tokens(h, H, W);
    m = conv2d(m, pv[prefix + ".dw.w"], pv[prefix + ".dw.b"], 1, 1, /*groups=*/E);
    h = tokens_from_map(m);
    h = gelu(h);
    h = linear(h, pv[prefix + ".w2"], pv[prefix + ".b2"]);
    return add(h, x);
}

/// One hierarchical encoder pass: per stage, patch embed then depth x
/// (ln -> mhsa -> residual; ln -> mix_ffn). Requires H,W divisible by 32.
inline StagePyramid encode(const Tensor& image, const EncoderConfig& cfg, ParamView& pv, const std::string& prefix) {
    if (image.rank() != 4) throw shape_error("encode expects [B,C,H,W], got " + shape_str(image.shape()));
    if (image.extent(2) % 32 != 0 || image.extent(3) % 32 != 0)
        throw shape_error("encode input " + std::to_string(image.extent(2)) + "x" + std::to_string(image.extent(3)) +
                          " must be divisible by 32");
    if (image.extent(1) != cfg.in_channels)
        throw shape_error("encode channel count " + std::to_string(image.extent(1)) + " != configured " +
                          std::to_string(cfg.in_channels));

    StagePyramid pyr;
    Tensor x = image;
    for (size_t i = 1; i <= 4; ++i) {
        x = overlap_patch_embed(x, i, cfg, pv, prefix);
        size_t H = x.extent(2), W = x.extent(3);
        Tensor tok = tokens_from_map(x);
        std::string sp = prefix + ".s" + std::to_string(i);
        for (size_t blk = 0; blk < cfg.stage_depths[i - 1]; ++blk) {
            std::string bp = sp + ".blk" + std::to_string(blk);
            Tensor a = layer_norm(tok, pv[bp + ".ln1.g"], pv[bp + ".ln1.b"]);
            a = mhsa(a, pv, bp + ".attn", cfg.heads[i - 1], cfg.sr_ratios[i - 1]);
            tok = add(tok, a);
            Tensor n2 = layer_norm(tok, pv[bp + ".ln2.g"], pv[bp + ".ln2.b"]);
            tok = mix_ffn(n2, pv, bp + ".ffn", H, W);
        }
        x = map_from_tokens(tok, H, W);
        pyr.f[i - 1] = x;
    }
    return pyr;
}

}  // namespace u3m
