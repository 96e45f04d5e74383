#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "u3m/ops.hpp"
#include "u3m/params.hpp"

namespace u3m {

/// Per-stage fusion configuration. Pool bins larger than a stage's spatial
/// extent are clamped to it at forward time, so the parameter set (and thus
/// checkpoints and the optimizer's gradient coverage) never depends on the
/// input resolution.
struct FusionConfig {
    std::vector<size_t> pool_bins{1, 2, 3, 6};
    std::vector<size_t> conv_kernels{3, 5, 7};
    size_t ca_reduction = 4;

    void validate() const {
        if (pool_bins.empty()) throw config_error("fusion pool_bins must not be empty");
        if (!std::is_sorted(pool_bins.begin(), pool_bins.end()))
            throw config_error("fusion pool_bins must be sorted ascending");
        for (size_t b : pool_bins)
            if (b < 1) throw config_error("fusion pool bins must be >= 1");
        if (conv_kernels.empty()) throw config_error("fusion conv_kernels must not be empty");
        for (size_t k : conv_kernels)
            if (k % 2 == 0) throw config_error("fusion conv kernel " + std::to_string(k) + " must be odd");
        if (ca_reduction < 1) throw config_error("fusion ca_reduction must be >= 1");
    }
};

/// Fused per-stage feature; same spatial extent and channel count as each
/// per-modality input at that stage.
struct FusedStage {
    Tensor tensor;
};

namespace detail {
inline Tensor conv1x1(const Tensor& x, ParamView& pv, const std::string& prefix) {
    return conv2d(x, pv[prefix + ".w"], pv[prefix + ".b"], 1, 0);
}
}  // namespace detail

/// Builds every parameter of one stage's fusion block under `prefix`
/// (e.g. "fuse.s1"). C is the stage channel count, M the modality count.
inline void init_fusion_params(ParamStore& ps, const std::string& prefix, size_t C, size_t M,
                               const FusionConfig& cfg, Rng& rng) {
    cfg.validate();
    if (C % cfg.ca_reduction != 0)
        throw config_error("channel count " + std::to_string(C) + " not divisible by ca_reduction " +
                           std::to_string(cfg.ca_reduction));
    ps.add(prefix + ".cat.w", init_conv_weight({C, M * C, 1, 1}, rng));
    ps.add(prefix + ".cat.b", Tensor::zeros({C}));
    ps.add(prefix + ".pool.proj.w", init_conv_weight({C, C, 1, 1}, rng));
    ps.add(prefix + ".pool.proj.b", Tensor::zeros({C}));
    for (size_t k : cfg.pool_bins) {
        std::string bp = prefix + ".pool.bin" + std::to_string(k);
        ps.add(bp + ".w", init_conv_weight({C, C, 1, 1}, rng));
        ps.add(bp + ".b", Tensor::zeros({C}));
    }
    ps.add(prefix + ".pool.out.w", init_conv_weight({C, C, 1, 1}, rng));
    ps.add(prefix + ".pool.out.b", Tensor::zeros({C}));
    ps.add(prefix + ".conv.proj.w", init_conv_weight({C, C, 1, 1}, rng));
    ps.add(prefix + ".conv.proj.b", Tensor::zeros({C}));
    for (size_t k : cfg.conv_kernels) {
        std::string kp = prefix + ".conv.k" + std::to_string(k);
        ps.add(kp + ".w", init_conv_weight({C, 1, k, k}, rng));
        ps.add(kp + ".b", Tensor::zeros({C}));
    }
    ps.add(prefix + ".conv.out.w", init_conv_weight({C, C, 1, 1}, rng));
    ps.add(prefix + ".conv.out.b", Tensor::zeros({C}));
    ps.add(prefix + ".post.w", init_conv_weight({C, C, 1, 1}, rng));
    ps.add(prefix + ".post.b", Tensor::zeros({C}));
    size_t hidden = C / cfg.ca_reduction;
    ps.add(prefix + ".ca.fc1.w", init_linear_weight({C, hidden}, rng));
    ps.add(prefix + ".ca.fc1.b", Tensor::zeros({hidden}));
    ps.add(prefix + ".ca.fc2.w", init_linear_weight({hidden, C}, rng));
    ps.add(prefix + ".ca.fc2.b", Tensor::zeros({C}));
}

/// Channel-concatenate M shape-identical modality features and reduce the
/// M*C channels back to C with a pointwise linear map.
inline Tensor concat_reduce(const std::vector<Tensor>& feats, ParamView& pv, const std::string& prefix) {
    if (feats.empty()) throw shape_error("concat_reduce needs at least one modality feature");
    for (size_t m = 1; m < feats.size(); ++m)
        if (feats[m].shape() != feats[0].shape())
            throw shape_error("fusion input of modality " + std::to_string(m) + " has shape " +
                              shape_str(feats[m].shape()) + ", expected " + shape_str(feats[0].shape()));
    Tensor cat = feats.size() == 1 ? feats[0] : concat(feats, 1);
    return detail::conv1x1(cat, pv, prefix + ".cat");
}

/// Project (1x1), adaptive-pool to each bin + 1x1 conv, upsample all
/// branches back to HxW and sum, final 1x1 conv. Bins clamp to min(H,W).
inline Tensor pyramid_pool_fuse(const Tensor& f, ParamView& pv, const std::string& prefix, const FusionConfig& cfg) {
    cfg.validate();
    size_t H = f.extent(2), W = f.extent(3);
    Tensor proj = detail::conv1x1(f, pv, prefix + ".pool.proj");
    Tensor acc;
    for (size_t k : cfg.pool_bins) {
        size_t ke = std::min({k, H, W});
        Tensor branch = adaptive_avg_pool2d(proj, ke);
        branch = detail::conv1x1(branch, pv, prefix + ".pool.bin" + std::to_string(k));
        branch = bilinear_upsample(branch, H, W);
        acc = acc.defined() ? add(acc, branch) : branch;
    }
    return detail::conv1x1(acc, pv, prefix + ".pool.out");
}

/// Project (1x1), per odd kernel k a depthwise kxk conv, sum of
/// (projected + branch) residual terms, final 1x1 conv. Zero branch weights
/// leave exactly |kernels| copies of the projected feature.
inline Tensor pyramid_conv_fuse(const Tensor& f, ParamView& pv, const std::string& prefix, const FusionConfig& cfg) {
    cfg.validate();
    size_t C = f.extent(1);
    Tensor proj = detail::conv1x1(f, pv, prefix + ".conv.proj");
    Tensor acc;
    for (size_t k : cfg.conv_kernels) {
        Tensor branch = conv2d(proj, pv[prefix + ".conv.k" + std::to_string(k) + ".w"],
                               pv[prefix + ".conv.k" + std::to_string(k) + ".b"], 1, k / 2, /*groups=*/C);
        Tensor term = add(proj, branch);
        acc = acc.defined() ? add(acc, term) : term;
    }
    return detail::conv1x1(acc, pv, prefix + ".conv.out");
}

/// Squeeze-excitation gate: global average pool, bottleneck MLP with ReLU,
/// sigmoid, channel-wise rescale of x.
inline Tensor channel_attention(const Tensor& x, ParamView& pv, const std::string& prefix, size_t reduction) {
    size_t B = x.extent(0), C = x.extent(1);
    if (C % reduction != 0)
        throw config_error("channel_attention: channels " + std::to_string(C) + " not divisible by reduction " +
                           std::to_string(reduction));
    Tensor s = adaptive_avg_pool2d(x, 1);             // [B,C,1,1]
    s = reshape(s, {B, C});
    s = relu(linear(s, pv[prefix + ".fc1.w"], pv[prefix + ".fc1.b"]));
    s = sigmoid(linear(s, pv[prefix + ".fc2.w"], pv[prefix + ".fc2.b"]));
    Tensor gate = reshape(s, {B, C, 1, 1});
    return mul(x, gate);
}

/// One full fusion block: concat-reduce, pooling and convolution pyramids
/// summed, pointwise linear, channel attention. Every modality passes
/// through structurally identical treatment; only the concat weight blocks
/// are modality-indexed.
inline FusedStage fusion_block(const std::vector<Tensor>& feats, ParamView& pv, const std::string& prefix,
                               const FusionConfig& cfg) {
    Tensor reduced = concat_reduce(feats, pv, prefix);
    Tensor fused = add(pyramid_pool_fuse(reduced, pv, prefix, cfg), pyramid_conv_fuse(reduced, pv, prefix, cfg));
    fused = detail::conv1x1(fused, pv, prefix + ".post");
    return FusedStage{channel_attention(fused, pv, prefix + ".ca", cfg.ca_reduction)};
}

}  // namespace u3m
