#pragma once

#include <string>
#include <vector>

#include "u3m/encoder.hpp"
#include "u3m/fusion.hpp"
#include "u3m/head.hpp"
#include "u3m/train_config.hpp"

namespace u3m {

/// Full architecture hyperparameters. M modality-specific encoders, four
/// fusion blocks, one shared head.
struct ModelConfig {
    size_t modalities = 1;
    std::vector<size_t> in_channels{3};
    EncoderConfig encoder;
    FusionConfig fusion;
    HeadConfig head;
    TrainConfig train;

    void validate() const {
        if (modalities < 1) throw config_error("modalities must be >= 1");
        if (in_channels.size() != modalities)
            throw config_error("in_channels lists " + std::to_string(in_channels.size()) + " entries for " +
                               std::to_string(modalities) + " modalities");
        for (size_t c : in_channels)
            if (c < 1) throw config_error("modality channel counts must be >= 1");
        encoder.validate();
        fusion.validate();
        head.validate();
        train.validate();
        for (size_t i = 0; i < 4; ++i)
            if (encoder.stage_channels[i] % fusion.ca_reduction != 0)
                throw config_error("stage " + std::to_string(i + 1) + " channels " +
                                   std::to_string(encoder.stage_channels[i]) + " not divisible by ca_reduction " +
                                   std::to_string(fusion.ca_reduction));
    }

    /// Input-size dependent constraints, checked before any compute on data
    /// of extent HxW.
    void validate_input(size_t h, size_t w) const {
        if (h % 32 != 0 || w % 32 != 0)
            throw config_error("input " + std::to_string(h) + "x" + std::to_string(w) +
                               " must be divisible by 32 (enable pad_to_32 for other sizes)");
        for (size_t i = 0; i < 4; ++i) {
            size_t stride = encoder.cumulative_stride(i);
            size_t tokens = (h / stride) * (w / stride);
            if (tokens % encoder.sr_ratios[i] != 0)
                throw config_error("stage " + std::to_string(i + 1) + " token count " + std::to_string(tokens) +
                                   " not divisible by sr_ratio " + std::to_string(encoder.sr_ratios[i]));
        }
    }
};

/// The U3M model: a parameter store plus the forward composition
/// encode (per modality) -> fusion_block (per stage) -> shared decode.
class Model {
  public:
    explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(cfg_.train.seed);
        for (size_t m = 0; m < cfg_.modalities; ++m) {
            EncoderConfig ec = cfg_.encoder;
            ec.in_channels = cfg_.in_channels[m];
            Rng enc_rng = rng.fork(m + 1);
            init_encoder_params(params_, "enc" + std::to_string(m), ec, enc_rng,
                                /*trainable=*/!cfg_.train.freeze_encoders);
        }
        Rng fuse_rng = rng.fork(101);
        for (size_t i = 0; i < 4; ++i)
            init_fusion_params(params_, "fuse.s" + std::to_string(i + 1), cfg_.encoder.stage_channels[i],
                               cfg_.modalities, cfg_.fusion, fuse_rng);
        Rng head_rng = rng.fork(202);
        init_head_params(params_, "head", cfg_.encoder.stage_channels, cfg_.head, head_rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }

    /// Per-modality stage pyramids. images[m] is [B, C_m, H, W].
    std::vector<StagePyramid> encode_all(const std::vector<Tensor>& images, Tape* tape) const {
        check_images(images);
        ParamView pv(params_, tape);
        std::vector<StagePyramid> pyramids;
        pyramids.reserve(images.size());
        for (size_t m = 0; m < images.size(); ++m) {
            EncoderConfig ec = cfg_.encoder;
            ec.in_channels = cfg_.in_channels[m];
            pyramids.push_back(encode(images[m], ec, pv, "enc" + std::to_string(m)));
        }
        return pyramids;
    }

    /// Four fused stage features from the per-modality pyramids.
    std::array<Tensor, 4> fuse_stages(const std::vector<StagePyramid>& pyramids, Tape* tape) const {
        ParamView pv(params_, tape);
        std::array<Tensor, 4> fused;
        for (size_t i = 0; i < 4; ++i) {
            std::vector<Tensor> feats;
            feats.reserve(pyramids.size());
            for (const StagePyramid& p : pyramids) feats.push_back(p.f[i]);
            fused[i] = fusion_block(feats, pv, "fuse.s" + std::to_string(i + 1), cfg_.fusion).tensor;
        }
        return fused;
    }

    Tensor decode_stages(const std::array<Tensor, 4>& fused, size_t full_h, size_t full_w, Tape* tape) const {
        ParamView pv(params_, tape);
        return decode(fused, pv, "head", cfg_.head, full_h, full_w);
    }

    /// Full forward pass to logits [B, N, H, W].
    Tensor forward(const std::vector<Tensor>& images, Tape* tape) const {
        check_images(images);
        size_t h = images[0].extent(2), w = images[0].extent(3);
        cfg_.validate_input(h, w);
        // One ParamView per forward so each parameter is watched once.
        ParamView pv(params_, tape);
        std::vector<StagePyramid> pyramids;
        pyramids.reserve(images.size());
        for (size_t m = 0; m < images.size(); ++m) {
            EncoderConfig ec = cfg_.encoder;
            ec.in_channels = cfg_.in_channels[m];
            pyramids.push_back(encode(images[m], ec, pv, "enc" + std::to_string(m)));
        }
        std::array<Tensor, 4> fused;
        for (size_t i = 0; i < 4; ++i) {
            std::vector<Tensor> feats;
            feats.reserve(pyramids.size());
            for (const StagePyramid& p : pyramids) feats.push_back(p.f[i]);
            fused[i] = fusion_block(feats, pv, "fuse.s" + std::to_string(i + 1), cfg_.fusion).tensor;
        }
        return decode(fused, pv, "head", cfg_.head, h, w);
    }

  private:
    void check_images(const std::vector<Tensor>& images) const {
        if (images.size() != cfg_.modalities)
            throw shape_error("got " + std::to_string(images.size()) + " modality images, model expects " +
                              std::to_string(cfg_.modalities));
        for (size_t m = 0; m < images.size(); ++m) {
            if (images[m].rank() != 4)
                throw shape_error("modality " + std::to_string(m) + " image must be [B,C,H,W]");
            if (images[m].extent(1) != cfg_.in_channels[m])
                throw shape_error("modality " + std::to_string(m) + " has " + std::to_string(images[m].extent(1)) +
                                  " channels, config says " + std::to_string(cfg_.in_channels[m]));
            if (images[m].extent(0) != images[0].extent(0) || images[m].extent(2) != images[0].extent(2) ||
                images[m].extent(3) != images[0].extent(3))
                throw shape_error("modalities disagree on batch or spatial extent");
        }
    }

    ModelConfig cfg_;
    ParamStore params_;
};

}  // namespace u3m
