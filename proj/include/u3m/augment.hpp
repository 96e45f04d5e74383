#pragma once

#include <cmath>
#include <cstdint>

#include "u3m/dataset.hpp"
#include "u3m/rng.hpp"

namespace u3m {

/// Horizontal flip: pixel (r,c) -> (r, W-1-c), applied jointly to every
/// modality and the label. Involutive.
inline ModalitySample hflip_sample(const ModalitySample& s) {
    ModalitySample out;
    out.id = s.id;
    for (const Tensor& img : s.images) {
        size_t C = img.extent(0), H = img.extent(1), W = img.extent(2);
        Tensor f(img.shape());
        double* fd = f.mut();
        const double* id = img.data();
        for (size_t c = 0; c < C; ++c)
            for (size_t i = 0; i < H; ++i)
                for (size_t j = 0; j < W; ++j) fd[(c * H + i) * W + j] = id[(c * H + i) * W + (W - 1 - j)];
        out.images.push_back(std::move(f));
    }
    out.label = SegMap(s.label.rows, s.label.cols);
    for (size_t i = 0; i < s.label.rows; ++i)
        for (size_t j = 0; j < s.label.cols; ++j) out.label.at(i, j) = s.label.at(i, s.label.cols - 1 - j);
    return out;
}

namespace detail {
/// (r,c) of the source pixel for a counter-clockwise quarter-turn rotation.
inline void rot90_src(size_t quarter_turns, size_t H, size_t W, size_t i, size_t j, size_t& si, size_t& sj) {
    switch (quarter_turns % 4) {
        case 0: si = i; sj = j; break;
        case 1: si = j; sj = H - 1 - i; break;  // note: output is WxH
        case 2: si = H - 1 - i; sj = W - 1 - j; break;
        default: si = W - 1 - j; sj = i; break;
    }
}
}  // namespace detail

/// Rotation by quarter turns (90 degree steps). 1 and 3 swap H and W.
inline ModalitySample rotate_sample(const ModalitySample& s, size_t quarter_turns) {
    quarter_turns %= 4;
    if (quarter_turns == 0) return s;
    size_t H = s.label.rows, W = s.label.cols;
    size_t oh = (quarter_turns % 2 == 0) ? H : W;
    size_t ow = (quarter_turns % 2 == 0) ? W : H;

    ModalitySample out;
    out.id = s.id;
    for (const Tensor& img : s.images) {
        size_t C = img.extent(0);
        Tensor r({C, oh, ow});
        double* rd = r.mut();
        const double* id = img.data();
        for (size_t c = 0; c < C; ++c)
            for (size_t i = 0; i < oh; ++i)
                for (size_t j = 0; j < ow; ++j) {
                    size_t si, sj;
                    detail::rot90_src(quarter_turns, oh, ow, i, j, si, sj);
                    rd[(c * oh + i) * ow + j] = id[(c * H + si) * W + sj];
                }
        out.images.push_back(std::move(r));
    }
    out.label = SegMap(oh, ow);
    for (size_t i = 0; i < oh; ++i)
        for (size_t j = 0; j < ow; ++j) {
            size_t si, sj;
            detail::rot90_src(quarter_turns, oh, ow, i, j, si, sj);
            out.label.at(i, j) = s.label.at(si, sj);
        }
    return out;
}

/// Nearest-neighbor rescale by `factor`, then center crop or pad back to the
/// original extent (images pad with 0, labels with ignore_index). factor 1
/// is the identity.
inline ModalitySample scale_sample(const ModalitySample& s, double factor, int ignore_index) {
    if (factor == 1.0) return s;
    size_t H = s.label.rows, W = s.label.cols;
    size_t sh = std::max<size_t>(1, static_cast<size_t>(std::lround(H * factor)));
    size_t sw = std::max<size_t>(1, static_cast<size_t>(std::lround(W * factor)));

    auto src_of = [](size_t i, size_t scaled, size_t orig) {
        size_t v = i * orig / scaled;
        return std::min(v, orig - 1);
    };

    ModalitySample out;
    out.id = s.id;
    // offsets mapping the scaled raster into the original frame, centered
    long off_r = (static_cast<long>(sh) - static_cast<long>(H)) / 2;
    long off_c = (static_cast<long>(sw) - static_cast<long>(W)) / 2;

    for (const Tensor& img : s.images) {
        size_t C = img.extent(0);
        Tensor r({C, H, W});
        double* rd = r.mut();
        const double* id = img.data();
        for (size_t c = 0; c < C; ++c)
            for (size_t i = 0; i < H; ++i)
                for (size_t j = 0; j < W; ++j) {
                    long si = static_cast<long>(i) + off_r;
                    long sj = static_cast<long>(j) + off_c;
                    double v = 0.0;
                    if (si >= 0 && sj >= 0 && si < static_cast<long>(sh) && sj < static_cast<long>(sw))
                        v = id[(c * H + src_of(static_cast<size_t>(si), sh, H)) * W +
                               src_of(static_cast<size_t>(sj), sw, W)];
                    rd[(c * H + i) * W + j] = v;
                }
        out.images.push_back(std::move(r));
    }
    out.label = SegMap(H, W, ignore_index);
    for (size_t i = 0; i < H; ++i)
        for (size_t j = 0; j < W; ++j) {
            long si = static_cast<long>(i) + off_r;
            long sj = static_cast<long>(j) + off_c;
            if (si >= 0 && sj >= 0 && si < static_cast<long>(sh) && sj < static_cast<long>(sw))
                out.label.at(i, j) = s.label.at(src_of(static_cast<size_t>(si), sh, H),
                                                src_of(static_cast<size_t>(sj), sw, W));
        }
    return out;
}

/// One seeded augmentation draw: optional horizontal flip, quarter-turn
/// rotation (right angles only; {0,180} when the sample is not square), and
/// scale in [0.75, 1.25]. Identical geometry for all modalities and label;
/// (H, W) never changes.
inline ModalitySample augment(const ModalitySample& s, Rng& rng, bool hflip, bool rotate, bool scl,
                              int ignore_index) {
    ModalitySample out = s;
    if (hflip && rng.bernoulli(0.5)) out = hflip_sample(out);
    if (rotate) {
        size_t turns = static_cast<size_t>(rng.below(4));
        if (s.label.rows != s.label.cols && turns % 2 == 1) turns = (turns + 1) % 4;
        if (turns) out = rotate_sample(out, turns);
    }
    if (scl) {
        double f = rng.uniform(0.75, 1.25);
        out = scale_sample(out, f, ignore_index);
    }
    return out;
}

}  // namespace u3m
