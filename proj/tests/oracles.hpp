// Independent reference implementations used as test oracles. Everything in
// here is written as plain nested loops against raw buffers and must stay
// independent of the op implementations it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "u3m/segmap.hpp"
#include "u3m/tensor.hpp"

namespace oracle {

using u3m::SegMap;
using u3m::Tensor;

inline Tensor matmul2d(const Tensor& a, const Tensor& b) {
    size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor c({m, n});
    double* cd = c.mut();
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += a.at({i, p}) * b.at({p, j});
            cd[i * n + j] = acc;
        }
    return c;
}

/// Six-loop direct convolution (cross-correlation), with groups.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, size_t stride, size_t pad,
                     size_t groups = 1) {
    size_t B = x.extent(0), H = x.extent(2), W = x.extent(3);
    size_t O = w.extent(0), Cg = w.extent(1), k = w.extent(2);
    size_t Ho = (H + 2 * pad - k) / stride + 1;
    size_t Wo = (W + 2 * pad - k) / stride + 1;
    size_t opg = O / groups;
    Tensor out({B, O, Ho, Wo});
    double* od = out.mut();
    for (size_t b = 0; b < B; ++b)
        for (size_t o = 0; o < O; ++o)
            for (size_t oh = 0; oh < Ho; ++oh)
                for (size_t ow = 0; ow < Wo; ++ow) {
                    double acc = bias.defined() ? bias.data()[o] : 0.0;
                    size_t cbase = (o / opg) * Cg;
                    for (size_t cg = 0; cg < Cg; ++cg)
                        for (size_t u = 0; u < k; ++u)
                            for (size_t v = 0; v < k; ++v) {
                                long ih = static_cast<long>(oh * stride + u) - static_cast<long>(pad);
                                long iw = static_cast<long>(ow * stride + v) - static_cast<long>(pad);
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W))
                                    continue;
                                acc += x.at({b, cbase + cg, static_cast<size_t>(ih), static_cast<size_t>(iw)}) *
                                       w.at({o, cg, u, v});
                            }
                    od[((b * O + o) * Ho + oh) * Wo + ow] = acc;
                }
    return out;
}

inline Tensor adaptive_pool(const Tensor& x, size_t bins) {
    size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    Tensor out({B, C, bins, bins});
    double* od = out.mut();
    for (size_t b = 0; b < B; ++b)
        for (size_t c = 0; c < C; ++c)
            for (size_t i = 0; i < bins; ++i)
                for (size_t j = 0; j < bins; ++j) {
                    size_t r0 = i * H / bins;
                    size_t r1 = static_cast<size_t>(std::ceil(double((i + 1) * H) / double(bins)));
                    size_t c0 = j * W / bins;
                    size_t c1 = static_cast<size_t>(std::ceil(double((j + 1) * W) / double(bins)));
                    double acc = 0.0;
                    for (size_t r = r0; r < r1; ++r)
                        for (size_t cc = c0; cc < c1; ++cc) acc += x.at({b, c, r, cc});
                    od[((b * C + c) * bins + i) * bins + j] = acc / double((r1 - r0) * (c1 - c0));
                }
    return out;
}

/// Per-pixel bilinear interpolation, align_corners=false.
inline Tensor bilinear(const Tensor& x, size_t oh, size_t ow) {
    size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    Tensor out({B, C, oh, ow});
    double* od = out.mut();
    auto sample = [&](size_t b, size_t c, double si, double sj) {
        if (si < 0) si = 0;
        if (sj < 0) sj = 0;
        size_t i0 = std::min(static_cast<size_t>(si), H - 1);
        size_t j0 = std::min(static_cast<size_t>(sj), W - 1);
        size_t i1 = std::min(i0 + 1, H - 1);
        size_t j1 = std::min(j0 + 1, W - 1);
        double fi = si - double(i0), fj = sj - double(j0);
        double top = x.at({b, c, i0, j0}) * (1 - fj) + x.at({b, c, i0, j1}) * fj;
        double bot = x.at({b, c, i1, j0}) * (1 - fj) + x.at({b, c, i1, j1}) * fj;
        return top * (1 - fi) + bot * fi;
    };
    for (size_t b = 0; b < B; ++b)
        for (size_t c = 0; c < C; ++c)
            for (size_t i = 0; i < oh; ++i)
                for (size_t j = 0; j < ow; ++j) {
                    double si = (double(i) + 0.5) * double(H) / double(oh) - 0.5;
                    double sj = (double(j) + 0.5) * double(W) / double(ow) - 0.5;
                    od[((b * C + c) * oh + i) * ow + j] = sample(b, c, si, sj);
                }
    return out;
}

/// Extended-precision softmax of a vector.
inline std::vector<double> softmax_vec(const std::vector<double>& v) {
    long double mx = v[0];
    for (double x : v) mx = std::max<long double>(mx, x);
    long double sum = 0.0L;
    std::vector<long double> e(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        e[i] = expl(static_cast<long double>(v[i]) - mx);
        sum += e[i];
    }
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
    return out;
}

/// Dense single-batch attention: softmax(q k^T / sqrt(dk)) v per head, then
/// concat and output projection (no spatial reduction).
inline Tensor attention(const Tensor& x, const Tensor& wq, const Tensor& bq, const Tensor& wk, const Tensor& wv,
                        const Tensor& bv, const Tensor& wo, const Tensor& bo, size_t heads) {
    size_t N = x.extent(1), C = x.extent(2);
    size_t dk = C / heads;
    auto proj = [&](const Tensor& w, const Tensor& b, size_t n, size_t c) {
        Tensor r({n, C});
        double* rd = r.mut();
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < C; ++j) {
                double acc = b.defined() ? b.data()[j] : 0.0;
                for (size_t p = 0; p < c; ++p) acc += x.at({0, i, p}) * w.at({p, j});
                rd[i * C + j] = acc;
            }
        return r;
    };
    Tensor q = proj(wq, bq, N, C), k = proj(wk, Tensor(), N, C), v = proj(wv, bv, N, C);
    Tensor merged({N, C});
    double* md = merged.mut();
    for (size_t h = 0; h < heads; ++h) {
        for (size_t i = 0; i < N; ++i) {
            std::vector<double> scores(N);
            for (size_t j = 0; j < N; ++j) {
                double acc = 0.0;
                for (size_t p = 0; p < dk; ++p) acc += q.at({i, h * dk + p}) * k.at({j, h * dk + p});
                scores[j] = acc / std::sqrt(double(dk));
            }
            std::vector<double> attn = softmax_vec(scores);
            for (size_t p = 0; p < dk; ++p) {
                double acc = 0.0;
                for (size_t j = 0; j < N; ++j) acc += attn[j] * v.at({j, h * dk + p});
                md[i * C + h * dk + p] = acc;
            }
        }
    }
    Tensor out({1, N, C});
    double* od = out.mut();
    for (size_t i = 0; i < N; ++i)
        for (size_t j = 0; j < C; ++j) {
            double acc = bo.data()[j];
            for (size_t p = 0; p < C; ++p) acc += merged.at({i, p}) * wo.at({p, j});
            od[i * C + j] = acc;
        }
    return out;
}

/// Set-based mIoU over raw label vectors (brute force, no confusion matrix).
inline double brute_miou(const SegMap& pred, const SegMap& gt, size_t classes, int ignore) {
    double total = 0.0;
    size_t defined = 0;
    for (size_t c = 0; c < classes; ++c) {
        size_t inter = 0, uni = 0;
        for (size_t p = 0; p < gt.v.size(); ++p) {
            if (gt.v[p] == ignore) continue;
            bool in_pred = pred.v[p] == static_cast<int32_t>(c);
            bool in_gt = gt.v[p] == static_cast<int32_t>(c);
            if (in_pred && in_gt) ++inter;
            if (in_pred || in_gt) ++uni;
        }
        if (uni) {
            total += double(inter) / double(uni);
            ++defined;
        }
    }
    return total / double(defined);
}

inline double brute_miou_many(const std::vector<SegMap>& preds, const std::vector<SegMap>& gts, size_t classes,
                              int ignore) {
    double total = 0.0;
    size_t defined = 0;
    for (size_t c = 0; c < classes; ++c) {
        size_t inter = 0, uni = 0;
        for (size_t s = 0; s < gts.size(); ++s)
            for (size_t p = 0; p < gts[s].v.size(); ++p) {
                if (gts[s].v[p] == ignore) continue;
                bool in_pred = preds[s].v[p] == static_cast<int32_t>(c);
                bool in_gt = gts[s].v[p] == static_cast<int32_t>(c);
                if (in_pred && in_gt) ++inter;
                if (in_pred || in_gt) ++uni;
            }
        if (uni) {
            total += double(inter) / double(uni);
            ++defined;
        }
    }
    return total / double(defined);
}

}  // namespace oracle
