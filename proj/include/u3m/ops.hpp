#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "u3m/tape.hpp"
#include "u3m/tensor.hpp"

namespace u3m {
namespace detail {

inline std::vector<size_t> contiguous_strides(const Shape& s) {
    std::vector<size_t> st(s.size(), 1);
    for (size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw shape_error("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

/// Strides of `in` expressed in the (right-aligned) coordinates of `out`,
/// zero along broadcast axes.
inline std::vector<size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<size_t> st(out.size(), 0);
    size_t stride = 1;
    size_t shift = out.size() - in.size();
    for (size_t i = in.size(); i-- > 0;) {
        st[i + shift] = (in[i] == 1) ? 0 : stride;
        stride *= in[i];
    }
    return st;
}

/// Visit every coordinate of `out`, tracking two input offsets. f(lin, oa, ob).
template <class F>
inline void for_each_bcast(const Shape& out, const std::vector<size_t>& sa, const std::vector<size_t>& sb, F&& f) {
    size_t n = numel_of(out);
    size_t r = out.size();
    if (r == 0 || n == 0) {
        if (n) f(size_t(0), size_t(0), size_t(0));
        return;
    }
    std::vector<size_t> idx(r, 0);
    size_t oa = 0, ob = 0;
    for (size_t lin = 0;;) {
        f(lin, oa, ob);
        if (++lin == n) break;
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) break;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

inline void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw numeric_error(std::string(op) + " produced a non-finite value");
}

template <class F>
inline Tensor bcast_binary(const Tensor& a, const Tensor& b, const char* op, F f) {
    if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        double* o = out.mut();
        const double* x = a.data();
        const double* y = b.data();
        size_t n = a.numel();
        for (size_t i = 0; i < n; ++i) o[i] = f(x[i], y[i]);
        check_finite(out, op);
        return out;
    }
    Shape os = broadcast_shape(a.shape(), b.shape());
    Tensor out(os);
    double* o = out.mut();
    const double* x = a.data();
    const double* y = b.data();
    for_each_bcast(os, broadcast_strides(a.shape(), os), broadcast_strides(b.shape(), os),
                   [&](size_t lin, size_t oa, size_t ob) { o[lin] = f(x[oa], y[ob]); });
    check_finite(out, op);
    return out;
}

/// Sum `g` down to `target` shape (inverse of broadcasting).
inline Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g.detached();
    Tensor out = Tensor::zeros(target);
    double* o = out.mut();
    const double* gd = g.data();
    std::vector<size_t> st = broadcast_strides(target, g.shape());
    std::vector<size_t> zero(g.shape().size(), 0);
    for_each_bcast(g.shape(), st, zero, [&](size_t lin, size_t oa, size_t) { o[oa] += gd[lin]; });
    return out;
}

// ---- dense 2D matmul kernels (accumulating) ------------------------------

inline void mm_acc(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    if (n == 1) {  // matrix-vector: contiguous dot per row
        for (size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * b[p];
            c[i] += acc;
        }
        return;
    }
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

/// c(m×n) += a(m×k) · b(n×k)^T
inline void mm_acc_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

/// c(m×n) += a(k×m)^T · b(k×n)
inline void mm_acc_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (size_t i = 0; i < m; ++i) {
            double av = arow[i];
            double* crow = c + i * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class F, class DF>
inline Tensor unary_op(const Tensor& x, const char* name, F f, DF df) {
    Tensor out(x.shape());
    double* o = out.mut();
    const double* xd = x.data();
    size_t n = x.numel();
    for (size_t i = 0; i < n; ++i) o[i] = f(xd[i]);
    check_finite(out, name);

    if (Tape* tape = x.tape()) {
        int ix = x.node();
        Tensor xs = x.detached();
        int id = tape->record({ix}, out.shape(), [ix, xs, df](const Tensor& g, Tape& t) {
            Tensor gx(xs.shape());
            double* gd = gx.mut();
            const double* gg = g.data();
            const double* xv = xs.data();
            size_t m = xs.numel();
            for (size_t i = 0; i < m; ++i) gd[i] = gg[i] * df(xv[i]);
            t.accumulate(ix, std::move(gx));
        });
        out.bind(tape, id);
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = detail::bcast_binary(a, b, "add", [](double x, double y) { return x + y; });
    if (Tape* tape = detail::common_tape({&a, &b})) {
        int ia = detail::node_or(a, tape), ib = detail::node_or(b, tape);
        Shape sa = a.shape(), sb = b.shape();
        int id = tape->record({ia, ib}, out.shape(), [ia, ib, sa, sb](const Tensor& g, Tape& t) {
            if (ia >= 0) t.accumulate(ia, detail::reduce_to_shape(g, sa));
            if (ib >= 0) t.accumulate(ib, detail::reduce_to_shape(g, sb));
        });
        out.bind(tape, id);
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out = detail::bcast_binary(a, b, "mul", [](double x, double y) { return x * y; });
    if (Tape* tape = detail::common_tape({&a, &b})) {
        int ia = detail::node_or(a, tape), ib = detail::node_or(b, tape);
        Tensor as = a.detached(), bs = b.detached();
        int id = tape->record({ia, ib}, out.shape(), [ia, ib, as, bs](const Tensor& g, Tape& t) {
            if (ia >= 0)
                t.accumulate(ia, detail::reduce_to_shape(
                                     detail::bcast_binary(g, bs, "mul", [](double x, double y) { return x * y; }),
                                     as.shape()));
            if (ib >= 0)
                t.accumulate(ib, detail::reduce_to_shape(
                                     detail::bcast_binary(g, as, "mul", [](double x, double y) { return x * y; }),
                                     bs.shape()));
        });
        out.bind(tape, id);
    }
    return out;
}

inline Tensor scale(const Tensor& x, double c) {
    return detail::unary_op(
        x, "scale", [c](double v) { return c * v; }, [c](double) { return c; });
}

inline Tensor relu(const Tensor& x) {
    return detail::unary_op(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& x) {
    auto f = [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
    };
    return detail::unary_op(x, "sigmoid", f, [f](double v) {
        double y = f(v);
        return y * (1.0 - y);
    });
}

/// GELU, tanh approximation with the published 0.044715 constant.
inline constexpr double kGeluCubicCoeff = 0.044715;
inline constexpr double kGeluSqrt2OverPi = 0.7978845608028653558799;

inline Tensor gelu(const Tensor& x) {
    auto f = [](double v) {
        double u = kGeluSqrt2OverPi * (v + kGeluCubicCoeff * v * v * v);
        return 0.5 * v * (1.0 + std::tanh(u));
    };
    auto df = [](double v) {
        double u = kGeluSqrt2OverPi * (v + kGeluCubicCoeff * v * v * v);
        double th = std::tanh(u);
        double du = kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubicCoeff * v * v);
        return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    };
    return detail::unary_op(x, "gelu", f, df);
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

/// Batched contraction a[..,m,k] · b[..,k,n] -> [..,m,n]; leading batch
/// dimensions broadcast.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw shape_error("matmul requires rank >= 2, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    size_t m = a.extent(a.rank() - 2), ka = a.extent(a.rank() - 1);
    size_t kb = b.extent(b.rank() - 2), n = b.extent(b.rank() - 1);
    if (ka != kb)
        throw shape_error("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

    Shape abatch(a.shape().begin(), a.shape().end() - 2);
    Shape bbatch(b.shape().begin(), b.shape().end() - 2);
    Shape obatch = detail::broadcast_shape(abatch, bbatch);
    Shape oshape = obatch;
    oshape.push_back(m);
    oshape.push_back(n);

    Tensor out = Tensor::zeros(oshape);
    double* od = out.mut();
    const double* ad = a.data();
    const double* bd = b.data();
    size_t aslab = m * ka, bslab = ka * n, oslab = m * n;
    detail::for_each_bcast(obatch, detail::broadcast_strides(abatch, obatch),
                           detail::broadcast_strides(bbatch, obatch), [&](size_t lin, size_t oa, size_t ob) {
                               detail::mm_acc(ad + oa * aslab, bd + ob * bslab, od + lin * oslab, m, ka, n);
                           });
    detail::check_finite(out, "matmul");

    if (Tape* tape = detail::common_tape({&a, &b})) {
        int ia = detail::node_or(a, tape), ib = detail::node_or(b, tape);
        Tensor as = a.detached(), bs = b.detached();
        int id = tape->record(
            {ia, ib}, out.shape(),
            [ia, ib, as, bs, abatch, bbatch, obatch, m, ka, n](const Tensor& g, Tape& t) {
                const double* gd = g.data();
                size_t aslab = m * ka, bslab = ka * n, oslab = m * n;
                auto sa = detail::broadcast_strides(abatch, obatch);
                auto sb = detail::broadcast_strides(bbatch, obatch);
                if (ia >= 0) {
                    Tensor ga = Tensor::zeros(as.shape());
                    double* gad = ga.mut();
                    const double* bd = bs.data();
                    detail::for_each_bcast(obatch, sa, sb, [&](size_t lin, size_t oa, size_t ob) {
                        detail::mm_acc_nt(gd + lin * oslab, bd + ob * bslab, gad + oa * aslab, m, n, ka);
                    });
                    t.accumulate(ia, std::move(ga));
                }
                if (ib >= 0) {
                    Tensor gb = Tensor::zeros(bs.shape());
                    double* gbd = gb.mut();
                    const double* ad = as.data();
                    detail::for_each_bcast(obatch, sa, sb, [&](size_t lin, size_t oa, size_t ob) {
                        detail::mm_acc_tn(ad + oa * aslab, gd + lin * oslab, gbd + ob * bslab, ka, m, n);
                    });
                    t.accumulate(ib, std::move(gb));
                }
            });
        out.bind(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace detail {
struct ConvDims {
    size_t batch, in_ch, in_h, in_w;
    size_t out_ch, grp_ch, k;
    size_t out_h, out_w;
    size_t groups;
};

inline ConvDims conv_dims(const Tensor& x, const Tensor& w, size_t stride, size_t pad, size_t groups,
                          bool require_exact) {
    if (x.rank() != 4 || w.rank() != 4)
        throw shape_error("conv2d expects x[B,C,H,W] and w[O,C/g,k,k], got " + shape_str(x.shape()) + " and " +
                          shape_str(w.shape()));
    ConvDims d;
    d.batch = x.extent(0);
    d.in_ch = x.extent(1);
    d.in_h = x.extent(2);
    d.in_w = x.extent(3);
    d.out_ch = w.extent(0);
    d.grp_ch = w.extent(1);
    d.k = w.extent(2);
    d.groups = groups;
    if (w.extent(3) != d.k) throw shape_error("conv2d kernel must be square, got " + shape_str(w.shape()));
    if (groups == 0 || d.in_ch % groups != 0 || d.out_ch % groups != 0 || d.grp_ch * groups != d.in_ch)
        throw shape_error("conv2d group mismatch: C=" + std::to_string(d.in_ch) + " O=" + std::to_string(d.out_ch) +
                          " w=" + shape_str(w.shape()) + " groups=" + std::to_string(groups));
    if (stride == 0) throw shape_error("conv2d stride must be positive");
    auto out_extent = [&](size_t in) -> size_t {
        long span = static_cast<long>(in) + 2 * static_cast<long>(pad) - static_cast<long>(d.k);
        if (span < 0) throw shape_error("conv2d kernel exceeds padded input extent");
        if (require_exact && span % static_cast<long>(stride) != 0)
            throw shape_error("conv2d output extent (" + std::to_string(in) + "+2*" + std::to_string(pad) + "-" +
                              std::to_string(d.k) + ")/" + std::to_string(stride) + " is not integral");
        return static_cast<size_t>(span / static_cast<long>(stride)) + 1;
    };
    d.out_h = out_extent(d.in_h);
    d.out_w = out_extent(d.in_w);
    return d;
}

/// Gather one (batch, group) patch matrix: row per output pixel, columns are
/// the Cg*k*k receptive-field taps (zero where the pad window leaves the
/// image).
inline void im2col_group(const double* xplane_base, const ConvDims& d, size_t stride, size_t pad, double* col) {
    size_t kk = d.k * d.k;
    size_t row_len = d.grp_ch * kk;
    for (size_t oh = 0; oh < d.out_h; ++oh) {
        for (size_t ow = 0; ow < d.out_w; ++ow) {
            double* row = col + (oh * d.out_w + ow) * row_len;
            for (size_t cg = 0; cg < d.grp_ch; ++cg) {
                const double* xplane = xplane_base + cg * d.in_h * d.in_w;
                for (size_t u = 0; u < d.k; ++u) {
                    long ih = static_cast<long>(oh * stride + u) - static_cast<long>(pad);
                    double* dst = row + cg * kk + u * d.k;
                    if (ih < 0 || ih >= static_cast<long>(d.in_h)) {
                        for (size_t v = 0; v < d.k; ++v) dst[v] = 0.0;
                        continue;
                    }
                    const double* xrow = xplane + static_cast<size_t>(ih) * d.in_w;
                    for (size_t v = 0; v < d.k; ++v) {
                        long iw = static_cast<long>(ow * stride + v) - static_cast<long>(pad);
                        dst[v] = (iw < 0 || iw >= static_cast<long>(d.in_w)) ? 0.0 : xrow[static_cast<size_t>(iw)];
                    }
                }
            }
        }
    }
}

/// Scatter-add the patch-matrix gradient back onto the input plane.
inline void col2im_group(const double* col, const ConvDims& d, size_t stride, size_t pad, double* gxplane_base) {
    size_t kk = d.k * d.k;
    size_t row_len = d.grp_ch * kk;
    for (size_t oh = 0; oh < d.out_h; ++oh) {
        for (size_t ow = 0; ow < d.out_w; ++ow) {
            const double* row = col + (oh * d.out_w + ow) * row_len;
            for (size_t cg = 0; cg < d.grp_ch; ++cg) {
                double* gxplane = gxplane_base + cg * d.in_h * d.in_w;
                for (size_t u = 0; u < d.k; ++u) {
                    long ih = static_cast<long>(oh * stride + u) - static_cast<long>(pad);
                    if (ih < 0 || ih >= static_cast<long>(d.in_h)) continue;
                    const double* src = row + cg * kk + u * d.k;
                    double* gxrow = gxplane + static_cast<size_t>(ih) * d.in_w;
                    for (size_t v = 0; v < d.k; ++v) {
                        long iw = static_cast<long>(ow * stride + v) - static_cast<long>(pad);
                        if (iw >= 0 && iw < static_cast<long>(d.in_w)) gxrow[static_cast<size_t>(iw)] += src[v];
                    }
                }
            }
        }
    }
}
}  // namespace detail

namespace detail {
/// Pointwise (1x1, stride 1, ungrouped) convolution as a per-batch matmul:
/// out[b] = W(OxC) . x[b](CxHW) + bias.
inline Tensor conv2d_pointwise(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvDims& d) {
    size_t hw = d.in_h * d.in_w;
    Tensor out({d.batch, d.out_ch, d.out_h, d.out_w});
    double* od = out.mut();
    const double* xd = x.data();
    const double* wd = w.data();
    for (size_t b = 0; b < d.batch; ++b) {
        double* obase = od + b * d.out_ch * hw;
        if (bias.defined()) {
            const double* bd = bias.data();
            for (size_t o = 0; o < d.out_ch; ++o) std::fill(obase + o * hw, obase + (o + 1) * hw, bd[o]);
        }
        mm_acc(wd, xd + b * d.in_ch * hw, obase, d.out_ch, d.in_ch, hw);
    }
    check_finite(out, "conv2d");

    Tape* tape = common_tape(bias.defined() ? std::initializer_list<const Tensor*>{&x, &w, &bias}
                                            : std::initializer_list<const Tensor*>{&x, &w});
    if (tape) {
        int ix = node_or(x, tape), iw = node_or(w, tape);
        int ib = bias.defined() ? node_or(bias, tape) : -1;
        Tensor xs = x.detached(), ws = w.detached();
        int id = tape->record({ix, iw, ib}, out.shape(), [=](const Tensor& g, Tape& t) {
            size_t hw2 = d.in_h * d.in_w;
            const double* gd = g.data();
            if (ib >= 0) {
                Tensor gb = Tensor::zeros({d.out_ch});
                double* gbd = gb.mut();
                for (size_t b = 0; b < d.batch; ++b)
                    for (size_t o = 0; o < d.out_ch; ++o) {
                        const double* grow = gd + (b * d.out_ch + o) * hw2;
                        double acc = 0.0;
                        for (size_t i = 0; i < hw2; ++i) acc += grow[i];
                        gbd[o] += acc;
                    }
                t.accumulate(ib, std::move(gb));
            }
            if (ix >= 0) {
                Tensor gx = Tensor::zeros(xs.shape());
                double* gxd = gx.mut();
                const double* wd2 = ws.data();
                for (size_t b = 0; b < d.batch; ++b)
                    mm_acc_tn(wd2, gd + b * d.out_ch * hw2, gxd + b * d.in_ch * hw2, d.in_ch, d.out_ch, hw2);
                t.accumulate(ix, std::move(gx));
            }
            if (iw >= 0) {
                Tensor gw = Tensor::zeros(ws.shape());
                double* gwd = gw.mut();
                const double* xd2 = xs.data();
                for (size_t b = 0; b < d.batch; ++b)
                    mm_acc_nt(gd + b * d.out_ch * hw2, xd2 + b * d.in_ch * hw2, gwd, d.out_ch, hw2, d.in_ch);
                t.accumulate(iw, std::move(gw));
            }
        });
        out.bind(tape, id);
    }
    return out;
}
/// Depthwise stride-1 convolution, one plane at a time with contiguous
/// row accumulation (no patch matrix).
inline Tensor conv2d_depthwise1(const Tensor& x, const Tensor& w, const Tensor& bias, size_t pad,
                                const ConvDims& d) {
    Tensor out({d.batch, d.out_ch, d.out_h, d.out_w});
    double* od = out.mut();
    const double* xd = x.data();
    const double* wd = w.data();
    auto run_plane = [&](const double* xplane, const double* wplane, double* oplane) {
        for (size_t u = 0; u < d.k; ++u) {
            for (size_t v = 0; v < d.k; ++v) {
                double wv = wplane[u * d.k + v];
                long whi = static_cast<long>(d.in_w) + static_cast<long>(pad) - static_cast<long>(v);
                long hhi = static_cast<long>(d.in_h) + static_cast<long>(pad) - static_cast<long>(u);
                if (whi <= 0 || hhi <= 0) continue;
                size_t ow_lo = v >= pad ? 0 : pad - v;
                size_t ow_hi = std::min<size_t>(d.out_w, static_cast<size_t>(whi));
                size_t oh_lo = u >= pad ? 0 : pad - u;
                size_t oh_hi = std::min<size_t>(d.out_h, static_cast<size_t>(hhi));
                for (size_t oh = oh_lo; oh < oh_hi; ++oh) {
                    const double* xrow = xplane + (oh + u - pad) * d.in_w + v - pad;
                    double* orow = oplane + oh * d.out_w;
                    for (size_t ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wv * xrow[ow];
                }
            }
        }
    };
    for (size_t b = 0; b < d.batch; ++b)
        for (size_t c = 0; c < d.out_ch; ++c) {
            double* oplane = od + (b * d.out_ch + c) * d.out_h * d.out_w;
            std::fill(oplane, oplane + d.out_h * d.out_w, bias.defined() ? bias.data()[c] : 0.0);
            run_plane(xd + (b * d.in_ch + c) * d.in_h * d.in_w, wd + c * d.k * d.k, oplane);
        }
    check_finite(out, "conv2d");

    Tape* tape = common_tape(bias.defined() ? std::initializer_list<const Tensor*>{&x, &w, &bias}
                                            : std::initializer_list<const Tensor*>{&x, &w});
    if (tape) {
        int ix = node_or(x, tape), iw = node_or(w, tape);
        int ib = bias.defined() ? node_or(bias, tape) : -1;
        Tensor xs = x.detached(), ws = w.detached();
        int id = tape->record({ix, iw, ib}, out.shape(), [=](const Tensor& g, Tape& t) {
            const double* gd = g.data();
            size_t pixels = d.out_h * d.out_w;
            if (ib >= 0) {
                Tensor gb = Tensor::zeros({d.out_ch});
                double* gbd = gb.mut();
                for (size_t b = 0; b < d.batch; ++b)
                    for (size_t c = 0; c < d.out_ch; ++c) {
                        const double* gplane = gd + (b * d.out_ch + c) * pixels;
                        double acc = 0.0;
                        for (size_t i = 0; i < pixels; ++i) acc += gplane[i];
                        gbd[c] += acc;
                    }
                t.accumulate(ib, std::move(gb));
            }
            if (ix < 0 && iw < 0) return;
            Tensor gx = Tensor::zeros(xs.shape());
            Tensor gw = Tensor::zeros(ws.shape());
            double* gxd = gx.mut();
            double* gwd = gw.mut();
            const double* xd2 = xs.data();
            const double* wd2 = ws.data();
            for (size_t b = 0; b < d.batch; ++b)
                for (size_t c = 0; c < d.out_ch; ++c) {
                    const double* gplane = gd + (b * d.out_ch + c) * pixels;
                    const double* xplane = xd2 + (b * d.in_ch + c) * d.in_h * d.in_w;
                    double* gxplane = gxd + (b * d.in_ch + c) * d.in_h * d.in_w;
                    const double* wplane = wd2 + c * d.k * d.k;
                    double* gwplane = gwd + c * d.k * d.k;
                    for (size_t u = 0; u < d.k; ++u)
                        for (size_t v = 0; v < d.k; ++v) {
                            double wv = wplane[u * d.k + v];
                            double gwacc = 0.0;
                            long whi = static_cast<long>(d.in_w) + static_cast<long>(pad) - static_cast<long>(v);
                            long hhi = static_cast<long>(d.in_h) + static_cast<long>(pad) - static_cast<long>(u);
                            if (whi <= 0 || hhi <= 0) continue;
                            size_t ow_lo = v >= pad ? 0 : pad - v;
                            size_t ow_hi = std::min<size_t>(d.out_w, static_cast<size_t>(whi));
                            size_t oh_lo = u >= pad ? 0 : pad - u;
                            size_t oh_hi = std::min<size_t>(d.out_h, static_cast<size_t>(hhi));
                            for (size_t oh = oh_lo; oh < oh_hi; ++oh) {
                                const double* xrow = xplane + (oh + u - pad) * d.in_w + v - pad;
                                double* gxrow = gxplane + (oh + u - pad) * d.in_w + v - pad;
                                const double* grow = gplane + oh * d.out_w;
                                for (size_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    gxrow[ow] += wv * grow[ow];
                                    gwacc += xrow[ow] * grow[ow];
                                }
                            }
                            gwplane[u * d.k + v] += gwacc;
                        }
                }
            if (ix >= 0) t.accumulate(ix, std::move(gx));
            if (iw >= 0) t.accumulate(iw, std::move(gw));
        });
        out.bind(tape, id);
    }
    return out;
}
}  // namespace detail

/// Cross-correlation (no kernel flip). By default the output extent must be
/// integral; require_exact=false floors instead (overlapping patch embeds).
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, size_t stride, size_t pad,
                     size_t groups = 1, bool require_exact = true) {
    detail::ConvDims d = detail::conv_dims(x, w, stride, pad, groups, require_exact);
    if (bias.defined() && bias.numel() != d.out_ch)
        throw shape_error("conv2d bias extent " + shape_str(bias.shape()) + " != out channels " +
                          std::to_string(d.out_ch));
    if (d.k == 1 && stride == 1 && pad == 0 && groups == 1) return detail::conv2d_pointwise(x, w, bias, d);
    if (groups == d.in_ch && d.grp_ch == 1 && d.out_ch == d.in_ch && stride == 1)
        return detail::conv2d_depthwise1(x, w, bias, pad, d);

    size_t pixels = d.out_h * d.out_w;
    size_t row_len = d.grp_ch * d.k * d.k;
    size_t opg = d.out_ch / d.groups;

    Tensor out({d.batch, d.out_ch, d.out_h, d.out_w});
    double* od = out.mut();
    const double* xd = x.data();
    const double* wd = w.data();
    std::vector<double> col(pixels * row_len);
    for (size_t b = 0; b < d.batch; ++b) {
        for (size_t grp = 0; grp < d.groups; ++grp) {
            detail::im2col_group(xd + (b * d.in_ch + grp * d.grp_ch) * d.in_h * d.in_w, d, stride, pad, col.data());
            double* obase = od + (b * d.out_ch + grp * opg) * pixels;
            if (bias.defined()) {
                const double* bd = bias.data() + grp * opg;
                for (size_t o = 0; o < opg; ++o) std::fill(obase + o * pixels, obase + (o + 1) * pixels, bd[o]);
            }
            detail::mm_acc_nt(wd + grp * opg * row_len, col.data(), obase, opg, row_len, pixels);
        }
    }
    detail::check_finite(out, "conv2d");

    Tape* tape = detail::common_tape(bias.defined() ? std::initializer_list<const Tensor*>{&x, &w, &bias}
                                                    : std::initializer_list<const Tensor*>{&x, &w});
    if (tape) {
        int ix = detail::node_or(x, tape), iw = detail::node_or(w, tape);
        int ib = bias.defined() ? detail::node_or(bias, tape) : -1;
        Tensor xs = x.detached(), ws = w.detached();
        int id = tape->record({ix, iw, ib}, out.shape(), [=](const Tensor& g, Tape& t) {
            const double* gd = g.data();
            if (ib >= 0) {
                Tensor gb = Tensor::zeros({d.out_ch});
                double* gbd = gb.mut();
                for (size_t b = 0; b < d.batch; ++b)
                    for (size_t o = 0; o < d.out_ch; ++o) {
                        const double* gplane = gd + (b * d.out_ch + o) * pixels;
                        double acc = 0.0;
                        for (size_t i = 0; i < pixels; ++i) acc += gplane[i];
                        gbd[o] += acc;
                    }
                t.accumulate(ib, std::move(gb));
            }
            if (ix < 0 && iw < 0) return;
            Tensor gx = Tensor::zeros(xs.shape());
            Tensor gw = Tensor::zeros(ws.shape());
            double* gxd = gx.mut();
            double* gwd = gw.mut();
            const double* xd2 = xs.data();
            const double* wd2 = ws.data();
            std::vector<double> col2(pixels * row_len);
            std::vector<double> gcol(pixels * row_len);
            // g as (opg x pixels) blocks per group: gw += g . col, gcol = g^T . w
            for (size_t b = 0; b < d.batch; ++b) {
                for (size_t grp = 0; grp < d.groups; ++grp) {
                    detail::im2col_group(xd2 + (b * d.in_ch + grp * d.grp_ch) * d.in_h * d.in_w, d, stride, pad,
                                         col2.data());
                    const double* gblock = gd + (b * d.out_ch + grp * opg) * pixels;
                    if (iw >= 0)
                        detail::mm_acc(gblock, col2.data(), gwd + grp * opg * row_len, opg, pixels, row_len);
                    if (ix >= 0) {
                        std::fill(gcol.begin(), gcol.end(), 0.0);
                        detail::mm_acc_tn(gblock, wd2 + grp * opg * row_len, gcol.data(), pixels, opg, row_len);
                        detail::col2im_group(gcol.data(), d, stride, pad,
                                             gxd + (b * d.in_ch + grp * d.grp_ch) * d.in_h * d.in_w);
                    }
                }
            }
            if (ix >= 0) t.accumulate(ix, std::move(gx));
            if (iw >= 0) t.accumulate(iw, std::move(gw));
        });
        out.bind(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// pooling / resampling
// ---------------------------------------------------------------------------

/// Adaptive average pooling to bins x bins output cells. Cell (i,j) averages
/// the window [floor(iH/bins), ceil((i+1)H/bins)) x [floor(jW/bins), ...).
inline Tensor adaptive_avg_pool2d(const Tensor& x, size_t bins) {
    if (x.rank() != 4) throw shape_error("adaptive_avg_pool2d expects x[B,C,H,W], got " + shape_str(x.shape()));
    size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    if (bins < 1) throw shape_error("adaptive_avg_pool2d bins must be >= 1");
    if (bins > H || bins > W)
        throw shape_error("adaptive_avg_pool2d bins " + std::to_string(bins) + " exceed input extent " +
                          std::to_string(H) + "x" + std::to_string(W));

    auto lo = [&](size_t i, size_t extent) { return i * extent / bins; };
    auto hi = [&](size_t i, size_t extent) { return ((i + 1) * extent + bins - 1) / bins; };

    Tensor out({B, C, bins, bins});
    double* od = out.mut();
    const double* xd = x.data();
    for (size_t bc = 0; bc < B * C; ++bc) {
        const double* plane = xd + bc * H * W;
        double* oplane = od + bc * bins * bins;
        for (size_t i = 0; i < bins; ++i) {
            size_t r0 = lo(i, H), r1 = hi(i, H);
            for (size_t j = 0; j < bins; ++j) {
                size_t c0 = lo(j, W), c1 = hi(j, W);
                double acc = 0.0;
                for (size_t r = r0; r < r1; ++r)
                    for (size_t c = c0; c < c1; ++c) acc += plane[r * W + c];
                oplane[i * bins + j] = acc / static_cast<double>((r1 - r0) * (c1 - c0));
            }
        }
    }
    detail::check_finite(out, "adaptive_avg_pool2d");

    if (Tape* tape = x.tape()) {
        int ix = x.node();
        Shape xshape = x.shape();
        int id = tape->record({ix}, out.shape(), [=](const Tensor& g, Tape& t) {
            Tensor gx = Tensor::zeros(xshape);
            double* gxd = gx.mut();
            const double* gd = g.data();
            for (size_t bc = 0; bc < B * C; ++bc) {
                double* plane = gxd + bc * H * W;
                const double* gplane = gd + bc * bins * bins;
                for (size_t i = 0; i < bins; ++i) {
                    size_t r0 = i * H / bins, r1 = ((i + 1) * H + bins - 1) / bins;
                    for (size_t j = 0; j < bins; ++j) {
                        size_t c0 = j * W / bins, c1 = ((j + 1) * W + bins - 1) / bins;
                        double gv = gplane[i * bins + j] / static_cast<double>((r1 - r0) * (c1 - c0));
                        for (size_t r = r0; r < r1; ++r)
                            for (size_t c = c0; c < c1; ++c) plane[r * W + c] += gv;
                    }
                }
            }
            t.accumulate(ix, std::move(gx));
        });
        out.bind(tape, id);
    }
    return out;
}

namespace detail {
struct LerpIndex {
    std::vector<size_t> i0, i1;
    std::vector<double> frac;
};

/// align_corners=false source coordinates, clamped at the borders.
inline LerpIndex lerp_index(size_t in_extent, size_t out_extent) {
    LerpIndex li;
    li.i0.resize(out_extent);
    li.i1.resize(out_extent);
    li.frac.resize(out_extent);
    double s = static_cast<double>(in_extent) / static_cast<double>(out_extent);
    for (size_t i = 0; i < out_extent; ++i) {
        double src = (static_cast<double>(i) + 0.5) * s - 0.5;
        if (src < 0.0) src = 0.0;
        size_t lo = std::min(static_cast<size_t>(src), in_extent - 1);
        li.i0[i] = lo;
        li.i1[i] = std::min(lo + 1, in_extent - 1);
        li.frac[i] = src - static_cast<double>(lo);
    }
    return li;
}
}  // namespace detail

/// Bilinear upsampling (align_corners=false). Identity when output size
/// equals input size.
inline Tensor bilinear_upsample(const Tensor& x, size_t out_h, size_t out_w) {
    if (x.rank() != 4) throw shape_error("bilinear_upsample expects x[B,C,H,W], got " + shape_str(x.shape()));
    size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    if (out_h < H || out_w < W)
        throw shape_error("bilinear_upsample target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                          " smaller than input " + std::to_string(H) + "x" + std::to_string(W));

    detail::LerpIndex ri = detail::lerp_index(H, out_h);
    detail::LerpIndex ci = detail::lerp_index(W, out_w);

    Tensor out({B, C, out_h, out_w});
    double* od = out.mut();
    const double* xd = x.data();
    for (size_t bc = 0; bc < B * C; ++bc) {
        const double* plane = xd + bc * H * W;
        double* oplane = od + bc * out_h * out_w;
        for (size_t i = 0; i < out_h; ++i) {
            const double* top = plane + ri.i0[i] * W;
            const double* bot = plane + ri.i1[i] * W;
            double fr = ri.frac[i];
            double* orow = oplane + i * out_w;
            for (size_t j = 0; j < out_w; ++j) {
                double fc = ci.frac[j];
                double t = top[ci.i0[j]] * (1.0 - fc) + top[ci.i1[j]] * fc;
                double b = bot[ci.i0[j]] * (1.0 - fc) + bot[ci.i1[j]] * fc;
                orow[j] = t * (1.0 - fr) + b * fr;
            }
        }
    }
    detail::check_finite(out, "bilinear_upsample");

    if (Tape* tape = x.tape()) {
        int ix = x.node();
        Shape xshape = x.shape();
        int id = tape->record({ix}, out.shape(), [=](const Tensor& g, Tape& t) {
            Tensor gx = Tensor::zeros(xshape);
            double* gxd = gx.mut();
            const double* gd = g.data();
            for (size_t bc = 0; bc < B * C; ++bc) {
                double* plane = gxd + bc * H * W;
                const double* gplane = gd + bc * out_h * out_w;
                for (size_t i = 0; i < out_h; ++i) {
                    double fr = ri.frac[i];
                    double* top = plane + ri.i0[i] * W;
                    double* bot = plane + ri.i1[i] * W;
                    const double* grow = gplane + i * out_w;
                    for (size_t j = 0; j < out_w; ++j) {
                        double fc = ci.frac[j];
                        double gv = grow[j];
                        top[ci.i0[j]] += gv * (1.0 - fr) * (1.0 - fc);
                        top[ci.i1[j]] += gv * (1.0 - fr) * fc;
                        bot[ci.i0[j]] += gv * fr * (1.0 - fc);
                        bot[ci.i1[j]] += gv * fr * fc;
                    }
                }
            }
            t.accumulate(ix, std::move(gx));
        });
        out.bind(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

/// Numerically stable softmax along `axis` (negative counts from the back).
inline Tensor softmax(const Tensor& x, int axis) {
    int r = static_cast<int>(x.rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw shape_error("softmax axis out of range for " + shape_str(x.shape()));
    size_t len = x.extent(static_cast<size_t>(axis));
    size_t inner = 1, outer = 1;
    for (size_t i = static_cast<size_t>(axis) + 1; i < x.rank(); ++i) inner *= x.extent(i);
    for (size_t i = 0; i < static_cast<size_t>(axis); ++i) outer *= x.extent(i);

    Tensor out(x.shape());
    double* od = out.mut();
    const double* xd = x.data();
    for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
            size_t base = o * len * inner + in;
            double mx = xd[base];
            for (size_t l = 1; l < len; ++l) mx = std::max(mx, xd[base + l * inner]);
            double sum = 0.0;
            for (size_t l = 0; l < len; ++l) {
                double e = std::exp(xd[base + l * inner] - mx);
                od[base + l * inner] = e;
                sum += e;
            }
            double inv = 1.0 / sum;
            for (size_t l = 0; l < len; ++l) od[base + l * inner] *= inv;
        }
    }
    detail::check_finite(out, "softmax");

    if (Tape* tape = x.tape()) {
        int ix = x.node();
        Tensor ys = out.detached();
        int id = tape->record({ix}, out.shape(), [=](const Tensor& g, Tape& t) {
            Tensor gx(ys.shape());
            double* gxd = gx.mut();
            const double* gd = g.data();
            const double* yd = ys.data();
            for (size_t o = 0; o < outer; ++o) {
                for (size_t in = 0; in < inner; ++in) {
                    size_t base = o * len * inner + in;
                    double dot = 0.0;
                    for (size_t l = 0; l < len; ++l) dot += gd[base + l * inner] * yd[base + l * inner];
                    for (size_t l = 0; l < len; ++l) {
                        size_t p = base + l * inner;
                        gxd[p] = yd[p] * (gd[p] - dot);
                    }
                }
            }
            t.accumulate(ix, std::move(gx));
        });
        out.bind(tape, id);
    }
    return out;
}

/// Layer normalization over the last axis, then affine gamma/beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6) {
    if (x.rank() < 1) throw shape_error("layer_norm requires rank >= 1");
    size_t C = x.extent(x.rank() - 1);
    if (gamma.numel() != C || beta.numel() != C)
        throw shape_error("layer_norm affine extent mismatch: C=" + std::to_string(C) + " gamma=" +
                          shape_str(gamma.shape()) + " beta=" + shape_str(beta.shape()));
    if (!(eps > 0.0)) throw config_error("layer_norm eps must be positive");

    size_t rows = x.numel() / C;
    Tensor out(x.shape());
    double* od = out.mut();
    const double* xd = x.data();
    const double* gd = gamma.data();
    const double* bd = beta.data();
    for (size_t r = 0; r < rows; ++r) {
        const double* row = xd + r * C;
        double* orow = od + r * C;
        double mean = 0.0;
        for (size_t c = 0; c < C; ++c) mean += row[c];
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (size_t c = 0; c < C; ++c) {
            double dv = row[c] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(C);
        double inv = 1.0 / std::sqrt(var + eps);
        for (size_t c = 0; c < C; ++c) orow[c] = (row[c] - mean) * inv * gd[c] + bd[c];
    }
    detail::check_finite(out, "layer_norm");

    Tape* tape = detail::common_tape({&x, &gamma, &beta});
    if (tape) {
        int ix = detail::node_or(x, tape), ig = detail::node_or(gamma, tape), ib = detail::node_or(beta, tape);
        Tensor xs = x.detached(), gs = gamma.detached();
        int id = tape->record({ix, ig, ib}, out.shape(), [=](const Tensor& g, Tape& t) {
            size_t n = rows;
            const double* gg = g.data();
            const double* xv = xs.data();
            const double* gamv = gs.data();
            Tensor gx = Tensor::zeros(xs.shape());
            Tensor ggamma = Tensor::zeros({C});
            Tensor gbeta = Tensor::zeros({C});
            double* gxd = gx.mut();
            double* ggd = ggamma.mut();
            double* gbd = gbeta.mut();
            for (size_t r = 0; r < n; ++r) {
                const double* row = xv + r * C;
                const double* grow = gg + r * C;
                double* gxrow = gxd + r * C;
                double mean = 0.0;
                for (size_t c = 0; c < C; ++c) mean += row[c];
                mean /= static_cast<double>(C);
                double var = 0.0;
                for (size_t c = 0; c < C; ++c) {
                    double dv = row[c] - mean;
                    var += dv * dv;
                }
                var /= static_cast<double>(C);
                double inv = 1.0 / std::sqrt(var + eps);
                double gh_mean = 0.0, ghy_mean = 0.0;
                for (size_t c = 0; c < C; ++c) {
                    double y = (row[c] - mean) * inv;
                    double gh = grow[c] * gamv[c];
                    gh_mean += gh;
                    ghy_mean += gh * y;
                    ggd[c] += grow[c] * y;
                    gbd[c] += grow[c];
                }
                gh_mean /= static_cast<double>(C);
                ghy_mean /= static_cast<double>(C);
                for (size_t c = 0; c < C; ++c) {
                    double y = (row[c] - mean) * inv;
                    double gh = grow[c] * gamv[c];
                    gxrow[c] = (gh - gh_mean - y * ghy_mean) * inv;
                }
            }
            if (ix >= 0) t.accumulate(ix, std::move(gx));
            if (ig >= 0) t.accumulate(ig, std::move(ggamma));
            if (ib >= 0) t.accumulate(ib, std::move(gbeta));
        });
        out.bind(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
    Tensor out = x.with_shape(shape);  // throws on numel mismatch
    if (Tape* tape = x.tape()) {
        int ix = x.node();
        Shape xshape = x.shape();
        int id = tape->record({ix}, shape, [ix, xshape](const Tensor& g, Tape& t) {
            t.accumulate(ix, g.with_shape(xshape));
        });
        out.bind(tape, id);
    }
    return out;
}

/// Swap two axes (materialized copy).
inline Tensor transpose(const Tensor& x, size_t a0, size_t a1) {
    if (a0 >= x.rank() || a1 >= x.rank()) throw shape_error("transpose axis out of range for " + shape_str(x.shape()));
    if (a0 == a1) return reshape(x, x.shape());
    Shape oshape = x.shape();
    std::swap(oshape[a0], oshape[a1]);
    std::vector<size_t> xstrides = detail::contiguous_strides(x.shape());
    std::swap(xstrides[a0], xstrides[a1]);

    Tensor out(oshape);
    double* od = out.mut();
    const double* xd = x.data();
    std::vector<size_t> zero(oshape.size(), 0);
    detail::for_each_bcast(oshape, xstrides, zero, [&](size_t lin, size_t ox, size_t) { od[lin] = xd[ox]; });

    if (Tape* tape = x.tape()) {
        int ix = x.node();
        int id = tape->record({ix}, oshape, [ix, a0, a1](const Tensor& g, Tape& t) {
            t.accumulate(ix, transpose(g, a0, a1));
        });
        out.bind(tape, id);
    }
    return out;
}

/// Concatenate along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& xs, size_t axis) {
    if (xs.empty()) throw shape_error("concat of zero tensors");
    size_t r = xs[0].rank();
    if (axis >= r) throw shape_error("concat axis out of range");
    Shape oshape = xs[0].shape();
    size_t total = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].rank() != r) throw shape_error("concat rank mismatch at input " + std::to_string(i));
        for (size_t dd = 0; dd < r; ++dd)
            if (dd != axis && xs[i].extent(dd) != oshape[dd])
                throw shape_error("concat extent mismatch at input " + std::to_string(i) + ": " +
                                  shape_str(xs[i].shape()) + " vs " + shape_str(oshape));
        total += xs[i].extent(axis);
    }
    oshape[axis] = total;

    size_t inner = 1, outer = 1;
    for (size_t i = axis + 1; i < r; ++i) inner *= oshape[i];
    for (size_t i = 0; i < axis; ++i) outer *= oshape[i];

    Tensor out(oshape);
    double* od = out.mut();
    size_t off = 0;
    for (const Tensor& t : xs) {
        size_t len = t.extent(axis) * inner;
        const double* td = t.data();
        for (size_t o = 0; o < outer; ++o)
            std::copy(td + o * len, td + (o + 1) * len, od + o * total * inner + off);
        off += len;
    }

    Tape* tape = nullptr;
    for (const Tensor& t : xs)
        if (t.tape()) {
            if (tape && tape != t.tape()) throw state_error("operands recorded on different tapes");
            tape = t.tape();
        }
    if (tape) {
        std::vector<int> ids;
        std::vector<size_t> lens;
        for (const Tensor& t : xs) {
            ids.push_back(detail::node_or(t, tape));
            lens.push_back(t.extent(axis) * inner);
        }
        std::vector<Shape> shapes;
        for (const Tensor& t : xs) shapes.push_back(t.shape());
        int id = tape->record(ids, oshape, [ids, lens, shapes, outer, total, inner](const Tensor& g, Tape& t) {
            const double* gd = g.data();
            size_t off2 = 0;
            for (size_t i = 0; i < ids.size(); ++i) {
                if (ids[i] >= 0) {
                    Tensor gi(shapes[i]);
                    double* gid = gi.mut();
                    for (size_t o = 0; o < outer; ++o)
                        std::copy(gd + o * total * inner + off2, gd + o * total * inner + off2 + lens[i],
                                  gid + o * lens[i]);
                    t.accumulate(ids[i], std::move(gi));
                }
                off2 += lens[i];
            }
        });
        out.bind(tape, id);
    }
    return out;
}

/// Sum of all elements, as a rank-0 tensor.
inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    const double* xd = x.data();
    size_t n = x.numel();
    for (size_t i = 0; i < n; ++i) acc += xd[i];
    Tensor out = Tensor::scalar(acc);
    detail::check_finite(out, "sum");
    if (Tape* tape = x.tape()) {
        int ix = x.node();
        Shape xshape = x.shape();
        int id = tape->record({ix}, out.shape(), [ix, xshape](const Tensor& g, Tape& t) {
            t.accumulate(ix, Tensor::full(xshape, g.value()));
        });
        out.bind(tape, id);
    }
    return out;
}

/// x[..., in] . w[in, out] + b[out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw shape_error("linear weight must be rank 2, got " + shape_str(w.shape()));
    Tensor y = matmul(x, w);
    if (b.defined()) y = add(y, b);
    return y;
}

}  // namespace u3m
