#pragma once

#include <cmath>
#include <vector>

#include "u3m/ops.hpp"
#include "u3m/segmap.hpp"

namespace u3m {

/// Mean over non-ignored pixels of -log softmax(logits)[label].
/// logits are [B,N,H,W]; labels has one SegMap per batch element.
inline Tensor cross_entropy_loss(const Tensor& logits, const std::vector<SegMap>& labels, int ignore_index) {
    if (logits.rank() != 4)
        throw shape_error("cross_entropy_loss expects logits [B,N,H,W], got " + shape_str(logits.shape()));
    size_t B = logits.extent(0), N = logits.extent(1), H = logits.extent(2), W = logits.extent(3);
    if (labels.size() != B)
        throw shape_error("label batch " + std::to_string(labels.size()) + " != logits batch " + std::to_string(B));
    for (size_t b = 0; b < B; ++b)
        if (labels[b].rows != H || labels[b].cols != W)
            throw shape_error("label raster " + std::to_string(labels[b].rows) + "x" + std::to_string(labels[b].cols) +
                              " != logits extent " + std::to_string(H) + "x" + std::to_string(W));

    const double* d = logits.data();
    size_t plane = H * W;
    double total = 0.0;
    size_t counted = 0;
    for (size_t b = 0; b < B; ++b) {
        for (size_t p = 0; p < plane; ++p) {
            int32_t lab = labels[b].v[p];
            if (lab == ignore_index) continue;
            if (lab < 0 || static_cast<size_t>(lab) >= N)
                throw data_error("label value " + std::to_string(lab) + " out of range [0," + std::to_string(N) +
                                 ") at batch " + std::to_string(b) + " pixel " + std::to_string(p));
            double mx = d[(b * N) * plane + p];
            for (size_t c = 1; c < N; ++c) mx = std::max(mx, d[(b * N + c) * plane + p]);
            double se = 0.0;
            for (size_t c = 0; c < N; ++c) se += std::exp(d[(b * N + c) * plane + p] - mx);
            double lse = mx + std::log(se);
            total += lse - d[(b * N + static_cast<size_t>(lab)) * plane + p];
            ++counted;
        }
    }
    if (counted == 0) throw data_error("degenerate batch: every pixel is ignored");
    Tensor out = Tensor::scalar(total / static_cast<double>(counted));
    detail::check_finite(out, "cross_entropy_loss");

    if (Tape* tape = logits.tape()) {
        int il = logits.node();
        Tensor saved = logits.detached();
        std::vector<SegMap> labs = labels;
        int id = tape->record({il}, out.shape(), [=](const Tensor& g, Tape& t) {
            double gv = g.value() / static_cast<double>(counted);
            Tensor gl = Tensor::zeros(saved.shape());
            double* gld = gl.mut();
            const double* sd = saved.data();
            for (size_t b = 0; b < B; ++b) {
                for (size_t p = 0; p < plane; ++p) {
                    int32_t lab = labs[b].v[p];
                    if (lab == ignore_index) continue;
                    double mx = sd[(b * N) * plane + p];
                    for (size_t c = 1; c < N; ++c) mx = std::max(mx, sd[(b * N + c) * plane + p]);
                    double se = 0.0;
                    for (size_t c = 0; c < N; ++c) se += std::exp(sd[(b * N + c) * plane + p] - mx);
                    for (size_t c = 0; c < N; ++c) {
                        double soft = std::exp(sd[(b * N + c) * plane + p] - mx) / se;
                        double onehot = (static_cast<size_t>(lab) == c) ? 1.0 : 0.0;
                        gld[(b * N + c) * plane + p] = gv * (soft - onehot);
                    }
                }
            }
            t.accumulate(il, std::move(gl));
        });
        out.bind(tape, id);
    }
    return out;
}

}  // namespace u3m
