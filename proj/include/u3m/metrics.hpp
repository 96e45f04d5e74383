#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "u3m/error.hpp"
#include "u3m/segmap.hpp"

namespace u3m {

/// N x N pixel-count accumulator: rows are ground truth, columns predicted.
/// Ignored pixels never enter. Integer arithmetic until the final division,
/// so streaming updates are exactly equivalent to one-shot evaluation.
class ConfusionMatrix {
  public:
    explicit ConfusionMatrix(size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {
        if (num_classes < 1) throw config_error("confusion matrix needs at least one class");
    }

    size_t num_classes() const { return n_; }
    uint64_t at(size_t gt, size_t pred) const { return counts_[gt * n_ + pred]; }

    uint64_t total() const {
        uint64_t s = 0;
        for (uint64_t c : counts_) s += c;
        return s;
    }

    void update(const SegMap& pred, const SegMap& gt, int ignore_index) {
        if (pred.rows != gt.rows || pred.cols != gt.cols)
            throw shape_error("prediction raster " + std::to_string(pred.rows) + "x" + std::to_string(pred.cols) +
                              " != ground truth " + std::to_string(gt.rows) + "x" + std::to_string(gt.cols));
        for (size_t p = 0; p < gt.v.size(); ++p) {
            int32_t g = gt.v[p];
            if (g == ignore_index) continue;
            int32_t q = pred.v[p];
            if (g < 0 || static_cast<size_t>(g) >= n_)
                throw data_error("ground-truth class " + std::to_string(g) + " out of range at pixel " +
                                 std::to_string(p));
            if (q < 0 || static_cast<size_t>(q) >= n_)
                throw data_error("predicted class " + std::to_string(q) + " out of range at pixel " +
                                 std::to_string(p));
            ++counts_[static_cast<size_t>(g) * n_ + static_cast<size_t>(q)];
        }
    }

    void merge(const ConfusionMatrix& other) {
        if (other.n_ != n_) throw shape_error("cannot merge confusion matrices of different class counts");
        for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    }

    /// Per-class IoU; classes with an empty union come back as NaN and are
    /// excluded from the mean.
    std::vector<double> iou_per_class() const {
        std::vector<double> iou(n_, std::numeric_limits<double>::quiet_NaN());
        for (size_t c = 0; c < n_; ++c) {
            uint64_t tp = at(c, c);
            uint64_t fp = 0, fn = 0;
            for (size_t o = 0; o < n_; ++o) {
                if (o == c) continue;
                fp += at(o, c);
                fn += at(c, o);
            }
            uint64_t uni = tp + fp + fn;
            if (uni > 0) iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
        }
        return iou;
    }

    double miou() const {
        std::vector<double> iou = iou_per_class();
        double sum = 0.0;
        size_t defined = 0;
        for (double v : iou) {
            if (std::isnan(v)) continue;
            sum += v;
            ++defined;
        }
        if (defined == 0) throw metric_error("mIoU undefined: no class has a non-empty union");
        return sum / static_cast<double>(defined);
    }

  private:
    size_t n_;
    std::vector<uint64_t> counts_;
};

inline std::string format_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v * 100.0);
    return buf;
}

/// Two-line per-class IoU table: names then values x100 to one decimal, with
/// a trailing mean column after "|". Undefined classes render as an em dash
/// and stay out of the mean.
inline std::string format_table(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    if (class_names.size() != cm.num_classes())
        throw config_error("got " + std::to_string(class_names.size()) + " class names for " +
                           std::to_string(cm.num_classes()) + " classes");
    std::vector<double> iou = cm.iou_per_class();
    std::string header, values;
    for (size_t c = 0; c < iou.size(); ++c) {
        if (c) {
            header += " ";
            values += " ";
        }
        header += class_names[c];
        values += std::isnan(iou[c]) ? std::string("—") : format_percent(iou[c]);
    }
    header += " | mIoU";
    values += " | " + format_percent(cm.miou());
    return header + "\n" + values + "\n";
}

}  // namespace u3m
