#include <gtest/gtest.h>

#include "oracles.hpp"
#include "u3m/metrics.hpp"
#include "u3m/rng.hpp"

using namespace u3m;

namespace {

SegMap seg(size_t rows, size_t cols, std::vector<int32_t> v) {
    SegMap m(rows, cols);
    m.v = std::move(v);
    return m;
}

TEST(Confusion, PerfectPredictionIsDiagonal) {
    ConfusionMatrix cm(3);
    SegMap gt = seg(2, 2, {0, 1, 2, 1});
    cm.update(gt, gt, 255);
    EXPECT_EQ(cm.at(0, 0), 1u);
    EXPECT_EQ(cm.at(1, 1), 2u);
    EXPECT_EQ(cm.at(2, 2), 1u);
    EXPECT_EQ(cm.total(), 4u);
    std::vector<double> iou = cm.iou_per_class();
    for (double v : iou) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Confusion, IgnoredPixelsLeaveCountsUntouched) {
    ConfusionMatrix cm(2);
    cm.update(seg(1, 3, {0, 1, 0}), seg(1, 3, {255, 255, 255}), 255);
    EXPECT_EQ(cm.total(), 0u);
}

TEST(Confusion, WorkedExampleCounts) {
    ConfusionMatrix cm(2);
    cm.update(seg(2, 2, {0, 0, 1, 1}), seg(2, 2, {0, 1, 1, 1}), 255);
    EXPECT_EQ(cm.at(0, 0), 1u);
    EXPECT_EQ(cm.at(1, 0), 1u);
    EXPECT_EQ(cm.at(1, 1), 2u);
    EXPECT_EQ(cm.at(0, 1), 0u);
}

TEST(Confusion, OutOfRangeNamesPixel) {
    ConfusionMatrix cm(2);
    try {
        cm.update(seg(1, 2, {0, 7}), seg(1, 2, {0, 1}), 255);
        FAIL() << "expected data_error";
    } catch (const data_error& e) {
        EXPECT_NE(std::string(e.what()).find("pixel 1"), std::string::npos) << e.what();
    }
}

TEST(Iou, AbsentClassUndefined) {
    ConfusionMatrix cm(3);
    cm.update(seg(1, 2, {0, 1}), seg(1, 2, {0, 1}), 255);
    std::vector<double> iou = cm.iou_per_class();
    EXPECT_DOUBLE_EQ(iou[0], 1.0);
    EXPECT_DOUBLE_EQ(iou[1], 1.0);
    EXPECT_TRUE(std::isnan(iou[2]));
    EXPECT_DOUBLE_EQ(cm.miou(), 1.0);  // undefined class excluded
}

TEST(Iou, WorkedExampleSevenTwelfths) {
    ConfusionMatrix cm(2);
    cm.update(seg(1, 4, {0, 0, 1, 1}), seg(1, 4, {0, 1, 1, 1}), 255);
    std::vector<double> iou = cm.iou_per_class();
    EXPECT_DOUBLE_EQ(iou[0], 0.5);
    EXPECT_DOUBLE_EQ(iou[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(cm.miou(), 7.0 / 12.0);
}

TEST(Miou, BinaryTotalConfusionIsZero) {
    ConfusionMatrix cm(2);
    cm.update(seg(1, 4, {1, 1, 0, 0}), seg(1, 4, {0, 0, 1, 1}), 255);
    EXPECT_DOUBLE_EQ(cm.miou(), 0.0);
}

TEST(Miou, NoDefinedClassThrows) {
    ConfusionMatrix cm(2);
    EXPECT_THROW(cm.miou(), metric_error);
}

TEST(Miou, RandomMapsMatchBruteForceExactly) {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        size_t n = 4;
        SegMap pred(16, 16), gt(16, 16);
        for (size_t i = 0; i < pred.v.size(); ++i) {
            pred.v[i] = static_cast<int32_t>(rng.below(n));
            uint64_t g = rng.below(n + 1);
            gt.v[i] = g == n ? 255 : static_cast<int32_t>(g);
        }
        ConfusionMatrix cm(n);
        cm.update(pred, gt, 255);
        EXPECT_DOUBLE_EQ(cm.miou(), oracle::brute_miou(pred, gt, n, 255));
    }
}

TEST(Miou, StreamingEqualsOneShot) {
    Rng rng(11);
    size_t n = 5;
    std::vector<SegMap> preds, gts;
    ConfusionMatrix streamed(n);
    SegMap all_pred(1, 0), all_gt(1, 0);
    for (int img = 0; img < 6; ++img) {
        SegMap p(8, 8), g(8, 8);
        for (size_t i = 0; i < p.v.size(); ++i) {
            p.v[i] = static_cast<int32_t>(rng.below(n));
            uint64_t gv = rng.below(n + 1);
            g.v[i] = gv == n ? 255 : static_cast<int32_t>(gv);
        }
        streamed.update(p, g, 255);
        all_pred.v.insert(all_pred.v.end(), p.v.begin(), p.v.end());
        all_gt.v.insert(all_gt.v.end(), g.v.begin(), g.v.end());
        preds.push_back(std::move(p));
        gts.push_back(std::move(g));
    }
    all_pred.cols = all_pred.v.size();
    all_gt.cols = all_gt.v.size();
    ConfusionMatrix oneshot(n);
    oneshot.update(all_pred, all_gt, 255);
    EXPECT_EQ(streamed.miou(), oneshot.miou());
    EXPECT_EQ(streamed.miou(), oracle::brute_miou_many(preds, gts, n, 255));
}

TEST(Miou, InvariantUnderConsistentRelabeling) {
    Rng rng(13);
    size_t n = 4;
    SegMap pred(10, 10), gt(10, 10);
    for (size_t i = 0; i < pred.v.size(); ++i) {
        pred.v[i] = static_cast<int32_t>(rng.below(n));
        gt.v[i] = static_cast<int32_t>(rng.below(n));
    }
    ConfusionMatrix cm(n);
    cm.update(pred, gt, 255);

    std::vector<int32_t> perm{2, 3, 1, 0};
    SegMap pred2 = pred, gt2 = gt;
    for (auto& v : pred2.v) v = perm[static_cast<size_t>(v)];
    for (auto& v : gt2.v) v = perm[static_cast<size_t>(v)];
    ConfusionMatrix cm2(n);
    cm2.update(pred2, gt2, 255);
    EXPECT_DOUBLE_EQ(cm.miou(), cm2.miou());
}

TEST(Confusion, MergeEqualsElementwiseSum) {
    ConfusionMatrix a(2), b(2);
    a.update(seg(1, 2, {0, 1}), seg(1, 2, {0, 0}), 255);
    b.update(seg(1, 2, {1, 1}), seg(1, 2, {1, 0}), 255);
    ConfusionMatrix merged(2);
    merged.merge(a);
    merged.merge(b);
    for (size_t g = 0; g < 2; ++g)
        for (size_t p = 0; p < 2; ++p) EXPECT_EQ(merged.at(g, p), a.at(g, p) + b.at(g, p));
}

TEST(Format, PerfectTwoClass) {
    ConfusionMatrix cm(2);
    cm.update(seg(1, 4, {0, 0, 1, 1}), seg(1, 4, {0, 0, 1, 1}), 255);
    std::string table = format_table(cm, {"a", "b"});
    EXPECT_NE(table.find("100.0 100.0 | 100.0"), std::string::npos) << table;
}

TEST(Format, WorkedExampleRounding) {
    ConfusionMatrix cm(2);
    cm.update(seg(1, 4, {0, 0, 1, 1}), seg(1, 4, {0, 1, 1, 1}), 255);
    std::string table = format_table(cm, {"a", "b"});
    EXPECT_NE(table.find("50.0 66.7 | 58.3"), std::string::npos) << table;
}

TEST(Format, UndefinedClassRenderedAsDashAndExcluded) {
    ConfusionMatrix cm(3);
    cm.update(seg(1, 2, {0, 1}), seg(1, 2, {0, 1}), 255);
    std::string table = format_table(cm, {"a", "b", "c"});
    EXPECT_NE(table.find("100.0 100.0 — | 100.0"), std::string::npos) << table;
}

TEST(Format, NameCountMismatchRejected) {
    ConfusionMatrix cm(3);
    EXPECT_THROW(format_table(cm, {"a", "b"}), config_error);
}

}  // namespace
