#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "u3m/dataset.hpp"
#include "u3m/rng.hpp"

namespace u3m {

/// Synthetic multimodal scene generator. Modality 0 is a 3-channel raster
/// whose class colors carry the signal; modalities 1..M-1 are 1-channel
/// "thermal" rasters with class-dependent intensity and heavier noise. In a
/// declared fraction of samples modality 0 is degraded to pure noise, so the
/// informative modality shifts from sample to sample.
struct SynthOptions {
    size_t n = 8;
    size_t modalities = 2;
    size_t classes = 3;
    size_t rows = 32;
    size_t cols = 32;
    uint64_t seed = 0;
    double degraded_frac = 0.3;
};

namespace detail {
inline void class_color(size_t cls, size_t classes, double& r, double& g, double& b) {
    // well-separated hues around the color wheel; class 0 (background) is dark gray
    if (cls == 0) {
        r = g = b = 0.15;
        return;
    }
    double hue = 6.283185307179586 * static_cast<double>(cls - 1) / std::max<size_t>(1, classes - 1);
    r = 0.55 + 0.4 * std::cos(hue);
    g = 0.55 + 0.4 * std::cos(hue - 2.0943951023931953);
    b = 0.55 + 0.4 * std::cos(hue + 2.0943951023931953);
}

inline double class_thermal(size_t cls, size_t classes) {
    return (static_cast<double>(cls) + 0.5) / static_cast<double>(classes);
}
}  // namespace detail

/// Deterministic for a given seed (byte-identical datasets). Each label map
/// contains the background plus at least one shape per non-background class.
inline std::vector<ModalitySample> synth_dataset(const SynthOptions& opt) {
    if (opt.n < 1 || opt.modalities < 1 || opt.classes < 2) throw config_error("synth needs n>=1, M>=1, classes>=2");
    if (opt.rows % 32 != 0 || opt.cols % 32 != 0)
        throw config_error("synth extent " + std::to_string(opt.rows) + "x" + std::to_string(opt.cols) +
                           " must be divisible by 32");
    if (opt.degraded_frac < 0.0 || opt.degraded_frac > 1.0) throw config_error("degraded_frac must lie in [0,1]");

    Rng rng(opt.seed);
    std::vector<ModalitySample> out;
    out.reserve(opt.n);
    size_t H = opt.rows, W = opt.cols;

    for (size_t idx = 0; idx < opt.n; ++idx) {
        ModalitySample s;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%05zu", idx);
        s.id = std::string("sample") + buf;

        SegMap label(H, W, 0);
        auto paint = [&] {
            label = SegMap(H, W, 0);
            for (size_t cls = 1; cls < opt.classes; ++cls) {
                size_t shapes = 1 + rng.below(2);
                for (size_t k = 0; k < shapes; ++k) {
                    bool disk = rng.bernoulli(0.5);
                    size_t cy = rng.below(H), cx = rng.below(W);
                    size_t r1 = 3 + rng.below(std::max<size_t>(2, H / 4));
                    size_t r2 = 3 + rng.below(std::max<size_t>(2, W / 4));
                    for (size_t i = 0; i < H; ++i)
                        for (size_t j = 0; j < W; ++j) {
                            double di = (static_cast<double>(i) - static_cast<double>(cy)) / static_cast<double>(r1);
                            double dj = (static_cast<double>(j) - static_cast<double>(cx)) / static_cast<double>(r2);
                            bool inside = disk ? (di * di + dj * dj <= 1.0)
                                               : (std::fabs(di) <= 1.0 && std::fabs(dj) <= 1.0);
                            if (inside) label.at(i, j) = static_cast<int32_t>(cls);
                        }
                }
            }
        };
        paint();
        // every sample exposes at least two classes; late shapes can bury
        // earlier ones, so redraw on the rare degenerate layout
        for (int attempt = 0; attempt < 16; ++attempt) {
            std::set<int32_t> seen(label.v.begin(), label.v.end());
            if (seen.size() >= 2) break;
            paint();
        }
        s.label = label;

        bool degraded = rng.uniform() < opt.degraded_frac;
        Tensor rgb({3, H, W});
        double* rd = rgb.mut();
        for (size_t i = 0; i < H; ++i)
            for (size_t j = 0; j < W; ++j) {
                double r, g, b;
                if (degraded) {
                    r = rng.uniform();
                    g = rng.uniform();
                    b = rng.uniform();
                } else {
                    detail::class_color(static_cast<size_t>(label.at(i, j)), opt.classes, r, g, b);
                    r += rng.normal(0.0, 0.04);
                    g += rng.normal(0.0, 0.04);
                    b += rng.normal(0.0, 0.04);
                }
                rd[(0 * H + i) * W + j] = std::clamp(r, 0.0, 1.0);
                rd[(1 * H + i) * W + j] = std::clamp(g, 0.0, 1.0);
                rd[(2 * H + i) * W + j] = std::clamp(b, 0.0, 1.0);
            }
        s.images.push_back(std::move(rgb));

        for (size_t m = 1; m < opt.modalities; ++m) {
            Tensor th({1, H, W});
            double* td = th.mut();
            for (size_t i = 0; i < H; ++i)
                for (size_t j = 0; j < W; ++j) {
                    double v = detail::class_thermal(static_cast<size_t>(label.at(i, j)), opt.classes) +
                               rng.normal(0.0, 0.08);
                    td[i * W + j] = std::clamp(v, 0.0, 1.0);
                }
            s.images.push_back(std::move(th));
        }

        out.push_back(std::move(s));
    }
    return out;
}

/// Writes a generated dataset under root/<split>/sampleNNNNN/.
inline void write_synth_dataset(const std::filesystem::path& root, const std::string& split,
                                const std::vector<ModalitySample>& samples) {
    for (const ModalitySample& s : samples) write_sample_dir(root / split / s.id, s);
}

}  // namespace u3m
