#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "u3m/netpbm.hpp"
#include "u3m/segmap.hpp"
#include "u3m/tensor.hpp"

namespace u3m {

/// One multimodal training/eval sample: M aligned images in [0,1] plus a
/// class-index label raster.
struct ModalitySample {
    std::vector<Tensor> images;  // each [C_m, H, W]
    SegMap label;
    std::string id;
};

inline Tensor tensor_from_raster(const Raster& r) {
    Tensor t({r.channels, r.rows, r.cols});
    double* d = t.mut();
    for (size_t ch = 0; ch < r.channels; ++ch)
        for (size_t i = 0; i < r.rows; ++i)
            for (size_t j = 0; j < r.cols; ++j) d[(ch * r.rows + i) * r.cols + j] = r.at(i, j, ch) / 255.0;
    return t;
}

inline Raster raster_from_tensor(const Tensor& t) {
    if (t.rank() != 3) throw shape_error("raster_from_tensor expects [C,H,W], got " + shape_str(t.shape()));
    Raster r;
    r.channels = t.extent(0);
    r.rows = t.extent(1);
    r.cols = t.extent(2);
    r.px.resize(r.rows * r.cols * r.channels);
    const double* d = t.data();
    for (size_t ch = 0; ch < r.channels; ++ch)
        for (size_t i = 0; i < r.rows; ++i)
            for (size_t j = 0; j < r.cols; ++j) {
                double v = d[(ch * r.rows + i) * r.cols + j];
                v = std::min(1.0, std::max(0.0, v));
                r.at(i, j, ch) = static_cast<uint8_t>(std::lround(v * 255.0));
            }
    return r;
}

inline SegMap segmap_from_raster(const Raster& r) {
    if (r.channels != 1) throw data_error("label raster must be single-channel PGM");
    SegMap m(r.rows, r.cols);
    for (size_t i = 0; i < r.px.size(); ++i) m.v[i] = r.px[i];
    return m;
}

inline Raster raster_from_segmap(const SegMap& m) {
    Raster r;
    r.rows = m.rows;
    r.cols = m.cols;
    r.channels = 1;
    r.px.resize(m.size());
    for (size_t i = 0; i < m.size(); ++i) {
        if (m.v[i] < 0 || m.v[i] > 255) throw data_error("label value " + std::to_string(m.v[i]) + " not byte-sized");
        r.px[i] = static_cast<uint8_t>(m.v[i]);
    }
    return r;
}

namespace detail {
/// Edge-replicating pad of an image tensor to target extents (centered).
inline Tensor pad_image_to(const Tensor& img, size_t rows, size_t cols) {
    size_t C = img.extent(0), H = img.extent(1), W = img.extent(2);
    size_t top = (rows - H) / 2, left = (cols - W) / 2;
    Tensor out({C, rows, cols});
    double* od = out.mut();
    const double* id = img.data();
    for (size_t c = 0; c < C; ++c)
        for (size_t i = 0; i < rows; ++i) {
            size_t si = std::min(H - 1, i >= top ? i - top : 0);
            for (size_t j = 0; j < cols; ++j) {
                size_t sj = std::min(W - 1, j >= left ? j - left : 0);
                od[(c * rows + i) * cols + j] = id[(c * H + si) * W + sj];
            }
        }
    return out;
}

inline SegMap pad_label_to(const SegMap& m, size_t rows, size_t cols, int ignore_index) {
    size_t top = (rows - m.rows) / 2, left = (cols - m.cols) / 2;
    SegMap out(rows, cols, ignore_index);
    for (size_t i = 0; i < m.rows; ++i)
        for (size_t j = 0; j < m.cols; ++j) out.at(i + top, j + left) = m.at(i, j);
    return out;
}
}  // namespace detail

/// Pad every modality (edge replication) and the label (ignore_index) of a
/// sample up to the next multiple of 32.
inline ModalitySample pad_sample_to_32(ModalitySample s, int ignore_index) {
    size_t H = s.label.rows, W = s.label.cols;
    size_t rows = (H + 31) / 32 * 32, cols = (W + 31) / 32 * 32;
    if (rows == H && cols == W) return s;
    for (Tensor& img : s.images) img = detail::pad_image_to(img, rows, cols);
    s.label = detail::pad_label_to(s.label, rows, cols, ignore_index);
    return s;
}

/// Loads `root/<split>/<sample>/mod<k>.{ppm,pgm}` + `label.pgm` for k in
/// [0, modalities). Pixel values scale to [0,1]; label values must be class
/// indices below num_classes or the ignore value.
inline std::vector<ModalitySample> load_dataset_dir(const std::filesystem::path& root, const std::string& split,
                                                    size_t modalities, size_t num_classes, int ignore_index,
                                                    bool pad_to_32 = false) {
    namespace fs = std::filesystem;
    fs::path dir = root / split;
    if (!fs::is_directory(dir)) throw data_error("dataset split directory not found: " + dir.string());

    std::vector<fs::path> sample_dirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) sample_dirs.push_back(e.path());
    std::sort(sample_dirs.begin(), sample_dirs.end());
    if (sample_dirs.empty()) throw data_error("dataset split is empty: " + dir.string());

    std::vector<ModalitySample> out;
    out.reserve(sample_dirs.size());
    for (const fs::path& sd : sample_dirs) {
        ModalitySample s;
        s.id = sd.filename().string();
        for (size_t k = 0; k < modalities; ++k) {
            fs::path ppm = sd / ("mod" + std::to_string(k) + ".ppm");
            fs::path pgm = sd / ("mod" + std::to_string(k) + ".pgm");
            fs::path chosen = fs::exists(ppm) ? ppm : pgm;
            if (!fs::exists(chosen))
                throw data_error("sample " + s.id + " is missing modality file mod" + std::to_string(k) +
                                 ".ppm (or .pgm)");
            s.images.push_back(tensor_from_raster(read_netpbm(chosen)));
        }
        fs::path lab = sd / "label.pgm";
        if (!fs::exists(lab)) throw data_error("sample " + s.id + " is missing label.pgm");
        s.label = segmap_from_raster(read_netpbm(lab));

        for (size_t k = 0; k < s.images.size(); ++k)
            if (s.images[k].extent(1) != s.label.rows || s.images[k].extent(2) != s.label.cols)
                throw data_error("sample " + s.id + " modality " + std::to_string(k) +
                                 " extent disagrees with the label raster");
        for (int32_t v : s.label.v)
            if (v != ignore_index && (v < 0 || static_cast<size_t>(v) >= num_classes))
                throw data_error("sample " + s.id + " has label value " + std::to_string(v) + " outside [0," +
                                 std::to_string(num_classes) + ") u {" + std::to_string(ignore_index) + "}");

        if (s.label.rows % 32 != 0 || s.label.cols % 32 != 0) {
            if (!pad_to_32)
                throw data_error("sample " + s.id + " extent " + std::to_string(s.label.rows) + "x" +
                                 std::to_string(s.label.cols) + " is not divisible by 32 (enable pad_to_32)");
            s = pad_sample_to_32(std::move(s), ignore_index);
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Loads just the modality images of one sample directory (label optional;
/// used by predict).
inline std::vector<Tensor> load_sample_images(const std::filesystem::path& dir, size_t modalities) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw data_error("sample directory not found: " + dir.string());
    std::vector<Tensor> images;
    for (size_t k = 0; k < modalities; ++k) {
        fs::path ppm = dir / ("mod" + std::to_string(k) + ".ppm");
        fs::path pgm = dir / ("mod" + std::to_string(k) + ".pgm");
        fs::path chosen = fs::exists(ppm) ? ppm : pgm;
        if (!fs::exists(chosen))
            throw data_error("sample " + dir.filename().string() + " is missing modality file mod" +
                             std::to_string(k) + ".ppm (or .pgm)");
        images.push_back(tensor_from_raster(read_netpbm(chosen)));
    }
    for (size_t k = 1; k < images.size(); ++k)
        if (images[k].extent(1) != images[0].extent(1) || images[k].extent(2) != images[0].extent(2))
            throw data_error("sample " + dir.filename().string() + " modalities disagree on extent");
    return images;
}

/// Writes one sample as `dir/mod<k>.ppm|pgm` + `dir/label.pgm` (3-channel
/// modalities as PPM, 1-channel as PGM).
inline void write_sample_dir(const std::filesystem::path& dir, const ModalitySample& s) {
    std::filesystem::create_directories(dir);
    for (size_t k = 0; k < s.images.size(); ++k) {
        Raster r = raster_from_tensor(s.images[k]);
        std::string ext = r.channels == 3 ? ".ppm" : ".pgm";
        write_netpbm(dir / ("mod" + std::to_string(k) + ext), r);
    }
    write_netpbm(dir / "label.pgm", raster_from_segmap(s.label));
}

/// Stacks the m-th modality of a batch of samples into [B, C_m, H, W].
inline Tensor stack_modality(const std::vector<ModalitySample>& batch, size_t m) {
    if (batch.empty()) throw shape_error("cannot stack an empty batch");
    const Tensor& first = batch[0].images.at(m);
    Shape s = first.shape();
    Tensor out({batch.size(), s[0], s[1], s[2]});
    double* od = out.mut();
    size_t slab = first.numel();
    for (size_t b = 0; b < batch.size(); ++b) {
        const Tensor& img = batch[b].images.at(m);
        if (img.shape() != s) throw shape_error("batch images disagree on shape");
        std::copy(img.data(), img.data() + slab, od + b * slab);
    }
    return out;
}

}  // namespace u3m
