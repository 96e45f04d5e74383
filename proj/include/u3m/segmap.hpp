#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "u3m/error.hpp"

namespace u3m {

/// H x W raster of integer class indices; 255 conventionally marks ignored
/// pixels.
struct SegMap {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<int32_t> v;

    SegMap() = default;
    SegMap(size_t r, size_t c, int32_t fill = 0) : rows(r), cols(c), v(r * c, fill) {}

    int32_t at(size_t r, size_t c) const { return v[r * cols + c]; }
    int32_t& at(size_t r, size_t c) { return v[r * cols + c]; }
    size_t size() const { return v.size(); }

    bool operator==(const SegMap& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

}  // namespace u3m
