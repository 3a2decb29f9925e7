#pragma once

#include "lungrisk/types.hpp"

#include <cstdint>
#include <vector>

namespace lungrisk {

// 3D scalar grid, x-major storage (z fastest): idx = (x*ny + y)*nz + z.
// origin_offset records the voxel position of this grid's corner inside the
// volume it was cropped from (zeros for an uncropped volume).
template <typename T>
struct Grid3 {
    std::vector<T> data;
    Index3 shape{0, 0, 0};
    Real3 spacing{1.0, 1.0, 1.0};
    Index3 origin_offset{0, 0, 0};

    Grid3() = default;
    Grid3(Index3 shape_, Real3 spacing_, T fill = T{})
        : data(static_cast<size_t>(product(shape_)), fill),
          shape(shape_),
          spacing(spacing_) {}

    size_t index(int x, int y, int z) const {
        return (static_cast<size_t>(x) * shape[1] + y) * shape[2] + z;
    }
    T& at(int x, int y, int z) { return data[index(x, y, z)]; }
    const T& at(int x, int y, int z) const { return data[index(x, y, z)]; }

    bool empty() const { return data.empty(); }
    size_t size() const { return data.size(); }

    bool same_grid(const Grid3& o) const {
        return shape == o.shape && spacing == o.spacing;
    }
};

using Volume = Grid3<float>;
using LabelVolume = Grid3<uint8_t>;

}  // namespace lungrisk
