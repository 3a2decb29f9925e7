#pragma once

#include "lungrisk/types.hpp"
#include "lungrisk/volume.hpp"

#include <utility>

namespace lungrisk {

struct WindowSpec {
    double low = -1350.0;  // HU
    double high = 150.0;

    void validate() const {
        if (!(low < high)) throw std::invalid_argument("WindowSpec: low must be < high");
    }
};

// out = 2*(clamp(in, low, high) - low)/(high - low) - 1, spacing unchanged.
Volume window_and_normalize(const Volume& v, const WindowSpec& w);

// Output shape = round(in_shape * in_spacing / target_spacing), values by
// trilinear interpolation at target voxel centers mapped into source
// coordinates (edge-clamped). Exact copy when target equals input spacing.
Volume resample_trilinear(const Volume& v, const Real3& target_spacing);

// Nearest-neighbour companion for label volumes.
LabelVolume resample_nearest(const LabelVolume& m, const Real3& target_spacing);

// Axis-aligned bounding box of nonzero labels, expanded by pad and clamped
// to the grid. lo inclusive, hi exclusive. Throws DataError on empty mask.
struct CropBox {
    Index3 lo;
    Index3 hi;
    Index3 shape() const { return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}; }
};
CropBox lung_bounding_box(const LabelVolume& mask, const Index3& pad_voxels);

template <typename T>
Grid3<T> crop(const Grid3<T>& g, const CropBox& box) {
    Index3 out_shape = box.shape();
    Grid3<T> out(out_shape, g.spacing);
    out.origin_offset = {g.origin_offset[0] + box.lo[0], g.origin_offset[1] + box.lo[1],
                         g.origin_offset[2] + box.lo[2]};
    for (int x = 0; x < out_shape[0]; ++x)
        for (int y = 0; y < out_shape[1]; ++y)
            for (int z = 0; z < out_shape[2]; ++z)
                out.at(x, y, z) = g.at(x + box.lo[0], y + box.lo[1], z + box.lo[2]);
    return out;
}

std::pair<Volume, LabelVolume> crop_to_lung(const Volume& v, const LabelVolume& lobe_mask,
                                            const Index3& pad_voxels);

// Center-pads with fill when smaller than target, center-crops when larger.
template <typename T>
Grid3<T> fit_grid(const Grid3<T>& g, const Index3& target, T fill) {
    Grid3<T> out(target, g.spacing, fill);
    out.origin_offset = g.origin_offset;
    Index3 src_lo, dst_lo, span;
    for (int a = 0; a < 3; ++a) {
        if (g.shape[a] >= target[a]) {
            src_lo[a] = (g.shape[a] - target[a]) / 2;
            dst_lo[a] = 0;
            span[a] = target[a];
        } else {
            src_lo[a] = 0;
            dst_lo[a] = (target[a] - g.shape[a]) / 2;
            span[a] = g.shape[a];
        }
        out.origin_offset[a] += src_lo[a] - dst_lo[a];
    }
    for (int x = 0; x < span[0]; ++x)
        for (int y = 0; y < span[1]; ++y)
            for (int z = 0; z < span[2]; ++z)
                out.at(dst_lo[0] + x, dst_lo[1] + y, dst_lo[2] + z) =
                    g.at(src_lo[0] + x, src_lo[1] + y, src_lo[2] + z);
    return out;
}

std::pair<Volume, LabelVolume> fit_to_grid(const Volume& v, const LabelVolume& lobe_mask,
                                           const Index3& target_shape, float fill_value);

}  // namespace lungrisk
