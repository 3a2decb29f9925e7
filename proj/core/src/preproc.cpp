#include "lungrisk/preproc.hpp"

#include <algorithm>
#include <cmath>

namespace lungrisk {

Volume window_and_normalize(const Volume& v, const WindowSpec& w) {
    w.validate();
    Volume out = v;
    const double inv = 1.0 / (w.high - w.low);
    for (float& x : out.data) {
        double c = std::clamp(static_cast<double>(x), w.low, w.high);
        double n = 2.0 * (c - w.low) * inv - 1.0;
        x = std::clamp(static_cast<float>(n), -1.0f, 1.0f);
    }
    return out;
}

namespace {

Index3 resampled_shape(const Index3& shape, const Real3& in_sp, const Real3& out_sp) {
    Index3 out;
    for (int a = 0; a < 3; ++a) {
        if (out_sp[a] <= 0.0)
            throw std::invalid_argument("resample: target_spacing must be positive");
        out[a] = (int)std::llround(shape[a] * in_sp[a] / out_sp[a]);
        if (out[a] < 1)
            throw DataError("resample: degenerate output shape along axis " + std::to_string(a));
    }
    return out;
}

// Voxel-center alignment: target index i sits at source index
// (i + 0.5) * out_sp / in_sp - 0.5.
double source_coord(int i, double in_sp, double out_sp) {
    return (i + 0.5) * out_sp / in_sp - 0.5;
}

}  // namespace

Volume resample_trilinear(const Volume& v, const Real3& target_spacing) {
    if (v.empty()) throw DataError("resample: empty volume");
    if (v.spacing == target_spacing) return v;
    Index3 out_shape = resampled_shape(v.shape, v.spacing, target_spacing);
    Volume out(out_shape, target_spacing);
    out.origin_offset = v.origin_offset;
    auto clampi = [](int i, int n) { return std::clamp(i, 0, n - 1); };
    for (int x = 0; x < out_shape[0]; ++x) {
        double sx = source_coord(x, v.spacing[0], target_spacing[0]);
        int x0 = (int)std::floor(sx);
        double fx = sx - x0;
        int xa = clampi(x0, v.shape[0]), xb = clampi(x0 + 1, v.shape[0]);
        for (int y = 0; y < out_shape[1]; ++y) {
            double sy = source_coord(y, v.spacing[1], target_spacing[1]);
            int y0 = (int)std::floor(sy);
            double fy = sy - y0;
            int ya = clampi(y0, v.shape[1]), yb = clampi(y0 + 1, v.shape[1]);
            for (int z = 0; z < out_shape[2]; ++z) {
                double sz = source_coord(z, v.spacing[2], target_spacing[2]);
                int z0 = (int)std::floor(sz);
                double fz = sz - z0;
                int za = clampi(z0, v.shape[2]), zb = clampi(z0 + 1, v.shape[2]);
                double c00 = v.at(xa, ya, za) * (1 - fx) + v.at(xb, ya, za) * fx;
                double c01 = v.at(xa, ya, zb) * (1 - fx) + v.at(xb, ya, zb) * fx;
                double c10 = v.at(xa, yb, za) * (1 - fx) + v.at(xb, yb, za) * fx;
                double c11 = v.at(xa, yb, zb) * (1 - fx) + v.at(xb, yb, zb) * fx;
                double c0 = c00 * (1 - fy) + c10 * fy;
                double c1 = c01 * (1 - fy) + c11 * fy;
                out.at(x, y, z) = static_cast<float>(c0 * (1 - fz) + c1 * fz);
            }
        }
    }
    return out;
}

LabelVolume resample_nearest(const LabelVolume& m, const Real3& target_spacing) {
    if (m.empty()) throw DataError("resample: empty volume");
    if (m.spacing == target_spacing) return m;
    Index3 out_shape = resampled_shape(m.shape, m.spacing, target_spacing);
    LabelVolume out(out_shape, target_spacing);
    out.origin_offset = m.origin_offset;
    for (int x = 0; x < out_shape[0]; ++x) {
        int sx = std::clamp((int)std::llround(source_coord(x, m.spacing[0], target_spacing[0])), 0,
                            m.shape[0] - 1);
        for (int y = 0; y < out_shape[1]; ++y) {
            int sy = std::clamp((int)std::llround(source_coord(y, m.spacing[1], target_spacing[1])),
                                0, m.shape[1] - 1);
            for (int z = 0; z < out_shape[2]; ++z) {
                int sz = std::clamp(
                    (int)std::llround(source_coord(z, m.spacing[2], target_spacing[2])), 0,
                    m.shape[2] - 1);
                out.at(x, y, z) = m.at(sx, sy, sz);
            }
        }
    }
    return out;
}

CropBox lung_bounding_box(const LabelVolume& mask, const Index3& pad_voxels) {
    Index3 lo{mask.shape[0], mask.shape[1], mask.shape[2]};
    Index3 hi{-1, -1, -1};
    for (int x = 0; x < mask.shape[0]; ++x)
        for (int y = 0; y < mask.shape[1]; ++y)
            for (int z = 0; z < mask.shape[2]; ++z)
                if (mask.at(x, y, z) != 0) {
                    lo[0] = std::min(lo[0], x);
                    lo[1] = std::min(lo[1], y);
                    lo[2] = std::min(lo[2], z);
                    hi[0] = std::max(hi[0], x);
                    hi[1] = std::max(hi[1], y);
                    hi[2] = std::max(hi[2], z);
                }
    if (hi[0] < 0) throw DataError("no lung region found");
    CropBox box;
    for (int a = 0; a < 3; ++a) {
        if (pad_voxels[a] < 0) throw std::invalid_argument("crop_to_lung: pad must be nonnegative");
        box.lo[a] = std::max(0, lo[a] - pad_voxels[a]);
        box.hi[a] = std::min(mask.shape[a], hi[a] + 1 + pad_voxels[a]);
    }
    return box;
}

std::pair<Volume, LabelVolume> crop_to_lung(const Volume& v, const LabelVolume& lobe_mask,
                                            const Index3& pad_voxels) {
    if (v.shape != lobe_mask.shape)
        throw std::invalid_argument("crop_to_lung: mask shape must equal volume shape");
    CropBox box = lung_bounding_box(lobe_mask, pad_voxels);
    return {crop(v, box), crop(lobe_mask, box)};
}

std::pair<Volume, LabelVolume> fit_to_grid(const Volume& v, const LabelVolume& lobe_mask,
                                           const Index3& target_shape, float fill_value) {
    if (v.shape != lobe_mask.shape)
        throw std::invalid_argument("fit_to_grid: mask shape must equal volume shape");
    for (int a = 0; a < 3; ++a)
        if (target_shape[a] < 1) throw std::invalid_argument("fit_to_grid: target must be positive");
    return {fit_grid(v, target_shape, fill_value), fit_grid(lobe_mask, target_shape, (uint8_t)0)};
}

}  // namespace lungrisk
