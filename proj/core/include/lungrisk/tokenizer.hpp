#pragma once

#include "lungrisk/nn.hpp"
#include "lungrisk/types.hpp"
#include "lungrisk/volume.hpp"

#include <array>
#include <vector>

namespace lungrisk {

// Non-overlapping patch decomposition of a volume. tokens row i holds the
// raw values of patch i; patch_coords is the row-major enumeration of
// grid_dims (last axis fastest), matching the volume's storage order.
struct PatchGrid {
    Mat tokens;  // [N, P]
    Index3 grid_dims{0, 0, 0};
    Index3 patch_size{8, 8, 8};
    std::vector<Index3> patch_coords;

    int num_patches() const { return static_cast<int>(tokens.rows()); }
    int patch_volume() const { return patch_size[0] * patch_size[1] * patch_size[2]; }
};

PatchGrid patchify(const Volume& v, const Index3& patch_size);
Volume unpatchify(const PatchGrid& g, const Real3& spacing = {1.0, 1.0, 1.0});

// Reduces a label volume to per-patch labels: the most frequent nonzero
// label among the patch's voxels (smallest label wins ties), 0 when the
// patch contains no labeled voxel.
std::vector<uint8_t> patch_labels(const LabelVolume& m, const Index3& patch_size);

// Per-patch binary flag: 1 when any voxel of the patch is nonzero.
std::vector<uint8_t> patch_any(const LabelVolume& m, const Index3& patch_size);

// Rotary tables for one head dimension, split into three even axis blocks
// (x, y, z), frequencies base^(-2j/d_axis).
struct RopeTables {
    int head_dim = 0;
    Index3 axis_dims{0, 0, 0};
    std::array<std::vector<double>, 3> freqs;

    static RopeTables make(int head_dim, double base = 10000.0);
};

// Rotates consecutive value pairs of rows [row_offset, row_offset+coords.size())
// of x (one attention head, cols = head_dim) by angle coord_axis * freq.
// Rows before row_offset (e.g. a CLS token) are left untouched. inverse
// applies the transpose rotation, which is also the gradient map.
void apply_rope_3d(Mat& x, int row_offset, const std::vector<Index3>& coords,
                   const RopeTables& tables, bool inverse = false);

// Patch projection (bias-free), learned absolute position table over a fixed
// grid, and a learned CLS vector prepended at row 0.
struct TokenEmbedder {
    Linear proj;     // [P -> D]
    Param pos_table; // [N_grid, D]
    Param cls;       // [D, 1]
    Index3 grid_dims{0, 0, 0};

    void init(const std::string& prefix, int patch_volume, int embed_dim,
              const Index3& grid_dims_, Rng& rng);

    int embed_dim() const { return proj.out_dim(); }

    // tokens [M, P] with patch_indices into the position table; returns
    // [M+1, D] with CLS at row 0.
    Mat forward(const Mat& tokens, const std::vector<int>& patch_indices) const;
    Mat forward(const PatchGrid& g) const;

    // Accumulates parameter grads; returns dL/dtokens [M, P].
    Mat backward(const Mat& tokens, const std::vector<int>& patch_indices, const Mat& dy);

    void collect(ParamRefs& out) {
        proj.collect(out);
        out.push_back(&pos_table);
        out.push_back(&cls);
    }
};

}  // namespace lungrisk
