#include "lungrisk/tokenizer.hpp"

#include <cmath>
#include <stdexcept>

namespace lungrisk {

PatchGrid patchify(const Volume& v, const Index3& patch_size) {
    for (int a = 0; a < 3; ++a) {
        if (patch_size[a] <= 0) throw std::invalid_argument("patchify: patch_size must be positive");
        if (v.shape[a] % patch_size[a] != 0)
            throw std::invalid_argument("patchify: volume dim " + std::to_string(a) + " (" +
                                        std::to_string(v.shape[a]) + ") not divisible by patch size " +
                                        std::to_string(patch_size[a]));
    }
    PatchGrid g;
    g.patch_size = patch_size;
    g.grid_dims = {v.shape[0] / patch_size[0], v.shape[1] / patch_size[1],
                   v.shape[2] / patch_size[2]};
    const int N = static_cast<int>(product(g.grid_dims));
    const int P = g.patch_volume();
    g.tokens.resize(N, P);
    g.patch_coords.resize(N);
    int i = 0;
    for (int cx = 0; cx < g.grid_dims[0]; ++cx)
        for (int cy = 0; cy < g.grid_dims[1]; ++cy)
            for (int cz = 0; cz < g.grid_dims[2]; ++cz, ++i) {
                g.patch_coords[i] = {cx, cy, cz};
                int j = 0;
                for (int px = 0; px < patch_size[0]; ++px)
                    for (int py = 0; py < patch_size[1]; ++py)
                        for (int pz = 0; pz < patch_size[2]; ++pz, ++j)
                            g.tokens(i, j) = v.at(cx * patch_size[0] + px, cy * patch_size[1] + py,
                                                  cz * patch_size[2] + pz);
            }
    return g;
}

Volume unpatchify(const PatchGrid& g, const Real3& spacing) {
    Index3 shape{g.grid_dims[0] * g.patch_size[0], g.grid_dims[1] * g.patch_size[1],
                 g.grid_dims[2] * g.patch_size[2]};
    Volume v(shape, spacing);
    for (int i = 0; i < g.num_patches(); ++i) {
        const Index3& c = g.patch_coords[i];
        int j = 0;
        for (int px = 0; px < g.patch_size[0]; ++px)
            for (int py = 0; py < g.patch_size[1]; ++py)
                for (int pz = 0; pz < g.patch_size[2]; ++pz, ++j)
                    v.at(c[0] * g.patch_size[0] + px, c[1] * g.patch_size[1] + py,
                         c[2] * g.patch_size[2] + pz) = static_cast<float>(g.tokens(i, j));
    }
    return v;
}

std::vector<uint8_t> patch_labels(const LabelVolume& m, const Index3& patch_size) {
    Index3 grid{m.shape[0] / patch_size[0], m.shape[1] / patch_size[1],
                m.shape[2] / patch_size[2]};
    for (int a = 0; a < 3; ++a)
        if (m.shape[a] % patch_size[a] != 0)
            throw std::invalid_argument("patch_labels: shape not divisible by patch size");
    std::vector<uint8_t> out(static_cast<size_t>(product(grid)), 0);
    int i = 0;
    for (int cx = 0; cx < grid[0]; ++cx)
        for (int cy = 0; cy < grid[1]; ++cy)
            for (int cz = 0; cz < grid[2]; ++cz, ++i) {
                int counts[256] = {0};
                for (int px = 0; px < patch_size[0]; ++px)
                    for (int py = 0; py < patch_size[1]; ++py)
                        for (int pz = 0; pz < patch_size[2]; ++pz)
                            ++counts[m.at(cx * patch_size[0] + px, cy * patch_size[1] + py,
                                          cz * patch_size[2] + pz)];
                int best = 0, best_count = 0;
                for (int l = 1; l < 256; ++l)
                    if (counts[l] > best_count) {
                        best = l;
                        best_count = counts[l];
                    }
                out[i] = static_cast<uint8_t>(best);
            }
    return out;
}

std::vector<uint8_t> patch_any(const LabelVolume& m, const Index3& patch_size) {
    Index3 grid{m.shape[0] / patch_size[0], m.shape[1] / patch_size[1],
                m.shape[2] / patch_size[2]};
    for (int a = 0; a < 3; ++a)
        if (m.shape[a] % patch_size[a] != 0)
            throw std::invalid_argument("patch_any: shape not divisible by patch size");
    std::vector<uint8_t> out(static_cast<size_t>(product(grid)), 0);
    int i = 0;
    for (int cx = 0; cx < grid[0]; ++cx)
        for (int cy = 0; cy < grid[1]; ++cy)
            for (int cz = 0; cz < grid[2]; ++cz, ++i)
                for (int px = 0; px < patch_size[0] && !out[i]; ++px)
                    for (int py = 0; py < patch_size[1] && !out[i]; ++py)
                        for (int pz = 0; pz < patch_size[2]; ++pz)
                            if (m.at(cx * patch_size[0] + px, cy * patch_size[1] + py,
                                     cz * patch_size[2] + pz) != 0) {
                                out[i] = 1;
                                break;
                            }
    return out;
}

RopeTables RopeTables::make(int head_dim, double base) {
    if (head_dim <= 0 || head_dim % 2 != 0)
        throw std::invalid_argument("RopeTables: head_dim must be positive and even");
    RopeTables t;
    t.head_dim = head_dim;
    int pair_share = head_dim / 6;  // pairs per axis for x and y
    t.axis_dims = {2 * pair_share, 2 * pair_share, head_dim - 4 * pair_share};
    for (int a = 0; a < 3; ++a) {
        int half = t.axis_dims[a] / 2;
        t.freqs[a].resize(half);
        for (int j = 0; j < half; ++j)
            t.freqs[a][j] = std::pow(base, -2.0 * j / static_cast<double>(t.axis_dims[a]));
    }
    return t;
}

void apply_rope_3d(Mat& x, int row_offset, const std::vector<Index3>& coords,
                   const RopeTables& tables, bool inverse) {
    if (x.cols() != tables.head_dim)
        throw std::invalid_argument("apply_rope_3d: head_dim mismatch (got " +
                                    std::to_string(x.cols()) + ", tables expect " +
                                    std::to_string(tables.head_dim) + ")");
    if (row_offset + static_cast<int>(coords.size()) != x.rows())
        throw std::invalid_argument("apply_rope_3d: coords do not cover rows");
    const double sign = inverse ? -1.0 : 1.0;
    for (size_t i = 0; i < coords.size(); ++i) {
        Eigen::Index r = row_offset + static_cast<Eigen::Index>(i);
        int off = 0;
        for (int a = 0; a < 3; ++a) {
            int half = tables.axis_dims[a] / 2;
            double c = static_cast<double>(coords[i][a]);
            for (int j = 0; j < half; ++j) {
                double theta = sign * c * tables.freqs[a][j];
                double ct = std::cos(theta), st = std::sin(theta);
                double u = x(r, off + 2 * j), v = x(r, off + 2 * j + 1);
                x(r, off + 2 * j) = u * ct - v * st;
                x(r, off + 2 * j + 1) = u * st + v * ct;
            }
            off += tables.axis_dims[a];
        }
    }
}

void TokenEmbedder::init(const std::string& prefix, int patch_volume, int embed_dim,
                         const Index3& grid_dims_, Rng& rng) {
    grid_dims = grid_dims_;
    proj.init(prefix + ".proj", patch_volume, embed_dim, rng, /*bias=*/false);
    pos_table.setup(prefix + ".pos_table", static_cast<int>(product(grid_dims)), embed_dim);
    trunc_normal_init(pos_table.value, rng, 0.02);
    cls.setup(prefix + ".cls", embed_dim, 1);
    trunc_normal_init(cls.value, rng, 0.02);
}

Mat TokenEmbedder::forward(const Mat& tokens, const std::vector<int>& patch_indices) const {
    if (tokens.rows() != static_cast<Eigen::Index>(patch_indices.size()))
        throw std::invalid_argument("TokenEmbedder: indices do not match token rows");
    const Eigen::Index M = tokens.rows(), D = proj.out_dim();
    Mat emb(M + 1, D);
    emb.row(0) = cls.value.col(0).transpose();
    emb.bottomRows(M).noalias() = tokens * proj.W.value;
    for (Eigen::Index i = 0; i < M; ++i) {
        int pi = patch_indices[i];
        if (pi < 0 || pi >= pos_table.value.rows())
            throw std::invalid_argument("TokenEmbedder: patch grid exceeds position table");
        emb.row(i + 1) += pos_table.value.row(pi);
    }
    return emb;
}

Mat TokenEmbedder::forward(const PatchGrid& g) const {
    std::vector<int> idx(g.num_patches());
    for (int i = 0; i < g.num_patches(); ++i) idx[i] = i;
    if (g.num_patches() != pos_table.value.rows())
        throw std::invalid_argument("TokenEmbedder: patch grid exceeds position table");
    return forward(g.tokens, idx);
}

Mat TokenEmbedder::backward(const Mat& tokens, const std::vector<int>& patch_indices,
                            const Mat& dy) {
    const Eigen::Index M = tokens.rows();
    cls.grad.col(0) += dy.row(0).transpose();
    for (Eigen::Index i = 0; i < M; ++i)
        pos_table.grad.row(patch_indices[i]) += dy.row(i + 1);
    proj.W.grad.noalias() += tokens.transpose() * dy.bottomRows(M);
    return dy.bottomRows(M) * proj.W.value.transpose();
}

}  // namespace lungrisk
