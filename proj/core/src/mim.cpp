#include "lungrisk/mim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lungrisk {

MaskPlan random_mask(int N, double mask_ratio, Rng& rng) {
    if (N < 2) throw std::invalid_argument("random_mask: need at least 2 tokens");
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
        throw std::invalid_argument("random_mask: mask_ratio must be in (0,1)");
    int n_masked = static_cast<int>(std::lround(mask_ratio * N));
    if (n_masked == 0 || n_masked == N)
        throw std::invalid_argument("random_mask: ratio leaves no visible or no masked tokens");
    std::vector<int> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    // Fisher-Yates with our own rng for cross-platform determinism.
    for (int i = N - 1; i > 0; --i) {
        int j = static_cast<int>(rng.bounded(static_cast<uint64_t>(i) + 1));
        std::swap(perm[i], perm[j]);
    }
    MaskPlan plan;
    plan.mask_ratio = mask_ratio;
    plan.masked_indices.assign(perm.begin(), perm.begin() + n_masked);
    plan.visible_indices.assign(perm.begin() + n_masked, perm.end());
    std::sort(plan.masked_indices.begin(), plan.masked_indices.end());
    std::sort(plan.visible_indices.begin(), plan.visible_indices.end());
    return plan;
}

void MaeModel::init(const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg, int patch_volume,
                    const Index3& grid_dims, Rng& rng) {
    embedder.init("encoder.embed", patch_volume, enc_cfg.embed_dim, grid_dims, rng);
    encoder.init("encoder", enc_cfg, rng);
    EncoderConfig dcfg;
    dcfg.embed_dim = dec_cfg.embed_dim;
    dcfg.depth = dec_cfg.depth;
    dcfg.num_heads = dec_cfg.num_heads;
    dcfg.mlp_ratio = enc_cfg.mlp_ratio;
    enc_to_dec.init("mae.enc_to_dec", enc_cfg.embed_dim, dec_cfg.embed_dim, rng);
    mask_token.setup("mae.mask_token", dec_cfg.embed_dim, 1);
    trunc_normal_init(mask_token.value, rng, 0.02);
    dec_pos.setup("mae.dec_pos", static_cast<int>(product(grid_dims)), dec_cfg.embed_dim);
    trunc_normal_init(dec_pos.value, rng, 0.02);
    decoder.init("mae.decoder", dcfg, rng);
    out_proj.init("mae.out_proj", dec_cfg.embed_dim, patch_volume, rng);
}

Mat MaeModel::forward(const PatchGrid& g, const MaskPlan& plan, Cache* cache,
                      Rng* drop_rng) const {
    const int N = g.num_patches();
    const int V = static_cast<int>(plan.visible_indices.size());
    if (V + static_cast<int>(plan.masked_indices.size()) != N)
        throw std::invalid_argument("MaeModel: mask plan does not match patch count");

    Mat visible_tokens(V, g.tokens.cols());
    std::vector<Index3> visible_coords(V);
    for (int i = 0; i < V; ++i) {
        visible_tokens.row(i) = g.tokens.row(plan.visible_indices[i]);
        visible_coords[i] = g.patch_coords[plan.visible_indices[i]];
    }

    Mat emb = embedder.forward(visible_tokens, plan.visible_indices);  // [V+1, D]
    Encoder::Cache enc_cache;
    Mat enc_out = encoder.forward(emb, visible_coords, 1, cache ? &enc_cache : nullptr, drop_rng);

    Mat proj = enc_to_dec.forward(enc_out);  // [V+1, dec_D]
    const int dec_D = enc_to_dec.out_dim();
    Mat dec_in(N + 1, dec_D);
    dec_in.row(0) = proj.row(0);  // CLS passes through, no position
    for (int i = 0; i < N; ++i)
        dec_in.row(i + 1) = mask_token.value.col(0).transpose() + dec_pos.value.row(i);
    for (int i = 0; i < V; ++i)
        dec_in.row(plan.visible_indices[i] + 1) =
            proj.row(i + 1) + dec_pos.value.row(plan.visible_indices[i]);

    Encoder::Cache dec_cache;
    Mat dec_out =
        decoder.forward(dec_in, g.patch_coords, 1, cache ? &dec_cache : nullptr, drop_rng);
    Mat recon = out_proj.forward(dec_out.bottomRows(N));

    if (cache) {
        cache->plan = plan;
        cache->visible_tokens = std::move(visible_tokens);
        cache->visible_idx = plan.visible_indices;
        cache->visible_coords = std::move(visible_coords);
        cache->all_coords = g.patch_coords;
        cache->enc_cache = std::move(enc_cache);
        cache->enc_out = std::move(enc_out);
        cache->dec_in = std::move(dec_in);
        cache->dec_cache = std::move(dec_cache);
        cache->dec_out = std::move(dec_out);
    }
    return recon;
}

void MaeModel::backward(Cache& c, const Mat& d_recon) {
    const int N = static_cast<int>(c.all_coords.size());
    const int V = static_cast<int>(c.visible_idx.size());

    Mat d_dec_out = Mat::Zero(N + 1, out_proj.in_dim());
    d_dec_out.bottomRows(N) = out_proj.backward(c.dec_out.bottomRows(N), d_recon);
    Mat d_dec_in = decoder.backward(c.dec_cache, c.all_coords, 1, d_dec_out);

    Mat d_proj(V + 1, enc_to_dec.out_dim());
    d_proj.row(0) = d_dec_in.row(0);
    for (int i = 0; i < V; ++i) d_proj.row(i + 1) = d_dec_in.row(c.visible_idx[i] + 1);
    for (int i = 0; i < N; ++i) dec_pos.grad.row(i) += d_dec_in.row(i + 1);
    Vec d_mask = Vec::Zero(mask_token.value.rows());
    std::vector<char> is_visible(N, 0);
    for (int idx : c.visible_idx) is_visible[idx] = 1;
    for (int i = 0; i < N; ++i)
        if (!is_visible[i]) d_mask += d_dec_in.row(i + 1).transpose();
    mask_token.grad.col(0) += d_mask;

    Mat d_enc_out = enc_to_dec.backward(c.enc_out, d_proj);
    Mat d_emb = encoder.backward(c.enc_cache, c.visible_coords, 1, d_enc_out);
    embedder.backward(c.visible_tokens, c.visible_idx, d_emb);
}

void MaeModel::collect(ParamRefs& out) {
    embedder.collect(out);
    encoder.collect(out);
    enc_to_dec.collect(out);
    out.push_back(&mask_token);
    out.push_back(&dec_pos);
    decoder.collect(out);
    out_proj.collect(out);
}

Mat mim_targets(const PatchGrid& g, const MimOptions& opt) {
    if (!opt.normalize_targets) return g.tokens;
    Mat t = g.tokens;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        double mu = t.row(i).mean();
        double var = (t.row(i).array() - mu).square().mean();
        t.row(i) = (t.row(i).array() - mu) / std::sqrt(var + 1e-6);
    }
    return t;
}

namespace {

void check_mae_shapes(const Mat& recon, const PatchGrid& target, const MaskPlan& plan,
                      const MimOptions& opt) {
    if (recon.rows() != target.tokens.rows() || recon.cols() != target.tokens.cols())
        throw std::invalid_argument("mae_loss: reconstruction shape mismatch");
    if (!opt.loss_on_all_patches && plan.masked_indices.empty())
        throw std::invalid_argument("mae_loss: empty masked set");
}

}  // namespace

double mae_loss(const Mat& recon, const PatchGrid& target, const MaskPlan& plan,
                const MimOptions& opt) {
    check_mae_shapes(recon, target, plan, opt);
    Mat t = mim_targets(target, opt);
    const Eigen::Index P = recon.cols();
    if (opt.loss_on_all_patches) {
        return (recon - t).squaredNorm() / static_cast<double>(recon.rows() * P);
    }
    double sum = 0.0;
    for (int idx : plan.masked_indices) sum += (recon.row(idx) - t.row(idx)).squaredNorm();
    return sum / static_cast<double>(plan.masked_indices.size() * P);
}

Mat mae_loss_grad(const Mat& recon, const PatchGrid& target, const MaskPlan& plan,
                  const MimOptions& opt) {
    check_mae_shapes(recon, target, plan, opt);
    Mat t = mim_targets(target, opt);
    const Eigen::Index P = recon.cols();
    Mat d = Mat::Zero(recon.rows(), P);
    if (opt.loss_on_all_patches) {
        d = 2.0 * (recon - t) / static_cast<double>(recon.rows() * P);
        return d;
    }
    const double c = 2.0 / static_cast<double>(plan.masked_indices.size() * P);
    for (int idx : plan.masked_indices) d.row(idx) = c * (recon.row(idx) - t.row(idx));
    return d;
}

}  // namespace lungrisk
