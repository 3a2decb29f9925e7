#include "lungrisk/encoder.hpp"

#include <cmath>

namespace lungrisk {

namespace {

// Inverted dropout keep-scale matrix: entries are 0 or 1/(1-p).
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Mat m(rows, cols);
    const double keep = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform() < p ? 0.0 : keep;
    return m;
}

}  // namespace

void Block::init(const std::string& prefix, const EncoderConfig& cfg_, Rng& rng) {
    cfg = cfg_;
    const int D = cfg.embed_dim, H = cfg.hidden_dim();
    ln1.init(prefix + ".ln1", D);
    ln2.init(prefix + ".ln2", D);
    ln_inner.init(prefix + ".ln_inner", H);
    wq.init(prefix + ".wq", D, D, rng);
    wk.init(prefix + ".wk", D, D, rng);
    wv.init(prefix + ".wv", D, D, rng);
    wo.init(prefix + ".wo", D, D, rng);
    w_gate.init(prefix + ".w_gate", D, H, rng);
    w_up.init(prefix + ".w_up", D, H, rng);
    w_down.init(prefix + ".w_down", H, D, rng);
}

Mat Block::forward(const Mat& x, const std::vector<Index3>& coords, int pos_offset,
                   const RopeTables& rope, Cache* c, Rng* drop_rng) const {
    const Eigen::Index T = x.rows();
    const int D = cfg.embed_dim, nh = cfg.num_heads, hd = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const bool dropping = drop_rng != nullptr && cfg.dropout > 0.0;

    LayerNorm::Cache ln1c;
    Mat xn1 = ln1.forward(x, c ? &ln1c : nullptr);
    Mat q = wq.forward(xn1), k = wk.forward(xn1), v = wv.forward(xn1);
    Mat qr = q, kr = k;
    for (int h = 0; h < nh; ++h) {
        Mat qh = qr.middleCols(h * hd, hd);
        Mat kh = kr.middleCols(h * hd, hd);
        apply_rope_3d(qh, pos_offset, coords, rope);
        apply_rope_3d(kh, pos_offset, coords, rope);
        qr.middleCols(h * hd, hd) = qh;
        kr.middleCols(h * hd, hd) = kh;
    }
    Mat ctx(T, D);
    std::vector<Mat> attn(nh);
    for (int h = 0; h < nh; ++h) {
        Mat s = qr.middleCols(h * hd, hd) * kr.middleCols(h * hd, hd).transpose() * scale;
        attn[h] = softmax_rows(s);
        ctx.middleCols(h * hd, hd).noalias() = attn[h] * v.middleCols(h * hd, hd);
    }
    Mat att_out = wo.forward(ctx);
    Mat drop_attn;
    if (dropping) {
        drop_attn = dropout_mask(T, D, cfg.dropout, *drop_rng);
        att_out.array() *= drop_attn.array();
    }
    Mat x_mid = x + att_out;

    LayerNorm::Cache ln2c;
    Mat xn2 = ln2.forward(x_mid, c ? &ln2c : nullptr);
    Mat gate_pre = w_gate.forward(xn2);
    Mat up = w_up.forward(xn2);
    Mat prod = gate_pre.unaryExpr([](double g) { return silu(g); }).cwiseProduct(up);
    LayerNorm::Cache lninc;
    Mat hn = ln_inner.forward(prod, c ? &lninc : nullptr);
    Mat mlp_out = w_down.forward(hn);
    Mat drop_mlp;
    if (dropping) {
        drop_mlp = dropout_mask(T, D, cfg.dropout, *drop_rng);
        mlp_out.array() *= drop_mlp.array();
    }
    Mat out = x_mid + mlp_out;

    if (c) {
        c->x_in = x;
        c->ln1c = std::move(ln1c);
        c->xn1 = std::move(xn1);
        c->q = std::move(q);
        c->k = std::move(k);
        c->v = std::move(v);
        c->qr = std::move(qr);
        c->kr = std::move(kr);
        c->attn = std::move(attn);
        c->ctx = std::move(ctx);
        c->drop_attn = std::move(drop_attn);
        c->x_mid = std::move(x_mid);
        c->ln2c = std::move(ln2c);
        c->xn2 = std::move(xn2);
        c->gate_pre = std::move(gate_pre);
        c->up = std::move(up);
        c->prod = std::move(prod);
        c->lninc = std::move(lninc);
        c->hn = std::move(hn);
        c->drop_mlp = std::move(drop_mlp);
    }
    return out;
}

Mat Block::backward(Cache& c, const std::vector<Index3>& coords, int pos_offset,
                    const RopeTables& rope, const Mat& dy) {
    const int nh = cfg.num_heads, hd = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    // MLP branch
    Mat d_mlp_out = dy;
    if (c.drop_mlp.size() > 0) d_mlp_out.array() *= c.drop_mlp.array();
    Mat dhn = w_down.backward(c.hn, d_mlp_out);
    Mat dprod = ln_inner.backward(c.lninc, dhn);
    Mat dgate_pre =
        dprod.cwiseProduct(c.up).cwiseProduct(c.gate_pre.unaryExpr([](double g) { return silu_grad(g); }));
    Mat dup = dprod.cwiseProduct(c.gate_pre.unaryExpr([](double g) { return silu(g); }));
    Mat dxn2 = w_gate.backward(c.xn2, dgate_pre) + w_up.backward(c.xn2, dup);
    Mat dx_mid = dy + ln2.backward(c.ln2c, dxn2);

    // Attention branch
    Mat d_att_out = dx_mid;
    if (c.drop_attn.size() > 0) d_att_out.array() *= c.drop_attn.array();
    Mat dctx = wo.backward(c.ctx, d_att_out);
    Mat dqr(dctx.rows(), cfg.embed_dim), dkr(dctx.rows(), cfg.embed_dim),
        dv(dctx.rows(), cfg.embed_dim);
    for (int h = 0; h < nh; ++h) {
        const Mat& a = c.attn[h];
        Mat dctx_h = dctx.middleCols(h * hd, hd);
        Mat dattn = dctx_h * c.v.middleCols(h * hd, hd).transpose();
        dv.middleCols(h * hd, hd).noalias() = a.transpose() * dctx_h;
        Mat ds = softmax_rows_backward(a, dattn);
        dqr.middleCols(h * hd, hd).noalias() = ds * c.kr.middleCols(h * hd, hd) * scale;
        dkr.middleCols(h * hd, hd).noalias() = ds.transpose() * c.qr.middleCols(h * hd, hd) * scale;
        Mat dq_h = dqr.middleCols(h * hd, hd);
        Mat dk_h = dkr.middleCols(h * hd, hd);
        apply_rope_3d(dq_h, pos_offset, coords, rope, /*inverse=*/true);
        apply_rope_3d(dk_h, pos_offset, coords, rope, /*inverse=*/true);
        dqr.middleCols(h * hd, hd) = dq_h;
        dkr.middleCols(h * hd, hd) = dk_h;
    }
    Mat dxn1 = wq.backward(c.xn1, dqr) + wk.backward(c.xn1, dkr) + wv.backward(c.xn1, dv);
    return dx_mid + ln1.backward(c.ln1c, dxn1);
}

void Block::collect(ParamRefs& out) {
    ln1.collect(out);
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
    ln2.collect(out);
    w_gate.collect(out);
    w_up.collect(out);
    ln_inner.collect(out);
    w_down.collect(out);
}

void Encoder::init(const std::string& prefix, const EncoderConfig& cfg_, Rng& rng) {
    cfg = cfg_;
    cfg.validate();
    rope = RopeTables::make(cfg.head_dim());
    blocks.resize(cfg.depth);
    for (int i = 0; i < cfg.depth; ++i)
        blocks[i].init(prefix + ".blocks." + std::to_string(i), cfg, rng);
    ln_final.init(prefix + ".ln_final", cfg.embed_dim);
}

Mat Encoder::forward(const Mat& embeddings, const std::vector<Index3>& coords, int pos_offset,
                     Cache* cache, Rng* drop_rng) const {
    if (embeddings.cols() != cfg.embed_dim)
        throw std::invalid_argument("Encoder: embedding dim mismatch");
    if (pos_offset + static_cast<int>(coords.size()) != embeddings.rows())
        throw std::invalid_argument("Encoder: coords do not cover token rows");
    if (cache) cache->block_caches.resize(blocks.size());
    Mat x = embeddings;
    for (size_t i = 0; i < blocks.size(); ++i)
        x = blocks[i].forward(x, coords, pos_offset, rope,
                              cache ? &cache->block_caches[i] : nullptr, drop_rng);
    if (cache) {
        cache->pre_final = x;
        return ln_final.forward(x, &cache->lnfc);
    }
    return ln_final.forward(x);
}

Mat Encoder::backward(Cache& c, const std::vector<Index3>& coords, int pos_offset, const Mat& dy) {
    Mat dx = ln_final.backward(c.lnfc, dy);
    for (size_t i = blocks.size(); i-- > 0;)
        dx = blocks[i].backward(c.block_caches[i], coords, pos_offset, rope, dx);
    return dx;
}

void Encoder::collect(ParamRefs& out) {
    for (auto& b : blocks) b.collect(out);
    ln_final.collect(out);
}

}  // namespace lungrisk
