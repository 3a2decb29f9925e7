#include "lungrisk/riskhead.hpp"

#include <cmath>

namespace lungrisk {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

void AttentionPool::init(const std::string& prefix, int embed_dim, int heads_, Rng& rng) {
    if (embed_dim % heads_ != 0)
        throw std::invalid_argument("AttentionPool: embed_dim not divisible by heads");
    heads = heads_;
    query.setup(prefix + ".query", embed_dim, 1);
    trunc_normal_init(query.value, rng, 0.02);
    wq.init(prefix + ".wq", embed_dim, embed_dim, rng);
    wk.init(prefix + ".wk", embed_dim, embed_dim, rng);
    wv.init(prefix + ".wv", embed_dim, embed_dim, rng);
    wo.init(prefix + ".wo", embed_dim, embed_dim, rng);
}

std::pair<Vec, AttentionMap> AttentionPool::forward(const Mat& patch_embeddings,
                                                    Cache* cache) const {
    const Eigen::Index N = patch_embeddings.rows();
    if (N < 1) throw std::invalid_argument("attention_pool: no patch tokens");
    const int D = static_cast<int>(patch_embeddings.cols());
    const int hd = D / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Vec q = wq.forward(query.value.transpose()).row(0).transpose();  // [D]
    Mat k = wk.forward(patch_embeddings);
    Mat v = wv.forward(patch_embeddings);

    Mat attn(heads, N);
    Vec ctx(D);
    for (int h = 0; h < heads; ++h) {
        Vec s = k.middleCols(h * hd, hd) * q.segment(h * hd, hd) * scale;  // [N]
        Eigen::ArrayXd e = (s.array() - s.maxCoeff()).exp();
        Vec a = (e / e.sum()).matrix();
        attn.row(h) = a.transpose();
        ctx.segment(h * hd, hd) = v.middleCols(h * hd, hd).transpose() * a;
    }
    Vec pooled = wo.forward(ctx.transpose()).row(0).transpose();

    AttentionMap map;
    map.weights = attn;
    map.pooled_weights = attn.colwise().mean().transpose();

    if (cache) {
        cache->keys_in = patch_embeddings;
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->q = std::move(q);
        cache->attn = attn;
        cache->ctx = std::move(ctx);
    }
    return {pooled, map};
}

Mat AttentionPool::backward(Cache& c, const Vec& d_pooled, const Vec& d_pooled_weights) {
    const Eigen::Index N = c.keys_in.rows();
    const int D = static_cast<int>(c.keys_in.cols());
    const int hd = D / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Vec d_ctx = wo.backward(c.ctx.transpose(), d_pooled.transpose()).row(0).transpose();

    Mat dk(N, D), dv(N, D);
    Vec dq(D);
    const bool has_wgrad = d_pooled_weights.size() > 0;
    for (int h = 0; h < heads; ++h) {
        Vec a = c.attn.row(h).transpose();
        Vec d_a = c.v.middleCols(h * hd, hd) * d_ctx.segment(h * hd, hd);
        if (has_wgrad) d_a += d_pooled_weights / static_cast<double>(heads);
        dv.middleCols(h * hd, hd) = a * d_ctx.segment(h * hd, hd).transpose();
        double dot = a.dot(d_a);
        Vec d_s = (a.array() * (d_a.array() - dot)).matrix();
        dq.segment(h * hd, hd) = c.k.middleCols(h * hd, hd).transpose() * d_s * scale;
        dk.middleCols(h * hd, hd) = d_s * c.q.segment(h * hd, hd).transpose() * scale;
    }
    Mat d_query_row = wq.backward(query.value.transpose(), dq.transpose());
    query.grad += d_query_row.transpose();
    Mat dE = wk.backward(c.keys_in, dk) + wv.backward(c.keys_in, dv);
    return dE;
}

void AttentionPool::collect(ParamRefs& out) {
    out.push_back(&query);
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

void HazardHead::init(const std::string& prefix, int feature_dim, int hidden_dim, Rng& rng) {
    trunk.init(prefix + ".trunk", feature_dim, hidden_dim, rng);
    out.init(prefix + ".out", hidden_dim, 7, rng);
}

RiskPrediction HazardHead::forward(const Vec& features, Cache* cache) const {
    if (!features.allFinite()) throw NumericError("cumulative_hazard: non-finite features");
    Vec hidden_pre = trunk.forward(features.transpose()).row(0).transpose();
    Vec hidden = hidden_pre.array().tanh().matrix();
    Vec raw = out.forward(hidden.transpose()).row(0).transpose();  // [7]

    RiskPrediction pred;
    pred.base_logit = raw(0);
    double cum = raw(0);
    for (int n = 0; n < 6; ++n) {
        double r = raw(n + 1);
        double inc = softplus_increments ? softplus(r) : std::max(r, 0.0);
        pred.hazard_increments[n] = inc;
        cum += inc;
        pred.cum_probs[n] = sigmoid(cum);
    }
    if (cache) {
        cache->features = features;
        cache->hidden_pre = std::move(hidden_pre);
        cache->hidden = std::move(hidden);
        cache->raw = std::move(raw);
    }
    return pred;
}

Vec HazardHead::backward(Cache& c, const std::array<double, 6>& d_cum) {
    // Recompute the cheap scalar chain from the cached raw head outputs.
    double cum = c.raw(0);
    std::array<double, 6> logits;
    std::array<double, 6> inc_grad;  // d inc / d raw
    for (int n = 0; n < 6; ++n) {
        double r = c.raw(n + 1);
        double inc = softplus_increments ? softplus(r) : std::max(r, 0.0);
        inc_grad[n] = softplus_increments ? sigmoid(r) : (r > 0.0 ? 1.0 : 0.0);
        cum += inc;
        logits[n] = cum;
    }
    std::array<double, 6> d_logit;
    for (int n = 0; n < 6; ++n) {
        double p = sigmoid(logits[n]);
        d_logit[n] = d_cum[n] * p * (1.0 - p);
    }
    Vec d_raw = Vec::Zero(7);
    double suffix = 0.0;
    for (int n = 5; n >= 0; --n) {
        suffix += d_logit[n];
        d_raw(n + 1) = suffix * inc_grad[n];
    }
    d_raw(0) = suffix;  // base logit feeds every year

    Vec d_hidden = out.backward(c.hidden.transpose(), d_raw.transpose()).row(0).transpose();
    Vec d_hidden_pre =
        (d_hidden.array() * (1.0 - c.hidden.array().square())).matrix();
    return trunk.backward(c.features.transpose(), d_hidden_pre.transpose()).row(0).transpose();
}

void HazardHead::collect(ParamRefs& out_refs) {
    trunk.collect(out_refs);
    out.collect(out_refs);
}

void RiskModelConfig::validate() const {
    encoder.validate();
    for (int a = 0; a < 3; ++a) {
        if (patch_size[a] <= 0 || grid_shape[a] <= 0)
            throw std::invalid_argument("RiskModelConfig: shapes must be positive");
        if (grid_shape[a] % patch_size[a] != 0)
            throw std::invalid_argument("RiskModelConfig: grid_shape not divisible by patch_size");
    }
    if (pool_heads < 0 || hazard_hidden < 0)
        throw std::invalid_argument("RiskModelConfig: negative head/hidden override");
}

void RiskModel::init(const RiskModelConfig& cfg_, Rng& rng) {
    cfg = cfg_;
    cfg.validate();
    const int D = cfg.encoder.embed_dim;
    const int P = cfg.patch_size[0] * cfg.patch_size[1] * cfg.patch_size[2];
    embedder.init("encoder.embed", P, D, cfg.grid_dims(), rng);
    encoder.init("encoder", cfg.encoder, rng);
    pool.init("head.pool", D, cfg.pool_heads > 0 ? cfg.pool_heads : cfg.encoder.num_heads, rng);
    head.softplus_increments = cfg.softplus_increments;
    head.init("head.hazard", 2 * D, cfg.hazard_hidden > 0 ? cfg.hazard_hidden : 2 * D, rng);
}

std::pair<RiskPrediction, AttentionMap> RiskModel::forward(const PatchGrid& g, Cache* cache,
                                                           Rng* drop_rng) const {
    const int D = cfg.encoder.embed_dim;
    Mat emb = embedder.forward(g);
    Encoder::Cache enc_cache;
    Mat enc_out =
        encoder.forward(emb, g.patch_coords, 1, cache ? &enc_cache : nullptr, drop_rng);

    AttentionPool::Cache pool_cache;
    auto [pooled, map] =
        pool.forward(enc_out.bottomRows(g.num_patches()), cache ? &pool_cache : nullptr);

    Vec features(2 * D);
    features.head(D) = enc_out.row(0).transpose();  // CLS output
    features.tail(D) = pooled;
    HazardHead::Cache head_cache;
    RiskPrediction pred = head.forward(features, cache ? &head_cache : nullptr);

    if (cache) {
        cache->grid = g;
        cache->emb = std::move(emb);
        cache->enc_cache = std::move(enc_cache);
        cache->enc_out = std::move(enc_out);
        cache->pool_cache = std::move(pool_cache);
        cache->head_cache = std::move(head_cache);
    }
    return {pred, map};
}

std::pair<RiskPrediction, AttentionMap> RiskModel::forward(const Volume& v, Cache* cache) const {
    return forward(patchify(v, cfg.patch_size), cache);
}

Mat RiskModel::backward(Cache& c, const std::array<double, 6>& d_cum,
                        const Vec& d_pooled_weights) {
    const int D = cfg.encoder.embed_dim;
    const int N = c.grid.num_patches();
    Vec d_features = head.backward(c.head_cache, d_cum);
    Mat d_enc_out = Mat::Zero(N + 1, D);
    d_enc_out.row(0) = d_features.head(D).transpose();
    d_enc_out.bottomRows(N) =
        pool.backward(c.pool_cache, d_features.tail(D), d_pooled_weights);
    Mat d_emb = encoder.backward(c.enc_cache, c.grid.patch_coords, 1, d_enc_out);
    return embedder.backward(c.grid.tokens,
                             [&] {
                                 std::vector<int> idx(N);
                                 for (int i = 0; i < N; ++i) idx[i] = i;
                                 return idx;
                             }(),
                             d_emb);
}

void RiskModel::collect(ParamRefs& out) {
    embedder.collect(out);
    encoder.collect(out);
    pool.collect(out);
    head.collect(out);
}

}  // namespace lungrisk
