#pragma once

#include "lungrisk/encoder.hpp"
#include "lungrisk/tokenizer.hpp"

#include <array>

namespace lungrisk {

// Normalized attention weights of the pooling layer: per head and
// head-averaged, over the N patch tokens (CLS excluded).
struct AttentionMap {
    Mat weights;         // [H, N]
    Vec pooled_weights;  // [N]
    int head_count() const { return static_cast<int>(weights.rows()); }
};

// Single learned query attending over patch-token outputs.
struct AttentionPool {
    int heads = 4;
    Param query;  // [D, 1]
    Linear wq, wk, wv, wo;

    struct Cache {
        Mat keys_in;  // [N, D] encoder outputs used as keys/values
        Mat k, v;     // [N, D]
        Vec q;        // [D]
        Mat attn;     // [H, N]
        Vec ctx;      // [D] concatenated per-head context
    };

    void init(const std::string& prefix, int embed_dim, int heads_, Rng& rng);

    // patch_embeddings [N, D] -> pooled token [D] plus the attention map.
    std::pair<Vec, AttentionMap> forward(const Mat& patch_embeddings,
                                         Cache* cache = nullptr) const;

    // d_pooled [D] and d_pooled_weights [N] (zero-sized if unused) ->
    // accumulates grads, returns dL/d patch_embeddings [N, D].
    Mat backward(Cache& c, const Vec& d_pooled, const Vec& d_pooled_weights);

    void collect(ParamRefs& out);
};

// Six monotone cumulative probabilities via base logit + nonnegative
// per-year hazard increments.
struct RiskPrediction {
    std::array<double, 6> cum_probs{};
    double base_logit = 0.0;
    std::array<double, 6> hazard_increments{};
};

struct HazardHead {
    Linear trunk;  // [2D -> hidden], tanh
    Linear out;    // [hidden -> 7]: base logit + 6 raw increments
    bool softplus_increments = false;

    struct Cache {
        Vec features;
        Vec hidden_pre;
        Vec hidden;
        Vec raw;  // [7]
    };

    void init(const std::string& prefix, int feature_dim, int hidden_dim, Rng& rng);

    RiskPrediction forward(const Vec& features, Cache* cache = nullptr) const;

    // d_cum [6] -> accumulates grads, returns dL/dfeatures.
    Vec backward(Cache& c, const std::array<double, 6>& d_cum);

    void collect(ParamRefs& out);
};

struct RiskModelConfig {
    EncoderConfig encoder;
    Index3 patch_size{8, 8, 8};
    Index3 grid_shape{64, 64, 64};
    int pool_heads = 0;     // 0 = encoder heads
    int hazard_hidden = 0;  // 0 = 2*embed_dim
    bool softplus_increments = false;

    Index3 grid_dims() const {
        return {grid_shape[0] / patch_size[0], grid_shape[1] / patch_size[1],
                grid_shape[2] / patch_size[2]};
    }
    void validate() const;
};

// Full risk path: patchify -> embed -> encoder -> two-token head
// (CLS + attention-pooled) -> cumulative hazard layer.
struct RiskModel {
    RiskModelConfig cfg;
    TokenEmbedder embedder;
    Encoder encoder;
    AttentionPool pool;
    HazardHead head;

    struct Cache {
        PatchGrid grid;
        Mat emb;
        Encoder::Cache enc_cache;
        Mat enc_out;
        AttentionPool::Cache pool_cache;
        HazardHead::Cache head_cache;
    };

    void init(const RiskModelConfig& cfg_, Rng& rng);

    std::pair<RiskPrediction, AttentionMap> forward(const PatchGrid& g, Cache* cache = nullptr,
                                                    Rng* drop_rng = nullptr) const;
    std::pair<RiskPrediction, AttentionMap> forward(const Volume& v, Cache* cache = nullptr) const;

    // Backward from loss grads on cum_probs and pooled attention weights.
    // Returns dL/d patch tokens [N, P] (for input-gradient checks).
    Mat backward(Cache& c, const std::array<double, 6>& d_cum, const Vec& d_pooled_weights);

    void collect(ParamRefs& out);
    ParamRefs params() {
        ParamRefs out;
        collect(out);
        return out;
    }
    ParamRefs encoder_params() {
        ParamRefs out;
        embedder.collect(out);
        encoder.collect(out);
        return out;
    }
    ParamRefs head_params() {
        ParamRefs out;
        pool.collect(out);
        head.collect(out);
        return out;
    }
};

}  // namespace lungrisk
