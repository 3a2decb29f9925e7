#pragma once

#include "lungrisk/nn.hpp"
#include "lungrisk/tokenizer.hpp"
#include "lungrisk/types.hpp"

#include <optional>
#include <vector>

namespace lungrisk {

struct EncoderConfig {
    int embed_dim = 96;
    int depth = 4;
    int num_heads = 4;
    double mlp_ratio = 8.0 / 3.0;  // SwiGLU expansion
    double dropout = 0.0;

    int head_dim() const { return embed_dim / num_heads; }
    int hidden_dim() const { return static_cast<int>(std::lround(embed_dim * mlp_ratio)); }

    void validate() const {
        if (embed_dim <= 0 || depth < 1 || num_heads <= 0)
            throw std::invalid_argument("EncoderConfig: embed_dim/depth/num_heads must be positive");
        if (embed_dim % num_heads != 0)
            throw std::invalid_argument("EncoderConfig: embed_dim not divisible by num_heads");
        if (head_dim() % 2 != 0)
            throw std::invalid_argument("EncoderConfig: head_dim must be even for rotary pairs");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("EncoderConfig: dropout must be in [0,1)");
    }

    static EncoderConfig paper_scale() { return {792, 12, 12}; }
    static EncoderConfig desk_scale() { return {96, 4, 4}; }
};

// Pre-norm block: x + Attn(LN(x)) with rotary q/k, then x + MLP(LN(x)) where
// the MLP is SwiGLU-gated with an extra normalization before the output
// projection (EVA-02 arrangement).
struct Block {
    EncoderConfig cfg;
    LayerNorm ln1, ln2, ln_inner;
    Linear wq, wk, wv, wo;
    Linear w_gate, w_up, w_down;

    struct Cache {
        Mat x_in;
        LayerNorm::Cache ln1c;
        Mat xn1;
        Mat q, k, v;    // pre-rotation projections
        Mat qr, kr;     // post-rotation
        std::vector<Mat> attn;  // per head [T, T]
        Mat ctx;
        Mat drop_attn;  // dropout keep-scales (empty when disabled)
        Mat x_mid;
        LayerNorm::Cache ln2c;
        Mat xn2;
        Mat gate_pre, up, prod;
        LayerNorm::Cache lninc;
        Mat hn;
        Mat drop_mlp;
    };

    void init(const std::string& prefix, const EncoderConfig& cfg_, Rng& rng);

    // coords cover rows [pos_offset, T); earlier rows (CLS) skip rotation.
    Mat forward(const Mat& x, const std::vector<Index3>& coords, int pos_offset,
                const RopeTables& rope, Cache* cache, Rng* drop_rng = nullptr) const;

    Mat backward(Cache& c, const std::vector<Index3>& coords, int pos_offset,
                 const RopeTables& rope, const Mat& dy);

    void collect(ParamRefs& out);
};

struct Encoder {
    EncoderConfig cfg;
    RopeTables rope;
    std::vector<Block> blocks;
    LayerNorm ln_final;

    struct Cache {
        std::vector<Block::Cache> block_caches;
        Mat pre_final;
        LayerNorm::Cache lnfc;
    };

    void init(const std::string& prefix, const EncoderConfig& cfg_, Rng& rng);

    // embeddings [T, D] -> contextual embeddings [T, D]. Pass cache to enable
    // backward; pass drop_rng in train mode when cfg.dropout > 0.
    Mat forward(const Mat& embeddings, const std::vector<Index3>& coords, int pos_offset,
                Cache* cache = nullptr, Rng* drop_rng = nullptr) const;

    Mat backward(Cache& c, const std::vector<Index3>& coords, int pos_offset, const Mat& dy);

    void collect(ParamRefs& out);
};

}  // namespace lungrisk
