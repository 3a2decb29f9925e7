#pragma once

#include "lungrisk/encoder.hpp"
#include "lungrisk/rng.hpp"
#include "lungrisk/tokenizer.hpp"

#include <vector>

namespace lungrisk {

struct MaskPlan {
    std::vector<int> visible_indices;
    std::vector<int> masked_indices;
    double mask_ratio = 0.75;
};

// Uniformly random partition of {0..N-1} with |masked| = round(mask_ratio*N).
// Throws if either side would be empty.
MaskPlan random_mask(int N, double mask_ratio, Rng& rng);

struct DecoderConfig {
    int embed_dim = 48;
    int depth = 2;
    int num_heads = 2;

    static DecoderConfig paper_scale() { return {396, 4, 6}; }
    static DecoderConfig desk_scale() { return {48, 2, 2}; }
};

struct MimOptions {
    double mask_ratio = 0.75;
    bool loss_on_all_patches = false;  // default: masked patches only
    bool normalize_targets = false;    // per-patch standardized targets
};

// Asymmetric masked autoencoder: the encoder sees visible tokens plus CLS;
// the decoder sees projected visible embeddings and a shared mask token with
// positions restored for all N patches, then reconstructs raw patch values.
struct MaeModel {
    TokenEmbedder embedder;
    Encoder encoder;
    Linear enc_to_dec;
    Param mask_token;  // [dec_D, 1]
    Param dec_pos;     // [N_grid, dec_D]
    Encoder decoder;
    Linear out_proj;   // dec_D -> P

    struct Cache {
        MaskPlan plan;
        Mat visible_tokens;
        std::vector<int> visible_idx;
        std::vector<Index3> visible_coords;
        std::vector<Index3> all_coords;
        Encoder::Cache enc_cache;
        Mat enc_out;
        Mat dec_in;
        Encoder::Cache dec_cache;
        Mat dec_out;
    };

    void init(const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg, int patch_volume,
              const Index3& grid_dims, Rng& rng);

    // Returns reconstructed patches [N, P].
    Mat forward(const PatchGrid& g, const MaskPlan& plan, Cache* cache = nullptr,
                Rng* drop_rng = nullptr) const;

    // d_recon [N, P] -> accumulates all parameter grads.
    void backward(Cache& c, const Mat& d_recon);

    void collect(ParamRefs& out);
    ParamRefs params() {
        ParamRefs out;
        collect(out);
        return out;
    }
};

// Mean squared error over masked patches (all patches when loss_on_all).
double mae_loss(const Mat& recon, const PatchGrid& target, const MaskPlan& plan,
                const MimOptions& opt = {});

// dL/drecon for mae_loss.
Mat mae_loss_grad(const Mat& recon, const PatchGrid& target, const MaskPlan& plan,
                  const MimOptions& opt = {});

// Reconstruction targets, optionally per-patch standardized.
Mat mim_targets(const PatchGrid& g, const MimOptions& opt);

}  // namespace lungrisk
