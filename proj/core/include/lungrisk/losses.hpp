#pragma once

#include "lungrisk/records.hpp"
#include "lungrisk/riskhead.hpp"
#include "lungrisk/types.hpp"

#include <array>
#include <optional>
#include <vector>

namespace lungrisk {

// Discrete yearly labels: y_n = 1 iff the event time is <= year n; all zero
// for censored records.
struct RiskLabels {
    std::array<int, 6> y{};
    bool censored = false;
    double time_years = 0.0;  // copied from the source record
};

RiskLabels build_labels(const RiskRecord& r, int horizon = 6);

struct LossWeights {
    double lambda_kl = 1.0;
    double lambda_region = 1.0;

    void validate() const {
        if (!(lambda_kl >= 0.0) || !(lambda_region >= 0.0) || !std::isfinite(lambda_kl) ||
            !std::isfinite(lambda_region))
            throw std::invalid_argument("LossWeights: weights must be finite and nonnegative");
    }
};

struct RiskLossOptions {
    // When set, censored samples average only over years up to the censor
    // time instead of contributing all six zero labels.
    bool mask_after_censor = false;
    double prob_clamp = 1e-7;
};

// Mean cross-entropy over the six yearly cumulative probabilities.
double risk_loss(const RiskPrediction& pred, const RiskLabels& labels,
                 const RiskLossOptions& opt = {});

// dL/d cum_probs
std::array<double, 6> risk_loss_grad(const RiskPrediction& pred, const RiskLabels& labels,
                                     const RiskLossOptions& opt = {});

// KL(target || attention) with target uniform over positive mask patches and
// attention = pooled weights clamped at 1e-8 and renormalized.
double aiag_kl(const AttentionMap& attn, const RegionAnnotation& ann);
Vec aiag_kl_grad(const AttentionMap& attn, const RegionAnnotation& ann);

// -log of the attention mass aggregated over the annotated lobe (labels 1-5,
// non-lobe patches dropped and the rest renormalized); falls back to the
// two lung sides when only a side label is present.
double aiag_region_ce(const AttentionMap& attn, const std::vector<uint8_t>& lobe_mask_patches,
                      const RegionAnnotation& ann);
Vec aiag_region_ce_grad(const AttentionMap& attn, const std::vector<uint8_t>& lobe_mask_patches,
                        const RegionAnnotation& ann);

// total = risk + lambda_kl * kl + lambda_region * region, absent terms 0.
double combine_losses(double risk, std::optional<double> kl, std::optional<double> region,
                      const LossWeights& w);

}  // namespace lungrisk
