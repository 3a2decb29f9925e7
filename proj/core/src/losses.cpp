#include "lungrisk/losses.hpp"

#include <algorithm>
#include <cmath>

namespace lungrisk {

RiskLabels build_labels(const RiskRecord& r, int horizon) {
    if (horizon != 6) throw std::invalid_argument("build_labels: horizon fixed at 6");
    if (!(r.time_years > 0.0)) throw std::invalid_argument("build_labels: nonpositive time");
    RiskLabels l;
    l.censored = !r.event;
    l.time_years = r.time_years;
    if (r.event)
        for (int n = 1; n <= 6; ++n) l.y[n - 1] = r.time_years <= n ? 1 : 0;
    return l;
}

namespace {

int active_years(const RiskLabels& labels, const RiskLossOptions& opt) {
    if (!opt.mask_after_censor || !labels.censored) return 6;
    // Years fully observed before censoring: n <= censor time.
    int n = static_cast<int>(std::floor(labels.time_years));
    return std::clamp(n, 0, 6);
}

}  // namespace

double risk_loss(const RiskPrediction& pred, const RiskLabels& labels,
                 const RiskLossOptions& opt) {
    int years = active_years(labels, opt);
    if (years == 0) return 0.0;
    double sum = 0.0;
    for (int n = 0; n < years; ++n) {
        double p = std::clamp(pred.cum_probs[n], opt.prob_clamp, 1.0 - opt.prob_clamp);
        sum += labels.y[n] ? -std::log(p) : -std::log(1.0 - p);
    }
    return sum / years;
}

std::array<double, 6> risk_loss_grad(const RiskPrediction& pred, const RiskLabels& labels,
                                     const RiskLossOptions& opt) {
    std::array<double, 6> g{};
    int years = active_years(labels, opt);
    if (years == 0) return g;
    for (int n = 0; n < years; ++n) {
        double p = std::clamp(pred.cum_probs[n], opt.prob_clamp, 1.0 - opt.prob_clamp);
        if (pred.cum_probs[n] <= opt.prob_clamp || pred.cum_probs[n] >= 1.0 - opt.prob_clamp) {
            g[n] = 0.0;  // clamped flat region
            continue;
        }
        g[n] = (labels.y[n] ? -1.0 / p : 1.0 / (1.0 - p)) / years;
    }
    return g;
}

namespace {

constexpr double kAttnClamp = 1e-8;

// Clamped, renormalized attention and the mask's uniform target.
struct KlParts {
    Eigen::ArrayXd p_clamped;  // before renormalization
    double sum = 0.0;
    std::vector<int> support;
};

KlParts kl_parts(const AttentionMap& attn, const RegionAnnotation& ann) {
    if (!ann.nodule_patch_mask.has_value())
        throw std::invalid_argument("aiag_kl: annotation has no nodule patch mask");
    const auto& mask = *ann.nodule_patch_mask;
    if (static_cast<Eigen::Index>(mask.size()) != attn.pooled_weights.size())
        throw std::invalid_argument("aiag_kl: mask length does not match attention");
    KlParts parts;
    parts.p_clamped = attn.pooled_weights.array().max(kAttnClamp);
    parts.sum = parts.p_clamped.sum();
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) parts.support.push_back(static_cast<int>(i));
    if (parts.support.empty()) throw std::invalid_argument("aiag_kl: mask has no positive patch");
    return parts;
}

}  // namespace

double aiag_kl(const AttentionMap& attn, const RegionAnnotation& ann) {
    KlParts parts = kl_parts(attn, ann);
    const double q = 1.0 / static_cast<double>(parts.support.size());
    double kl = 0.0;
    for (int i : parts.support) kl += q * std::log(q * parts.sum / parts.p_clamped(i));
    return kl;
}

Vec aiag_kl_grad(const AttentionMap& attn, const RegionAnnotation& ann) {
    KlParts parts = kl_parts(attn, ann);
    const double q = 1.0 / static_cast<double>(parts.support.size());
    Vec g = Vec::Zero(attn.pooled_weights.size());
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (attn.pooled_weights(i) > kAttnClamp) g(i) = 1.0 / parts.sum;
    for (int i : parts.support)
        if (attn.pooled_weights(i) > kAttnClamp) g(i) -= q / parts.p_clamped(i);
    return g;
}

namespace {

// Region index per patch: lobe mode uses labels 1..5 directly; side mode maps
// lobes to {0,1}. Returns -1 for non-lobe patches.
int region_of_patch(uint8_t lobe, bool side_mode) {
    if (lobe < 1 || lobe > 5) return -1;
    if (!side_mode) return lobe - 1;
    return side_of_lobe(lobe) == Side::right ? 0 : 1;
}

struct RegionParts {
    bool side_mode = false;
    int target_region = -1;
    double total = 0.0;   // attention mass on lobe patches
    double target = 0.0;  // attention mass on the annotated region
};

RegionParts region_parts(const AttentionMap& attn, const std::vector<uint8_t>& lobe_mask_patches,
                         const RegionAnnotation& ann) {
    if (static_cast<Eigen::Index>(lobe_mask_patches.size()) != attn.pooled_weights.size())
        throw std::invalid_argument("aiag_region_ce: patch labels do not match attention");
    RegionParts parts;
    if (ann.lobe_label.has_value()) {
        parts.side_mode = false;
        parts.target_region = *ann.lobe_label - 1;
        if (*ann.lobe_label < 1 || *ann.lobe_label > 5)
            throw std::invalid_argument("aiag_region_ce: lobe label out of range");
    } else if (ann.side_label.has_value()) {
        parts.side_mode = true;
        parts.target_region = *ann.side_label == Side::right ? 0 : 1;
    } else {
        throw std::invalid_argument("aiag_region_ce: annotation has no lobe or side label");
    }
    bool region_present = false;
    for (size_t i = 0; i < lobe_mask_patches.size(); ++i) {
        int r = region_of_patch(lobe_mask_patches[i], parts.side_mode);
        if (r < 0) continue;
        double w = attn.pooled_weights(static_cast<Eigen::Index>(i));
        parts.total += w;
        if (r == parts.target_region) {
            parts.target += w;
            region_present = true;
        }
    }
    if (!region_present)
        throw DataError("aiag_region_ce: annotated region is empty in the lobe mask");
    if (parts.total <= 0.0) throw DataError("aiag_region_ce: no attention mass on lobe patches");
    return parts;
}

}  // namespace

double aiag_region_ce(const AttentionMap& attn, const std::vector<uint8_t>& lobe_mask_patches,
                      const RegionAnnotation& ann) {
    RegionParts parts = region_parts(attn, lobe_mask_patches, ann);
    double a = std::max(parts.target / parts.total, 1e-12);
    return -std::log(a);
}

Vec aiag_region_ce_grad(const AttentionMap& attn, const std::vector<uint8_t>& lobe_mask_patches,
                        const RegionAnnotation& ann) {
    RegionParts parts = region_parts(attn, lobe_mask_patches, ann);
    Vec g = Vec::Zero(attn.pooled_weights.size());
    for (size_t i = 0; i < lobe_mask_patches.size(); ++i) {
        int r = region_of_patch(lobe_mask_patches[i], parts.side_mode);
        if (r < 0) continue;
        g(static_cast<Eigen::Index>(i)) = 1.0 / parts.total;
        if (r == parts.target_region) g(static_cast<Eigen::Index>(i)) -= 1.0 / parts.target;
    }
    return g;
}

double combine_losses(double risk, std::optional<double> kl, std::optional<double> region,
                      const LossWeights& w) {
    w.validate();
    double total = risk;
    if (kl.has_value()) total += w.lambda_kl * *kl;
    if (region.has_value()) total += w.lambda_region * *region;
    return total;
}

}  // namespace lungrisk
