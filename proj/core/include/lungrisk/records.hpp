#pragma once

#include "lungrisk/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lungrisk {

// Per-sample survival ground truth. time_years is the time to event when
// event is true, otherwise the censoring / follow-up time.
struct RiskRecord {
    bool event = false;
    double time_years = 6.0;
    std::string sample_id;
};

enum class Side : int { right = 0, left = 1 };

// Fixed convention: lobes {1,2,3} are on the right side, {4,5} on the left.
inline Side side_of_lobe(int lobe) {
    if (lobe < 1 || lobe > 5) throw std::invalid_argument("side_of_lobe: lobe must be in 1..5");
    return lobe <= 3 ? Side::right : Side::left;
}

inline const char* side_name(Side s) { return s == Side::right ? "right" : "left"; }

// Optional region supervision. nodule_patch_mask is binary over the patch
// grid of the volume it was produced for. When both lobe and side labels are
// present they must agree with side_of_lobe.
struct RegionAnnotation {
    std::optional<std::vector<uint8_t>> nodule_patch_mask;
    std::optional<int> lobe_label;    // 1..5
    std::optional<Side> side_label;

    bool has_any() const {
        return nodule_patch_mask.has_value() || lobe_label.has_value() || side_label.has_value();
    }
};

}  // namespace lungrisk
