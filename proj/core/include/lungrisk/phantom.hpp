#pragma once

#include "lungrisk/records.hpp"
#include "lungrisk/rng.hpp"
#include "lungrisk/types.hpp"
#include "lungrisk/volume.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace lungrisk {

struct PhantomSpec {
    Index3 grid_shape{64, 64, 64};
    Real3 voxel_spacing{1.4, 1.4, 2.5};      // mm
    double nodule_probability = 0.5;
    std::array<double, 2> nodule_radius_range{2.0, 12.0};  // mm
    double background_noise_sd = 30.0;       // HU
    double base_yearly_hazard = 0.02;
    double radius_hazard_slope = 0.05;       // per mm
    double censor_rate = 0.2;
    uint64_t seed = 1234;

    void validate() const;  // throws std::invalid_argument naming the bad field
};

struct Nodule {
    Real3 center;            // voxel coordinates
    double radius_mm = 0.0;
    int lobe = 0;            // 1..5
    double intensity_delta = 0.0;  // HU added inside the sphere
};

struct PhantomSample {
    Volume volume;             // HU
    LabelVolume lobe_mask;     // 0 outside lung, 1..5 lobes
    LabelVolume nodule_mask;   // 1 inside any nodule sphere
    std::vector<Nodule> nodules;
    RiskRecord record;
    RegionAnnotation annotation;  // patch mask over (grid_shape / patch_size)
};

// Yearly event hazard h = clamp(base + slope * max_radius_mm, 0, 1); the
// event year is geometric over years 1..6, follow-up 6.0 if no event.
// Independently censors with probability censor_rate at a uniform time
// strictly before the (possibly latent) event time. Consumes a fixed number
// of draws from rng so hazard coupling holds across h values.
RiskRecord sample_time_to_event(const std::vector<Nodule>& nodules, const PhantomSpec& spec,
                                Rng& rng);

// Deterministic in (spec.seed, index). patch_size defines the grid of the
// annotation's nodule patch mask.
PhantomSample generate_phantom(const PhantomSpec& spec, int index,
                               const Index3& patch_size = {8, 8, 8});

// Rasterizes nodule spheres onto a grid (1 = voxel center inside a sphere).
LabelVolume rasterize_nodules(const std::vector<Nodule>& nodules, const Index3& shape,
                              const Real3& spacing);

}  // namespace lungrisk
