#include "lungrisk/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lungrisk {

namespace {

constexpr double kBodyHU = 30.0;
constexpr double kLungHU = -850.0;
constexpr double kNoduleDeltaLo = 600.0;  // HU
constexpr double kNoduleDeltaHi = 900.0;

struct Ellipsoid {
    Real3 center;  // voxel coords
    Real3 radii;   // voxel units per axis

    double eval(double x, double y, double z) const {
        double dx = (x - center[0]) / radii[0];
        double dy = (y - center[1]) / radii[1];
        double dz = (z - center[2]) / radii[2];
        return dx * dx + dy * dy + dz * dz;
    }
    bool inside(double x, double y, double z) const { return eval(x, y, z) <= 1.0; }
};

Ellipsoid lung_field(const Index3& shape) {
    Ellipsoid e;
    e.center = {0.5 * (shape[0] - 1), 0.5 * (shape[1] - 1), 0.5 * (shape[2] - 1)};
    e.radii = {0.42 * shape[0], 0.42 * shape[1], 0.42 * shape[2]};
    return e;
}

// Ellipsoid split by planes: x < cx is the 3-lobe (right) side, split by
// z = cz -/+ rz/3 into lobes 1,2,3; the left side splits at z = cz into 4,5.
uint8_t lobe_label_at(const Ellipsoid& e, int x, int y, int z) {
    if (!e.inside(x, y, z)) return 0;
    double cz = e.center[2];
    double rz = e.radii[2];
    if (x < e.center[0]) {
        if (z < cz - rz / 3.0) return 1;
        if (z < cz + rz / 3.0) return 2;
        return 3;
    }
    return z < cz ? 4 : 5;
}

bool sphere_in_lung(const LabelVolume& lobes, const Real3& spacing, const Real3& c,
                    double radius_mm) {
    int x0 = std::max(0, (int)std::floor(c[0] - radius_mm / spacing[0] - 1));
    int x1 = std::min(lobes.shape[0] - 1, (int)std::ceil(c[0] + radius_mm / spacing[0] + 1));
    int y0 = std::max(0, (int)std::floor(c[1] - radius_mm / spacing[1] - 1));
    int y1 = std::min(lobes.shape[1] - 1, (int)std::ceil(c[1] + radius_mm / spacing[1] + 1));
    int z0 = std::max(0, (int)std::floor(c[2] - radius_mm / spacing[2] - 1));
    int z1 = std::min(lobes.shape[2] - 1, (int)std::ceil(c[2] + radius_mm / spacing[2] + 1));
    double r2 = radius_mm * radius_mm;
    for (int x = x0; x <= x1; ++x)
        for (int y = y0; y <= y1; ++y)
            for (int z = z0; z <= z1; ++z) {
                double dx = (x - c[0]) * spacing[0];
                double dy = (y - c[1]) * spacing[1];
                double dz = (z - c[2]) * spacing[2];
                if (dx * dx + dy * dy + dz * dz <= r2 && lobes.at(x, y, z) == 0) return false;
            }
    // Sphere must not poke outside the grid either.
    if (c[0] * spacing[0] < radius_mm || c[1] * spacing[1] < radius_mm ||
        c[2] * spacing[2] < radius_mm)
        return false;
    if ((lobes.shape[0] - 1 - c[0]) * spacing[0] < radius_mm ||
        (lobes.shape[1] - 1 - c[1]) * spacing[1] < radius_mm ||
        (lobes.shape[2] - 1 - c[2]) * spacing[2] < radius_mm)
        return false;
    return true;
}

}  // namespace

void PhantomSpec::validate() const {
    if (grid_shape[0] <= 0 || grid_shape[1] <= 0 || grid_shape[2] <= 0)
        throw std::invalid_argument("PhantomSpec.grid_shape: dims must be positive");
    if (voxel_spacing[0] <= 0 || voxel_spacing[1] <= 0 || voxel_spacing[2] <= 0)
        throw std::invalid_argument("PhantomSpec.voxel_spacing: must be positive");
    if (nodule_probability < 0.0 || nodule_probability > 1.0)
        throw std::invalid_argument("PhantomSpec.nodule_probability: must be in [0,1]");
    if (nodule_radius_range[0] <= 0.0 || nodule_radius_range[0] > nodule_radius_range[1])
        throw std::invalid_argument("PhantomSpec.nodule_radius_range: need 0 < min <= max");
    if (background_noise_sd < 0.0)
        throw std::invalid_argument("PhantomSpec.background_noise_sd: must be nonnegative");
    if (base_yearly_hazard < 0.0 || base_yearly_hazard > 1.0)
        throw std::invalid_argument("PhantomSpec.base_yearly_hazard: must be in [0,1]");
    if (radius_hazard_slope < 0.0)
        throw std::invalid_argument("PhantomSpec.radius_hazard_slope: must be nonnegative");
    if (censor_rate < 0.0 || censor_rate > 1.0)
        throw std::invalid_argument("PhantomSpec.censor_rate: must be in [0,1]");
}

RiskRecord sample_time_to_event(const std::vector<Nodule>& nodules, const PhantomSpec& spec,
                                Rng& rng) {
    spec.validate();
    double max_radius = 0.0;
    for (const auto& n : nodules) max_radius = std::max(max_radius, n.radius_mm);
    double h = std::clamp(spec.base_yearly_hazard + spec.radius_hazard_slope * max_radius, 0.0, 1.0);

    // Fixed draw count (6 + 3) regardless of outcome: with a shared stream,
    // raising h can only move the first crossing earlier (hazard coupling).
    double u_year[6];
    for (double& u : u_year) u = rng.uniform();
    double u_frac = rng.uniform();
    double u_censor = rng.uniform();
    double u_ctime = rng.uniform_open();

    int event_year = 0;
    for (int y = 1; y <= 6; ++y) {
        if (u_year[y - 1] < h) {
            event_year = y;
            break;
        }
    }
    double event_time = event_year > 0 ? event_year - u_frac : 6.0;  // in (y-1, y]

    RiskRecord rec;
    if (u_censor < spec.censor_rate) {
        rec.event = false;
        rec.time_years = u_ctime * event_time;  // strictly inside (0, event_time)
    } else if (event_year > 0) {
        rec.event = true;
        rec.time_years = event_time;
    } else {
        rec.event = false;
        rec.time_years = 6.0;
    }
    return rec;
}

LabelVolume rasterize_nodules(const std::vector<Nodule>& nodules, const Index3& shape,
                              const Real3& spacing) {
    LabelVolume mask(shape, spacing, 0);
    for (const auto& n : nodules) {
        double r2 = n.radius_mm * n.radius_mm;
        int x0 = std::max(0, (int)std::floor(n.center[0] - n.radius_mm / spacing[0] - 1));
        int x1 = std::min(shape[0] - 1, (int)std::ceil(n.center[0] + n.radius_mm / spacing[0] + 1));
        int y0 = std::max(0, (int)std::floor(n.center[1] - n.radius_mm / spacing[1] - 1));
        int y1 = std::min(shape[1] - 1, (int)std::ceil(n.center[1] + n.radius_mm / spacing[1] + 1));
        int z0 = std::max(0, (int)std::floor(n.center[2] - n.radius_mm / spacing[2] - 1));
        int z1 = std::min(shape[2] - 1, (int)std::ceil(n.center[2] + n.radius_mm / spacing[2] + 1));
        for (int x = x0; x <= x1; ++x)
            for (int y = y0; y <= y1; ++y)
                for (int z = z0; z <= z1; ++z) {
                    double dx = (x - n.center[0]) * spacing[0];
                    double dy = (y - n.center[1]) * spacing[1];
                    double dz = (z - n.center[2]) * spacing[2];
                    if (dx * dx + dy * dy + dz * dz <= r2) mask.at(x, y, z) = 1;
                }
    }
    return mask;
}

PhantomSample generate_phantom(const PhantomSpec& spec, int index, const Index3& patch_size) {
    spec.validate();
    if (index < 0) throw std::invalid_argument("generate_phantom: index must be nonnegative");

    Rng rng = derive_rng(spec.seed, static_cast<uint64_t>(index));
    const Index3& shape = spec.grid_shape;
    Ellipsoid field = lung_field(shape);

    PhantomSample s;
    s.lobe_mask = LabelVolume(shape, spec.voxel_spacing, 0);
    s.volume = Volume(shape, spec.voxel_spacing, 0.0f);
    for (int x = 0; x < shape[0]; ++x)
        for (int y = 0; y < shape[1]; ++y)
            for (int z = 0; z < shape[2]; ++z) {
                uint8_t lobe = lobe_label_at(field, x, y, z);
                s.lobe_mask.at(x, y, z) = lobe;
                double hu = lobe > 0 ? kLungHU : kBodyHU;
                if (spec.background_noise_sd > 0.0) hu += spec.background_noise_sd * rng.normal();
                s.volume.at(x, y, z) = static_cast<float>(hu);
            }

    if (rng.uniform() < spec.nodule_probability) {
        int count = rng.uniform() < 0.25 ? 2 : 1;
        for (int k = 0; k < count; ++k) {
            Nodule n;
            n.radius_mm = rng.uniform(spec.nodule_radius_range[0], spec.nodule_radius_range[1]);
            n.intensity_delta = rng.uniform(kNoduleDeltaLo, kNoduleDeltaHi);
            bool placed = false;
            double radius = n.radius_mm;
            for (int shrink = 0; shrink < 4 && !placed; ++shrink) {
                for (int attempt = 0; attempt < 200; ++attempt) {
                    Real3 c{field.center[0] + (2.0 * rng.uniform() - 1.0) * field.radii[0],
                            field.center[1] + (2.0 * rng.uniform() - 1.0) * field.radii[1],
                            field.center[2] + (2.0 * rng.uniform() - 1.0) * field.radii[2]};
                    if (!field.inside(c[0], c[1], c[2])) continue;
                    if (!sphere_in_lung(s.lobe_mask, spec.voxel_spacing, c, radius)) continue;
                    n.center = c;
                    n.radius_mm = radius;
                    placed = true;
                    break;
                }
                if (!placed) radius *= 0.75;
            }
            if (!placed) continue;  // grid too small for this radius; skip
            int cl = s.lobe_mask.at((int)std::llround(n.center[0]), (int)std::llround(n.center[1]),
                                    (int)std::llround(n.center[2]));
            n.lobe = cl;
            s.nodules.push_back(n);
        }
    }

    s.nodule_mask = rasterize_nodules(s.nodules, shape, spec.voxel_spacing);
    for (const auto& n : s.nodules) {
        double r2 = n.radius_mm * n.radius_mm;
        int x0 = std::max(0, (int)std::floor(n.center[0] - n.radius_mm / spec.voxel_spacing[0] - 1));
        int x1 = std::min(shape[0] - 1,
                          (int)std::ceil(n.center[0] + n.radius_mm / spec.voxel_spacing[0] + 1));
        int y0 = std::max(0, (int)std::floor(n.center[1] - n.radius_mm / spec.voxel_spacing[1] - 1));
        int y1 = std::min(shape[1] - 1,
                          (int)std::ceil(n.center[1] + n.radius_mm / spec.voxel_spacing[1] + 1));
        int z0 = std::max(0, (int)std::floor(n.center[2] - n.radius_mm / spec.voxel_spacing[2] - 1));
        int z1 = std::min(shape[2] - 1,
                          (int)std::ceil(n.center[2] + n.radius_mm / spec.voxel_spacing[2] + 1));
        for (int x = x0; x <= x1; ++x)
            for (int y = y0; y <= y1; ++y)
                for (int z = z0; z <= z1; ++z) {
                    double dx = (x - n.center[0]) * spec.voxel_spacing[0];
                    double dy = (y - n.center[1]) * spec.voxel_spacing[1];
                    double dz = (z - n.center[2]) * spec.voxel_spacing[2];
                    if (dx * dx + dy * dy + dz * dz <= r2)
                        s.volume.at(x, y, z) += static_cast<float>(n.intensity_delta);
                }
    }

    s.record = sample_time_to_event(s.nodules, spec, rng);
    char id[32];
    std::snprintf(id, sizeof(id), "s%06d", index);
    s.record.sample_id = id;

    if (!s.nodules.empty()) {
        if (shape[0] % patch_size[0] == 0 && shape[1] % patch_size[1] == 0 &&
            shape[2] % patch_size[2] == 0) {
            Index3 grid{shape[0] / patch_size[0], shape[1] / patch_size[1],
                        shape[2] / patch_size[2]};
            std::vector<uint8_t> pm(static_cast<size_t>(product(grid)), 0);
            for (int x = 0; x < shape[0]; ++x)
                for (int y = 0; y < shape[1]; ++y)
                    for (int z = 0; z < shape[2]; ++z)
                        if (s.nodule_mask.at(x, y, z)) {
                            int pi = ((x / patch_size[0]) * grid[1] + y / patch_size[1]) * grid[2] +
                                     z / patch_size[2];
                            pm[pi] = 1;
                        }
            s.annotation.nodule_patch_mask = std::move(pm);
        }
        const Nodule* largest = &s.nodules[0];
        for (const auto& n : s.nodules)
            if (n.radius_mm > largest->radius_mm) largest = &n;
        s.annotation.lobe_label = largest->lobe;
        s.annotation.side_label = side_of_lobe(largest->lobe);
    }
    return s;
}

}  // namespace lungrisk
