// phantom.hpp - synthetic PET/CT sphere phantoms with a known shrinkage field.
//
// The baseline tumor is a ball of radius r around `center`. The follow-up is the
// baseline pushed through phi(x) = x + u(x) with
//
//     u(x) = (S(d) - 1) (x - c) t(|x - c|),    d = (x - c) / |x - c|
//
// where t is a C1 cosine ramp from 1 at r to 0 at 2r and S(d) blends eight
// per-octant scales smoothly over the sphere of directions. Inside the ball the
// Jacobian is exactly S(d)^3.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blendreg/field.hpp"
#include "blendreg/image.hpp"

namespace blendreg {

struct PhantomSpec {
    Geometry grid{{64, 64, 64}, {1.0, 1.0, 1.0}, {}};
    Vec3 center{32.0, 32.0, 32.0};   ///< mm
    double baseline_radius = 12.0;   ///< mm
    double shrink_factor = 1.0;      ///< s in (0, 1]
    double foreground_intensity = 0.6; ///< tumor uptake, normalized PET units
    double background_intensity = 0.05;
    /// Octant multipliers of s, octant index = (x>c) | (y>c)<<1 | (z>c)<<2.
    std::optional<std::array<double, 8>> heterogeneity;
    double noise_sd = 0.0; ///< normalized units, applied to both channels
    std::uint64_t seed = 0;

    void validate() const;
};

struct PhantomCase {
    std::string case_id;
    PhantomSpec spec;
    Image3D baseline_img;  ///< blended
    Image3D followup_img;  ///< blended
    Image3D baseline_ct, followup_ct;   ///< HU
    Image3D baseline_pet, followup_pet; ///< SUV
    Mask3D baseline_mask;
    Mask3D followup_mask;
    DeformationField true_field; ///< baseline point -> follow-up point
    double true_change_pct = 0.0;
};

/// Direction-dependent scale S(d) of the spec.
double phantom_scale(const PhantomSpec &spec, const Vec3 &direction);

/// 100 (1 - mean over directions of S^3).
double phantom_true_change(const PhantomSpec &spec);

PhantomCase make_sphere_phantom(const PhantomSpec &spec, const BlendConfig &blend_cfg = {});

/// s such that the spec's heterogeneity gives the requested change (percent).
double shrink_for_change(double change_pct, const std::optional<std::array<double, 8>> &heterogeneity);

struct CohortOptions {
    Geometry grid{{64, 64, 64}, {1.0, 1.0, 1.0}, {}};
    double baseline_radius = 12.0;
    double heterogeneity_spread = 0.15; ///< octant multipliers drawn from 1 +/- spread
    double noise_min = 0.005;
    double noise_max = 0.02;
};

/// Per-case specs of make_cohort; cheap to build, cases can then be generated on demand.
std::vector<PhantomSpec> cohort_specs(int n, std::pair<double, double> change_range, std::uint64_t seed,
                                      const CohortOptions &opts = {});

/// n cases with true changes evenly spanning [lo, hi] percent.
std::vector<PhantomCase> make_cohort(int n, std::pair<double, double> change_range, std::uint64_t seed,
                                     const CohortOptions &opts = {}, const BlendConfig &blend_cfg = {});

} // namespace blendreg
