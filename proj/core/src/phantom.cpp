// phantom.cpp - analytic sphere phantoms and cohorts.

#include "blendreg/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace blendreg {

namespace {

// Fixed background structures (vessels) as fractions of the field of view.
constexpr std::array<std::array<double, 3>, 7> kVessels{{
    {0.22, 0.30, 0.25}, {0.75, 0.28, 0.40}, {0.30, 0.78, 0.70}, {0.70, 0.72, 0.22},
    {0.50, 0.15, 0.80}, {0.18, 0.55, 0.60}, {0.82, 0.50, 0.75},
}};

double taper(double rho, double r) {
    if (rho <= r) return 1.0;
    if (rho >= 2.0 * r) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (rho - r) / r));
}

// Radial profile rho -> |phi(x) - c| along a fixed direction with scale S.
double radial_map(double rho, double S, double r) { return rho * (1.0 + (S - 1.0) * taper(rho, r)); }

double invert_radial(double target, double S, double r) {
    if (target >= 2.0 * r) return target;
    double lo = 0.0, hi = 2.0 * r;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (radial_map(mid, S, r) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct Channels {
    double ct;
    double pet;
};

Channels baseline_intensity(const PhantomSpec &spec, const BlendConfig &blend, const Vec3 &p,
                            const Vec3 &fov_origin, const Vec3 &fov_extent) {
    const double r = spec.baseline_radius;
    const double rho = (p - spec.center).norm();
    const double edge = 0.5 * (1.0 - std::tanh((rho - r) / 0.8));
    const double inner = std::min(rho, r) / r;

    const double pet_range = blend.pet_norm_hi - blend.pet_norm_lo;
    const double fg = blend.pet_norm_lo + spec.foreground_intensity * pet_range;
    const double bg = blend.pet_norm_lo + spec.background_intensity * pet_range;
    double pet = bg + (fg - bg) * edge * (1.0 - 0.35 * inner * inner);

    double ct = -850.0 + (30.0 + 850.0) * edge;
    for (const auto &v : kVessels) {
        const Vec3 q{fov_origin.x + v[0] * fov_extent.x, fov_origin.y + v[1] * fov_extent.y,
                     fov_origin.z + v[2] * fov_extent.z};
        const double d2 = (p - q).dot(p - q);
        const double g = std::exp(-d2 / (2.0 * 1.8 * 1.8));
        ct += 800.0 * g;
        pet += 0.05 * pet_range * g;
    }
    // soft-tissue wall along x
    const double fx = (p.x - fov_origin.x) / fov_extent.x;
    const double wall = 0.5 * (1.0 + std::tanh((std::abs(fx - 0.5) - 0.44) / 0.01));
    ct += 880.0 * wall;
    return {ct, pet};
}

} // namespace

void PhantomSpec::validate() const {
    grid.validate();
    if (!(shrink_factor > 0.0 && shrink_factor <= 1.0)) {
        throw ConfigError("phantom shrink factor must lie in (0, 1]");
    }
    if (!(baseline_radius > 0.0)) throw ConfigError("phantom radius must be positive");
    if (noise_sd < 0.0) throw ConfigError("phantom noise must be non-negative");
    if (heterogeneity) {
        for (double m : *heterogeneity) {
            if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("heterogeneity multipliers must be positive");
        }
    }
    for (int a = 0; a < 3; ++a) {
        const double c = (center[a] - grid.origin[a]) / grid.spacing[a];
        const double rv = baseline_radius / grid.spacing[a];
        const auto n = static_cast<double>(grid.dims[static_cast<std::size_t>(a)]);
        if (c - rv < 4.0 || c + rv > n - 1.0 - 4.0) {
            throw ConfigError("phantom sphere does not fit inside the grid with a 4-voxel margin");
        }
    }
}

double phantom_scale(const PhantomSpec &spec, const Vec3 &d) {
    if (!spec.heterogeneity) return spec.shrink_factor;
    double h = 0.0;
    for (int k = 0; k < 8; ++k) {
        double w = 1.0;
        for (int a = 0; a < 3; ++a) {
            const double sign = (k >> a) & 1 ? 1.0 : -1.0;
            w *= 0.5 * (1.0 + sign * d[a]);
        }
        h += w * (*spec.heterogeneity)[static_cast<std::size_t>(k)];
    }
    return spec.shrink_factor * h;
}

namespace {

double mean_cubed_scale(const PhantomSpec &spec) {
    if (!spec.heterogeneity) return std::pow(spec.shrink_factor, 3);
    // midpoint rule in cos(theta), uniform in phi
    constexpr int nz = 1000, nphi = 64;
    double sum = 0.0;
    for (int iz = 0; iz < nz; ++iz) {
        const double z = -1.0 + (iz + 0.5) * 2.0 / nz;
        const double s = std::sqrt(1.0 - z * z);
        for (int ip = 0; ip < nphi; ++ip) {
            const double phi = 2.0 * std::numbers::pi * (ip + 0.5) / nphi;
            sum += std::pow(phantom_scale(spec, {s * std::cos(phi), s * std::sin(phi), z}), 3);
        }
    }
    return sum / (nz * nphi);
}

} // namespace

double phantom_true_change(const PhantomSpec &spec) { return 100.0 * (1.0 - mean_cubed_scale(spec)); }

double shrink_for_change(double change_pct, const std::optional<std::array<double, 8>> &heterogeneity) {
    if (!(change_pct < 100.0) || change_pct < 0.0) {
        throw ConfigError("volume change must lie in [0, 100) percent");
    }
    PhantomSpec probe;
    probe.heterogeneity = heterogeneity;
    probe.shrink_factor = 1.0;
    return std::cbrt((1.0 - change_pct / 100.0) / mean_cubed_scale(probe));
}

PhantomCase make_sphere_phantom(const PhantomSpec &spec, const BlendConfig &blend_cfg) {
    spec.validate();
    blend_cfg.validate();
    const Geometry &g = spec.grid;
    const auto &d = g.dims;
    const double r = spec.baseline_radius;
    const Vec3 fov_origin = g.origin;
    const Vec3 fov_extent{g.spacing.x * static_cast<double>(d[0] - 1), g.spacing.y * static_cast<double>(d[1] - 1),
                          g.spacing.z * static_cast<double>(d[2] - 1)};

    PhantomCase pc;
    pc.spec = spec;
    pc.baseline_ct = Image3D(g);
    pc.baseline_pet = Image3D(g);
    pc.followup_ct = Image3D(g);
    pc.followup_pet = Image3D(g);
    pc.baseline_mask = Mask3D(g);
    pc.followup_mask = Mask3D(g);
    pc.true_field = DeformationField(g);

    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                const Vec3 p = g.to_physical(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
                const Vec3 rel = p - spec.center;
                const double rho = rel.norm();
                const Vec3 dir = rho > 0.0 ? rel * (1.0 / rho) : Vec3{};
                const double S = phantom_scale(spec, dir);

                const Channels base = baseline_intensity(spec, blend_cfg, p, fov_origin, fov_extent);
                pc.baseline_ct[n] = base.ct;
                pc.baseline_pet[n] = base.pet;
                pc.baseline_mask[n] = rho <= r ? 1 : 0;
                pc.true_field.vectors[n] = rel * ((S - 1.0) * taper(rho, r));

                // follow-up(y) = baseline(phi^-1(y)); phi keeps directions
                Vec3 src = p;
                if (S != 1.0 && rho > 0.0 && rho < 2.0 * r) {
                    src = spec.center + dir * invert_radial(rho, S, r);
                }
                const Channels fol = src == p ? base : baseline_intensity(spec, blend_cfg, src, fov_origin, fov_extent);
                pc.followup_ct[n] = fol.ct;
                pc.followup_pet[n] = fol.pet;
                pc.followup_mask[n] = rho <= S * r ? 1 : 0;
            }

    if (spec.noise_sd > 0.0) {
        std::mt19937_64 rng(spec.seed);
        std::normal_distribution<double> noise(0.0, spec.noise_sd);
        const double ct_range = blend_cfg.ct_norm_hi - blend_cfg.ct_norm_lo;
        const double pet_range = blend_cfg.pet_norm_hi - blend_cfg.pet_norm_lo;
        for (Image3D *img : {&pc.baseline_ct, &pc.followup_ct}) {
            for (auto &v : img->voxels()) v += noise(rng) * ct_range;
        }
        for (Image3D *img : {&pc.baseline_pet, &pc.followup_pet}) {
            for (auto &v : img->voxels()) v += noise(rng) * pet_range;
        }
    }
    pc.baseline_img = blend_channels(pc.baseline_ct, pc.baseline_pet, blend_cfg);
    pc.followup_img = blend_channels(pc.followup_ct, pc.followup_pet, blend_cfg);
    pc.true_change_pct = phantom_true_change(spec);
    return pc;
}

std::vector<PhantomSpec> cohort_specs(int n, std::pair<double, double> change_range, std::uint64_t seed,
                                      const CohortOptions &opts) {
    if (n < 2) throw ConfigError("a cohort needs at least 2 cases");
    const auto [lo, hi] = change_range;
    if (!(lo <= hi) || lo < 0.0 || !(hi < 100.0)) {
        throw ConfigError("cohort change range must satisfy 0 <= lo <= hi < 100");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> noise(opts.noise_min, opts.noise_max);
    std::vector<PhantomSpec> specs;
    const Geometry &g = opts.grid;
    const Vec3 center = g.to_physical(0.5 * static_cast<double>(g.dims[0]), 0.5 * static_cast<double>(g.dims[1]),
                                      0.5 * static_cast<double>(g.dims[2]));
    for (int c = 0; c < n; ++c) {
        const double change = lo + (hi - lo) * c / (n - 1);
        PhantomSpec s;
        s.grid = g;
        s.center = center;
        s.baseline_radius = opts.baseline_radius;
        std::array<double, 8> m{};
        const double amp = opts.heterogeneity_spread * std::min(1.0, change / 50.0);
        for (auto &x : m) x = 1.0 + amp * unit(rng);
        if (amp > 0.0) s.heterogeneity = m;
        s.shrink_factor = shrink_for_change(change, s.heterogeneity);
        if (s.shrink_factor > 1.0) {
            // heterogeneity overshot; fall back to a uniform shrink
            s.heterogeneity.reset();
            s.shrink_factor = shrink_for_change(change, std::nullopt);
        }
        s.noise_sd = noise(rng);
        s.seed = rng();
        specs.push_back(s);
    }
    return specs;
}

std::vector<PhantomCase> make_cohort(int n, std::pair<double, double> change_range, std::uint64_t seed,
                                     const CohortOptions &opts, const BlendConfig &blend_cfg) {
    std::vector<PhantomCase> out;
    int idx = 0;
    for (const auto &s : cohort_specs(n, change_range, seed, opts)) {
        PhantomCase pc = make_sphere_phantom(s, blend_cfg);
        char id[32];
        std::snprintf(id, sizeof id, "case_%03d", idx++);
        pc.case_id = id;
        out.push_back(std::move(pc));
    }
    return out;
}

} // namespace blendreg
