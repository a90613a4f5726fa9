// registration.cpp - FFD and BSD engines, rigid centroid alignment, rigidity penalty.

#include "blendreg/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blendreg/jacobian.hpp"
#include "blendreg/mutual_information.hpp"

namespace blendreg {

namespace {

constexpr Mat3 kIdentity{1, 0, 0, 0, 1, 0, 0, 0, 1};
constexpr std::int64_t kBorder = 2; // voxels excluded from the similarity at each face

// Samples img and its (precomputed) gradient images at x + u(x) for every voxel of the field grid.
struct WarpedWithGradient {
    Image3D value;
    std::vector<Vec3> grad;
    Mask3D inside; ///< voxel lies off the border band (fixed per grid, independent of the field)
};

WarpedWithGradient warp_with_gradient(const Image3D &img, const std::array<Image3D, 3> &grad,
                                      const DeformationField &field) {
    WarpedWithGradient out{Image3D(field.geom), std::vector<Vec3>(field.size()), Mask3D(field.geom)};
    const auto &g = field.geom;
    const auto &src = img.geometry();
    const auto &d = g.dims;
    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                const Vec3 c = src.to_continuous_index(
                    g.to_physical(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)) +
                    field.vectors[n]);
                bool in = true;
                const std::int64_t idx[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    const auto n_a = d[static_cast<std::size_t>(a)];
                    if (n_a > 2 * kBorder && (idx[a] < kBorder || idx[a] >= n_a - kBorder)) in = false;
                }
                out.inside[n] = in ? 1 : 0;
                out.value[n] = sample_linear(img, c);
                out.grad[n] = {sample_linear(grad[0], c), sample_linear(grad[1], c), sample_linear(grad[2], c)};
            }
    return out;
}

// Trilinear value and its exact spatial derivative (per mm) at a continuous index.
std::pair<double, Vec3> sample_linear_with_derivative(const Image3D &img, const Vec3 &c) {
    const auto &d = img.dims();
    const auto &sp = img.geometry().spacing;
    double f[3];
    bool inside[3];
    std::int64_t i0[3], i1[3];
    for (int a = 0; a < 3; ++a) {
        const double hi = static_cast<double>(d[static_cast<std::size_t>(a)] - 1);
        inside[a] = c[a] > 0.0 && c[a] < hi;
        const double x = std::clamp(c[a], 0.0, hi);
        const double fl = std::min(std::floor(x), std::max(hi - 1.0, 0.0));
        i0[a] = static_cast<std::int64_t>(fl);
        i1[a] = std::min<std::int64_t>(i0[a] + 1, d[static_cast<std::size_t>(a)] - 1);
        f[a] = x - fl;
    }
    double v = 0.0;
    Vec3 grad;
    for (int cz = 0; cz < 2; ++cz)
        for (int cy = 0; cy < 2; ++cy)
            for (int cx = 0; cx < 2; ++cx) {
                const double wx = cx ? f[0] : 1.0 - f[0];
                const double wy = cy ? f[1] : 1.0 - f[1];
                const double wz = cz ? f[2] : 1.0 - f[2];
                const double val = img.at(cx ? i1[0] : i0[0], cy ? i1[1] : i0[1], cz ? i1[2] : i0[2]);
                v += wx * wy * wz * val;
                grad.x += (cx ? 1.0 : -1.0) * wy * wz * val;
                grad.y += (cy ? 1.0 : -1.0) * wx * wz * val;
                grad.z += (cz ? 1.0 : -1.0) * wx * wy * val;
            }
    for (int a = 0; a < 3; ++a) grad[a] = inside[a] ? grad[a] / sp[a] : 0.0;
    return {v, grad};
}

Mask3D mask_on(const Mask3D &mask, const Geometry &target) {
    if (mask.geometry().matches(target)) return mask;
    return threshold(resample(mask_to_image(mask), target, Interpolation::nearest), 0.5);
}

// mean |v|^2 in voxels^2
double field_geodesic(const DeformationField &v, double h) {
    double s = 0.0;
    for (const auto &x : v.vectors) s += x.dot(x);
    return s / (static_cast<double>(v.size()) * h * h);
}

// Rigidity term and its derivative w.r.t. A = I + grad u, evaluated from lattice derivatives.
struct RigidityTerm {
    double value = 0.0;
    BSplineLattice::Coefficients gradient;
};

double rigidity_density(const Mat3 &A) {
    double ortho = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double ata = 0.0;
            for (int k = 0; k < 3; ++k) ata += A[static_cast<std::size_t>(k * 3 + r)] * A[static_cast<std::size_t>(k * 3 + c)];
            const double e = ata - kIdentity[static_cast<std::size_t>(r * 3 + c)];
            ortho += e * e;
        }
    const double dj = det3(A) - 1.0;
    return ortho + dj * dj;
}

RigidityTerm lattice_rigidity(const BSplineLattice &lattice, std::span<const Vec3> coeffs, const Mask3D &mask,
                              bool with_gradient) {
    RigidityTerm out;
    const std::array<BSplineLattice::Order, 3> orders{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    std::array<std::vector<Vec3>, 3> du;
    for (int a = 0; a < 3; ++a) du[static_cast<std::size_t>(a)] = lattice.evaluate_derivative(coeffs, orders[static_cast<std::size_t>(a)]);
    const std::size_t n_mask = count_foreground(mask);
    if (n_mask == 0) {
        out.gradient = lattice.zeros();
        return out;
    }
    const double inv = 1.0 / static_cast<double>(n_mask);
    std::array<std::vector<Vec3>, 3> dA;
    if (with_gradient) {
        for (auto &v : dA) v.assign(mask.size(), Vec3{});
    }
    for (std::size_t n = 0; n < mask.size(); ++n) {
        if (!mask[n]) continue;
        Mat3 A = kIdentity;
        for (int a = 0; a < 3; ++a) {
            const Vec3 &g = du[static_cast<std::size_t>(a)][n];
            A[static_cast<std::size_t>(0 * 3 + a)] += g.x;
            A[static_cast<std::size_t>(1 * 3 + a)] += g.y;
            A[static_cast<std::size_t>(2 * 3 + a)] += g.z;
        }
        out.value += rigidity_density(A) * inv;
        if (!with_gradient) continue;
        // d/dA |A^T A - I|^2 = 4 A (A^T A - I); d/dA (det A - 1)^2 = 2 (det A - 1) cof(A)
        Mat3 E{};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double ata = 0.0;
                for (int k = 0; k < 3; ++k) ata += A[static_cast<std::size_t>(k * 3 + r)] * A[static_cast<std::size_t>(k * 3 + c)];
                E[static_cast<std::size_t>(r * 3 + c)] = ata - kIdentity[static_cast<std::size_t>(r * 3 + c)];
            }
        const Mat3 cof{A[4] * A[8] - A[5] * A[7], -(A[3] * A[8] - A[5] * A[6]), A[3] * A[7] - A[4] * A[6],
                       -(A[1] * A[8] - A[2] * A[7]), A[0] * A[8] - A[2] * A[6], -(A[0] * A[7] - A[1] * A[6]),
                       A[1] * A[5] - A[2] * A[4], -(A[0] * A[5] - A[2] * A[3]), A[0] * A[4] - A[1] * A[3]};
        const double dj = 2.0 * (det3(A) - 1.0);
        for (int r = 0; r < 3; ++r)
            for (int a = 0; a < 3; ++a) {
                double ae = 0.0;
                for (int k = 0; k < 3; ++k) ae += A[static_cast<std::size_t>(r * 3 + k)] * E[static_cast<std::size_t>(k * 3 + a)];
                const double g = (4.0 * ae + dj * cof[static_cast<std::size_t>(r * 3 + a)]) * inv;
                dA[static_cast<std::size_t>(a)][n][r] = g;
            }
    }
    if (with_gradient) {
        out.gradient = lattice.zeros();
        for (int a = 0; a < 3; ++a) {
            const auto back = lattice.adjoint(dA[static_cast<std::size_t>(a)], orders[static_cast<std::size_t>(a)]);
            for (std::size_t c = 0; c < back.size(); ++c) out.gradient[c] += back[c];
        }
    }
    return out;
}

double max_vector_norm(std::span<const Vec3> v) {
    double m = 0.0;
    for (const auto &x : v) m = std::max(m, x.norm());
    return m;
}

int level_factor(const RegistrationConfig &cfg, int level) { return 1 << (cfg.levels - 1 - level); }

double level_mesh(const RegistrationConfig &cfg, int level) { return cfg.mesh_spacing / std::ldexp(1.0, level); }

void check_finite(double v, const std::vector<CostTerms> &trace) {
    if (!std::isfinite(v)) {
        throw DivergedError("registration cost became non-finite", trace);
    }
}

struct FfdEvaluation {
    double objective = 0.0;
    double mi = 0.0;
    double exact_mi = 0.0; ///< hard-binned MI on the same samples
    double regularizer = 0.0;
    BSplineLattice::Coefficients gradient;
};

struct FfdLevelContext {
    const Image3D &fixed;
    const Image3D &moving;
    std::array<Image3D, 3> moving_grad;
    const BSplineLattice &lattice;
    MutualInformationEstimator estimator;
    MutualInformationEstimator exact;
    double bending_weight;
    double rigidity_weight;
    std::optional<Mask3D> rigidity_mask;
};

FfdEvaluation evaluate_ffd(const FfdLevelContext &ctx, std::span<const Vec3> coeffs, bool with_gradient) {
    FfdEvaluation ev;
    const DeformationField u = ctx.lattice.evaluate(coeffs);
    const WarpedWithGradient w = warp_with_gradient(ctx.moving, ctx.moving_grad, u);
    const auto mi = ctx.estimator.evaluate(ctx.fixed, w.value, with_gradient, false, &w.inside);
    ev.mi = mi.value;
    ev.exact_mi = ctx.exact.evaluate(ctx.fixed, w.value, false, false, &w.inside).value;
    double reg = 0.0;
    if (ctx.bending_weight > 0.0) reg += ctx.bending_weight * ctx.lattice.bending_energy(coeffs);
    RigidityTerm rig;
    if (ctx.rigidity_weight > 0.0 && ctx.rigidity_mask) {
        rig = lattice_rigidity(ctx.lattice, coeffs, *ctx.rigidity_mask, with_gradient);
        reg += ctx.rigidity_weight * rig.value;
    }
    ev.regularizer = reg;
    ev.objective = ev.mi - reg;
    if (!with_gradient) return ev;
    std::vector<Vec3> force(u.size());
    for (std::size_t n = 0; n < force.size(); ++n) force[n] = w.grad[n] * mi.d_moving[n];
    ev.gradient = ctx.lattice.adjoint(force);
    if (ctx.bending_weight > 0.0) {
        const auto be = ctx.lattice.bending_energy_gradient(coeffs);
        for (std::size_t c = 0; c < be.size(); ++c) ev.gradient[c] -= be[c] * ctx.bending_weight;
    }
    if (ctx.rigidity_weight > 0.0 && ctx.rigidity_mask) {
        for (std::size_t c = 0; c < rig.gradient.size(); ++c) ev.gradient[c] -= rig.gradient[c] * ctx.rigidity_weight;
    }
    return ev;
}

// Shared FFD driver; the rigidity pre-pass reuses it with a single level.
RegistrationResult run_ffd(const Image3D &fixed, const Image3D &moving, const RegistrationConfig &cfg,
                           const std::optional<Mask3D> &rigidity_mask, double rigidity_weight) {
    RegistrationResult res;
    DeformationField dense; // displacement carried between levels
    bool finest_converged = false;
    for (int level = 0; level < cfg.levels; ++level) {
        const int factor = level_factor(cfg, level);
        const Image3D F = downsample(fixed, factor);
        const Image3D M = downsample(moving, factor);
        const Geometry &geom = F.geometry();
        const double h = geom.min_spacing();
        const BSplineLattice lattice(geom, level_mesh(cfg, level));
        std::optional<Mask3D> level_mask;
        if (rigidity_mask) level_mask = mask_on(*rigidity_mask, geom);
        FfdLevelContext ctx{F, M, gradient(M), lattice,
                            MutualInformationEstimator::from_images(F, M, cfg.mi_bins),
                            MutualInformationEstimator::from_images(F, M, cfg.mi_bins, ParzenWindow::none),
                            cfg.bending_weight, rigidity_weight, level_mask};

        BSplineLattice::Coefficients c =
            dense.size() == 0 ? lattice.zeros() : lattice.fit(resample_field(dense, geom).vectors);
        FfdEvaluation cur = evaluate_ffd(ctx, c, true);
        check_finite(cur.objective, res.cost_trace);
        const bool finest = level == cfg.levels - 1;
        const double level_initial_mi = cur.mi;
        const double level_initial_exact = cur.exact_mi;
        if (finest) res.finest_initial_mi = cur.mi;

        double shrink = 1.0;
        const double min_shrink = std::ldexp(1.0, -cfg.convergence_halvings);
        const int iters = cfg.iterations[static_cast<std::size_t>(level)];
        bool level_converged = false;
        for (int it = 0; it < iters; ++it) {
            const double gmax = max_vector_norm(cur.gradient);
            if (!(gmax > 0.0)) {
                level_converged = true;
                res.cost_trace.push_back({level, cur.mi, 0.0, cur.regularizer});
                break;
            }
            const double step = cfg.step_size * shrink * h / gmax;
            BSplineLattice::Coefficients trial = c;
            for (std::size_t n = 0; n < trial.size(); ++n) trial[n] += cur.gradient[n] * step;
            FfdEvaluation next = evaluate_ffd(ctx, trial, true);
            check_finite(next.objective, res.cost_trace);
            if (next.objective > cur.objective && next.mi >= level_initial_mi &&
                next.exact_mi > level_initial_exact) {
                c = std::move(trial);
                cur = std::move(next);
            } else {
                shrink *= 0.5;
            }
            res.cost_trace.push_back({level, cur.mi, 0.0, cur.regularizer});
            if (shrink < min_shrink) {
                level_converged = true;
                break;
            }
        }
        if (finest) {
            res.finest_final_mi = cur.mi;
            finest_converged = level_converged;
        }
        dense = lattice.evaluate(c);
    }
    if (!dense.geom.matches(fixed.geometry())) {
        dense = resample_field(dense, fixed.geometry());
    }
    res.forward_field = dense;
    res.inverse_field = invert(dense);
    res.converged = finest_converged;
    return res;
}

} // namespace

Engine parse_engine(const std::string &s) {
    if (s == "bsd") return Engine::bsd;
    if (s == "ffd") return Engine::ffd;
    throw ConfigError("unknown engine '" + s + "' (expected bsd or ffd)");
}

Channel parse_channel(const std::string &s) {
    if (s == "blend") return Channel::blend;
    if (s == "pet") return Channel::pet;
    if (s == "ct") return Channel::ct;
    throw ConfigError("unknown channel '" + s + "' (expected blend, pet or ct)");
}

const char *to_string(Engine e) { return e == Engine::bsd ? "bsd" : "ffd"; }

const char *to_string(Channel c) {
    switch (c) {
    case Channel::blend: return "blend";
    case Channel::pet: return "pet";
    case Channel::ct: return "ct";
    }
    return "blend";
}

void RegistrationConfig::validate() const {
    if (levels < 1) throw ConfigError("registration needs at least one level");
    if (static_cast<int>(iterations.size()) != levels) {
        throw ConfigError("iterations must list one count per level");
    }
    for (int it : iterations) {
        if (it < 1) throw ConfigError("iteration counts must be positive");
    }
    if (!(step_size > 0.0)) throw ConfigError("step size must be positive");
    if (!(mesh_spacing > 0.0)) throw ConfigError("mesh spacing must be positive");
    if (mi_bins < 8) throw ConfigError("mi_bins must be >= 8");
    if (rigidity_weight < 0.0 || geodesic_weight < 0.0 || bending_weight < 0.0) {
        throw ConfigError("penalty weights must be non-negative");
    }
    if (crop_margin < 0.0) throw ConfigError("crop margin must be non-negative");
    if (squarings < 0) throw ConfigError("squarings must be non-negative");
    if (rigidity_iterations < 1) throw ConfigError("rigidity_iterations must be positive");
}

RegistrationConfig RegistrationConfig::defaults_for(Channel channel) {
    RegistrationConfig cfg;
    cfg.mesh_spacing = channel == Channel::ct ? 16.0 : 32.0;
    cfg.rigidity_weight = channel == Channel::ct ? 0.0 : 0.1;
    return cfg;
}

Vec3 rigid_center_align(const Mask3D &fixed_mask, const Mask3D &moving_mask) {
    auto centroid = [](const Mask3D &m, const char *which) {
        const auto &g = m.geometry();
        const auto &d = g.dims;
        Vec3 sum;
        std::size_t count = 0;
        std::size_t n = 0;
        for (std::int64_t k = 0; k < d[2]; ++k)
            for (std::int64_t j = 0; j < d[1]; ++j)
                for (std::int64_t i = 0; i < d[0]; ++i, ++n)
                    if (m[n]) {
                        sum += g.to_physical(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
                        ++count;
                    }
        if (count == 0) {
            throw InputError(std::string("rigid_center_align: empty ") + which + " mask");
        }
        return sum * (1.0 / static_cast<double>(count));
    };
    return centroid(moving_mask, "moving") - centroid(fixed_mask, "fixed");
}

double rigidity_penalty(const DeformationField &field, const Mask3D &mask) {
    if (!field.geom.matches(mask.geometry())) {
        throw ShapeError("rigidity_penalty: mask geometry differs from field");
    }
    const auto &d = field.geom.dims;
    double sum = 0.0;
    std::size_t count = 0;
    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                if (!mask[n]) continue;
                sum += rigidity_density(jacobian_matrix(field, i, j, k));
                ++count;
            }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

FfdSimilarity ffd_similarity(const Image3D &fixed, const Image3D &moving, const BSplineLattice &lattice,
                             std::span<const Vec3> coeffs, int bins) {
    if (!fixed.geometry().matches(lattice.domain())) {
        throw ShapeError("ffd_similarity: lattice domain differs from fixed image");
    }
    const DeformationField u = lattice.evaluate(coeffs);
    const auto &g = u.geom;
    const auto &d = g.dims;
    Image3D warped(g);
    std::vector<Vec3> grad(u.size());
    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                const Vec3 c = moving.geometry().to_continuous_index(
                    g.to_physical(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)) + u.vectors[n]);
                const auto [v, dv] = sample_linear_with_derivative(moving, c);
                warped[n] = v;
                grad[n] = dv;
            }
    const auto est = MutualInformationEstimator::from_images(fixed, moving, bins);
    const auto mi = est.evaluate(fixed, warped, true);
    for (std::size_t m = 0; m < grad.size(); ++m) grad[m] *= mi.d_moving[m];
    return {mi.value, lattice.adjoint(grad)};
}

RegistrationResult register_ffd(const Image3D &fixed, const Image3D &moving, const RegistrationConfig &cfg) {
    cfg.validate();
    if (!fixed.geometry().matches(moving.geometry())) {
        throw ShapeError("register_ffd: fixed and moving must share a geometry");
    }
    return run_ffd(fixed, moving, cfg, std::nullopt, 0.0);
}

RegistrationResult register_bsd(const Image3D &fixed, const Image3D &moving, const RegistrationConfig &cfg) {
    cfg.validate();
    if (!fixed.geometry().matches(moving.geometry())) {
        throw ShapeError("register_bsd: fixed and moving must share a geometry");
    }
    RegistrationResult res;
    // v_m = v / 2 pulls the moving image to the midpoint, v_f = -v / 2 the fixed one
    DeformationField v;
    bool finest_converged = false;
    for (int level = 0; level < cfg.levels; ++level) {
        const int factor = level_factor(cfg, level);
        const Image3D F = downsample(fixed, factor);
        const Image3D M = downsample(moving, factor);
        const Geometry &geom = F.geometry();
        const double h = geom.min_spacing();
        const BSplineLattice lattice(geom, level_mesh(cfg, level));
        const auto gradF = gradient(F);
        const auto gradM = gradient(M);
        const auto est = MutualInformationEstimator::from_images(F, M, cfg.mi_bins);
        const auto exact = MutualInformationEstimator::from_images(F, M, cfg.mi_bins, ParzenWindow::none);

        v = v.size() == 0 ? DeformationField(geom) : resample_field(v, geom);

        struct State {
            DeformationField v, af, am;
            WarpedWithGradient wf, wm;
            MutualInformationEstimator::Evaluation mi;
            double exact_mi = 0.0;
            double geodesic = 0.0;
            double objective = 0.0;
        };
        auto make_state = [&](DeformationField vel) {
            State s;
            s.v = std::move(vel);
            s.af = exponentiate(scaled(s.v, -0.5), cfg.squarings);
            s.am = exponentiate(scaled(s.v, 0.5), cfg.squarings);
            return s;
        };
        auto score = [&](State &s) {
            s.wf = warp_with_gradient(F, gradF, s.af);
            s.wm = warp_with_gradient(M, gradM, s.am);
            Mask3D roi = s.wf.inside;
            for (std::size_t n = 0; n < roi.size(); ++n) roi[n] = roi[n] && s.wm.inside[n];
            s.mi = est.evaluate(s.wf.value, s.wm.value, true, true, &roi);
            s.exact_mi = exact.evaluate(s.wf.value, s.wm.value, false, false, &roi).value;
            s.geodesic = field_geodesic(s.v, h) / 2.0;
            s.objective = s.mi.value - cfg.geodesic_weight * s.geodesic;
        };

        State cur = make_state(v);
        score(cur);
        check_finite(cur.objective, res.cost_trace);
        const bool finest = level == cfg.levels - 1;
        const double level_initial_mi = cur.mi.value;
        const double level_initial_exact = cur.exact_mi;
        if (finest) res.finest_initial_mi = cur.mi.value;

        double gamma = cfg.step_size;
        double shrink = 1.0;
        const double min_shrink = std::ldexp(1.0, -cfg.convergence_halvings);
        const int iters = cfg.iterations[static_cast<std::size_t>(level)];
        const double geo_scale = cfg.geodesic_weight / (static_cast<double>(geom.voxel_count()) * h * h);
        bool level_converged = false;
        for (int it = 0; it < iters; ++it) {
            std::vector<Vec3> force(cur.v.size());
            for (std::size_t n = 0; n < force.size(); ++n) {
                force[n] = (cur.wm.grad[n] * cur.mi.d_moving[n] - cur.wf.grad[n] * cur.mi.d_fixed[n]) * 0.5 -
                           cur.v.vectors[n] * geo_scale;
            }
            const DeformationField update = lattice.evaluate(lattice.fit(force));
            const double umax = max_norm(update);
            if (!(umax > 0.0)) {
                level_converged = true;
                res.cost_trace.push_back({level, cur.mi.value, cur.geodesic, 0.0});
                break;
            }
            const double step = gamma * shrink * h / umax;
            State trial = make_state(add(cur.v, scaled(update, step)));
            if (min_jacobian(trial.af) <= 0.0 || min_jacobian(trial.am) <= 0.0) {
                gamma *= 0.5;
                res.cost_trace.push_back({level, cur.mi.value, cur.geodesic, 0.0});
                if (gamma < cfg.min_step) {
                    throw DivergedError("BSD step size underflow after non-positive Jacobian", res.cost_trace);
                }
                continue;
            }
            score(trial);
            check_finite(trial.objective, res.cost_trace);
            if (trial.objective > cur.objective && trial.mi.value >= level_initial_mi &&
                trial.exact_mi > level_initial_exact) {
                cur = std::move(trial);
            } else {
                shrink *= 0.5;
            }
            res.cost_trace.push_back({level, cur.mi.value, cur.geodesic, 0.0});
            if (shrink < min_shrink) {
                level_converged = true;
                break;
            }
        }
        if (finest) {
            res.finest_final_mi = cur.mi.value;
            finest_converged = level_converged;
        }
        v = std::move(cur.v);
    }
    if (!v.geom.matches(fixed.geometry())) v = resample_field(v, fixed.geometry());
    const DeformationField half_fwd = exponentiate(scaled(v, 0.5), cfg.squarings);
    const DeformationField half_inv = exponentiate(scaled(v, -0.5), cfg.squarings);
    res.forward_field = compose(half_fwd, half_fwd);
    res.inverse_field = compose(half_inv, half_inv);
    res.converged = finest_converged;
    return res;
}

RegistrationResult register_pair(const Image3D &fixed, const Image3D &moving, const Mask3D &fixed_mask,
                                 const Mask3D &moving_mask, Engine engine, RegistrationConfig cfg) {
    cfg.validate();
    if (!fixed.geometry().matches(moving.geometry()) || !fixed.geometry().matches(fixed_mask.geometry()) ||
        !fixed.geometry().matches(moving_mask.geometry())) {
        throw ShapeError("register_pair: images and masks must share a geometry");
    }
    const Geometry &full = fixed.geometry();
    const Vec3 t = rigid_center_align(fixed_mask, moving_mask);
    const Image3D moving_aligned = warp(moving, DeformationField(full, t));

    // Crop to the fixed tumor bounding box dilated by crop_margin.
    Dims lo{full.dims[0], full.dims[1], full.dims[2]}, hi{-1, -1, -1};
    {
        const auto &d = full.dims;
        std::size_t n = 0;
        for (std::int64_t k = 0; k < d[2]; ++k)
            for (std::int64_t j = 0; j < d[1]; ++j)
                for (std::int64_t i = 0; i < d[0]; ++i, ++n)
                    if (fixed_mask[n]) {
                        const std::int64_t idx[3] = {i, j, k};
                        for (std::size_t a = 0; a < 3; ++a) {
                            lo[a] = std::min(lo[a], idx[a]);
                            hi[a] = std::max(hi[a], idx[a]);
                        }
                    }
        if (hi[0] < 0) throw InputError("register_pair: empty fixed mask");
    }
    Dims crop_lo{}, crop_dims{};
    for (std::size_t a = 0; a < 3; ++a) {
        const auto margin = static_cast<std::int64_t>(std::ceil(cfg.crop_margin / full.spacing[static_cast<int>(a)]));
        crop_lo[a] = std::max<std::int64_t>(lo[a] - margin, 0);
        const std::int64_t end = std::min<std::int64_t>(hi[a] + margin, full.dims[a] - 1);
        crop_dims[a] = end - crop_lo[a] + 1;
    }
    const Image3D F = crop(fixed, crop_lo, crop_dims);
    Image3D M = crop(moving_aligned, crop_lo, crop_dims);
    const Mask3D fm = crop(fixed_mask, crop_lo, crop_dims);

    std::optional<RegistrationResult> pre;
    if (cfg.rigidity_weight > 0.0) {
        RegistrationConfig pre_cfg = cfg;
        pre_cfg.levels = 1;
        pre_cfg.iterations = {cfg.rigidity_iterations};
        const Mask3D rmask = cfg.rigidity_mask ? crop(*cfg.rigidity_mask, crop_lo, crop_dims) : fm;
        pre = run_ffd(F, M, pre_cfg, rmask, cfg.rigidity_weight);
        M = warp(M, pre->forward_field);
    }

    RegistrationResult main = engine == Engine::bsd ? register_bsd(F, M, cfg) : register_ffd(F, M, cfg);

    DeformationField fwd = main.forward_field;
    DeformationField inv = main.inverse_field;
    if (pre) {
        fwd = compose(pre->forward_field, fwd);
        inv = compose(inv, pre->inverse_field);
        main.cost_trace.insert(main.cost_trace.begin(), pre->cost_trace.begin(), pre->cost_trace.end());
    }
    // Re-embed on the full grid and fold in the centroid translation.
    DeformationField fwd_full = embed_field(fwd, full);
    for (auto &v : fwd_full.vectors) v += t;
    DeformationField inv_full(full);
    {
        // inverse(y) = -t + v(y - t), with v zero outside the crop
        const DeformationField inv_embedded = embed_field(inv, full);
        const auto &d = full.dims;
        std::size_t n = 0;
        for (std::int64_t k = 0; k < d[2]; ++k)
            for (std::int64_t j = 0; j < d[1]; ++j)
                for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                    const Vec3 p = full.to_physical(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)) - t;
                    inv_full.vectors[n] = sample_field(inv_embedded, full.to_continuous_index(p)) - t;
                }
    }
    main.forward_field = std::move(fwd_full);
    main.inverse_field = std::move(inv_full);
    return main;
}

} // namespace blendreg
