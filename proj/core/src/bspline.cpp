// bspline.cpp - separable cubic B-spline evaluation, adjoint and projection.

#include "blendreg/bspline.hpp"

#include <cmath>

namespace blendreg {

std::array<double, 4> cubic_bspline_weights(double u, int order) {
    const double u2 = u * u, u3 = u2 * u;
    const double v = 1.0 - u;
    switch (order) {
    case 0:
        return {v * v * v / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
                (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0, u3 / 6.0};
    case 1:
        return {-0.5 * v * v, 1.5 * u2 - 2.0 * u, -1.5 * u2 + u + 0.5, 0.5 * u2};
    case 2:
        return {v, 3.0 * u - 2.0, -3.0 * u + 1.0, u};
    default:
        throw ConfigError("B-spline derivative order must be 0, 1 or 2");
    }
}

double cubic_bspline(double t) {
    const double a = std::abs(t);
    if (a < 1.0) return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
    if (a < 2.0) {
        const double b = 2.0 - a;
        return b * b * b / 6.0;
    }
    return 0.0;
}

double cubic_bspline_derivative(double t) {
    const double a = std::abs(t);
    const double s = t < 0.0 ? -1.0 : 1.0;
    if (a < 1.0) return s * (-2.0 * a + 1.5 * a * a);
    if (a < 2.0) {
        const double b = 2.0 - a;
        return -s * 0.5 * b * b;
    }
    return 0.0;
}

BSplineLattice::BSplineLattice(const Geometry &domain, double mesh_spacing)
    : domain_(domain), mesh_spacing_(mesh_spacing) {
    domain_.validate();
    if (!(mesh_spacing > 0.0) || !std::isfinite(mesh_spacing)) {
        throw ConfigError("B-spline mesh spacing must be positive");
    }
    for (int a = 0; a < 3; ++a) {
        auto &ax = axes_[static_cast<std::size_t>(a)];
        ax.voxels = domain.dims[static_cast<std::size_t>(a)];
        const double step = domain.spacing[a] / mesh_spacing;
        const double extent = static_cast<double>(ax.voxels - 1) * step;
        ax.controls = static_cast<std::int64_t>(std::floor(extent + 1e-9)) + 4;
        control_dims_[static_cast<std::size_t>(a)] = ax.controls;
        ax.first.resize(static_cast<std::size_t>(ax.voxels));
        for (auto &w : ax.weights) w.resize(static_cast<std::size_t>(4 * ax.voxels));
        for (std::int64_t v = 0; v < ax.voxels; ++v) {
            const double t = static_cast<double>(v) * step;
            auto cell = static_cast<std::int64_t>(std::floor(t + 1e-12));
            cell = std::min(cell, ax.controls - 4);
            const double u = t - static_cast<double>(cell);
            ax.first[static_cast<std::size_t>(v)] = cell;
            for (int order = 0; order < 3; ++order) {
                const auto w = cubic_bspline_weights(u, order);
                const double scale = std::pow(1.0 / mesh_spacing, order);
                for (int k = 0; k < 4; ++k) {
                    ax.weights[static_cast<std::size_t>(order)][static_cast<std::size_t>(4 * v + k)] = w[static_cast<std::size_t>(k)] * scale;
                }
            }
        }
        // Gram matrix B^T B and its Cholesky factor.
        const auto n = static_cast<std::size_t>(ax.controls);
        std::vector<double> gram(n * n, 0.0);
        for (std::int64_t v = 0; v < ax.voxels; ++v) {
            const auto f = static_cast<std::size_t>(ax.first[static_cast<std::size_t>(v)]);
            for (std::size_t p = 0; p < 4; ++p)
                for (std::size_t q = 0; q < 4; ++q)
                    gram[(f + p) * n + (f + q)] += ax.weights[0][4 * static_cast<std::size_t>(v) + p] *
                                                   ax.weights[0][4 * static_cast<std::size_t>(v) + q];
        }
        double max_diag = 0.0;
        for (std::size_t p = 0; p < n; ++p) max_diag = std::max(max_diag, gram[p * n + p]);
        for (std::size_t p = 0; p < n; ++p) gram[p * n + p] += 1e-14 * max_diag;
        auto &L = ax.gram_cholesky;
        L.assign(n * n, 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = 0; q <= p; ++q) {
                double s = gram[p * n + q];
                for (std::size_t r = 0; r < q; ++r) s -= L[p * n + r] * L[q * n + r];
                if (p == q) {
                    L[p * n + p] = std::sqrt(std::max(s, 1e-300));
                } else {
                    L[p * n + q] = s / L[q * n + q];
                }
            }
        }
    }
}

std::vector<Vec3> BSplineLattice::apply(std::span<const Vec3> in, Order order, bool transpose) const {
    // Forward: control dims -> voxel dims one axis at a time; transpose goes back.
    Dims cur = transpose ? domain_.dims : control_dims_;
    std::vector<Vec3> buf(in.begin(), in.end());
    for (int a = 0; a < 3; ++a) {
        const auto &ax = axes_[static_cast<std::size_t>(a)];
        const auto &w = ax.weights[static_cast<std::size_t>(order[static_cast<std::size_t>(a)])];
        Dims next = cur;
        next[static_cast<std::size_t>(a)] = transpose ? ax.controls : ax.voxels;
        std::vector<Vec3> out(static_cast<std::size_t>(next[0] * next[1] * next[2]));
        const std::int64_t stride_in = a == 0 ? 1 : (a == 1 ? cur[0] : cur[0] * cur[1]);
        const std::int64_t stride_out = a == 0 ? 1 : (a == 1 ? next[0] : next[0] * next[1]);
        // Iterate over all lines along axis a.
        const std::int64_t outer_lo = a == 0 ? 1 : (a == 1 ? cur[0] : cur[0] * cur[1]);
        const std::int64_t n_lines = static_cast<std::int64_t>(buf.size()) / cur[static_cast<std::size_t>(a)];
        for (std::int64_t line = 0; line < n_lines; ++line) {
            const std::int64_t lo = line % outer_lo;
            const std::int64_t hi = line / outer_lo;
            const std::int64_t base_in = lo + hi * outer_lo * cur[static_cast<std::size_t>(a)];
            const std::int64_t base_out = lo + hi * outer_lo * next[static_cast<std::size_t>(a)];
            for (std::int64_t v = 0; v < ax.voxels; ++v) {
                const std::int64_t f = ax.first[static_cast<std::size_t>(v)];
                const double *wv = &w[static_cast<std::size_t>(4 * v)];
                if (!transpose) {
                    Vec3 acc;
                    for (int k = 0; k < 4; ++k) acc += buf[static_cast<std::size_t>(base_in + (f + k) * stride_in)] * wv[k];
                    out[static_cast<std::size_t>(base_out + v * stride_out)] = acc;
                } else {
                    const Vec3 val = buf[static_cast<std::size_t>(base_in + v * stride_in)];
                    for (int k = 0; k < 4; ++k) out[static_cast<std::size_t>(base_out + (f + k) * stride_out)] += val * wv[k];
                }
            }
        }
        buf = std::move(out);
        cur = next;
    }
    return buf;
}

DeformationField BSplineLattice::evaluate(std::span<const Vec3> coeffs) const {
    if (coeffs.size() != control_count()) {
        throw ShapeError("coefficient count does not match lattice");
    }
    DeformationField out;
    out.geom = domain_;
    out.vectors = apply(coeffs, {0, 0, 0}, false);
    return out;
}

std::vector<Vec3> BSplineLattice::evaluate_derivative(std::span<const Vec3> coeffs, Order order) const {
    if (coeffs.size() != control_count()) {
        throw ShapeError("coefficient count does not match lattice");
    }
    return apply(coeffs, order, false);
}

BSplineLattice::Coefficients BSplineLattice::adjoint(std::span<const Vec3> dense, Order order) const {
    if (dense.size() != domain_.voxel_count()) {
        throw ShapeError("dense field size does not match lattice domain");
    }
    return apply(dense, order, true);
}

BSplineLattice::Coefficients BSplineLattice::fit(std::span<const Vec3> dense) const {
    Coefficients c = adjoint(dense);
    // Solve (Gx (x) Gy (x) Gz) c = B^T f axis by axis.
    const Dims &cd = control_dims_;
    for (int a = 0; a < 3; ++a) {
        const auto &ax = axes_[static_cast<std::size_t>(a)];
        const auto n = static_cast<std::size_t>(ax.controls);
        const auto &L = ax.gram_cholesky;
        const std::int64_t stride = a == 0 ? 1 : (a == 1 ? cd[0] : cd[0] * cd[1]);
        const std::int64_t n_lines = static_cast<std::int64_t>(c.size()) / cd[static_cast<std::size_t>(a)];
        std::vector<Vec3> line(n);
        for (std::int64_t l = 0; l < n_lines; ++l) {
            const std::int64_t lo = l % stride;
            const std::int64_t hi = l / stride;
            const std::int64_t base = lo + hi * stride * cd[static_cast<std::size_t>(a)];
            for (std::size_t p = 0; p < n; ++p) line[p] = c[static_cast<std::size_t>(base + static_cast<std::int64_t>(p) * stride)];
            for (std::size_t p = 0; p < n; ++p) {
                Vec3 s = line[p];
                for (std::size_t r = 0; r < p; ++r) s -= line[r] * L[p * n + r];
                line[p] = s * (1.0 / L[p * n + p]);
            }
            for (std::size_t pp = n; pp-- > 0;) {
                Vec3 s = line[pp];
                for (std::size_t r = pp + 1; r < n; ++r) s -= line[r] * L[r * n + pp];
                line[pp] = s * (1.0 / L[pp * n + pp]);
            }
            for (std::size_t p = 0; p < n; ++p) c[static_cast<std::size_t>(base + static_cast<std::int64_t>(p) * stride)] = line[p];
        }
    }
    return c;
}

namespace {

// Second-derivative orders and their multiplicity in the sum over all nine (i,j) pairs.
constexpr std::array<std::pair<BSplineLattice::Order, double>, 6> kSecondOrders{{
    {{2, 0, 0}, 1.0}, {{0, 2, 0}, 1.0}, {{0, 0, 2}, 1.0},
    {{1, 1, 0}, 2.0}, {{1, 0, 1}, 2.0}, {{0, 1, 1}, 2.0},
}};

} // namespace

double BSplineLattice::bending_energy(std::span<const Vec3> coeffs) const {
    double total = 0.0;
    for (const auto &[order, mult] : kSecondOrders) {
        const auto d = evaluate_derivative(coeffs, order);
        double s = 0.0;
        for (const auto &v : d) s += v.dot(v);
        total += mult * s;
    }
    return total / static_cast<double>(domain_.voxel_count());
}

BSplineLattice::Coefficients BSplineLattice::bending_energy_gradient(std::span<const Vec3> coeffs) const {
    Coefficients g = zeros();
    const double norm = 2.0 / static_cast<double>(domain_.voxel_count());
    for (const auto &[order, mult] : kSecondOrders) {
        const auto d = evaluate_derivative(coeffs, order);
        const auto back = adjoint(d, order);
        for (std::size_t n = 0; n < g.size(); ++n) g[n] += back[n] * (mult * norm);
    }
    return g;
}

} // namespace blendreg
