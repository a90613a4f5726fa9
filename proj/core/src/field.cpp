// field.cpp - displacement field algebra.

#include "blendreg/field.hpp"

#include <algorithm>
#include <cmath>

namespace blendreg {

Vec3 sample_field(const DeformationField &field, const Vec3 &c) {
    const auto &d = field.geom.dims;
    double f[3];
    std::int64_t i0[3], i1[3];
    for (int a = 0; a < 3; ++a) {
        double x = std::clamp(c[a], 0.0, static_cast<double>(d[a] - 1));
        const double r = std::round(x);
        if (std::abs(x - r) < 1e-9) x = r;
        const double fl = std::floor(x);
        i0[a] = static_cast<std::int64_t>(fl);
        i1[a] = std::min<std::int64_t>(i0[a] + 1, d[a] - 1);
        f[a] = x - fl;
    }
    const double wx[2] = {1.0 - f[0], f[0]};
    const double wy[2] = {1.0 - f[1], f[1]};
    const double wz[2] = {1.0 - f[2], f[2]};
    const std::int64_t ix[2] = {i0[0], i1[0]};
    const std::int64_t iy[2] = {i0[1], i1[1]};
    const std::int64_t iz[2] = {i0[2], i1[2]};
    Vec3 out;
    for (int c2 = 0; c2 < 2; ++c2) {
        for (int b = 0; b < 2; ++b) {
            const double wyz = wy[b] * wz[c2];
            for (int a = 0; a < 2; ++a) {
                out += field.at(ix[a], iy[b], iz[c2]) * (wx[a] * wyz);
            }
        }
    }
    return out;
}

Image3D warp(const Image3D &img, const DeformationField &field, Interpolation interp) {
    Image3D out(field.geom);
    const auto &g = field.geom;
    const auto &src = img.geometry();
    const auto &d = g.dims;
    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k) {
        for (std::int64_t j = 0; j < d[1]; ++j) {
            for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                const Vec3 p = g.to_physical(static_cast<double>(i), static_cast<double>(j),
                                             static_cast<double>(k)) +
                               field.vectors[n];
                const Vec3 c = src.to_continuous_index(p);
                out[n] = interp == Interpolation::linear ? sample_linear(img, c) : sample_nearest(img, c);
            }
        }
    }
    return out;
}

Mask3D warp_mask(const Mask3D &mask, const DeformationField &field) {
    return threshold(warp(mask_to_image(mask), field, Interpolation::linear), 0.5);
}

DeformationField compose(const DeformationField &outer, const DeformationField &inner) {
    DeformationField out(inner.geom);
    const auto &g = inner.geom;
    const auto &d = g.dims;
    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k) {
        for (std::int64_t j = 0; j < d[1]; ++j) {
            for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                const Vec3 u = inner.vectors[n];
                const Vec3 p = g.to_physical(static_cast<double>(i), static_cast<double>(j),
                                             static_cast<double>(k)) +
                               u;
                out.vectors[n] = u + sample_field(outer, outer.geom.to_continuous_index(p));
            }
        }
    }
    return out;
}

DeformationField invert(const DeformationField &field, int iterations) {
    DeformationField inv(field.geom);
    const auto &g = field.geom;
    const auto &d = g.dims;
    for (int it = 0; it < iterations; ++it) {
        std::size_t n = 0;
        for (std::int64_t k = 0; k < d[2]; ++k) {
            for (std::int64_t j = 0; j < d[1]; ++j) {
                for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                    const Vec3 p = g.to_physical(static_cast<double>(i), static_cast<double>(j),
                                                 static_cast<double>(k)) +
                                   inv.vectors[n];
                    inv.vectors[n] = -sample_field(field, g.to_continuous_index(p));
                }
            }
        }
    }
    return inv;
}

DeformationField exponentiate(const DeformationField &velocity, int squarings) {
    DeformationField phi = scaled(velocity, std::ldexp(1.0, -squarings));
    for (int s = 0; s < squarings; ++s) {
        phi = compose(phi, phi);
    }
    return phi;
}

DeformationField scaled(const DeformationField &field, double s) {
    DeformationField out = field;
    for (auto &v : out.vectors) v *= s;
    return out;
}

DeformationField add(const DeformationField &a, const DeformationField &b) {
    if (a.geom.dims != b.geom.dims) {
        throw ShapeError("field dims differ");
    }
    DeformationField out = a;
    for (std::size_t n = 0; n < out.size(); ++n) out.vectors[n] += b.vectors[n];
    return out;
}

double max_norm(const DeformationField &field) {
    double m = 0.0;
    for (const auto &v : field.vectors) m = std::max(m, v.norm());
    return m;
}

double max_norm_voxels(const DeformationField &field) {
    return max_norm(field) / field.geom.min_spacing();
}

double inverse_consistency_error(const DeformationField &forward, const DeformationField &inverse) {
    const DeformationField round_trip = compose(inverse, forward);
    double sum = 0.0;
    for (const auto &v : round_trip.vectors) sum += v.norm();
    return sum / static_cast<double>(round_trip.size()) / forward.geom.min_spacing();
}

DeformationField resample_field(const DeformationField &field, const Geometry &target) {
    DeformationField out(target);
    const auto &d = target.dims;
    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++n)
                out.vectors[n] = sample_field(
                    field, field.geom.to_continuous_index(target.to_physical(
                               static_cast<double>(i), static_cast<double>(j), static_cast<double>(k))));
    return out;
}

DeformationField embed_field(const DeformationField &sub, const Geometry &full, Vec3 outside) {
    DeformationField out(full, outside);
    const Vec3 off = full.to_continuous_index(sub.geom.origin);
    const std::int64_t lo[3] = {static_cast<std::int64_t>(std::llround(off.x)),
                                static_cast<std::int64_t>(std::llround(off.y)),
                                static_cast<std::int64_t>(std::llround(off.z))};
    const auto &d = sub.geom.dims;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i) {
                const std::int64_t gi = lo[0] + i, gj = lo[1] + j, gk = lo[2] + k;
                if (gi < 0 || gj < 0 || gk < 0 || gi >= full.dims[0] || gj >= full.dims[1] ||
                    gk >= full.dims[2]) {
                    continue;
                }
                out.at(gi, gj, gk) = sub.at(i, j, k);
            }
    return out;
}

} // namespace blendreg
