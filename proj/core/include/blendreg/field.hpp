// field.hpp - dense displacement fields and the operations that apply them.
//
// A field maps a point x of its own grid to x + u(x); u is in mm.
#pragma once

#include <span>
#include <vector>

#include "blendreg/image.hpp"

namespace blendreg {

struct DeformationField {
    Geometry geom;
    std::vector<Vec3> vectors;

    DeformationField() = default;
    explicit DeformationField(const Geometry &g, Vec3 fill = {})
        : geom(g), vectors(g.voxel_count(), fill) {
        geom.validate();
    }

    std::size_t size() const { return vectors.size(); }
    Vec3 &at(std::int64_t i, std::int64_t j, std::int64_t k) { return vectors[geom.linear(i, j, k)]; }
    const Vec3 &at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return vectors[geom.linear(i, j, k)];
    }

    friend bool operator==(const DeformationField &, const DeformationField &) = default;
};

/// Trilinear displacement lookup at a continuous index of the field grid, edge clamped.
Vec3 sample_field(const DeformationField &field, const Vec3 &cindex);

/// out(x) = img(x + u(x)); output geometry is the field's.
Image3D warp(const Image3D &img, const DeformationField &field,
             Interpolation interp = Interpolation::linear);

/// Warps a mask with linear interpolation and re-binarizes at 0.5.
Mask3D warp_mask(const Mask3D &mask, const DeformationField &field);

/// Displacement of y -> outer(inner(y)): inner(x) + outer(x + inner(x)).
DeformationField compose(const DeformationField &outer, const DeformationField &inner);

/// Fixed-point inverse v(y) = -u(y + v(y)).
DeformationField invert(const DeformationField &field, int iterations = 30);

/// Scaling-and-squaring exponential of a stationary velocity field.
DeformationField exponentiate(const DeformationField &velocity, int squarings = 6);

DeformationField scaled(const DeformationField &field, double s);
DeformationField add(const DeformationField &a, const DeformationField &b);

double max_norm(const DeformationField &field);
/// Largest displacement magnitude in units of the smallest voxel spacing.
double max_norm_voxels(const DeformationField &field);

/// Mean of |(a o b)(x) - x| over the grid, in voxels of the smallest spacing.
double inverse_consistency_error(const DeformationField &forward, const DeformationField &inverse);

/// Resamples a field onto another grid (linear, edge clamped).
DeformationField resample_field(const DeformationField &field, const Geometry &target);

/// Places a field computed on a sub-grid into a larger grid; voxels outside get `outside`.
DeformationField embed_field(const DeformationField &sub, const Geometry &full, Vec3 outside = {});

} // namespace blendreg
