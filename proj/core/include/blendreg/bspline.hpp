// bspline.hpp - cubic B-spline control lattice over an image grid.
#pragma once

#include <array>
#include <span>
#include <vector>

#include "blendreg/field.hpp"
#include "blendreg/image.hpp"

namespace blendreg {

/// Uniform cubic B-spline basis value (order 0) or derivative (order 1, 2) at offset u in [0,1].
std::array<double, 4> cubic_bspline_weights(double u, int order = 0);

/// Centered cubic B-spline kernel beta3(t), support (-2, 2).
double cubic_bspline(double t);
double cubic_bspline_derivative(double t);

/// Control lattice of spacing `mesh_spacing` mm covering a grid, with one extra
/// control point before and two after the domain so every voxel has full 4x4x4 support.
class BSplineLattice {
public:
    using Coefficients = std::vector<Vec3>;
    using Order = std::array<int, 3>;

    BSplineLattice(const Geometry &domain, double mesh_spacing);

    const Geometry &domain() const { return domain_; }
    double mesh_spacing() const { return mesh_spacing_; }
    const Dims &control_dims() const { return control_dims_; }
    std::size_t control_count() const {
        return static_cast<std::size_t>(control_dims_[0] * control_dims_[1] * control_dims_[2]);
    }
    std::size_t control_index(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return static_cast<std::size_t>(i + control_dims_[0] * (j + control_dims_[1] * k));
    }
    Coefficients zeros() const { return Coefficients(control_count()); }

    /// Dense displacement B c on the domain grid.
    DeformationField evaluate(std::span<const Vec3> coeffs) const;
    /// Dense partial derivative (orders per axis, each 0..2) in physical units.
    std::vector<Vec3> evaluate_derivative(std::span<const Vec3> coeffs, Order order) const;
    /// Adjoint of evaluate_derivative: B^T applied to a dense vector field.
    Coefficients adjoint(std::span<const Vec3> dense, Order order = {0, 0, 0}) const;
    /// Least-squares projection of a dense field onto the lattice.
    Coefficients fit(std::span<const Vec3> dense) const;

    /// Mean over voxels of the squared second derivatives (all nine pairs).
    double bending_energy(std::span<const Vec3> coeffs) const;
    Coefficients bending_energy_gradient(std::span<const Vec3> coeffs) const;

private:
    struct AxisBasis {
        std::int64_t voxels = 0;
        std::int64_t controls = 0;
        std::vector<std::int64_t> first;            // first control index per voxel
        std::array<std::vector<double>, 3> weights; // [order][4 * voxel + k]
        std::vector<double> gram_cholesky;          // lower factor of B^T B, controls^2
    };

    std::vector<Vec3> apply(std::span<const Vec3> in, Order order, bool transpose) const;

    Geometry domain_;
    double mesh_spacing_;
    Dims control_dims_{};
    std::array<AxisBasis, 3> axes_;
};

} // namespace blendreg
