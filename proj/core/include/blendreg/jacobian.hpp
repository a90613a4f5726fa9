// jacobian.hpp - Jacobian-determinant maps and registration evaluation metrics.
#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "blendreg/field.hpp"
#include "blendreg/image.hpp"

namespace blendreg {

/// Image of det(d phi / dx) per voxel (unitless).
using JacobianMap = Image3D;

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

double det3(const Mat3 &m);

/// I + grad u at a voxel; central differences in mm, one-sided at the borders.
Mat3 jacobian_matrix(const DeformationField &field, std::int64_t i, std::int64_t j, std::int64_t k);

JacobianMap jacobian_map(const DeformationField &field);
double min_jacobian(const DeformationField &field);

/// 100 * (1 - mean J over the mask); shrinkage is positive.
double jacobian_integral_change(const JacobianMap &jmap, const Mask3D &baseline_mask);

/// 2|A n B| / (|A| + |B|).
double dice(const Mask3D &a, const Mask3D &b);

struct CaseEvaluation {
    std::string case_id;
    double est_change_pct = 0.0;
    double gt_change_pct = 0.0;
    double dsc = 0.0;
};

struct EvaluationReport {
    std::vector<CaseEvaluation> cases;
    double pearson_r = 0.0;
    double mean_abs_diff_pct = 0.0; ///< mean |est - gt| in percentage points
    double dsc_mean = 0.0;
    double dsc_sd = 0.0;
};

EvaluationReport evaluate_cohort(std::span<const CaseEvaluation> cases);

} // namespace blendreg
