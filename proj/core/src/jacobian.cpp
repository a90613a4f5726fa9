// jacobian.cpp - Jacobian maps, volume change, overlap and cohort statistics.

#include "blendreg/jacobian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blendreg/stats.hpp"

namespace blendreg {

double det3(const Mat3 &m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 jacobian_matrix(const DeformationField &field, std::int64_t i, std::int64_t j, std::int64_t k) {
    const auto &g = field.geom;
    const auto &d = g.dims;
    Mat3 m{1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
    const std::int64_t idx[3] = {i, j, k};
    for (int a = 0; a < 3; ++a) {
        if (d[static_cast<std::size_t>(a)] == 1) continue;
        std::int64_t lo[3] = {i, j, k}, hi[3] = {i, j, k};
        lo[a] = std::max<std::int64_t>(idx[a] - 1, 0);
        hi[a] = std::min<std::int64_t>(idx[a] + 1, d[static_cast<std::size_t>(a)] - 1);
        const double h = static_cast<double>(hi[a] - lo[a]) * g.spacing[a];
        const Vec3 du = (field.at(hi[0], hi[1], hi[2]) - field.at(lo[0], lo[1], lo[2])) * (1.0 / h);
        // column a holds d u / d x_a
        m[static_cast<std::size_t>(0 * 3 + a)] += du.x;
        m[static_cast<std::size_t>(1 * 3 + a)] += du.y;
        m[static_cast<std::size_t>(2 * 3 + a)] += du.z;
    }
    return m;
}

JacobianMap jacobian_map(const DeformationField &field) {
    JacobianMap out(field.geom);
    const auto &d = field.geom.dims;
    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++n)
                out[n] = det3(jacobian_matrix(field, i, j, k));
    return out;
}

double min_jacobian(const DeformationField &field) {
    const JacobianMap j = jacobian_map(field);
    return *std::min_element(j.voxels().begin(), j.voxels().end());
}

double jacobian_integral_change(const JacobianMap &jmap, const Mask3D &baseline_mask) {
    if (!jmap.geometry().matches(baseline_mask.geometry())) {
        throw ShapeError("jacobian_integral_change: mask geometry differs from Jacobian map");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < jmap.size(); ++n) {
        if (baseline_mask[n]) {
            sum += jmap[n];
            ++count;
        }
    }
    if (count == 0) {
        throw InputError("jacobian_integral_change: empty mask");
    }
    return 100.0 * (1.0 - sum / static_cast<double>(count));
}

double dice(const Mask3D &a, const Mask3D &b) {
    if (!a.geometry().matches(b.geometry())) {
        throw ShapeError("dice: mask geometries differ");
    }
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const bool x = a[n] != 0, y = b[n] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) {
        throw InputError("dice: both masks are empty");
    }
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

EvaluationReport evaluate_cohort(std::span<const CaseEvaluation> cases) {
    if (cases.size() < 3) {
        throw InputError("evaluate_cohort: at least 3 cases are needed for correlation");
    }
    EvaluationReport rep;
    rep.cases.assign(cases.begin(), cases.end());
    std::vector<double> est, gt, dsc;
    double abs_diff = 0.0;
    for (const auto &c : cases) {
        est.push_back(c.est_change_pct);
        gt.push_back(c.gt_change_pct);
        dsc.push_back(c.dsc);
        abs_diff += std::abs(c.est_change_pct - c.gt_change_pct);
    }
    rep.pearson_r = pearson(est, gt);
    rep.mean_abs_diff_pct = abs_diff / static_cast<double>(cases.size());
    rep.dsc_mean = mean(dsc);
    rep.dsc_sd = standard_deviation(dsc);
    return rep;
}

} // namespace blendreg
