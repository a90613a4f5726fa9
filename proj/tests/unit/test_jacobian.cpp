#include "doctest.h"

#include <cmath>

#include "blendreg/jacobian.hpp"

using namespace blendreg;

namespace {

const Geometry kGrid{{20, 20, 20}, {1, 1, 1}, {}};

DeformationField affine(const Geometry &g, Vec3 scale, Vec3 c) {
    DeformationField f(g);
    for (std::int64_t k = 0; k < g.dims[2]; ++k)
        for (std::int64_t j = 0; j < g.dims[1]; ++j)
            for (std::int64_t i = 0; i < g.dims[0]; ++i) {
                const Vec3 p = g.to_physical(double(i), double(j), double(k)) - c;
                f.at(i, j, k) = {(scale.x - 1) * p.x, (scale.y - 1) * p.y, (scale.z - 1) * p.z};
            }
    return f;
}

Mask3D box(const Geometry &g, std::int64_t lo, std::int64_t hi) {
    Mask3D m(g);
    for (std::int64_t k = lo; k < hi; ++k)
        for (std::int64_t j = lo; j < hi; ++j)
            for (std::int64_t i = lo; i < hi; ++i) m.at(i, j, k) = 1;
    return m;
}

} // namespace

TEST_CASE("jacobian_map closed forms") {
    for (double v : jacobian_map(DeformationField(kGrid)).voxels()) CHECK(v == 1.0);
    for (double v : jacobian_map(affine(kGrid, {0.8, 0.8, 0.8}, {10, 10, 10})).voxels())
        CHECK(v == doctest::Approx(0.512).epsilon(1e-12));
    for (double v : jacobian_map(affine(kGrid, {0.9, 0.8, 1.0}, {3, 4, 5})).voxels())
        CHECK(v == doctest::Approx(0.72).epsilon(1e-12));
    // anisotropic spacing is handled in mm
    const Geometry aniso{{16, 16, 8}, {0.98, 0.98, 4.0}, {}};
    for (double v : jacobian_map(affine(aniso, {0.9, 0.9, 0.5}, {5, 5, 10})).voxels())
        CHECK(v == doctest::Approx(0.405).epsilon(1e-12));
}

TEST_CASE("composition multiplies Jacobians") {
    const auto a = affine(kGrid, {0.9, 0.9, 0.9}, {10, 10, 10});
    const auto b = affine(kGrid, {0.8, 1.0, 1.1}, {10, 10, 10});
    const auto ab = compose(a, b);
    const auto jm = jacobian_map(ab);
    for (std::int64_t k = 6; k < 14; ++k)
        for (std::int64_t j = 6; j < 14; ++j)
            for (std::int64_t i = 6; i < 14; ++i)
                CHECK(jm.at(i, j, k) == doctest::Approx(0.729 * 0.88).epsilon(1e-6));
}

TEST_CASE("jacobian_integral_change") {
    const Mask3D m = box(kGrid, 4, 12);
    CHECK(jacobian_integral_change(Image3D(kGrid, 1.0), m) == doctest::Approx(0.0).scale(1.0));
    CHECK(jacobian_integral_change(Image3D(kGrid, 0.58), m) == doctest::Approx(42.0));
    Image3D mix(kGrid, 1.0);
    for (std::int64_t k = 4; k < 8; ++k)
        for (std::int64_t j = 4; j < 12; ++j)
            for (std::int64_t i = 4; i < 12; ++i) mix.at(i, j, k) = 0.5;
    CHECK(jacobian_integral_change(mix, m) == doctest::Approx(25.0));
    CHECK_THROWS_AS(jacobian_integral_change(mix, Mask3D(kGrid)), InputError);
}

TEST_CASE("dice") {
    const Mask3D a = box(kGrid, 2, 6);
    CHECK(dice(a, a) == 1.0);
    CHECK(dice(a, box(kGrid, 10, 14)) == 0.0);
    Mask3D small(kGrid), big(kGrid);
    for (std::size_t n = 0; n < 100; ++n) big[n] = 1;
    for (std::size_t n = 0; n < 50; ++n) small[n] = 1;
    CHECK(dice(small, big) == doctest::Approx(2.0 * 50 / 150));
    CHECK(dice(big, small) == dice(small, big));
    CHECK_THROWS_AS(dice(Mask3D(kGrid), Mask3D(kGrid)), InputError);
}

TEST_CASE("evaluate_cohort") {
    std::vector<CaseEvaluation> same{{"a", 10, 10, 0.9}, {"b", 20, 20, 0.8}, {"c", 35, 35, 0.7}};
    const auto r = evaluate_cohort(same);
    CHECK(r.pearson_r == doctest::Approx(1.0));
    CHECK(r.mean_abs_diff_pct == 0.0);
    CHECK(r.dsc_mean == doctest::Approx(0.8));
    CHECK(r.dsc_sd == doctest::Approx(0.1));

    std::vector<CaseEvaluation> anti{{"a", 10, -10, 1}, {"b", 0, 0, 1}, {"c", -10, 10, 1}};
    CHECK(evaluate_cohort(anti).pearson_r == doctest::Approx(-1.0));

    std::vector<CaseEvaluation> hand{{"a", 10, 12, 1}, {"b", 20, 18, 1}, {"c", 30, 33, 1}};
    const auto h = evaluate_cohort(hand);
    CHECK(h.pearson_r == doctest::Approx(210.0 / std::sqrt(200.0 * 234.0)).epsilon(1e-12));
    CHECK(h.mean_abs_diff_pct == doctest::Approx(7.0 / 3.0));

    std::vector<CaseEvaluation> flat{{"a", 10, 5, 1}, {"b", 20, 5, 1}, {"c", 30, 5, 1}};
    CHECK_THROWS_AS(evaluate_cohort(flat), DegenerateError);
    CHECK_THROWS_AS(evaluate_cohort(std::vector<CaseEvaluation>(same.begin(), same.begin() + 2)), InputError);
}
