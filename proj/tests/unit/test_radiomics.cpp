#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "blendreg/radiomics.hpp"

using namespace blendreg;

namespace {

QuantizedROI line_roi(std::vector<int> labels, int n_bins, Dims dims) {
    QuantizedROI q;
    q.dims = dims;
    q.labels = std::move(labels);
    q.n_bins = n_bins;
    for (int b = 0; b <= n_bins; ++b) q.edges.push_back(b);
    return q;
}

Matrix from(std::size_t n, std::initializer_list<double> v) {
    Matrix m(n, n);
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

std::size_t idx(const char *name) {
    for (std::size_t i = 0; i < kGlcmFeatureNames.size(); ++i)
        if (std::string(kGlcmFeatureNames[i]) == name) return i;
    return 99;
}

} // namespace

TEST_CASE("unique offsets") {
    const auto &o = unique_offsets();
    CHECK(o.size() == 13);
    for (std::size_t a = 0; a < 13; ++a) {
        for (std::size_t b = 0; b < 13; ++b) {
            if (a == b) continue;
            CHECK_FALSE(o[a] == o[b]);
            CHECK_FALSE((o[a][0] == -o[b][0] && o[a][1] == -o[b][1] && o[a][2] == -o[b][2]));
        }
    }
    CHECK(std::is_sorted(o.begin(), o.end()));
}

TEST_CASE("quantize") {
    const Geometry g{{8, 1, 1}, {1, 1, 1}, {}};
    Image3D img(g);
    for (int i = 0; i < 8; ++i) img[static_cast<std::size_t>(i)] = i / 7.0;
    const Mask3D m(g, 1);
    const auto q = quantize(img, m, 4);
    CHECK(q.labels == std::vector<int>{1, 1, 2, 2, 3, 3, 4, 4});
    CHECK(q.edges.size() == 5);
    CHECK_FALSE(q.degenerate);
    const auto c = quantize(Image3D(g, 1.0), m, 4);
    CHECK(c.degenerate);
    for (int l : c.labels) CHECK(l == 1);
    Mask3D part(g);
    part[2] = part[3] = 1;
    const auto p = quantize(img, part, 4);
    CHECK(p.labels[0] == 0);
    CHECK(p.labels[2] == 1);
    CHECK(p.labels[3] == 4);
    CHECK_THROWS_AS(quantize(img, Mask3D(g), 4), InputError);
    CHECK_THROWS_AS(quantize(img, m, 1), ConfigError);
}

TEST_CASE("glcm of a 1x4x1 line") {
    const auto q = line_roi({1, 1, 2, 2}, 2, {1, 4, 1});
    const Matrix counts = glcm_counts(q, {0, 1, 0});
    CHECK(counts == from(2, {2, 1, 1, 2}));
    const Matrix p = glcm(q, {0, 1, 0});
    CHECK(p(0, 0) == doctest::Approx(2.0 / 6));
    CHECK(p(0, 1) == doctest::Approx(1.0 / 6));
    CHECK_THROWS_AS(glcm(q, {1, 0, 0}), DegenerateError);
    const auto c = line_roi({3, 3, 3, 3}, 4, {1, 4, 1});
    const auto f = glcm_features(glcm(c, {0, 1, 0}));
    CHECK(f.values[idx("energy")] == doctest::Approx(1.0));
}

TEST_CASE("glcm feature closed forms") {
    const auto single = glcm_features(from(3, {0, 0, 0, 0, 1, 0, 0, 0, 0}));
    CHECK(single.values[idx("energy")] == 1.0);
    CHECK(single.values[idx("entropy")] == 0.0);
    CHECK(single.correlation_undefined);

    const auto uni = glcm_features(from(2, {0.25, 0.25, 0.25, 0.25}));
    CHECK(uni.values[idx("entropy")] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(uni.values[idx("energy")] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(uni.values[idx("correlation")] == doctest::Approx(0.0).scale(1.0));

    const auto diag = glcm_features(from(2, {0.5, 0, 0, 0.5}));
    CHECK(diag.values[idx("correlation")] == doctest::Approx(1.0));
    CHECK(diag.values[idx("contrast")] == 0.0);
    CHECK(diag.values[idx("inverse_difference_moment")] == doctest::Approx(1.0));
    // labels 1 and 2 with mean 1.5: shade sums (2-3)^3 and (4-3)^3
    CHECK(diag.values[idx("cluster_shade")] == doctest::Approx(0.0).scale(1.0));
    CHECK(diag.values[idx("sum_average")] == doctest::Approx(3.0));
    CHECK(diag.values[idx("autocorrelation")] == doctest::Approx(2.5));

    // skewed matrix: cluster shade by direct summation
    const Matrix sk = from(3, {0.5, 0.1, 0.0, 0.1, 0.1, 0.05, 0.0, 0.05, 0.1});
    double mu = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) mu += (i + 1) * sk(i, j);
    double shade = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) shade += std::pow(i + 1 + j + 1 - 2 * mu, 3) * sk(i, j);
    CHECK(glcm_features(sk).values[idx("cluster_shade")] == doctest::Approx(shade).epsilon(1e-12));
}

TEST_CASE("glrlm") {
    const auto q = line_roi({1, 1, 1, 2}, 2, {4, 1, 1});
    const Matrix r = glrlm(q, {1, 0, 0});
    CHECK(r(0, 2) == 1.0);
    CHECK(r(1, 0) == 1.0);
    CHECK(std::accumulate(r.data.begin(), r.data.end(), 0.0) == 2.0);

    const auto c = line_roi({2, 2, 2, 2, 2}, 2, {5, 1, 1});
    const Matrix rc = glrlm(c, {1, 0, 0});
    CHECK(rc(1, 4) == 1.0);

    const auto alt = line_roi({1, 2, 1, 2, 1, 2}, 2, {6, 1, 1});
    const Matrix ra = glrlm(alt, {1, 0, 0});
    const auto f = glrlm_features(ra, 6);
    CHECK(f[4] == doctest::Approx(1.0)); // run percentage
    CHECK(f[0] == doctest::Approx(1.0)); // short run emphasis
}

TEST_CASE("extract_all") {
    const Geometry g{{12, 12, 12}, {1, 1, 1}, {}};
    Mask3D m(g);
    for (std::int64_t k = 2; k < 10; ++k)
        for (std::int64_t j = 2; j < 10; ++j)
            for (std::int64_t i = 2; i < 10; ++i) m.at(i, j, k) = 1;
    const auto flat = extract_all(Image3D(g, 1.0), m);
    CHECK(flat.values.size() == 56);
    CHECK(FeatureVector::names().size() == 56);
    CHECK(flat.degenerate);
    CHECK(flat.get("firstorder_mean") == 1.0);
    CHECK(flat.get("firstorder_sd") == 0.0);
    for (double v : flat.values) CHECK(std::isfinite(v));

    Image3D img(g);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (auto &v : img.voxels()) v = u(rng);
    const auto fv = extract_all(img, m);
    CHECK_FALSE(fv.degenerate);
    const double e = fv.get("glcm_energy_mean");
    CHECK(e > 0.0);
    CHECK(e <= 1.0);
    CHECK(fv.get("glcm_entropy_mean") <= 2 * std::log(32.0));
    Image3D shifted = img;
    for (auto &v : shifted.voxels()) v += 3.0;
    const auto fs = extract_all(shifted, m);
    for (std::size_t i = 6; i < 56; ++i) CHECK(fs.values[i] == doctest::Approx(fv.values[i]).epsilon(1e-9));
    CHECK(fs.get("firstorder_mean") == doctest::Approx(fv.get("firstorder_mean") + 3.0));
    CHECK_THROWS(fv.get("nonexistent"));
    CHECK(FeatureVector::names()[6] == "glcm_energy_mean");
    CHECK(FeatureVector::names()[55] == "glrlm_lrhge_sd");
}
