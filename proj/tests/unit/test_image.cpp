#include "doctest.h"

#include <random>

#include "blendreg/image.hpp"

using namespace blendreg;

namespace {

Image3D filled(Dims d, double v, Vec3 spacing = {1, 1, 1}) { return Image3D(Geometry{d, spacing, {}}, v); }

Image3D random_image(Dims d, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Image3D img(Geometry{d, {1, 1, 1}, {}});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto &v : img.voxels()) v = u(rng);
    return img;
}

} // namespace

TEST_CASE("clip_intensity") {
    Image3D img = filled({3, 1, 1}, 0.0);
    img[0] = 2000;
    img[1] = 100;
    img[2] = 750;
    const Image3D c = clip_intensity(img, 750);
    CHECK(c[0] == 750);
    CHECK(c[1] == 100);
    CHECK(c[2] == 750);
    CHECK(clip_intensity(c, 750) == c);
    CHECK_THROWS_AS(clip_intensity(img, std::nan("")), ConfigError);
}

TEST_CASE("normalize maps the CT window onto [0,1]") {
    Image3D img = filled({4, 1, 1}, 0.0);
    img[0] = -1000;
    img[1] = 750;
    img[2] = -125;
    img[3] = 3000;
    const Image3D n = normalize(img, -1000, 750);
    CHECK(n[0] == 0.0);
    CHECK(n[1] == 1.0);
    CHECK(n[2] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(n[3] == 1.0);
    CHECK_THROWS_AS(normalize(img, 1, 1), ConfigError);
    CHECK_THROWS_AS(normalize(img, 2, 1), ConfigError);
}

TEST_CASE("blend") {
    Image3D one = filled({2, 2, 2}, 1.0), zero = filled({2, 2, 2}, 0.0), half = filled({2, 2, 2}, 0.5);
    CHECK(blend(one, zero, 0.2)[0] == doctest::Approx(0.2));
    CHECK(blend(half, half, 0.37)[3] == doctest::Approx(0.5));
    const Image3D p = random_image({3, 3, 3}, 4);
    CHECK(blend(filled({3, 3, 3}, 1.0), p, 0.0) == p);
    CHECK_THROWS_AS(blend(one, filled({2, 2, 3}, 0.0), 0.2), ShapeError);
    CHECK_THROWS_AS(blend(one, zero, 1.5), ConfigError);

    // affine in each input
    const Image3D a = random_image({3, 3, 3}, 1), b = random_image({3, 3, 3}, 2), c = random_image({3, 3, 3}, 3),
                  d = random_image({3, 3, 3}, 5);
    Image3D ac = a, bd = b;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ac[i] += c[i];
        bd[i] += d[i];
    }
    const Image3D lhs1 = blend(a, b, 0.3), lhs2 = blend(c, d, 0.3), rhs = blend(ac, bd, 0.3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(lhs1[i] + lhs2[i] == doctest::Approx(rhs[i]).epsilon(1e-12));
}

TEST_CASE("blend_channels output stays in [0,1]") {
    const Image3D ct = random_image({5, 5, 5}, 7, -2000, 3000);
    const Image3D pet = random_image({5, 5, 5}, 8, -1, 60);
    const Image3D b = blend_channels(ct, pet, BlendConfig{});
    for (double v : b.voxels()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("resample") {
    const Image3D img = random_image({6, 5, 4}, 9);
    CHECK(resample(img, img.geometry(), Interpolation::linear) == img);
    CHECK(resample(img, img.geometry(), Interpolation::nearest) == img);

    Image3D pet(Geometry{{20, 20, 10}, {4.0, 4.0, 4.25}, {}}, 3.5);
    const Geometry ct{{80, 80, 10}, {0.98, 0.98, 4.0}, {}};
    const Image3D r = resample(pet, ct, Interpolation::linear);
    CHECK(r.dims() == ct.dims);
    for (double v : r.voxels()) CHECK(v == doctest::Approx(3.5));

    // half-voxel shift of a linear ramp
    Image3D ramp(Geometry{{8, 1, 1}, {1, 1, 1}, {}});
    for (int i = 0; i < 8; ++i) ramp[static_cast<std::size_t>(i)] = i;
    const Image3D shifted = resample(ramp, Geometry{{7, 1, 1}, {1, 1, 1}, {0.5, 0, 0}}, Interpolation::linear);
    for (int i = 0; i < 7; ++i) CHECK(shifted[static_cast<std::size_t>(i)] == doctest::Approx(i + 0.5));
    // outside the source extent takes the boundary value
    const Image3D out = resample(ramp, Geometry{{2, 1, 1}, {1, 1, 1}, {-3, 0, 0}}, Interpolation::linear);
    CHECK(out[0] == 0.0);
}

TEST_CASE("downsample") {
    const Image3D img = random_image({64, 64, 64}, 11);
    const Image3D d2 = downsample(img, 2);
    CHECK(d2.dims() == Dims{32, 32, 32});
    CHECK(d2.geometry().spacing.x == 2.0);
    const Image3D d1 = downsample(img, 1);
    CHECK(d1.geometry().matches(img.geometry()));
    CHECK_FALSE(d1 == img);
    const Image3D c = downsample(filled({9, 7, 5}, 2.5), 4);
    CHECK(c.dims() == Dims{3, 2, 2});
    for (double v : c.voxels()) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
    CHECK_THROWS_AS(downsample(img, 0), ConfigError);
}

TEST_CASE("geometry validation and crop") {
    CHECK_THROWS_AS(Image3D(Geometry{{0, 1, 1}, {1, 1, 1}, {}}), ConfigError);
    CHECK_THROWS_AS(Image3D(Geometry{{1, 1, 1}, {0, 1, 1}, {}}), ConfigError);
    const Image3D img = random_image({6, 6, 6}, 12);
    const Image3D c = crop(img, {1, 2, 3}, {2, 2, 2});
    CHECK(c.at(0, 0, 0) == img.at(1, 2, 3));
    CHECK(c.geometry().origin == Vec3{1, 2, 3});
    CHECK_THROWS_AS(crop(img, {5, 0, 0}, {2, 1, 1}), ConfigError);
}

TEST_CASE("gradient of a ramp") {
    Image3D ramp(Geometry{{5, 4, 3}, {2, 1, 0.5}, {}});
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 5; ++i) ramp.at(i, j, k) = 3.0 * i * 2 + 1.0 * j - 4.0 * k * 0.5;
    const auto g = gradient(ramp);
    for (std::size_t n = 0; n < ramp.size(); ++n) {
        CHECK(g[0][n] == doctest::Approx(3.0));
        CHECK(g[1][n] == doctest::Approx(1.0));
        CHECK(g[2][n] == doctest::Approx(-4.0));
    }
}
