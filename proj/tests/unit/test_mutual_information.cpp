#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "blendreg/mutual_information.hpp"

using namespace blendreg;

namespace {

Image3D blobs(Dims d, std::uint64_t seed) {
    Image3D img(Geometry{d, {1, 1, 1}, {}});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i) {
                const double r = std::hypot(i - d[0] / 2.0, j - d[1] / 2.0, k - d[2] / 2.0);
                img.at(i, j, k) = (r < d[0] / 4.0 ? 0.8 : 0.2) + 0.1 * std::sin(0.4 * i) + noise(rng);
            }
    return img;
}

} // namespace

TEST_CASE("MI of an image with itself is its entropy (exact histogram)") {
    const Image3D img = blobs({24, 24, 24}, 1);
    for (int bins : {8, 16, 32}) {
        CHECK(mutual_information(img, img, bins, nullptr, ParzenWindow::none) ==
              doctest::Approx(marginal_entropy(img, bins)).epsilon(1e-12));
    }
}

TEST_CASE("Parzen MI of an image with itself stays below its Parzen entropy") {
    const Image3D img = blobs({24, 24, 24}, 2);
    const double mi = mutual_information(img, img, 32);
    const double h = marginal_entropy(img, 32, ParzenWindow::cubic_bspline);
    CHECK(mi > 0.0);
    CHECK(mi <= h + 1e-12);
}

TEST_CASE("shuffling destroys dependence") {
    const Image3D img = blobs({32, 32, 32}, 3);
    Image3D shuffled = img;
    std::mt19937_64 rng(4);
    std::shuffle(shuffled.voxels().begin(), shuffled.voxels().end(), rng);
    const double exact = mutual_information(img, shuffled, 16, nullptr, ParzenWindow::none);
    const double parzen = mutual_information(img, shuffled, 16);
    CHECK(exact < 0.02);
    CHECK(parzen < exact + 1e-3);
    CHECK(mutual_information(img, img, 16) > 10 * exact);
}

TEST_CASE("monotone relabeling of one image leaves exact MI unchanged") {
    const Image3D a = blobs({20, 20, 20}, 5);
    Image3D b = blobs({20, 20, 20}, 6);
    const double before = mutual_information(a, b, 16, nullptr, ParzenWindow::none);
    // affine increasing map keeps every voxel in the same bin
    Image3D b2 = b;
    for (auto &v : b2.voxels()) v = 3.0 * v + 7.0;
    CHECK(mutual_information(a, b2, 16, nullptr, ParzenWindow::none) == doctest::Approx(before).epsilon(1e-12));
    // swapping the roles of the images gives the same value
    CHECK(mutual_information(b, a, 16, nullptr, ParzenWindow::none) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("constant image has zero MI") {
    const Image3D a = blobs({10, 10, 10}, 7);
    const Image3D c(a.geometry(), 0.4);
    CHECK(mutual_information(a, c, 32) == 0.0);
    CHECK(mutual_information(c, a, 32) == 0.0);
}

TEST_CASE("roi restricts the samples") {
    const Image3D a = blobs({16, 16, 16}, 8);
    Mask3D full(a.geometry(), 1);
    CHECK(mutual_information(a, a, 16, &full) == doctest::Approx(mutual_information(a, a, 16)));
    Mask3D half(a.geometry());
    for (std::int64_t k = 0; k < 8; ++k)
        for (std::int64_t j = 0; j < 16; ++j)
            for (std::int64_t i = 0; i < 16; ++i) half.at(i, j, k) = 1;
    Image3D b = a;
    for (std::int64_t k = 8; k < 16; ++k)
        for (std::int64_t j = 0; j < 16; ++j)
            for (std::int64_t i = 0; i < 16; ++i) b.at(i, j, k) = 0.0;
    const auto est = MutualInformationEstimator::from_images(a, a, 16);
    CHECK(est.evaluate(a, b, false, false, &half).value == doctest::Approx(est.evaluate(a, a, false, false, &half).value));
}

TEST_CASE("intensity derivative matches finite differences") {
    const Image3D f = blobs({10, 10, 10}, 9);
    const Image3D m = blobs({10, 10, 10}, 10);
    const auto est = MutualInformationEstimator::from_images(f, m, 16);
    const auto ev = est.evaluate(f, m, true, true);
    for (std::size_t n : {std::size_t{17}, std::size_t{444}, std::size_t{901}}) {
        Image3D mp = m, mm = m;
        const double h = 1e-6;
        mp[n] += h;
        mm[n] -= h;
        const double fd = (est.evaluate(f, mp, false).value - est.evaluate(f, mm, false).value) / (2 * h);
        CHECK(ev.d_moving[n] == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
        Image3D fp = f, fm = f;
        fp[n] += h;
        fm[n] -= h;
        const double fdf = (est.evaluate(fp, m, false).value - est.evaluate(fm, m, false).value) / (2 * h);
        CHECK(ev.d_fixed[n] == doctest::Approx(fdf).epsilon(1e-4).scale(1e-6));
    }
}
