#include "doctest.h"

#include <cmath>
#include <limits>

#include "blendreg/jacobian.hpp"
#include "blendreg/phantom.hpp"
#include "blendreg/registration.hpp"

using namespace blendreg;

namespace {

Image3D blob_image(const Geometry &g, Vec3 c) {
    Image3D img(g);
    const auto &d = g.dims;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i) {
                const Vec3 p = g.to_physical(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
                const double r = (p - c).norm();
                img.at(i, j, k) = 0.1 + 0.6 / (1.0 + std::exp((r - 8.0) / 1.0)) +
                                  0.2 * std::exp(-((p - c - Vec3{6, 5, 0}).dot(p - c - Vec3{6, 5, 0})) / 8.0);
            }
    return img;
}

RegistrationConfig quick_config() {
    RegistrationConfig cfg;
    cfg.iterations = {40, 30, 20};
    cfg.rigidity_weight = 0.0;
    return cfg;
}

} // namespace

TEST_CASE("rigid_center_align") {
    const Geometry g{{10, 10, 10}, {2, 1, 0.5}, {}};
    Mask3D a(g), b(g);
    a.at(2, 3, 4) = 1;
    b.at(2, 3, 4) = 1;
    CHECK(rigid_center_align(a, b) == Vec3{0, 0, 0});
    Mask3D c(g);
    c.at(5, 1, 8) = 1;
    const Vec3 t = rigid_center_align(a, c);
    CHECK(t.x == doctest::Approx(6.0));
    CHECK(t.y == doctest::Approx(-2.0));
    CHECK(t.z == doctest::Approx(2.0));
    CHECK_THROWS_AS(rigid_center_align(a, Mask3D(g)), InputError);
}

TEST_CASE("rigidity penalty closed forms") {
    const Geometry g{{12, 12, 12}, {1, 1, 1}, {}};
    Mask3D m(g);
    for (std::int64_t k = 3; k < 9; ++k)
        for (std::int64_t j = 3; j < 9; ++j)
            for (std::int64_t i = 3; i < 9; ++i) m.at(i, j, k) = 1;
    CHECK(rigidity_penalty(DeformationField(g), m) == 0.0);

    DeformationField rot(g), scale(g);
    const double th = 0.3, cs = std::cos(th), sn = std::sin(th);
    for (std::int64_t k = 0; k < 12; ++k)
        for (std::int64_t j = 0; j < 12; ++j)
            for (std::int64_t i = 0; i < 12; ++i) {
                const Vec3 p{static_cast<double>(i) - 6, static_cast<double>(j) - 6, static_cast<double>(k) - 6};
                rot.at(i, j, k) = Vec3{cs * p.x - sn * p.y, sn * p.x + cs * p.y, p.z} - p;
                scale.at(i, j, k) = p * (0.8 - 1.0);
            }
    CHECK(rigidity_penalty(rot, m) < 1e-6);
    const double expected = 3 * std::pow(0.64 - 1, 2) + std::pow(0.512 - 1, 2);
    CHECK(rigidity_penalty(scale, m) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("config validation and defaults") {
    const auto blend = RegistrationConfig::defaults_for(Channel::blend);
    CHECK(blend.mesh_spacing == 32.0);
    CHECK(blend.step_size == 0.15);
    CHECK(blend.iterations == std::vector<int>{100, 70, 40});
    CHECK(blend.mi_bins == 32);
    CHECK(blend.rigidity_weight == 0.1);
    CHECK(RegistrationConfig::defaults_for(Channel::ct).mesh_spacing == 16.0);
    CHECK(RegistrationConfig::defaults_for(Channel::ct).rigidity_weight == 0.0);
    RegistrationConfig bad;
    bad.step_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.iterations = {10, 10};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.mi_bins = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(parse_engine("ffd") == Engine::ffd);
    CHECK_THROWS_AS(parse_engine("demons"), ConfigError);
    CHECK(std::string(to_string(parse_channel("pet"))) == "pet");
}

TEST_CASE("FFD similarity gradient matches finite differences on 8^3") {
    const Geometry g{{8, 8, 8}, {1, 1, 1}, {}};
    const Image3D f = blob_image(g, {3.5, 3.5, 3.5});
    const Image3D m = blob_image(g, {4.0, 3.2, 3.6});
    const BSplineLattice lat(g, 4.0);
    auto c = lat.zeros();
    for (std::size_t n = 0; n < c.size(); ++n) c[n] = {0.05 * std::sin(1.0 * n), 0.04 * std::cos(0.7 * n), 0.03};
    const auto s = ffd_similarity(f, m, lat, c, 16);
    const std::size_t idx = lat.control_index(2, 2, 2);
    for (int a = 0; a < 3; ++a) {
        auto cp = c, cm = c;
        const double h = 1e-5;
        cp[idx][a] += h;
        cm[idx][a] -= h;
        const double fd = (ffd_similarity(f, m, lat, cp, 16).value - ffd_similarity(f, m, lat, cm, 16).value) / (2 * h);
        CHECK(s.gradient[idx][a] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("identity pairs stay put") {
    const Geometry g{{40, 40, 40}, {1, 1, 1}, {}};
    const Image3D img = blob_image(g, {20, 20, 20});
    const auto cfg = quick_config();
    const auto ffd = register_ffd(img, img, cfg);
    CHECK(max_norm_voxels(ffd.forward_field) < 0.1);
    CHECK(ffd.finest_final_mi >= ffd.finest_initial_mi);
    const auto bsd = register_bsd(img, img, cfg);
    CHECK(max_norm_voxels(bsd.forward_field) < 0.1);
    const double mj = min_jacobian(bsd.forward_field);
    CHECK(mj >= 0.95);
    CHECK(mj <= 1.05);
}

TEST_CASE("FFD recovers a 5 mm translation") {
    const Geometry g{{48, 48, 48}, {1, 1, 1}, {}};
    const Image3D fixed = blob_image(g, {22, 24, 24});
    const Image3D moving = blob_image(g, {27, 24, 24}); // moving(x + 5 e_x) = fixed(x)
    const auto res = register_ffd(fixed, moving, quick_config());
    Vec3 sum;
    std::size_t n = 0;
    for (std::int64_t k = 14; k < 34; ++k)
        for (std::int64_t j = 14; j < 34; ++j)
            for (std::int64_t i = 12; i < 32; ++i, ++n) sum += res.forward_field.at(i, j, k);
    const Vec3 mean = sum * (1.0 / static_cast<double>(n));
    CHECK(mean.x == doctest::Approx(5.0).epsilon(0.1));
    CHECK(std::abs(mean.y) < 0.5);
    CHECK(std::abs(mean.z) < 0.5);
}

TEST_CASE("BSD on a shrinking sphere: diffeomorphic, inverse consistent, accurate") {
    PhantomSpec s;
    s.grid = Geometry{{48, 48, 48}, {1, 1, 1}, {}};
    s.center = {24, 24, 24};
    s.baseline_radius = 9;
    s.shrink_factor = shrink_for_change(50.0, std::nullopt);
    s.noise_sd = 0.01;
    s.seed = 2;
    const PhantomCase pc = make_sphere_phantom(s);
    const auto res = register_pair(pc.baseline_img, pc.followup_img, pc.baseline_mask, pc.followup_mask, Engine::bsd,
                                   RegistrationConfig::defaults_for(Channel::blend));
    CHECK(min_jacobian(res.forward_field) > 0.0);
    CHECK(inverse_consistency_error(res.forward_field, res.inverse_field) < 0.5);
    const double est = jacobian_integral_change(jacobian_map(res.forward_field), pc.baseline_mask);
    CHECK(est == doctest::Approx(50.0).epsilon(0.2));
    CHECK(res.finest_final_mi >= res.finest_initial_mi);
    CHECK(res.cost_trace.size() > 0);
}

TEST_CASE("non-finite cost raises DivergedError with its trace") {
    const Geometry g{{16, 16, 16}, {1, 1, 1}, {}};
    Image3D img = blob_image(g, {8, 8, 8});
    Image3D bad = img;
    bad[100] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(register_ffd(img, bad, quick_config()), DivergedError);
    CHECK_THROWS_AS(register_bsd(img, bad, quick_config()), DivergedError);
}

TEST_CASE("shape mismatch is rejected") {
    const Image3D a(Geometry{{8, 8, 8}, {1, 1, 1}, {}}), b(Geometry{{8, 8, 9}, {1, 1, 1}, {}});
    CHECK_THROWS_AS(register_bsd(a, b, quick_config()), ShapeError);
    CHECK_THROWS_AS(register_ffd(a, b, quick_config()), ShapeError);
}
