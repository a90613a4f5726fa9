#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "blendreg/field.hpp"
#include "blendreg/jacobian.hpp"
#include "blendreg/mutual_information.hpp"
#include "blendreg/phantom.hpp"
#include "blendreg/radiomics.hpp"

using namespace blendreg;

namespace {

Geometry cube(std::int64_t n) { return Geometry{{n, n, n}, {1, 1, 1}, {}}; }

DeformationField wavy_field(const Geometry &g) {
    DeformationField f(g);
    for (std::int64_t k = 0; k < g.dims[2]; ++k)
        for (std::int64_t j = 0; j < g.dims[1]; ++j)
            for (std::int64_t i = 0; i < g.dims[0]; ++i)
                f.at(i, j, k) = {0.5 * std::sin(0.1 * j), 0.5 * std::cos(0.1 * k), 0.3 * std::sin(0.07 * i)};
    return f;
}

Image3D noise_image(const Geometry &g, std::uint64_t seed) {
    Image3D img(g);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto &v : img.voxels()) v = u(rng);
    return img;
}

} // namespace

static void BM_JacobianMap(benchmark::State &state) {
    const auto f = wavy_field(cube(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(jacobian_map(f));
}
BENCHMARK(BM_JacobianMap)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_ExponentiateField(benchmark::State &state) {
    const auto v = wavy_field(cube(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(exponentiate(v, 6));
}
BENCHMARK(BM_ExponentiateField)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_MutualInformation(benchmark::State &state) {
    const Geometry g = cube(state.range(0));
    const Image3D a = noise_image(g, 1), b = noise_image(g, 2);
    const auto est = MutualInformationEstimator::from_images(a, b, 32);
    const bool grad = state.range(1) != 0;
    for (auto _ : state) benchmark::DoNotOptimize(est.evaluate(a, b, grad));
}
BENCHMARK(BM_MutualInformation)->Args({64, 0})->Args({64, 1})->Unit(benchmark::kMillisecond);

static void BM_ExtractAll(benchmark::State &state) {
    PhantomSpec spec;
    spec.shrink_factor = 0.8;
    const PhantomCase pc = make_sphere_phantom(spec);
    const JacobianMap jm = jacobian_map(pc.true_field);
    for (auto _ : state) benchmark::DoNotOptimize(extract_all(jm, pc.baseline_mask, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_ExtractAll)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_Glcm(benchmark::State &state) {
    PhantomSpec spec;
    const PhantomCase pc = make_sphere_phantom(spec);
    const QuantizedROI q = quantize(pc.baseline_img, pc.baseline_mask, 32);
    for (auto _ : state)
        for (const auto &o : unique_offsets()) benchmark::DoNotOptimize(glcm(q, o));
}
BENCHMARK(BM_Glcm)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
