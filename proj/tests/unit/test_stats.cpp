#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "blendreg/error.hpp"
#include "blendreg/stats.hpp"

using namespace blendreg;

namespace {

CaseTable synthetic_table(std::size_t n, std::size_t p, std::uint64_t seed, bool separable) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    CaseTable t;
    for (std::size_t f = 0; f < p; ++f) t.feature_names.push_back("f" + std::to_string(f));
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 1 : 0;
        std::vector<double> row(p);
        for (auto &v : row) v = n01(rng);
        if (separable) row[3] = (label ? 3.0 : -3.0) + 0.3 * n01(rng);
        t.rows.push_back(row);
        t.labels.push_back(label);
        t.case_ids.push_back("c" + std::to_string(i));
    }
    if (!separable) std::shuffle(t.labels.begin(), t.labels.end(), rng);
    return t;
}

} // namespace

TEST_CASE("descriptive statistics") {
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(mean(v) == 2.5);
    CHECK(standard_deviation(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(standard_deviation(v, 0) == doctest::Approx(std::sqrt(1.25)));
    CHECK(pearson(v, std::vector<double>{2, 4, 6, 8}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(pearson(v, std::vector<double>{1, 1, 1, 1}), DegenerateError);
    CHECK(midranks(std::vector<double>{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
}

TEST_CASE("wilcoxon rank-sum") {
    const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    CHECK(wilcoxon_rank_sum(a, b) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(wilcoxon_rank_sum(a, a) == doctest::Approx(1.0));
    CHECK(wilcoxon_rank_sum(std::vector<double>{2, 2}, std::vector<double>{2, 2, 2}) == 1.0);
    CHECK_THROWS_AS(wilcoxon_rank_sum(std::vector<double>{}, b), InputError);

    std::mt19937_64 rng(17);
    std::normal_distribution<double> n01;
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> x(6), y(6);
        for (auto &v : x) v = n01(rng);
        for (auto &v : y) v = n01(rng) + 0.8;
        const double e = wilcoxon_rank_sum(x, y, WilcoxonMethod::exact);
        const double n = wilcoxon_rank_sum(x, y, WilcoxonMethod::normal);
        worst = std::max(worst, std::abs(e - n));
    }
    CHECK(worst < 0.02);
}

TEST_CASE("auc") {
    CHECK(auc(std::vector<double>{1, 2, 3, 4}, std::vector<int>{0, 0, 1, 1}) == 1.0);
    CHECK(auc(std::vector<double>{5, 5, 5, 5}, std::vector<int>{0, 1, 0, 1}) == 0.5);
    CHECK(auc(std::vector<double>{1, 2, 3, 4}, std::vector<int>{0, 1, 0, 1}) == 0.75);
    CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), InputError);

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> level(0, 5);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> s(12), neg(12);
        std::vector<int> y(12);
        for (int i = 0; i < 12; ++i) {
            s[static_cast<std::size_t>(i)] = level(rng);
            neg[static_cast<std::size_t>(i)] = -s[static_cast<std::size_t>(i)];
            y[static_cast<std::size_t>(i)] = i < 5 ? 1 : 0;
        }
        std::vector<double> pos_s(s.begin(), s.begin() + 5), neg_s(s.begin() + 5, s.end());
        CHECK(auc(s, y) == doctest::Approx(mann_whitney_u(pos_s, neg_s) / 35.0).epsilon(1e-14));
        CHECK(auc(s, y) + auc(neg, y) == doctest::Approx(1.0));
    }
}

TEST_CASE("univariate analysis orientation and ordering") {
    CaseTable t;
    t.feature_names = {"down", "up", "noise"};
    t.labels = {0, 0, 0, 1, 1, 1};
    t.rows = {{6, 1, 0.3}, {5, 2, 0.1}, {4, 3, 0.2}, {3, 4, 0.25}, {2, 5, 0.05}, {1, 6, 0.4}};
    const auto r = univariate_analysis(t);
    REQUIRE(r.size() == 3);
    CHECK(r[0].feature == "down"); // ties broken by name
    CHECK(r[0].auc == 1.0);
    CHECK_FALSE(r[0].higher_in_positive);
    CHECK(r[1].feature == "up");
    CHECK(r[1].higher_in_positive);
    CHECK(r[1].p_value == doctest::Approx(0.1));
    CHECK(r[2].auc >= 0.5);
}

TEST_CASE("cluster_distinct") {
    CaseTable t;
    t.feature_names = {"a", "b", "c"};
    t.labels = {0, 1, 0, 1, 0, 1, 0, 1};
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 8; ++i) {
        const double x = n01(rng);
        t.rows.push_back({x, 2 * x + 1, n01(rng)});
    }
    // a and b perfectly correlated
    auto reps = cluster_distinct(t, 0.9);
    CHECK(reps.size() == 2);

    // orthogonal features are all kept
    CaseTable o;
    o.feature_names = {"x", "y", "z"};
    o.labels = {0, 1, 0, 1};
    o.rows = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    CHECK(cluster_distinct(o, 0.9) == std::vector<std::size_t>{0, 1, 2});

    // r(f1, f2) = 0.95 > 0.9 and f3 independent
    CaseTable h;
    h.feature_names = {"f1", "f2", "f3"};
    h.labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    std::vector<double> x(10), z(10), w(10);
    for (int i = 0; i < 10; ++i) {
        x[static_cast<std::size_t>(i)] = n01(rng);
        z[static_cast<std::size_t>(i)] = n01(rng);
        w[static_cast<std::size_t>(i)] = n01(rng);
    }
    // mix x with noise until r is 0.95
    double lo = 0, hi = 5;
    std::vector<double> y(10);
    for (int it = 0; it < 200; ++it) {
        const double s = 0.5 * (lo + hi);
        for (int i = 0; i < 10; ++i) y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + s * w[static_cast<std::size_t>(i)];
        (pearson(x, y) > 0.95 ? lo : hi) = s;
    }
    for (int i = 0; i < 10; ++i) h.rows.push_back({x[static_cast<std::size_t>(i)], y[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(i)]});
    CHECK(pearson(x, y) == doctest::Approx(0.95).epsilon(1e-6));
    if (std::abs(pearson(x, z)) < 0.9 && std::abs(pearson(y, z)) < 0.9) CHECK(cluster_distinct(h, 0.9).size() == 2);
}

TEST_CASE("lasso selection order") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    const std::size_t n = 60;
    std::vector<std::vector<double>> X(n, std::vector<double>(6));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto &v : X[i]) v = n01(rng);
        X[i][5] = 1.0; // constant column
        y[i] = X[i][2] > 0.0 ? 1 : 0;
    }
    const auto sel = lasso_select(X, y, 10);
    REQUIRE_FALSE(sel.empty());
    CHECK(sel.front() == 2);
    CHECK(std::find(sel.begin(), sel.end(), std::size_t{5}) == sel.end());
    CHECK(lasso_select(X, y, 10) == sel);

    // duplicated column: one copy enters first, deterministically
    for (auto &row : X) row.push_back(row[2]);
    const auto dup = lasso_select(X, y, 10);
    CHECK((dup.front() == 2 || dup.front() == 6));
    CHECK(lasso_select(X, y, 10) == dup);
    CHECK(lasso_select(X, y, 1).size() == 1);
}

TEST_CASE("cross_validate") {
    CVOptions o;
    o.seed = 4;
    o.n_trees = 50;
    o.repeats = 3;
    const auto sep = cross_validate(synthetic_table(40, 12, 1, true), o);
    CHECK(sep.mean.accuracy >= 0.95);
    CHECK(sep.per_repeat.size() == 3);
    CHECK(sep.accuracy_curve.size() == 10);
    CHECK(sep.selection_frequency.at("f3") == 30);
    for (double a : sep.accuracy_curve) {
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }

    const auto t = synthetic_table(40, 12, 2, false);
    const auto a = cross_validate(t, o), b = cross_validate(t, o);
    CHECK(a.mean.accuracy == b.mean.accuracy);
    CHECK(a.accuracy_curve == b.accuracy_curve);
    CHECK(a.selection_frequency == b.selection_frequency);
    CHECK(a.mean.accuracy > 0.2);
    CHECK(a.mean.accuracy < 0.8);

    CaseTable single = t;
    std::fill(single.labels.begin(), single.labels.end(), 1);
    CHECK_THROWS_AS(cross_validate(single, o), InputError);
    o.folds = 1;
    CHECK_THROWS_AS(cross_validate(t, o), ConfigError);
}
