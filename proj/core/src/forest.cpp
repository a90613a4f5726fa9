// forest.cpp - CART trees with Gini splits, bootstrap bagging and random feature subsets.

#include "blendreg/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "blendreg/error.hpp"

namespace blendreg {

namespace {

struct Builder {
    const std::vector<std::vector<double>> &X;
    std::span<const int> y;
    int min_leaf;
    int mtry;
    std::mt19937_64 &rng;
    std::vector<std::size_t> feature_pool;

    template <class Node>
    int grow(std::vector<Node> &tree, std::vector<std::size_t> &idx, std::size_t lo, std::size_t hi) {
        const std::size_t n = hi - lo;
        std::size_t pos = 0;
        for (std::size_t a = lo; a < hi; ++a) pos += static_cast<std::size_t>(y[idx[a]]);
        const int id = static_cast<int>(tree.size());
        tree.push_back(Node{});
        auto make_leaf = [&] {
            tree[static_cast<std::size_t>(id)].vote = 2 * pos > n ? 1.0 : (2 * pos == n ? 0.5 : 0.0);
            return id;
        };
        if (pos == 0 || pos == n || n < 2 * static_cast<std::size_t>(min_leaf)) return make_leaf();

        // partial Fisher-Yates for mtry candidate features
        const std::size_t p = feature_pool.size();
        const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(mtry), p);
        for (std::size_t a = 0; a < m; ++a) {
            std::uniform_int_distribution<std::size_t> pick(a, p - 1);
            std::swap(feature_pool[a], feature_pool[pick(rng)]);
        }
        const double parent = 1.0 - std::pow(static_cast<double>(pos) / n, 2) -
                              std::pow(static_cast<double>(n - pos) / n, 2);
        double best_gain = 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, int>> vals(n);
        for (std::size_t c = 0; c < m; ++c) {
            const std::size_t f = feature_pool[c];
            for (std::size_t a = 0; a < n; ++a) vals[a] = {X[idx[lo + a]][f], y[idx[lo + a]]};
            std::sort(vals.begin(), vals.end());
            std::size_t left_pos = 0;
            for (std::size_t a = 0; a + 1 < n; ++a) {
                left_pos += static_cast<std::size_t>(vals[a].second);
                if (vals[a].first == vals[a + 1].first) continue;
                const std::size_t nl = a + 1, nr = n - nl;
                if (nl < static_cast<std::size_t>(min_leaf) || nr < static_cast<std::size_t>(min_leaf)) continue;
                const double pl = static_cast<double>(left_pos) / nl;
                const double pr = static_cast<double>(pos - left_pos) / nr;
                const double gini = (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / n;
                const double gain = parent - gini;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (vals[a].first + vals[a + 1].first);
                }
            }
        }
        if (best_feature < 0) return make_leaf();
        const auto mid_it = std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                                  idx.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t r) {
                                                      return X[r][static_cast<std::size_t>(best_feature)] <= best_threshold;
                                                  });
        const auto mid = static_cast<std::size_t>(mid_it - idx.begin());
        const int left = grow(tree, idx, lo, mid);
        const int right = grow(tree, idx, mid, hi);
        auto &node = tree[static_cast<std::size_t>(id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = left;
        node.right = right;
        return id;
    }
};

} // namespace

RandomForest RandomForest::train(const std::vector<std::vector<double>> &X, std::span<const int> y,
                                 const ForestOptions &opts) {
    if (opts.n_trees < 1) throw ConfigError("random forest needs at least one tree");
    if (opts.min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
    if (X.empty() || X.size() != y.size()) throw InputError("random forest: X and y sizes differ or are empty");
    const std::size_t p = X.front().size();
    for (const auto &row : X) {
        if (row.size() != p) throw InputError("random forest: ragged feature matrix");
    }
    RandomForest rf;
    const std::size_t pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (pos == 0 || pos == y.size() || p == 0) {
        rf.constant_ = true;
        rf.constant_value_ = 2 * pos >= y.size() ? 1.0 : 0.0;
        return rf;
    }
    std::mt19937_64 rng(opts.seed);
    Builder b{X, y, opts.min_leaf,
              opts.mtry > 0 ? opts.mtry : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p)))), rng, {}};
    b.feature_pool.resize(p);
    std::iota(b.feature_pool.begin(), b.feature_pool.end(), std::size_t{0});
    const std::size_t n = X.size();
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    for (int t = 0; t < opts.n_trees; ++t) {
        std::vector<std::size_t> idx(n);
        for (auto &i : idx) i = draw(rng);
        std::sort(idx.begin(), idx.end());
        Tree tree;
        b.grow(tree, idx, 0, n);
        rf.trees_.push_back(std::move(tree));
    }
    return rf;
}

double RandomForest::predict_proba(std::span<const double> row) const {
    if (constant_) return constant_value_;
    double votes = 0.0;
    for (const auto &tree : trees_) {
        int node = 0;
        while (tree[static_cast<std::size_t>(node)].feature >= 0) {
            const auto &nd = tree[static_cast<std::size_t>(node)];
            node = row[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        votes += tree[static_cast<std::size_t>(node)].vote;
    }
    return votes / static_cast<double>(trees_.size());
}

} // namespace blendreg
