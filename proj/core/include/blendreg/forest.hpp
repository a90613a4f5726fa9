// forest.hpp - bagged CART random forest for binary labels.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace blendreg {

struct ForestOptions {
    int n_trees = 200;
    int min_leaf = 2;  ///< smallest admissible child node
    int mtry = 0;      ///< 0 = ceil(sqrt(#features))
    std::uint64_t seed = 0;
};

class RandomForest {
public:
    static RandomForest train(const std::vector<std::vector<double>> &X, std::span<const int> y,
                              const ForestOptions &opts = {});

    /// Fraction of trees voting for class 1.
    double predict_proba(std::span<const double> row) const;
    int predict(std::span<const double> row) const { return predict_proba(row) > 0.5 ? 1 : 0; }

    /// Trained on a single class; every prediction is that class.
    bool constant() const { return constant_; }
    std::size_t tree_count() const { return trees_.size(); }

private:
    struct Node {
        int feature = -1; ///< -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double vote = 0.0; ///< leaf vote for class 1 (0, 0.5 or 1)
    };
    using Tree = std::vector<Node>;

    std::vector<Tree> trees_;
    bool constant_ = false;
    double constant_value_ = 0.0;
};

} // namespace blendreg
