// radiomics.hpp - first-order, co-occurrence and run-length features of a Jacobian map.
//
// Feature vector layout (56 entries):
//   6  first-order  (mean, sd, skewness, kurtosis, energy, entropy)
//   14 GLCM means, then the 14 matching SDs over 13 offsets
//   11 GLRLM means, then the 11 matching SDs over 13 directions
#pragma once

#include <array>
#include <string>
#include <vector>

#include "blendreg/image.hpp"

namespace blendreg {

using Offset3 = std::array<int, 3>;

/// The 13 unique unit-distance 3D offsets in lexicographic order.
const std::array<Offset3, 13> &unique_offsets();

struct QuantizedROI {
    Dims dims{1, 1, 1};
    std::vector<int> labels; ///< 0 outside the mask, 1..n_bins inside; x-fastest
    int n_bins = 32;
    std::vector<double> edges; ///< n_bins + 1 edges over the in-mask range
    bool degenerate = false;   ///< constant ROI: every label is 1

    int at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return labels[static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k))];
    }
    bool inside(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2] && at(i, j, k) > 0;
    }
};

/// Equal-width bins over [min, max] of the in-mask values; max maps to n_bins.
QuantizedROI quantize(const Image3D &img, const Mask3D &mask, int n_bins = 32);

/// Row-major square or rectangular matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    friend bool operator==(const Matrix &, const Matrix &) = default;
};

/// Symmetric pair counts (each pair counted both ways). Label L sits at row L - 1.
Matrix glcm_counts(const QuantizedROI &q, const Offset3 &offset);
/// glcm_counts normalized to sum 1; throws DegenerateError when no pair exists.
Matrix glcm(const QuantizedROI &q, const Offset3 &offset);

inline constexpr std::array<const char *, 14> kGlcmFeatureNames{
    "energy", "entropy", "correlation", "haralick_correlation", "contrast", "inverse_difference_moment",
    "sum_average", "sum_variance", "sum_entropy", "difference_variance", "difference_entropy",
    "cluster_shade", "cluster_prominence", "autocorrelation"};

struct GlcmFeatures {
    std::array<double, 14> values{};
    bool correlation_undefined = false; ///< zero-variance marginals; correlations set to 0
};

GlcmFeatures glcm_features(const Matrix &p);

/// Run counts: row = label - 1, column = run length - 1.
Matrix glrlm(const QuantizedROI &q, const Offset3 &direction);

inline constexpr std::array<const char *, 11> kGlrlmFeatureNames{
    "sre", "lre", "gln", "rln", "rp", "lgre", "hgre", "srlge", "srhge", "lrlge", "lrhge"};

/// `voxels` = number of ROI voxels (for run percentage).
std::array<double, 11> glrlm_features(const Matrix &runs, std::size_t voxels);

struct FeatureVector {
    std::vector<double> values;
    bool degenerate = false;

    static const std::vector<std::string> &names();
    double get(const std::string &name) const;
};

FeatureVector extract_all(const Image3D &jmap, const Mask3D &mask, int n_bins = 32);

} // namespace blendreg
