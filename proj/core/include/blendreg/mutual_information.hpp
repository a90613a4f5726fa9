// mutual_information.hpp - histogram mutual information with cubic B-spline Parzen windows.
#pragma once

#include <optional>
#include <vector>

#include "blendreg/image.hpp"

namespace blendreg {

enum class ParzenWindow {
    cubic_bspline, ///< each sample spreads over 4 bins per axis
    none,          ///< hard binning (exact histogram)
};

/// MI in nats between two images on the same grid; intensity ranges taken from each image.
/// A constant image yields 0.
double mutual_information(const Image3D &fixed, const Image3D &warped_moving, int bins,
                          const Mask3D *roi = nullptr,
                          ParzenWindow window = ParzenWindow::cubic_bspline);

/// Marginal Shannon entropy in nats of one image's histogram.
double marginal_entropy(const Image3D &img, int bins, ParzenWindow window = ParzenWindow::none);

/// Value and intensity derivatives of MI for a fixed pair of intensity ranges.
///
/// Bin placement is frozen at construction so that MI is a smooth function of the
/// sample intensities; this is what the registration engines differentiate.
class MutualInformationEstimator {
public:
    struct Evaluation {
        double value = 0.0;
        std::vector<double> d_moving; ///< dMI / d(moving intensity) per voxel (0 outside roi)
        std::vector<double> d_fixed;  ///< dMI / d(fixed intensity), only when requested
    };

    MutualInformationEstimator(double fixed_min, double fixed_max, double moving_min,
                               double moving_max, int bins,
                               ParzenWindow window = ParzenWindow::cubic_bspline);

    /// Builds an estimator whose ranges are the min/max of the two images.
    static MutualInformationEstimator from_images(const Image3D &fixed, const Image3D &moving, int bins,
                                                  ParzenWindow window = ParzenWindow::cubic_bspline);

    Evaluation evaluate(const Image3D &fixed, const Image3D &moving, bool d_moving,
                        bool d_fixed = false, const Mask3D *roi = nullptr) const;

    int bins() const { return bins_; }

private:
    struct Axis {
        double min = 0.0;
        double width = 1.0;
        bool degenerate = false;
    };
    double bin_coordinate(const Axis &ax, double v) const;

    Axis fixed_;
    Axis moving_;
    int bins_;
    ParzenWindow window_;
};

} // namespace blendreg
