// mutual_information.cpp - Parzen-window MI and its analytic intensity derivative.

#include "blendreg/mutual_information.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blendreg/bspline.hpp"

namespace blendreg {

namespace {

constexpr int kPad = 2;

struct Kernel {
    int first = 0;
    int count = 1;
    double w[4] = {1.0, 0.0, 0.0, 0.0};
    double dw[4] = {0.0, 0.0, 0.0, 0.0}; // d w / d t
};

Kernel parzen(double t, ParzenWindow window, int bins) {
    Kernel k;
    if (window == ParzenWindow::none) {
        k.first = std::clamp(static_cast<int>(std::floor(t)), 0, bins - 1);
        return k;
    }
    k.count = 4;
    k.first = static_cast<int>(std::floor(t)) - 1;
    for (int a = 0; a < 4; ++a) {
        const double arg = static_cast<double>(k.first + a) - t;
        k.w[a] = cubic_bspline(arg);
        k.dw[a] = -cubic_bspline_derivative(arg);
    }
    return k;
}

std::pair<double, double> value_range(const Image3D &img) {
    const auto [lo, hi] = std::minmax_element(img.voxels().begin(), img.voxels().end());
    return {*lo, *hi};
}

} // namespace

MutualInformationEstimator::MutualInformationEstimator(double fixed_min, double fixed_max,
                                                       double moving_min, double moving_max,
                                                       int bins, ParzenWindow window)
    : bins_(bins), window_(window) {
    if (window == ParzenWindow::cubic_bspline && bins < 8) {
        throw ConfigError("Parzen-window MI needs at least 8 bins");
    }
    if (bins < 2) {
        throw ConfigError("MI needs at least 2 bins");
    }
    const double usable = window == ParzenWindow::cubic_bspline ? static_cast<double>(bins - 2 * kPad - 1)
                                                                : static_cast<double>(bins);
    auto make_axis = [usable](double lo, double hi) {
        Axis ax;
        ax.min = lo;
        ax.degenerate = !(hi > lo);
        ax.width = ax.degenerate ? 1.0 : (hi - lo) / usable;
        return ax;
    };
    fixed_ = make_axis(fixed_min, fixed_max);
    moving_ = make_axis(moving_min, moving_max);
}

MutualInformationEstimator MutualInformationEstimator::from_images(const Image3D &fixed,
                                                                   const Image3D &moving, int bins,
                                                                   ParzenWindow window) {
    const auto [fl, fh] = value_range(fixed);
    const auto [ml, mh] = value_range(moving);
    return {fl, fh, ml, mh, bins, window};
}

double MutualInformationEstimator::bin_coordinate(const Axis &ax, double v) const {
    if (ax.degenerate) {
        return window_ == ParzenWindow::cubic_bspline ? kPad : 0.0;
    }
    if (window_ == ParzenWindow::none) {
        return std::clamp((v - ax.min) / ax.width, 0.0, static_cast<double>(bins_) - 1e-9);
    }
    return kPad + std::clamp((v - ax.min) / ax.width, 0.0, static_cast<double>(bins_ - 2 * kPad - 1));
}

MutualInformationEstimator::Evaluation MutualInformationEstimator::evaluate(
    const Image3D &fixed, const Image3D &moving, bool want_d_moving, bool want_d_fixed,
    const Mask3D *roi) const {
    if (!fixed.geometry().matches(moving.geometry())) {
        throw ShapeError("mutual information: images must share a geometry");
    }
    if (roi && !roi->geometry().matches(fixed.geometry())) {
        throw ShapeError("mutual information: roi geometry differs from images");
    }
    if (window_ == ParzenWindow::none && (want_d_moving || want_d_fixed)) {
        throw ConfigError("MI derivatives require a Parzen window");
    }
    Evaluation ev;
    const std::size_t n_vox = fixed.size();
    if (want_d_moving) ev.d_moving.assign(n_vox, 0.0);
    if (want_d_fixed) ev.d_fixed.assign(n_vox, 0.0);

    const auto B = static_cast<std::size_t>(bins_);
    std::vector<double> joint(B * B, 0.0);
    std::size_t count = 0;
    for (std::size_t n = 0; n < n_vox; ++n) {
        if (roi && !(*roi)[n]) continue;
        if (!std::isfinite(fixed[n]) || !std::isfinite(moving[n])) {
            ev.value = std::numeric_limits<double>::quiet_NaN();
            return ev;
        }
        ++count;
        const Kernel kf = parzen(bin_coordinate(fixed_, fixed[n]), window_, bins_);
        const Kernel km = parzen(bin_coordinate(moving_, moving[n]), window_, bins_);
        for (int a = 0; a < kf.count; ++a) {
            double *row = &joint[static_cast<std::size_t>(kf.first + a) * B];
            for (int b = 0; b < km.count; ++b) {
                row[km.first + b] += kf.w[a] * km.w[b];
            }
        }
    }
    if (count == 0) {
        throw InputError("mutual information: empty region");
    }
    if (fixed_.degenerate || moving_.degenerate) {
        return ev;
    }
    const double inv_n = 1.0 / static_cast<double>(count);
    for (auto &p : joint) p *= inv_n;
    std::vector<double> pf(B, 0.0), pm(B, 0.0);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) {
            pf[i] += joint[i * B + j];
            pm[j] += joint[i * B + j];
        }
    std::vector<double> log_ratio(B * B, 0.0);
    double mi = 0.0;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) {
            const double p = joint[i * B + j];
            if (p > 0.0) {
                const double l = std::log(p / (pf[i] * pm[j]));
                log_ratio[i * B + j] = l;
                mi += p * l;
            }
        }
    ev.value = mi;
    if (!want_d_moving && !want_d_fixed) {
        return ev;
    }
    const double scale_m = inv_n / moving_.width;
    const double scale_f = inv_n / fixed_.width;
    const double max_coord = static_cast<double>(bins_ - kPad - 1);
    for (std::size_t n = 0; n < n_vox; ++n) {
        if (roi && !(*roi)[n]) continue;
        const double tf = bin_coordinate(fixed_, fixed[n]);
        const double tm = bin_coordinate(moving_, moving[n]);
        const Kernel kf = parzen(tf, window_, bins_);
        const Kernel km = parzen(tm, window_, bins_);
        double gm = 0.0, gf = 0.0;
        for (int a = 0; a < 4; ++a) {
            const double *lr = &log_ratio[static_cast<std::size_t>(kf.first + a) * B];
            for (int b = 0; b < 4; ++b) {
                const double l = lr[km.first + b];
                gm += l * kf.w[a] * km.dw[b];
                gf += l * kf.dw[a] * km.w[b];
            }
        }
        // Saturated samples have zero derivative through the clamp.
        if (want_d_moving && tm > kPad && tm < max_coord) ev.d_moving[n] = gm * scale_m;
        if (want_d_fixed && tf > kPad && tf < max_coord) ev.d_fixed[n] = gf * scale_f;
    }
    return ev;
}

double mutual_information(const Image3D &fixed, const Image3D &warped_moving, int bins,
                          const Mask3D *roi, ParzenWindow window) {
    return MutualInformationEstimator::from_images(fixed, warped_moving, bins, window)
        .evaluate(fixed, warped_moving, false, false, roi)
        .value;
}

double marginal_entropy(const Image3D &img, int bins, ParzenWindow window) {
    const auto [lo, hi] = value_range(img);
    if (!(hi > lo)) {
        return 0.0;
    }
    const double usable = window == ParzenWindow::cubic_bspline ? static_cast<double>(bins - 2 * kPad - 1)
                                                                : static_cast<double>(bins);
    const double width = (hi - lo) / usable;
    std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
    for (double v : img.voxels()) {
        double t = std::clamp((v - lo) / width, 0.0, usable - (window == ParzenWindow::none ? 1e-9 : 0.0));
        if (window == ParzenWindow::cubic_bspline) t += kPad;
        const Kernel k = parzen(t, window, bins);
        for (int a = 0; a < k.count; ++a) hist[static_cast<std::size_t>(k.first + a)] += k.w[a];
    }
    double h = 0.0;
    const double inv_n = 1.0 / static_cast<double>(img.size());
    for (double c : hist) {
        const double p = c * inv_n;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

} // namespace blendreg
