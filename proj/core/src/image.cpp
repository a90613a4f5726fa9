// image.cpp - image-core operations.

#include "blendreg/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace blendreg {

namespace {

bool close_rel(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

std::int64_t clamp_index(std::int64_t i, std::int64_t n) {
    return std::clamp<std::int64_t>(i, 0, n - 1);
}

std::vector<double> gaussian_kernel(double sigma) {
    if (sigma <= 0.0) {
        return {1.0};
    }
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        const double w = std::exp(-0.5 * (t * t) / (sigma * sigma));
        k[static_cast<std::size_t>(t + radius)] = w;
        sum += w;
    }
    for (auto &w : k) w /= sum;
    return k;
}

// One separable pass of a symmetric kernel along axis.
Image3D convolve_axis(const Image3D &img, const std::vector<double> &kernel, int axis) {
    if (kernel.size() == 1) {
        return img;
    }
    const auto &d = img.dims();
    const int radius = static_cast<int>(kernel.size() / 2);
    Image3D out(img.geometry());
    for (std::int64_t k = 0; k < d[2]; ++k) {
        for (std::int64_t j = 0; j < d[1]; ++j) {
            for (std::int64_t i = 0; i < d[0]; ++i) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t) {
                    std::int64_t ii = i, jj = j, kk = k;
                    if (axis == 0) ii = clamp_index(i + t, d[0]);
                    else if (axis == 1) jj = clamp_index(j + t, d[1]);
                    else kk = clamp_index(k + t, d[2]);
                    acc += kernel[static_cast<std::size_t>(t + radius)] * img.at(ii, jj, kk);
                }
                out.at(i, j, k) = acc;
            }
        }
    }
    return out;
}

} // namespace

void Geometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) {
            throw ConfigError("image dims must be >= 1");
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw ConfigError("image spacing must be positive and finite");
        }
        if (!std::isfinite(origin[a])) {
            throw ConfigError("image origin must be finite");
        }
    }
}

bool Geometry::matches(const Geometry &other) const {
    if (dims != other.dims) return false;
    for (int a = 0; a < 3; ++a) {
        if (!close_rel(spacing[a], other.spacing[a]) || !close_rel(origin[a], other.origin[a])) {
            return false;
        }
    }
    return true;
}

void BlendConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("blend alpha must lie in [0,1]");
    }
    if (!(ct_norm_lo < ct_norm_hi)) {
        throw ConfigError("CT normalization range requires lo < hi");
    }
    if (!(pet_norm_lo < pet_norm_hi)) {
        throw ConfigError("PET normalization range requires lo < hi");
    }
    if (!std::isfinite(ct_clip_max)) {
        throw ConfigError("CT clip value must be finite");
    }
}

double sample_linear(const Image3D &img, const Vec3 &c) {
    const auto &d = img.dims();
    double f[3];
    std::int64_t i0[3], i1[3];
    for (int a = 0; a < 3; ++a) {
        const double hi = static_cast<double>(d[a] - 1);
        double x = std::clamp(c[a], 0.0, hi);
        const double r = std::round(x);
        if (std::abs(x - r) < 1e-9) x = r;
        const double fl = std::floor(x);
        i0[a] = static_cast<std::int64_t>(fl);
        i1[a] = std::min<std::int64_t>(i0[a] + 1, d[a] - 1);
        f[a] = x - fl;
    }
    const double c000 = img.at(i0[0], i0[1], i0[2]);
    const double c100 = img.at(i1[0], i0[1], i0[2]);
    const double c010 = img.at(i0[0], i1[1], i0[2]);
    const double c110 = img.at(i1[0], i1[1], i0[2]);
    const double c001 = img.at(i0[0], i0[1], i1[2]);
    const double c101 = img.at(i1[0], i0[1], i1[2]);
    const double c011 = img.at(i0[0], i1[1], i1[2]);
    const double c111 = img.at(i1[0], i1[1], i1[2]);
    const double c00 = c000 + f[0] * (c100 - c000);
    const double c10 = c010 + f[0] * (c110 - c010);
    const double c01 = c001 + f[0] * (c101 - c001);
    const double c11 = c011 + f[0] * (c111 - c011);
    const double c0 = c00 + f[1] * (c10 - c00);
    const double c1 = c01 + f[1] * (c11 - c01);
    return c0 + f[2] * (c1 - c0);
}

double sample_nearest(const Image3D &img, const Vec3 &c) {
    const auto &d = img.dims();
    std::int64_t idx[3];
    for (int a = 0; a < 3; ++a) {
        idx[a] = clamp_index(static_cast<std::int64_t>(std::floor(c[a] + 0.5)), d[a]);
    }
    return img.at(idx[0], idx[1], idx[2]);
}

Image3D clip_intensity(const Image3D &img, double max_val) {
    if (!std::isfinite(max_val)) {
        throw ConfigError("clip value must be finite");
    }
    Image3D out = img;
    for (auto &v : out.voxels()) v = std::min(v, max_val);
    return out;
}

Image3D normalize(const Image3D &img, double lo, double hi) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw ConfigError("normalize requires finite lo < hi");
    }
    Image3D out = img;
    const double width = hi - lo;
    for (auto &v : out.voxels()) v = std::clamp((v - lo) / width, 0.0, 1.0);
    return out;
}

Image3D resample(const Image3D &img, const Geometry &target, Interpolation interp) {
    target.validate();
    Image3D out(target);
    const auto &src = img.geometry();
    const auto &d = target.dims;
    for (std::int64_t k = 0; k < d[2]; ++k) {
        for (std::int64_t j = 0; j < d[1]; ++j) {
            for (std::int64_t i = 0; i < d[0]; ++i) {
                const Vec3 p = target.to_physical(static_cast<double>(i), static_cast<double>(j),
                                                  static_cast<double>(k));
                const Vec3 c = src.to_continuous_index(p);
                out.at(i, j, k) = interp == Interpolation::linear ? sample_linear(img, c)
                                                                  : sample_nearest(img, c);
            }
        }
    }
    return out;
}

Image3D blend(const Image3D &nct, const Image3D &npet, double alpha) {
    if (!nct.geometry().matches(npet.geometry())) {
        throw ShapeError("blend: CT and PET geometries differ");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("blend alpha must lie in [0,1]");
    }
    Image3D out(nct.geometry());
    const double beta = 1.0 - alpha;
    for (std::size_t n = 0; n < out.size(); ++n) {
        out[n] = alpha * nct[n] + beta * npet[n];
    }
    return out;
}

Image3D blend_channels(const Image3D &ct, const Image3D &pet, const BlendConfig &cfg) {
    cfg.validate();
    const Image3D nct = normalize(clip_intensity(ct, cfg.ct_clip_max), cfg.ct_norm_lo, cfg.ct_norm_hi);
    const Image3D npet = normalize(
        pet.geometry().matches(ct.geometry()) ? pet : resample(pet, ct.geometry(), Interpolation::linear),
        cfg.pet_norm_lo, cfg.pet_norm_hi);
    return blend(nct, npet, cfg.alpha);
}

Image3D gaussian_smooth(const Image3D &img, const Vec3 &sigma_vox) {
    Image3D out = img;
    for (int a = 0; a < 3; ++a) {
        if (img.dims()[a] > 1) {
            out = convolve_axis(out, gaussian_kernel(sigma_vox[a]), a);
        }
    }
    return out;
}

Geometry downsampled_geometry(const Geometry &g, int factor) {
    if (factor < 1) {
        throw ConfigError("downsample factor must be >= 1");
    }
    Geometry out = g;
    for (int a = 0; a < 3; ++a) {
        out.dims[a] = (g.dims[a] + factor - 1) / factor;
        out.spacing[a] = g.spacing[a] * factor;
    }
    return out;
}

Image3D downsample(const Image3D &img, int factor) {
    const Geometry target = downsampled_geometry(img.geometry(), factor);
    const double sigma = 0.5 * factor;
    const Image3D smooth = gaussian_smooth(img, {sigma, sigma, sigma});
    if (factor == 1) {
        return smooth;
    }
    Image3D out(target);
    const auto &d = target.dims;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i)
                out.at(i, j, k) = smooth.at(i * factor, j * factor, k * factor);
    return out;
}

Image3D mask_to_image(const Mask3D &mask) {
    Image3D out(mask.geometry());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = mask[n] ? 1.0 : 0.0;
    return out;
}

Mask3D threshold(const Image3D &img, double level) {
    Mask3D out(img.geometry());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = img[n] >= level ? 1 : 0;
    return out;
}

std::size_t count_foreground(const Mask3D &mask) {
    return static_cast<std::size_t>(
        std::count_if(mask.voxels().begin(), mask.voxels().end(), [](auto v) { return v != 0; }));
}

std::array<Image3D, 3> gradient(const Image3D &img) {
    const auto &g = img.geometry();
    const auto &d = g.dims;
    std::array<Image3D, 3> out{Image3D(g), Image3D(g), Image3D(g)};
    for (std::int64_t k = 0; k < d[2]; ++k) {
        for (std::int64_t j = 0; j < d[1]; ++j) {
            for (std::int64_t i = 0; i < d[0]; ++i) {
                const std::int64_t idx[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    if (d[a] == 1) {
                        out[static_cast<std::size_t>(a)].at(i, j, k) = 0.0;
                        continue;
                    }
                    std::int64_t lo[3] = {i, j, k}, hi[3] = {i, j, k};
                    lo[a] = std::max<std::int64_t>(idx[a] - 1, 0);
                    hi[a] = std::min<std::int64_t>(idx[a] + 1, d[a] - 1);
                    const double h = static_cast<double>(hi[a] - lo[a]) * g.spacing[a];
                    out[static_cast<std::size_t>(a)].at(i, j, k) =
                        (img.at(hi[0], hi[1], hi[2]) - img.at(lo[0], lo[1], lo[2])) / h;
                }
            }
        }
    }
    return out;
}

} // namespace blendreg
