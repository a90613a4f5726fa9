// image.hpp - geometry-aware 3D scalar volumes and intensity conditioning.
//
// Voxels are stored x-fastest. Physical position of voxel (i,j,k) is
// origin + spacing * (i,j,k); there is no direction matrix.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "blendreg/error.hpp"

namespace blendreg {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr double operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
    constexpr double &operator[](int a) { return a == 0 ? x : (a == 1 ? y : z); }

    constexpr Vec3 &operator+=(const Vec3 &o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Vec3 &operator-=(const Vec3 &o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr Vec3 &operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    friend constexpr Vec3 operator+(Vec3 a, const Vec3 &b) { return a += b; }
    friend constexpr Vec3 operator-(Vec3 a, const Vec3 &b) { return a -= b; }
    friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend constexpr Vec3 operator-(const Vec3 &a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr bool operator==(const Vec3 &, const Vec3 &) = default;

    double dot(const Vec3 &o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

using Dims = std::array<std::int64_t, 3>;

/// Grid layout shared by images, masks and deformation fields.
struct Geometry {
    Dims dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    }
    std::size_t linear(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k));
    }
    Vec3 to_physical(double i, double j, double k) const {
        return {origin.x + spacing.x * i, origin.y + spacing.y * j, origin.z + spacing.z * k};
    }
    Vec3 to_continuous_index(const Vec3 &p) const {
        return {(p.x - origin.x) / spacing.x, (p.y - origin.y) / spacing.y,
                (p.z - origin.z) / spacing.z};
    }
    double voxel_volume() const { return spacing.x * spacing.y * spacing.z; }
    double min_spacing() const { return std::min({spacing.x, spacing.y, spacing.z}); }

    /// Throws ConfigError unless dims >= 1 and spacing > 0.
    void validate() const;

    /// Same dims, spacing and origin within a 1e-9 relative tolerance.
    bool matches(const Geometry &other) const;
    friend bool operator==(const Geometry &, const Geometry &) = default;
};

/// Dense scalar volume on a Geometry.
template <class T>
class Volume {
public:
    using value_type = T;

    Volume() = default;
    explicit Volume(const Geometry &geom, T fill = T{}) : geom_(geom) {
        geom_.validate();
        data_.assign(geom_.voxel_count(), fill);
    }
    Volume(const Geometry &geom, std::vector<T> data) : geom_(geom), data_(std::move(data)) {
        geom_.validate();
        if (data_.size() != geom_.voxel_count()) {
            throw ShapeError("voxel buffer size does not match geometry");
        }
    }

    const Geometry &geometry() const { return geom_; }
    const Dims &dims() const { return geom_.dims; }
    std::size_t size() const { return data_.size(); }

    T &operator[](std::size_t n) { return data_[n]; }
    const T &operator[](std::size_t n) const { return data_[n]; }
    T &at(std::int64_t i, std::int64_t j, std::int64_t k) { return data_[geom_.linear(i, j, k)]; }
    const T &at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[geom_.linear(i, j, k)];
    }

    std::span<T> voxels() { return data_; }
    std::span<const T> voxels() const { return data_; }

    friend bool operator==(const Volume &a, const Volume &b) {
        return a.geom_.dims == b.geom_.dims && a.geom_.spacing == b.geom_.spacing &&
               a.geom_.origin == b.geom_.origin && a.data_ == b.data_;
    }

private:
    Geometry geom_;
    std::vector<T> data_;
};

using Image3D = Volume<double>;
using Mask3D = Volume<std::uint8_t>;

enum class Interpolation { linear, nearest };

struct BlendConfig {
    double alpha = 0.2;
    double ct_clip_max = 750.0;
    double ct_norm_lo = -1000.0;
    double ct_norm_hi = 750.0;
    double pet_norm_lo = 0.0;
    double pet_norm_hi = 35.0;

    void validate() const;
};

/// Trilinear sample at a continuous voxel index with edge clamping.
double sample_linear(const Image3D &img, const Vec3 &cindex);
/// Nearest-neighbour sample at a continuous voxel index with edge clamping.
double sample_nearest(const Image3D &img, const Vec3 &cindex);

Image3D clip_intensity(const Image3D &img, double max_val);
Image3D normalize(const Image3D &img, double lo, double hi);
Image3D resample(const Image3D &img, const Geometry &target, Interpolation interp);
Image3D blend(const Image3D &nct, const Image3D &npet, double alpha);

/// Clip, normalize and blend a CT/PET pair already on the same grid.
Image3D blend_channels(const Image3D &ct, const Image3D &pet, const BlendConfig &cfg);

/// Separable Gaussian smoothing, sigma in voxels per axis, truncated at 3 sigma, edge clamped.
Image3D gaussian_smooth(const Image3D &img, const Vec3 &sigma_vox);

/// Smooth with sigma = 0.5 * factor voxels and keep every factor-th voxel.
Image3D downsample(const Image3D &img, int factor);
Geometry downsampled_geometry(const Geometry &g, int factor);

Image3D mask_to_image(const Mask3D &mask);
Mask3D threshold(const Image3D &img, double level);
std::size_t count_foreground(const Mask3D &mask);

/// Per-axis central-difference gradient in physical units (one-sided at borders).
std::array<Image3D, 3> gradient(const Image3D &img);

/// Sub-volume [lo, lo + dims) of img, keeping physical placement.
template <class T>
Volume<T> crop(const Volume<T> &img, const Dims &lo, const Dims &dims) {
    const auto &g = img.geometry();
    for (int a = 0; a < 3; ++a) {
        if (lo[a] < 0 || dims[a] < 1 || lo[a] + dims[a] > g.dims[a]) {
            throw ConfigError("crop region outside image");
        }
    }
    Geometry out_geom{dims, g.spacing,
                      g.to_physical(static_cast<double>(lo[0]), static_cast<double>(lo[1]),
                                    static_cast<double>(lo[2]))};
    Volume<T> out(out_geom);
    for (std::int64_t k = 0; k < dims[2]; ++k)
        for (std::int64_t j = 0; j < dims[1]; ++j)
            for (std::int64_t i = 0; i < dims[0]; ++i)
                out.at(i, j, k) = img.at(lo[0] + i, lo[1] + j, lo[2] + k);
    return out;
}

} // namespace blendreg
