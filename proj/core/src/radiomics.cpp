// radiomics.cpp - quantization, GLCM / GLRLM matrices and their summary features.

#include "blendreg/radiomics.hpp"

#include <algorithm>
#include <cmath>

#include "blendreg/stats.hpp"

namespace blendreg {

const std::array<Offset3, 13> &unique_offsets() {
    static const std::array<Offset3, 13> offsets = [] {
        std::array<Offset3, 13> o{{{0, 0, 1}, {0, 1, -1}, {0, 1, 0}, {0, 1, 1}, {1, -1, -1}, {1, -1, 0}, {1, -1, 1},
                                   {1, 0, -1}, {1, 0, 0}, {1, 0, 1}, {1, 1, -1}, {1, 1, 0}, {1, 1, 1}}};
        std::sort(o.begin(), o.end());
        return o;
    }();
    return offsets;
}

QuantizedROI quantize(const Image3D &img, const Mask3D &mask, int n_bins) {
    if (!img.geometry().matches(mask.geometry())) throw ShapeError("quantize: mask geometry differs from image");
    if (n_bins < 2) throw ConfigError("quantize needs at least 2 bins");
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (std::size_t n = 0; n < img.size(); ++n) {
        if (!mask[n]) continue;
        if (!any) lo = hi = img[n];
        lo = std::min(lo, img[n]);
        hi = std::max(hi, img[n]);
        any = true;
    }
    if (!any) throw InputError("quantize: empty mask");
    QuantizedROI q;
    q.dims = img.dims();
    q.n_bins = n_bins;
    q.labels.assign(img.size(), 0);
    q.degenerate = !(hi > lo);
    const double width = q.degenerate ? 1.0 : (hi - lo) / n_bins;
    q.edges.resize(static_cast<std::size_t>(n_bins) + 1);
    for (int b = 0; b <= n_bins; ++b) q.edges[static_cast<std::size_t>(b)] = lo + b * width;
    if (!q.degenerate) q.edges.back() = hi;
    for (std::size_t n = 0; n < img.size(); ++n) {
        if (!mask[n]) continue;
        if (q.degenerate) {
            q.labels[n] = 1;
            continue;
        }
        const int b = static_cast<int>(std::floor((img[n] - lo) / width)) + 1;
        q.labels[n] = std::clamp(b, 1, n_bins);
    }
    return q;
}

Matrix glcm_counts(const QuantizedROI &q, const Offset3 &off) {
    if (off[0] == 0 && off[1] == 0 && off[2] == 0) throw ConfigError("glcm offset must be nonzero");
    const auto nb = static_cast<std::size_t>(q.n_bins);
    Matrix m(nb, nb);
    const auto &d = q.dims;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i) {
                if (!q.inside(i, j, k) || !q.inside(i + off[0], j + off[1], k + off[2])) continue;
                const auto a = static_cast<std::size_t>(q.at(i, j, k) - 1);
                const auto b = static_cast<std::size_t>(q.at(i + off[0], j + off[1], k + off[2]) - 1);
                m(a, b) += 1.0;
                m(b, a) += 1.0;
            }
    return m;
}

Matrix glcm(const QuantizedROI &q, const Offset3 &offset) {
    Matrix m = glcm_counts(q, offset);
    double total = 0.0;
    for (double v : m.data) total += v;
    if (!(total > 0.0)) throw DegenerateError("glcm: no voxel pair inside the mask for this offset");
    for (double &v : m.data) v /= total;
    return m;
}

GlcmFeatures glcm_features(const Matrix &p) {
    if (p.rows != p.cols || p.rows == 0) throw ShapeError("glcm_features expects a square matrix");
    const std::size_t n = p.rows;
    std::vector<double> px(n, 0.0), py(n, 0.0), psum(2 * n + 1, 0.0), pdiff(n, 0.0);
    double energy = 0.0, entropy = 0.0, contrast = 0.0, idm = 0.0, auto_corr = 0.0;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            const double v = p(a, b);
            const double i = static_cast<double>(a + 1), j = static_cast<double>(b + 1);
            px[a] += v;
            py[b] += v;
            psum[a + b + 2] += v;
            pdiff[a > b ? a - b : b - a] += v;
            energy += v * v;
            if (v > 0.0) entropy -= v * std::log(v);
            contrast += (i - j) * (i - j) * v;
            idm += v / (1.0 + (i - j) * (i - j));
            auto_corr += i * j * v;
        }
    double mx = 0.0, my = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        mx += static_cast<double>(a + 1) * px[a];
        my += static_cast<double>(a + 1) * py[a];
    }
    double vx = 0.0, vy = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        vx += std::pow(static_cast<double>(a + 1) - mx, 2) * px[a];
        vy += std::pow(static_cast<double>(a + 1) - my, 2) * py[a];
    }
    double shade = 0.0, prominence = 0.0;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            const double t = static_cast<double>(a + b + 2) - mx - my;
            shade += t * t * t * p(a, b);
            prominence += t * t * t * t * p(a, b);
        }
    GlcmFeatures out;
    double correlation = 0.0;
    if (vx > 1e-15 && vy > 1e-15) {
        correlation = (auto_corr - mx * my) / std::sqrt(vx * vy);
    } else {
        out.correlation_undefined = true;
    }
    // marginal-sum statistics: mean and variance of the px values themselves
    double mt = 0.0;
    for (double v : px) mt += v;
    mt /= static_cast<double>(n);
    double vt = 0.0;
    for (double v : px) vt += (v - mt) * (v - mt);
    vt /= static_cast<double>(n);
    double haralick = 0.0;
    if (vt > 1e-15) {
        haralick = (auto_corr - mt * mt) / vt;
    } else {
        out.correlation_undefined = true;
    }
    double sum_avg = 0.0, sum_ent = 0.0;
    for (std::size_t k = 2; k < psum.size(); ++k) {
        sum_avg += static_cast<double>(k) * psum[k];
        if (psum[k] > 0.0) sum_ent -= psum[k] * std::log(psum[k]);
    }
    double sum_var = 0.0;
    for (std::size_t k = 2; k < psum.size(); ++k) sum_var += std::pow(static_cast<double>(k) - sum_avg, 2) * psum[k];
    double diff_mean = 0.0, diff_ent = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        diff_mean += static_cast<double>(k) * pdiff[k];
        if (pdiff[k] > 0.0) diff_ent -= pdiff[k] * std::log(pdiff[k]);
    }
    double diff_var = 0.0;
    for (std::size_t k = 0; k < n; ++k) diff_var += std::pow(static_cast<double>(k) - diff_mean, 2) * pdiff[k];

    out.values = {energy,  entropy,  correlation, haralick, contrast, idm,        sum_avg,
                  sum_var, sum_ent, diff_var,    diff_ent, shade,    prominence, auto_corr};
    return out;
}

Matrix glrlm(const QuantizedROI &q, const Offset3 &dir) {
    if (dir[0] == 0 && dir[1] == 0 && dir[2] == 0) throw ConfigError("glrlm direction must be nonzero");
    const auto &d = q.dims;
    const auto max_run = static_cast<std::size_t>(std::max({d[0], d[1], d[2]}));
    Matrix m(static_cast<std::size_t>(q.n_bins), max_run);
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i) {
                if (!q.inside(i, j, k)) continue;
                const int label = q.at(i, j, k);
                const std::int64_t pi = i - dir[0], pj = j - dir[1], pk = k - dir[2];
                if (q.inside(pi, pj, pk) && q.at(pi, pj, pk) == label) continue; // not a run start
                std::size_t len = 1;
                std::int64_t x = i + dir[0], y = j + dir[1], z = k + dir[2];
                while (q.inside(x, y, z) && q.at(x, y, z) == label) {
                    ++len;
                    x += dir[0];
                    y += dir[1];
                    z += dir[2];
                }
                m(static_cast<std::size_t>(label - 1), len - 1) += 1.0;
            }
    return m;
}

std::array<double, 11> glrlm_features(const Matrix &runs, std::size_t voxels) {
    std::array<double, 11> f{};
    double nr = 0.0;
    std::vector<double> by_level(runs.rows, 0.0), by_length(runs.cols, 0.0);
    for (std::size_t a = 0; a < runs.rows; ++a)
        for (std::size_t b = 0; b < runs.cols; ++b) {
            const double v = runs(a, b);
            if (v == 0.0) continue;
            const double i = static_cast<double>(a + 1), j = static_cast<double>(b + 1);
            const double i2 = i * i, j2 = j * j;
            nr += v;
            by_level[a] += v;
            by_length[b] += v;
            f[0] += v / j2;
            f[1] += v * j2;
            f[5] += v / i2;
            f[6] += v * i2;
            f[7] += v / (i2 * j2);
            f[8] += v * i2 / j2;
            f[9] += v * j2 / i2;
            f[10] += v * i2 * j2;
        }
    if (!(nr > 0.0)) return f;
    for (double v : by_level) f[2] += v * v;
    for (double v : by_length) f[3] += v * v;
    for (std::size_t t : {0, 1, 2, 3, 5, 6, 7, 8, 9, 10}) f[t] /= nr;
    f[4] = voxels ? nr / static_cast<double>(voxels) : 0.0;
    return f;
}

const std::vector<std::string> &FeatureVector::names() {
    static const std::vector<std::string> list = [] {
        std::vector<std::string> v{"firstorder_mean",     "firstorder_sd",     "firstorder_skewness",
                                   "firstorder_kurtosis", "firstorder_energy", "firstorder_entropy"};
        for (const char *stat : {"mean", "sd"})
            for (const char *f : kGlcmFeatureNames) v.push_back(std::string("glcm_") + f + "_" + stat);
        for (const char *stat : {"mean", "sd"})
            for (const char *f : kGlrlmFeatureNames) v.push_back(std::string("glrlm_") + f + "_" + stat);
        return v;
    }();
    return list;
}

double FeatureVector::get(const std::string &name) const {
    const auto &n = names();
    const auto it = std::find(n.begin(), n.end(), name);
    if (it == n.end()) throw InputError("unknown feature '" + name + "'");
    return values.at(static_cast<std::size_t>(it - n.begin()));
}

FeatureVector extract_all(const Image3D &jmap, const Mask3D &mask, int n_bins) {
    const QuantizedROI q = quantize(jmap, mask, n_bins);
    FeatureVector fv;
    fv.degenerate = q.degenerate;

    std::vector<double> vals;
    for (std::size_t n = 0; n < jmap.size(); ++n)
        if (mask[n]) vals.push_back(jmap[n]);
    const double m = mean(vals);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, energy = 0.0;
    for (double v : vals) {
        const double d = v - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        energy += v * v;
    }
    const auto cnt = static_cast<double>(vals.size());
    m2 /= cnt;
    m3 /= cnt;
    m4 /= cnt;
    const bool flat = !(m2 > 1e-300);
    std::vector<double> hist(static_cast<std::size_t>(n_bins), 0.0);
    for (int l : q.labels)
        if (l > 0) hist[static_cast<std::size_t>(l - 1)] += 1.0;
    double entropy = 0.0;
    for (double h : hist)
        if (h > 0.0) entropy -= h / cnt * std::log(h / cnt);
    fv.values = {m, std::sqrt(m2), flat ? 0.0 : m3 / std::pow(m2, 1.5), flat ? 0.0 : m4 / (m2 * m2), energy, entropy};

    std::vector<std::array<double, 14>> co;
    std::vector<std::array<double, 11>> rl;
    for (const auto &off : unique_offsets()) {
        const Matrix counts = glcm_counts(q, off);
        double total = 0.0;
        for (double v : counts.data) total += v;
        if (total > 0.0) {
            Matrix p = counts;
            for (double &v : p.data) v /= total;
            co.push_back(glcm_features(p).values);
        }
        rl.push_back(glrlm_features(glrlm(q, off), vals.size()));
    }
    auto aggregate = [&fv](const auto &rows, std::size_t width) {
        std::vector<double> means(width, 0.0), sds(width, 0.0);
        for (std::size_t f = 0; f < width; ++f) {
            if (rows.empty()) continue;
            std::vector<double> col;
            for (const auto &r : rows) col.push_back(r[f]);
            means[f] = mean(col);
            sds[f] = standard_deviation(col, 0);
        }
        fv.values.insert(fv.values.end(), means.begin(), means.end());
        fv.values.insert(fv.values.end(), sds.begin(), sds.end());
    };
    aggregate(co, 14);
    aggregate(rl, 11);
    return fv;
}

} // namespace blendreg
