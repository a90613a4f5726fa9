// stats.cpp - ranks, rank-sum tests, clustering, L1 logistic path and cross-validation.

#include "blendreg/stats.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "blendreg/error.hpp"
#include "blendreg/forest.hpp"

namespace blendreg {

double mean(std::span<const double> v) {
    if (v.empty()) throw InputError("mean of an empty series");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double standard_deviation(std::span<const double> v, int ddof) {
    if (static_cast<int>(v.size()) <= ddof) throw InputError("standard deviation needs more values than ddof");
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(static_cast<int>(v.size()) - ddof));
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw InputError("pearson needs two equal-length series of >= 2 values");
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) throw DegenerateError("correlation undefined: zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> midranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[order[t]] = rank;
        i = j + 1;
    }
    return r;
}

namespace {

std::vector<double> pooled(std::span<const double> a, std::span<const double> b) {
    std::vector<double> all(a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    return all;
}

double exact_p(const std::vector<double> &ranks, std::size_t na) {
    const std::size_t n = ranks.size();
    double observed = 0.0;
    for (std::size_t i = 0; i < na; ++i) observed += ranks[i];
    const double expected = static_cast<double>(na) * (static_cast<double>(n) + 1.0) / 2.0;
    const double dev = std::abs(observed - expected);
    std::size_t extreme = 0, total = 0;
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
        if (static_cast<std::size_t>(std::popcount(bits)) != na) continue;
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (bits >> i & 1u) w += ranks[i];
        ++total;
        if (std::abs(w - expected) >= dev - 1e-9) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

double normal_p(const std::vector<double> &ranks, std::span<const double> values, std::size_t na) {
    const auto n = static_cast<double>(ranks.size());
    const auto n1 = static_cast<double>(na);
    const double n2 = n - n1;
    double w = 0.0;
    for (std::size_t i = 0; i < na; ++i) w += ranks[i];
    const double u = w - n1 * (n1 + 1.0) / 2.0;
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double ties = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const auto t = static_cast<double>(j - i + 1);
        ties += t * t * t - t;
        i = j + 1;
    }
    const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if (!(var > 0.0)) return 1.0;
    const double z = std::max(0.0, std::abs(u - n1 * n2 / 2.0) - 0.5) / std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

} // namespace

double mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw InputError("rank-sum test needs two nonempty samples");
    const auto r = midranks(pooled(a, b));
    double w = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) w += r[i];
    const auto na = static_cast<double>(a.size());
    return w - na * (na + 1.0) / 2.0;
}

double wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, WilcoxonMethod method) {
    if (a.empty() || b.empty()) throw InputError("rank-sum test needs two nonempty samples");
    const auto all = pooled(a, b);
    const auto r = midranks(all);
    const bool small = all.size() <= 12;
    if (method == WilcoxonMethod::exact || (method == WilcoxonMethod::automatic && small)) {
        if (all.size() > 24) throw ConfigError("exact rank-sum enumeration is limited to 24 values");
        return exact_p(r, a.size());
    }
    return normal_p(r, all, a.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw InputError("auc: scores and labels differ in length");
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw InputError("auc: labels must be 0 or 1");
        (labels[i] == 1 ? pos : neg).push_back(scores[i]);
    }
    if (pos.empty() || neg.empty()) throw InputError("auc needs both classes");
    return mann_whitney_u(pos, neg) / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::vector<double> CaseTable::column(std::size_t f) const {
    std::vector<double> c(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) c[i] = rows[i][f];
    return c;
}

void CaseTable::validate() const {
    if (rows.size() != labels.size()) throw InputError("case table: label count differs from row count");
    if (!case_ids.empty() && case_ids.size() != rows.size()) throw InputError("case table: case id count differs");
    for (const auto &r : rows) {
        if (r.size() != feature_names.size()) throw InputError("case table: row width differs from feature count");
        for (double v : r)
            if (!std::isfinite(v)) throw InputError("case table: missing or non-finite value");
    }
    bool has0 = false, has1 = false;
    for (int l : labels) {
        if (l != 0 && l != 1) throw InputError("case table: labels must be 0 or 1");
        (l ? has1 : has0) = true;
    }
    if (!has0 || !has1) throw InputError("case table: both classes must be present");
}

std::vector<UnivariateResult> univariate_analysis(const CaseTable &table) {
    table.validate();
    std::vector<UnivariateResult> out;
    for (std::size_t f = 0; f < table.features(); ++f) {
        const auto col = table.column(f);
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < col.size(); ++i) (table.labels[i] ? pos : neg).push_back(col[i]);
        UnivariateResult r;
        r.feature = table.feature_names[f];
        const double raw = auc(col, table.labels);
        r.higher_in_positive = raw >= 0.5;
        r.auc = std::max(raw, 1.0 - raw);
        r.p_value = wilcoxon_rank_sum(pos, neg);
        out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto &x, const auto &y) {
        return x.auc != y.auc ? x.auc > y.auc : x.feature < y.feature;
    });
    return out;
}

std::vector<std::size_t> cluster_distinct(const CaseTable &table, double corr_threshold) {
    const std::size_t p = table.features();
    if (p < 2) throw InputError("cluster_distinct needs at least 2 features");
    std::vector<std::vector<double>> cols(p);
    for (std::size_t f = 0; f < p; ++f) cols[f] = table.column(f);
    std::vector<std::vector<double>> dist(p, std::vector<double>(p, 0.0));
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = a + 1; b < p; ++b) {
            double r = 0.0;
            try {
                r = pearson(cols[a], cols[b]);
            } catch (const DegenerateError &) {
                r = 0.0;
            }
            dist[a][b] = dist[b][a] = 1.0 - std::abs(r);
        }
    const double cut = 1.0 - corr_threshold + 1e-12;
    std::vector<std::vector<std::size_t>> clusters(p);
    for (std::size_t f = 0; f < p; ++f) clusters[f] = {f};
    while (clusters.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                double d = 0.0;
                for (auto a : clusters[i])
                    for (auto b : clusters[j]) d = std::max(d, dist[a][b]);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        if (best > cut) break;
        clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    std::vector<double> feature_auc(p, 0.5);
    for (std::size_t f = 0; f < p; ++f) {
        const double raw = auc(cols[f], table.labels);
        feature_auc[f] = std::max(raw, 1.0 - raw);
    }
    std::vector<std::size_t> reps;
    for (const auto &c : clusters) {
        std::size_t best = c.front();
        for (auto f : c) {
            if (feature_auc[f] > feature_auc[best] ||
                (feature_auc[f] == feature_auc[best] && table.feature_names[f] < table.feature_names[best])) {
                best = f;
            }
        }
        reps.push_back(best);
    }
    std::sort(reps.begin(), reps.end());
    return reps;
}

std::vector<std::size_t> lasso_select(const std::vector<std::vector<double>> &X, std::span<const int> y,
                                      std::size_t k, const LassoOptions &opts) {
    const std::size_t n = X.size();
    if (n == 0 || n != y.size()) throw InputError("lasso_select: X and y sizes differ or are empty");
    const std::size_t p = X.front().size();
    // standardize within the call
    std::vector<std::vector<double>> Z(p, std::vector<double>(n, 0.0));
    std::vector<bool> usable(p, false);
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += X[i][j];
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (X[i][j] - m) * (X[i][j] - m);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        if (!(sd > 1e-12)) continue;
        usable[j] = true;
        for (std::size_t i = 0; i < n; ++i) Z[j][i] = (X[i][j] - m) / sd;
    }
    double ybar = 0.0;
    for (int v : y) ybar += v;
    ybar /= static_cast<double>(n);
    if (ybar <= 0.0 || ybar >= 1.0) throw InputError("lasso_select needs both classes");

    double lambda_max = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        if (!usable[j]) continue;
        double g = 0.0;
        for (std::size_t i = 0; i < n; ++i) g += Z[j][i] * (y[i] - ybar);
        lambda_max = std::max(lambda_max, std::abs(g) / static_cast<double>(n));
    }
    std::vector<std::size_t> order;
    if (!(lambda_max > 0.0)) return order;

    std::vector<double> beta(p, 0.0);
    double b0 = std::log(ybar / (1.0 - ybar));
    std::vector<int> entry(p, -1);
    std::vector<double> entry_size(p, 0.0);
    std::vector<double> eta(n), w(n), zres(n);
    for (int step = 0; step < opts.path_length; ++step) {
        const double frac = opts.path_length > 1 ? static_cast<double>(step) / (opts.path_length - 1) : 0.0;
        const double lambda = lambda_max * std::pow(opts.lambda_min_ratio, frac);
        bool converged = false;
        for (int outer = 0; outer < opts.max_outer && !converged; ++outer) {
            // quadratic approximation of the log-likelihood around the current fit
            for (std::size_t i = 0; i < n; ++i) {
                double e = b0;
                for (std::size_t j = 0; j < p; ++j)
                    if (beta[j] != 0.0) e += beta[j] * Z[j][i];
                const double pr = std::clamp(1.0 / (1.0 + std::exp(-e)), 1e-5, 1.0 - 1e-5);
                w[i] = pr * (1.0 - pr);
                zres[i] = (y[i] - pr) / w[i]; // working residual
                eta[i] = e;
            }
            double max_change = 0.0;
            for (int inner = 0; inner < opts.max_inner; ++inner) {
                double delta = 0.0;
                double sw = 0.0, swr = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    sw += w[i];
                    swr += w[i] * zres[i];
                }
                const double d0 = swr / sw;
                b0 += d0;
                for (std::size_t i = 0; i < n; ++i) zres[i] -= d0;
                delta = std::max(delta, std::abs(d0));
                for (std::size_t j = 0; j < p; ++j) {
                    if (!usable[j]) continue;
                    double num = 0.0, den = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        num += w[i] * Z[j][i] * (zres[i] + beta[j] * Z[j][i]);
                        den += w[i] * Z[j][i] * Z[j][i];
                    }
                    num /= static_cast<double>(n);
                    den /= static_cast<double>(n);
                    const double soft = std::copysign(std::max(std::abs(num) - lambda, 0.0), num);
                    const double nb = soft / den;
                    const double d = nb - beta[j];
                    if (d != 0.0) {
                        for (std::size_t i = 0; i < n; ++i) zres[i] -= d * Z[j][i];
                        beta[j] = nb;
                        delta = std::max(delta, std::abs(d));
                    }
                }
                max_change = std::max(max_change, delta);
                if (delta < opts.tolerance) break;
            }
            // outer convergence: linear predictor stable
            double eta_change = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double e = b0;
                for (std::size_t j = 0; j < p; ++j)
                    if (beta[j] != 0.0) e += beta[j] * Z[j][i];
                eta_change = std::max(eta_change, std::abs(e - eta[i]));
            }
            converged = eta_change < 1e-6;
        }
        if (!converged) {
            throw DegenerateError("lasso_select: coordinate descent did not converge at lambda index " +
                                  std::to_string(step) + " (lambda = " + std::to_string(lambda) + ")");
        }
        for (std::size_t j = 0; j < p; ++j) {
            if (entry[j] < 0 && beta[j] != 0.0) {
                entry[j] = step;
                entry_size[j] = std::abs(beta[j]);
            }
        }
    }
    for (std::size_t j = 0; j < p; ++j)
        if (entry[j] >= 0) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (entry[a] != entry[b]) return entry[a] < entry[b];
        if (entry_size[a] != entry_size[b]) return entry_size[a] > entry_size[b];
        return a < b;
    });
    if (order.size() > k) order.resize(k);
    return order;
}

namespace {

CVMetrics score_predictions(std::span<const double> prob, std::span<const int> truth) {
    CVMetrics m;
    std::size_t tp = 0, tn = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const int pred = prob[i] > 0.5 ? 1 : 0;
        if (truth[i] == 1) {
            ++pos;
            tp += pred == 1;
        } else {
            ++neg;
            tn += pred == 0;
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.sensitivity = pos ? static_cast<double>(tp) / pos : nan;
    m.specificity = neg ? static_cast<double>(tn) / neg : nan;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(prob.size());
    m.auc = pos && neg ? auc(prob, truth) : nan;
    return m;
}

std::uint64_t stream_seed(std::uint64_t seed, int repeat, int fold) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(repeat), static_cast<std::uint32_t>(fold)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

CVMetrics summarize(const std::vector<CVMetrics> &v, bool sd) {
    CVMetrics out;
    auto agg = [&](auto field) {
        std::vector<double> vals;
        for (const auto &m : v)
            if (std::isfinite(m.*field)) vals.push_back(m.*field);
        if (vals.empty()) return std::numeric_limits<double>::quiet_NaN();
        if (!sd) return mean(vals);
        return vals.size() > 1 ? standard_deviation(vals) : 0.0;
    };
    out.sensitivity = agg(&CVMetrics::sensitivity);
    out.specificity = agg(&CVMetrics::specificity);
    out.accuracy = agg(&CVMetrics::accuracy);
    out.auc = agg(&CVMetrics::auc);
    return out;
}

} // namespace

CVReport cross_validate(const CaseTable &table, const CVOptions &opts) {
    table.validate();
    if (opts.folds < 2 || opts.repeats < 1 || opts.max_features < 1 || opts.n_trees < 1) {
        throw ConfigError("cross_validate: folds >= 2, repeats >= 1, max_features >= 1 and n_trees >= 1 required");
    }
    const std::size_t n = table.cases();
    const auto K = static_cast<std::size_t>(opts.max_features);
    CVReport rep;
    for (const auto &name : table.feature_names) rep.selection_frequency[name] = 0;
    std::vector<double> curve_sum(K, 0.0);

    for (int r = 0; r < opts.repeats; ++r) {
        // stratified assignment: shuffle each class, deal round-robin
        std::mt19937_64 split_rng(stream_seed(opts.seed, r, -1));
        std::vector<int> fold_of(n, 0);
        std::size_t dealt = 0;
        for (int cls = 0; cls < 2; ++cls) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i)
                if (table.labels[i] == cls) members.push_back(i);
            std::shuffle(members.begin(), members.end(), split_rng);
            for (auto i : members) fold_of[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(opts.folds));
        }
        std::vector<std::vector<double>> prob(K, std::vector<double>(n, 0.0));
        for (int f = 0; f < opts.folds; ++f) {
            std::vector<std::size_t> train, test;
            for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
            if (test.empty()) continue;
            bool t0 = false, t1 = false;
            for (auto i : test) (table.labels[i] ? t1 : t0) = true;
            if (!(t0 && t1)) ++rep.single_class_folds;

            // standardization from the training fold only
            const std::size_t p = table.features();
            std::vector<double> mu(p, 0.0), sd(p, 1.0);
            for (std::size_t j = 0; j < p; ++j) {
                std::vector<double> v;
                for (auto i : train) v.push_back(table.rows[i][j]);
                mu[j] = mean(v);
                const double s = v.size() > 1 ? standard_deviation(v, 0) : 0.0;
                sd[j] = s > 1e-12 ? s : 1.0;
            }
            auto standardized = [&](std::size_t i) {
                std::vector<double> row(p);
                for (std::size_t j = 0; j < p; ++j) row[j] = (table.rows[i][j] - mu[j]) / sd[j];
                return row;
            };
            CaseTable tr;
            tr.feature_names = table.feature_names;
            for (auto i : train) {
                tr.rows.push_back(standardized(i));
                tr.labels.push_back(table.labels[i]);
            }
            std::vector<std::size_t> selected;
            bool train_two_class = std::count(tr.labels.begin(), tr.labels.end(), 1) > 0 &&
                                   std::count(tr.labels.begin(), tr.labels.end(), 0) > 0;
            if (train_two_class) {
                const auto distinct = p >= 2 ? cluster_distinct(tr, opts.corr_threshold) : std::vector<std::size_t>{0};
                std::vector<std::vector<double>> sub(tr.rows.size());
                for (std::size_t i = 0; i < tr.rows.size(); ++i)
                    for (auto j : distinct) sub[i].push_back(tr.rows[i][j]);
                for (auto local : lasso_select(sub, tr.labels, K)) selected.push_back(distinct[local]);
            }
            for (auto j : selected) ++rep.selection_frequency[table.feature_names[j]];

            for (std::size_t c = 1; c <= K; ++c) {
                const std::size_t use = std::min(c, selected.size());
                std::vector<std::vector<double>> Xtr;
                for (const auto &row : tr.rows) {
                    std::vector<double> x;
                    for (std::size_t a = 0; a < use; ++a) x.push_back(row[selected[a]]);
                    Xtr.push_back(std::move(x));
                }
                ForestOptions fo;
                fo.n_trees = opts.n_trees;
                fo.seed = stream_seed(opts.seed, r, f);
                const RandomForest rf = RandomForest::train(Xtr, tr.labels, fo);
                for (auto i : test) {
                    const auto full = standardized(i);
                    std::vector<double> x;
                    for (std::size_t a = 0; a < use; ++a) x.push_back(full[selected[a]]);
                    prob[c - 1][i] = rf.predict_proba(x);
                }
            }
        }
        for (std::size_t c = 0; c < K; ++c) {
            const CVMetrics m = score_predictions(prob[c], table.labels);
            curve_sum[c] += m.accuracy;
            if (c + 1 == K) rep.per_repeat.push_back(m);
        }
    }
    rep.mean = summarize(rep.per_repeat, false);
    rep.sd = summarize(rep.per_repeat, true);
    for (double s : curve_sum) rep.accuracy_curve.push_back(s / opts.repeats);
    return rep;
}

} // namespace blendreg
