#pragma once

// Reference computations written independently of the library: plain loops
// over std::vector, no Eigen, no shared helpers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

struct Scaling {
    std::vector<double> mean;
    std::vector<double> sd;
};

inline Scaling fit(const Rows& train)
{
    const std::size_t n = train.size(), p = train.front().size();
    Scaling s{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
    for (std::size_t j = 0; j < p; ++j) {
        double sum = 0.0;
        for (const auto& r : train) sum += r[j];
        s.mean[j] = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& r : train) ss += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
        s.sd[j] = std::sqrt(ss / static_cast<double>(n - 1));
    }
    return s;
}

inline Rows scale_and_weight(const Rows& raw, const Scaling& s, const std::vector<double>& w)
{
    Rows out = raw;
    for (auto& r : out)
        for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - s.mean[j]) / s.sd[j] * w[j];
    return out;
}

inline double dist(const std::vector<double>& a, const std::vector<double>& b)
{
    double ss = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) ss += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(ss);
}

inline double mean_pair_distance(const Rows& pts)
{
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t k = i + 1; k < pts.size(); ++k) {
            sum += dist(pts[i], pts[k]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

inline double nearest(const std::vector<double>& q, const Rows& pts, const std::vector<int>* folds = nullptr,
                      std::optional<int> skip = std::nullopt)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (skip && folds && (*folds)[i] == *skip) continue;
        best = std::min(best, dist(q, pts[i]));
    }
    return best;
}

/// Standardize with training moments, weight, brute-force DI per query.
inline std::vector<double> di(const Rows& train, const Rows& queries, const std::vector<double>& w)
{
    const auto s = fit(train);
    const auto t = scale_and_weight(train, s, w);
    const auto q = scale_and_weight(queries, s, w);
    const double dbar = mean_pair_distance(t);
    std::vector<double> out;
    for (const auto& row : q) out.push_back(nearest(row, t) / dbar);
    return out;
}

/// Fold-aware training DI: each row against rows of other folds only.
inline std::vector<double> training_di(const Rows& train, const std::vector<int>& folds, const std::vector<double>& w)
{
    const auto s = fit(train);
    const auto t = scale_and_weight(train, s, w);
    const double dbar = mean_pair_distance(t);
    std::vector<double> out;
    for (std::size_t i = 0; i < t.size(); ++i) out.push_back(nearest(t[i], t, &folds, folds[i]) / dbar);
    return out;
}

/// Type-7 quantile straight from the definition.
inline double quantile7(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double sample_sd(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Cyclic Jacobi eigen-decomposition of a small symmetric matrix. Returns
/// eigenvalues descending with matching unit eigenvectors (columns).
struct Eigen2 {
    std::vector<double> values;
    Rows vectors;  // vectors[k] is the k-th eigenvector
};

inline Eigen2 jacobi(Rows a)
{
    const std::size_t n = a.size();
    Rows v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
    Eigen2 out;
    for (auto k : order) {
        out.values.push_back(a[k][k]);
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = v[i][k];
        out.vectors.push_back(col);
    }
    return out;
}

}  // namespace oracle
