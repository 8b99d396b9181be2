#pragma once

// Small seeded generators for property tests.

#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "aoa/core.hpp"

namespace gen {

struct Gen {
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    std::mt19937_64 rng;

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(rng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    std::size_t size(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }

    std::vector<std::string> names(std::size_t p)
    {
        std::vector<std::string> out;
        for (std::size_t j = 0; j < p; ++j) out.push_back(fmt::format("v{}", j));
        return out;
    }

    /// Rows of independent normals with per-column scale and offset, so
    /// columns differ in units.
    aoa::Matrix matrix(std::size_t n, std::size_t p)
    {
        aoa::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
        for (std::size_t j = 0; j < p; ++j) {
            const double scale = uniform(0.1, 50.0), offset = uniform(-100.0, 100.0);
            for (std::size_t i = 0; i < n; ++i)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = offset + scale * normal();
        }
        return m;
    }

    aoa::SampleTable table(std::size_t n, std::size_t p)
    {
        aoa::SampleTable t;
        t.predictor_names = names(p);
        t.predictors = matrix(n, p);
        for (std::size_t i = 0; i < n; ++i) {
            t.x.push_back(uniform(0.0, 100.0));
            t.y.push_back(uniform(0.0, 100.0));
            t.response.push_back(normal());
        }
        return t;
    }

    std::vector<double> weights(std::size_t p)
    {
        std::vector<double> w(p);
        for (auto& v : w) v = uniform(0.05, 10.0);
        return w;
    }
};

inline std::vector<std::vector<double>> rows_of(const aoa::Matrix& m)
{
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
    return out;
}

}  // namespace gen
