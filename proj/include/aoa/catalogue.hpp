#pragma once

// Scenario catalogue configuration: a key = value text file expanded into
// ScenarioSpecs. See docs/catalogue-config.md for the keys.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "aoa/simulation.hpp"

namespace aoa {

struct CatalogueConfig {
    std::size_t rows = 100;
    std::size_t cols = 100;
    double cellsize = 1.0;
    std::size_t predictors = 10;
    std::uint64_t field_seed = 1;
    std::size_t landscapes = 1;
    double max_trend = 0.02;

    std::vector<double> mu1{1.0, 2.0, 3.0};
    std::vector<double> mu2{-1.0, 0.0, 1.0};
    std::vector<double> sigma1{1.0, 2.0, 3.0};
    std::vector<double> sigma2{1.0, 2.0, 3.0};
    std::vector<std::size_t> response_subset{0, 1, 2, 3, 4, 5};
    std::size_t response_count = 0;  // 0: every combination
    Combination combination = Combination::Multiplicative;

    SamplingDesign design = SamplingDesign::Random;
    std::vector<std::size_t> sample_sizes{25, 50, 75, 100};
    std::size_t replicates = 3;
    std::size_t n_clusters = 50;
    std::size_t points_per_cluster = 10;
    double cluster_radius = 3.0;

    CVSpec cv;
    std::size_t trees = 500;
    std::vector<std::size_t> mtry_grid;
    std::size_t min_node_size = 5;
    std::vector<double> quantiles = kCalibrationQuantiles;
    std::uint64_t seed = 1;
};

/// Throws UsageError naming the line for unknown keys or bad values.
CatalogueConfig parse_catalogue_config(std::istream& in, const std::string& source = "<stream>");
CatalogueConfig read_catalogue_config(const std::filesystem::path& path);

/// Responses in lexicographic (mu1, mu2, sigma1, sigma2) order, optionally
/// thinned to `response_count` evenly spaced entries.
std::vector<ResponseSpec> catalogue_responses(const CatalogueConfig& config);

/// responses × sample sizes × replicates. Response r, replicate k uses
/// landscape (r * replicates + k) mod landscapes for every sample size. For
/// clustered designs the sample sizes list is ignored and one entry per
/// response × replicate is built.
std::vector<ScenarioSpec> build_catalogue(const CatalogueConfig& config);

}  // namespace aoa
