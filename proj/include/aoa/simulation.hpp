#pragma once

// Truth-known prediction tasks: synthetic predictor fields, a PCA-based
// Gaussian virtual response, sampling designs, and the scenario runner.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aoa/applicability.hpp"
#include "aoa/core.hpp"
#include "aoa/forest.hpp"
#include "aoa/predictor_space.hpp"
#include "aoa/validation.hpp"

namespace aoa {

/// One synthetic predictor: offset + linear trend + Gaussian bumps, optionally
/// plus a multiple of an earlier predictor and white noise.
struct PredictorRecipe {
    std::string name;
    std::size_t min_bumps = 5;
    std::size_t max_bumps = 15;
    double min_amplitude = 0.5;
    double max_amplitude = 2.0;
    double min_width = 4.0;  // cells
    double max_width = 20.0;
    double trend_x = 0.0;  // per cell
    double trend_y = 0.0;
    double offset = 0.0;
    std::optional<std::size_t> parent;
    double parent_coef = 1.0;
    double noise_sd = 0.0;
};

struct FieldSpec {
    std::size_t rows = 100;
    std::size_t cols = 100;
    double cellsize = 1.0;
    std::vector<PredictorRecipe> predictors;
    std::uint64_t seed = 1;

    GridGeometry geometry() const;
    void validate() const;

    /// Desk-scale landscape: p predictors, some correlated with earlier ones.
    /// Trend slopes are drawn from [-max_trend, max_trend] per cell.
    static FieldSpec desk_default(std::size_t rows, std::size_t cols, std::size_t p, std::uint64_t seed,
                                  double max_trend = 0.02);
};

PredictorStack generate_predictor_stack(const FieldSpec& spec);

struct PcaResult {
    Grid pc1;
    Grid pc2;
    std::array<std::vector<double>, 2> loadings;
    std::array<double, 2> variance{};  // eigenvalues of the correlation matrix
};

/// PCA on the correlation matrix of the subset over all valid cells.
/// Scores are projections of the standardized data; each loading's first
/// nonzero entry is positive. Throws DataError for perfectly correlated pairs
/// or rank below two.
PcaResult pca_first_two(const PredictorStack& stack, std::span<const std::size_t> subset);

enum class Combination { Multiplicative, Additive };

struct ResponseSpec {
    std::vector<std::size_t> subset{0, 1, 2, 3, 4, 5};
    double mu1 = 3.0;
    double mu2 = -1.0;
    double sigma1 = 2.0;
    double sigma2 = 2.0;
    Combination combination = Combination::Multiplicative;

    void validate(std::size_t p) const;
};

/// Combined Gaussian suitability before rescaling; peak 1 at (mu1, mu2).
Grid combined_suitability(const Grid& pc1, const Grid& pc2, const ResponseSpec& rs);

/// combined_suitability min-max rescaled to [0, 1] over valid cells.
Grid gaussian_response(const Grid& pc1, const Grid& pc2, const ResponseSpec& rs);

/// n distinct valid cells, uniformly without replacement.
SampleTable sample_random(const PredictorStack& stack, const Grid& truth, std::size_t n, std::uint64_t seed);

/// n_clusters parent cells; members drawn without replacement from free
/// valid cells within `radius` cells (Euclidean) of their parent.
SampleTable sample_clustered(const PredictorStack& stack, const Grid& truth, std::size_t n_clusters,
                             std::size_t per_cluster, double radius, std::uint64_t seed);

enum class SamplingDesign { Random, Clustered };

struct SamplingSpec {
    SamplingDesign design = SamplingDesign::Random;
    std::size_t n = 50;
    std::size_t n_clusters = 50;
    std::size_t per_cluster = 10;
    double radius = 3.0;
};

struct CVSpec {
    FoldStrategy strategy = FoldStrategy::RandomK;
    int k = 10;
};

struct ModelSpec {
    std::size_t n_trees = 500;
    std::vector<std::size_t> mtry_grid;  // empty: 2..p
    std::size_t min_node_size = 5;
};

struct ScenarioSpec {
    std::string id = "scenario";
    FieldSpec field;
    ResponseSpec response;
    SamplingSpec sampling;
    CVSpec cv;
    ModelSpec model;
    std::vector<double> quantiles = kCalibrationQuantiles;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    bool leak_response = false;  // add the truth grid as a predictor
    bool keep_stack = false;
    bool ensemble_sd = false;
};

struct QuantileStats {
    double quantile = 0.0;
    double threshold = 0.0;
    double rmspe_in = kMissing;
    double rmspe_out = kMissing;
    std::size_t n_inside = 0;
    std::size_t n_outside = 0;
};

struct ScenarioSeeds {
    std::uint64_t field = 0;
    std::uint64_t sampling = 0;
    std::uint64_t folds = 0;
    std::uint64_t forest = 0;
    std::uint64_t importance = 0;
};

struct ScenarioResult {
    std::string id;
    ScenarioSeeds seeds;
    std::optional<PredictorStack> stack;
    Grid truth;
    Grid prediction;
    Grid di;
    Grid di_uniform;  // same pipeline with uniform weights
    std::optional<Grid> ensemble_sd;
    SampleTable samples;
    StandardizationParams params;
    std::vector<double> raw_importance;
    ImportanceWeights weights;
    TuningResult tuning;
    CVReport cv;
    TrainingDIResult training;
    std::vector<QuantileStats> stats;
    double di_error_r = kMissing;          // Pearson r(DI, |error|)
    double di_uniform_error_r = kMissing;  // same with uniform weights

    std::vector<double> error() const;  // prediction - truth
    const QuantileStats& at_quantile(double q) const;
    ScenarioErrors calibration_input() const;
};

ScenarioResult run_scenario(const ScenarioSpec& spec);

struct CatalogueFailure {
    std::string id;
    std::string message;
};

struct CatalogueResult {
    std::vector<ScenarioResult> results;  // input order, failures omitted
    std::vector<CatalogueFailure> failures;
    std::vector<ScenarioErrors> calibration_inputs() const;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total, const std::string& id)>;

/// Runs scenarios on up to `threads` workers. Failed scenarios are recorded
/// and skipped; throws DataError only when every scenario fails.
CatalogueResult run_catalogue(const std::vector<ScenarioSpec>& specs, unsigned threads,
                              const ProgressFn& progress = {});

}  // namespace aoa
