#pragma once

// Standardized, importance-weighted predictor space and the dissimilarity index.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aoa/core.hpp"

namespace aoa {

/// Training-data mean and sample sd (n - 1 divisor) per retained predictor.
struct StandardizationParams {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> sd;
    std::vector<std::string> dropped;  // zero-variance predictors

    std::size_t size() const { return names.size(); }
    void validate() const;
};

/// Fits on the named training columns. Constant columns are dropped with a
/// warning; throws DataError if all are constant, a name is unknown, fewer
/// than two rows are given, or a value is missing.
StandardizationParams fit_standardizer(const SampleTable& training, std::span<const std::string> predictor_names);

enum class MissingPolicy { Reject, Propagate };

/// Applies training mean/sd to `raw` whose columns are labelled `raw_names`.
/// Output columns follow params.names; dropped predictors are excluded.
Matrix standardize(const Matrix& raw, std::span<const std::string> raw_names, const StandardizationParams& params,
                   MissingPolicy missing = MissingPolicy::Reject);
Matrix standardize(const SampleTable& points, const StandardizationParams& params);

/// Nonnegative per-predictor weights, named so they can be aligned to a
/// standardizer's column order.
struct ImportanceWeights {
    std::vector<std::string> names;
    std::vector<double> values;

    /// Throws DataError on negative or non-finite weights, all-zero weights, or mismatched lengths.
    void validate() const;

    /// Weights reordered (and subset) to `order`; throws DataError for absent names.
    ImportanceWeights aligned_to(std::span<const std::string> order) const;

    ImportanceWeights scaled(double factor) const;

    static ImportanceWeights uniform(std::span<const std::string> names);
};

/// Clamps negative importance estimates to zero (logging each) and validates.
ImportanceWeights weights_from_importance(std::vector<std::string> names, std::vector<double> importance);

/// Standardized and weighted points.
struct WeightedPointSet {
    Matrix points;
    std::optional<std::vector<int>> folds;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    std::size_t dims() const { return static_cast<std::size_t>(points.cols()); }
};

/// Column j scaled by weights.values[j]; weights must already be aligned to
/// the columns of `scaled` (same count).
WeightedPointSet apply_weights(const Matrix& scaled, const ImportanceWeights& weights,
                               std::optional<std::vector<int>> folds = std::nullopt);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// Mean Euclidean distance over all n(n-1)/2 unordered training pairs.
/// Throws DataError for n < 2 or when every point coincides.
double pairwise_mean_distance(const WeightedPointSet& training);

/// Exact minimum distance from `query` to training points whose fold differs
/// from `excluded_fold` (all points when no fold is excluded).
double nearest_training_distance(std::span<const double> query, const WeightedPointSet& training,
                                 std::optional<int> excluded_fold = std::nullopt);

/// Bundles the fitted transform, the weighted training set and its mean
/// pairwise distance, so many queries can share one setup.
class DissimilarityModel {
public:
    DissimilarityModel(const SampleTable& training, StandardizationParams params, const ImportanceWeights& weights,
                       std::optional<std::vector<int>> folds = std::nullopt);

    const StandardizationParams& params() const { return params_; }
    const ImportanceWeights& weights() const { return weights_; }
    const WeightedPointSet& training() const { return training_; }
    double mean_distance() const { return mean_distance_; }

    /// Raw rows to weighted standardized rows; NaN rows propagate.
    Matrix transform(const Matrix& raw, std::span<const std::string> raw_names) const;

    /// DI per raw query row. `excluded_fold` is empty or one entry per row.
    std::vector<double> di(const Matrix& raw, std::span<const std::string> raw_names,
                           std::span<const std::optional<int>> excluded_fold = {}, unsigned threads = 1) const;

    /// DI for rows already in weighted space.
    std::vector<double> di_weighted(const Matrix& weighted, std::span<const std::optional<int>> excluded_fold = {},
                                    unsigned threads = 1) const;

private:
    StandardizationParams params_;
    ImportanceWeights weights_;
    WeightedPointSet training_;
    double mean_distance_ = 0.0;
};

/// DI_k = d_k / mean pairwise training distance, per query row.
std::vector<double> dissimilarity_index(const Matrix& queries, std::span<const std::string> query_names,
                                        const SampleTable& training, const StandardizationParams& params,
                                        const ImportanceWeights& weights,
                                        std::span<const std::optional<int>> excluded_fold_per_query = {});

/// DI for every cell of `stack`; cells missing in any retained layer stay missing.
Grid di_grid(const PredictorStack& stack, const SampleTable& training, const StandardizationParams& params,
             const ImportanceWeights& weights, unsigned threads = 0);
Grid di_grid(const PredictorStack& stack, const DissimilarityModel& model, unsigned threads = 0);

}  // namespace aoa
