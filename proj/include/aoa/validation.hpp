#pragma once

// Fold assignment, cross-validation and error metrics.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aoa/core.hpp"

namespace aoa {

struct ForestConfig;

enum class FoldStrategy { RandomK, Cluster, LeaveOneOut, Explicit };

std::string to_string(FoldStrategy s);

/// One fold id per row. Ids are dense: 0 .. fold_count() - 1.
struct FoldAssignment {
    std::vector<int> fold_of;
    FoldStrategy strategy = FoldStrategy::RandomK;
    int k = 0;
    std::optional<std::uint64_t> seed;

    std::size_t size() const { return fold_of.size(); }
    int fold_count() const { return k; }
    std::vector<std::size_t> members(int fold) const;
    std::vector<std::size_t> complement(int fold) const;

    /// "random:k=10 seed=42", "cluster (50 folds)", ...
    std::string describe() const;

    /// Throws DataError unless ids are 0..k-1, every fold is nonempty and k >= 2.
    void validate() const;
};

/// Shuffled rows dealt into k folds whose sizes differ by at most one.
FoldAssignment assign_random_folds(std::size_t n, int k, std::uint64_t seed);

/// One fold per distinct cluster label, numbered by first appearance.
FoldAssignment assign_cluster_folds(std::span<const int> cluster_ids);

FoldAssignment assign_loo_folds(std::size_t n);

/// Arbitrary user-supplied labels, renumbered densely by first appearance.
FoldAssignment folds_from_labels(std::span<const int> labels);

double rmse(std::span<const double> pred, std::span<const double> truth);

/// RMSE over pairs where mask is true; NaN pairs are always skipped.
double rmse(std::span<const double> pred, std::span<const double> truth, const std::vector<bool>& mask);

double pearson_r(std::span<const double> pred, std::span<const double> truth);

/// Squared Pearson correlation.
double r_squared(std::span<const double> pred, std::span<const double> truth);

struct FoldError {
    int fold = 0;
    std::size_t n = 0;
    double rmse = 0.0;
};

struct CVReport {
    std::vector<FoldError> folds;
    std::vector<double> predictions;  // out-of-fold, row order
    double rmse = 0.0;                // pooled over all rows
    double mean_fold_rmse = 0.0;
    double r = 0.0;
    double r2 = 0.0;
    FoldAssignment assignment;
};

/// Trains on each fold's complement and predicts the fold.
CVReport cross_validate(const SampleTable& samples, const FoldAssignment& folds, const ForestConfig& config);

}  // namespace aoa
