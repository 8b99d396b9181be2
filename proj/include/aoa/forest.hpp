#pragma once

// Random Forest regression: bagged CART trees, permutation importance and
// per-tree ensemble spread.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "aoa/core.hpp"
#include "aoa/predictor_space.hpp"
#include "aoa/validation.hpp"

namespace aoa {

struct ForestConfig {
    std::size_t n_trees = 500;
    std::size_t mtry = 0;  // 0: max(1, p / 3)
    std::size_t min_node_size = 5;
    std::uint64_t seed = 42;
    bool bootstrap = true;
    unsigned threads = 1;

    /// Throws UsageError when a field is out of range for `p` predictors.
    void validate(std::size_t p) const;
    std::size_t resolved_mtry(std::size_t p) const;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // mean response of the bootstrap rows reaching the node
    std::size_t count = 0;

    bool leaf() const { return feature < 0; }
};

class RegressionTree {
public:
    RegressionTree() = default;
    explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    /// Rows with value <= split go left.
    double predict(const double* row) const;
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::size_t depth() const;

private:
    std::vector<TreeNode> nodes_;
};

struct MtryScore {
    std::size_t mtry = 0;
    double rmse = 0.0;
};

struct TuningResult {
    std::size_t best_mtry = 0;
    std::vector<MtryScore> scores;
    std::vector<CVReport> reports;  // parallel to scores
    const CVReport& best_report() const;
};

class TrainedForest {
public:
    const ForestConfig& config() const { return config_; }
    const std::vector<std::string>& predictor_names() const { return names_; }
    std::size_t predictor_count() const { return names_.size(); }
    const std::vector<RegressionTree>& trees() const { return trees_; }
    std::size_t tree_count() const { return trees_.size(); }

    /// Bootstrap draw count per training row, per tree.
    const std::vector<std::vector<std::uint32_t>>& inbag() const { return inbag_; }
    std::vector<std::size_t> oob_rows(std::size_t tree) const;
    std::size_t training_rows() const { return inbag_.empty() ? 0 : inbag_.front().size(); }
    const std::optional<TuningResult>& tuning() const { return tuning_; }
    void set_tuning(TuningResult t) { tuning_ = std::move(t); }

    /// Columns of `points` must follow predictor_names().
    std::vector<double> predict(const Matrix& points, unsigned threads = 1) const;

    /// Aligns by name first.
    std::vector<double> predict(const Matrix& points, std::span<const std::string> names, unsigned threads = 1) const;

    /// points × trees.
    Matrix per_tree_predictions(const Matrix& points) const;

    /// Sample sd over per-tree predictions; throws DataError for fewer than 2 trees.
    std::vector<double> ensemble_sd(const Matrix& points, unsigned threads = 1) const;

    /// Out-of-bag prediction per training row; NaN where a row was in every bag.
    std::vector<double> oob_predict(const Matrix& training_points) const;

    nlohmann::json to_json() const;
    static TrainedForest from_json(const nlohmann::json& doc);

    friend TrainedForest train_forest(const SampleTable& samples, const ForestConfig& config);

private:
    ForestConfig config_;
    std::vector<std::string> names_;
    std::vector<RegressionTree> trees_;
    std::vector<std::vector<std::uint32_t>> inbag_;
    std::optional<TuningResult> tuning_;
};

inline constexpr const char* kForestSchema = "aoa-forest/1";

/// Grows config.n_trees trees on bootstrap samples of `samples`, using every
/// predictor column. Deterministic for a given seed regardless of threads.
TrainedForest train_forest(const SampleTable& samples, const ForestConfig& config);

/// Mean increase in per-tree OOB MSE when one predictor is permuted among that
/// tree's OOB rows. Raw (not sd-normalized); may be negative.
std::vector<double> permutation_importance_raw(const TrainedForest& forest, const SampleTable& samples,
                                               std::uint64_t seed);

/// Raw importance clamped to nonnegative weights.
ImportanceWeights permutation_importance(const TrainedForest& forest, const SampleTable& samples,
                                         std::uint64_t seed);

/// Cross-validated RMSE for each mtry in `grid`; best is the lowest RMSE, ties to the smaller mtry.
TuningResult tune_mtry(const SampleTable& samples, std::span<const std::size_t> grid, const FoldAssignment& folds,
                       const ForestConfig& config);

}  // namespace aoa
