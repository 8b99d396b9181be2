#pragma once

// Fold-aware training DI, quantile thresholds, AOA masks and the
// threshold-calibration sweep.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aoa/core.hpp"
#include "aoa/predictor_space.hpp"
#include "aoa/validation.hpp"

namespace aoa {

inline constexpr double kDefaultQuantile = 0.95;
inline const std::vector<double> kCalibrationQuantiles = {0.25, 0.50, 0.90, 0.95, 0.99, 1.0};

/// Linear interpolation between order statistics at h = (n - 1) q + 1
/// (one-based). q = 1 returns the maximum. NaN values are ignored.
double empirical_quantile(std::span<const double> values, double q);

struct QuantileThreshold {
    double quantile = 0.0;
    double threshold = 0.0;
};

struct TrainingDIResult {
    std::vector<double> di;  // one per training row
    FoldAssignment folds;
    double mean_distance = 0.0;
    std::vector<QuantileThreshold> thresholds;
};

/// DI of each training row against the rows of other folds only. The
/// normalizing mean distance still spans all training pairs.
TrainingDIResult training_di(const SampleTable& training, const FoldAssignment& folds,
                             const StandardizationParams& params, const ImportanceWeights& weights,
                             std::span<const double> quantiles = kCalibrationQuantiles);

/// Throws UsageError unless q is in (0, 1].
double di_threshold(const TrainingDIResult& result, double quantile);
double di_threshold(std::span<const double> training_di, double quantile);

enum class CellState : std::uint8_t { Outside = 0, Inside = 1, Missing = 2 };

struct AOAMask {
    GridGeometry geometry;
    std::vector<CellState> cells;
    double threshold = 0.0;
    double quantile = kMissing;
    std::size_t n_inside = 0;
    std::size_t n_outside = 0;
    std::size_t n_missing = 0;

    bool inside(std::size_t cell) const { return cells[cell] == CellState::Inside; }
    std::vector<bool> inside_flags() const;
    std::vector<bool> outside_flags() const;

    /// 1 inside, 0 outside, NaN missing.
    Grid to_grid() const;
};

/// Inside where DI <= threshold; missing DI stays missing.
AOAMask aoa_mask(const Grid& di, double threshold, double quantile = kMissing);

/// Everything calibration needs from one truth-known scenario.
struct ScenarioErrors {
    std::string id;
    double cv_rmse = 0.0;
    std::vector<double> error;  // prediction - truth per cell; NaN where missing
    std::vector<double> di;     // per cell, aligned with error
    std::vector<double> training_di;
};

struct CalibrationRow {
    double quantile = 0.0;
    std::string scenario_id;
    double threshold = 0.0;
    double cv_rmse = 0.0;
    double rmspe_in = kMissing;   // NaN when the AOA is empty
    double rmspe_out = kMissing;  // NaN when nothing lies outside
    double diff = kMissing;       // cv_rmse - rmspe_in
    std::size_t n_inside = 0;
    std::size_t n_outside = 0;
};

struct QuantileSummary {
    double quantile = 0.0;
    std::size_t n_valid = 0;
    std::size_t n_missing = 0;
    double mean = kMissing;
    double median = kMissing;
    double q1 = kMissing;
    double q3 = kMissing;
};

struct CalibrationTable {
    std::vector<CalibrationRow> rows;  // quantile-major, scenarios in input order
    std::vector<QuantileSummary> summaries;

    const QuantileSummary& summary(double quantile) const;
};

CalibrationTable calibrate_quantiles(std::span<const ScenarioErrors> scenarios, std::span<const double> quantiles);

}  // namespace aoa
