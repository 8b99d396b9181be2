#include "aoa/applicability.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace aoa {

namespace {

void check_quantile(double q)
{
    if (!(q > 0.0 && q <= 1.0)) throw UsageError(fmt::format("quantile must lie in (0, 1], got {}", q));
}

}  // namespace

double empirical_quantile(std::span<const double> values, double q)
{
    check_quantile(q);
    std::vector<double> v;
    v.reserve(values.size());
    for (double x : values)
        if (!std::isnan(x)) v.push_back(x);
    if (v.empty()) throw DataError("quantile of an empty set");
    std::sort(v.begin(), v.end());
    if (q == 1.0) return v.back();
    const double h = static_cast<double>(v.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

TrainingDIResult training_di(const SampleTable& training, const FoldAssignment& folds,
                             const StandardizationParams& params, const ImportanceWeights& weights,
                             std::span<const double> quantiles)
{
    folds.validate();
    if (folds.size() != training.rows())
        throw DataError(fmt::format("fold assignment covers {} rows, training has {}", folds.size(), training.rows()));
    DissimilarityModel model(training, params, weights, folds.fold_of);
    std::vector<std::optional<int>> excluded(folds.fold_of.begin(), folds.fold_of.end());

    TrainingDIResult result;
    result.di = model.di_weighted(model.training().points, excluded);
    result.folds = folds;
    result.mean_distance = model.mean_distance();
    for (double q : quantiles) result.thresholds.push_back({q, di_threshold(result.di, q)});
    return result;
}

double di_threshold(std::span<const double> training_di, double quantile)
{
    return empirical_quantile(training_di, quantile);
}

double di_threshold(const TrainingDIResult& result, double quantile)
{
    return di_threshold(result.di, quantile);
}

std::vector<bool> AOAMask::inside_flags() const
{
    std::vector<bool> out(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) out[i] = cells[i] == CellState::Inside;
    return out;
}

std::vector<bool> AOAMask::outside_flags() const
{
    std::vector<bool> out(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) out[i] = cells[i] == CellState::Outside;
    return out;
}

Grid AOAMask::to_grid() const
{
    Grid g(geometry);
    for (std::size_t i = 0; i < cells.size(); ++i)
        g.values[i] = cells[i] == CellState::Missing ? kMissing : (cells[i] == CellState::Inside ? 1.0 : 0.0);
    return g;
}

AOAMask aoa_mask(const Grid& di, double threshold, double quantile)
{
    if (!(threshold >= 0.0)) throw UsageError(fmt::format("AOA threshold must be >= 0, got {}", threshold));
    AOAMask mask;
    mask.geometry = di.geometry;
    mask.threshold = threshold;
    mask.quantile = quantile;
    mask.cells.resize(di.size());
    for (std::size_t i = 0; i < di.size(); ++i) {
        const double v = di.values[i];
        if (std::isnan(v)) {
            mask.cells[i] = CellState::Missing;
            ++mask.n_missing;
        } else if (v <= threshold) {
            mask.cells[i] = CellState::Inside;
            ++mask.n_inside;
        } else {
            mask.cells[i] = CellState::Outside;
            ++mask.n_outside;
        }
    }
    return mask;
}

const QuantileSummary& CalibrationTable::summary(double quantile) const
{
    for (const auto& s : summaries)
        if (std::abs(s.quantile - quantile) < 1e-12) return s;
    throw UsageError(fmt::format("calibration table has no quantile {}", quantile));
}

CalibrationTable calibrate_quantiles(std::span<const ScenarioErrors> scenarios, std::span<const double> quantiles)
{
    if (scenarios.empty()) throw DataError("calibration needs at least one scenario");
    if (quantiles.empty()) throw UsageError("calibration needs at least one quantile");
    for (const auto& s : scenarios)
        if (s.error.size() != s.di.size())
            throw DataError(fmt::format("scenario '{}': error and DI grids differ in size", s.id));

    CalibrationTable table;
    for (double q : quantiles) {
        check_quantile(q);
        std::vector<double> diffs;
        QuantileSummary summary;
        summary.quantile = q;
        for (const auto& s : scenarios) {
            CalibrationRow row;
            row.quantile = q;
            row.scenario_id = s.id;
            row.cv_rmse = s.cv_rmse;
            row.threshold = di_threshold(s.training_di, q);
            double ss_in = 0.0, ss_out = 0.0;
            for (std::size_t i = 0; i < s.di.size(); ++i) {
                if (std::isnan(s.di[i]) || std::isnan(s.error[i])) continue;
                const double e2 = s.error[i] * s.error[i];
                if (s.di[i] <= row.threshold) {
                    ss_in += e2;
                    ++row.n_inside;
                } else {
                    ss_out += e2;
                    ++row.n_outside;
                }
            }
            if (row.n_inside > 0) {
                row.rmspe_in = std::sqrt(ss_in / static_cast<double>(row.n_inside));
                row.diff = row.cv_rmse - row.rmspe_in;
                diffs.push_back(row.diff);
            } else {
                ++summary.n_missing;
            }
            if (row.n_outside > 0) row.rmspe_out = std::sqrt(ss_out / static_cast<double>(row.n_outside));
            table.rows.push_back(std::move(row));
        }
        summary.n_valid = diffs.size();
        if (!diffs.empty()) {
            double sum = 0.0;
            for (double d : diffs) sum += d;
            summary.mean = sum / static_cast<double>(diffs.size());
            summary.median = empirical_quantile(diffs, 0.5);
            summary.q1 = empirical_quantile(diffs, 0.25);
            summary.q3 = empirical_quantile(diffs, 0.75);
        }
        table.summaries.push_back(summary);
    }
    return table;
}

}  // namespace aoa
