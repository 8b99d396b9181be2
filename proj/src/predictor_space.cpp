#include "aoa/predictor_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "aoa/parallel.hpp"

namespace aoa {

void StandardizationParams::validate() const
{
    if (mean.size() != names.size() || sd.size() != names.size())
        throw DataError("standardization parameters have inconsistent lengths");
    std::unordered_set<std::string> seen;
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (!seen.insert(names[j]).second) throw DataError(fmt::format("duplicate predictor '{}'", names[j]));
        if (!(sd[j] > 0.0) || !std::isfinite(sd[j]) || !std::isfinite(mean[j]))
            throw DataError(fmt::format("predictor '{}' has invalid sd {}", names[j], sd[j]));
    }
    for (const auto& d : dropped)
        if (seen.count(d)) throw DataError(fmt::format("predictor '{}' is both retained and dropped", d));
}

StandardizationParams fit_standardizer(const SampleTable& training, std::span<const std::string> predictor_names)
{
    const auto n = training.rows();
    if (n < 2) throw DataError(fmt::format("standardization needs at least 2 training rows, got {}", n));
    std::unordered_set<std::string> seen;
    for (const auto& name : predictor_names)
        if (!seen.insert(name).second) throw DataError(fmt::format("duplicate predictor '{}'", name));

    StandardizationParams params;
    for (const auto& name : predictor_names) {
        const auto idx = training.index_of(name);
        if (!idx) throw DataError(fmt::format("unknown predictor '{}'", name));
        const auto col = training.predictors.col(static_cast<Eigen::Index>(*idx));
        for (Eigen::Index i = 0; i < col.size(); ++i)
            if (!std::isfinite(col[i]))
                throw DataError(fmt::format("training predictor '{}' has a missing value in row {}", name, i));
        if (col.maxCoeff() == col.minCoeff()) {
            spdlog::warn("predictor '{}' is constant over the training data and is dropped", name);
            params.dropped.push_back(name);
            continue;
        }
        const double mean = col.mean();
        const double ss = (col.array() - mean).square().sum();
        params.names.push_back(name);
        params.mean.push_back(mean);
        params.sd.push_back(std::sqrt(ss / static_cast<double>(n - 1)));
    }
    if (params.names.empty()) throw DataError("all predictors have zero variance over the training data");
    return params;
}

Matrix standardize(const Matrix& raw, std::span<const std::string> raw_names, const StandardizationParams& params,
                   MissingPolicy missing)
{
    if (static_cast<std::size_t>(raw.cols()) != raw_names.size())
        throw DataError("point matrix column count does not match its names");
    Matrix out(raw.rows(), static_cast<Eigen::Index>(params.size()));
    for (std::size_t j = 0; j < params.size(); ++j) {
        auto it = std::find(raw_names.begin(), raw_names.end(), params.names[j]);
        if (it == raw_names.end())
            throw DataError(fmt::format("points lack retained predictor '{}'", params.names[j]));
        const auto src = static_cast<Eigen::Index>(it - raw_names.begin());
        for (Eigen::Index i = 0; i < raw.rows(); ++i) {
            const double v = raw(i, src);
            if (!std::isfinite(v) && (missing == MissingPolicy::Reject || !std::isnan(v)))
                throw DataError(
                    fmt::format("non-finite value for predictor '{}' in row {}", params.names[j], i));
            out(i, static_cast<Eigen::Index>(j)) = (v - params.mean[j]) / params.sd[j];
        }
    }
    return out;
}

Matrix standardize(const SampleTable& points, const StandardizationParams& params)
{
    return standardize(points.predictors, points.predictor_names, params, MissingPolicy::Reject);
}

void ImportanceWeights::validate() const
{
    if (names.size() != values.size()) throw DataError("importance weights: names and values differ in length");
    bool any_positive = false;
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (!std::isfinite(values[j]) || values[j] < 0.0)
            throw DataError(fmt::format("weight for '{}' must be finite and >= 0, got {}", names[j], values[j]));
        any_positive = any_positive || values[j] > 0.0;
    }
    if (!any_positive) throw DataError("all importance weights are zero");
}

ImportanceWeights ImportanceWeights::aligned_to(std::span<const std::string> order) const
{
    ImportanceWeights out;
    for (const auto& name : order) {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw DataError(fmt::format("no weight for predictor '{}'", name));
        out.names.push_back(name);
        out.values.push_back(values[static_cast<std::size_t>(it - names.begin())]);
    }
    return out;
}

ImportanceWeights ImportanceWeights::scaled(double factor) const
{
    ImportanceWeights out = *this;
    for (auto& v : out.values) v *= factor;
    return out;
}

ImportanceWeights ImportanceWeights::uniform(std::span<const std::string> names)
{
    return {std::vector<std::string>(names.begin(), names.end()), std::vector<double>(names.size(), 1.0)};
}

ImportanceWeights weights_from_importance(std::vector<std::string> names, std::vector<double> importance)
{
    for (std::size_t j = 0; j < importance.size() && j < names.size(); ++j) {
        if (importance[j] < 0.0) {
            spdlog::warn("negative importance {:.4g} for '{}' clamped to 0", importance[j], names[j]);
            importance[j] = 0.0;
        }
    }
    ImportanceWeights w{std::move(names), std::move(importance)};
    w.validate();
    return w;
}

WeightedPointSet apply_weights(const Matrix& scaled, const ImportanceWeights& weights,
                               std::optional<std::vector<int>> folds)
{
    if (static_cast<std::size_t>(scaled.cols()) != weights.values.size())
        throw DataError(fmt::format("weights cover {} predictors but points have {} columns", weights.values.size(),
                                    scaled.cols()));
    weights.validate();
    if (folds && folds->size() != static_cast<std::size_t>(scaled.rows()))
        throw DataError("fold labels do not match the number of points");
    WeightedPointSet out;
    out.points = scaled;
    for (std::size_t j = 0; j < weights.values.size(); ++j)
        out.points.col(static_cast<Eigen::Index>(j)) *= weights.values[j];
    out.folds = std::move(folds);
    return out;
}

namespace {

double squared_distance(const double* a, const double* b, std::size_t p)
{
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

double euclidean_distance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw DataError("distance between points of different dimension");
    return std::sqrt(squared_distance(a.data(), b.data(), a.size()));
}

double pairwise_mean_distance(const WeightedPointSet& training)
{
    const auto n = training.size();
    if (n < 2) throw DataError(fmt::format("mean pairwise distance needs at least 2 points, got {}", n));
    const auto p = training.dims();
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double* a = training.points.row(static_cast<Eigen::Index>(i)).data();
        for (std::size_t k = i + 1; k < n; ++k)
            sum += std::sqrt(squared_distance(a, training.points.row(static_cast<Eigen::Index>(k)).data(), p));
    }
    const double mean = sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
    if (!(mean > 0.0))
        throw DataError("all training points coincide in weighted predictor space; DI is undefined");
    return mean;
}

double nearest_training_distance(std::span<const double> query, const WeightedPointSet& training,
                                 std::optional<int> excluded_fold)
{
    const auto p = training.dims();
    if (query.size() != p)
        throw DataError(fmt::format("query has {} dimensions, training set has {}", query.size(), p));
    if (excluded_fold && !training.folds) throw DataError("fold exclusion requested but training set has no folds");
    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < training.size(); ++i) {
        if (excluded_fold && (*training.folds)[i] == *excluded_fold) continue;
        any = true;
        best = std::min(best, squared_distance(query.data(), training.points.row(static_cast<Eigen::Index>(i)).data(), p));
    }
    if (!any)
        throw DataError(fmt::format("excluding fold {} leaves no training points", excluded_fold.value_or(-1)));
    return std::sqrt(best);
}

DissimilarityModel::DissimilarityModel(const SampleTable& training, StandardizationParams params,
                                       const ImportanceWeights& weights, std::optional<std::vector<int>> folds)
    : params_(std::move(params)), weights_(weights.aligned_to(params_.names))
{
    params_.validate();
    training_ = apply_weights(standardize(training, params_), weights_, std::move(folds));
    mean_distance_ = pairwise_mean_distance(training_);
}

Matrix DissimilarityModel::transform(const Matrix& raw, std::span<const std::string> raw_names) const
{
    Matrix scaled = standardize(raw, raw_names, params_, MissingPolicy::Propagate);
    for (std::size_t j = 0; j < weights_.values.size(); ++j)
        scaled.col(static_cast<Eigen::Index>(j)) *= weights_.values[j];
    return scaled;
}

std::vector<double> DissimilarityModel::di(const Matrix& raw, std::span<const std::string> raw_names,
                                           std::span<const std::optional<int>> excluded_fold, unsigned threads) const
{
    return di_weighted(transform(raw, raw_names), excluded_fold, threads);
}

std::vector<double> DissimilarityModel::di_weighted(const Matrix& weighted,
                                                    std::span<const std::optional<int>> excluded_fold,
                                                    unsigned threads) const
{
    const auto n = static_cast<std::size_t>(weighted.rows());
    if (!excluded_fold.empty() && excluded_fold.size() != n)
        throw DataError("excluded-fold list does not match the number of queries");
    if (static_cast<std::size_t>(weighted.cols()) != training_.dims())
        throw DataError(fmt::format("queries have {} columns, expected {}", weighted.cols(), training_.dims()));
    std::vector<double> out(n, kMissing);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto row = weighted.row(static_cast<Eigen::Index>(i));
        std::span<const double> q(row.data(), static_cast<std::size_t>(row.size()));
        if (std::any_of(q.begin(), q.end(), [](double v) { return std::isnan(v); })) return;
        const auto excl = excluded_fold.empty() ? std::nullopt : excluded_fold[i];
        out[i] = nearest_training_distance(q, training_, excl) / mean_distance_;
    });
    return out;
}

std::vector<double> dissimilarity_index(const Matrix& queries, std::span<const std::string> query_names,
                                        const SampleTable& training, const StandardizationParams& params,
                                        const ImportanceWeights& weights,
                                        std::span<const std::optional<int>> excluded_fold_per_query)
{
    std::optional<std::vector<int>> folds;
    if (std::any_of(excluded_fold_per_query.begin(), excluded_fold_per_query.end(),
                    [](const auto& f) { return f.has_value(); })) {
        if (!training.fold) throw DataError("fold exclusion requested but training rows carry no fold ids");
        folds = training.fold;
    }
    DissimilarityModel model(training, params, weights, std::move(folds));
    return model.di(queries, query_names, excluded_fold_per_query);
}

Grid di_grid(const PredictorStack& stack, const DissimilarityModel& model, unsigned threads)
{
    const auto& names = model.params().names;
    Matrix cells = stack.cell_matrix(names);
    auto values = model.di(cells, names, {}, threads);
    Grid out(stack.geometry());
    out.values = std::move(values);
    return out;
}

Grid di_grid(const PredictorStack& stack, const SampleTable& training, const StandardizationParams& params,
             const ImportanceWeights& weights, unsigned threads)
{
    return di_grid(stack, DissimilarityModel(training, params, weights), threads);
}

}  // namespace aoa
