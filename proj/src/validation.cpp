#include "aoa/validation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "aoa/forest.hpp"
#include "aoa/parallel.hpp"
#include "aoa/rng.hpp"

namespace aoa {

std::string to_string(FoldStrategy s)
{
    switch (s) {
    case FoldStrategy::RandomK: return "random";
    case FoldStrategy::Cluster: return "cluster";
    case FoldStrategy::LeaveOneOut: return "loo";
    case FoldStrategy::Explicit: return "file";
    }
    return "unknown";
}

std::vector<std::size_t> FoldAssignment::members(int fold) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldAssignment::complement(int fold) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] != fold) out.push_back(i);
    return out;
}

std::string FoldAssignment::describe() const
{
    if (strategy == FoldStrategy::RandomK) return fmt::format("random:k={} seed={}", k, seed.value_or(0));
    return fmt::format("{} ({} folds)", to_string(strategy), k);
}

void FoldAssignment::validate() const
{
    if (k < 2) throw DataError(fmt::format("cross-validation needs at least 2 folds, got {}", k));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
        const int f = fold_of[i];
        if (f < 0 || f >= k) throw DataError(fmt::format("row {} has fold id {} outside [0, {})", i, f, k));
        ++counts[static_cast<std::size_t>(f)];
    }
    for (int f = 0; f < k; ++f)
        if (counts[static_cast<std::size_t>(f)] == 0) throw DataError(fmt::format("fold {} is empty", f));
}

FoldAssignment assign_random_folds(std::size_t n, int k, std::uint64_t seed)
{
    if (k < 2 || static_cast<std::size_t>(k) > n)
        throw UsageError(fmt::format("random folds need 2 <= k <= n, got k={} n={}", k, n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(seed, {tag(Stream::Folds)});
    std::shuffle(order.begin(), order.end(), rng);
    FoldAssignment out;
    out.fold_of.assign(n, 0);
    for (std::size_t pos = 0; pos < n; ++pos) out.fold_of[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    out.strategy = FoldStrategy::RandomK;
    out.k = k;
    out.seed = seed;
    return out;
}

FoldAssignment folds_from_labels(std::span<const int> labels)
{
    std::map<int, int> dense;
    FoldAssignment out;
    out.fold_of.reserve(labels.size());
    for (int label : labels) {
        auto [it, inserted] = dense.try_emplace(label, static_cast<int>(dense.size()));
        out.fold_of.push_back(it->second);
    }
    out.k = static_cast<int>(dense.size());
    out.strategy = FoldStrategy::Explicit;
    return out;
}

FoldAssignment assign_cluster_folds(std::span<const int> cluster_ids)
{
    auto out = folds_from_labels(cluster_ids);
    if (out.k < 2) throw DataError("leave-cluster-out needs at least 2 distinct clusters");
    out.strategy = FoldStrategy::Cluster;
    return out;
}

FoldAssignment assign_loo_folds(std::size_t n)
{
    if (n < 2) throw DataError("leave-one-out needs at least 2 rows");
    FoldAssignment out;
    out.fold_of.resize(n);
    std::iota(out.fold_of.begin(), out.fold_of.end(), 0);
    out.k = static_cast<int>(n);
    out.strategy = FoldStrategy::LeaveOneOut;
    return out;
}

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw DataError(fmt::format("metric inputs differ in length ({} vs {})", a.size(), b.size()));
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth, const std::vector<bool>& mask)
{
    check_lengths(pred, truth);
    if (!mask.empty() && mask.size() != pred.size()) throw DataError("mask length differs from metric inputs");
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        if (std::isnan(pred[i]) || std::isnan(truth[i])) continue;
        const double d = pred[i] - truth[i];
        ss += d * d;
        ++n;
    }
    if (n == 0) throw DataError("RMSE over an empty selection");
    return std::sqrt(ss / static_cast<double>(n));
}

double rmse(std::span<const double> pred, std::span<const double> truth)
{
    return rmse(pred, truth, {});
}

double pearson_r(std::span<const double> pred, std::span<const double> truth)
{
    check_lengths(pred, truth);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (!std::isnan(pred[i]) && !std::isnan(truth[i])) idx.push_back(i);
    if (idx.size() < 2) throw DataError("correlation needs at least 2 pairs");
    double ma = 0.0, mb = 0.0;
    for (auto i : idx) {
        ma += pred[i];
        mb += truth[i];
    }
    ma /= static_cast<double>(idx.size());
    mb /= static_cast<double>(idx.size());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (auto i : idx) {
        const double da = pred[i] - ma, db = truth[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw DataError("correlation undefined: zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double r_squared(std::span<const double> pred, std::span<const double> truth)
{
    const double r = pearson_r(pred, truth);
    return r * r;
}

CVReport cross_validate(const SampleTable& samples, const FoldAssignment& folds, const ForestConfig& config)
{
    folds.validate();
    if (folds.size() != samples.rows())
        throw DataError(fmt::format("fold assignment covers {} rows, samples have {}", folds.size(), samples.rows()));

    CVReport report;
    report.assignment = folds;
    report.predictions.assign(samples.rows(), kMissing);
    report.folds.resize(static_cast<std::size_t>(folds.k));

    // Per-fold forests run sequentially; each forest parallelizes over trees.
    for (int f = 0; f < folds.k; ++f) {
        const auto train_rows = folds.complement(f);
        const auto test_rows = folds.members(f);
        if (train_rows.size() < std::max<std::size_t>(2, config.min_node_size))
            throw DataError(fmt::format("fold {}: only {} rows left to train on", f, train_rows.size()));
        ForestConfig fold_cfg = config;
        fold_cfg.seed = derive_seed(config.seed, {tag(Stream::Folds), static_cast<std::uint64_t>(f)});
        const auto forest = train_forest(samples.subset(train_rows), fold_cfg);
        const auto test = samples.subset(test_rows);
        const auto pred = forest.predict(test.predictors);
        for (std::size_t i = 0; i < test_rows.size(); ++i) report.predictions[test_rows[i]] = pred[i];
        report.folds[static_cast<std::size_t>(f)] = {f, test_rows.size(), rmse(pred, test.response)};
    }
    report.rmse = rmse(report.predictions, samples.response);
    double sum = 0.0;
    for (const auto& fe : report.folds) sum += fe.rmse;
    report.mean_fold_rmse = sum / static_cast<double>(report.folds.size());
    try {
        report.r = pearson_r(report.predictions, samples.response);
        report.r2 = report.r * report.r;
    } catch (const DataError&) {
        report.r = report.r2 = kMissing;
    }
    return report;
}

}  // namespace aoa
