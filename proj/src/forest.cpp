#include "aoa/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "aoa/parallel.hpp"
#include "aoa/rng.hpp"

namespace aoa {

void ForestConfig::validate(std::size_t p) const
{
    if (p == 0) throw UsageError("forest needs at least one predictor");
    if (n_trees < 1) throw UsageError("n_trees must be >= 1");
    if (min_node_size < 1) throw UsageError("min_node_size must be >= 1");
    if (mtry > p) throw UsageError(fmt::format("mtry {} exceeds predictor count {}", mtry, p));
}

std::size_t ForestConfig::resolved_mtry(std::size_t p) const
{
    if (mtry != 0) return mtry;
    return std::max<std::size_t>(1, p / 3);
}

double RegressionTree::predict(const double* row) const
{
    std::size_t i = 0;
    while (!nodes_[i].leaf()) {
        const auto& n = nodes_[i];
        i = static_cast<std::size_t>(row[n.feature] <= n.split ? n.left : n.right);
    }
    return nodes_[i].value;
}

std::size_t RegressionTree::depth() const
{
    std::vector<std::size_t> d(nodes_.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        best = std::max(best, d[i]);
        if (!nodes_[i].leaf()) {
            d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
        }
    }
    return best;
}

const CVReport& TuningResult::best_report() const
{
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i].mtry == best_mtry && i < reports.size()) return reports[i];
    throw DataError("tuning result carries no report for the selected mtry");
}

namespace {

// Grows one CART regression tree over a bootstrap multiset of row indices.
class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<double>>& columns, const std::vector<double>& response,
                std::size_t mtry, std::size_t min_node_size, Rng& rng)
        : columns_(columns), y_(response), mtry_(mtry), min_node_size_(min_node_size), rng_(rng),
          features_(columns.size())
    {
        std::iota(features_.begin(), features_.end(), std::size_t{0});
    }

    std::vector<TreeNode> build(std::vector<std::uint32_t> rows)
    {
        rows_ = std::move(rows);
        nodes_.clear();
        grow(0, rows_.size());
        return std::move(nodes_);
    }

private:
    struct Split {
        int feature = -1;
        double value = 0.0;
        double score = 0.0;
    };

    int grow(std::size_t begin, std::size_t end)
    {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        const std::size_t n = end - begin;

        double sum = 0.0, lo = y_[rows_[begin]], hi = lo;
        for (std::size_t k = begin; k < end; ++k) {
            const double v = y_[rows_[k]];
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        TreeNode& node = nodes_[static_cast<std::size_t>(id)];
        node.count = n;
        node.value = lo == hi ? lo : std::clamp(sum / static_cast<double>(n), lo, hi);

        if (n < 2 * min_node_size_ || lo == hi) return id;

        const Split best = find_split(begin, end, sum);
        if (best.feature < 0) return id;

        const auto& col = columns_[static_cast<std::size_t>(best.feature)];
        const auto mid = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                               rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                               [&](std::uint32_t r) { return col[r] <= best.value; });
        const auto split_at = static_cast<std::size_t>(mid - rows_.begin());

        nodes_[static_cast<std::size_t>(id)].feature = best.feature;
        nodes_[static_cast<std::size_t>(id)].split = best.value;
        const int left = grow(begin, split_at);
        const int right = grow(split_at, end);
        nodes_[static_cast<std::size_t>(id)].left = left;
        nodes_[static_cast<std::size_t>(id)].right = right;
        return id;
    }

    Split find_split(std::size_t begin, std::size_t end, double sum)
    {
        const std::size_t p = features_.size();
        for (std::size_t k = 0; k < mtry_; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, p - 1);
            std::swap(features_[k], features_[pick(rng_)]);
        }
        std::vector<std::size_t> candidates(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry_));
        std::sort(candidates.begin(), candidates.end());

        const std::size_t n = end - begin;
        const double parent = sum * sum / static_cast<double>(n);
        Split best;
        best.score = parent;
        scratch_.resize(n);
        for (const auto f : candidates) {
            const auto& col = columns_[f];
            for (std::size_t k = 0; k < n; ++k) {
                const auto r = rows_[begin + k];
                scratch_[k] = {col[r], r};
            }
            std::sort(scratch_.begin(), scratch_.end());
            if (scratch_.front().first == scratch_.back().first) continue;
            double left_sum = 0.0;
            for (std::size_t k = 1; k < n; ++k) {
                left_sum += y_[scratch_[k - 1].second];
                const double a = scratch_[k - 1].first, b = scratch_[k].first;
                if (!(a < b)) continue;
                const double nl = static_cast<double>(k), nr = static_cast<double>(n - k);
                const double right_sum = sum - left_sum;
                const double score = left_sum * left_sum / nl + right_sum * right_sum / nr;
                if (score > best.score) {
                    double mid = a + (b - a) / 2.0;
                    if (!(mid < b)) mid = a;
                    best = {static_cast<int>(f), mid, score};
                }
            }
        }
        // Reject splits whose SSE reduction is only rounding noise.
        if (best.feature >= 0 && best.score - parent <= 1e-12 * std::max(1.0, std::abs(parent))) best.feature = -1;
        return best;
    }

    const std::vector<std::vector<double>>& columns_;
    const std::vector<double>& y_;
    std::size_t mtry_;
    std::size_t min_node_size_;
    Rng& rng_;
    std::vector<std::size_t> features_;
    std::vector<std::uint32_t> rows_;
    std::vector<TreeNode> nodes_;
    std::vector<std::pair<double, std::uint32_t>> scratch_;
};

void check_columns(const Matrix& points, std::size_t p)
{
    if (static_cast<std::size_t>(points.cols()) != p)
        throw DataError(fmt::format("points have {} columns, forest expects {}", points.cols(), p));
}

}  // namespace

TrainedForest train_forest(const SampleTable& samples, const ForestConfig& config)
{
    samples.validate();
    const std::size_t n = samples.rows();
    const std::size_t p = samples.predictor_names.size();
    config.validate(p);
    if (n == 0 || n < config.min_node_size)
        throw DataError(fmt::format("forest needs at least min_node_size={} rows, got {}", config.min_node_size, n));
    if (samples.response.size() != n) throw DataError("samples carry no response");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(samples.response[i])) throw DataError(fmt::format("response missing in row {}", i));

    std::vector<std::vector<double>> columns(p, std::vector<double>(n));
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double v = samples.predictors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (!std::isfinite(v))
                throw DataError(fmt::format("predictor '{}' missing in row {}", samples.predictor_names[j], i));
            columns[j][i] = v;
        }
    if (std::all_of(samples.response.begin(), samples.response.end(),
                    [&](double v) { return v == samples.response.front(); }))
        spdlog::warn("response is constant; every tree is a single leaf");

    TrainedForest forest;
    forest.config_ = config;
    forest.config_.mtry = config.resolved_mtry(p);
    forest.names_ = samples.predictor_names;
    forest.trees_.resize(config.n_trees);
    forest.inbag_.assign(config.n_trees, std::vector<std::uint32_t>(n, 0));

    parallel_for(config.n_trees, config.threads, [&](std::size_t t) {
        auto rng = make_rng(config.seed, {tag(Stream::Tree), t});
        std::vector<std::uint32_t> rows(n);
        if (config.bootstrap) {
            std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(n - 1));
            for (auto& r : rows) r = draw(rng);
        } else {
            std::iota(rows.begin(), rows.end(), 0u);
        }
        for (auto r : rows) ++forest.inbag_[t][r];
        TreeBuilder builder(columns, samples.response, forest.config_.mtry, config.min_node_size, rng);
        forest.trees_[t] = RegressionTree(builder.build(std::move(rows)));
    });
    return forest;
}

std::vector<std::size_t> TrainedForest::oob_rows(std::size_t tree) const
{
    std::vector<std::size_t> out;
    const auto& counts = inbag_.at(tree);
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] == 0) out.push_back(i);
    return out;
}

std::vector<double> TrainedForest::predict(const Matrix& points, unsigned threads) const
{
    check_columns(points, names_.size());
    const auto n = static_cast<std::size_t>(points.rows());
    std::vector<double> out(n, kMissing);
    parallel_for(n, threads, [&](std::size_t i) {
        const double* row = points.row(static_cast<Eigen::Index>(i)).data();
        for (std::size_t j = 0; j < names_.size(); ++j)
            if (std::isnan(row[j])) return;
        double sum = 0.0, lo = 0.0, hi = 0.0;
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            const double v = trees_[t].predict(row);
            sum += v;
            lo = t == 0 ? v : std::min(lo, v);
            hi = t == 0 ? v : std::max(hi, v);
        }
        out[i] = std::clamp(sum / static_cast<double>(trees_.size()), lo, hi);
    });
    return out;
}

std::vector<double> TrainedForest::predict(const Matrix& points, std::span<const std::string> names,
                                           unsigned threads) const
{
    if (static_cast<std::size_t>(points.cols()) != names.size())
        throw DataError("point matrix column count does not match its names");
    Matrix aligned(points.rows(), static_cast<Eigen::Index>(names_.size()));
    for (std::size_t j = 0; j < names_.size(); ++j) {
        auto it = std::find(names.begin(), names.end(), names_[j]);
        if (it == names.end()) throw DataError(fmt::format("points lack forest predictor '{}'", names_[j]));
        aligned.col(static_cast<Eigen::Index>(j)) = points.col(static_cast<Eigen::Index>(it - names.begin()));
    }
    return predict(aligned, threads);
}

Matrix TrainedForest::per_tree_predictions(const Matrix& points) const
{
    check_columns(points, names_.size());
    Matrix out(points.rows(), static_cast<Eigen::Index>(trees_.size()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double* row = points.row(i).data();
        for (std::size_t t = 0; t < trees_.size(); ++t) out(i, static_cast<Eigen::Index>(t)) = trees_[t].predict(row);
    }
    return out;
}

std::vector<double> TrainedForest::ensemble_sd(const Matrix& points, unsigned threads) const
{
    check_columns(points, names_.size());
    if (trees_.size() < 2) throw DataError("ensemble sd needs at least 2 trees");
    const auto n = static_cast<std::size_t>(points.rows());
    std::vector<double> out(n, kMissing);
    parallel_for(n, threads, [&](std::size_t i) {
        const double* row = points.row(static_cast<Eigen::Index>(i)).data();
        for (std::size_t j = 0; j < names_.size(); ++j)
            if (std::isnan(row[j])) return;
        std::vector<double> v(trees_.size());
        for (std::size_t t = 0; t < trees_.size(); ++t) v[t] = trees_[t].predict(row);
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        out[i] = std::sqrt(ss / static_cast<double>(v.size() - 1));
    });
    return out;
}

std::vector<double> TrainedForest::oob_predict(const Matrix& training_points) const
{
    check_columns(training_points, names_.size());
    const auto n = static_cast<std::size_t>(training_points.rows());
    if (n != training_rows()) throw DataError("OOB prediction needs the forest's own training rows");
    std::vector<double> sum(n, 0.0);
    std::vector<std::size_t> count(n, 0);
    for (std::size_t t = 0; t < trees_.size(); ++t)
        for (std::size_t i = 0; i < n; ++i)
            if (inbag_[t][i] == 0) {
                sum[i] += trees_[t].predict(training_points.row(static_cast<Eigen::Index>(i)).data());
                ++count[i];
            }
    std::vector<double> out(n, kMissing);
    for (std::size_t i = 0; i < n; ++i)
        if (count[i] > 0) out[i] = sum[i] / static_cast<double>(count[i]);
    return out;
}

std::vector<double> permutation_importance_raw(const TrainedForest& forest, const SampleTable& samples,
                                               std::uint64_t seed)
{
    const auto p = forest.predictor_count();
    if (samples.predictor_names != forest.predictor_names())
        throw DataError("importance samples must carry the forest's predictors in training order");
    if (samples.rows() != forest.training_rows())
        throw DataError(fmt::format("importance needs the {} training rows, got {}", forest.training_rows(),
                                    samples.rows()));

    std::vector<double> total(p, 0.0);
    std::size_t used = 0, skipped = 0;
    std::vector<double> row(p);
    for (std::size_t t = 0; t < forest.tree_count(); ++t) {
        const auto oob = forest.oob_rows(t);
        if (oob.empty()) {
            ++skipped;
            continue;
        }
        const auto& tree = forest.trees()[t];
        double base = 0.0;
        for (auto i : oob) {
            const double e = tree.predict(samples.predictors.row(static_cast<Eigen::Index>(i)).data()) -
                             samples.response[i];
            base += e * e;
        }
        base /= static_cast<double>(oob.size());
        for (std::size_t j = 0; j < p; ++j) {
            auto rng = make_rng(seed, {tag(Stream::Importance), t, j});
            std::vector<std::size_t> perm = oob;
            std::shuffle(perm.begin(), perm.end(), rng);
            double mse = 0.0;
            for (std::size_t k = 0; k < oob.size(); ++k) {
                const auto i = static_cast<Eigen::Index>(oob[k]);
                for (std::size_t c = 0; c < p; ++c) row[c] = samples.predictors(i, static_cast<Eigen::Index>(c));
                row[j] = samples.predictors(static_cast<Eigen::Index>(perm[k]), static_cast<Eigen::Index>(j));
                const double e = tree.predict(row.data()) - samples.response[oob[k]];
                mse += e * e;
            }
            total[j] += mse / static_cast<double>(oob.size()) - base;
        }
        ++used;
    }
    if (skipped > 0) spdlog::warn("{} of {} trees have no out-of-bag rows and were skipped", skipped, forest.tree_count());
    if (used == 0) throw DataError("no tree has out-of-bag rows; importance is undefined");
    for (auto& v : total) v /= static_cast<double>(used);
    return total;
}

ImportanceWeights permutation_importance(const TrainedForest& forest, const SampleTable& samples,
                                         std::uint64_t seed)
{
    return weights_from_importance(forest.predictor_names(), permutation_importance_raw(forest, samples, seed));
}

TuningResult tune_mtry(const SampleTable& samples, std::span<const std::size_t> grid, const FoldAssignment& folds,
                       const ForestConfig& config)
{
    if (grid.empty()) throw UsageError("mtry grid is empty");
    const auto p = samples.predictor_names.size();
    for (auto m : grid)
        if (m < 1 || m > p) throw UsageError(fmt::format("mtry {} outside [1, {}]", m, p));

    TuningResult result;
    for (auto m : grid) {
        ForestConfig cfg = config;
        cfg.mtry = m;
        auto report = cross_validate(samples, folds, cfg);
        result.scores.push_back({m, report.rmse});
        result.reports.push_back(std::move(report));
    }
    const auto best = std::min_element(result.scores.begin(), result.scores.end(), [](const auto& a, const auto& b) {
        return a.rmse < b.rmse || (a.rmse == b.rmse && a.mtry < b.mtry);
    });
    result.best_mtry = best->mtry;
    return result;
}

nlohmann::json TrainedForest::to_json() const
{
    using nlohmann::json;
    json trees = json::array();
    for (std::size_t t = 0; t < trees_.size(); ++t) {
        json feature = json::array(), split = json::array(), left = json::array(), right = json::array(),
             value = json::array(), count = json::array();
        for (const auto& n : trees_[t].nodes()) {
            feature.push_back(n.feature);
            split.push_back(n.split);
            left.push_back(n.left);
            right.push_back(n.right);
            value.push_back(n.value);
            count.push_back(n.count);
        }
        trees.push_back({{"feature", feature}, {"split", split}, {"left", left}, {"right", right},
                         {"value", value}, {"count", count}, {"inbag", inbag_[t]}});
    }
    json doc = {{"schema", kForestSchema},
                {"config",
                 {{"n_trees", config_.n_trees},
                  {"mtry", config_.mtry},
                  {"min_node_size", config_.min_node_size},
                  {"seed", config_.seed},
                  {"bootstrap", config_.bootstrap}}},
                {"predictors", names_},
                {"trees", trees}};
    if (tuning_) {
        json scores = json::array();
        for (const auto& s : tuning_->scores) scores.push_back({{"mtry", s.mtry}, {"rmse", s.rmse}});
        doc["tuning"] = {{"best_mtry", tuning_->best_mtry}, {"scores", scores}};
    }
    return doc;
}

TrainedForest TrainedForest::from_json(const nlohmann::json& doc)
{
    try {
        if (doc.at("schema").get<std::string>() != kForestSchema)
            throw DataError(fmt::format("unsupported model schema '{}'", doc.at("schema").get<std::string>()));
        TrainedForest f;
        const auto& cfg = doc.at("config");
        f.config_.n_trees = cfg.at("n_trees").get<std::size_t>();
        f.config_.mtry = cfg.at("mtry").get<std::size_t>();
        f.config_.min_node_size = cfg.at("min_node_size").get<std::size_t>();
        f.config_.seed = cfg.at("seed").get<std::uint64_t>();
        f.config_.bootstrap = cfg.at("bootstrap").get<bool>();
        f.names_ = doc.at("predictors").get<std::vector<std::string>>();
        const auto p = static_cast<int>(f.names_.size());
        for (const auto& t : doc.at("trees")) {
            const auto feature = t.at("feature").get<std::vector<int>>();
            const auto split = t.at("split").get<std::vector<double>>();
            const auto left = t.at("left").get<std::vector<int>>();
            const auto right = t.at("right").get<std::vector<int>>();
            const auto value = t.at("value").get<std::vector<double>>();
            const auto count = t.at("count").get<std::vector<std::size_t>>();
            const auto m = feature.size();
            if (m == 0 || split.size() != m || left.size() != m || right.size() != m || value.size() != m ||
                count.size() != m)
                throw DataError("model tree arrays have inconsistent lengths");
            std::vector<TreeNode> nodes(m);
            for (std::size_t i = 0; i < m; ++i) {
                nodes[i] = {feature[i], split[i], left[i], right[i], value[i], count[i]};
                if (feature[i] >= p) throw DataError("model node references an unknown predictor");
                if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                                        left[i] >= static_cast<int>(m) || right[i] >= static_cast<int>(m)))
                    throw DataError("model node has invalid child links");
            }
            f.trees_.emplace_back(std::move(nodes));
            f.inbag_.push_back(t.at("inbag").get<std::vector<std::uint32_t>>());
        }
        if (f.trees_.size() != f.config_.n_trees) throw DataError("model tree count disagrees with its config");
        if (doc.contains("tuning")) {
            TuningResult tr;
            tr.best_mtry = doc["tuning"].at("best_mtry").get<std::size_t>();
            for (const auto& s : doc["tuning"].at("scores"))
                tr.scores.push_back({s.at("mtry").get<std::size_t>(), s.at("rmse").get<double>()});
            f.tuning_ = std::move(tr);
        }
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("malformed model document: {}", e.what()));
    }
}

}  // namespace aoa
