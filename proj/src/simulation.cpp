#include "aoa/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "aoa/parallel.hpp"
#include "aoa/rng.hpp"

namespace aoa {

GridGeometry FieldSpec::geometry() const
{
    GridGeometry g;
    g.rows = rows;
    g.cols = cols;
    g.cellsize = cellsize;
    return g;
}

void FieldSpec::validate() const
{
    if (rows == 0 || cols == 0 || !(cellsize > 0.0))
        throw UsageError(fmt::format("degenerate field geometry {}x{} cellsize {}", rows, cols, cellsize));
    if (predictors.size() < 6)
        throw UsageError(fmt::format("field needs at least 6 predictors, got {}", predictors.size()));
    std::set<std::string> names;
    for (std::size_t j = 0; j < predictors.size(); ++j) {
        const auto& r = predictors[j];
        if (!names.insert(r.name).second) throw UsageError(fmt::format("duplicate predictor name '{}'", r.name));
        if (r.min_bumps > r.max_bumps) throw UsageError(fmt::format("'{}': min_bumps > max_bumps", r.name));
        if (!(r.min_amplitude > 0.0) || r.max_amplitude < r.min_amplitude)
            throw UsageError(fmt::format("'{}': amplitudes must be positive and ordered", r.name));
        if (!(r.min_width > 0.0) || r.max_width < r.min_width)
            throw UsageError(fmt::format("'{}': widths must be positive and ordered", r.name));
        if (r.parent && *r.parent >= j)
            throw UsageError(fmt::format("'{}': parent must be an earlier predictor", r.name));
        if (r.noise_sd < 0.0) throw UsageError(fmt::format("'{}': negative noise sd", r.name));
    }
}

FieldSpec FieldSpec::desk_default(std::size_t rows, std::size_t cols, std::size_t p, std::uint64_t seed,
                                  double max_trend)
{
    FieldSpec spec;
    spec.rows = rows;
    spec.cols = cols;
    spec.seed = seed;
    auto rng = make_rng(seed, {tag(Stream::Field), 0xdeca});
    std::uniform_real_distribution<double> trend(-max_trend, max_trend);
    for (std::size_t j = 0; j < p; ++j) {
        PredictorRecipe r;
        r.name = fmt::format("pred{:02}", j + 1);
        r.offset = 10.0 * static_cast<double>(j);
        r.trend_x = trend(rng);
        r.trend_y = trend(rng);
        spec.predictors.push_back(r);
    }
    // Correlated pairs within the response subset, as among climate
    // variables. Distractors stay independent.
    if (p >= 2) {
        spec.predictors[1].parent = 0;
        spec.predictors[1].parent_coef = 0.7;
        spec.predictors[1].noise_sd = 0.02;
    }
    if (p >= 5) {
        spec.predictors[4].parent = 3;
        spec.predictors[4].parent_coef = -0.6;
        spec.predictors[4].noise_sd = 0.02;
    }
    return spec;
}

PredictorStack generate_predictor_stack(const FieldSpec& spec)
{
    spec.validate();
    const auto geom = spec.geometry();
    PredictorStack stack(geom);
    std::vector<Grid> layers;
    for (std::size_t j = 0; j < spec.predictors.size(); ++j) {
        const auto& r = spec.predictors[j];
        auto rng = make_rng(spec.seed, {tag(Stream::Field), j});
        Grid g(geom, r.offset);
        for (std::size_t row = 0; row < geom.rows; ++row)
            for (std::size_t col = 0; col < geom.cols; ++col)
                g.at(row, col) += r.trend_x * static_cast<double>(col) + r.trend_y * static_cast<double>(row);

        std::uniform_int_distribution<std::size_t> bump_count(r.min_bumps, r.max_bumps);
        std::uniform_real_distribution<double> amp(r.min_amplitude, r.max_amplitude);
        std::uniform_real_distribution<double> width(r.min_width, r.max_width);
        std::uniform_real_distribution<double> cy(0.0, static_cast<double>(geom.rows));
        std::uniform_real_distribution<double> cx(0.0, static_cast<double>(geom.cols));
        std::bernoulli_distribution sign(0.5);
        const std::size_t k = bump_count(rng);
        for (std::size_t b = 0; b < k; ++b) {
            const double a = amp(rng) * (sign(rng) ? 1.0 : -1.0);
            const double w = width(rng);
            const double y0 = cy(rng), x0 = cx(rng);
            const double inv = 1.0 / (2.0 * w * w);
            for (std::size_t row = 0; row < geom.rows; ++row) {
                const double dy = static_cast<double>(row) + 0.5 - y0;
                for (std::size_t col = 0; col < geom.cols; ++col) {
                    const double dx = static_cast<double>(col) + 0.5 - x0;
                    g.at(row, col) += a * std::exp(-(dx * dx + dy * dy) * inv);
                }
            }
        }
        if (r.parent) {
            const auto& parent = layers[*r.parent];
            for (std::size_t c = 0; c < g.size(); ++c) g.values[c] += r.parent_coef * parent.values[c];
        }
        if (r.noise_sd > 0.0) {
            std::normal_distribution<double> noise(0.0, r.noise_sd);
            for (auto& v : g.values) v += noise(rng);
        }
        layers.push_back(g);
        stack.add(r.name, std::move(g));
    }
    return stack;
}

PcaResult pca_first_two(const PredictorStack& stack, std::span<const std::size_t> subset)
{
    const std::size_t q = subset.size();
    if (q < 2) throw DataError("PCA needs a subset of at least 2 predictors");
    for (auto j : subset)
        if (j >= stack.layer_count()) throw DataError(fmt::format("PCA subset index {} out of range", j));

    std::vector<std::size_t> valid;
    for (std::size_t c = 0; c < stack.cells(); ++c)
        if (!stack.missing(c)) valid.push_back(c);
    const std::size_t m = valid.size();
    if (m < 3) throw DataError("PCA needs at least 3 valid cells");

    Eigen::MatrixXd z(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(q));
    for (std::size_t k = 0; k < q; ++k) {
        const auto& layer = stack.layer(subset[k]);
        for (std::size_t i = 0; i < m; ++i)
            z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = layer.values[valid[i]];
        auto col = z.col(static_cast<Eigen::Index>(k));
        const double mean = col.mean();
        col.array() -= mean;
        const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(m - 1));
        if (!(sd > 0.0))
            throw DataError(fmt::format("PCA predictor '{}' is constant", stack.names()[subset[k]]));
        col /= sd;
    }
    const Eigen::MatrixXd corr = (z.transpose() * z) / static_cast<double>(m - 1);
    for (std::size_t a = 0; a < q; ++a)
        for (std::size_t b = a + 1; b < q; ++b)
            if (std::abs(corr(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) >= 1.0 - 1e-10)
                throw DataError(fmt::format("PCA predictors '{}' and '{}' are perfectly correlated",
                                            stack.names()[subset[a]], stack.names()[subset[b]]));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    if (eig.info() != Eigen::Success) throw DataError("PCA eigen-decomposition failed");
    const auto& values = eig.eigenvalues();  // ascending
    const Eigen::Index top = static_cast<Eigen::Index>(q) - 1;
    if (values(top - 1) <= 1e-10 * std::max(1.0, values(top)))
        throw DataError("PCA subset has rank below 2");

    PcaResult out;
    out.pc1 = Grid(stack.geometry());
    out.pc2 = Grid(stack.geometry());
    for (int comp = 0; comp < 2; ++comp) {
        Eigen::VectorXd v = eig.eigenvectors().col(top - comp);
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            if (v(k) != 0.0) {
                if (v(k) < 0.0) v = -v;
                break;
            }
        }
        out.variance[static_cast<std::size_t>(comp)] = values(top - comp);
        out.loadings[static_cast<std::size_t>(comp)].assign(v.data(), v.data() + v.size());
        const Eigen::VectorXd scores = z * v;
        Grid& target = comp == 0 ? out.pc1 : out.pc2;
        for (std::size_t i = 0; i < m; ++i) target.values[valid[i]] = scores(static_cast<Eigen::Index>(i));
    }
    return out;
}

void ResponseSpec::validate(std::size_t p) const
{
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw UsageError("response sds must be > 0");
    if (subset.size() < 2) throw UsageError("response subset needs at least 2 predictors");
    std::set<std::size_t> seen;
    for (auto j : subset) {
        if (j >= p) throw UsageError(fmt::format("response subset index {} out of range (p={})", j, p));
        if (!seen.insert(j).second) throw UsageError(fmt::format("response subset repeats index {}", j));
    }
}

Grid combined_suitability(const Grid& pc1, const Grid& pc2, const ResponseSpec& rs)
{
    if (!pc1.geometry.same_layout(pc2.geometry)) throw DataError("PC score grids differ in geometry");
    if (!(rs.sigma1 > 0.0) || !(rs.sigma2 > 0.0)) throw UsageError("response sds must be > 0");
    Grid out(pc1.geometry);
    for (std::size_t c = 0; c < pc1.size(); ++c) {
        const double a = pc1.values[c], b = pc2.values[c];
        if (std::isnan(a) || std::isnan(b)) continue;
        const double g1 = std::exp(-(a - rs.mu1) * (a - rs.mu1) / (2.0 * rs.sigma1 * rs.sigma1));
        const double g2 = std::exp(-(b - rs.mu2) * (b - rs.mu2) / (2.0 * rs.sigma2 * rs.sigma2));
        out.values[c] = rs.combination == Combination::Multiplicative ? g1 * g2 : 0.5 * (g1 + g2);
    }
    return out;
}

Grid gaussian_response(const Grid& pc1, const Grid& pc2, const ResponseSpec& rs)
{
    Grid g = combined_suitability(pc1, pc2, rs);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : g.values)
        if (!std::isnan(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(hi > lo)) throw DataError("combined response surface is constant; cannot rescale to [0, 1]");
    for (auto& v : g.values)
        if (!std::isnan(v)) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return g;
}

namespace {

std::vector<std::size_t> valid_cells(const PredictorStack& stack, const Grid& truth)
{
    if (!truth.geometry.same_layout(stack.geometry())) throw DataError("truth grid geometry differs from stack");
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < stack.cells(); ++c)
        if (!stack.missing(c) && !std::isnan(truth.values[c])) out.push_back(c);
    return out;
}

SampleTable extract(const PredictorStack& stack, const Grid& truth, std::span<const std::size_t> cells)
{
    SampleTable t;
    t.predictor_names = stack.names();
    t.predictors.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(stack.layer_count()));
    const auto& g = stack.geometry();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto c = cells[i];
        for (std::size_t j = 0; j < stack.layer_count(); ++j)
            t.predictors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = stack.layer(j).values[c];
        t.x.push_back(g.cell_x(c % g.cols));
        t.y.push_back(g.cell_y(c / g.cols));
        t.response.push_back(truth.values[c]);
    }
    return t;
}

}  // namespace

SampleTable sample_random(const PredictorStack& stack, const Grid& truth, std::size_t n, std::uint64_t seed)
{
    auto cells = valid_cells(stack, truth);
    if (n > cells.size())
        throw DataError(fmt::format("cannot sample {} cells from {} valid cells", n, cells.size()));
    auto rng = make_rng(seed, {tag(Stream::Sampling)});
    for (std::size_t k = 0; k < n; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, cells.size() - 1);
        std::swap(cells[k], cells[pick(rng)]);
    }
    cells.resize(n);
    return extract(stack, truth, cells);
}

SampleTable sample_clustered(const PredictorStack& stack, const Grid& truth, std::size_t n_clusters,
                             std::size_t per_cluster, double radius, std::uint64_t seed)
{
    if (n_clusters < 2) throw UsageError("clustered sampling needs at least 2 clusters");
    if (!(radius >= 1.0)) throw UsageError(fmt::format("cluster radius must be >= 1 cell, got {}", radius));
    if (per_cluster < 1) throw UsageError("clusters need at least one member");
    const auto cells = valid_cells(stack, truth);
    if (n_clusters > cells.size()) throw DataError("more clusters than valid cells");
    const auto& g = stack.geometry();
    std::vector<bool> valid(stack.cells(), false);
    for (auto c : cells) valid[c] = true;
    std::vector<bool> taken(stack.cells(), false);

    auto rng = make_rng(seed, {tag(Stream::Sampling), 1});
    std::vector<std::size_t> chosen;
    std::vector<int> cluster_id;
    const auto reach = static_cast<long>(std::floor(radius));
    for (std::size_t k = 0; k < n_clusters; ++k) {
        std::vector<std::size_t> free;
        for (auto c : cells)
            if (!taken[c]) free.push_back(c);
        if (free.empty()) throw DataError("no free cells left for a cluster parent");
        std::uniform_int_distribution<std::size_t> pick_parent(0, free.size() - 1);
        const auto parent = free[pick_parent(rng)];
        const long pr = static_cast<long>(parent / g.cols), pc = static_cast<long>(parent % g.cols);

        std::vector<std::size_t> disc;
        for (long dr = -reach; dr <= reach; ++dr)
            for (long dc = -reach; dc <= reach; ++dc) {
                const long r = pr + dr, c = pc + dc;
                if (r < 0 || c < 0 || r >= static_cast<long>(g.rows) || c >= static_cast<long>(g.cols)) continue;
                if (static_cast<double>(dr * dr + dc * dc) > radius * radius) continue;
                const auto cell = static_cast<std::size_t>(r) * g.cols + static_cast<std::size_t>(c);
                if (valid[cell] && !taken[cell]) disc.push_back(cell);
            }
        if (disc.size() < per_cluster)
            throw DataError(fmt::format("cluster {} has only {} free cells within radius {}, needs {}", k,
                                        disc.size(), radius, per_cluster));
        for (std::size_t m = 0; m < per_cluster; ++m) {
            std::uniform_int_distribution<std::size_t> pick(m, disc.size() - 1);
            std::swap(disc[m], disc[pick(rng)]);
            taken[disc[m]] = true;
            chosen.push_back(disc[m]);
            cluster_id.push_back(static_cast<int>(k));
        }
    }
    auto table = extract(stack, truth, chosen);
    table.cluster = std::move(cluster_id);
    return table;
}

std::vector<double> ScenarioResult::error() const
{
    std::vector<double> e(truth.size(), kMissing);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = prediction.values[i] - truth.values[i];
    return e;
}

const QuantileStats& ScenarioResult::at_quantile(double q) const
{
    for (const auto& s : stats)
        if (std::abs(s.quantile - q) < 1e-12) return s;
    throw UsageError(fmt::format("scenario '{}' has no statistics for quantile {}", id, q));
}

ScenarioErrors ScenarioResult::calibration_input() const
{
    return {id, cv.rmse, error(), di.values, training.di};
}

namespace {

double abs_error_correlation(const Grid& di, std::span<const double> error)
{
    std::vector<double> a, b;
    for (std::size_t i = 0; i < error.size(); ++i)
        if (!std::isnan(di.values[i]) && !std::isnan(error[i])) {
            a.push_back(di.values[i]);
            b.push_back(std::abs(error[i]));
        }
    try {
        return pearson_r(a, b);
    } catch (const DataError&) {
        return kMissing;
    }
}

ScenarioResult run_scenario_impl(const ScenarioSpec& spec)
{
    ScenarioResult res;
    res.id = spec.id;
    res.seeds.field = spec.field.seed;
    res.seeds.sampling = derive_seed(spec.seed, {tag(Stream::Sampling)});
    res.seeds.folds = derive_seed(spec.seed, {tag(Stream::Folds)});
    res.seeds.forest = derive_seed(spec.seed, {tag(Stream::Forest)});
    res.seeds.importance = derive_seed(spec.seed, {tag(Stream::Importance)});

    auto stack = generate_predictor_stack(spec.field);
    spec.response.validate(stack.layer_count());
    const auto pca = pca_first_two(stack, spec.response.subset);
    res.truth = gaussian_response(pca.pc1, pca.pc2, spec.response);
    if (spec.leak_response) stack.add("leak", res.truth);

    const auto& s = spec.sampling;
    res.samples = s.design == SamplingDesign::Random
                      ? sample_random(stack, res.truth, s.n, res.seeds.sampling)
                      : sample_clustered(stack, res.truth, s.n_clusters, s.per_cluster, s.radius, res.seeds.sampling);
    const auto n = res.samples.rows();

    FoldAssignment folds;
    switch (spec.cv.strategy) {
    case FoldStrategy::RandomK: folds = assign_random_folds(n, std::min<int>(spec.cv.k, static_cast<int>(n)), res.seeds.folds); break;
    case FoldStrategy::Cluster:
        if (!res.samples.cluster) throw UsageError("leave-cluster-out CV needs a clustered sampling design");
        folds = assign_cluster_folds(*res.samples.cluster);
        break;
    case FoldStrategy::LeaveOneOut: folds = assign_loo_folds(n); break;
    case FoldStrategy::Explicit: throw UsageError("scenarios cannot use explicit fold files");
    }
    res.samples.fold = folds.fold_of;

    const std::size_t p = stack.layer_count();
    ForestConfig cfg;
    cfg.n_trees = spec.model.n_trees;
    cfg.min_node_size = spec.model.min_node_size;
    cfg.seed = res.seeds.forest;
    cfg.threads = spec.threads;
    std::vector<std::size_t> grid;
    for (auto m : spec.model.mtry_grid)
        if (m >= 1 && m <= p) grid.push_back(m);
    if (spec.model.mtry_grid.empty())
        for (std::size_t m = std::min<std::size_t>(2, p); m <= p; ++m) grid.push_back(m);
    if (grid.empty()) grid.push_back(std::max<std::size_t>(1, p / 3));

    res.tuning = tune_mtry(res.samples, grid, folds, cfg);
    res.cv = res.tuning.best_report();
    cfg.mtry = res.tuning.best_mtry;
    const auto forest = train_forest(res.samples, cfg);

    res.raw_importance = permutation_importance_raw(forest, res.samples, res.seeds.importance);
    res.weights = weights_from_importance(forest.predictor_names(), res.raw_importance);

    res.params = fit_standardizer(res.samples, stack.names());
    const DissimilarityModel model(res.samples, res.params, res.weights);
    res.di = di_grid(stack, model, spec.threads);
    res.training = training_di(res.samples, folds, res.params, res.weights, spec.quantiles);
    const DissimilarityModel uniform(res.samples, res.params, ImportanceWeights::uniform(res.params.names));
    res.di_uniform = di_grid(stack, uniform, spec.threads);

    const Matrix cells = stack.cell_matrix(forest.predictor_names());
    res.prediction = Grid(stack.geometry());
    res.prediction.values = forest.predict(cells, spec.threads);
    if (spec.ensemble_sd) {
        Grid sd(stack.geometry());
        sd.values = forest.ensemble_sd(cells, spec.threads);
        res.ensemble_sd = std::move(sd);
    }

    const auto err = res.error();
    for (double q : spec.quantiles) {
        QuantileStats qs;
        qs.quantile = q;
        qs.threshold = di_threshold(res.training, q);
        const auto mask = aoa_mask(res.di, qs.threshold, q);
        qs.n_inside = mask.n_inside;
        qs.n_outside = mask.n_outside;
        if (mask.n_inside > 0) qs.rmspe_in = rmse(res.prediction.values, res.truth.values, mask.inside_flags());
        if (mask.n_outside > 0) qs.rmspe_out = rmse(res.prediction.values, res.truth.values, mask.outside_flags());
        res.stats.push_back(qs);
    }
    res.di_error_r = abs_error_correlation(res.di, err);
    res.di_uniform_error_r = abs_error_correlation(res.di_uniform, err);
    if (spec.keep_stack) res.stack = std::move(stack);
    return res;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec)
{
    try {
        return run_scenario_impl(spec);
    } catch (const UsageError& e) {
        throw UsageError(fmt::format("scenario '{}': {}", spec.id, e.what()));
    } catch (const std::exception& e) {
        throw DataError(fmt::format("scenario '{}': {}", spec.id, e.what()));
    }
}

std::vector<ScenarioErrors> CatalogueResult::calibration_inputs() const
{
    std::vector<ScenarioErrors> out;
    out.reserve(results.size());
    for (const auto& r : results) out.push_back(r.calibration_input());
    return out;
}

CatalogueResult run_catalogue(const std::vector<ScenarioSpec>& specs, unsigned threads, const ProgressFn& progress)
{
    if (specs.empty()) throw UsageError("catalogue has no scenarios");
    std::vector<std::optional<ScenarioResult>> slots(specs.size());
    std::vector<std::optional<std::string>> errors(specs.size());
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    parallel_for(specs.size(), threads, [&](std::size_t i) {
        try {
            slots[i] = run_scenario(specs[i]);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
        const auto finished = ++done;
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(finished, specs.size(), specs[i].id);
        }
    });
    CatalogueResult out;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (slots[i]) {
            out.results.push_back(std::move(*slots[i]));
        } else {
            spdlog::warn("{}", *errors[i]);
            out.failures.push_back({specs[i].id, *errors[i]});
        }
    }
    if (out.results.empty()) throw DataError(fmt::format("all {} catalogue scenarios failed", specs.size()));
    return out;
}

}  // namespace aoa
