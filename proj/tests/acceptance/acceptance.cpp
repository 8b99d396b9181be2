// Acceptance run: one PASS/FAIL line per criterion. Usage: aoa_acceptance [config-dir]

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "aoa/applicability.hpp"
#include "aoa/catalogue.hpp"
#include "aoa/forest.hpp"
#include "aoa/simulation.hpp"
#include "gen.hpp"
#include "oracles.hpp"

using namespace aoa;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kCalibrationShare = 0.25;   // |mean diff at .95| <= share * mean cv_rmse
constexpr double kOutsideFraction = 0.85;    // scenarios with rmspe_out > rmspe_in
constexpr double kOutsideMedianRatio = 1.5;  // median rmspe_out / rmspe_in
constexpr std::size_t kClusterScenarios = 5;
constexpr std::size_t kClusterAoaWins = 4;
constexpr double kClusterRelative = 0.5;  // |rmspe_in - cv| / cv
constexpr double kWorkedExpected = 1.074;
constexpr double kWorkedTolerance = 0.001;
constexpr int kOracleInstances = 100;
constexpr double kOracleDiTolerance = 1e-10;
constexpr double kOracleTrainingTolerance = 1e-12;
constexpr double kImportanceRatio = 10.0;

int failures = 0;

void report(int id, bool pass, const std::string& detail)
{
    if (!pass) ++failures;
    fmt::print("criterion {}: {} {}\n", id, pass ? "PASS" : "FAIL", detail);
    std::fflush(stdout);
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

CatalogueResult run_config(const fs::path& path)
{
    const auto cfg = read_catalogue_config(path);
    const auto specs = build_catalogue(cfg);
    const auto start = std::chrono::steady_clock::now();
    auto result = run_catalogue(specs, 0);
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print("  {}: {} scenarios, {} failed, {:.0f} s\n", path.filename().string(), specs.size(),
               result.failures.size(), secs);
    return result;
}

void desk_catalogue(const fs::path& config)
{
    const auto cat = run_config(config);
    const auto inputs = cat.calibration_inputs();
    const auto table = calibrate_quantiles(inputs, kCalibrationQuantiles);
    double cv = 0.0;
    for (const auto& s : inputs) cv += s.cv_rmse;
    cv /= static_cast<double>(inputs.size());
    const double d25 = table.summary(0.25).mean, d50 = table.summary(0.50).mean, d95 = table.summary(0.95).mean;
    report(1,
           cat.failures.empty() && std::fabs(d95) < std::fabs(d25) && std::fabs(d95) < std::fabs(d50) &&
               std::fabs(d95) <= kCalibrationShare * cv,
           fmt::format("mean diff q.25={:.4f} q.50={:.4f} q.95={:.4f}; limit {:.4f} ({} x mean cv_rmse {:.4f})", d25,
                       d50, d95, kCalibrationShare * cv, kCalibrationShare, cv));

    std::size_t eligible = 0, worse = 0;
    std::vector<double> ratios;
    for (const auto& r : cat.results) {
        const auto& s = r.at_quantile(0.95);
        if (s.n_outside == 0 || s.n_inside == 0) continue;
        ++eligible;
        if (s.rmspe_out > s.rmspe_in) ++worse;
        ratios.push_back(s.rmspe_out / s.rmspe_in);
    }
    const double frac = eligible ? static_cast<double>(worse) / static_cast<double>(eligible) : 0.0;
    const double med = ratios.empty() ? 0.0 : median(ratios);
    report(2, eligible > 0 && frac >= kOutsideFraction && med > kOutsideMedianRatio,
           fmt::format("rmspe_out > rmspe_in in {}/{} ({:.3f}, need {}); median ratio {:.3f} (need > {})", worse,
                       eligible, frac, kOutsideFraction, med, kOutsideMedianRatio));

    double rw = 0.0, ru = 0.0;
    std::size_t n = 0;
    for (const auto& r : cat.results) {
        if (std::isnan(r.di_error_r) || std::isnan(r.di_uniform_error_r)) continue;
        rw += r.di_error_r;
        ru += r.di_uniform_error_r;
        ++n;
    }
    rw /= static_cast<double>(n);
    ru /= static_cast<double>(n);
    report(3, n > 0 && rw > ru,
           fmt::format("mean r(DI, |error|) weighted {:.4f} vs uniform {:.4f} over {} scenarios", rw, ru, n));
}

void clustered_contrast(const fs::path& config)
{
    const auto cfg = read_catalogue_config(config);
    const auto cat = run_config(config);
    std::size_t cv_wins = 0, aoa_wins = 0, within = 0;
    for (const auto& r : cat.results) {
        ForestConfig fc;
        fc.n_trees = cfg.trees;
        fc.min_node_size = cfg.min_node_size;
        fc.mtry = r.tuning.best_mtry;
        fc.seed = r.seeds.forest;
        const auto random_folds = assign_random_folds(r.samples.rows(), 10, r.seeds.folds);
        const auto random_cv = cross_validate(r.samples, random_folds, fc);
        const double lco = r.cv.rmse;
        if (lco > random_cv.rmse) ++cv_wins;

        const auto random_tdi = training_di(r.samples, random_folds, r.params, r.weights);
        const auto cluster_mask = aoa_mask(r.di, di_threshold(r.training, 0.95));
        const auto random_mask = aoa_mask(r.di, di_threshold(random_tdi, 0.95));
        if (cluster_mask.n_inside > random_mask.n_inside) ++aoa_wins;

        const double in_cluster = rmse(r.prediction.values, r.truth.values, cluster_mask.inside_flags());
        const double in_random = rmse(r.prediction.values, r.truth.values, random_mask.inside_flags());
        const double rel_cluster = std::fabs(in_cluster - lco) / lco;
        const double rel_random = std::fabs(in_random - random_cv.rmse) / random_cv.rmse;
        if (rel_cluster <= kClusterRelative && rel_random <= kClusterRelative) ++within;
        fmt::print("  {}: cv lco={:.4f} random={:.4f}; AOA cells lco={} random={}; rmspe_in lco={:.4f} random={:.4f}\n",
                   r.id, lco, random_cv.rmse, cluster_mask.n_inside, random_mask.n_inside, in_cluster, in_random);
    }
    const std::size_t n = cat.results.size();
    report(4, n == kClusterScenarios && cv_wins == n && aoa_wins >= kClusterAoaWins && within == n,
           fmt::format("(a) lco > random CV in {}/{}; (b) larger AOA in {}/{} (need {}); (c) within {:.0f}% in {}/{}",
                       cv_wins, n, aoa_wins, n, kClusterAoaWins, 100 * kClusterRelative, within, n));
}

void worked_example()
{
    // Two training points 2.29 apart; the query lies 2.46 from the nearer one.
    SampleTable t;
    t.predictor_names = {"a"};
    t.predictors.resize(2, 1);
    t.predictors << 0.0, 2.29;
    t.response = {0.0, 0.0};
    const auto params = fit_standardizer(t, t.predictor_names);
    Matrix q(1, 1);
    q << -2.46;
    const auto di = dissimilarity_index(q, t.predictor_names, t, params, ImportanceWeights::uniform(params.names));
    report(5, std::fabs(di[0] - kWorkedExpected) <= kWorkedTolerance,
           fmt::format("DI = {:.5f}, expected {} +/- {}", di[0], kWorkedExpected, kWorkedTolerance));
}

void oracle_equivalence()
{
    gen::Gen g(2024);
    double worst_di = 0.0, worst_training = 0.0;
    for (int rep = 0; rep < kOracleInstances; ++rep) {
        const std::size_t n = g.size(4, 50), p = g.size(1, 10);
        const auto t = g.table(n, p);
        const auto q = g.matrix(g.size(1, 30), p);
        const ImportanceWeights w{t.predictor_names, g.weights(p)};
        const auto params = fit_standardizer(t, t.predictor_names);
        const auto got = dissimilarity_index(q, t.predictor_names, t, params, w);
        const auto rows = gen::rows_of(t.predictors);
        const auto want = oracle::di(rows, gen::rows_of(q), w.values);
        for (std::size_t i = 0; i < got.size(); ++i) worst_di = std::max(worst_di, std::fabs(got[i] - want[i]));

        const auto folds = assign_random_folds(n, static_cast<int>(g.size(2, std::min<std::size_t>(n, 10))),
                                               static_cast<std::uint64_t>(rep));
        const auto tdi = training_di(t, folds, params, w);
        const auto twant = oracle::training_di(rows, folds.fold_of, w.values);
        for (std::size_t i = 0; i < n; ++i) worst_training = std::max(worst_training, std::fabs(tdi.di[i] - twant[i]));
    }
    report(6, worst_di <= kOracleDiTolerance && worst_training <= kOracleTrainingTolerance,
           fmt::format("{} instances; max |DI - oracle| {:.2e} (tol {:.0e}); max |training DI - oracle| {:.2e} (tol {:.0e})",
                       kOracleInstances, worst_di, kOracleDiTolerance, worst_training, kOracleTrainingTolerance));
}

void invariant_suite()
{
    doctest::Context ctx;
    ctx.setOption("test-case", "property:*");
    ctx.setOption("minimal", true);
    ctx.setOption("no-version", true);
    const int rc = ctx.run();
    report(7, rc == 0, "property test cases (100 generated cases each)");
}

void forest_sanity()
{
    gen::Gen g(8);
    SampleTable t;
    t.predictor_names = {"x1", "x2"};
    t.predictors.resize(200, 2);
    for (Eigen::Index i = 0; i < 200; ++i) {
        t.predictors(i, 0) = g.uniform(-3.0, 3.0);
        t.predictors(i, 1) = g.uniform(-3.0, 3.0);
        t.response.push_back(std::sin(t.predictors(i, 0)) + 0.0 * t.predictors(i, 1));
    }
    ForestConfig c;
    c.seed = 8;
    const auto f = train_forest(t, c);
    const auto imp = permutation_importance_raw(f, t, 9);

    Matrix q(2000, 2);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        q(i, 0) = g.uniform(-10.0, 10.0);
        q(i, 1) = g.uniform(-10.0, 10.0);
    }
    const auto [lo, hi] = std::minmax_element(t.response.begin(), t.response.end());
    bool bounded = true;
    for (const auto& pts : {q, t.predictors})
        for (double p : f.predict(pts)) bounded = bounded && p >= *lo && p <= *hi;
    report(8, imp[0] >= kImportanceRatio * std::fabs(imp[1]) && bounded,
           fmt::format("importance x1 {:.4g}, |x2| {:.4g}, ratio {:.1f} (need {}); predictions within [{:.4f}, {:.4f}]: {}",
                       imp[0], std::fabs(imp[1]), imp[0] / std::max(std::fabs(imp[1]), 1e-300), kImportanceRatio,
                       *lo, *hi, bounded ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv)
{
    const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path("config");
    spdlog::set_level(spdlog::level::err);
    desk_catalogue(config / "desk_catalogue.cfg");
    clustered_contrast(config / "clustered.cfg");
    worked_example();
    oracle_equivalence();
    invariant_suite();
    forest_sanity();
    fmt::print("{} of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
