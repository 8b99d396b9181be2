#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aoa/applicability.hpp"
#include "aoa/forest.hpp"
#include "aoa/io.hpp"
#include "gen.hpp"
#include "oracles.hpp"

// Randomized properties, 100 cases each, seeded for reproducibility.

using namespace aoa;

namespace {

constexpr int kCases = 100;

struct Instance {
    SampleTable train;
    Matrix queries;
    ImportanceWeights weights;
};

Instance instance(gen::Gen& g)
{
    const std::size_t p = g.size(1, 5), n = g.size(3, 25);
    Instance in;
    in.train = g.table(n, p);
    in.queries = g.matrix(g.size(1, 15), p);
    in.weights = ImportanceWeights{in.train.predictor_names, g.weights(p)};
    return in;
}

std::vector<double> di_of(const Instance& in, const ImportanceWeights& w)
{
    const auto params = fit_standardizer(in.train, in.train.predictor_names);
    return dissimilarity_index(in.queries, in.train.predictor_names, in.train, params, w);
}

bool close(double a, double b, double rel) { return std::fabs(a - b) <= rel * std::max(1.0, std::fabs(b)); }

}  // namespace

TEST_CASE("property: DI matches the brute-force oracle")
{
    gen::Gen g(61);
    for (int rep = 0; rep < kCases; ++rep) {
        const auto in = instance(g);
        const auto got = di_of(in, in.weights);
        const auto want = oracle::di(gen::rows_of(in.train.predictors), gen::rows_of(in.queries), in.weights.values);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(close(got[i], want[i], 1e-10));
    }
}

TEST_CASE("property: DI is invariant to a common weight scale")
{
    gen::Gen g(62);
    for (int rep = 0; rep < kCases; ++rep) {
        const auto in = instance(g);
        const double c = g.uniform(0.01, 100.0);
        const auto a = di_of(in, in.weights);
        const auto b = di_of(in, in.weights.scaled(c));
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(close(a[i], b[i], 1e-10));
    }
}

TEST_CASE("property: DI is invariant to per-predictor affine changes of units")
{
    gen::Gen g(63);
    for (int rep = 0; rep < kCases; ++rep) {
        auto in = instance(g);
        const auto a = di_of(in, in.weights);
        for (Eigen::Index j = 0; j < in.train.predictors.cols(); ++j) {
            const double s = g.uniform(0.01, 100.0) * (g.integer(0, 1) ? 1.0 : -1.0), o = g.uniform(-1e3, 1e3);
            in.train.predictors.col(j) = (in.train.predictors.col(j).array() * s + o).matrix();
            in.queries.col(j) = (in.queries.col(j).array() * s + o).matrix();
        }
        const auto b = di_of(in, in.weights);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(close(a[i], b[i], 1e-8));
    }
}

TEST_CASE("property: DI is nonnegative and zero at training points")
{
    gen::Gen g(64);
    for (int rep = 0; rep < kCases; ++rep) {
        auto in = instance(g);
        in.queries = in.train.predictors;
        const auto d = di_of(in, in.weights);
        for (double v : d) CHECK(std::fabs(v) <= 1e-12);
        auto other = instance(g);
        for (double v : di_of(other, other.weights)) CHECK(v >= 0.0);
    }
}

TEST_CASE("property: a zero-weight predictor does not affect DI")
{
    gen::Gen g(65);
    for (int rep = 0; rep < kCases; ++rep) {
        auto in = instance(g);
        if (in.weights.values.size() < 2) continue;
        const std::size_t j = g.size(0, in.weights.values.size() - 1);
        in.weights.values[j] = 0.0;
        const auto a = di_of(in, in.weights);
        for (Eigen::Index i = 0; i < in.queries.rows(); ++i)
            in.queries(i, static_cast<Eigen::Index>(j)) = g.uniform(-1e4, 1e4);
        const auto b = di_of(in, in.weights);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(close(a[i], b[i], 1e-10));
    }
}

TEST_CASE("property: excluding a fold never shortens the nearest distance")
{
    gen::Gen g(66);
    for (int rep = 0; rep < kCases; ++rep) {
        const std::size_t n = g.size(4, 30);
        const auto t = g.table(n, g.size(1, 4));
        const auto params = fit_standardizer(t, t.predictor_names);
        const auto folds = assign_random_folds(n, static_cast<int>(g.size(2, 4)), rep);
        const auto scaled = standardize(t, params);
        const auto w = apply_weights(scaled, ImportanceWeights::uniform(params.names), folds.fold_of);
        const auto q = standardize(g.matrix(1, t.predictor_names.size()), t.predictor_names, params);
        const std::span<const double> row(q.data(), static_cast<std::size_t>(q.cols()));
        const double all = nearest_training_distance(row, w);
        for (int k = 0; k < folds.k; ++k) CHECK(nearest_training_distance(row, w, k) >= all);
    }
}

TEST_CASE("property: thresholds are monotone in the quantile and AOAs nest")
{
    gen::Gen g(67);
    for (int rep = 0; rep < kCases; ++rep) {
        std::vector<double> tdi(g.size(2, 60));
        for (auto& v : tdi) v = std::exp(g.normal(-1.0, 0.7));
        double q1 = g.uniform(0.01, 1.0), q2 = g.uniform(0.01, 1.0);
        if (q1 > q2) std::swap(q1, q2);
        const double t1 = di_threshold(tdi, q1), t2 = di_threshold(tdi, q2);
        CHECK(t1 <= t2);
        GridGeometry geom;
        geom.rows = 5;
        geom.cols = 8;
        Grid di(geom);
        for (auto& v : di.values) v = g.integer(0, 9) == 0 ? kMissing : std::exp(g.normal(-1.0, 0.8));
        const auto m1 = aoa_mask(di, t1), m2 = aoa_mask(di, t2);
        for (std::size_t c = 0; c < geom.cells(); ++c)
            if (m1.inside(c)) CHECK(m2.inside(c));
        CHECK(m1.n_missing == m2.n_missing);
        CHECK(m1.n_inside + m1.n_outside + m1.n_missing == geom.cells());
    }
}

TEST_CASE("property: random folds partition the rows with balanced sizes")
{
    gen::Gen g(68);
    for (int rep = 0; rep < kCases; ++rep) {
        const std::size_t n = g.size(2, 200);
        const int k = static_cast<int>(g.size(2, n));
        const auto f = assign_random_folds(n, k, static_cast<std::uint64_t>(rep));
        CHECK(f.fold_of.size() == n);
        std::size_t lo = n, hi = 0, total = 0;
        for (int j = 0; j < k; ++j) {
            const auto m = f.members(j).size();
            lo = std::min(lo, m);
            hi = std::max(hi, m);
            total += m;
        }
        CHECK(total == n);
        CHECK(lo >= 1);
        CHECK(hi - lo <= 1);

        std::vector<int> labels(n);
        for (auto& l : labels) l = g.integer(0, 6);
        if (std::set<int>(labels.begin(), labels.end()).size() < 2) continue;
        const auto c = assign_cluster_folds(labels);
        for (std::size_t i = 0; i + 1 < n; ++i) CHECK((labels[i] == labels[i + 1]) == (c.fold_of[i] == c.fold_of[i + 1]));
    }
}

TEST_CASE("property: forest predictions do not depend on the thread count")
{
    gen::Gen g(69);
    for (int rep = 0; rep < kCases; ++rep) {
        const auto t = g.table(g.size(10, 30), g.size(1, 4));
        ForestConfig c;
        c.n_trees = 8;
        c.min_node_size = 2;
        c.seed = static_cast<std::uint64_t>(rep);
        c.threads = 1;
        const auto a = train_forest(t, c);
        c.threads = 3;
        const auto b = train_forest(t, c);
        const auto q = g.matrix(5, t.predictor_names.size());
        CHECK(a.predict(q) == b.predict(q, 3));
        CHECK(a.inbag() == b.inbag());
    }
}

TEST_CASE("property: grids, samples and models round-trip")
{
    gen::Gen g(70);
    for (int rep = 0; rep < kCases; ++rep) {
        GridGeometry geom;
        geom.rows = g.size(1, 12);
        geom.cols = g.size(1, 12);
        geom.cellsize = g.uniform(0.5, 100.0);
        geom.xllcorner = g.uniform(-1e5, 1e5);
        Grid grid(geom);
        for (auto& v : grid.values) v = g.integer(0, 7) == 0 ? kMissing : g.normal(0.0, 1e3);
        std::ostringstream out;
        io::write_grid(out, grid, 17);
        std::istringstream in(out.str());
        const auto back = io::read_grid(in);
        CHECK(back.geometry.same_layout(geom));
        for (std::size_t c = 0; c < grid.size(); ++c)
            CHECK((std::isnan(grid.values[c]) ? std::isnan(back.values[c]) : back.values[c] == grid.values[c]));

        const auto t = g.table(g.size(2, 20), g.size(1, 4));
        std::ostringstream csv;
        io::write_samples(csv, t);
        std::istringstream csv_in(csv.str());
        const auto tb = io::read_samples(csv_in);
        CHECK(tb.predictors == t.predictors);
        CHECK(tb.response == t.response);

        ForestConfig fc;
        fc.n_trees = 3;
        fc.min_node_size = 1;
        const auto f = train_forest(t, fc);
        const auto f2 = TrainedForest::from_json(nlohmann::json::parse(f.to_json().dump()));
        CHECK(f2.predict(t.predictors) == f.predict(t.predictors));
    }
}
