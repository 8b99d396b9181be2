// aoa: command-line front end for training, cross-validation, dissimilarity
// index grids, area-of-applicability masks and simulation experiments.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "aoa/applicability.hpp"
#include "aoa/catalogue.hpp"
#include "aoa/forest.hpp"
#include "aoa/io.hpp"
#include "aoa/predictor_space.hpp"
#include "aoa/rng.hpp"
#include "aoa/simulation.hpp"
#include "aoa/validation.hpp"

namespace fs = std::filesystem;
using namespace aoa;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct FoldSpec {
    FoldStrategy strategy = FoldStrategy::RandomK;
    int k = 10;
    std::string column;
};

FoldSpec parse_fold_spec(const std::string& text)
{
    const auto colon = text.find(':');
    const auto kind = text.substr(0, colon);
    const auto arg = colon == std::string::npos ? std::string{} : text.substr(colon + 1);
    auto value_of = [&](const std::string& key) {
        if (arg.rfind(key + "=", 0) != 0)
            throw UsageError(fmt::format("--folds '{}': expected '{}:{}=...'", text, kind, key));
        return arg.substr(key.size() + 1);
    };
    FoldSpec spec;
    if (kind == "random") {
        spec.strategy = FoldStrategy::RandomK;
        if (!arg.empty()) {
            const auto v = value_of("k");
            try {
                std::size_t used = 0;
                spec.k = std::stoi(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::logic_error&) {
                throw UsageError(fmt::format("--folds '{}': k must be an integer", text));
            }
        }
    } else if (kind == "cluster") {
        spec.strategy = FoldStrategy::Cluster;
        spec.column = value_of("col");
    } else if (kind == "file") {
        spec.strategy = FoldStrategy::Explicit;
        spec.column = value_of("col");
    } else if (kind == "loo") {
        spec.strategy = FoldStrategy::LeaveOneOut;
    } else {
        throw UsageError(fmt::format("--folds '{}': expected random:k=N, cluster:col=NAME, file:col=NAME or loo", text));
    }
    if ((spec.strategy == FoldStrategy::Cluster || spec.strategy == FoldStrategy::Explicit) && spec.column.empty())
        throw UsageError(fmt::format("--folds '{}': column name is empty", text));
    return spec;
}

int precedence(FoldStrategy s)
{
    switch (s) {
    case FoldStrategy::Explicit: return 3;
    case FoldStrategy::Cluster: return 2;
    case FoldStrategy::LeaveOneOut: return 1;
    case FoldStrategy::RandomK: return 0;
    }
    return 0;
}

/// Highest-precedence spec among those given: file > cluster > loo > random.
FoldSpec choose_fold_spec(const std::vector<std::string>& texts)
{
    if (texts.empty()) return {};
    std::optional<FoldSpec> best;
    for (const auto& t : texts) {
        auto s = parse_fold_spec(t);
        if (!best || precedence(s.strategy) > precedence(best->strategy)) best = s;
    }
    return *best;
}

/// Removes the named label column from the table and returns it as integers.
/// `fold` and `cluster` are read from their dedicated slots.
std::vector<int> take_label_column(SampleTable& table, const std::string& name)
{
    if (name == "fold" && table.fold) return *table.fold;
    if (name == "cluster" && table.cluster) return *table.cluster;
    const auto j = table.index_of(name);
    if (!j) throw DataError(fmt::format("samples have no column '{}'", name));
    std::vector<int> labels(table.rows());
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const double v = table.predictors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*j));
        if (v != std::floor(v)) throw DataError(fmt::format("column '{}' row {}: {} is not an integer label", name, i + 1, v));
        labels[i] = static_cast<int>(v);
    }
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < table.predictor_names.size(); ++c)
        if (c != *j) keep.push_back(c);
    Matrix reduced(table.predictors.rows(), static_cast<Eigen::Index>(keep.size()));
    std::vector<std::string> names;
    for (std::size_t c = 0; c < keep.size(); ++c) {
        reduced.col(static_cast<Eigen::Index>(c)) = table.predictors.col(static_cast<Eigen::Index>(keep[c]));
        names.push_back(table.predictor_names[keep[c]]);
    }
    table.predictors = std::move(reduced);
    table.predictor_names = std::move(names);
    return labels;
}

FoldAssignment build_folds(SampleTable& table, const FoldSpec& spec, std::uint64_t seed)
{
    FoldAssignment folds;
    switch (spec.strategy) {
    case FoldStrategy::RandomK:
        folds = assign_random_folds(table.rows(), spec.k, derive_seed(seed, {tag(Stream::Folds)}));
        break;
    case FoldStrategy::Cluster: folds = assign_cluster_folds(take_label_column(table, spec.column)); break;
    case FoldStrategy::LeaveOneOut: folds = assign_loo_folds(table.rows()); break;
    case FoldStrategy::Explicit:
        folds = folds_from_labels(take_label_column(table, spec.column));
        folds.validate();
        break;
    }
    spdlog::info("folds: {}", folds.describe());
    return folds;
}

/// Drops any label column named by the fold spec so it is never used as a predictor.
void strip_fold_column(SampleTable& table, const FoldSpec& spec)
{
    if (spec.strategy == FoldStrategy::Cluster || spec.strategy == FoldStrategy::Explicit)
        if (table.index_of(spec.column)) take_label_column(table, spec.column);
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag)
{
    if (flag) return *flag;
    if (const char* env = std::getenv("AOA_SEED")) {
        std::uint64_t v = 0;
        std::istringstream in(env);
        if (!(in >> v) || !in.eof()) throw UsageError(fmt::format("AOA_SEED='{}' is not a nonnegative integer", env));
        return v;
    }
    return 42;
}

std::vector<std::size_t> mtry_grid_for(const std::vector<std::size_t>& requested, std::size_t p)
{
    std::vector<std::size_t> grid;
    for (auto m : requested) {
        if (m < 1 || m > p) throw UsageError(fmt::format("--mtry {} outside [1, {}]", m, p));
        grid.push_back(m);
    }
    if (grid.empty()) grid.push_back(std::max<std::size_t>(1, p / 3));
    return grid;
}

PredictorStack load_stack(const fs::path& dir)
{
    auto stack = io::read_stack(dir);
    spdlog::info("read {} layers ({} x {}) from {}", stack.layer_count(), stack.geometry().rows,
                 stack.geometry().cols, dir.string());
    return stack;
}

void require_same_layout(const Grid& a, const Grid& b, const std::string& what)
{
    if (!a.geometry.same_layout(b.geometry))
        throw DataError(fmt::format("{}: grids differ in geometry ({}x{} vs {}x{} or origin/cellsize)", what,
                                    a.rows(), a.cols(), b.rows(), b.cols()));
}

struct Common {
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
};

struct ModelOptions {
    std::size_t trees = 500;
    std::vector<std::size_t> mtry;
    std::size_t min_node_size = 5;
};

void add_model_options(CLI::App* cmd, ModelOptions& m)
{
    cmd->add_option("--trees", m.trees, "Number of trees")->check(CLI::PositiveNumber);
    cmd->add_option("--mtry", m.mtry, "Candidate predictors per split; several values are tuned by CV")
        ->delimiter(',');
    cmd->add_option("--min-node-size", m.min_node_size, "Minimum terminal node size")->check(CLI::PositiveNumber);
}

ForestConfig forest_config(const ModelOptions& m, std::uint64_t seed, unsigned threads)
{
    ForestConfig cfg;
    cfg.n_trees = m.trees;
    cfg.min_node_size = m.min_node_size;
    cfg.seed = derive_seed(seed, {tag(Stream::Forest)});
    cfg.threads = threads;
    return cfg;
}

void write_metrics_csv(const fs::path& path, const std::string& scope, std::size_t n, double rmse_v, double r,
                       double r2)
{
    io::write_atomic(path, [&](std::ostream& out) {
        out << "scope,n,rmse,r,r2\n"
            << scope << ',' << n << ',' << io::format_exact(rmse_v) << ',' << io::format_exact(r) << ','
            << io::format_exact(r2) << '\n';
    });
}

// ---- subcommands ----

struct TrainArgs {
    fs::path samples, model, importance, cv_report;
    std::vector<std::string> folds;
    ModelOptions model_opts;
};

int run_train(const TrainArgs& a, const Common& c)
{
    const auto seed = resolve_seed(c.seed);
    auto table = io::read_samples(a.samples);
    const auto spec = choose_fold_spec(a.folds);
    auto folds = build_folds(table, spec, seed);
    auto cfg = forest_config(a.model_opts, seed, c.threads);
    const auto grid = mtry_grid_for(a.model_opts.mtry, table.predictor_names.size());
    auto tuning = tune_mtry(table, grid, folds, cfg);
    const auto report = tuning.best_report();
    cfg.mtry = tuning.best_mtry;
    spdlog::info("mtry={} cv rmse={:.6g} r2={:.4g}", cfg.mtry, report.rmse, report.r2);
    auto forest = train_forest(table, cfg);
    forest.set_tuning(std::move(tuning));
    io::write_model(a.model, forest);
    if (!a.importance.empty()) {
        const auto raw = permutation_importance_raw(forest, table, derive_seed(seed, {tag(Stream::Importance)}));
        io::write_importance(a.importance, forest.predictor_names(), raw);
    }
    if (!a.cv_report.empty()) io::write_cv_report(a.cv_report, report);
    return 0;
}

struct ImportanceArgs {
    fs::path model, samples, out;
    std::vector<std::string> folds;
};

int run_importance(const ImportanceArgs& a, const Common& c)
{
    const auto seed = resolve_seed(c.seed);
    const auto forest = io::read_model(a.model);
    auto table = io::read_samples(a.samples);
    strip_fold_column(table, choose_fold_spec(a.folds));
    if (table.rows() != forest.training_rows())
        throw DataError(fmt::format("model was trained on {} rows, samples have {}", forest.training_rows(),
                                    table.rows()));
    const auto raw = permutation_importance_raw(forest, table, derive_seed(seed, {tag(Stream::Importance)}));
    if (a.out.empty()) {
        for (std::size_t j = 0; j < raw.size(); ++j)
            std::cout << forest.predictor_names()[j] << ',' << io::format_exact(raw[j]) << '\n';
    } else {
        io::write_importance(a.out, forest.predictor_names(), raw);
    }
    return 0;
}

struct CvArgs {
    fs::path samples, out;
    std::vector<std::string> folds;
    ModelOptions model_opts;
};

int run_cv(const CvArgs& a, const Common& c)
{
    const auto seed = resolve_seed(c.seed);
    auto table = io::read_samples(a.samples);
    auto folds = build_folds(table, choose_fold_spec(a.folds), seed);
    auto cfg = forest_config(a.model_opts, seed, c.threads);
    const auto grid = mtry_grid_for(a.model_opts.mtry, table.predictor_names.size());
    const auto tuning = tune_mtry(table, grid, folds, cfg);
    for (const auto& s : tuning.scores) spdlog::info("mtry={} rmse={:.6g}", s.mtry, s.rmse);
    const auto& report = tuning.best_report();
    std::cout << fmt::format("strategy={} mtry={} rmse={} r={} r2={}\n", folds.describe(), tuning.best_mtry,
                             io::format_exact(report.rmse), io::format_exact(report.r), io::format_exact(report.r2));
    if (!a.out.empty()) io::write_cv_report(a.out, report);
    return 0;
}

struct PredictArgs {
    fs::path model, grids, out, sd_out;
};

int run_predict(const PredictArgs& a, const Common& c)
{
    const auto forest = io::read_model(a.model);
    const auto stack = load_stack(a.grids);
    const auto cells = stack.cell_matrix(forest.predictor_names());
    Grid pred(stack.geometry());
    pred.values = forest.predict(cells, c.threads);
    io::write_atomic(a.out, [&](std::ostream& out) { io::write_grid(out, pred); });
    if (!a.sd_out.empty()) {
        Grid sd(stack.geometry());
        sd.values = forest.ensemble_sd(cells, c.threads);
        io::write_atomic(a.sd_out, [&](std::ostream& out) { io::write_grid(out, sd); });
    }
    return 0;
}

struct DiArgs {
    fs::path model, weights, samples, grids, out, training_out, weights_out;
    std::vector<std::string> folds;
};

int run_di(const DiArgs& a, const Common& c)
{
    const auto seed = resolve_seed(c.seed);
    if (a.model.empty() == a.weights.empty()) throw UsageError("di needs exactly one of --model or --weights");
    auto table = io::read_samples(a.samples);
    const auto spec = choose_fold_spec(a.folds);
    // Fold labels are resolved first so a label column never counts as a predictor.
    std::optional<FoldAssignment> folds;
    if (!a.training_out.empty()) folds = build_folds(table, spec, seed);
    else strip_fold_column(table, spec);

    ImportanceWeights weights;
    if (!a.model.empty()) {
        const auto forest = io::read_model(a.model);
        if (table.rows() != forest.training_rows())
            throw DataError(fmt::format("model was trained on {} rows, samples have {}", forest.training_rows(),
                                        table.rows()));
        const auto raw = permutation_importance_raw(forest, table, derive_seed(seed, {tag(Stream::Importance)}));
        weights = weights_from_importance(forest.predictor_names(), raw);
    } else {
        weights = io::read_importance(a.weights);
    }
    const auto stack = load_stack(a.grids);
    for (const auto& n : weights.names)
        if (!stack.index_of(n)) throw DataError(fmt::format("grid directory has no layer '{}'", n));
    const auto params = fit_standardizer(table, weights.names);
    const DissimilarityModel model(table, params, weights);
    const auto di = di_grid(stack, model, c.threads);
    io::write_atomic(a.out, [&](std::ostream& out) { io::write_grid(out, di, 10); });
    if (!a.weights_out.empty()) io::write_importance(a.weights_out, weights.names, weights.values);
    if (folds) {
        const auto tdi = training_di(table, *folds, params, weights);
        io::write_training_di(a.training_out, table, tdi);
        for (const auto& t : tdi.thresholds) spdlog::info("q={} threshold={:.6g}", t.quantile, t.threshold);
    }
    return 0;
}

struct AoaArgs {
    fs::path di, training_di, out, image;
    double quantile = kDefaultQuantile;
};

int run_aoa(const AoaArgs& a, const Common&)
{
    const auto di = io::read_grid(a.di);
    const auto tdi = io::read_training_di(a.training_di);
    const double threshold = di_threshold(tdi, a.quantile);
    const auto mask = aoa_mask(di, threshold, a.quantile);
    io::write_atomic(a.out, [&](std::ostream& out) { io::write_grid(out, mask.to_grid()); });
    if (!a.image.empty()) io::export_heatmap(di, a.image, io::Palette::Viridis, mask.outside_flags());
    std::cout << fmt::format("quantile={} threshold={} inside={} outside={} missing={}\n", io::format_exact(a.quantile),
                             io::format_exact(threshold), mask.n_inside, mask.n_outside, mask.n_missing);
    return 0;
}

struct MetricsArgs {
    fs::path prediction, truth, mask, out;
};

int run_metrics(const MetricsArgs& a, const Common&)
{
    const auto pred = io::read_grid(a.prediction);
    const auto truth = io::read_grid(a.truth);
    require_same_layout(pred, truth, "metrics");
    std::vector<bool> inside;
    std::string scope = "all";
    if (!a.mask.empty()) {
        const auto m = io::read_grid(a.mask);
        require_same_layout(pred, m, "metrics mask");
        inside.resize(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) inside[i] = !std::isnan(m.values[i]) && m.values[i] != 0.0;
        scope = "mask";
    }
    std::vector<double> p, t;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!inside.empty() && !inside[i]) continue;
        if (std::isnan(pred.values[i]) || std::isnan(truth.values[i])) continue;
        p.push_back(pred.values[i]);
        t.push_back(truth.values[i]);
    }
    const double e = rmse(p, t);
    const double r = pearson_r(p, t);
    std::cout << fmt::format("scope={} n={} rmse={} r={} r2={}\n", scope, p.size(), io::format_exact(e),
                             io::format_exact(r), io::format_exact(r * r));
    if (!a.out.empty()) write_metrics_csv(a.out, scope, p.size(), e, r, r * r);
    return 0;
}

struct HeatmapArgs {
    fs::path grid, mask, out;
    std::string palette = "viridis";
};

int run_heatmap(const HeatmapArgs& a, const Common&)
{
    const auto grid = io::read_grid(a.grid);
    std::vector<bool> masked;
    if (!a.mask.empty()) {
        const auto m = io::read_grid(a.mask);
        require_same_layout(grid, m, "heatmap mask");
        masked.resize(m.size());
        // Mask grids mark the AOA with 1; everything explicitly 0 is painted.
        for (std::size_t i = 0; i < m.size(); ++i) masked[i] = m.values[i] == 0.0;
    }
    io::export_heatmap(grid, a.out, io::parse_palette(a.palette), masked);
    return 0;
}

CatalogueConfig load_config(const fs::path& path, const Common& c)
{
    auto cfg = read_catalogue_config(path);
    if (c.seed) cfg.seed = *c.seed;
    else if (std::getenv("AOA_SEED")) cfg.seed = resolve_seed(std::nullopt);
    return cfg;
}

ProgressFn log_progress()
{
    return [](std::size_t done, std::size_t total, const std::string& id) {
        spdlog::info("[{}/{}] {}", done, total, id);
    };
}

struct CalibrateArgs {
    fs::path config, out;
};

int run_calibrate(const CalibrateArgs& a, const Common& c)
{
    const auto cfg = load_config(a.config, c);
    const auto specs = build_catalogue(cfg);
    spdlog::info("{} scenarios", specs.size());
    const auto result = run_catalogue(specs, c.threads, log_progress());
    for (const auto& f : result.failures) spdlog::warn("scenario {} failed: {}", f.id, f.message);
    const auto inputs = result.calibration_inputs();
    const auto table = calibrate_quantiles(inputs, cfg.quantiles);
    io::write_calibration(a.out, table);
    for (const auto& s : table.summaries)
        std::cout << fmt::format("q={} mean_diff={} median_diff={} valid={} missing={}\n", io::format_exact(s.quantile),
                                 io::format_exact(s.mean), io::format_exact(s.median), s.n_valid, s.n_missing);
    return 0;
}

struct SimulateArgs {
    fs::path config, out;
    bool images = false;
};

void write_scenario(const fs::path& dir, const ScenarioResult& r, bool images)
{
    fs::create_directories(dir);
    if (r.stack) io::write_stack(dir / "predictors", *r.stack);
    auto grid_out = [&](const std::string& name, const Grid& g, int digits = 6) {
        io::write_atomic(dir / name, [&](std::ostream& out) { io::write_grid(out, g, digits); });
    };
    grid_out("truth.asc", r.truth);
    grid_out("prediction.asc", r.prediction);
    grid_out("di.asc", r.di, 10);
    if (r.ensemble_sd) grid_out("ensemble_sd.asc", *r.ensemble_sd);
    io::write_samples(dir / "samples.csv", r.samples);
    io::write_importance(dir / "importance.csv", r.weights.names, r.raw_importance);
    io::write_training_di(dir / "training_di.csv", r.samples, r.training);
    io::write_cv_report(dir / "cv.csv", r.cv);
    const double t95 = di_threshold(r.training, kDefaultQuantile);
    const auto mask = aoa_mask(r.di, t95, kDefaultQuantile);
    grid_out("aoa.asc", mask.to_grid());
    if (images) {
        io::export_heatmap(r.prediction, dir / "prediction.ppm", io::Palette::Viridis, mask.outside_flags());
        io::export_heatmap(r.di, dir / "di.ppm");
    }
    io::write_atomic(dir / "summary.csv", [&](std::ostream& out) {
        out << "quantile,threshold,cv_rmse,rmspe_in,rmspe_out,n_inside,n_outside\n";
        for (const auto& s : r.stats)
            out << io::format_exact(s.quantile) << ',' << io::format_exact(s.threshold) << ','
                << io::format_exact(r.cv.rmse) << ',' << io::format_exact(s.rmspe_in) << ','
                << io::format_exact(s.rmspe_out) << ',' << s.n_inside << ',' << s.n_outside << '\n';
    });
    io::write_atomic(dir / "seeds.txt", [&](std::ostream& out) {
        out << "field " << r.seeds.field << "\nsampling " << r.seeds.sampling << "\nfolds " << r.seeds.folds
            << "\nforest " << r.seeds.forest << "\nimportance " << r.seeds.importance << '\n';
    });
}

int run_simulate(const SimulateArgs& a, const Common& c)
{
    const auto cfg = load_config(a.config, c);
    auto specs = build_catalogue(cfg);
    for (auto& s : specs) {
        s.keep_stack = true;
        s.ensemble_sd = true;
    }
    spdlog::info("{} scenarios", specs.size());
    const auto result = run_catalogue(specs, c.threads, log_progress());
    for (const auto& f : result.failures) spdlog::warn("scenario {} failed: {}", f.id, f.message);
    fs::create_directories(a.out);
    for (const auto& r : result.results) write_scenario(a.out / r.id, r, a.images);
    io::write_atomic(a.out / "scenarios.csv", [&](std::ostream& out) {
        out << "scenario_id,n,mtry,cv_rmse,rmspe_in_95,rmspe_out_95,r_di_error,r_di_uniform_error\n";
        for (const auto& r : result.results) {
            const auto& s = r.at_quantile(kDefaultQuantile);
            out << r.id << ',' << r.samples.rows() << ',' << r.tuning.best_mtry << ','
                << io::format_exact(r.cv.rmse) << ',' << io::format_exact(s.rmspe_in) << ','
                << io::format_exact(s.rmspe_out) << ',' << io::format_exact(r.di_error_r) << ','
                << io::format_exact(r.di_uniform_error_r) << '\n';
        }
    });
    std::cout << fmt::format("{} scenarios written to {}, {} failed\n", result.results.size(), a.out.string(),
                             result.failures.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    auto logger = spdlog::stderr_color_mt("aoa");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"Area of applicability for spatial prediction models"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    Common common;
    bool quiet = false;
    app.add_option("--seed", common.seed, "Master seed (falls back to $AOA_SEED, then 42)");
    app.add_option("--threads", common.threads, "Worker threads; 0 uses every core");
    app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

    auto folds_help = "random:k=N | cluster:col=NAME | file:col=NAME | loo (repeatable; file > cluster > loo > random)";

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Fit a forest, writing the model, importance and CV report");
    c_train->add_option("--samples", train.samples, "Samples CSV")->required()->check(CLI::ExistingFile);
    c_train->add_option("--model", train.model, "Output model JSON")->required();
    c_train->add_option("--importance", train.importance, "Output permutation importance CSV");
    c_train->add_option("--cv-report", train.cv_report, "Output cross-validation CSV");
    c_train->add_option("--folds", train.folds, folds_help);
    add_model_options(c_train, train.model_opts);

    ImportanceArgs imp;
    auto* c_imp = app.add_subcommand("importance", "Permutation importance of a trained model");
    c_imp->add_option("--model", imp.model, "Model JSON")->required()->check(CLI::ExistingFile);
    c_imp->add_option("--samples", imp.samples, "Training samples CSV")->required()->check(CLI::ExistingFile);
    c_imp->add_option("--out", imp.out, "Output CSV (default: stdout)");
    c_imp->add_option("--folds", imp.folds, "Fold spec naming a label column to ignore");

    CvArgs cv;
    auto* c_cv = app.add_subcommand("cv", "Cross-validate forest settings");
    c_cv->add_option("--samples", cv.samples, "Samples CSV")->required()->check(CLI::ExistingFile);
    c_cv->add_option("--out", cv.out, "Output CV report CSV");
    c_cv->add_option("--folds", cv.folds, folds_help);
    add_model_options(c_cv, cv.model_opts);

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "Apply a model to a directory of predictor grids");
    c_pred->add_option("--model", pred.model, "Model JSON")->required()->check(CLI::ExistingFile);
    c_pred->add_option("--grids", pred.grids, "Directory of *.asc predictor grids")->required()->check(CLI::ExistingDirectory);
    c_pred->add_option("--out", pred.out, "Output prediction grid")->required();
    c_pred->add_option("--sd-out", pred.sd_out, "Output per-tree standard deviation grid");

    DiArgs di;
    auto* c_di = app.add_subcommand("di", "Dissimilarity index grid and training DI");
    c_di->add_option("--model", di.model, "Model JSON; weights from permutation importance")->check(CLI::ExistingFile);
    c_di->add_option("--weights", di.weights, "Weights CSV (predictor,weight), e.g. expert-elicited")->check(CLI::ExistingFile);
    c_di->add_option("--samples", di.samples, "Training samples CSV")->required()->check(CLI::ExistingFile);
    c_di->add_option("--grids", di.grids, "Directory of *.asc predictor grids")->required()->check(CLI::ExistingDirectory);
    c_di->add_option("--out", di.out, "Output DI grid")->required();
    c_di->add_option("--training-out", di.training_out, "Output fold-aware training DI CSV");
    c_di->add_option("--weights-out", di.weights_out, "Output the weights actually used");
    c_di->add_option("--folds", di.folds, folds_help);

    AoaArgs aoa_args;
    auto* c_aoa = app.add_subcommand("aoa", "Threshold a DI grid into an area-of-applicability mask");
    c_aoa->add_option("--di", aoa_args.di, "DI grid")->required()->check(CLI::ExistingFile);
    c_aoa->add_option("--training-di", aoa_args.training_di, "Training DI CSV")->required()->check(CLI::ExistingFile);
    c_aoa->add_option("--quantile", aoa_args.quantile, "Training DI quantile used as threshold")
        ->check(CLI::Range(0.0, 1.0));
    c_aoa->add_option("--out", aoa_args.out, "Output mask grid (1 inside, 0 outside)")->required();
    c_aoa->add_option("--image", aoa_args.image, "Also write a PPM of the DI with outside cells highlighted");

    CalibrateArgs cal;
    auto* c_cal = app.add_subcommand("calibrate", "Run a scenario catalogue and tabulate threshold calibration");
    c_cal->add_option("--config", cal.config, "Catalogue config")->required()->check(CLI::ExistingFile);
    c_cal->add_option("--out", cal.out, "Output calibration CSV")->required();

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Run scenarios and write every artifact");
    c_sim->add_option("--config", sim.config, "Catalogue config")->required()->check(CLI::ExistingFile);
    c_sim->add_option("--out", sim.out, "Output directory")->required();
    c_sim->add_flag("--images", sim.images, "Also write PPM heatmaps");

    MetricsArgs met;
    auto* c_met = app.add_subcommand("metrics", "RMSE, r and R2 between prediction and truth grids");
    c_met->add_option("--prediction", met.prediction, "Prediction grid")->required()->check(CLI::ExistingFile);
    c_met->add_option("--truth", met.truth, "Truth grid")->required()->check(CLI::ExistingFile);
    c_met->add_option("--mask", met.mask, "Mask grid; only nonzero cells are scored")->check(CLI::ExistingFile);
    c_met->add_option("--out", met.out, "Output CSV");

    HeatmapArgs hm;
    auto* c_hm = app.add_subcommand("heatmap", "Render a grid as a PPM image");
    c_hm->add_option("--grid", hm.grid, "Input grid")->required()->check(CLI::ExistingFile);
    c_hm->add_option("--mask", hm.mask, "Mask grid; cells equal to 0 are painted in the mask color")
        ->check(CLI::ExistingFile);
    c_hm->add_option("--palette", hm.palette, "viridis or grayscale");
    c_hm->add_option("--out", hm.out, "Output .ppm")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }
    spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*c_train) return run_train(train, common);
        if (*c_imp) return run_importance(imp, common);
        if (*c_cv) return run_cv(cv, common);
        if (*c_pred) return run_predict(pred, common);
        if (*c_di) return run_di(di, common);
        if (*c_aoa) return run_aoa(aoa_args, common);
        if (*c_cal) return run_calibrate(cal, common);
        if (*c_sim) return run_simulate(sim, common);
        if (*c_met) return run_metrics(met, common);
        if (*c_hm) return run_heatmap(hm, common);
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const DataError& e) {
        spdlog::error("{}", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitData;
    }
    return kExitUsage;
}
