#include "aoa/catalogue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "aoa/rng.hpp"

namespace aoa {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

class LineParser {
public:
    LineParser(std::string source, std::size_t line, std::string key, std::string value)
        : source_(std::move(source)), line_(line), key_(std::move(key)), value_(std::move(value))
    {
    }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw UsageError(fmt::format("{}:{}: '{}': {}", source_, line_, key_, what));
    }

    double real(const std::string& tok) const
    {
        double v = 0.0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) fail(fmt::format("'{}' is not a number", tok));
        return v;
    }

    std::uint64_t count(const std::string& tok) const
    {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size())
            fail(fmt::format("'{}' is not a nonnegative integer", tok));
        return v;
    }

    double real() const { return real(value_); }
    std::size_t size() const { return static_cast<std::size_t>(count(value_)); }
    std::uint64_t u64() const { return count(value_); }
    const std::string& text() const { return value_; }

    std::vector<std::string> items() const
    {
        std::vector<std::string> out;
        std::stringstream ss(value_);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (tok.empty()) fail("empty list entry");
            out.push_back(tok);
        }
        if (out.empty()) fail("empty list");
        return out;
    }

    std::vector<double> reals() const
    {
        std::vector<double> out;
        for (const auto& t : items()) out.push_back(real(t));
        return out;
    }

    std::vector<std::size_t> sizes() const
    {
        std::vector<std::size_t> out;
        for (const auto& t : items()) out.push_back(static_cast<std::size_t>(count(t)));
        return out;
    }

private:
    std::string source_;
    std::size_t line_;
    std::string key_;
    std::string value_;
};

}  // namespace

CatalogueConfig parse_catalogue_config(std::istream& in, const std::string& source)
{
    CatalogueConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(fmt::format("{}:{}: expected 'key = value'", source, line_no));
        const auto key = trim(line.substr(0, eq));
        const LineParser v(source, line_no, key, trim(line.substr(eq + 1)));

        if (key == "rows") cfg.rows = v.size();
        else if (key == "cols") cfg.cols = v.size();
        else if (key == "cellsize") cfg.cellsize = v.real();
        else if (key == "predictors") cfg.predictors = v.size();
        else if (key == "field_seed") cfg.field_seed = v.u64();
        else if (key == "landscapes") cfg.landscapes = v.size();
        else if (key == "max_trend") cfg.max_trend = v.real();
        else if (key == "mu1") cfg.mu1 = v.reals();
        else if (key == "mu2") cfg.mu2 = v.reals();
        else if (key == "sigma1") cfg.sigma1 = v.reals();
        else if (key == "sigma2") cfg.sigma2 = v.reals();
        else if (key == "response_subset") cfg.response_subset = v.sizes();
        else if (key == "response_count") cfg.response_count = v.size();
        else if (key == "combination") {
            if (v.text() == "multiplicative") cfg.combination = Combination::Multiplicative;
            else if (v.text() == "additive") cfg.combination = Combination::Additive;
            else v.fail("expected multiplicative or additive");
        } else if (key == "design") {
            if (v.text() == "random") cfg.design = SamplingDesign::Random;
            else if (v.text() == "clustered") cfg.design = SamplingDesign::Clustered;
            else v.fail("expected random or clustered");
        } else if (key == "sample_sizes") cfg.sample_sizes = v.sizes();
        else if (key == "replicates") cfg.replicates = v.size();
        else if (key == "n_clusters") cfg.n_clusters = v.size();
        else if (key == "points_per_cluster") cfg.points_per_cluster = v.size();
        else if (key == "cluster_radius") cfg.cluster_radius = v.real();
        else if (key == "cv") {
            if (v.text() == "random") cfg.cv.strategy = FoldStrategy::RandomK;
            else if (v.text() == "cluster") cfg.cv.strategy = FoldStrategy::Cluster;
            else if (v.text() == "loo") cfg.cv.strategy = FoldStrategy::LeaveOneOut;
            else v.fail("expected random, cluster or loo");
        } else if (key == "folds") cfg.cv.k = static_cast<int>(v.size());
        else if (key == "trees") cfg.trees = v.size();
        else if (key == "mtry_grid") cfg.mtry_grid = v.sizes();
        else if (key == "min_node_size") cfg.min_node_size = v.size();
        else if (key == "quantiles") cfg.quantiles = v.reals();
        else if (key == "seed") cfg.seed = v.u64();
        else throw UsageError(fmt::format("{}:{}: unknown key '{}'", source, line_no, key));
    }
    if (cfg.replicates == 0) throw UsageError(fmt::format("{}: replicates must be >= 1", source));
    if (cfg.landscapes == 0) throw UsageError(fmt::format("{}: landscapes must be >= 1", source));
    for (double q : cfg.quantiles)
        if (!(q > 0.0 && q <= 1.0)) throw UsageError(fmt::format("{}: quantile {} outside (0, 1]", source, q));
    return cfg;
}

CatalogueConfig read_catalogue_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw UsageError(fmt::format("cannot open config '{}'", path.string()));
    return parse_catalogue_config(in, path.string());
}

std::vector<ResponseSpec> catalogue_responses(const CatalogueConfig& config)
{
    std::vector<ResponseSpec> all;
    for (double m1 : config.mu1)
        for (double m2 : config.mu2)
            for (double s1 : config.sigma1)
                for (double s2 : config.sigma2) {
                    ResponseSpec rs;
                    rs.subset = config.response_subset;
                    rs.mu1 = m1;
                    rs.mu2 = m2;
                    rs.sigma1 = s1;
                    rs.sigma2 = s2;
                    rs.combination = config.combination;
                    all.push_back(rs);
                }
    if (config.response_count == 0 || config.response_count >= all.size()) return all;
    std::vector<ResponseSpec> picked;
    for (std::size_t i = 0; i < config.response_count; ++i)
        picked.push_back(all[i * all.size() / config.response_count]);
    return picked;
}

std::vector<ScenarioSpec> build_catalogue(const CatalogueConfig& config)
{
    const auto responses = catalogue_responses(config);
    std::vector<std::size_t> sizes = config.sample_sizes;
    if (config.design == SamplingDesign::Clustered) sizes = {config.n_clusters * config.points_per_cluster};

    std::vector<ScenarioSpec> specs;
    for (std::size_t r = 0; r < responses.size(); ++r)
        for (auto n : sizes)
            for (std::size_t rep = 0; rep < config.replicates; ++rep) {
                ScenarioSpec s;
                s.id = config.design == SamplingDesign::Clustered ? fmt::format("resp{:02}_clustered_rep{}", r, rep)
                                                                  : fmt::format("resp{:02}_n{}_rep{}", r, n, rep);
                const std::size_t landscape = (r * config.replicates + rep) % config.landscapes;
                const auto field_seed = config.landscapes == 1
                                            ? config.field_seed
                                            : derive_seed(config.field_seed, {tag(Stream::Field), landscape});
                s.field = FieldSpec::desk_default(config.rows, config.cols, config.predictors, field_seed, config.max_trend);
                s.field.cellsize = config.cellsize;
                s.response = responses[r];
                s.sampling.design = config.design;
                s.sampling.n = n;
                s.sampling.n_clusters = config.n_clusters;
                s.sampling.per_cluster = config.points_per_cluster;
                s.sampling.radius = config.cluster_radius;
                s.cv = config.cv;
                s.model.n_trees = config.trees;
                s.model.mtry_grid = config.mtry_grid;
                s.model.min_node_size = config.min_node_size;
                s.quantiles = config.quantiles;
                s.seed = derive_seed(config.seed, {tag(Stream::Scenario), r, n, rep});
                specs.push_back(std::move(s));
            }
    return specs;
}

}  // namespace aoa
