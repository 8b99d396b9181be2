#include "aoa/core.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace aoa {

std::optional<std::size_t> GridGeometry::cell_at(double x, double y) const
{
    const double fc = std::floor((x - xllcorner) / cellsize);
    const double fr_from_bottom = std::floor((y - yllcorner) / cellsize);
    if (fc < 0 || fr_from_bottom < 0) return std::nullopt;
    const auto c = static_cast<std::size_t>(fc);
    const auto rb = static_cast<std::size_t>(fr_from_bottom);
    if (c >= cols || rb >= rows) return std::nullopt;
    return (rows - 1 - rb) * cols + c;
}

std::size_t Grid::count_finite() const
{
    return static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [](double v) { return std::isfinite(v); }));
}

void PredictorStack::add(std::string name, Grid layer)
{
    if (layers_.empty() && geometry_.cells() == 0) geometry_ = layer.geometry;
    if (!layer.geometry.same_layout(geometry_))
        throw DataError(fmt::format("predictor grid '{}' has geometry {}x{} inconsistent with stack {}x{}",
                                    name, layer.geometry.rows, layer.geometry.cols, geometry_.rows,
                                    geometry_.cols));
    if (index_of(name)) throw DataError(fmt::format("duplicate predictor grid '{}'", name));
    names_.push_back(std::move(name));
    layers_.push_back(std::move(layer));
}

const Grid& PredictorStack::layer(const std::string& name) const
{
    auto i = index_of(name);
    if (!i) throw DataError(fmt::format("predictor grid '{}' not found in stack", name));
    return layers_[*i];
}

std::optional<std::size_t> PredictorStack::index_of(const std::string& name) const
{
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
}

bool PredictorStack::missing(std::size_t cell) const
{
    return std::any_of(layers_.begin(), layers_.end(),
                       [cell](const Grid& g) { return is_missing(g.values[cell]); });
}

std::size_t PredictorStack::count_valid() const
{
    std::size_t n = 0;
    for (std::size_t c = 0; c < cells(); ++c) n += missing(c) ? 0 : 1;
    return n;
}

Matrix PredictorStack::cell_matrix(std::span<const std::string> names) const
{
    std::vector<const Grid*> cols;
    cols.reserve(names.size());
    for (const auto& n : names) cols.push_back(&layer(n));
    Matrix m(static_cast<Eigen::Index>(cells()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t c = 0; c < cells(); ++c) {
        const bool miss = missing(c);
        for (std::size_t j = 0; j < cols.size(); ++j)
            m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) =
                miss ? kMissing : cols[j]->values[c];
    }
    return m;
}

std::optional<std::size_t> SampleTable::index_of(const std::string& name) const
{
    auto it = std::find(predictor_names.begin(), predictor_names.end(), name);
    if (it == predictor_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - predictor_names.begin());
}

Matrix SampleTable::select(std::span<const std::string> names) const
{
    Matrix m(predictors.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        auto src = index_of(names[j]);
        if (!src) throw DataError(fmt::format("unknown predictor '{}'", names[j]));
        m.col(static_cast<Eigen::Index>(j)) = predictors.col(static_cast<Eigen::Index>(*src));
    }
    return m;
}

SampleTable SampleTable::subset(std::span<const std::size_t> indices) const
{
    SampleTable out;
    out.predictor_names = predictor_names;
    out.predictors.resize(static_cast<Eigen::Index>(indices.size()), predictors.cols());
    auto pick = [&](const std::vector<double>& v) {
        std::vector<double> r;
        if (v.empty()) return r;
        r.reserve(indices.size());
        for (auto i : indices) r.push_back(v.at(i));
        return r;
    };
    for (std::size_t k = 0; k < indices.size(); ++k)
        out.predictors.row(static_cast<Eigen::Index>(k)) = predictors.row(static_cast<Eigen::Index>(indices[k]));
    out.x = pick(x);
    out.y = pick(y);
    out.response = pick(response);
    auto pick_labels = [&](const std::optional<std::vector<int>>& v) -> std::optional<std::vector<int>> {
        if (!v) return std::nullopt;
        std::vector<int> r;
        r.reserve(indices.size());
        for (auto i : indices) r.push_back(v->at(i));
        return r;
    };
    out.fold = pick_labels(fold);
    out.cluster = pick_labels(cluster);
    return out;
}

void SampleTable::validate() const
{
    const auto n = rows();
    if (static_cast<std::size_t>(predictors.cols()) != predictor_names.size())
        throw DataError(fmt::format("sample table has {} predictor columns but {} names", predictors.cols(),
                                    predictor_names.size()));
    auto check = [n](std::size_t len, const char* what) {
        if (len != 0 && len != n)
            throw DataError(fmt::format("sample table column '{}' has {} entries, expected {}", what, len, n));
    };
    check(x.size(), "x");
    check(y.size(), "y");
    check(response.size(), "response");
    if (fold) check(fold->size(), "fold");
    if (cluster) check(cluster->size(), "cluster");
}

}  // namespace aoa
