#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace aoa {

/// Row-major dense matrix; one row per point, one column per predictor.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// Bad input data: malformed files, inconsistent shapes, degenerate statistics.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller misuse: invalid option values or parameter combinations.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GridGeometry {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double xllcorner = 0.0;
    double yllcorner = 0.0;
    double cellsize = 1.0;
    double nodata = -9999.0;

    std::size_t cells() const { return rows * cols; }

    /// Same raster layout; the nodata sentinel is a file detail and not compared.
    bool same_layout(const GridGeometry& o) const
    {
        return rows == o.rows && cols == o.cols && xllcorner == o.xllcorner &&
               yllcorner == o.yllcorner && cellsize == o.cellsize;
    }

    // Row 0 is the northernmost row, as in ASCII grids.
    double cell_x(std::size_t col) const { return xllcorner + (static_cast<double>(col) + 0.5) * cellsize; }
    double cell_y(std::size_t row) const
    {
        return yllcorner + (static_cast<double>(rows - row) - 0.5) * cellsize;
    }

    /// Cell index containing map coordinate (x, y), or nullopt outside the grid.
    std::optional<std::size_t> cell_at(double x, double y) const;
};

/// Single-band raster; missing cells hold NaN.
struct Grid {
    GridGeometry geometry;
    std::vector<double> values;

    Grid() = default;
    explicit Grid(const GridGeometry& g, double fill = kMissing) : geometry(g), values(g.cells(), fill) {}

    std::size_t rows() const { return geometry.rows; }
    std::size_t cols() const { return geometry.cols; }
    std::size_t size() const { return values.size(); }
    double& at(std::size_t r, std::size_t c) { return values[r * geometry.cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * geometry.cols + c]; }

    std::size_t count_finite() const;
};

/// Co-registered predictor layers with a shared missing-value mask.
class PredictorStack {
public:
    PredictorStack() = default;
    explicit PredictorStack(GridGeometry geometry) : geometry_(geometry) {}

    /// Adds a layer; throws DataError on geometry mismatch or duplicate name.
    void add(std::string name, Grid layer);

    const GridGeometry& geometry() const { return geometry_; }
    std::size_t layer_count() const { return layers_.size(); }
    std::size_t cells() const { return geometry_.cells(); }
    const std::vector<std::string>& names() const { return names_; }
    const Grid& layer(std::size_t i) const { return layers_.at(i); }
    const Grid& layer(const std::string& name) const;
    std::optional<std::size_t> index_of(const std::string& name) const;

    /// True when any layer is missing at the cell.
    bool missing(std::size_t cell) const;
    std::size_t count_valid() const;

    /// Cells × selected layers; missing cells become NaN rows.
    Matrix cell_matrix(std::span<const std::string> names) const;

private:
    GridGeometry geometry_;
    std::vector<std::string> names_;
    std::vector<Grid> layers_;
};

/// Point records: location, predictor vector, response, optional fold and cluster labels.
struct SampleTable {
    std::vector<std::string> predictor_names;
    Matrix predictors;  // rows × predictor_names.size()
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> response;
    std::optional<std::vector<int>> fold;
    std::optional<std::vector<int>> cluster;

    std::size_t rows() const { return static_cast<std::size_t>(predictors.rows()); }
    std::optional<std::size_t> index_of(const std::string& name) const;

    /// Columns named in `names`, in that order; throws DataError on unknown names.
    Matrix select(std::span<const std::string> names) const;

    /// Rows at `indices`, in that order; labels follow their rows.
    SampleTable subset(std::span<const std::size_t> indices) const;

    /// Throws DataError when column counts or label lengths disagree.
    void validate() const;
};

}  // namespace aoa
