#pragma once

// File formats: ASCII grids, sample CSVs, model JSON, report CSVs, PPM heatmaps.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aoa/applicability.hpp"
#include "aoa/core.hpp"
#include "aoa/forest.hpp"
#include "aoa/predictor_space.hpp"
#include "aoa/validation.hpp"

namespace aoa::io {

namespace fs = std::filesystem;

/// Shortest decimal that parses back to exactly `v`.
std::string format_exact(double v);

/// `digits` significant digits, %g style.
std::string format_general(double v, int digits);

/// Writes via a temporary file in the same directory, then renames.
void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& writer, bool binary = false);

// ASCII grid: six header lines (keys case-insensitive; xllcenter/yllcenter
// accepted) followed by nrows lines of ncols values, north row first.
Grid read_grid(std::istream& in, const std::string& source = "<stream>");
Grid read_grid(const fs::path& path);
void write_grid(std::ostream& out, const Grid& grid, int digits = 6);
void write_grid(const fs::path& path, const Grid& grid, int digits = 6);

/// Every *.asc file in `dir`, named by file stem, sorted by name.
PredictorStack read_stack(const fs::path& dir);
void write_stack(const fs::path& dir, const PredictorStack& stack, int digits = 6);

// Samples CSV: required x, y, response; optional integer fold and cluster;
// every other column is a predictor.
SampleTable read_samples(std::istream& in, const std::string& source = "<stream>");
SampleTable read_samples(const fs::path& path);
void write_samples(std::ostream& out, const SampleTable& table);
void write_samples(const fs::path& path, const SampleTable& table);

/// Integer column `name` of a samples CSV, e.g. a fold or cluster label.
std::vector<int> read_label_column(const fs::path& path, const std::string& name);

/// predictor,weight
void write_importance(const fs::path& path, std::span<const std::string> names, std::span<const double> values);
ImportanceWeights read_importance(const fs::path& path);

/// index,x,y,fold,di
void write_training_di(const fs::path& path, const SampleTable& samples, const TrainingDIResult& result);
std::vector<double> read_training_di(const fs::path& path);

/// fold,n,rmse,strategy with pooled and mean_fold summary rows.
void write_cv_report(std::ostream& out, const CVReport& report);
void write_cv_report(const fs::path& path, const CVReport& report);

/// quantile,scenario_id,cv_rmse,rmspe_in,rmspe_out,diff,n_inside,n_outside; NA marks missing.
void write_calibration(std::ostream& out, const CalibrationTable& table);
void write_calibration(const fs::path& path, const CalibrationTable& table);

void write_model(const fs::path& path, const TrainedForest& forest);
TrainedForest read_model(const fs::path& path);

enum class Palette { Viridis, Grayscale };

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kMaskColor{255, 105, 180};
inline constexpr Rgb kMissingColor{255, 255, 255};

Palette parse_palette(const std::string& name);
Rgb palette_color(Palette palette, double t);

struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    Rgb pixel(std::size_t row, std::size_t col) const;
};

/// Linear value-to-palette mapping over the finite range; cells flagged in
/// `masked` take kMaskColor, missing cells kMissingColor. Throws DataError
/// when no cell is finite.
Image render_heatmap(const Grid& grid, Palette palette, const std::vector<bool>& masked = {});
void write_ppm(std::ostream& out, const Image& image);
void export_heatmap(const Grid& grid, const fs::path& path, Palette palette = Palette::Viridis,
                    const std::vector<bool>& masked = {});

}  // namespace aoa::io
