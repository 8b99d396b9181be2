#include "aoa/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace aoa::io {

std::string format_exact(double v)
{
    if (std::isnan(v)) return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_general(double v, int digits)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
    return std::string(buf, ptr);
}

void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& writer, bool binary)
{
    const auto dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    if (!fs::exists(dir)) fs::create_directories(dir);
    std::random_device rd;
    const auto tmp = dir / fmt::format(".{}.tmp{:08x}", path.filename().string(), rd());
    {
        std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
        if (!out) throw DataError(fmt::format("cannot open '{}' for writing", tmp.string()));
        writer(out);
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError(fmt::format("failed writing '{}'", path.string()));
        }
    }
    fs::rename(tmp, path);
}

namespace {

std::ifstream open_input(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
    return in;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_double(std::string_view tok)
{
    double v = 0.0;
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
    return v;
}

std::optional<long long> parse_int(std::string_view tok)
{
    long long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
    return v;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string_view rest(line);
    for (;;) {
        const auto comma = rest.find(',');
        auto field = trim(rest.substr(0, comma));
        if (field.size() >= 2 && field.front() == '"' && field.back() == '"') field = field.substr(1, field.size() - 2);
        out.push_back(std::move(field));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return out;
}

}  // namespace

Grid read_grid(std::istream& in, const std::string& source)
{
    std::map<std::string, std::string> header;
    std::string line;
    std::size_t line_no = 0;
    std::streampos data_start = in.tellg();
    while (header.size() < 6) {
        data_start = in.tellg();
        if (!std::getline(in, line)) break;
        ++line_no;
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) continue;
        const auto k = lower(key);
        if (k != "ncols" && k != "nrows" && k != "xllcorner" && k != "yllcorner" && k != "xllcenter" &&
            k != "yllcenter" && k != "cellsize" && k != "nodata_value") {
            // First data row; only NODATA_value is optional.
            in.clear();
            in.seekg(data_start);
            --line_no;
            break;
        }
        if (!(ls >> value)) throw DataError(fmt::format("{}:{}: header key '{}' has no value", source, line_no, key));
        header[k] = value;
    }
    auto need = [&](const std::string& key) -> double {
        auto it = header.find(key);
        if (it == header.end()) throw DataError(fmt::format("{}: malformed header, missing '{}'", source, key));
        auto v = parse_double(it->second);
        if (!v) throw DataError(fmt::format("{}: header '{}' value '{}' is not a number", source, key, it->second));
        return *v;
    };
    Grid grid;
    auto& g = grid.geometry;
    const double ncols = need("ncols"), nrows = need("nrows");
    if (!(ncols >= 1) || !(nrows >= 1) || ncols != std::floor(ncols) || nrows != std::floor(nrows))
        throw DataError(fmt::format("{}: invalid grid dimensions {} x {}", source, nrows, ncols));
    g.cols = static_cast<std::size_t>(ncols);
    g.rows = static_cast<std::size_t>(nrows);
    g.cellsize = need("cellsize");
    if (!(g.cellsize > 0)) throw DataError(fmt::format("{}: cellsize must be positive", source));
    if (header.count("xllcorner"))
        g.xllcorner = need("xllcorner");
    else
        g.xllcorner = need("xllcenter") - g.cellsize / 2.0;
    if (header.count("yllcorner"))
        g.yllcorner = need("yllcorner");
    else
        g.yllcorner = need("yllcenter") - g.cellsize / 2.0;
    g.nodata = header.count("nodata_value") ? need("nodata_value") : -9999.0;

    grid.values.reserve(g.cells());
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view rest(line);
        for (;;) {
            const auto b = rest.find_first_not_of(" \t\r\n");
            if (b == std::string_view::npos) break;
            rest.remove_prefix(b);
            const auto e = rest.find_first_of(" \t\r\n");
            const auto tok = rest.substr(0, e);
            auto v = parse_double(tok);
            if (!v) throw DataError(fmt::format("{}:{}: cannot parse value '{}'", source, line_no, tok));
            if (grid.values.size() == g.cells())
                throw DataError(fmt::format("{}:{}: more than {} values", source, line_no, g.cells()));
            grid.values.push_back(*v == g.nodata ? kMissing : *v);
            if (e == std::string_view::npos) break;
            rest.remove_prefix(e);
        }
    }
    if (grid.values.size() != g.cells())
        throw DataError(fmt::format("{}: expected {} values, found {}", source, g.cells(), grid.values.size()));
    return grid;
}

Grid read_grid(const fs::path& path)
{
    auto in = open_input(path);
    return read_grid(in, path.string());
}

void write_grid(std::ostream& out, const Grid& grid, int digits)
{
    const auto& g = grid.geometry;
    out << "ncols " << g.cols << '\n'
        << "nrows " << g.rows << '\n'
        << "xllcorner " << format_exact(g.xllcorner) << '\n'
        << "yllcorner " << format_exact(g.yllcorner) << '\n'
        << "cellsize " << format_exact(g.cellsize) << '\n'
        << "NODATA_value " << format_exact(g.nodata) << '\n';
    const std::string nodata = format_exact(g.nodata);
    std::string row;
    for (std::size_t r = 0; r < g.rows; ++r) {
        row.clear();
        for (std::size_t c = 0; c < g.cols; ++c) {
            if (c) row += ' ';
            const double v = grid.at(r, c);
            row += std::isnan(v) ? nodata : format_general(v, digits);
        }
        out << row << '\n';
    }
}

void write_grid(const fs::path& path, const Grid& grid, int digits)
{
    write_atomic(path, [&](std::ostream& out) { write_grid(out, grid, digits); });
}

PredictorStack read_stack(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw DataError(fmt::format("'{}' is not a directory", dir.string()));
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && lower(e.path().extension().string()) == ".asc") files.push_back(e.path());
    if (files.empty()) throw DataError(fmt::format("no .asc grids in '{}'", dir.string()));
    std::sort(files.begin(), files.end());
    PredictorStack stack;
    for (const auto& f : files) stack.add(f.stem().string(), read_grid(f));
    return stack;
}

void write_stack(const fs::path& dir, const PredictorStack& stack, int digits)
{
    fs::create_directories(dir);
    for (std::size_t j = 0; j < stack.layer_count(); ++j)
        write_grid(dir / (stack.names()[j] + ".asc"), stack.layer(j), digits);
}

SampleTable read_samples(std::istream& in, const std::string& source)
{
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_csv(line);
            break;
        }
    }
    if (header.empty()) throw DataError(fmt::format("{}: empty samples file", source));
    std::unordered_set<std::string> seen;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (!seen.insert(header[c]).second)
            throw DataError(fmt::format("{}:{}: duplicate header '{}' in column {}", source, line_no, header[c], c + 1));
    auto col_of = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    for (const char* req : {"x", "y", "response"})
        if (!col_of(req)) throw DataError(fmt::format("{}: missing required column '{}'", source, req));
    const auto cx = *col_of("x"), cy = *col_of("y"), cr = *col_of("response");
    const auto cf = col_of("fold"), cc = col_of("cluster");
    std::vector<std::size_t> pred_cols;
    SampleTable t;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == cx || c == cy || c == cr || (cf && c == *cf) || (cc && c == *cc)) continue;
        pred_cols.push_back(c);
        t.predictor_names.push_back(header[c]);
    }
    std::vector<std::vector<double>> rows;
    std::vector<int> folds, clusters;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw DataError(fmt::format("{}:{}: expected {} fields, found {}", source, line_no, header.size(),
                                        fields.size()));
        auto num = [&](std::size_t c) {
            auto v = parse_double(fields[c]);
            if (!v || !std::isfinite(*v))
                throw DataError(fmt::format("{}:{}: column '{}' value '{}' is not a finite number", source, line_no,
                                            header[c], fields[c]));
            return *v;
        };
        auto label = [&](std::size_t c) {
            auto v = parse_int(fields[c]);
            if (!v) throw DataError(fmt::format("{}:{}: column '{}' value '{}' is not an integer", source, line_no,
                                                header[c], fields[c]));
            return static_cast<int>(*v);
        };
        t.x.push_back(num(cx));
        t.y.push_back(num(cy));
        t.response.push_back(num(cr));
        if (cf) folds.push_back(label(*cf));
        if (cc) clusters.push_back(label(*cc));
        std::vector<double> r;
        r.reserve(pred_cols.size());
        for (auto c : pred_cols) r.push_back(num(c));
        rows.push_back(std::move(r));
    }
    t.predictors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(pred_cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < pred_cols.size(); ++j)
            t.predictors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    if (cf) t.fold = std::move(folds);
    if (cc) t.cluster = std::move(clusters);
    return t;
}

SampleTable read_samples(const fs::path& path)
{
    auto in = open_input(path);
    return read_samples(in, path.string());
}

void write_samples(std::ostream& out, const SampleTable& t)
{
    t.validate();
    out << "x,y,response";
    if (t.fold) out << ",fold";
    if (t.cluster) out << ",cluster";
    for (const auto& n : t.predictor_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < t.rows(); ++i) {
        out << format_exact(t.x.empty() ? 0.0 : t.x[i]) << ',' << format_exact(t.y.empty() ? 0.0 : t.y[i]) << ','
            << format_exact(t.response.empty() ? 0.0 : t.response[i]);
        if (t.fold) out << ',' << (*t.fold)[i];
        if (t.cluster) out << ',' << (*t.cluster)[i];
        for (std::size_t j = 0; j < t.predictor_names.size(); ++j)
            out << ',' << format_exact(t.predictors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        out << '\n';
    }
}

void write_samples(const fs::path& path, const SampleTable& table)
{
    write_atomic(path, [&](std::ostream& out) { write_samples(out, table); });
}

std::vector<int> read_label_column(const fs::path& path, const std::string& name)
{
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) header = split_csv(line);
    }
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(fmt::format("{}: no column '{}'", path.string(), name));
    const auto c = static_cast<std::size_t>(it - header.begin());
    std::vector<int> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw DataError(fmt::format("{}:{}: expected {} fields", path.string(), line_no, header.size()));
        auto v = parse_int(fields[c]);
        if (!v) throw DataError(fmt::format("{}:{}: '{}' value '{}' is not an integer", path.string(), line_no, name,
                                            fields[c]));
        out.push_back(static_cast<int>(*v));
    }
    return out;
}

void write_importance(const fs::path& path, std::span<const std::string> names, std::span<const double> values)
{
    write_atomic(path, [&](std::ostream& out) {
        out << "predictor,weight\n";
        for (std::size_t j = 0; j < names.size(); ++j) out << names[j] << ',' << format_exact(values[j]) << '\n';
    });
}

ImportanceWeights read_importance(const fs::path& path)
{
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> names;
    std::vector<double> values;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        if (header) {
            header = false;
            if (f.size() != 2 || f[0] != "predictor" || f[1] != "weight")
                throw DataError(fmt::format("{}: expected header 'predictor,weight'", path.string()));
            continue;
        }
        if (f.size() != 2) throw DataError(fmt::format("{}:{}: expected 2 fields", path.string(), line_no));
        auto v = parse_double(f[1]);
        if (!v || !std::isfinite(*v))
            throw DataError(fmt::format("{}:{}: weight '{}' is not a number", path.string(), line_no, f[1]));
        names.push_back(f[0]);
        values.push_back(*v);
    }
    return weights_from_importance(std::move(names), std::move(values));
}

void write_training_di(const fs::path& path, const SampleTable& samples, const TrainingDIResult& result)
{
    write_atomic(path, [&](std::ostream& out) {
        out << "index,x,y,fold,di\n";
        for (std::size_t i = 0; i < result.di.size(); ++i)
            out << i << ',' << format_exact(samples.x.empty() ? 0.0 : samples.x[i]) << ','
                << format_exact(samples.y.empty() ? 0.0 : samples.y[i]) << ',' << result.folds.fold_of[i] << ','
                << format_exact(result.di[i]) << '\n';
    });
}

std::vector<double> read_training_di(const fs::path& path)
{
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    std::optional<std::size_t> col;
    std::size_t width = 0;
    std::vector<double> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        if (!col) {
            auto it = std::find(f.begin(), f.end(), "di");
            if (it == f.end()) throw DataError(fmt::format("{}: no 'di' column", path.string()));
            col = static_cast<std::size_t>(it - f.begin());
            width = f.size();
            continue;
        }
        if (f.size() != width) throw DataError(fmt::format("{}:{}: expected {} fields", path.string(), line_no, width));
        auto v = parse_double(f[*col]);
        if (!v || !(*v >= 0.0))
            throw DataError(fmt::format("{}:{}: DI value '{}' is not a nonnegative number", path.string(), line_no,
                                        f[*col]));
        out.push_back(*v);
    }
    if (out.empty()) throw DataError(fmt::format("{}: no training DI values", path.string()));
    return out;
}

void write_cv_report(std::ostream& out, const CVReport& report)
{
    const auto strategy = report.assignment.describe();
    out << "fold,n,rmse,strategy\n";
    std::size_t n = 0;
    for (const auto& f : report.folds) {
        out << f.fold << ',' << f.n << ',' << format_exact(f.rmse) << ',' << strategy << '\n';
        n += f.n;
    }
    out << "pooled," << n << ',' << format_exact(report.rmse) << ',' << strategy << '\n';
    out << "mean_fold," << n << ',' << format_exact(report.mean_fold_rmse) << ',' << strategy << '\n';
}

void write_cv_report(const fs::path& path, const CVReport& report)
{
    write_atomic(path, [&](std::ostream& out) { write_cv_report(out, report); });
}

void write_calibration(std::ostream& out, const CalibrationTable& table)
{
    out << "quantile,scenario_id,cv_rmse,rmspe_in,rmspe_out,diff,n_inside,n_outside\n";
    for (const auto& r : table.rows)
        out << format_exact(r.quantile) << ',' << r.scenario_id << ',' << format_exact(r.cv_rmse) << ','
            << format_exact(r.rmspe_in) << ',' << format_exact(r.rmspe_out) << ',' << format_exact(r.diff) << ','
            << r.n_inside << ',' << r.n_outside << '\n';
}

void write_calibration(const fs::path& path, const CalibrationTable& table)
{
    write_atomic(path, [&](std::ostream& out) { write_calibration(out, table); });
}

void write_model(const fs::path& path, const TrainedForest& forest)
{
    const auto doc = forest.to_json();
    write_atomic(path, [&](std::ostream& out) { out << doc.dump() << '\n'; });
}

TrainedForest read_model(const fs::path& path)
{
    auto in = open_input(path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return TrainedForest::from_json(doc);
}

Palette parse_palette(const std::string& name)
{
    const auto n = lower(name);
    if (n == "viridis") return Palette::Viridis;
    if (n == "gray" || n == "grey" || n == "grayscale") return Palette::Grayscale;
    throw UsageError(fmt::format("unknown palette '{}' (viridis, gray)", name));
}

Rgb palette_color(Palette palette, double t)
{
    t = std::clamp(t, 0.0, 1.0);
    if (palette == Palette::Grayscale) {
        const auto v = static_cast<std::uint8_t>(std::lround(t * 255.0));
        return {v, v, v};
    }
    static constexpr std::array<Rgb, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    const double pos = t * static_cast<double>(stops.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(pos), stops.size() - 2);
    const double f = pos - static_cast<double>(i);
    Rgb out{};
    for (std::size_t k = 0; k < 3; ++k)
        out[k] = static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
    return out;
}

Rgb Image::pixel(std::size_t row, std::size_t col) const
{
    const auto o = (row * width + col) * 3;
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
}

Image render_heatmap(const Grid& grid, Palette palette, const std::vector<bool>& masked)
{
    if (grid.size() == 0) throw DataError("cannot render an empty grid");
    if (!masked.empty() && masked.size() != grid.size()) throw DataError("heatmap mask size differs from grid");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : grid.values)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!std::isfinite(lo)) throw DataError("cannot render a grid with no finite values");
    Image img;
    img.width = grid.cols();
    img.height = grid.rows();
    img.rgb.resize(grid.size() * 3);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = grid.values[i];
        Rgb c;
        if (!masked.empty() && masked[i])
            c = kMaskColor;
        else if (!std::isfinite(v))
            c = kMissingColor;
        else
            c = palette_color(palette, hi > lo ? (v - lo) / (hi - lo) : 0.0);
        std::copy(c.begin(), c.end(), img.rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
    return img;
}

void write_ppm(std::ostream& out, const Image& image)
{
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
}

void export_heatmap(const Grid& grid, const fs::path& path, Palette palette, const std::vector<bool>& masked)
{
    const auto img = render_heatmap(grid, palette, masked);
    write_atomic(path, [&](std::ostream& out) { write_ppm(out, img); }, true);
}

}  // namespace aoa::io
