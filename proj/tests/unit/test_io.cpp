#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "aoa/io.hpp"
#include "gen.hpp"

using namespace aoa;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("aoa_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Grid read_text(const std::string& s)
{
    std::istringstream in(s);
    return io::read_grid(in, "test.asc");
}

std::string error_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("read_grid: single cell and nodata")
{
    const auto g = read_text("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n7\n");
    CHECK(g.rows() == 1);
    CHECK(g.values[0] == 7.0);

    const auto m = read_text("NCOLS 2\nNROWS 1\nXLLCENTER 0.5\nYLLCENTER 0.5\nCellSize 1\nnodata_value -1\n-1 3\n");
    CHECK(std::isnan(m.values[0]));
    CHECK(m.values[1] == 3.0);
    CHECK(m.geometry.xllcorner == 0.0);
}

TEST_CASE("read_grid: errors name the file and line")
{
    const auto short_row = error_of([] { read_text("ncols 3\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n"); });
    CHECK(short_row.find("expected 3 values, found 2") != std::string::npos);
    const auto bad_value = error_of([] { read_text("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 x\n"); });
    CHECK(bad_value.find("test.asc:7:") != std::string::npos);
    const auto bad_header = error_of([] { read_text("ncols 2\nrows 1\n"); });
    CHECK(bad_header.find("nrows") != std::string::npos);
    CHECK_THROWS_AS(read_text("ncols 0\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n"), DataError);
}

TEST_CASE("write_grid: 100 x 100 random grid round-trips at emitted precision")
{
    gen::Gen g(51);
    GridGeometry geom;
    geom.rows = geom.cols = 100;
    geom.xllcorner = 500000.0;
    geom.yllcorner = 4000000.0;
    geom.cellsize = 30.0;
    Grid grid(geom);
    for (auto& v : grid.values) v = g.normal(0.0, 100.0);
    grid.values[17] = kMissing;

    std::ostringstream out;
    io::write_grid(out, grid, 17);
    const auto back = read_text(out.str());
    CHECK(back.geometry.same_layout(geom));
    for (std::size_t c = 0; c < grid.size(); ++c) {
        if (c == 17) {
            CHECK(std::isnan(back.values[c]));
            continue;
        }
        CHECK(back.values[c] == grid.values[c]);
    }

    std::ostringstream six;
    io::write_grid(six, grid, 6);
    const auto coarse = read_text(six.str());
    for (std::size_t c = 0; c < grid.size(); ++c)
        if (c != 17) CHECK(std::fabs(coarse.values[c] - grid.values[c]) <= 1e-5 * std::fabs(grid.values[c]) + 1e-12);
}

TEST_CASE("samples: round-trip, labels, errors")
{
    gen::Gen g(52);
    auto t = g.table(15, 3);
    t.fold = std::vector<int>{};
    for (int i = 0; i < 15; ++i) t.fold->push_back(i % 4);
    std::ostringstream out;
    io::write_samples(out, t);
    std::istringstream in(out.str());
    const auto back = io::read_samples(in);
    CHECK(back.predictor_names == t.predictor_names);
    CHECK(back.predictors == t.predictors);
    CHECK(back.x == t.x);
    CHECK(back.response == t.response);
    REQUIRE(back.fold);
    CHECK(*back.fold == *t.fold);
    CHECK(folds_from_labels(*back.fold).k == 4);

    auto parse = [](const std::string& s) {
        std::istringstream in(s);
        return io::read_samples(in, "s.csv");
    };
    CHECK_THROWS_AS(parse("x,y,a\n1,2,3\n"), DataError);
    CHECK_THROWS_AS(parse("x,y,response,a,a\n1,2,3,4,5\n"), DataError);
    const auto msg = error_of([&] { parse("x,y,response,a\n1,2,3,4\n1,2,oops,4\n"); });
    CHECK(msg.find("s.csv:3:") != std::string::npos);
    CHECK_THROWS_AS(parse("x,y,response,fold,a\n1,2,3,1.5,4\n"), DataError);
}

TEST_CASE("model: JSON round-trip predicts identically")
{
    gen::Gen g(53);
    const auto t = g.table(50, 3);
    ForestConfig c;
    c.n_trees = 20;
    const auto f = train_forest(t, c);
    const auto dir = scratch_dir("model");
    io::write_model(dir / "m.json", f);
    const auto back = io::read_model(dir / "m.json");
    CHECK(back.predict(t.predictors) == f.predict(t.predictors));
    CHECK(back.predictor_names() == f.predictor_names());
    std::ofstream(dir / "bad.json") << "{\"schema\": \"something-else\"}";
    CHECK_THROWS_AS(io::read_model(dir / "bad.json"), DataError);
}

TEST_CASE("heatmap: constant grid, endpoints, mask colour, all missing")
{
    GridGeometry geom;
    geom.rows = 2;
    geom.cols = 2;
    const auto flat = io::render_heatmap(Grid(geom, 3.0), io::Palette::Viridis);
    CHECK(flat.width == 2);
    CHECK(flat.height == 2);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(flat.pixel(r, c) == flat.pixel(0, 0));

    GridGeometry pair;
    pair.rows = 1;
    pair.cols = 2;
    Grid ends(pair);
    ends.values = {0.0, 5.0};
    const auto img = io::render_heatmap(ends, io::Palette::Grayscale);
    CHECK(img.pixel(0, 0) == io::palette_color(io::Palette::Grayscale, 0.0));
    CHECK(img.pixel(0, 1) == io::palette_color(io::Palette::Grayscale, 1.0));

    Grid mixed(geom, 1.0);
    mixed.values[3] = kMissing;
    const auto masked = io::render_heatmap(mixed, io::Palette::Viridis, {false, true, false, false});
    CHECK(masked.pixel(0, 1) == io::kMaskColor);
    CHECK(masked.pixel(1, 1) == io::kMissingColor);

    CHECK_THROWS_AS(io::render_heatmap(Grid(geom), io::Palette::Viridis), DataError);
    CHECK_THROWS_AS(io::parse_palette("rainbow"), UsageError);

    const auto dir = scratch_dir("ppm");
    io::export_heatmap(ends, dir / "h.ppm");
    std::ifstream in(dir / "h.ppm", std::ios::binary);
    std::string magic;
    in >> magic;
    CHECK(magic == "P6");
}
