#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "markerforge/dataset.hpp"
#include "markerforge/image.hpp"
#include "markerforge/rng.hpp"

using namespace markerforge;
using namespace markerforge::imaging;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

fs::path work_dir() {
    static const fs::path dir = [] {
        const auto d = fs::temp_directory_path() / "mf_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run(const std::string& args) {
    static int counter = 0;
    const auto out_path = work_dir() / ("out" + std::to_string(counter++));
    const std::string cmd = std::string(MARKERFORGE_BIN) + " " + args + " > " +
                            out_path.string() + " 2>/dev/null";
    const int raw = std::system(cmd.c_str());
    RunResult result;
    result.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(out_path);
    std::stringstream ss;
    ss << in.rdbuf();
    result.out = ss.str();
    return result;
}

std::string make_assets() {
    static std::string root;
    if (!root.empty()) return root;
    const auto dir = work_dir() / "assets";
    fs::create_directories(dir / "markers");
    fs::create_directories(dir / "bgs");
    Rng rng(55);
    for (int i = 0; i < 2; ++i) {
        auto marker = Image::create(32, 24, 3);
        for (auto& v : marker.data) v = float(rng.uniform());
        marker = blur5(marker);
        write_png((dir / "markers" / ("m" + std::to_string(i) + ".png")).string(),
                  marker);
        auto bg = Image::create(128, 96, 3);
        for (auto& v : bg.data) v = float(rng.uniform());
        bg = blur5(bg);
        write_png((dir / "bgs" / ("b" + std::to_string(i) + ".png")).string(), bg);
    }
    root = dir.string();
    return root;
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TEST_CASE("help output matches the golden copies") {
    const std::string golden = MARKERFORGE_GOLDEN_DIR;

    const auto root = run("--help");
    CHECK(root.code == 0);
    CHECK(root.out == read_file(golden + "/help.txt"));

    // Per-subcommand help carries every flag with its default.
    const auto gen = run("generate --help");
    CHECK(gen.code == 0);
    CHECK(gen.out == read_file(golden + "/help_generate.txt"));
}

TEST_CASE("missing arguments exit with the usage code") {
    CHECK(run("").code == 1);
    CHECK(run("explode").code == 1);
    CHECK(run("generate").code == 1);  // required options absent
    CHECK(run("losses --flow /nonexistent.flo").code == 1);  // validator
}

TEST_CASE("generate and the downstream subcommands cooperate") {
    const auto assets = make_assets();
    const auto ds = (work_dir() / "ds").string();

    const auto gen = run("generate --markers " + assets + "/markers" +
                         " --backgrounds " + assets + "/bgs --out " + ds +
                         " --count 4 --seed 9 --canvas 128 96");
    REQUIRE(gen.code == 0);
    const auto summary = json::parse(gen.out);
    CHECK(summary.at("samples") == 4);
    REQUIRE(fs::exists(ds + "/manifest.json"));

    SUBCASE("losses evaluates a sample's own flow") {
        const auto sample = ds + "/samples/00000001";
        const auto r = run("losses --flow " + sample + "/flow.flo --transform " +
                           sample + "/transform.json");
        REQUIRE(r.code == 0);
        const auto j = json::parse(r.out);
        CHECK(j.at("l_syn").at("mean").get<double>() < 1e-3);
    }

    SUBCASE("match gt copies the stored flow") {
        const auto sample = ds + "/samples/00000002";
        const auto out_flo = (work_dir() / "gt.flo").string();
        const auto r =
            run("match --method gt --sample " + sample + " --out " + out_flo);
        REQUIRE(r.code == 0);
        const auto j = json::parse(r.out);
        CHECK(j.at("failed") == false);
        CHECK(fs::exists(out_flo));

        const auto original = read_flo(sample + "/flow.flo");
        const auto copied = read_flo(out_flo);
        CHECK(original.target == copied.target);
        CHECK(original.valid == copied.valid);
    }

    SUBCASE("bench consumes the dataset manifest directly") {
        const auto report_path = (work_dir() / "report.json").string();
        const auto table_path = (work_dir() / "table.txt").string();
        const auto svg_path = (work_dir() / "curves.svg").string();
        const auto r = run("bench --manifest " + ds +
                           "/manifest.json --method gt --out " + report_path +
                           " --table " + table_path + " --svg " + svg_path);
        REQUIRE(r.code == 0);
        REQUIRE(fs::exists(report_path));

        std::ifstream in(report_path);
        json report;
        in >> report;
        CHECK(report.at("subsets").contains("synthetic"));
        CHECK(report.at("records").size() == 4);

        std::ifstream tin(table_path);
        std::stringstream ss;
        ss << tin.rdbuf();
        CHECK(ss.str().find("synthetic") != std::string::npos);

        std::ifstream sin(svg_path);
        std::stringstream sv;
        sv << sin.rdbuf();
        CHECK(sv.str().find("<svg") != std::string::npos);

        SUBCASE("report re-renders a stored report") {
            const auto rr = run("report --in " + report_path + " --format table");
            CHECK(rr.code == 0);
            CHECK(rr.out.find("synthetic") != std::string::npos);

            const auto bad = run("report --in " + report_path +
                                 " --format interpretive-dance");
            CHECK(bad.code == 1);
        }
    }

    SUBCASE("match failure writes a sentinel and still exits zero") {
        // A flat marker has no corners, so the sparse pipeline must fail.
        auto flat = Image::create(32, 24, 3);
        for (auto& v : flat.data) v = 0.5f;
        const auto flat_path = (work_dir() / "flat.png").string();
        write_png(flat_path, flat);

        const auto out_flo = (work_dir() / "failed.flo").string();
        const auto r = run("match --method homography --marker " + flat_path +
                           " --ref " + flat_path + " --out " + out_flo);
        CHECK(r.code == 0);
        const auto j = json::parse(r.out);
        CHECK(j.at("failed") == true);
        REQUIRE(fs::exists(out_flo + ".failed.json"));
        std::ifstream in(out_flo + ".failed.json");
        json sentinel;
        in >> sentinel;
        CHECK(sentinel.at("failed") == true);
        CHECK(sentinel.at("reason") == "insufficient matches");
    }
}

TEST_CASE("data errors exit with code two") {
    const auto bad_flo = (work_dir() / "bad.flo").string();
    {
        std::ofstream out(bad_flo);
        out << "this is not a flow file";
    }
    const auto t_path = (work_dir() / "t.json").string();
    {
        std::ofstream out(t_path);
        out << R"({"kind":"affine","marker_size":[16,12],)"
            << R"("reference_size":[64,48],"params":[0,0,1,10,10]})";
    }
    const auto r = run("losses --flow " + bad_flo + " --transform " + t_path);
    CHECK(r.code == 2);
}

TEST_CASE("config errors exit with code one") {
    // losses without either loss source selected
    const auto flo = (work_dir() / "ok.flo").string();
    {
        auto flow = FlowField::create(4, 3);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 4; ++x) flow.set(x, y, {double(x), double(y)});
        write_flo(flo, flow);
    }
    CHECK(run("losses --flow " + flo).code == 1);
}

TEST_CASE("config files fill in defaults but flags win") {
    const auto assets = make_assets();
    const auto cfg = (work_dir() / "gen.ini").string();
    {
        std::ofstream out(cfg);
        out << "[generate]\n"
            << "count=2\n"
            << "seed=5\n"
            << "canvas=128 96\n";
    }
    const auto ds1 = (work_dir() / "cfg_ds1").string();
    const auto r1 = run("--config " + cfg + " generate --markers " + assets +
                        "/markers --backgrounds " + assets + "/bgs --out " + ds1);
    REQUIRE(r1.code == 0);
    CHECK(json::parse(r1.out).at("samples") == 2);

    const auto ds2 = (work_dir() / "cfg_ds2").string();
    const auto r2 = run("--config " + cfg + " generate --count 3 --markers " +
                        assets + "/markers --backgrounds " + assets +
                        "/bgs --out " + ds2);
    REQUIRE(r2.code == 0);
    CHECK(json::parse(r2.out).at("samples") == 3);
}
