#include <doctest.h>

#include "evsyn/error.hpp"
#include "evsyn/io.hpp"
#include "evsyn/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <map>

using namespace evsyn;
using namespace evsyn::pipeline;
namespace fs = std::filesystem;

namespace {

const fs::path case_study = fs::path(EVSYN_SOURCE_DIR) / "data/case_study";

// A copy of the case study in a scratch directory with short chains and few draws.
fs::path scratch_case(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "evsyn_test_pipeline" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::copy(case_study, dir, fs::copy_options::recursive);
    auto cfg = io::json::parse(io::read_text(dir / "config.json"));
    cfg["out"] = "out";
    cfg["draws"] = 50;
    cfg["chain"]["iterations"] = 2000;
    cfg["chain"]["burn_in"] = 1000;
    io::write_text(dir / "config.json", cfg.dump(2));
    return dir;
}

std::map<std::string, std::string> digests(const fs::path& manifest)
{
    std::map<std::string, std::string> out;
    for (const auto& e : io::json::parse(io::read_text(manifest)).at("inputs"))
        out[fs::path(e.at("path").get<std::string>()).filename().string()] = e.at("sha256").get<std::string>();
    return out;
}

} // namespace

TEST_CASE("sha256 of known strings")
{
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("load_config resolves paths and applies overrides")
{
    Overrides ov;
    ov.seed = 7;
    ov.draws = 10;
    const auto c = load_config(case_study / "config.json", ov);
    CHECK(c.seed == 7);
    CHECK(c.draws == 10);
    CHECK(c.out.is_absolute());
    REQUIRE_FALSE(c.curves.empty());
    CHECK(fs::exists(c.curves.front().km));
    CHECK(c.models.size() == 2);
}

TEST_CASE("load_config names a missing input")
{
    const fs::path dir = scratch_case("missing");
    fs::remove(dir / "curves/TAX327_OS_DpP_km.csv");
    try {
        (void)load_config(dir / "config.json");
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("missing input file") != std::string::npos);
        CHECK(std::string(e.what()).find("TAX327_OS_DpP_km.csv") != std::string::npos);
    }
}

TEST_CASE("pipeline recovers the fixture hazard ratios and records digests")
{
    const fs::path dir = scratch_case("run");
    const auto result = run_pipeline(load_config(dir / "config.json"));
    CHECK_FALSE(result.outputs.empty());
    const auto os = io::read_studies(dir / "out/hr_os.csv");
    const std::map<std::string, double> target = {
        {"TAX327", 0.76}, {"CALGB9182", 0.96}, {"CCI-NOV22", 0.81}, {"Berry", 0.95}};
    for (const auto& r : os) {
        INFO(r.study);
        CHECK(std::abs(std::exp(*r.log_hr) - target.at(r.study)) <= 0.05);
    }
    const auto pfs = io::read_studies(dir / "out/hr_pfs.csv");
    for (const auto& r : pfs) {
        if (r.study == "CALGB9182") CHECK(std::abs(std::exp(*r.log_hr) - 0.74) <= 0.05);
        if (r.study == "Berry") CHECK(std::abs(std::exp(*r.log_hr) - 0.63) <= 0.05);
    }

    const auto before = digests(dir / "out/manifest.json");
    run_pipeline(load_config(dir / "config.json"));
    CHECK(digests(dir / "out/manifest.json") == before);

    io::write_text(dir / "curves/Berry_OS_P_risk.csv", io::read_text(dir / "curves/Berry_OS_P_risk.csv") + "\n");
    run_pipeline(load_config(dir / "config.json"));
    const auto after = digests(dir / "out/manifest.json");
    for (const auto& [file, digest] : before) {
        INFO(file);
        if (file == "Berry_OS_P_risk.csv") CHECK(after.at(file) != digest);
        else CHECK(after.at(file) == digest);
    }
}

TEST_CASE("a failing stage leaves partial files and names the stage")
{
    const fs::path dir = scratch_case("failing");
    auto cfg = io::json::parse(io::read_text(dir / "config.json"));
    cfg["models"]["3state"]["interventions"][2]["std_pd"]["log_hr"]["estimate"] = "brma:NOPE/PFS";
    io::write_text(dir / "config.json", cfg.dump(2));
    try {
        run_pipeline(load_config(dir / "config.json"));
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("stage markov") != std::string::npos);
    }
    CHECK(fs::exists(dir / "out/hr_os.csv.partial"));
    CHECK_FALSE(fs::exists(dir / "out/hr_os.csv"));
    CHECK_FALSE(fs::exists(dir / "out/manifest.json"));
}
