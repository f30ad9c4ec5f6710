#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crashscen/error.hpp"
#include "crashscen/pipeline.hpp"

using namespace crashscen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("crashscen_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

PipelineConfig small_config(const fs::path& dir) {
    PipelineConfig c;
    c.workdir = dir;
    c.synth_crashes = 600;
    c.seed = 3;
    c.k_min = 2;
    c.k_max = 6;
    c.replications = 20;
    c.samples = 500;
    c.threads = 2;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config keys and values") {
    PipelineConfig c;
    c.apply_text(R"(
# comment
workdir = "out dir"
seed = 11
indel = 1.5
substitution = 3
matrix_format = csv
k_range = 3..9
k = D=12, F=4
k.J = 2
penalty = 3
forbid = light:weather, a:b
force = x:y
R = 5
N = 40
scale = 1000
threads = 2
)");
    CHECK(c.workdir == "out dir");
    CHECK(c.seed == 11);
    CHECK(c.costs.indel == 1.5);
    CHECK(c.costs.substitution == 3.0);
    CHECK_FALSE(c.binary_matrix);
    CHECK(c.k_min == 3);
    CHECK(c.k_max == 9);
    CHECK(c.k.at(CrashConfig::D) == 12);
    CHECK(c.k.at(CrashConfig::F) == 4);
    CHECK(c.k.at(CrashConfig::J) == 2);
    CHECK(c.score.penalty == 3.0);
    CHECK(c.forbid.size() == 2);
    CHECK(c.force.size() == 1);
    CHECK(c.replications == 5);
    CHECK(c.samples == 40);
    CHECK(*c.scale == 1000.0);
    CHECK(c.raw_event() == fs::path("out dir") / "raw" / "event.csv");

    CHECK_THROWS_AS(c.set("bogus", "1"), ConfigError);
    CHECK_THROWS_AS(c.set("k_range", "1..5"), ConfigError);
    CHECK_THROWS_AS(c.set("k_range", "9..3"), ConfigError);
    CHECK_THROWS_AS(c.set("seed", "abc"), ConfigError);
    CHECK_THROWS_AS(c.set("matrix_format", "xml"), ConfigError);
    CHECK_THROWS_AS(c.set("k", "Q=3"), ConfigError);
    CHECK_THROWS_AS(c.set("forbid", "nocolon"), ConfigError);
    CHECK_THROWS_AS(c.apply_text("seed 4"), ConfigError);
    try {
        c.apply_text("seed = 1\nnope = 2\n", "my.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("my.cfg:2") != std::string::npos);
    }
    CHECK_THROWS_AS(c.apply_file("/nonexistent/file.cfg"), ConfigError);
}

TEST_CASE("stage inputs must exist") {
    const fs::path dir = fresh_dir("missing");
    PipelineConfig c = small_config(dir);
    CHECK_THROWS_AS(run_stage("ingest", c), DataError);
    CHECK_THROWS_AS(run_stage("cluster", c), DataError);
    CHECK_THROWS_AS(run_stage("query", c), DataError);
    CHECK_THROWS_AS(run_stage("nope", c), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("full pipeline on a small synthetic set") {
    const fs::path a = fresh_dir("all");
    const fs::path b = fresh_dir("steps");
    const auto summaries = run_all(small_config(a), true);
    CHECK(summaries.size() == pipeline_stages().size());

    for (const auto& st : pipeline_stages()) run_stage(st, small_config(b));
    const auto da = directory_digests(a);
    const auto db = directory_digests(b);
    CHECK(da == db);

    for (const char* f : {"sequences.jsonl", "quality.csv", "clusters.json", "assignments.csv", "network.json",
                          "network.dot", "strength.csv", "stability.json", "report.md", "manifest.json",
                          "queries/index.json"})
        CHECK_MESSAGE(fs::exists(a / f), f);
    for (const auto& e : fs::recursive_directory_iterator(a))
        CHECK_MESSAGE(e.path().extension() != ".partial", e.path().string());

    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(manifest.size() == da.size());
    for (const auto& [rel, digest] : da) CHECK(manifest.at(rel) == digest);

    std::ifstream q(a / "quality.csv");
    std::string line;
    std::getline(q, line);
    CHECK(line == "config,k,asw_w,hg,pbc,hc,z_asw_w,z_hg,z_pbc,z_hc,degenerate");
    std::map<std::string, int> rows;
    while (std::getline(q, line)) ++rows[line.substr(0, line.find(','))];
    REQUIRE(rows.count("D"));
    CHECK(rows["D"] == 5);

    run_stage("cluster", small_config(a));
    CHECK(directory_digests(a) == da);

    const auto clusters = nlohmann::json::parse(slurp(a / "clusters.json"));
    double share = 0.0;
    for (const auto& cfg : clusters.at("configs")) share += cfg.at("share_of_all").get<double>();
    CHECK(share == doctest::Approx(1.0));

    const auto ld = load_learning_data(a);
    CHECK(ld.population > 0.0);
    CHECK(ld.data.variables().front().name == "seqtype");

    const std::string js = summary_json(summaries, 0);
    const auto sj = nlohmann::json::parse(js);
    CHECK(sj.at("exit_code") == 0);
    CHECK(sj.at("stages").size() == summaries.size());

    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("a failing stage leaves no partial files") {
    const fs::path dir = fresh_dir("partial");
    PipelineConfig c = small_config(dir);
    run_stage("synth", c);
    run_stage("ingest", c);
    run_stage("encode", c);
    std::ofstream(dir / "sequences.jsonl") << "{not json\n";
    CHECK_THROWS_AS(run_stage("distmat", c), DataError);
    for (const auto& e : fs::recursive_directory_iterator(dir)) CHECK(e.path().extension() != ".partial");
    CHECK_FALSE(fs::exists(dir / "distmat"));
    fs::remove_all(dir);
}

TEST_CASE("file digests") {
    const fs::path dir = fresh_dir("digest");
    std::ofstream(dir / "x.txt", std::ios::binary) << "a";
    CHECK(file_digest(dir / "x.txt") == "af63dc4c8601ec8c");
    std::ofstream(dir / "manifest.json") << "{}";
    CHECK(directory_digests(dir).size() == 1);
    fs::remove_all(dir);
}
