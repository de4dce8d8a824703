#include "doctest.h"

#include "nsculpt/csv.hpp"
#include "nsculpt/error.hpp"
#include "nsculpt/hierarchy_eval.hpp"
#include "nsculpt/io.hpp"
#include "oracles.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

using namespace nsculpt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("nsculpt_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::size_t count(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
    return n;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(NSCULPT_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli_and_io") {

TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest round trip and verification") {
    const auto dir = scratch("manifest");
    RunManifest m;
    m.command = "gen";
    m.seed = 7;
    m.config["family"] = "separable";
    m.emit(dir, "a.txt", "hello\n");
    m.emit(dir, "b.csv", "x,y\r\n1,2\r\n");
    REQUIRE(m.artifacts.size() == 2);
    CHECK(m.artifacts[0].sha256 == sha256_hex("hello\n"));
    CHECK(read_file(dir / "a.txt") == "hello\n");
    const auto back = RunManifest::from_json(nlohmann::json::parse(json_text(m.to_json())));
    CHECK(back.artifacts == m.artifacts);
    CHECK(back.seed == 7);
    CHECK(back.verify(dir));
    write_file(dir / "a.txt", "tampered\n");
    CHECK_FALSE(back.verify(dir));
    CHECK_THROWS_AS(read_file(dir / "missing.txt"), FormatError);
}

TEST_CASE("json text is canonical") {
    const auto j = nlohmann::json::parse(R"({"b":1,"a":[1,2]})");
    const auto s = json_text(j);
    CHECK(s.back() == '\n');
    CHECK(s.find("\"a\"") < s.find("\"b\""));
    CHECK(json_text(nlohmann::json::parse(s)) == s);
}

TEST_CASE("csv quoting round trip") {
    CsvTable t({"name", "value"});
    t.add({"plain", format_double(0.1)});
    t.add({"has,comma", format_double(1e-300)});
    t.add({"quote \" and\nnewline", format_double(-2.5)});
    CHECK(csv_field("a\"b") == "\"a\"\"b\"");
    const auto rows = parse_csv(t.str());
    REQUIRE(rows.size() == 4);
    CHECK(rows[1] == std::vector<std::string>{"plain", "0.1"});
    CHECK(rows[2][0] == "has,comma");
    CHECK(std::stod(rows[2][1]) == 1e-300);
    CHECK(rows[3][0] == "quote \" and\nnewline");
    CHECK_THROWS_AS(t.add({"only one"}), DimensionError);
    CHECK_THROWS_AS(parse_csv("\"unterminated\r\n"), FormatError);
}

TEST_CASE("dot export covers alive units and unmasked edges") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto mlp = oracle::random_net(s, 3, 5, 0.3, 0.1);
        const auto h = detect(mlp, -0.01, 0.9);
        const auto dot = export_dot(h, mlp);
        std::size_t alive = 0;
        for (std::size_t l = 0; l <= mlp.depth(); ++l) alive += mlp.alive_units(l).size();
        std::size_t edges = 0;
        for (std::size_t l = 0; l < mlp.depth(); ++l)
            for (std::size_t j = 0; j < mlp.layers[l].fan_out; ++j)
                for (std::size_t i = 0; i < mlp.layers[l].fan_in; ++i)
                    if (mlp.layers[l].live(j, i) && mlp.alive(l, i) && mlp.alive(l + 1, j)) ++edges;
        CHECK(count(dot, "->") == edges);
        CHECK(count(dot, "subgraph cluster_") == h.modules.size());
        CHECK(count(dot, " [label=") >= alive);
        CHECK(count(export_dot(h), "->") == h.uses.size());
    }
    auto mlp = oracle::random_net(3, 3, 5, 0.0);
    auto h = detect(mlp, -0.01, 0.9);
    h.modules.front().units.clear();
    CHECK_THROWS_AS(export_dot(h, mlp), ExportError);
}

TEST_CASE("function graph dot") {
    const auto g = generate(ModularitySpec::separable(), 0);
    const auto dot = export_dot(g);
    CHECK(dot.rfind("digraph", 0) == 0);
    CHECK(count(dot, "->") == g.edges().size());
}

TEST_CASE("cli runs are deterministic") {
    const auto a = scratch("cli_a"), b = scratch("cli_b");
    const std::string tiny = " --epochs 80";
    for (const auto& dir : {a, b}) {
        const std::string d = dir.string();
        REQUIRE(run_cli("--seed 3 --out-dir " + d + "/gen gen --family separable") == 0);
        REQUIRE(run_cli("--seed 3 --out-dir " + d + "/train" + tiny + " train --graph " + d +
                        "/gen/graph.json --hidden 12,12") == 0);
        REQUIRE(run_cli("--seed 3 --out-dir " + d + "/prune" + tiny + " prune --graph " + d +
                        "/gen/graph.json --checkpoint " + d + "/train/checkpoint.json") == 0);
        REQUIRE(run_cli("--out-dir " + d + "/detect detect --checkpoint " + d + "/prune/sparse.json --graph " + d +
                        "/gen/graph.json") == 0);
        REQUIRE(run_cli("--out-dir " + d + "/analyze analyze --checkpoint " + d + "/prune/sparse.json --graph " + d +
                        "/gen/graph.json") == 0);
        REQUIRE(run_cli("--out-dir " + d + "/viz viz --input " + d + "/detect/hierarchy.json") == 0);
    }
    for (const char* step : {"gen", "train", "prune", "detect", "analyze", "viz"}) {
        // the recorded command line holds the per-run paths
        const auto ma = RunManifest::from_json(parse_json_file(a / step / kManifestName));
        const auto mb = RunManifest::from_json(parse_json_file(b / step / kManifestName));
        CHECK_MESSAGE(ma.artifacts == mb.artifacts, step);
        CHECK(ma.config == mb.config);
        CHECK(ma.verify(a / step));
    }
}

TEST_CASE("cli exit codes") {
    const auto dir = scratch("cli_codes").string();
    CHECK(run_cli("") == 2);
    CHECK(run_cli("gen --family nonsense --out-dir " + dir) == 2);
    CHECK(run_cli("--out-dir " + dir + " gen --family dense") == 0);
    CHECK(run_cli("--out-dir " + dir + " --tm 0.5 gen") == 2);

    // too few epochs to reach the accuracy target, so every flag is 0
    TrialConfig c;
    c.spec = ModularitySpec::separable();
    c.widths = {8};
    c.depths = {1};
    c.seeds = {0};
    c.epochs = 20;
    c.grid.p_u_values = {50};
    c.grid.p_e_values = {10};
    const auto eval_with = [&](double rate) {
        c.thresholds = {{"exact_structure", rate, false}};
        write_file(fs::path(dir) / "cfg.json", json_text(to_json(c)));
        return run_cli("--out-dir " + dir + "/ev eval --config " + dir + "/cfg.json");
    };
    CHECK(eval_with(1.5) == 2);
    CHECK(eval_with(1.0) == 1);
    CHECK(eval_with(0.0) == 0);
    CHECK(run_cli("--out-dir " + dir + " --batch 0 train --graph " + dir + "/graph.json --hidden 4") == 2);
    CHECK(run_cli("--out-dir " + dir + " train --graph " + dir + "/graph.json --hidden 4 --l2 -1") == 2);
}

}  // TEST_SUITE
