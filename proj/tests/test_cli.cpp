// Spawns the real CLI binary to pin the exit-code contract and the verb
// surface. The binary path comes from the build system.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef EVOPOISON_CLI_PATH
#error "EVOPOISON_CLI_PATH must be defined"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    std::string command = std::string(EVOPOISON_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int status = std::system(command.c_str());
    return WEXITSTATUS(status);
}

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() / ("evopoison_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }

    fs::path write(const std::string& name, const std::string& content) const {
        fs::path path = dir / name;
        std::ofstream out(path);
        out << content;
        return path;
    }
};

} // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate --config x.json") == 2);
    CHECK(run("build") == 2);                      // missing --config
    CHECK(run("build --config /no/such.json") == 2);
}

TEST_CASE("full verb sequence over a fixture workspace") {
    Scratch scratch;
    scratch.write("corpus.jsonl",
                  R"({"id":"d","text":"Aspirin <REL:treats> Fever. Honey <REL:soothes> Cough."})"
                  "\n");
    scratch.write("targets.jsonl",
                  R"({"id":"t1","query":"What treats Fever?","target_answer":"Glacier Tonic","correct_answer":"Aspirin"})"
                  "\n"
                  R"({"id":"t2","query":"What soothes Cough?","target_answer":"Velvet Foil","correct_answer":"Honey"})"
                  "\n");
    auto config = scratch.write("cfg.json", R"({
        "seed": 5, "mock_mode": true, "chunk_size": 64, "chunk_overlap": 8,
        "top_k": 4, "search_mode": "local", "extraction_mode": "pattern",
        "execution_date": "2025-06-01", "pair_budget": 1,
        "paths": {"corpus": ")" + (scratch.dir / "corpus.jsonl").string() +
                                           R"(", "targets": ")" +
                                           (scratch.dir / "targets.jsonl").string() +
                                           R"(", "workspace": ")" +
                                           (scratch.dir / "ws").string() + R"("}
    })");
    std::string cfg = " --config " + config.string();

    CHECK(run("build" + cfg) == 0);
    CHECK(run("attack" + cfg + " --mode multi") == 0);
    CHECK(run("inject" + cfg) == 0);
    CHECK(run("query" + cfg + " --query \"What treats Fever?\" --snapshot poisoned") == 0);
    CHECK(run("eval" + cfg + " --defense detect") == 0);
    CHECK(run("report" + cfg) == 0);

    CHECK(fs::exists(scratch.dir / "ws" / "graphs" / "clean.json"));
    CHECK(fs::exists(scratch.dir / "ws" / "graphs" / "poisoned.json"));
    CHECK(fs::exists(scratch.dir / "ws" / "reports" / "report.json"));
}

TEST_CASE("an unreachable live provider exits 3") {
    Scratch scratch;
    scratch.write("corpus.jsonl", R"({"id":"d","text":"Aspirin <REL:treats> Fever."})" "\n");
    scratch.write("targets.jsonl",
                  R"({"id":"t1","query":"q","target_answer":"X"})" "\n");
    auto config = scratch.write("cfg3.json", R"({
        "seed": 5, "mock_mode": false, "chunk_size": 64, "chunk_overlap": 8,
        "execution_date": "2025-06-01",
        "paths": {"corpus": ")" + (scratch.dir / "corpus.jsonl").string() +
                                           R"(", "targets": ")" +
                                           (scratch.dir / "targets.jsonl").string() +
                                           R"(", "workspace": ")" +
                                           (scratch.dir / "ws3").string() + R"("},
        "providers": {
          "generator": {"endpoint_url": "http://127.0.0.1:9", "model_name": "m",
                         "timeout_seconds": 1, "retries": 0},
          "fabricator": {"endpoint_url": "http://127.0.0.1:9", "model_name": "m",
                          "timeout_seconds": 1, "retries": 0},
          "evaluator": {"endpoint_url": "http://127.0.0.1:9", "model_name": "m",
                         "timeout_seconds": 1, "retries": 0}
        }
    })");
    CHECK(run("build --config " + config.string()) == 3);
}

TEST_CASE("inject before attack exits 2") {
    Scratch scratch;
    scratch.write("corpus.jsonl", R"({"id":"d","text":"Aspirin <REL:treats> Fever."})" "\n");
    scratch.write("targets.jsonl",
                  R"({"id":"t1","query":"q","target_answer":"X"})" "\n");
    auto config = scratch.write("cfg2.json", R"({
        "seed": 5, "mock_mode": true, "chunk_size": 64, "chunk_overlap": 8,
        "execution_date": "2025-06-01",
        "paths": {"corpus": ")" + (scratch.dir / "corpus.jsonl").string() +
                                           R"(", "targets": ")" +
                                           (scratch.dir / "targets.jsonl").string() +
                                           R"(", "workspace": ")" +
                                           (scratch.dir / "ws2").string() + R"("}
    })");
    std::string cfg = " --config " + config.string();
    CHECK(run("build" + cfg) == 0);
    CHECK(run("inject" + cfg) == 2);
}
