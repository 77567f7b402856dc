#pragma once
// Experiment configuration: one JSON document controlling the whole run.
// mock_mode forces end-to-end seed determinism; live mode binds OpenAI-
// compatible HTTP providers per role.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evopoison/evaluation.hpp"
#include "evopoison/llm.hpp"
#include "evopoison/pipeline.hpp"

namespace evopoison::cli {

struct ExperimentConfig {
    std::uint64_t seed = 42;
    bool mock_mode = true;

    std::size_t chunk_size = 600;
    std::size_t chunk_overlap = 100;
    std::size_t top_k = 5;
    std::string search_mode = "global"; // global | local | both

    std::string extraction_mode = "pattern"; // pattern | llm
    std::size_t attack_word_budget = 120;
    std::size_t pair_budget = 5;
    std::size_t corpora_per_target = 1;
    bool attack_background = true;

    std::string judge_mode = "exact"; // exact | llm
    std::vector<int> hits_ns = {1, 3, 5, 10};
    std::string defense = "none"; // none | paraphrase | instruction | detect

    std::string execution_date; // "YYYY-MM-DD"; today when empty
    bool log_transcripts = false;

    struct Paths {
        std::string corpus;    // JSONL, one {"id","text"} per line
        std::string targets;   // JSONL, one {"id","query","target_answer"[,"correct_answer"]}
        std::string workspace; // output directory
    } paths;

    // keys: generator, fabricator, evaluator, and optionally embedder, scorer
    std::map<std::string, llm::ProviderConfig> providers;

    static ExperimentConfig from_json(const nlohmann::json& doc);
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    void validate() const;

    std::vector<rag::SearchMode> search_modes() const;
    rag::ExtractionMode extraction() const;
    eval::JudgeMode judge() const;
    rag::PipelineOptions pipeline_options() const;

    // Mock gateway in mock_mode, HTTP providers otherwise. The environment
    // variable EVOPOISON_API_KEY overrides missing api keys.
    llm::LlmGateway make_gateway() const;
};

std::string today_iso_date();

} // namespace evopoison::cli
