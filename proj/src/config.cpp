#include "evopoison/config.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>

#include "evopoison/errors.hpp"

namespace evopoison::cli {

using nlohmann::json;

std::string today_iso_date() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[16];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%d", &tm);
    return buffer;
}

namespace {

llm::ProviderConfig provider_from_json(const json& doc, std::uint64_t default_seed) {
    llm::ProviderConfig config;
    config.endpoint_url = doc.value("endpoint_url", "");
    config.model_name = doc.value("model_name", "");
    config.api_key = doc.value("api_key", "");
    config.max_parallel = doc.value("max_parallel", 1);
    config.timeout_seconds = doc.value("timeout_seconds", 30.0);
    config.retries = doc.value("retries", 2);
    config.seed = doc.value("seed", default_seed);
    return config;
}

json provider_to_json(const llm::ProviderConfig& config) {
    return json{{"endpoint_url", config.endpoint_url},
                {"model_name", config.model_name},
                {"api_key", config.api_key.empty() ? "" : "<redacted>"},
                {"max_parallel", config.max_parallel},
                {"timeout_seconds", config.timeout_seconds},
                {"retries", config.retries},
                {"seed", config.seed}};
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    ExperimentConfig config;
    config.seed = doc.value("seed", config.seed);
    config.mock_mode = doc.value("mock_mode", config.mock_mode);
    config.chunk_size = doc.value("chunk_size", config.chunk_size);
    config.chunk_overlap = doc.value("chunk_overlap", config.chunk_overlap);
    config.top_k = doc.value("top_k", config.top_k);
    config.search_mode = doc.value("search_mode", config.search_mode);
    config.extraction_mode = doc.value("extraction_mode", config.extraction_mode);
    config.attack_word_budget = doc.value("attack_word_budget", config.attack_word_budget);
    config.pair_budget = doc.value("pair_budget", config.pair_budget);
    config.corpora_per_target = doc.value("corpora_per_target", config.corpora_per_target);
    config.attack_background = doc.value("attack_background", config.attack_background);
    config.judge_mode = doc.value("judge_mode", config.judge_mode);
    if (doc.contains("hits_ns")) config.hits_ns = doc["hits_ns"].get<std::vector<int>>();
    config.defense = doc.value("defense", config.defense);
    config.execution_date = doc.value("execution_date", "");
    config.log_transcripts = doc.value("log_transcripts", config.log_transcripts);

    if (doc.contains("paths")) {
        const auto& paths = doc["paths"];
        config.paths.corpus = paths.value("corpus", "");
        config.paths.targets = paths.value("targets", "");
        config.paths.workspace = paths.value("workspace", "");
    }
    if (doc.contains("providers")) {
        for (const auto& [role, value] : doc["providers"].items())
            config.providers[role] = provider_from_json(value, config.seed);
    }
    if (config.execution_date.empty()) config.execution_date = today_iso_date();
    return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfigError("cannot read config file: " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw InvalidConfigError("config file is not valid JSON: " + path.string());
    return from_json(doc);
}

json ExperimentConfig::to_json() const {
    json providers = json::object();
    for (const auto& [role, provider] : this->providers)
        providers[role] = provider_to_json(provider);
    return json{{"seed", seed},
                {"mock_mode", mock_mode},
                {"chunk_size", chunk_size},
                {"chunk_overlap", chunk_overlap},
                {"top_k", top_k},
                {"search_mode", search_mode},
                {"extraction_mode", extraction_mode},
                {"attack_word_budget", attack_word_budget},
                {"pair_budget", pair_budget},
                {"corpora_per_target", corpora_per_target},
                {"attack_background", attack_background},
                {"judge_mode", judge_mode},
                {"hits_ns", hits_ns},
                {"defense", defense},
                {"execution_date", execution_date},
                {"log_transcripts", log_transcripts},
                {"paths", json{{"corpus", paths.corpus},
                               {"targets", paths.targets},
                               {"workspace", paths.workspace}}},
                {"providers", std::move(providers)}};
}

void ExperimentConfig::validate() const {
    if (chunk_size <= chunk_overlap)
        throw InvalidConfigError("chunk_size must exceed chunk_overlap");
    if (top_k == 0) throw InvalidConfigError("top_k must be at least 1");
    if (pair_budget == 0) throw InvalidConfigError("pair_budget must be at least 1");
    if (corpora_per_target == 0)
        throw InvalidConfigError("corpora_per_target must be at least 1");
    if (search_mode != "global" && search_mode != "local" && search_mode != "both")
        throw InvalidConfigError("search_mode must be global, local, or both");
    if (extraction_mode != "pattern" && extraction_mode != "llm")
        throw InvalidConfigError("extraction_mode must be pattern or llm");
    if (judge_mode != "exact" && judge_mode != "llm")
        throw InvalidConfigError("judge_mode must be exact or llm");
    if (defense != "none" && defense != "paraphrase" && defense != "instruction" &&
        defense != "detect")
        throw InvalidConfigError("defense must be none, paraphrase, instruction, or detect");
    for (int n : hits_ns)
        if (n <= 0) throw InvalidConfigError("hits_ns entries must be positive");
    for (const auto& [role, provider] : providers) provider.validate();
    if (!mock_mode) {
        for (const char* role : {"generator", "fabricator", "evaluator"}) {
            auto it = providers.find(role);
            if (it == providers.end() || it->second.endpoint_url.empty())
                throw InvalidConfigError(std::string("live mode requires an endpoint for ") +
                                         role);
        }
    }
}

std::vector<rag::SearchMode> ExperimentConfig::search_modes() const {
    if (search_mode == "global") return {rag::SearchMode::Global};
    if (search_mode == "local") return {rag::SearchMode::Local};
    return {rag::SearchMode::Global, rag::SearchMode::Local};
}

rag::ExtractionMode ExperimentConfig::extraction() const {
    return extraction_mode == "llm" ? rag::ExtractionMode::Llm : rag::ExtractionMode::Pattern;
}

eval::JudgeMode ExperimentConfig::judge() const {
    return judge_mode == "llm" ? eval::JudgeMode::Llm : eval::JudgeMode::Exact;
}

rag::PipelineOptions ExperimentConfig::pipeline_options() const {
    rag::PipelineOptions options;
    options.chunk_size = chunk_size;
    options.chunk_overlap = chunk_overlap;
    options.top_k = top_k;
    options.extraction = extraction();
    return options;
}

llm::LlmGateway ExperimentConfig::make_gateway() const {
    if (mock_mode) {
        int max_parallel = 1;
        auto it = providers.find("generator");
        if (it != providers.end()) max_parallel = it->second.max_parallel;
        return llm::make_mock_gateway(seed, max_parallel);
    }

    const char* env_key = std::getenv("EVOPOISON_API_KEY");
    auto make = [&](const std::string& role) -> std::shared_ptr<llm::Provider> {
        auto it = providers.find(role);
        if (it == providers.end()) return nullptr;
        llm::ProviderConfig config = it->second;
        if (config.api_key.empty() && env_key) config.api_key = env_key;
        return std::make_shared<llm::HttpProvider>(std::move(config));
    };

    llm::LlmGateway gateway;
    gateway.bind(llm::Role::Generator, make("generator"));
    gateway.bind(llm::Role::Fabricator, make("fabricator"));
    gateway.bind(llm::Role::Evaluator, make("evaluator"));
    if (auto embedder = make("embedder")) gateway.bind_embedder(embedder);
    if (auto scorer = make("scorer")) gateway.bind_scorer(scorer);
    return gateway;
}

} // namespace evopoison::cli
