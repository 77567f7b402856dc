#include <fstream>

#include <nlohmann/json.hpp>

#include "evopoison/errors.hpp"
#include "evopoison/llm.hpp"
#include "evopoison/util.hpp"

namespace evopoison::llm {

using nlohmann::json;

void LlmGateway::bind(Role role, std::shared_ptr<Provider> provider) {
    switch (role) {
        case Role::Generator: generator_ = std::move(provider); break;
        case Role::Fabricator: fabricator_ = std::move(provider); break;
        case Role::Evaluator: evaluator_ = std::move(provider); break;
    }
}

void LlmGateway::bind_embedder(std::shared_ptr<Provider> provider) {
    embedder_ = std::move(provider);
}

void LlmGateway::bind_scorer(std::shared_ptr<Provider> provider) {
    scorer_ = std::move(provider);
}

Provider& LlmGateway::provider(Role role) const {
    const std::shared_ptr<Provider>* p = nullptr;
    switch (role) {
        case Role::Generator: p = &generator_; break;
        case Role::Fabricator: p = &fabricator_; break;
        case Role::Evaluator: p = &evaluator_; break;
    }
    if (!p || !*p)
        throw ProviderUnavailableError(std::string("no provider bound for role ") +
                                       role_name(role));
    return **p;
}

Provider& LlmGateway::embedder() const {
    if (embedder_) return *embedder_;
    return provider(Role::Generator);
}

Provider& LlmGateway::scorer() const {
    if (scorer_) return *scorer_;
    return provider(Role::Generator);
}

ChatExchange LlmGateway::chat(Role role, const std::string& system_prompt,
                              const std::string& user_prompt) {
    ChatExchange exchange = provider(role).chat(role, system_prompt, user_prompt);
    if (exchange.response.empty())
        throw EmptyResponseError(std::string("empty response from ") + role_name(role));
    record_transcript(role, exchange);
    return exchange;
}

std::vector<ChatExchange> LlmGateway::chat_batch(Role role,
                                                 const std::vector<ChatRequest>& requests) {
    Provider& p = provider(role);
    std::vector<ChatExchange> results(requests.size());
    std::vector<std::string> failures(requests.size());
    util::parallel_for(requests.size(), static_cast<std::size_t>(p.max_parallel()),
                       [&](std::size_t i) {
                           try {
                               results[i] = p.chat(role, requests[i].system_prompt,
                                                   requests[i].user_prompt);
                           } catch (const std::exception& e) {
                               failures[i] = e.what();
                           }
                       });
    for (std::size_t i = 0; i < requests.size(); ++i) {
        if (!failures[i].empty())
            throw ProviderUnavailableError("batch request " + std::to_string(i) +
                                           " failed: " + failures[i]);
        record_transcript(role, results[i]);
    }
    return results;
}

EmbeddingVector LlmGateway::embed(const std::string& text) {
    return embedder().embed(text);
}

LogprobResult LlmGateway::score_logprob(const std::string& context,
                                        const std::string& continuation) {
    Provider& p = scorer();
    if (!p.supports_logprobs())
        throw UnsupportedError("provider " + p.model_name() + " lacks logprob support");
    return p.score_logprob(context, continuation);
}

void LlmGateway::set_transcript_path(const std::filesystem::path& path) {
    transcript_path_ = path;
}

void LlmGateway::record_transcript(Role role, const ChatExchange& exchange) {
    if (transcript_path_.empty()) return;
    json entry{{"role", role_name(role)},
               {"system", exchange.system_prompt},
               {"user", exchange.user_prompt},
               {"response", exchange.response},
               {"input_tokens", exchange.token_usage.input_tokens},
               {"output_tokens", exchange.token_usage.output_tokens}};
    std::lock_guard<std::mutex> lock(*transcript_mutex_);
    std::ofstream out(transcript_path_, std::ios::app);
    out << entry.dump() << "\n";
}

} // namespace evopoison::llm
