#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "evopoison/errors.hpp"
#include "evopoison/llm.hpp"
#include "evopoison/util.hpp"

namespace evopoison::llm {

using nlohmann::json;

namespace {

// Splits "http://host:port/v1" into client base and path prefix.
void split_endpoint(const std::string& url, std::string& host, std::string& prefix) {
    auto scheme_end = url.find("://");
    std::size_t path_start =
        url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
        host = url;
        prefix.clear();
    } else {
        host = url.substr(0, path_start);
        prefix = url.substr(path_start);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    }
}

} // namespace

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.endpoint_url.empty())
        throw InvalidConfigError("HttpProvider requires endpoint_url");
    split_endpoint(config_.endpoint_url, host_, path_prefix_);
}

std::string HttpProvider::post_json(const std::string& path, const std::string& body) {
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
        httplib::Client client(host_);
        client.set_connection_timeout(static_cast<int>(config_.timeout_seconds), 0);
        client.set_read_timeout(static_cast<int>(config_.timeout_seconds), 0);
        httplib::Headers headers;
        if (!config_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        auto res = client.Post(path_prefix_ + path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 404 || res->status == 501)
            throw UnsupportedError("endpoint " + path + " unsupported (HTTP " +
                                   std::to_string(res->status) + ")");
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        return res->body;
    }
    throw ProviderUnavailableError("request to " + path + " failed after " +
                                   std::to_string(config_.retries + 1) +
                                   " attempts: " + last_error);
}

ChatExchange HttpProvider::chat(Role /*role*/, const std::string& system_prompt,
                                const std::string& user_prompt) {
    json body{{"model", config_.model_name},
              {"temperature", 0.0},
              {"messages", json::array({json{{"role", "system"}, {"content", system_prompt}},
                                        json{{"role", "user"}, {"content", user_prompt}}})}};
    json reply = json::parse(post_json("/chat/completions", body.dump()), nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
        throw ProviderUnavailableError("malformed chat completion reply");

    ChatExchange exchange;
    exchange.system_prompt = system_prompt;
    exchange.user_prompt = user_prompt;
    exchange.response = reply["choices"][0].value("message", json::object()).value("content", "");
    if (exchange.response.empty()) throw EmptyResponseError("empty chat completion");

    if (reply.contains("usage")) {
        exchange.token_usage.input_tokens = reply["usage"].value("prompt_tokens", 0);
        exchange.token_usage.output_tokens = reply["usage"].value("completion_tokens", 0);
    } else {
        exchange.token_usage.input_tokens =
            util::word_count(system_prompt) + util::word_count(user_prompt);
        exchange.token_usage.output_tokens = util::word_count(exchange.response);
    }
    return exchange;
}

EmbeddingVector HttpProvider::embed(const std::string& text) {
    if (util::word_count(text) == 0) throw InvalidInputError("embed: empty text");
    json body{{"model", config_.model_name}, {"input", text}};
    json reply = json::parse(post_json("/embeddings", body.dump()), nullptr, false);
    if (reply.is_discarded() || !reply.contains("data") || reply["data"].empty())
        throw ProviderUnavailableError("malformed embeddings reply");

    std::vector<double> values = reply["data"][0].value("embedding", std::vector<double>{});
    if (values.empty()) throw ProviderUnavailableError("embeddings reply missing vector");

    double norm2 = 0.0;
    for (double v : values) norm2 += v * v;
    if (norm2 > 0.0) {
        double inv = 1.0 / std::sqrt(norm2);
        for (double& v : values) v *= inv;
    }
    std::size_t dim = values.size();
    return EmbeddingVector{std::move(values), dim};
}

LogprobResult HttpProvider::score_logprob(const std::string& context,
                                          const std::string& continuation) {
    if (util::word_count(continuation) == 0)
        throw InvalidInputError("score_logprob: empty continuation");

    // Legacy completions endpoint with echo: the server returns logprobs for
    // the prompt tokens; tokens whose text offset falls inside the
    // continuation span are the continuation's scores.
    std::string prompt = context;
    if (!prompt.empty() && prompt.back() != ' ' && prompt.back() != '\n') prompt += " ";
    std::size_t continuation_start = prompt.size();
    prompt += continuation;

    json body{{"model", config_.model_name},
              {"prompt", prompt},
              {"max_tokens", 0},
              {"echo", true},
              {"logprobs", 0}};
    json reply = json::parse(post_json("/completions", body.dump()), nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
        throw UnsupportedError("completions endpoint returned no choices");

    const json& choice = reply["choices"][0];
    if (!choice.contains("logprobs") || choice["logprobs"].is_null())
        throw UnsupportedError("provider did not return logprobs");

    const json& lp = choice["logprobs"];
    const json& tokens = lp.value("tokens", json::array());
    const json& token_logprobs = lp.value("token_logprobs", json::array());
    const json& offsets = lp.value("text_offset", json::array());
    if (tokens.size() != token_logprobs.size() || tokens.size() != offsets.size())
        throw UnsupportedError("inconsistent logprob arrays");

    LogprobResult result;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (offsets[i].get<std::size_t>() < continuation_start) continue;
        if (token_logprobs[i].is_null()) continue; // first prompt token has no score
        result.continuation_tokens.push_back(tokens[i].get<std::string>());
        result.logprobs.push_back(std::min(token_logprobs[i].get<double>(), 0.0));
    }
    if (result.logprobs.empty())
        throw UnsupportedError("no continuation tokens scored");
    result.token_count = result.logprobs.size();
    return result;
}

} // namespace evopoison::llm
