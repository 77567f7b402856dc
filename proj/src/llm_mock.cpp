#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#include "evopoison/errors.hpp"
#include "evopoison/llm.hpp"
#include "evopoison/util.hpp"

namespace evopoison::llm {

namespace {

struct MarkerHits {
    std::vector<std::string> content;
    std::vector<std::string> answers;
    std::vector<std::string> times;
    std::vector<std::string> facts;
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void scan_line(const std::string& line, const char* marker, std::vector<std::string>& out) {
    std::size_t pos = line.find(marker);
    if (pos == std::string::npos) return;
    std::string payload = trim(line.substr(pos + std::strlen(marker)));
    if (!payload.empty()) out.push_back(payload);
}

MarkerHits scan_markers(const std::string& text) {
    MarkerHits hits;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        scan_line(line, "CONTENT=", hits.content);
        scan_line(line, "ANSWER=", hits.answers);
        scan_line(line, "TIME=", hits.times);
        scan_line(line, "FACT=", hits.facts);
    }
    return hits;
}

const char* kFillerWords[] = {"records",  "indicate", "ongoing",  "analysis",
                              "of",       "relevant", "material", "continues",
                              "across",   "several",  "archived", "collections",
                              "pending",  "further",  "review",   "updates"};
constexpr std::size_t kFillerWordCount = sizeof(kFillerWords) / sizeof(kFillerWords[0]);

std::string filler_sentence(std::uint64_t key) {
    std::uint64_t state = key;
    std::string out;
    for (int i = 0; i < 10; ++i) {
        if (i) out.push_back(' ');
        out += kFillerWords[util::splitmix64(state) % kFillerWordCount];
    }
    out.push_back('.');
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

} // namespace

const char* role_name(Role role) {
    switch (role) {
        case Role::Generator: return "generator";
        case Role::Fabricator: return "fabricator";
        case Role::Evaluator: return "evaluator";
    }
    return "unknown";
}

void ProviderConfig::validate() const {
    if (max_parallel < 1) throw InvalidConfigError("max_parallel must be >= 1");
    if (timeout_seconds <= 0) throw InvalidConfigError("timeout must be positive");
    if (retries < 0) throw InvalidConfigError("retries must be nonnegative");
}

MockProvider::MockProvider(std::uint64_t seed, int max_parallel)
    : seed_(seed), max_parallel_(std::max(max_parallel, 1)) {}

std::string MockProvider::model_name() const {
    return "mock-" + std::to_string(seed_);
}

ChatExchange MockProvider::chat(Role role, const std::string& system_prompt,
                                const std::string& user_prompt) {
    MarkerHits hits = scan_markers(system_prompt + "\n" + user_prompt);

    std::string response;
    if (!hits.content.empty()) {
        for (std::size_t i = 0; i < hits.content.size(); ++i) {
            if (i) response.push_back(' ');
            response += hits.content[i];
        }
    } else if (!hits.answers.empty() || !hits.times.empty() || !hits.facts.empty()) {
        std::vector<std::string> lines;
        for (std::size_t i = 0; i < hits.times.size(); ++i)
            lines.push_back(std::to_string(i + 1) + ". " + hits.times[i]);
        for (const auto& fact : hits.facts) {
            auto first = fact.find('|');
            auto last = fact.rfind('|');
            if (first != std::string::npos && last != std::string::npos && first != last) {
                lines.push_back(trim(fact.substr(0, first)) + " | " +
                                trim(fact.substr(first + 1, last - first - 1)) + " | " +
                                trim(fact.substr(last + 1)));
            } else {
                lines.push_back(fact);
            }
        }
        for (const auto& answer : hits.answers) lines.push_back("Conclusion: " + answer);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i) response.push_back('\n');
            response += lines[i];
        }
    } else {
        std::uint64_t key = util::fnv1a(user_prompt, util::fnv1a(system_prompt,
                                        util::fnv1a(role_name(role), seed_ ^ 0xabcdef12345ULL)));
        response = filler_sentence(key);
    }

    ChatExchange exchange;
    exchange.system_prompt = system_prompt;
    exchange.user_prompt = user_prompt;
    exchange.response = response;
    exchange.token_usage.input_tokens =
        util::word_count(system_prompt) + util::word_count(user_prompt);
    exchange.token_usage.output_tokens = util::word_count(response);
    return exchange;
}

EmbeddingVector MockProvider::embed(const std::string& text) {
    std::string norm = util::normalize_text(text);
    if (norm.empty()) throw InvalidInputError("embed: empty text");

    std::vector<double> values(kEmbeddingDim, 0.0);
    auto accumulate = [&](const std::string& feature, std::uint64_t salt) {
        std::uint64_t h = util::fnv1a(feature, seed_ ^ salt);
        std::size_t idx = h % kEmbeddingDim;
        double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
        values[idx] += sign;
    };

    // Character trigrams over the padded text plus word unigrams.
    std::string padded = " " + norm + " ";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
        accumulate(padded.substr(i, 3), 0x3367c1a4d2ULL);
    for (const auto& word : util::split_words(norm)) accumulate(word, 0x9142ffb7e5ULL);

    double norm2 = 0.0;
    for (double v : values) norm2 += v * v;
    if (norm2 == 0.0) {
        values[0] = 1.0;
        norm2 = 1.0;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (double& v : values) v *= inv;

    return EmbeddingVector{std::move(values), kEmbeddingDim};
}

LogprobResult MockProvider::score_logprob(const std::string& context,
                                          const std::string& continuation) {
    if (util::word_count(continuation) == 0)
        throw InvalidInputError("score_logprob: empty continuation");

    LogprobResult result;
    result.continuation_tokens = util::split_words(continuation);
    result.logprobs.reserve(result.continuation_tokens.size());
    std::uint64_t ctx_key = util::fnv1a(context, seed_ ^ 0x51c0ffee77ULL);
    for (std::size_t i = 0; i < result.continuation_tokens.size(); ++i) {
        std::uint64_t h =
            util::fnv1a(result.continuation_tokens[i], ctx_key + i * 0x9e3779b97f4a7c15ULL);
        double frac = static_cast<double>(h >> 11) * 0x1.0p-53; // [0,1)
        result.logprobs.push_back(-(0.05 + 3.0 * frac));
    }
    result.token_count = result.logprobs.size();
    return result;
}

LlmGateway make_mock_gateway(std::uint64_t seed, int max_parallel) {
    auto mock = std::make_shared<MockProvider>(seed, max_parallel);
    LlmGateway gateway;
    gateway.bind(Role::Generator, mock);
    gateway.bind(Role::Fabricator, mock);
    gateway.bind(Role::Evaluator, mock);
    gateway.bind_embedder(mock);
    gateway.bind_scorer(mock);
    return gateway;
}

} // namespace evopoison::llm
