#pragma once
// Uniform access to the three LLM roles (generator, fabricator, evaluator)
// plus embeddings and token log-probabilities. Two providers:
//
//  - MockProvider: fully deterministic offline provider. Chat output is a
//    pure function of (seed, role, prompts). It echoes structured markers
//    found in the prompts, which is how downstream modules stay testable
//    without a live model:
//        CONTENT=<text>   response body (payloads joined by single spaces;
//                         overrides all other markers when present)
//        ANSWER=<text>    echoed verbatim inside a "Conclusion: ..." line
//        TIME=<label>     echoed as a numbered anchor-list line
//        FACT=<s|p|o>     echoed as an "s | p | o" extraction line
//    Marker payloads run to end of line. With no markers at all, the mock
//    emits a seeded filler sentence.
//
//  - HttpProvider: OpenAI-compatible chat-completions / embeddings /
//    completions(echo+logprobs) JSON over HTTP, with bounded retries.
//
// A gateway binds providers by role; callers never talk to providers
// directly. Batch helpers fan out with at most max_parallel in-flight
// requests and match results to requests by index.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace evopoison::llm {

enum class Role { Generator, Fabricator, Evaluator };

const char* role_name(Role role);

struct ProviderConfig {
    std::string endpoint_url; // base URL including any path prefix, e.g. http://host:8080/v1
    std::string model_name;
    std::string api_key;
    int max_parallel = 1;
    double timeout_seconds = 30.0;
    int retries = 2;
    std::uint64_t seed = 0; // mock only

    void validate() const; // max_parallel >= 1, timeout > 0
};

struct TokenUsage {
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
};

struct ChatExchange {
    std::string system_prompt;
    std::string user_prompt;
    std::string response;
    TokenUsage token_usage;
};

struct LogprobResult {
    std::vector<std::string> continuation_tokens;
    std::vector<double> logprobs; // natural log, each <= 0
    std::size_t token_count = 0;
};

struct EmbeddingVector {
    std::vector<double> values; // unit-norm
    std::size_t dim = 0;
};

class Provider {
public:
    virtual ~Provider() = default;

    virtual ChatExchange chat(Role role, const std::string& system_prompt,
                              const std::string& user_prompt) = 0;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual LogprobResult score_logprob(const std::string& context,
                                        const std::string& continuation) = 0;

    virtual bool supports_logprobs() const = 0;
    // True when the provider implements the deterministic marker-echo
    // protocol; prompt builders add marker lines only in that case.
    virtual bool deterministic_echo() const { return false; }
    virtual std::string model_name() const = 0;
    virtual int max_parallel() const = 0;
};

class MockProvider : public Provider {
public:
    explicit MockProvider(std::uint64_t seed, int max_parallel = 1);

    ChatExchange chat(Role role, const std::string& system_prompt,
                      const std::string& user_prompt) override;
    EmbeddingVector embed(const std::string& text) override;
    LogprobResult score_logprob(const std::string& context,
                                const std::string& continuation) override;

    bool supports_logprobs() const override { return true; }
    bool deterministic_echo() const override { return true; }
    std::string model_name() const override;
    int max_parallel() const override { return max_parallel_; }

    static constexpr std::size_t kEmbeddingDim = 64;

private:
    std::uint64_t seed_;
    int max_parallel_;
};

class HttpProvider : public Provider {
public:
    explicit HttpProvider(ProviderConfig config);

    ChatExchange chat(Role role, const std::string& system_prompt,
                      const std::string& user_prompt) override;
    EmbeddingVector embed(const std::string& text) override;
    LogprobResult score_logprob(const std::string& context,
                                const std::string& continuation) override;

    bool supports_logprobs() const override { return true; }
    std::string model_name() const override { return config_.model_name; }
    int max_parallel() const override { return config_.max_parallel; }

private:
    std::string post_json(const std::string& path, const std::string& body);

    ProviderConfig config_;
    std::string host_;        // scheme://host[:port]
    std::string path_prefix_; // e.g. /v1
};

struct ChatRequest {
    std::string system_prompt;
    std::string user_prompt;
};

// Role-to-provider bindings plus batch fan-out and optional JSONL audit
// transcripts. Single requests block; batches run with the target provider's
// bounded parallelism and results are returned in request order.
class LlmGateway {
public:
    LlmGateway() = default;

    void bind(Role role, std::shared_ptr<Provider> provider);
    void bind_embedder(std::shared_ptr<Provider> provider); // defaults to generator
    void bind_scorer(std::shared_ptr<Provider> provider);   // logprobs; defaults to generator

    Provider& provider(Role role) const;
    Provider& embedder() const;
    Provider& scorer() const;

    bool deterministic(Role role) const { return provider(role).deterministic_echo(); }

    ChatExchange chat(Role role, const std::string& system_prompt,
                      const std::string& user_prompt);
    std::vector<ChatExchange> chat_batch(Role role, const std::vector<ChatRequest>& requests);

    EmbeddingVector embed(const std::string& text);
    LogprobResult score_logprob(const std::string& context, const std::string& continuation);

    void set_transcript_path(const std::filesystem::path& path); // JSONL, append

private:
    void record_transcript(Role role, const ChatExchange& exchange);

    std::shared_ptr<Provider> generator_;
    std::shared_ptr<Provider> fabricator_;
    std::shared_ptr<Provider> evaluator_;
    std::shared_ptr<Provider> embedder_;
    std::shared_ptr<Provider> scorer_;
    std::filesystem::path transcript_path_;
    std::shared_ptr<std::mutex> transcript_mutex_ = std::make_shared<std::mutex>();
};

// Builds a gateway with every role bound to one shared mock provider.
LlmGateway make_mock_gateway(std::uint64_t seed, int max_parallel = 1);

} // namespace evopoison::llm
