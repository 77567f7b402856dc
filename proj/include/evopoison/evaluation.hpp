#pragma once
// Attack evaluation and defense baselines. Metrics: ASR (fraction of
// attacked answers supporting the target), CASR (same, conditioned on the
// clean run having been correct), Hits@n over retrieval rankings, and the
// retention rate of poisoned tokens under the prompt-detection filter.
//
// The exact judge is an offline proxy: case-folded containment of the target
// answer with no negation word inside the eight words before the match.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evopoison/llm.hpp"
#include "evopoison/pipeline.hpp"

namespace evopoison::eval {

enum class JudgeMode { Exact, Llm };
const char* judge_mode_name(JudgeMode mode);

struct Verdict {
    std::string query_id;
    bool clean_correct = false;
    bool attacked_supports_target = false;
    std::string judge_mode;
    std::string clean_answer;
    std::string attacked_answer;
};

struct MetricsReport {
    double asr = 0.0;
    std::optional<double> casr; // absent when no query was clean-correct
    std::map<int, double> hits_at;
    std::optional<double> retention_rate;
    std::map<std::string, std::size_t> counts;
};

// Exact mode needs no gateway. Llm mode asks the evaluator role for a strict
// YES/NO; an unparseable verdict counts as unsupported and adds a warning.
bool judge_support(const std::string& answer, const std::string& target_answer, JudgeMode mode,
                   llm::LlmGateway* gateway = nullptr,
                   std::vector<std::string>* warnings = nullptr);

double asr(const std::vector<Verdict>& verdicts); // NoDataError on empty

// UndefinedMetricError when no verdict is clean-correct; reports record n/a.
double casr(const std::vector<Verdict>& verdicts);

// For each n: the fraction of queries whose top-n ranked items intersect the
// query's poisoned id set. retrievals[i] aligns with poisoned_ids[i].
std::map<int, double> hits_at_n(const std::vector<rag::RetrievalResult>& retrievals,
                                const std::vector<std::set<std::string>>& poisoned_ids,
                                const std::vector<int>& ns);

// Query rewrite through the generator role; the mock reverses word order.
// Provider failure passes the original query through with a warning.
std::string defend_paraphrase(const std::string& query, llm::LlmGateway& gateway,
                              std::vector<std::string>* warnings = nullptr);

extern const char* kTrustedPreamble;

// Trusted preamble prepended to the generator system prompt; idempotent.
std::string defend_instruction(const std::string& prompt_assembly);

bool matches_injection_pattern(const std::string& text);

struct DetectionResult {
    std::vector<std::size_t> retained_indices;
    std::vector<std::string> retained;
    std::size_t poisoned_tokens_total = 0;
    std::size_t poisoned_tokens_retained = 0;
    std::optional<double> retention_rate; // absent when no poisoned tokens entered
};

// Removes items matching the imperative/answer-dictation pattern list and
// accounts for how many poisoned tokens survive. poisoned_flags may be empty
// (nothing marked poisoned) or must align with items.
DetectionResult defend_prompt_detection(const std::vector<std::string>& items,
                                        const std::vector<bool>& poisoned_flags = {});

nlohmann::json to_json(const Verdict& verdict);
nlohmann::json to_json(const MetricsReport& report);

} // namespace evopoison::eval
