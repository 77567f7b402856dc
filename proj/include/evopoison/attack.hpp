#pragma once
// Single-target knowledge-evolution forgery: probe the clean system for the
// original answer, pick a time anchor, fabricate a poisoned fact dated after
// the anchor plus evolution paths bridging old and new states, and assemble
// the five-segment poisoned corpus. Also the direct-injection baseline and
// the conditional-perplexity diagnostics comparing the two.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evopoison/graph.hpp"
#include "evopoison/llm.hpp"
#include "evopoison/pipeline.hpp"

namespace evopoison::attack {

struct AttackTarget {
    std::string id;
    std::string query;           // trigger query
    std::string target_answer;   // adversarial answer the attack plants
    std::string original_answer; // clean system's answer, probed
    std::string anchor_fact;     // pivot fact derived from the original answer
    std::string anchor_time;     // anchor time label
};

enum class SegmentKind {
    SourceState,
    PathBack,
    AnchorFact,
    PathForward,
    PoisonedFact,
    Background
};

const char* segment_kind_name(SegmentKind kind);
std::optional<SegmentKind> segment_kind_from_name(const std::string& name);

struct EvolutionSegment {
    SegmentKind kind = SegmentKind::AnchorFact;
    std::string text;
    std::string time_label; // paths carry "<from> -> <to>"
    std::size_t word_count = 0;
};

struct PoisonedCorpus {
    std::string target_ref;
    std::vector<EvolutionSegment> segments; // canonical order, background first
    std::string delta_forward; // time label of the poisoned endpoint
    std::string delta_back;    // time label of the source state
    std::string assembled_text;

    const EvolutionSegment* segment(SegmentKind kind) const;
};

struct CpplReport {
    double cppl_direct = 0.0;    // baseline text given the anchor fact
    double cppl_evolution = 0.0; // forward path + poisoned fact given the anchor fact
    double ratio = 0.0;          // evolution / direct
    std::string provider_model;
};

struct AttackOptions {
    std::string execution_date;        // dates the poisoned endpoint, "YYYY-MM-DD"
    std::size_t word_budget = 120;     // assembled corpus target
    std::size_t poisoned_fact_words = 40;
    std::size_t anchor_fact_cap = 20;  // words kept from the original answer
    std::size_t length_tolerance = 15; // path-vs-poisoned word delta accepted
    bool generate_background = true;
    std::uint64_t variation = 0; // salt for multi-corpus-per-target runs
};

// Words that count as content for lexical-overlap validation: alphabetic,
// length >= 4, not a stopword.
std::vector<std::string> content_words(const std::string& text, std::size_t limit = 0);

// Heuristic chronological rank for a time label: the latest year mentioned,
// fractionally adjusted for ISO dates, minus 3 per "before"/"prior" marker.
// Labels without a year have no rank.
std::optional<double> temporal_rank(const std::string& label);

class SingleTargetAttack {
public:
    SingleTargetAttack(rag::Pipeline& pipeline, AttackOptions options);

    // Queries the clean graph and stores the answer plus the derived anchor
    // fact (answer truncated to the cap; falls back to the query text when
    // the system had no context to answer from).
    std::string probe_original_answer(const graph::KnowledgeGraph& clean_graph,
                                      AttackTarget& target, rag::SearchMode mode);

    // Explicit temporal mentions win (latest year, source suffix kept);
    // otherwise the fabricator proposes anchors and the first is taken;
    // otherwise "prior to <execution date>".
    std::string infer_time_anchor(const std::string& query,
                                  const std::string& original_answer);

    EvolutionSegment fabricate_poisoned_fact(const AttackTarget& target,
                                             const std::string& anchor);
    EvolutionSegment fabricate_evolution_path(const std::string& fact_from,
                                              const std::string& fact_to,
                                              const std::string& time_from,
                                              const std::string& time_to,
                                              std::size_t target_words);
    EvolutionSegment fabricate_source_state(const AttackTarget& target,
                                            const std::string& anchor_fact,
                                            const std::string& poisoned_fact);
    EvolutionSegment fabricate_background(const std::string& anchor);

    // Orders segments canonically, validates presence and strict temporal
    // order, and steers the total into the word budget by trimming the
    // background first.
    PoisonedCorpus assemble_corpus(const AttackTarget& target,
                                   std::vector<EvolutionSegment> segments) const;

    std::string direct_injection_baseline(const std::string& query,
                                          const std::string& target_answer);

    // Full pipeline for one target: probe -> anchor -> fabricate -> assemble.
    PoisonedCorpus run(const graph::KnowledgeGraph& clean_graph, AttackTarget& target,
                       rag::SearchMode mode);

    const AttackOptions& options() const { return options_; }

private:
    std::string fabricate_validated(const std::string& system_prompt,
                                    const std::string& user_prompt,
                                    const std::function<bool(const std::string&)>& valid,
                                    const char* what);

    rag::Pipeline& pipeline_;
    AttackOptions options_;
};

// exp(-sum(logprobs)/|Y|), i.e. p(Y|X)^(-1/|Y|).
double cppl_from_logprobs(const std::vector<double>& logprobs);
double conditional_perplexity(const std::string& context, const std::string& continuation,
                              llm::LlmGateway& gateway);

// The diagnostic of the evolution construction: the forged path plus endpoint
// should integrate with the anchor fact at least as smoothly as the direct
// injection. Records, never enforces.
CpplReport cppl_comparison(const AttackTarget& target, const PoisonedCorpus& corpus,
                           const std::string& baseline_text, llm::LlmGateway& gateway);

nlohmann::json to_json(const AttackTarget& target);
AttackTarget target_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PoisonedCorpus& corpus);
PoisonedCorpus corpus_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CpplReport& report);

} // namespace evopoison::attack
