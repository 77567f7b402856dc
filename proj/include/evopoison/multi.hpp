#pragma once
// Multi-target coordination: pair poisoned corpora by target-answer
// similarity, partition the paired corpora into connected groups, extract a
// local subgraph per member, pick each subgraph's degree-centrality node, and
// fabricate one linking document per group that names all those nodes. The
// combined injection set is the base corpora plus the linking documents.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evopoison/attack.hpp"
#include "evopoison/graph.hpp"
#include "evopoison/llm.hpp"
#include "evopoison/pipeline.hpp"

namespace evopoison::multi {

struct TargetAnswerEntry {
    std::string corpus_id;
    std::string target_answer;
    std::vector<double> embedding; // unit-norm
};

struct TargetAnswerSet {
    std::vector<TargetAnswerEntry> entries;
};

// Upper-triangular answer-similarity scores; zero on and below the diagonal.
struct SimilarityMatrix {
    std::size_t n = 0;
    std::vector<std::vector<double>> values;

    double at(std::size_t i, std::size_t j) const { return values[i][j]; }
};

struct PairSelection {
    std::size_t k = 0; // requested budget
    std::vector<std::pair<std::size_t, std::size_t>> pairs; // i<j, sorted by (i,j)
};

struct CentralityNodePick {
    std::string member; // corpus id
    std::string node_id;
    std::string node_name;
};

struct CorpusGroup {
    std::string id;
    std::vector<std::string> members; // corpus ids, sorted
    std::map<std::string, std::string> member_texts;
    std::map<std::string, graph::KnowledgeGraph> subgraphs; // per member
    std::vector<CentralityNodePick> centrality_nodes;
    std::string linking_fact;
};

struct MultiDocument {
    std::string id;
    std::string text;
    std::string kind; // "base" or "link"
    std::vector<std::string> group_members; // link docs only
};

struct MultiCorpus {
    std::vector<std::string> base_corpora;  // ids, input order
    std::vector<std::string> linking_facts; // texts, group order
    std::vector<MultiDocument> combined;    // base corpora then linking docs
};

struct MultiInput {
    std::string corpus_id;
    attack::PoisonedCorpus corpus;
    std::string target_answer;
};

// (1 + cosine)/2 per upper-triangular entry.
SimilarityMatrix build_similarity_matrix(const TargetAnswerSet& answers);

// The k largest upper-triangular entries; ties broken by (i, j) order;
// clamped to the number of available pairs. k must be at least 1.
PairSelection select_top_k_pairs(const SimilarityMatrix& matrix, std::size_t k);

// Connected groups over the corpora touched by the selected pairs. Corpora
// untouched by any pair form no group. all_ids[i] names matrix index i.
std::vector<CorpusGroup> group_corpora(const PairSelection& selection,
                                       const std::vector<std::string>& all_ids);

// Triples extracted from the corpus text, merged into a fresh graph. An
// extraction failure yields an empty graph (the member is later excluded).
graph::KnowledgeGraph extract_poison_subgraph(const attack::PoisonedCorpus& corpus,
                                              rag::ExtractionMode mode,
                                              llm::LlmGateway& gateway);

// One centrality node per member with a non-empty subgraph. Throws
// GroupUnlinkableError when every subgraph is empty.
void pick_centrality_nodes(CorpusGroup& group);

// A short linking document (at most word_cap words) naming every centrality
// node verbatim; validated with one retry.
std::string fabricate_group_relations(const CorpusGroup& group, llm::LlmGateway& gateway,
                                      std::size_t word_cap = 60);

// Full coordination pipeline. Groups whose links cannot be fabricated fall
// back to plain single-target corpora with a warning. Requires >= 2 inputs.
MultiCorpus assemble_multi(const std::vector<MultiInput>& inputs, std::size_t k,
                           rag::ExtractionMode mode, llm::LlmGateway& gateway,
                           std::vector<std::string>* warnings = nullptr);

nlohmann::json to_json(const MultiDocument& doc);
MultiDocument multi_document_from_json(const nlohmann::json& doc);

} // namespace evopoison::multi
