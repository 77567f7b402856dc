#pragma once
// Reference GraphRAG pipeline: corpus chunking, triple extraction, KG build,
// community summarization, global/local search, and answer generation.
//
// Retrieval scores are cosine similarities affinely rescaled into [0,1].
// Under the mock provider the whole pipeline is deterministic: extraction
// echoes FACT markers, community summaries are the sorted member-name join,
// and answers are the highest-ranked context item's text.

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "evopoison/graph.hpp"
#include "evopoison/llm.hpp"

namespace evopoison::rag {

struct DocumentChunk {
    std::string id; // "<source_doc>#<position>"
    std::string text;
    std::string source_doc;
    std::size_t position = 0;
};

enum class ItemKind { Community, Node, Edge, Chunk };
const char* item_kind_name(ItemKind kind);

struct RankedItem {
    std::string id;
    ItemKind kind = ItemKind::Community;
    double score = 0.0;
    std::string text; // context block handed to the generator
};

struct RetrievalResult {
    std::vector<RankedItem> ranked_items; // scores non-increasing, length <= top_k
    std::string context_text;
};

enum class SearchMode { Global, Local };
const char* search_mode_name(SearchMode mode);

struct QueryAnswer {
    std::string query;
    std::string answer;
    RetrievalResult retrieval;
    SearchMode mode = SearchMode::Global;
    bool no_context = false;
};

enum class ExtractionMode { Llm, Pattern };

// Hooks let the defense layer wrap the answer path without the pipeline
// depending on it.
struct AnswerHooks {
    std::function<std::string(const std::string&)> rewrite_query;
    std::function<std::string(const std::string&)> augment_system_prompt;
    std::function<std::vector<RankedItem>(std::vector<RankedItem>)> filter_context;
};

struct PipelineOptions {
    std::size_t chunk_size = 600;
    std::size_t chunk_overlap = 100;
    std::size_t top_k = 5;
    ExtractionMode extraction = ExtractionMode::Pattern;
};

// Splits documents into whitespace-token chunks where consecutive chunks
// share exactly `overlap` tokens. chunk_size must exceed overlap.
std::vector<DocumentChunk>
chunk_corpus(const std::vector<std::pair<std::string, std::string>>& docs,
             std::size_t chunk_size, std::size_t overlap);

// Pattern mode parses sentences of the exact form "A <REL:label> B." without
// any model. Llm mode asks the fabricator for "subject | predicate | object"
// lines, dropping malformed ones; a fully unparseable response throws
// ExtractionFailedError.
std::vector<graph::Triple> extract_triples(const DocumentChunk& chunk, ExtractionMode mode,
                                           llm::LlmGateway& gateway);

class Pipeline {
public:
    Pipeline(llm::LlmGateway& gateway, PipelineOptions options);

    // extract -> merge -> detect communities -> embed nodes -> summarize.
    // Extraction failures skip the chunk with a warning.
    graph::KnowledgeGraph build_kg(const std::vector<DocumentChunk>& chunks,
                                   std::uint64_t seed);

    void summarize_communities(graph::KnowledgeGraph& g);

    RetrievalResult global_search(const graph::KnowledgeGraph& g, const std::string& query,
                                  std::size_t top_k);
    RetrievalResult local_search(const graph::KnowledgeGraph& g, const std::string& query,
                                 std::size_t top_k);

    QueryAnswer answer(const graph::KnowledgeGraph& g, const std::string& query,
                       SearchMode mode, const AnswerHooks& hooks = {});

    llm::LlmGateway& gateway() { return gateway_; }
    const PipelineOptions& options() const { return options_; }

    std::vector<std::string> warnings() const;
    void clear_warnings();

private:
    std::vector<double> embed_cached(const std::string& text);
    void add_warning(const std::string& message);

    llm::LlmGateway& gateway_;
    PipelineOptions options_;
    std::map<std::string, std::vector<double>> embed_cache_;
    mutable std::mutex mutex_;
    std::vector<std::string> warnings_;
};

// Context block for a node: its name and description plus incident edge
// labels. Exposed for tests and the defense layer.
std::string node_context_block(const graph::KnowledgeGraph& g, const std::string& node_id);
std::string edge_context_block(const graph::KnowledgeGraph& g, const graph::RelationEdge& edge);
std::string edge_item_id(const graph::RelationEdge& edge);

} // namespace evopoison::rag
