#include "evopoison/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "evopoison/errors.hpp"
#include "evopoison/util.hpp"

namespace evopoison::rag {

using graph::KnowledgeGraph;
using graph::Triple;
using llm::Role;

namespace {

constexpr const char* kExtractionSystemPrompt =
    "You extract factual entity-relation triples from text. Reply with one "
    "triple per line formatted exactly as: subject | predicate | object. "
    "Output nothing else.";

constexpr const char* kSummarySystemPrompt =
    "You summarize a knowledge-graph community. Write one concise paragraph "
    "covering the listed entities and their relations.";

constexpr const char* kQaSystemPrompt =
    "You answer questions strictly from the provided context. Be direct and "
    "factual; if the context is empty say you cannot tell.";

std::string join_names(std::vector<std::string> names) {
    std::sort(names.begin(), names.end());
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out += "; ";
        out += names[i];
    }
    return out;
}

std::string trim_copy(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<Triple> pattern_extract(const DocumentChunk& chunk) {
    // Sentences of the exact form "A <REL:label> B." - subject runs back to
    // the previous sentence boundary, object runs forward to the period.
    std::vector<Triple> triples;
    const std::string& text = chunk.text;
    std::size_t pos = 0;
    while ((pos = text.find("<REL:", pos)) != std::string::npos) {
        std::size_t label_end = text.find('>', pos);
        if (label_end == std::string::npos) break;
        std::string label = trim_copy(text.substr(pos + 5, label_end - pos - 5));

        std::size_t subject_start = text.find_last_of(".!?\n", pos);
        subject_start = (subject_start == std::string::npos) ? 0 : subject_start + 1;
        std::string subject = trim_copy(text.substr(subject_start, pos - subject_start));

        std::size_t object_end = text.find('.', label_end);
        if (object_end == std::string::npos) {
            pos = label_end + 1;
            continue; // unterminated, not the pattern
        }
        std::string object = trim_copy(text.substr(label_end + 1, object_end - label_end - 1));

        if (!subject.empty() && !label.empty() && !object.empty())
            triples.push_back({subject, label, object, chunk.id});
        pos = object_end + 1;
    }
    return triples;
}

std::vector<Triple> parse_triple_lines(const std::string& response,
                                       const std::string& source_id) {
    std::vector<Triple> triples;
    std::istringstream in(response);
    std::string line;
    while (std::getline(in, line)) {
        if (trim_copy(line).empty()) continue;
        std::size_t first = line.find('|');
        std::size_t last = line.rfind('|');
        if (first == std::string::npos || first == last) continue;
        std::string subject = trim_copy(line.substr(0, first));
        std::string predicate = trim_copy(line.substr(first + 1, last - first - 1));
        std::string object = trim_copy(line.substr(last + 1));
        if (subject.empty() || predicate.empty() || object.empty()) continue;
        triples.push_back({subject, predicate, object, source_id});
    }
    return triples;
}

RetrievalResult rank_items(std::vector<RankedItem> items, std::size_t top_k) {
    std::stable_sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (items.size() > top_k) items.resize(top_k);

    RetrievalResult result;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) result.context_text += "\n";
        result.context_text += items[i].text;
    }
    result.ranked_items = std::move(items);
    return result;
}

} // namespace

const char* item_kind_name(ItemKind kind) {
    switch (kind) {
        case ItemKind::Community: return "community";
        case ItemKind::Node: return "node";
        case ItemKind::Edge: return "edge";
        case ItemKind::Chunk: return "chunk";
    }
    return "unknown";
}

const char* search_mode_name(SearchMode mode) {
    return mode == SearchMode::Global ? "global" : "local";
}

std::vector<DocumentChunk>
chunk_corpus(const std::vector<std::pair<std::string, std::string>>& docs,
             std::size_t chunk_size, std::size_t overlap) {
    if (chunk_size <= overlap)
        throw InvalidConfigError("chunk_size must exceed overlap");

    std::vector<DocumentChunk> chunks;
    std::size_t stride = chunk_size - overlap;
    for (const auto& [doc_id, text] : docs) {
        auto words = util::split_words(text);
        if (words.empty()) continue;
        std::size_t position = 0;
        for (std::size_t start = 0;; start += stride) {
            std::size_t end = std::min(start + chunk_size, words.size());
            std::string body;
            for (std::size_t i = start; i < end; ++i) {
                if (i > start) body.push_back(' ');
                body += words[i];
            }
            DocumentChunk chunk;
            chunk.id = doc_id + "#" + std::to_string(position);
            chunk.text = std::move(body);
            chunk.source_doc = doc_id;
            chunk.position = position;
            chunks.push_back(std::move(chunk));
            ++position;
            if (end == words.size()) break;
        }
    }
    return chunks;
}

std::vector<Triple> extract_triples(const DocumentChunk& chunk, ExtractionMode mode,
                                    llm::LlmGateway& gateway) {
    if (mode == ExtractionMode::Pattern) return pattern_extract(chunk);

    auto exchange = gateway.chat(Role::Fabricator, kExtractionSystemPrompt,
                                 "Text:\n" + chunk.text);
    auto triples = parse_triple_lines(exchange.response, chunk.id);
    if (triples.empty())
        throw ExtractionFailedError("no parseable triples for chunk " + chunk.id);
    return triples;
}

Pipeline::Pipeline(llm::LlmGateway& gateway, PipelineOptions options)
    : gateway_(gateway), options_(options) {}

std::vector<double> Pipeline::embed_cached(const std::string& text) {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = embed_cache_.find(text);
        if (it != embed_cache_.end()) return it->second;
    }
    auto vec = gateway_.embed(text).values;
    std::lock_guard<std::mutex> lock(mutex_);
    return embed_cache_.emplace(text, std::move(vec)).first->second;
}

void Pipeline::add_warning(const std::string& message) {
    std::lock_guard<std::mutex> lock(mutex_);
    warnings_.push_back(message);
}

std::vector<std::string> Pipeline::warnings() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return warnings_;
}

void Pipeline::clear_warnings() {
    std::lock_guard<std::mutex> lock(mutex_);
    warnings_.clear();
}

KnowledgeGraph Pipeline::build_kg(const std::vector<DocumentChunk>& chunks,
                                  std::uint64_t seed) {
    std::size_t parallel = 1;
    if (options_.extraction == ExtractionMode::Llm)
        parallel = static_cast<std::size_t>(gateway_.provider(Role::Fabricator).max_parallel());

    std::vector<std::vector<Triple>> per_chunk(chunks.size());
    util::parallel_for(chunks.size(), parallel, [&](std::size_t i) {
        try {
            per_chunk[i] = extract_triples(chunks[i], options_.extraction, gateway_);
        } catch (const ExtractionFailedError& e) {
            add_warning(std::string("extraction skipped: ") + e.what());
        }
    });

    KnowledgeGraph g;
    for (const auto& triples : per_chunk) graph::merge_triples(g, triples);
    graph::detect_communities(g, seed);

    std::vector<std::string> ids;
    ids.reserve(g.node_count());
    for (const auto& [id, _] : g.nodes()) ids.push_back(id);
    for (const auto& id : ids) g.node(id).embedding = embed_cached(g.node(id).name);

    summarize_communities(g);
    return g;
}

void Pipeline::summarize_communities(KnowledgeGraph& g) {
    const auto& communities = g.communities();
    bool echo = gateway_.deterministic(Role::Generator);
    std::size_t parallel =
        static_cast<std::size_t>(gateway_.provider(Role::Generator).max_parallel());

    std::vector<std::string> summaries(communities.size());
    util::parallel_for(communities.size(), parallel, [&](std::size_t i) {
        const auto& community = communities[i];
        std::vector<std::string> names;
        names.reserve(community.members.size());
        for (const auto& member : community.members) names.push_back(g.node(member).name);
        std::string fallback = join_names(names);

        std::string user = "Entities: " + fallback + "\n";
        std::string relations;
        for (const auto& member : community.members) {
            for (const auto* edge : g.incident_edges(member)) {
                if (edge->src != member) continue; // count each edge once
                relations += edge->description + ". ";
            }
        }
        if (!relations.empty()) user += "Relations: " + relations + "\n";
        user += "Summarize this community.";
        if (echo) user += "\nCONTENT=" + fallback;

        try {
            summaries[i] = gateway_.chat(Role::Generator, kSummarySystemPrompt, user).response;
        } catch (const std::exception& e) {
            add_warning("community summary fallback for " + community.id + ": " + e.what());
            summaries[i] = fallback;
        }
    });

    for (std::size_t i = 0; i < communities.size(); ++i)
        g.set_community_summary(communities[i].id, summaries[i]);
}

std::string node_context_block(const KnowledgeGraph& g, const std::string& node_id) {
    const auto& node = g.node(node_id);
    std::string block = node.name;
    if (!node.description.empty()) block += ": " + node.description;
    std::string relations;
    for (const auto* edge : g.incident_edges(node_id)) {
        const std::string& other = (edge->src == node_id) ? edge->dst : edge->src;
        if (!relations.empty()) relations += "; ";
        relations += edge->label + " " + g.node(other).name;
    }
    if (!relations.empty()) block += ". relations: " + relations;
    return util::squash_whitespace(block);
}

std::string edge_context_block(const KnowledgeGraph& g, const graph::RelationEdge& edge) {
    return util::squash_whitespace(g.node(edge.src).name + " " + edge.label + " " +
                                   g.node(edge.dst).name + ".");
}

std::string edge_item_id(const graph::RelationEdge& edge) {
    return edge.src + "|" + util::normalize_text(edge.label) + "|" + edge.dst;
}

RetrievalResult Pipeline::global_search(const KnowledgeGraph& g, const std::string& query,
                                        std::size_t top_k) {
    if (g.communities().empty()) return {};
    auto query_vec = embed_cached(query);

    std::vector<RankedItem> items;
    items.reserve(g.communities().size());
    for (const auto& community : g.communities()) {
        std::string summary = community.summary;
        if (summary.empty()) {
            std::vector<std::string> names;
            for (const auto& member : community.members) names.push_back(g.node(member).name);
            summary = join_names(names);
        }
        RankedItem item;
        item.id = community.id;
        item.kind = ItemKind::Community;
        item.score = util::rescaled_cosine(query_vec, embed_cached(summary));
        item.text = util::squash_whitespace(summary);
        items.push_back(std::move(item));
    }
    return rank_items(std::move(items), top_k);
}

RetrievalResult Pipeline::local_search(const KnowledgeGraph& g, const std::string& query,
                                       std::size_t top_k) {
    if (g.empty()) return {};
    auto query_vec = embed_cached(query);

    std::vector<RankedItem> items;
    for (const auto& [id, node] : g.nodes()) {
        RankedItem item;
        item.id = id;
        item.kind = ItemKind::Node;
        item.score = util::rescaled_cosine(
            query_vec, node.embedding.empty() ? embed_cached(node.name) : node.embedding);
        item.text = node_context_block(g, id);
        items.push_back(std::move(item));
    }
    for (const auto& edge : g.edges()) {
        RankedItem item;
        item.id = edge_item_id(edge);
        item.kind = ItemKind::Edge;
        item.score = util::rescaled_cosine(query_vec, embed_cached(edge.description));
        item.text = edge_context_block(g, edge);
        items.push_back(std::move(item));
    }
    return rank_items(std::move(items), top_k);
}

QueryAnswer Pipeline::answer(const KnowledgeGraph& g, const std::string& query,
                             SearchMode mode, const AnswerHooks& hooks) {
    std::string effective_query = query;
    if (hooks.rewrite_query) effective_query = hooks.rewrite_query(query);

    RetrievalResult retrieval = (mode == SearchMode::Global)
                                    ? global_search(g, effective_query, options_.top_k)
                                    : local_search(g, effective_query, options_.top_k);

    if (hooks.filter_context) {
        retrieval.ranked_items = hooks.filter_context(std::move(retrieval.ranked_items));
        retrieval.context_text.clear();
        for (std::size_t i = 0; i < retrieval.ranked_items.size(); ++i) {
            if (i) retrieval.context_text += "\n";
            retrieval.context_text += retrieval.ranked_items[i].text;
        }
    }

    std::string system_prompt = kQaSystemPrompt;
    if (hooks.augment_system_prompt) system_prompt = hooks.augment_system_prompt(system_prompt);

    std::string user = "Question: " + effective_query + "\nContext:\n" +
                       (retrieval.context_text.empty() ? "(none)" : retrieval.context_text) +
                       "\nAnswer the question from the context.";
    if (gateway_.deterministic(Role::Generator) && !retrieval.ranked_items.empty())
        user += "\nCONTENT=" + util::squash_whitespace(retrieval.ranked_items.front().text);

    QueryAnswer qa;
    qa.query = query;
    qa.mode = mode;
    qa.no_context = retrieval.ranked_items.empty();
    try {
        qa.answer = gateway_.chat(Role::Generator, system_prompt, user).response;
    } catch (const std::exception& e) {
        throw AnswerFailedError(std::string("generation failed: ") + e.what());
    }
    qa.retrieval = std::move(retrieval);
    return qa;
}

} // namespace evopoison::rag
