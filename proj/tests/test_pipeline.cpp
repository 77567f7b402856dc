#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "evopoison/errors.hpp"
#include "evopoison/pipeline.hpp"
#include "evopoison/util.hpp"

using namespace evopoison;
using rag::DocumentChunk;
using rag::ExtractionMode;
using rag::Pipeline;
using rag::PipelineOptions;
using rag::SearchMode;

namespace {

std::string words(int n, const std::string& prefix = "w") {
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out.push_back(' ');
        out += prefix + std::to_string(i);
    }
    return out;
}

PipelineOptions mock_options() {
    PipelineOptions options;
    options.chunk_size = 64;
    options.chunk_overlap = 8;
    options.top_k = 5;
    options.extraction = ExtractionMode::Pattern;
    return options;
}

// 4 pattern sentences over 5 entities: aspirin, fever, blood, honey, cough.
const char* kFixtureCorpus =
    "Aspirin <REL:treats> Fever. Aspirin <REL:thins> Blood. "
    "Honey <REL:soothes> Cough. Honey <REL:reduces> Fever.";

} // namespace

TEST_CASE("chunk_corpus: whole document fits one chunk") {
    auto chunks = rag::chunk_corpus({{"d", words(10)}}, 10, 0);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].id == "d#0");
    CHECK(util::word_count(chunks[0].text) == 10);
}

TEST_CASE("chunk_corpus: overlapping windows share exactly overlap tokens") {
    auto chunks = rag::chunk_corpus({{"d", words(10)}}, 6, 2);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].text == "w0 w1 w2 w3 w4 w5");
    CHECK(chunks[1].text == "w4 w5 w6 w7 w8 w9");
}

TEST_CASE("chunk_corpus: 250-token fixture boundaries match the arithmetic oracle") {
    // size 100, overlap 20 -> stride 80 -> starts 0, 80, 160; last chunk 90 words
    auto chunks = rag::chunk_corpus({{"d", words(250)}}, 100, 20);
    REQUIRE(chunks.size() == 3);
    CHECK(util::word_count(chunks[0].text) == 100);
    CHECK(util::word_count(chunks[1].text) == 100);
    CHECK(util::word_count(chunks[2].text) == 90);
    auto w1 = util::split_words(chunks[1].text);
    CHECK(w1.front() == "w80");
    auto w2 = util::split_words(chunks[2].text);
    CHECK(w2.front() == "w160");
    CHECK(w2.back() == "w249");
}

TEST_CASE("chunk_corpus rejects chunk_size <= overlap") {
    CHECK_THROWS_AS(rag::chunk_corpus({{"d", "a b c"}}, 5, 5), InvalidConfigError);
}

TEST_CASE("pattern extraction parses marker sentences and ignores plain text") {
    auto gateway = llm::make_mock_gateway(7);
    DocumentChunk chunk{"c#0", "Aspirin <REL:treats> Fever. Plain sentence without markers.",
                        "c", 0};
    auto triples = rag::extract_triples(chunk, ExtractionMode::Pattern, gateway);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].subject == "Aspirin");
    CHECK(triples[0].predicate == "treats");
    CHECK(triples[0].object == "Fever");
    CHECK(triples[0].source_id == "c#0");

    DocumentChunk plain{"c#1", "No markers here at all.", "c", 1};
    CHECK(rag::extract_triples(plain, ExtractionMode::Pattern, gateway).empty());
}

TEST_CASE("pattern extraction handles multiple sentences with prefixes") {
    auto gateway = llm::make_mock_gateway(7);
    DocumentChunk chunk{"c#0",
                        "In older texts, Willow Bark <REL:contains> Aspirin. "
                        "Honey <REL:soothes> Cough.",
                        "c", 0};
    auto triples = rag::extract_triples(chunk, ExtractionMode::Pattern, gateway);
    REQUIRE(triples.size() == 2);
    CHECK(triples[0].subject == "In older texts, Willow Bark");
    CHECK(triples[1].subject == "Honey");
}

TEST_CASE("llm extraction mirrors FACT markers through the mock") {
    auto gateway = llm::make_mock_gateway(7);
    DocumentChunk chunk{"c#0", "notes\nFACT=Aspirin|treats|Fever\nFACT=Honey|soothes|Cough",
                        "c", 0};
    auto triples = rag::extract_triples(chunk, ExtractionMode::Llm, gateway);
    REQUIRE(triples.size() == 2);
    CHECK(triples[0].subject == "Aspirin");
    CHECK(triples[1].object == "Cough");
}

TEST_CASE("llm extraction with a fully unparseable response throws") {
    auto gateway = llm::make_mock_gateway(7);
    DocumentChunk chunk{"c#0", "nothing extractable here", "c", 0};
    CHECK_THROWS_AS(rag::extract_triples(chunk, ExtractionMode::Llm, gateway),
                    ExtractionFailedError);
}

TEST_CASE("build_kg on empty corpus yields an empty graph") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    auto g = pipeline.build_kg({}, 7);
    CHECK(g.empty());
    CHECK(g.communities().empty());
}

TEST_CASE("build_kg over the 4-sentence fixture yields 5 nodes and 4 edges") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    auto chunks = rag::chunk_corpus({{"doc", kFixtureCorpus}}, 64, 8);
    auto g = pipeline.build_kg(chunks, 7);
    CHECK(g.node_count() == 5);
    CHECK(g.edge_count() == 4);
    CHECK(!g.communities().empty());
    for (const auto& [id, node] : g.nodes()) {
        CHECK(!node.embedding.empty());
    }
}

TEST_CASE("build_kg is deterministic under the mock provider") {
    auto run = [] {
        auto gateway = llm::make_mock_gateway(7);
        Pipeline pipeline(gateway, mock_options());
        auto chunks = rag::chunk_corpus({{"doc", kFixtureCorpus}}, 64, 8);
        return graph::serialize(pipeline.build_kg(chunks, 7));
    };
    CHECK(run() == run());
}

TEST_CASE("mock community summaries are the sorted member-name join") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    graph::KnowledgeGraph g;
    graph::merge_triples(g, {{"b", "links", "a", "s"}});
    graph::detect_communities(g, 7);
    pipeline.summarize_communities(g);
    REQUIRE(g.communities().size() == 1);
    CHECK(g.communities()[0].summary == "a; b");
}

TEST_CASE("singleton community summary equals the node name") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    graph::KnowledgeGraph g;
    g.upsert_node("Solo Entity");
    graph::detect_communities(g, 7);
    pipeline.summarize_communities(g);
    REQUIRE(g.communities().size() == 1);
    CHECK(g.communities()[0].summary == "Solo Entity");
}

TEST_CASE("global_search ranks the matching community first with score 1") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    auto chunks = rag::chunk_corpus({{"doc", kFixtureCorpus}}, 64, 8);
    auto g = pipeline.build_kg(chunks, 7);

    // query identical to one community summary -> rank 1 with score 1.0
    std::string summary = g.communities()[0].summary;
    auto result = pipeline.global_search(g, summary, 3);
    REQUIRE(!result.ranked_items.empty());
    CHECK(result.ranked_items[0].id == g.communities()[0].id);
    CHECK(result.ranked_items[0].score == doctest::Approx(1.0));
}

TEST_CASE("global_search matches a full-scan oracle over six communities") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    graph::KnowledgeGraph g;
    // six isolated pairs -> six communities
    graph::merge_triples(g, {{"alpha", "r", "beta", "s"},
                             {"gamma", "r", "delta", "s"},
                             {"epsilon", "r", "zeta", "s"},
                             {"eta", "r", "theta", "s"},
                             {"iota", "r", "kappa", "s"},
                             {"lambda", "r", "mu", "s"}});
    graph::detect_communities(g, 7);
    pipeline.summarize_communities(g);
    REQUIRE(g.communities().size() == 6);

    std::string query = "gamma delta relations";
    auto result = pipeline.global_search(g, query, 6);
    REQUIRE(result.ranked_items.size() == 6);

    // oracle: brute-force sort of all rescaled cosines with id tie-break
    auto qv = gateway.embed(query).values;
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& c : g.communities()) {
        double s = util::rescaled_cosine(qv, gateway.embed(c.summary).values);
        scored.emplace_back(s, c.id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < scored.size(); ++i)
        CHECK(result.ranked_items[i].id == scored[i].second);
}

TEST_CASE("local_search: single-node graph returns that node") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    graph::KnowledgeGraph g;
    g.upsert_node("Lonely");
    auto result = pipeline.local_search(g, "anything", 3);
    REQUIRE(result.ranked_items.size() == 1);
    CHECK(result.ranked_items[0].id == "lonely");
}

TEST_CASE("local_search ranks an exact node-name query first") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    auto chunks = rag::chunk_corpus({{"doc", kFixtureCorpus}}, 64, 8);
    auto g = pipeline.build_kg(chunks, 7);
    auto result = pipeline.local_search(g, "Honey", 4);
    REQUIRE(!result.ranked_items.empty());
    CHECK(result.ranked_items[0].id == "honey");
    CHECK(result.ranked_items[0].score == doctest::Approx(1.0));
}

TEST_CASE("local_search top-k equals the full-scan sort oracle") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    graph::KnowledgeGraph g;
    std::vector<graph::Triple> triples;
    for (int i = 0; i < 9; ++i)
        triples.push_back({"item" + std::to_string(i), "rel" + std::to_string(i),
                           "item" + std::to_string(i + 1), "s"});
    graph::merge_triples(g, triples);

    std::string query = "item4 item5 connection";
    auto result = pipeline.local_search(g, query, 6);
    REQUIRE(result.ranked_items.size() == 6);

    auto qv = gateway.embed(query).values;
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& [id, node] : g.nodes())
        scored.emplace_back(util::rescaled_cosine(qv, gateway.embed(node.name).values), id);
    for (const auto& e : g.edges())
        scored.emplace_back(util::rescaled_cosine(qv, gateway.embed(e.description).values),
                            rag::edge_item_id(e));
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < result.ranked_items.size(); ++i)
        CHECK(result.ranked_items[i].id == scored[i].second);
}

TEST_CASE("retrieval scores are in [0,1], non-increasing, and capped at top_k") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    auto chunks = rag::chunk_corpus({{"doc", kFixtureCorpus}}, 64, 8);
    auto g = pipeline.build_kg(chunks, 7);
    for (auto mode : {SearchMode::Global, SearchMode::Local}) {
        auto result = (mode == SearchMode::Global) ? pipeline.global_search(g, "aspirin", 3)
                                                   : pipeline.local_search(g, "aspirin", 3);
        CHECK(result.ranked_items.size() <= 3);
        double prev = 1.0;
        for (const auto& item : result.ranked_items) {
            CHECK(item.score >= 0.0);
            CHECK(item.score <= 1.0);
            CHECK(item.score <= prev);
            prev = item.score;
        }
    }
}

TEST_CASE("mock answers carry the highest-ranked context item's text") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    auto chunks = rag::chunk_corpus({{"doc", kFixtureCorpus}}, 64, 8);
    auto g = pipeline.build_kg(chunks, 7);

    auto qa = pipeline.answer(g, g.communities()[0].summary, SearchMode::Global);
    CHECK(!qa.no_context);
    CHECK(qa.answer == util::squash_whitespace(qa.retrieval.ranked_items[0].text));
    CHECK(qa.answer.find(g.communities()[0].summary) != std::string::npos);
}

TEST_CASE("answering over an empty graph flags no_context") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    graph::KnowledgeGraph g;
    auto qa = pipeline.answer(g, "anything at all", SearchMode::Global);
    CHECK(qa.no_context);
    CHECK(!qa.answer.empty());
}

TEST_CASE("adding documents never removes existing nodes") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    auto base_chunks = rag::chunk_corpus({{"doc", kFixtureCorpus}}, 64, 8);
    auto g1 = pipeline.build_kg(base_chunks, 7);

    auto more = rag::chunk_corpus({{"doc", kFixtureCorpus},
                                   {"extra", "Ginger <REL:calms> Nausea."}},
                                  64, 8);
    auto g2 = pipeline.build_kg(more, 7);
    for (const auto& [id, _] : g1.nodes()) CHECK(g2.has_node(id));
    CHECK(g2.node_count() >= g1.node_count());
}

namespace {

class FailingProvider : public llm::Provider {
public:
    llm::ChatExchange chat(llm::Role, const std::string&, const std::string&) override {
        throw ProviderUnavailableError("down");
    }
    llm::EmbeddingVector embed(const std::string& text) override {
        return llm::MockProvider(1).embed(text);
    }
    llm::LogprobResult score_logprob(const std::string&, const std::string&) override {
        throw UnsupportedError("none");
    }
    bool supports_logprobs() const override { return false; }
    std::string model_name() const override { return "failing"; }
    int max_parallel() const override { return 1; }
};

} // namespace

TEST_CASE("community summaries fall back to the member join when chat fails") {
    llm::LlmGateway gateway;
    gateway.bind(llm::Role::Generator, std::make_shared<FailingProvider>());
    gateway.bind(llm::Role::Fabricator, std::make_shared<FailingProvider>());
    Pipeline pipeline(gateway, mock_options());

    graph::KnowledgeGraph g;
    graph::merge_triples(g, {{"beta", "links", "alpha", "s"}});
    graph::detect_communities(g, 7);
    pipeline.summarize_communities(g);
    CHECK(g.communities()[0].summary == "alpha; beta");
    CHECK(!pipeline.warnings().empty());
}

TEST_CASE("build_kg warns and skips chunks the llm cannot extract from") {
    auto gateway = llm::make_mock_gateway(7);
    auto options = mock_options();
    options.extraction = ExtractionMode::Llm;
    Pipeline pipeline(gateway, options);
    auto chunks = rag::chunk_corpus(
        {{"good", "FACT=Aspirin|treats|Fever"}, {"bad", "no structure here"}}, 64, 8);
    auto g = pipeline.build_kg(chunks, 7);
    CHECK(g.node_count() == 2);
    CHECK(pipeline.warnings().size() == 1);
}

TEST_CASE("answer hooks rewrite the query and filter context") {
    auto gateway = llm::make_mock_gateway(7);
    Pipeline pipeline(gateway, mock_options());
    auto chunks = rag::chunk_corpus({{"doc", kFixtureCorpus}}, 64, 8);
    auto g = pipeline.build_kg(chunks, 7);

    rag::AnswerHooks hooks;
    bool rewritten = false;
    hooks.rewrite_query = [&](const std::string& q) {
        rewritten = true;
        return q;
    };
    hooks.filter_context = [](std::vector<rag::RankedItem> items) {
        items.clear();
        return items;
    };
    auto qa = pipeline.answer(g, "aspirin", SearchMode::Local, hooks);
    CHECK(rewritten);
    CHECK(qa.no_context);
    CHECK(qa.retrieval.ranked_items.empty());
}
