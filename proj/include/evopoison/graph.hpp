#pragma once
// Knowledge-graph data model plus the deterministic graph algorithms used by
// the retrieval and attack layers: degree centrality, connected components,
// seeded label-propagation community detection, and triple merging.
//
// Graphs are treated as simple and undirected for all degree computations:
// parallel edges between the same pair count once.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace evopoison::graph {

struct EntityNode {
    std::string id;          // stable key: case-folded, whitespace-normalized name
    std::string name;        // surface form as first seen
    std::string description;
    std::vector<double> embedding; // empty = absent; unit-norm when present
};

struct RelationEdge {
    std::string src;
    std::string dst;
    std::string label;
    std::string description;
    double weight = 1.0;
    std::set<std::string> provenance; // chunk/corpus ids
};

struct Triple {
    std::string subject;
    std::string predicate;
    std::string object;
    std::string source_id;
};

struct Community {
    std::string id;
    std::set<std::string> members;
    std::string summary;
    std::size_t size = 0;
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    bool empty() const { return nodes_.empty(); }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    bool has_node(const std::string& id) const { return nodes_.count(id) > 0; }
    const EntityNode& node(const std::string& id) const;
    EntityNode& node(const std::string& id);

    // Ordered by id; iteration is deterministic.
    const std::map<std::string, EntityNode>& nodes() const { return nodes_; }
    const std::vector<RelationEdge>& edges() const { return edges_; }
    const std::vector<Community>& communities() const { return communities_; }

    // Adds or returns the node for a surface-form name. Id derivation is the
    // entity-identity rule: case-folded, whitespace-normalized name.
    EntityNode& upsert_node(const std::string& name);

    // Inserts a node under its own id (deserialization path).
    EntityNode& insert_node(EntityNode node);

    void add_edge(RelationEdge edge); // endpoints must exist

    std::vector<RelationEdge>& mutable_edges() { return edges_; }

    void set_communities(std::vector<Community> communities);
    void set_community_summary(const std::string& community_id, const std::string& summary);

    // Undirected neighbor sets with parallel edges deduplicated.
    std::map<std::string, std::set<std::string>> adjacency() const;

    std::vector<const RelationEdge*> incident_edges(const std::string& node_id) const;

private:
    std::map<std::string, EntityNode> nodes_;
    std::vector<RelationEdge> edges_;
    std::vector<Community> communities_;
};

// Entity identity rule for triple subjects/objects.
std::string entity_id_for(const std::string& name);

// deg(v) / (N - 1) on the simple undirected view; 0 for a singleton graph.
// Throws NotFoundError for an unknown node id.
double degree_centrality(const KnowledgeGraph& g, const std::string& node_id);

// Node with the highest degree centrality, ties broken by lexicographically
// smallest id. Throws EmptyGraphError on an empty graph.
std::string centrality_node(const KnowledgeGraph& g);

// Partition of items under the links, as canonically ordered sets: components
// sorted by smallest member, members sorted. Link endpoints must appear in
// items (InvalidLinkError otherwise). Link order and direction are irrelevant.
std::vector<std::vector<std::string>>
connected_components(const std::vector<std::string>& items,
                     const std::vector<std::pair<std::string, std::string>>& links);

// Seeded label propagation (max 20 sweeps, ties to lowest label), followed by
// a split of each label group into its connected parts so a community never
// spans graph components. Deterministic for a fixed seed.
void detect_communities(KnowledgeGraph& g, std::uint64_t seed);

// Merges triples into the graph: unseen subjects/objects become nodes, and
// duplicate (src, dst, label) edges merge with weight += 1 and provenance
// unioned. Subject == object after normalization keeps the node but creates
// no edge. Empty fields throw InvalidTripleError.
void merge_triples(KnowledgeGraph& g, const std::vector<Triple>& triples);

// Single JSON document with top-level "nodes", "edges", "communities" arrays
// sorted by id for byte-stable output.
nlohmann::json to_json(const KnowledgeGraph& g);
KnowledgeGraph graph_from_json(const nlohmann::json& doc);

std::string serialize(const KnowledgeGraph& g); // stable bytes

} // namespace evopoison::graph
