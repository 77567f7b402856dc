#include "evopoison/graph.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <numeric>
#include <unordered_map>

#include "evopoison/errors.hpp"
#include "evopoison/util.hpp"

namespace evopoison::graph {

using nlohmann::json;

const EntityNode& KnowledgeGraph::node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw NotFoundError("unknown node id: " + id);
    return it->second;
}

EntityNode& KnowledgeGraph::node(const std::string& id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw NotFoundError("unknown node id: " + id);
    return it->second;
}

EntityNode& KnowledgeGraph::upsert_node(const std::string& name) {
    std::string id = entity_id_for(name);
    auto it = nodes_.find(id);
    if (it == nodes_.end()) {
        EntityNode node;
        node.id = id;
        node.name = util::squash_whitespace(name);
        it = nodes_.emplace(id, std::move(node)).first;
    }
    return it->second;
}

EntityNode& KnowledgeGraph::insert_node(EntityNode node) {
    std::string id = node.id;
    return nodes_.insert_or_assign(id, std::move(node)).first->second;
}

void KnowledgeGraph::add_edge(RelationEdge edge) {
    if (!has_node(edge.src) || !has_node(edge.dst))
        throw InvalidLinkError("edge endpoint not in graph: " + edge.src + " -> " + edge.dst);
    edges_.push_back(std::move(edge));
}

void KnowledgeGraph::set_communities(std::vector<Community> communities) {
    communities_ = std::move(communities);
}

void KnowledgeGraph::set_community_summary(const std::string& community_id,
                                           const std::string& summary) {
    for (auto& c : communities_) {
        if (c.id == community_id) {
            c.summary = summary;
            return;
        }
    }
    throw NotFoundError("unknown community id: " + community_id);
}

std::map<std::string, std::set<std::string>> KnowledgeGraph::adjacency() const {
    std::map<std::string, std::set<std::string>> adj;
    for (const auto& [id, _] : nodes_) adj[id];
    for (const auto& e : edges_) {
        if (e.src == e.dst) continue;
        adj[e.src].insert(e.dst);
        adj[e.dst].insert(e.src);
    }
    return adj;
}

std::vector<const RelationEdge*> KnowledgeGraph::incident_edges(const std::string& node_id) const {
    std::vector<const RelationEdge*> out;
    for (const auto& e : edges_) {
        if (e.src == node_id || e.dst == node_id) out.push_back(&e);
    }
    return out;
}

std::string entity_id_for(const std::string& name) {
    return util::normalize_text(name);
}

double degree_centrality(const KnowledgeGraph& g, const std::string& node_id) {
    if (!g.has_node(node_id)) throw NotFoundError("unknown node id: " + node_id);
    std::size_t n = g.node_count();
    if (n <= 1) return 0.0;
    auto adj = g.adjacency();
    return static_cast<double>(adj[node_id].size()) / static_cast<double>(n - 1);
}

std::string centrality_node(const KnowledgeGraph& g) {
    if (g.empty()) throw EmptyGraphError("centrality_node on empty graph");
    auto adj = g.adjacency();
    std::string best;
    std::size_t best_deg = 0;
    bool first = true;
    for (const auto& [id, neighbors] : adj) { // map order: lexicographic ids
        if (first || neighbors.size() > best_deg) {
            best = id;
            best_deg = neighbors.size();
            first = false;
        }
    }
    return best;
}

std::vector<std::vector<std::string>>
connected_components(const std::vector<std::string>& items,
                     const std::vector<std::pair<std::string, std::string>>& links) {
    std::map<std::string, std::size_t> index;
    for (const auto& item : items) {
        if (!index.count(item)) index.emplace(item, index.size());
    }

    // union-find
    std::vector<std::size_t> parent(index.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };

    for (const auto& [a, b] : links) {
        auto ia = index.find(a);
        auto ib = index.find(b);
        if (ia == index.end() || ib == index.end())
            throw InvalidLinkError("link endpoint not in items: " + a + " -- " + b);
        std::size_t ra = find(ia->second), rb = find(ib->second);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }

    std::map<std::size_t, std::vector<std::string>> groups;
    for (const auto& [item, idx] : index) groups[find(idx)].push_back(item);

    std::vector<std::vector<std::string>> out;
    out.reserve(groups.size());
    for (auto& [_, members] : groups) {
        std::sort(members.begin(), members.end());
        out.push_back(std::move(members));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

void detect_communities(KnowledgeGraph& g, std::uint64_t seed) {
    if (g.empty()) {
        g.set_communities({});
        return;
    }

    std::vector<std::string> ids;
    ids.reserve(g.node_count());
    for (const auto& [id, _] : g.nodes()) ids.push_back(id);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;

    auto adj_by_id = g.adjacency();
    std::vector<std::vector<std::size_t>> adj(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (const auto& n : adj_by_id[ids[i]]) adj[i].push_back(index[n]);
        std::sort(adj[i].begin(), adj[i].end());
    }

    // Synchronous sweeps: every node adopts the most frequent label in its
    // neighborhood as of the previous sweep, keeping its own label when that
    // ties the maximum, otherwise taking the lowest maximal label. The seed
    // permutes the initial labels. Period-2 oscillations (stars, pairs)
    // collapse to the elementwise minimum of the two alternating states.
    std::vector<std::size_t> label(ids.size());
    std::iota(label.begin(), label.end(), 0);
    util::seeded_shuffle(label, seed);

    auto step = [&](const std::vector<std::size_t>& cur) {
        std::vector<std::size_t> next(cur.size());
        for (std::size_t v = 0; v < cur.size(); ++v) {
            if (adj[v].empty()) {
                next[v] = cur[v];
                continue;
            }
            std::map<std::size_t, std::size_t> freq; // label -> count, ordered
            for (std::size_t n : adj[v]) freq[cur[n]]++;
            std::size_t best_count = 0;
            std::size_t best_label = cur[v];
            for (const auto& [lab, count] : freq) {
                if (count > best_count) { // first hit at max count = lowest label
                    best_count = count;
                    best_label = lab;
                }
            }
            auto own = freq.find(cur[v]);
            if (own != freq.end() && own->second == best_count) best_label = cur[v];
            next[v] = best_label;
        }
        return next;
    };

    constexpr int kMaxSweeps = 20;
    std::vector<std::size_t> prev;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        std::vector<std::size_t> next = step(label);
        if (next == label) break;
        if (!prev.empty() && next == prev) {
            for (std::size_t i = 0; i < label.size(); ++i)
                label[i] = std::min(label[i], next[i]);
            prev.clear();
            continue;
        }
        prev = std::move(label);
        label = std::move(next);
    }

    // Split each label group into its connected parts so no community spans
    // components even in degenerate propagation states.
    std::map<std::size_t, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < ids.size(); ++i) by_label[label[i]].push_back(i);

    std::vector<std::set<std::string>> member_sets;
    for (const auto& [lab, group] : by_label) {
        std::set<std::size_t> remaining(group.begin(), group.end());
        while (!remaining.empty()) {
            std::deque<std::size_t> queue{*remaining.begin()};
            remaining.erase(remaining.begin());
            std::set<std::string> part;
            while (!queue.empty()) {
                std::size_t v = queue.front();
                queue.pop_front();
                part.insert(ids[v]);
                for (std::size_t n : adj[v]) {
                    auto it = remaining.find(n);
                    if (it != remaining.end()) {
                        remaining.erase(it);
                        queue.push_back(n);
                    }
                }
            }
            member_sets.push_back(std::move(part));
        }
    }

    std::sort(member_sets.begin(), member_sets.end(),
              [](const auto& a, const auto& b) { return *a.begin() < *b.begin(); });

    std::vector<Community> communities;
    communities.reserve(member_sets.size());
    for (std::size_t i = 0; i < member_sets.size(); ++i) {
        Community c;
        c.id = "c" + std::to_string(i);
        c.members = std::move(member_sets[i]);
        c.size = c.members.size();
        communities.push_back(std::move(c));
    }
    g.set_communities(std::move(communities));
}

void merge_triples(KnowledgeGraph& g, const std::vector<Triple>& triples) {
    for (const auto& t : triples) {
        std::string subject = util::squash_whitespace(t.subject);
        std::string predicate = util::squash_whitespace(t.predicate);
        std::string object = util::squash_whitespace(t.object);
        if (subject.empty() || object.empty() || predicate.empty())
            throw InvalidTripleError("triple has empty field: (" + t.subject + ", " +
                                     t.predicate + ", " + t.object + ")");

        EntityNode& src = g.upsert_node(subject);
        EntityNode& dst = g.upsert_node(object);
        if (src.id == dst.id) continue; // self-relation keeps the node, no edge

        std::string label_key = util::normalize_text(predicate);
        bool merged = false;
        for (auto& e : g.mutable_edges()) {
            if (e.src == src.id && e.dst == dst.id && util::normalize_text(e.label) == label_key) {
                e.weight += 1.0;
                if (!t.source_id.empty()) e.provenance.insert(t.source_id);
                merged = true;
                break;
            }
        }
        if (!merged) {
            RelationEdge edge;
            edge.src = src.id;
            edge.dst = dst.id;
            edge.label = predicate;
            edge.description = subject + " " + predicate + " " + object;
            edge.weight = 1.0;
            if (!t.source_id.empty()) edge.provenance.insert(t.source_id);
            g.add_edge(std::move(edge));
        }
    }
}

json to_json(const KnowledgeGraph& g) {
    json doc;

    json nodes = json::array();
    for (const auto& [id, node] : g.nodes()) { // already sorted by id
        json n{{"id", node.id}, {"name", node.name}, {"description", node.description}};
        if (!node.embedding.empty()) n["embedding"] = node.embedding;
        nodes.push_back(std::move(n));
    }
    doc["nodes"] = std::move(nodes);

    auto sorted_edges = g.edges();
    std::sort(sorted_edges.begin(), sorted_edges.end(), [](const auto& a, const auto& b) {
        return std::tie(a.src, a.label, a.dst) < std::tie(b.src, b.label, b.dst);
    });
    json edges = json::array();
    for (const auto& e : sorted_edges) {
        edges.push_back(json{{"src", e.src},
                             {"dst", e.dst},
                             {"label", e.label},
                             {"description", e.description},
                             {"weight", e.weight},
                             {"provenance", e.provenance}});
    }
    doc["edges"] = std::move(edges);

    auto sorted_communities = g.communities();
    std::sort(sorted_communities.begin(), sorted_communities.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    json communities = json::array();
    for (const auto& c : sorted_communities) {
        communities.push_back(
            json{{"id", c.id}, {"members", c.members}, {"summary", c.summary}, {"size", c.size}});
    }
    doc["communities"] = std::move(communities);
    return doc;
}

KnowledgeGraph graph_from_json(const json& doc) {
    KnowledgeGraph g;
    for (const auto& n : doc.value("nodes", json::array())) {
        EntityNode node;
        node.id = n.at("id").get<std::string>();
        node.name = n.at("name").get<std::string>();
        node.description = n.value("description", "");
        if (n.contains("embedding")) node.embedding = n["embedding"].get<std::vector<double>>();
        g.insert_node(std::move(node));
    }
    for (const auto& e : doc.value("edges", json::array())) {
        RelationEdge edge;
        edge.src = e.at("src").get<std::string>();
        edge.dst = e.at("dst").get<std::string>();
        edge.label = e.at("label").get<std::string>();
        edge.description = e.value("description", "");
        edge.weight = e.value("weight", 1.0);
        for (const auto& p : e.value("provenance", json::array()))
            edge.provenance.insert(p.get<std::string>());
        g.add_edge(std::move(edge)); // validates endpoints
    }
    std::vector<Community> communities;
    for (const auto& c : doc.value("communities", json::array())) {
        Community community;
        community.id = c.at("id").get<std::string>();
        for (const auto& m : c.at("members")) community.members.insert(m.get<std::string>());
        community.summary = c.value("summary", "");
        community.size = c.value("size", community.members.size());
        communities.push_back(std::move(community));
    }
    g.set_communities(std::move(communities));
    return g;
}

std::string serialize(const KnowledgeGraph& g) {
    return to_json(g).dump(2) + "\n";
}

} // namespace evopoison::graph
