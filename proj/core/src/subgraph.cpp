#include "knowgpt/subgraph.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "knowgpt/error.hpp"

namespace knowgpt {

std::size_t Subgraph::protected_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& kv) {
    return kv.second != NodeTag::kBridge;
  }));
}

std::vector<Triple> induced_edges(const KnowledgeGraph& g,
                                  const std::map<EntityId, NodeTag>& nodes) {
  std::vector<Triple> edges;
  for (const auto& [id, tag] : nodes) {
    for (const auto& e : g.out_edges(id)) {
      if (nodes.contains(e.node)) edges.push_back(Triple{id, e.rel, e.node});
    }
  }
  return edges;
}

namespace {

// Two smallest distances to a node from distinct anchors.
struct BestTwo {
  static constexpr int kInf = std::numeric_limits<int>::max() / 4;
  int d1 = kInf;
  std::uint32_t src1 = std::numeric_limits<std::uint32_t>::max();
  int d2 = kInf;

  void offer(std::uint32_t src, int d) {
    if (src == src1) {
      d1 = std::min(d1, d);
      return;
    }
    if (d < d1) {
      d2 = d1;
      d1 = d;
      src1 = src;
    } else if (d < d2) {
      d2 = d;
    }
  }
};

}  // namespace

Subgraph extract_two_hop(const KnowledgeGraph& g, const QuestionContext& q, int hops) {
  if (hops < 1) throw ConfigError("extract_two_hop: hops must be >= 1");
  Subgraph sub;
  for (auto e : q.all_targets()) {
    if (g.valid(e)) sub.nodes[e] = NodeTag::kAnswer;
  }
  for (auto e : q.source_entities) {
    if (g.valid(e)) sub.nodes[e] = NodeTag::kTopic;
  }
  if (sub.nodes.empty()) {
    throw ConfigError("question " + q.id + ": no entity resolves in the graph");
  }

  // Bounded BFS from every anchor; a bridge x needs d(u,x) + d(x,v) <= hops
  // for two different anchors u, v.
  std::vector<EntityId> anchors;
  for (const auto& [id, tag] : sub.nodes) anchors.push_back(id);
  std::unordered_map<std::uint32_t, BestTwo> reach;
  const int max_depth = hops - 1;
  if (max_depth >= 1) {
    std::unordered_map<std::uint32_t, int> depth;
    std::deque<EntityId> frontier;
    for (auto anchor : anchors) {
      depth.clear();
      frontier.clear();
      depth[anchor.index] = 0;
      frontier.push_back(anchor);
      while (!frontier.empty()) {
        auto cur = frontier.front();
        frontier.pop_front();
        int d = depth[cur.index];
        if (d >= max_depth) continue;
        for (const auto& edge : g.neighbors(cur, Direction::kBoth)) {
          if (depth.try_emplace(edge.node.index, d + 1).second) {
            reach[edge.node.index].offer(anchor.index, d + 1);
            frontier.push_back(edge.node);
          }
        }
      }
    }
  }
  for (const auto& [node, best] : reach) {
    EntityId id{node};
    if (sub.nodes.contains(id)) continue;
    if (best.d2 != BestTwo::kInf && best.d1 + best.d2 <= hops) {
      sub.nodes.emplace(id, NodeTag::kBridge);
    }
  }
  sub.edges = induced_edges(g, sub.nodes);
  return sub;
}

std::vector<RelevanceScore> score_bridges(const Subgraph& sub, std::span<const float> context,
                                          const GraphEmbeddings& emb, const ProjectionMatrix* w) {
  std::vector<RelevanceScore> scores;
  for (const auto& [id, tag] : sub.nodes) {
    if (tag != NodeTag::kBridge) continue;
    double s = 0.0;
    if (auto v = emb.entity(id)) {
      s = w != nullptr ? cosine(w->project(*v), context).value : cosine(*v, context).value;
    }
    scores.push_back({id, s});
  }
  return scores;
}

Subgraph score_and_prune(const Subgraph& sub, std::span<const float> context,
                         const GraphEmbeddings& emb, std::size_t k, const ProjectionMatrix* w) {
  if (sub.nodes.size() <= k) return sub;

  const std::size_t protected_nodes = sub.protected_count();
  std::size_t bridge_budget = 0;
  if (protected_nodes > k) {
    spdlog::warn("prune budget k={} is below the {} topic/answer nodes; keeping all of them",
                 k, protected_nodes);
  } else {
    bridge_budget = k - protected_nodes;
  }

  auto scores = score_bridges(sub, context, emb, w);
  std::sort(scores.begin(), scores.end(), [](const RelevanceScore& a, const RelevanceScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entity < b.entity;
  });
  if (scores.size() > bridge_budget) scores.resize(bridge_budget);

  Subgraph out;
  for (const auto& [id, tag] : sub.nodes) {
    if (tag != NodeTag::kBridge) out.nodes.emplace(id, tag);
  }
  for (const auto& s : scores) out.nodes.emplace(s.entity, NodeTag::kBridge);
  for (const auto& t : sub.edges) {
    if (out.nodes.contains(t.head) && out.nodes.contains(t.tail)) out.edges.push_back(t);
  }
  return out;
}

std::vector<Triple> to_triples(const Subgraph& sub, std::size_t max_triples) {
  auto group = [&](const Triple& t) {
    auto tag_of = [&](EntityId e) {
      auto it = sub.nodes.find(e);
      return it == sub.nodes.end() ? NodeTag::kBridge : it->second;
    };
    return std::min(static_cast<int>(tag_of(t.head)), static_cast<int>(tag_of(t.tail)));
  };
  std::vector<Triple> out = sub.edges;
  std::stable_sort(out.begin(), out.end(),
                   [&](const Triple& a, const Triple& b) { return group(a) < group(b); });
  if (out.size() > max_triples) out.resize(max_triples);
  return out;
}

}  // namespace knowgpt
