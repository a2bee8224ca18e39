#pragma once

// Heuristic subgraph extraction: linked entities, the bridge entities that
// join them within a few hops, and relevance-based pruning.

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "knowgpt/embeddings.hpp"
#include "knowgpt/kg_store.hpp"

namespace knowgpt {

// Order matters: it is the emission order used by to_triples.
enum class NodeTag { kTopic = 0, kAnswer = 1, kBridge = 2 };

struct Subgraph {
  std::map<EntityId, NodeTag> nodes;
  // Every graph triple with both endpoints in `nodes`, in ascending head id
  // then adjacency order.
  std::vector<Triple> edges;

  bool empty() const { return nodes.empty(); }
  std::size_t protected_count() const;
};

struct RelevanceScore {
  EntityId entity;
  double score = 0.0;
};

// Topic nodes are the question's source entities, answer nodes the union of
// all choices' targets (an entity in both is tagged topic). A non-topic node
// becomes a bridge when it lies on an undirected walk of at most `hops` edges
// between two distinct topic/answer nodes. Throws ConfigError when the
// question has no valid entity.
Subgraph extract_two_hop(const KnowledgeGraph& g, const QuestionContext& q, int hops = 2);

// All graph triples with both endpoints in `nodes`.
std::vector<Triple> induced_edges(const KnowledgeGraph& g, const std::map<EntityId, NodeTag>& nodes);

// cosine(entity vector, context) for every bridge node; entities without a
// vector score 0. When `w` is given the entity vector is projected first.
std::vector<RelevanceScore> score_bridges(const Subgraph& sub, std::span<const float> context,
                                          const GraphEmbeddings& emb,
                                          const ProjectionMatrix* w = nullptr);

// Keeps every topic/answer node and the highest-scoring bridges up to a total
// of k nodes (ties go to the lower id). When the protected nodes alone exceed
// k, all of them are kept, no bridge survives and a warning is logged.
Subgraph score_and_prune(const Subgraph& sub, std::span<const float> context,
                         const GraphEmbeddings& emb, std::size_t k = 200,
                         const ProjectionMatrix* w = nullptr);

// Edges touching a topic node first, then an answer node, then the rest;
// stable within each group; truncated to max_triples.
std::vector<Triple> to_triples(const Subgraph& sub, std::size_t max_triples);

}  // namespace knowgpt
