#pragma once

// Immutable in-memory knowledge graph: dense entity/relation vocabularies,
// a deduplicated triple list and mirrored forward/backward adjacency.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace knowgpt {

struct EntityId {
  std::uint32_t index = 0;
  friend auto operator<=>(EntityId, EntityId) = default;
};

struct RelationId {
  std::uint32_t index = 0;
  friend auto operator<=>(RelationId, RelationId) = default;
};

struct Triple {
  EntityId head;
  RelationId rel;
  EntityId tail;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// One adjacency entry: the relation and the entity at the other end.
struct Edge {
  RelationId rel;
  EntityId node;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class Direction { kForward, kBackward, kBoth };

struct LoadStats {
  std::size_t lines_read = 0;
  std::size_t comment_lines = 0;
  std::size_t duplicate_triples = 0;
};

// Lowercases and replaces spaces with underscores. Used as the lookup key for
// entity and relation names; the first-seen spelling is what gets displayed.
std::string normalize_name(std::string_view name);

class KnowledgeGraph {
 public:
  class Builder;

  std::size_t entity_count() const { return entity_names_.size(); }
  std::size_t relation_count() const { return relation_names_.size(); }
  std::size_t triple_count() const { return triples_.size(); }

  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  const LoadStats& stats() const { return stats_; }

  const std::string& entity_name(EntityId e) const;
  const std::string& relation_name(RelationId r) const;

  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  bool valid(EntityId e) const { return e.index < entity_names_.size(); }
  bool valid(RelationId r) const { return r.index < relation_names_.size(); }

  std::span<const Edge> out_edges(EntityId e) const;
  std::span<const Edge> in_edges(EntityId e) const;

  // Insertion order; for kBoth the forward list followed by the backward list.
  // Throws LookupError for an invalid id.
  std::vector<Edge> neighbors(EntityId e, Direction direction) const;

  bool contains(const Triple& t) const;

 private:
  KnowledgeGraph() = default;

  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, std::uint32_t> entity_index_;
  std::unordered_map<std::string, std::uint32_t> relation_index_;
  std::vector<Triple> triples_;
  // CSR layout: edges of entity i live in [offsets[i], offsets[i+1]).
  std::vector<std::size_t> fwd_offsets_;
  std::vector<Edge> fwd_edges_;
  std::vector<std::size_t> bwd_offsets_;
  std::vector<Edge> bwd_edges_;
  LoadStats stats_;
};

// Accumulates named triples; ids are assigned in first-appearance order and
// exact duplicate triples are dropped.
class KnowledgeGraph::Builder {
 public:
  EntityId add_entity(std::string_view name);
  RelationId add_relation(std::string_view name);
  // Returns false when the triple was already present.
  bool add(std::string_view head, std::string_view relation, std::string_view tail);

  std::size_t triple_count() const { return triples_.size(); }
  LoadStats& stats() { return stats_; }

  KnowledgeGraph build() &&;

 private:
  struct TripleHash {
    std::size_t operator()(const Triple& t) const noexcept;
  };

  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, std::uint32_t> entity_index_;
  std::unordered_map<std::string, std::uint32_t> relation_index_;
  std::vector<Triple> triples_;
  std::unordered_set<Triple, TripleHash> seen_;
  LoadStats stats_;
};

// Reads a TAB-separated head/relation/tail file. Lines starting with '#' and
// blank lines are skipped. Throws FormatError naming the line number for a
// malformed line, and for a file containing no triples.
KnowledgeGraph load_graph_tsv(const std::filesystem::path& path);

struct LinkResult {
  std::vector<EntityId> ids;
  std::vector<std::string> unresolved;
};

// Case-insensitive exact match after normalize_name. Unresolved names are
// reported, never fatal. Duplicate hits are kept once.
LinkResult link_entities(const KnowledgeGraph& g, std::span<const std::string> names);

struct Choice {
  std::string label;
  std::string text;
};

// A multiple-choice question with its linked source entities and the
// per-choice target entities.
struct QuestionContext {
  std::string id;
  std::string question_text;
  std::vector<Choice> choices;
  std::optional<std::string> gold_label;
  std::vector<EntityId> source_entities;
  std::map<std::string, std::vector<EntityId>> target_entities;

  // Union of all per-choice targets in label order, deduplicated.
  std::vector<EntityId> all_targets() const;
  const Choice* find_choice(std::string_view label) const;
};

// Checks label uniqueness, gold-label membership and entity validity against g.
// Throws ConfigError on violation.
void validate_question(const QuestionContext& q, const KnowledgeGraph& g);

}  // namespace knowgpt
