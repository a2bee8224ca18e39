#pragma once

// Dense vectors for entities, relations and question contexts, plus the
// small amount of vector math the extraction and bandit code needs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "knowgpt/kg_store.hpp"

namespace knowgpt {

// Row-major count x dim float32 table with a name per row.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  // Validates shape and finiteness; throws FormatError with the row index of
  // the first non-finite value.
  EmbeddingTable(std::size_t dim, std::vector<std::string> vocab, std::vector<float> data);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vocab_.size(); }
  bool empty() const { return vocab_.empty(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> row(std::size_t i) const;
  // Lookup uses normalize_name; for duplicate keys the first row wins.
  std::optional<std::size_t> find(std::string_view name) const;
  // Throws LookupError naming the missing entry.
  std::span<const float> lookup(std::string_view name) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> vocab_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// KGEB v1: "KGEB", u32 version, u32 dim, u64 count, count*dim f32, all LE.
// The vocab file holds one name per line.
EmbeddingTable load_embeddings(const std::filesystem::path& vectors_path,
                               const std::filesystem::path& vocab_path);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& vectors_path,
                     const std::filesystem::path& vocab_path);

struct CosineResult {
  double value = 0.0;
  // Set when either input has zero norm; value is then 0.
  bool degenerate = false;
};

// Accumulates in double. Throws ConfigError on a dimension mismatch.
CosineResult cosine(std::span<const float> a, std::span<const float> b);
double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> a);

// Dense rows x cols float matrix mapping path space to context space.
class ProjectionMatrix {
 public:
  ProjectionMatrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static ProjectionMatrix identity(std::size_t n);
  // Reads a KGEB file (no vocab): count = output rows, dim = input columns.
  static ProjectionMatrix load(const std::filesystem::path& path);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<float>& data() const { return data_; }

  // W * p. Throws ConfigError when p.size() != cols().
  std::vector<float> project(std::span<const float> p) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<float> data_;
};

// Deterministic unit vector derived from (seed, text). Stands in for a
// pre-trained encoder in tests and demos.
std::vector<float> mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

EmbeddingTable mock_table(std::span<const std::string> names, std::size_t dim, std::uint64_t seed);

// Entity rows start from mock_embed(name) and are smoothed `rounds` times with
// the mean of their undirected neighbours, then renormalised; relation rows
// are plain mock_embed(name). Mirrors how exported embeddings carry
// neighbourhood information from incident-triple sentences.
EmbeddingTable graph_mock_table(const KnowledgeGraph& g, std::size_t dim, std::uint64_t seed,
                                int rounds = 2);

// Binds a table to a graph: resolves every entity and relation to a row once.
class GraphEmbeddings {
 public:
  GraphEmbeddings(const KnowledgeGraph& g, const EmbeddingTable& table);

  std::size_t dim() const { return table_->dim(); }
  const EmbeddingTable& table() const { return *table_; }

  std::optional<std::span<const float>> entity(EntityId e) const;
  std::optional<std::span<const float>> relation(RelationId r) const;
  // Throw LookupError naming the entity/relation when it has no row.
  std::span<const float> entity_or_throw(EntityId e) const;
  std::span<const float> relation_or_throw(RelationId r) const;

  std::size_t missing_entities() const { return missing_entities_; }

 private:
  const KnowledgeGraph* graph_;
  const EmbeddingTable* table_;
  std::vector<std::int64_t> entity_rows_;
  std::vector<std::int64_t> relation_rows_;
  std::size_t missing_entities_ = 0;
};

// Mean of the interleaved sequence [e_walk0, r_0, e_walk1, r_1, ..., e_walkN].
// walk.size() must equal relations.size() + 1.
std::vector<float> path_embedding(std::span<const EntityId> walk,
                                  std::span<const RelationId> relations,
                                  const GraphEmbeddings& emb);

}  // namespace knowgpt
