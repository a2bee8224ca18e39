#pragma once

// Synthetic graphs, datasets and scratch directories shared by the unit and
// acceptance tests.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "knowgpt/embeddings.hpp"
#include "knowgpt/eval_harness.hpp"
#include "knowgpt/kg_store.hpp"
#include "knowgpt/rl_policy.hpp"

namespace knowgpt::testing {

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

using TripleSpec = std::array<std::string, 3>;

KnowledgeGraph graph_of(const std::vector<TripleSpec>& triples);
std::string tsv_of(const std::vector<TripleSpec>& triples);

// n nodes "v<i>", m random directed edges over `relations` relation names.
// Self-loops are allowed; duplicates collapse.
std::vector<TripleSpec> random_triples(std::size_t n, std::size_t m, std::size_t relations,
                                       std::uint64_t seed);

// --- RL reachability -------------------------------------------------------

struct ReachabilityFixture {
  std::unique_ptr<KnowledgeGraph> graph;
  std::unique_ptr<EmbeddingTable> table;
  std::unique_ptr<GraphEmbeddings> emb;
  std::vector<PathQuery> train;
  std::vector<PathQuery> held_out;
};

struct ReachabilitySpec {
  std::size_t nodes = 500;
  double mean_degree = 6.0;
  std::size_t train_queries = 200;
  std::size_t held_out_queries = 100;
  // Extra training pairs taken from random walks of 1 to 3 steps.
  std::size_t sampled_train_queries = 5000;
  std::size_t relations = 1;
  std::size_t dim = 64;
  int smoothing_rounds = 12;
  // Subtract the mean entity vector before renormalising.
  bool center = true;
  std::uint64_t seed = 1;
};

// Random graph with one planted source -> target path (1 to 3 edges) per
// query; background edges are added until the mean (undirected) degree is
// reached. Held-out pairs never appear in the training set. Query context =
// target embedding.
ReachabilityFixture make_reachability_fixture(const ReachabilitySpec& spec);

// Entity rows minus their mean, renormalised; other rows untouched.
EmbeddingTable center_entities(const EmbeddingTable& table, const KnowledgeGraph& g);

// --- Question datasets -----------------------------------------------------

struct QaFixture {
  std::unique_ptr<KnowledgeGraph> graph;
  std::unique_ptr<EmbeddingTable> table;
  std::unique_ptr<GraphEmbeddings> emb;
  std::vector<QaExample> train;
  std::vector<QaExample> test;
  std::vector<TripleSpec> triples;
};

struct QaSpec {
  std::size_t train = 200;
  std::size_t test = 200;
  std::size_t choices = 5;
  std::size_t noise_nodes = 300;
  std::size_t noise_edges = 600;
  std::size_t dim = 16;
  std::uint64_t seed = 7;
};

// Each question has a source s, a bridge x and a gold answer t with the path
// s -> x -> t (or the direct edge s -> t for every fourth question). The
// gold fact is the edge into t, written "(head, relation, tail)". Distractor
// answers hang off random noise nodes.
QaFixture make_qa_fixture(const QaSpec& spec);

// Two-cluster question contexts for both splits: normalize(centroid_k +
// noise * g), g Gaussian with unit expected norm. Keyed by example id; the
// cluster ("c0"/"c1") alternates with the example index and is stored on the
// example.
EmbeddingTable clustered_contexts(std::vector<QaExample>& train, std::vector<QaExample>& test,
                                  std::size_t dim, double noise, std::uint64_t seed);

// One shared context direction with small noise.
EmbeddingTable single_cluster_contexts(const std::vector<QaExample>& train,
                                       const std::vector<QaExample>& test, std::size_t dim,
                                       double noise, std::uint64_t seed);

}  // namespace knowgpt::testing
