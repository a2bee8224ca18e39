#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "knowgpt/embeddings.hpp"
#include "knowgpt/kg_store.hpp"
#include "knowgpt/prompt_render.hpp"
#include "knowgpt/rl_policy.hpp"
#include "knowgpt/subgraph.hpp"

namespace {

using namespace knowgpt;

// Random graph with `n` nodes and about `degree * n / 2` edges over 8 relations.
struct Bench {
  KnowledgeGraph graph;
  EmbeddingTable table;
  GraphEmbeddings emb;

  Bench(std::size_t n, std::size_t degree, std::size_t dim)
      : graph(make_graph(n, degree)), table(graph_mock_table(graph, dim, 2)), emb(graph, table) {}

  static KnowledgeGraph make_graph(std::size_t n, std::size_t degree) {
    std::mt19937_64 rng(3);
    KnowledgeGraph::Builder b;
    for (std::size_t i = 0; i < n * degree / 2; ++i) {
      b.add("v" + std::to_string(rng() % n), "r" + std::to_string(rng() % 8),
            "v" + std::to_string(rng() % n));
    }
    return std::move(b).build();
  }

  QuestionContext question(std::mt19937_64& rng) const {
    QuestionContext q;
    q.id = "q";
    q.question_text = "?";
    const auto n = static_cast<std::uint32_t>(graph.entity_count());
    q.source_entities = {EntityId{static_cast<std::uint32_t>(rng() % n)}};
    for (const char* l : {"A", "B", "C", "D", "E"}) {
      q.choices.push_back({l, l});
      q.target_entities[l] = {EntityId{static_cast<std::uint32_t>(rng() % n)}};
    }
    return q;
  }
};

void BM_ExtractAndPrune(benchmark::State& state) {
  Bench b(static_cast<std::size_t>(state.range(0)), 8, 64);
  std::mt19937_64 rng(5);
  const std::vector<float> c(64, 0.1f);
  for (auto _ : state) {
    auto q = b.question(rng);
    auto sub = extract_two_hop(b.graph, q);
    auto pruned = score_and_prune(sub, c, b.emb, 200);
    benchmark::DoNotOptimize(to_triples(pruned, 50));
  }
}
BENCHMARK(BM_ExtractAndPrune)->Arg(1000)->Arg(10000);

void BM_SampleRollout(benchmark::State& state) {
  Bench b(5000, 8, static_cast<std::size_t>(state.range(0)));
  const auto d = b.table.dim();
  auto p = PolicyParams::random(d, 64, 1, 0.5);
  TrainConfig cfg;
  std::mt19937_64 rng(2);
  const std::vector<EntityId> targets{EntityId{17}};
  auto tv = target_embedding(targets, b.emb);
  for (auto _ : state) {
    const EntityId src{static_cast<std::uint32_t>(rng() % b.graph.entity_count())};
    benchmark::DoNotOptimize(sample_rollout(b.graph, p, {src, targets, tv, false}, cfg, b.emb, rng));
  }
}
BENCHMARK(BM_SampleRollout)->Arg(64)->Arg(256);

void BM_RenderPrompt(benchmark::State& state) {
  Bench b(1000, 8, 16);
  std::mt19937_64 rng(4);
  auto q = b.question(rng);
  const auto& all = b.graph.triples();
  auto bundle = KnowledgeBundle::from(std::vector<Triple>(all.begin(), all.begin() + 50), Extractor::kSubgraph);
  const auto t = static_cast<TemplateId>(state.range(0));
  for (auto _ : state) {
    auto text = render_knowledge(bundle, b.graph, t);
    benchmark::DoNotOptimize(assemble_prompt(q, text, t));
  }
}
BENCHMARK(BM_RenderPrompt)->DenseRange(0, 2);

}  // namespace
