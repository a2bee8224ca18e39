#include "support/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace knowgpt::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static int counter = 0;
  std::random_device rd;
  for (;;) {
    auto candidate = fs::temp_directory_path() /
                     ("knowgpt-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    if (fs::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

KnowledgeGraph graph_of(const std::vector<TripleSpec>& triples) {
  KnowledgeGraph::Builder b;
  for (const auto& t : triples) b.add(t[0], t[1], t[2]);
  return std::move(b).build();
}

std::string tsv_of(const std::vector<TripleSpec>& triples) {
  std::string out;
  for (const auto& t : triples) out += t[0] + "\t" + t[1] + "\t" + t[2] + "\n";
  return out;
}

std::vector<TripleSpec> random_triples(std::size_t n, std::size_t m, std::size_t relations,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  std::uniform_int_distribution<std::size_t> rel(0, relations - 1);
  std::vector<TripleSpec> out;
  for (std::size_t i = 0; i < m; ++i) {
    out.push_back({"v" + std::to_string(node(rng)), "r" + std::to_string(rel(rng)),
                   "v" + std::to_string(node(rng))});
  }
  return out;
}

ReachabilityFixture make_reachability_fixture(const ReachabilitySpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> node(0, spec.nodes - 1);
  std::uniform_int_distribution<std::size_t> rel(0, spec.relations - 1);
  std::uniform_int_distribution<int> length(1, 3);
  auto name = [](std::size_t i) { return "v" + std::to_string(i); };
  auto rel_name = [](std::size_t i) { return "r" + std::to_string(i); };

  KnowledgeGraph::Builder b;
  for (std::size_t i = 0; i < spec.nodes; ++i) b.add_entity(name(i));

  struct Planted {
    std::size_t source;
    std::size_t target;
  };
  std::vector<Planted> planted;
  std::set<std::pair<std::size_t, std::size_t>> used;
  const std::size_t total = spec.train_queries + spec.held_out_queries;
  while (planted.size() < total) {
    std::size_t s = node(rng);
    std::size_t t = node(rng);
    if (s == t || !used.insert({s, t}).second) continue;
    const int len = length(rng);
    std::vector<std::size_t> path{s};
    while (static_cast<int>(path.size()) < len) {
      std::size_t x = node(rng);
      if (x == t || std::find(path.begin(), path.end(), x) != path.end()) continue;
      path.push_back(x);
    }
    path.push_back(t);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      b.add(name(path[i]), rel_name(rel(rng)), name(path[i + 1]));
    }
    planted.push_back({s, t});
  }
  const auto edges = static_cast<std::size_t>(std::lround(spec.mean_degree *
                                                          static_cast<double>(spec.nodes) / 2.0));
  while (b.triple_count() < edges) {
    std::size_t h = node(rng);
    std::size_t t = node(rng);
    if (h == t) continue;
    b.add(name(h), rel_name(rel(rng)), name(t));
  }

  ReachabilityFixture f;
  f.graph = std::make_unique<KnowledgeGraph>(std::move(b).build());
  auto table = graph_mock_table(*f.graph, spec.dim, spec.seed, spec.smoothing_rounds);
  if (spec.center) table = center_entities(table, *f.graph);
  f.table = std::make_unique<EmbeddingTable>(std::move(table));
  f.emb = std::make_unique<GraphEmbeddings>(*f.graph, *f.table);

  auto query = [&](EntityId s, EntityId t) {
    PathQuery q;
    q.source = s;
    q.targets = {t};
    q.context = target_embedding(q.targets, *f.emb);
    return q;
  };
  std::set<std::pair<std::uint32_t, std::uint32_t>> held_out;
  for (std::size_t i = 0; i < planted.size(); ++i) {
    const auto s = *f.graph->find_entity(name(planted[i].source));
    const auto t = *f.graph->find_entity(name(planted[i].target));
    if (i >= spec.train_queries) held_out.insert({s.index, t.index});
    (i < spec.train_queries ? f.train : f.held_out).push_back(query(s, t));
  }

  std::uniform_int_distribution<std::uint32_t> start(
      0, static_cast<std::uint32_t>(f.graph->entity_count() - 1));
  const std::size_t wanted = f.train.size() + spec.sampled_train_queries;
  while (f.train.size() < wanted) {
    const EntityId s{start(rng)};
    std::vector<EntityId> walk{s};
    const int steps = length(rng);
    for (int i = 0; i < steps; ++i) {
      auto next = candidate_actions(*f.graph, walk.back(), Direction::kBoth, walk);
      if (next.empty()) break;
      walk.push_back(next[std::uniform_int_distribution<std::size_t>(0, next.size() - 1)(rng)].tail);
    }
    const EntityId t = walk.back();
    if (t == s || held_out.count({s.index, t.index})) continue;
    f.train.push_back(query(s, t));
  }
  return f;
}

EmbeddingTable center_entities(const EmbeddingTable& table, const KnowledgeGraph& g) {
  const std::size_t d = table.dim();
  std::vector<std::size_t> rows;
  for (const auto& name : g.entity_names()) {
    if (auto r = table.find(name)) rows.push_back(*r);
  }
  std::vector<double> mean(d, 0.0);
  for (auto r : rows) {
    auto v = table.row(r);
    for (std::size_t j = 0; j < d; ++j) mean[j] += v[j] / static_cast<double>(rows.size());
  }
  std::vector<float> data = table.data();
  for (auto r : rows) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      data[r * d + j] = static_cast<float>(data[r * d + j] - mean[j]);
      norm += double(data[r * d + j]) * data[r * d + j];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) data[r * d + j] = static_cast<float>(data[r * d + j] / norm);
  }
  return EmbeddingTable(d, table.vocab(), std::move(data));
}

namespace {

const std::vector<std::string> kQaRelations = {"at_location", "part_of",     "used_for",
                                               "capable_of",  "has_property", "causes",
                                               "is_a",        "desires"};

}  // namespace

QaFixture make_qa_fixture(const QaSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> noise(0, spec.noise_nodes - 1);
  std::uniform_int_distribution<std::size_t> rel(0, kQaRelations.size() - 1);
  std::uniform_int_distribution<std::size_t> slot(0, spec.choices - 1);
  auto noise_name = [](std::size_t i) { return "noise_" + std::to_string(i); };

  QaFixture f;
  auto& triples = f.triples;
  for (std::size_t i = 0; i < spec.noise_edges; ++i) {
    triples.push_back({noise_name(noise(rng)), kQaRelations[rel(rng)], noise_name(noise(rng))});
  }

  struct Draft {
    std::string id;
    std::string topic;
    std::string answer;
    std::vector<std::string> distractors;
    std::string gold_fact;
    std::size_t gold_slot;
  };
  std::vector<Draft> drafts;
  const std::size_t total = spec.train + spec.test;
  for (std::size_t i = 0; i < total; ++i) {
    Draft d;
    d.id = (i < spec.train ? "train-" : "test-") + std::to_string(i);
    const auto n = std::to_string(i);
    d.topic = "topic_" + n;
    d.answer = "answer_" + n;
    const auto& gold_rel = kQaRelations[rel(rng)];
    if (i % 4 == 3) {
      triples.push_back({d.topic, gold_rel, d.answer});
      d.gold_fact = "(" + d.topic + ", " + gold_rel + ", " + d.answer + ")";
    } else {
      const auto bridge = "bridge_" + n;
      triples.push_back({d.topic, kQaRelations[rel(rng)], bridge});
      triples.push_back({bridge, gold_rel, d.answer});
      d.gold_fact = "(" + bridge + ", " + gold_rel + ", " + d.answer + ")";
    }
    triples.push_back({d.topic, kQaRelations[rel(rng)], noise_name(noise(rng))});
    triples.push_back({noise_name(noise(rng)), kQaRelations[rel(rng)], d.answer});
    for (std::size_t j = 0; j + 1 < spec.choices; ++j) {
      auto distractor = "distractor_" + n + "_" + std::to_string(j);
      triples.push_back({distractor, kQaRelations[rel(rng)], noise_name(noise(rng))});
      d.distractors.push_back(std::move(distractor));
    }
    d.gold_slot = slot(rng);
    drafts.push_back(std::move(d));
  }

  f.graph = std::make_unique<KnowledgeGraph>(graph_of(triples));
  f.table = std::make_unique<EmbeddingTable>(graph_mock_table(*f.graph, spec.dim, spec.seed));
  f.emb = std::make_unique<GraphEmbeddings>(*f.graph, *f.table);

  for (std::size_t i = 0; i < drafts.size(); ++i) {
    const auto& d = drafts[i];
    std::vector<Choice> choices;
    std::map<std::string, std::vector<std::string>> targets;
    std::string gold_label;
    std::size_t next_distractor = 0;
    for (std::size_t k = 0; k < spec.choices; ++k) {
      std::string label(1, static_cast<char>('A' + k));
      std::string entity =
          k == d.gold_slot ? d.answer : d.distractors[next_distractor++];
      if (k == d.gold_slot) gold_label = label;
      choices.push_back(Choice{label, display_name(entity)});
      targets[label] = {entity};
    }
    auto ex = make_example(*f.graph, d.id, "Which option is linked to " + display_name(d.topic) + "?",
                           std::move(choices), gold_label, {d.topic}, std::move(targets),
                           d.gold_fact);
    (i < spec.train ? f.train : f.test).push_back(std::move(ex));
  }
  return f;
}

namespace {

std::vector<float> unit_gaussian(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = n(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

std::vector<float> noisy(std::span<const float> centroid, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(centroid.size())));
  std::vector<double> v(centroid.size());
  double norm = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = centroid[i] + noise * n(rng);
    norm += v[i] * v[i];
  }
  norm = std::sqrt(norm);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

}  // namespace

EmbeddingTable clustered_contexts(std::vector<QaExample>& train, std::vector<QaExample>& test,
                                  std::size_t dim, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::array<std::vector<float>, 2> centroids{unit_gaussian(dim, rng),
                                                    unit_gaussian(dim, rng)};
  std::vector<std::string> vocab;
  std::vector<float> data;
  for (auto* set : {&train, &test}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      auto& ex = (*set)[i];
      const std::size_t k = i % 2;
      ex.cluster = "c" + std::to_string(k);
      auto v = noisy(centroids[k], noise, rng);
      vocab.push_back(ex.id());
      data.insert(data.end(), v.begin(), v.end());
    }
  }
  return EmbeddingTable(dim, std::move(vocab), std::move(data));
}

EmbeddingTable single_cluster_contexts(const std::vector<QaExample>& train,
                                       const std::vector<QaExample>& test, std::size_t dim,
                                       double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto centroid = unit_gaussian(dim, rng);
  std::vector<std::string> vocab;
  std::vector<float> data;
  for (const auto* set : {&train, &test}) {
    for (const auto& ex : *set) {
      auto v = noisy(centroid, noise, rng);
      vocab.push_back(ex.id());
      data.insert(data.end(), v.begin(), v.end());
    }
  }
  return EmbeddingTable(dim, std::move(vocab), std::move(data));
}

}  // namespace knowgpt::testing
