#include "knowgpt/kg_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "knowgpt/error.hpp"

namespace knowgpt {

std::string normalize_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char ch : name) {
    if (ch == ' ') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  return out;
}

const std::string& KnowledgeGraph::entity_name(EntityId e) const {
  if (!valid(e)) {
    throw LookupError("invalid entity id " + std::to_string(e.index));
  }
  return entity_names_[e.index];
}

const std::string& KnowledgeGraph::relation_name(RelationId r) const {
  if (!valid(r)) {
    throw LookupError("invalid relation id " + std::to_string(r.index));
  }
  return relation_names_[r.index];
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
  auto it = entity_index_.find(normalize_name(name));
  if (it == entity_index_.end()) return std::nullopt;
  return EntityId{it->second};
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
  auto it = relation_index_.find(normalize_name(name));
  if (it == relation_index_.end()) return std::nullopt;
  return RelationId{it->second};
}

std::span<const Edge> KnowledgeGraph::out_edges(EntityId e) const {
  if (!valid(e)) {
    throw LookupError("invalid entity id " + std::to_string(e.index));
  }
  return {fwd_edges_.data() + fwd_offsets_[e.index],
          fwd_offsets_[e.index + 1] - fwd_offsets_[e.index]};
}

std::span<const Edge> KnowledgeGraph::in_edges(EntityId e) const {
  if (!valid(e)) {
    throw LookupError("invalid entity id " + std::to_string(e.index));
  }
  return {bwd_edges_.data() + bwd_offsets_[e.index],
          bwd_offsets_[e.index + 1] - bwd_offsets_[e.index]};
}

std::vector<Edge> KnowledgeGraph::neighbors(EntityId e, Direction direction) const {
  std::vector<Edge> out;
  if (direction != Direction::kBackward) {
    auto fwd = out_edges(e);
    out.insert(out.end(), fwd.begin(), fwd.end());
  }
  if (direction != Direction::kForward) {
    auto bwd = in_edges(e);
    out.insert(out.end(), bwd.begin(), bwd.end());
  }
  return out;
}

bool KnowledgeGraph::contains(const Triple& t) const {
  if (!valid(t.head) || !valid(t.tail)) return false;
  auto edges = out_edges(t.head);
  return std::find(edges.begin(), edges.end(), Edge{t.rel, t.tail}) != edges.end();
}

std::size_t KnowledgeGraph::Builder::TripleHash::operator()(const Triple& t) const noexcept {
  std::uint64_t h = t.head.index;
  h = h * 0x9E3779B97F4A7C15ULL ^ t.rel.index;
  h = h * 0x9E3779B97F4A7C15ULL ^ t.tail.index;
  return static_cast<std::size_t>(h ^ (h >> 31));
}

EntityId KnowledgeGraph::Builder::add_entity(std::string_view name) {
  auto key = normalize_name(name);
  auto [it, inserted] = entity_index_.try_emplace(std::move(key),
                                                  static_cast<std::uint32_t>(entity_names_.size()));
  if (inserted) entity_names_.emplace_back(name);
  return EntityId{it->second};
}

RelationId KnowledgeGraph::Builder::add_relation(std::string_view name) {
  auto key = normalize_name(name);
  auto [it, inserted] = relation_index_.try_emplace(
      std::move(key), static_cast<std::uint32_t>(relation_names_.size()));
  if (inserted) relation_names_.emplace_back(name);
  return RelationId{it->second};
}

bool KnowledgeGraph::Builder::add(std::string_view head, std::string_view relation,
                                  std::string_view tail) {
  Triple t{add_entity(head), add_relation(relation), add_entity(tail)};
  if (!seen_.insert(t).second) {
    ++stats_.duplicate_triples;
    return false;
  }
  triples_.push_back(t);
  return true;
}

KnowledgeGraph KnowledgeGraph::Builder::build() && {
  KnowledgeGraph g;
  const std::size_t n = entity_names_.size();

  // Counting sort into CSR keeps insertion order within each bucket.
  g.fwd_offsets_.assign(n + 1, 0);
  g.bwd_offsets_.assign(n + 1, 0);
  for (const auto& t : triples_) {
    ++g.fwd_offsets_[t.head.index + 1];
    ++g.bwd_offsets_[t.tail.index + 1];
  }
  for (std::size_t i = 0; i < n; ++i) {
    g.fwd_offsets_[i + 1] += g.fwd_offsets_[i];
    g.bwd_offsets_[i + 1] += g.bwd_offsets_[i];
  }
  g.fwd_edges_.resize(triples_.size());
  g.bwd_edges_.resize(triples_.size());
  std::vector<std::size_t> fwd_fill(g.fwd_offsets_.begin(), g.fwd_offsets_.end() - 1);
  std::vector<std::size_t> bwd_fill(g.bwd_offsets_.begin(), g.bwd_offsets_.end() - 1);
  for (const auto& t : triples_) {
    g.fwd_edges_[fwd_fill[t.head.index]++] = Edge{t.rel, t.tail};
    g.bwd_edges_[bwd_fill[t.tail.index]++] = Edge{t.rel, t.head};
  }

  g.entity_names_ = std::move(entity_names_);
  g.relation_names_ = std::move(relation_names_);
  g.entity_index_ = std::move(entity_index_);
  g.relation_index_ = std::move(relation_index_);
  g.triples_ = std::move(triples_);
  g.stats_ = stats_;
  seen_.clear();
  return g;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

KnowledgeGraph load_graph_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open graph file " + path.string());
  }
  KnowledgeGraph::Builder builder;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++builder.stats().lines_read;
    if (line.empty()) continue;
    if (line.front() == '#') {
      ++builder.stats().comment_lines;
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    for (auto f : fields) {
      if (f.empty()) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": empty field");
      }
    }
    builder.add(fields[0], fields[1], fields[2]);
  }
  if (builder.triple_count() == 0) {
    throw FormatError(path.string() + ": graph file contains no triples");
  }
  auto g = std::move(builder).build();
  if (g.stats().duplicate_triples > 0) {
    spdlog::info("{}: dropped {} duplicate triples", path.string(), g.stats().duplicate_triples);
  }
  return g;
}

LinkResult link_entities(const KnowledgeGraph& g, std::span<const std::string> names) {
  LinkResult result;
  std::set<EntityId> seen;
  for (const auto& name : names) {
    if (auto id = g.find_entity(name)) {
      if (seen.insert(*id).second) result.ids.push_back(*id);
    } else {
      result.unresolved.push_back(name);
    }
  }
  return result;
}

std::vector<EntityId> QuestionContext::all_targets() const {
  std::vector<EntityId> out;
  std::set<EntityId> seen;
  for (const auto& [label, ids] : target_entities) {
    for (auto id : ids) {
      if (seen.insert(id).second) out.push_back(id);
    }
  }
  return out;
}

const Choice* QuestionContext::find_choice(std::string_view label) const {
  for (const auto& c : choices) {
    if (c.label == label) return &c;
  }
  return nullptr;
}

void validate_question(const QuestionContext& q, const KnowledgeGraph& g) {
  std::set<std::string> labels;
  for (const auto& c : q.choices) {
    if (!labels.insert(c.label).second) {
      throw ConfigError("question " + q.id + ": duplicate choice label '" + c.label + "'");
    }
  }
  if (q.gold_label && !labels.contains(*q.gold_label)) {
    throw ConfigError("question " + q.id + ": gold label '" + *q.gold_label + "' is not a choice");
  }
  for (auto e : q.source_entities) {
    if (!g.valid(e)) throw ConfigError("question " + q.id + ": invalid source entity");
  }
  for (const auto& [label, ids] : q.target_entities) {
    if (!labels.contains(label)) {
      throw ConfigError("question " + q.id + ": targets for unknown label '" + label + "'");
    }
    for (auto e : ids) {
      if (!g.valid(e)) throw ConfigError("question " + q.id + ": invalid target entity");
    }
  }
}

}  // namespace knowgpt
