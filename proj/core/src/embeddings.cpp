#include "knowgpt/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "knowgpt/binary_io.hpp"
#include "knowgpt/error.hpp"
#include "knowgpt/hash.hpp"

namespace knowgpt {

namespace {

constexpr std::string_view kEmbeddingMagic = "KGEB";
constexpr std::uint32_t kEmbeddingVersion = 1;

struct RawMatrix {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::vector<float> data;
};

RawMatrix read_kgeb(const std::filesystem::path& path) {
  auto in = io::open_binary_input(path);
  io::expect_magic(in, kEmbeddingMagic);
  auto version = io::read_le<std::uint32_t>(in, "version");
  if (version != kEmbeddingVersion) {
    throw FormatError(path.string() + ": unsupported KGEB version " + std::to_string(version));
  }
  RawMatrix m;
  m.dim = io::read_le<std::uint32_t>(in, "dim");
  m.count = io::read_le<std::uint64_t>(in, "count");
  if (m.dim == 0) throw FormatError(path.string() + ": dim must be positive");
  m.data.resize(m.dim * m.count);
  for (auto& v : m.data) v = io::read_le<float>(in, "row data");
  io::expect_eof(in, path);
  return m;
}

void write_kgeb(const std::filesystem::path& path, std::size_t dim, std::size_t count,
                std::span<const float> data) {
  auto out = io::open_binary_output(path);
  io::write_magic(out, kEmbeddingMagic);
  io::write_le<std::uint32_t>(out, kEmbeddingVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(count));
  for (float v : data) io::write_le<float>(out, v);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim, std::vector<std::string> vocab,
                               std::vector<float> data)
    : dim_(dim), vocab_(std::move(vocab)), data_(std::move(data)) {
  if (dim_ == 0) throw FormatError("embedding dim must be positive");
  if (data_.size() != dim_ * vocab_.size()) {
    throw FormatError("embedding table: " + std::to_string(vocab_.size()) + " names but " +
                      std::to_string(data_.size() / dim_) + " rows");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw FormatError("embedding row " + std::to_string(i / dim_) + " (" + vocab_[i / dim_] +
                        ") contains a non-finite value");
    }
  }
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    index_.try_emplace(normalize_name(vocab_[i]), i);
  }
}

std::span<const float> EmbeddingTable::row(std::size_t i) const {
  if (i >= size()) throw LookupError("embedding row " + std::to_string(i) + " out of range");
  return {data_.data() + i * dim_, dim_};
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view name) const {
  auto it = index_.find(normalize_name(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> EmbeddingTable::lookup(std::string_view name) const {
  auto i = find(name);
  if (!i) throw LookupError("no embedding for '" + std::string(name) + "'");
  return row(*i);
}

EmbeddingTable load_embeddings(const std::filesystem::path& vectors_path,
                               const std::filesystem::path& vocab_path) {
  auto raw = read_kgeb(vectors_path);
  std::ifstream vin(vocab_path);
  if (!vin) throw Error("cannot open vocab file " + vocab_path.string());
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(vin, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  if (vocab.size() != raw.count) {
    throw FormatError("count mismatch: " + vectors_path.string() + " has " +
                      std::to_string(raw.count) + " rows, " + vocab_path.string() + " has " +
                      std::to_string(vocab.size()) + " lines");
  }
  return EmbeddingTable(raw.dim, std::move(vocab), std::move(raw.data));
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& vectors_path,
                     const std::filesystem::path& vocab_path) {
  write_kgeb(vectors_path, table.dim(), table.size(), table.data());
  std::ofstream vout(vocab_path, std::ios::binary | std::ios::trunc);
  if (!vout) throw Error("cannot open " + vocab_path.string() + " for writing");
  for (const auto& name : table.vocab()) vout << name << '\n';
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ConfigError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

CosineResult cosine(std::span<const float> a, std::span<const float> b) {
  double ab = dot(a, b);
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  double c = ab / (na * nb);
  return {std::clamp(c, -1.0, 1.0), false};
}

ProjectionMatrix::ProjectionMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw FormatError("projection matrix shape mismatch");
  for (float v : data_) {
    if (!std::isfinite(v)) throw FormatError("projection matrix contains a non-finite value");
  }
}

ProjectionMatrix ProjectionMatrix::identity(std::size_t n) {
  std::vector<float> d(n * n, 0.0F);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0F;
  return ProjectionMatrix(n, n, std::move(d));
}

ProjectionMatrix ProjectionMatrix::load(const std::filesystem::path& path) {
  auto raw = read_kgeb(path);
  return ProjectionMatrix(raw.count, raw.dim, std::move(raw.data));
}

std::vector<float> ProjectionMatrix::project(std::span<const float> p) const {
  if (p.size() != cols_) {
    throw ConfigError("projection expects input dim " + std::to_string(cols_) + ", got " +
                      std::to_string(p.size()));
  }
  std::vector<float> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    double s = 0.0;
    const float* row = data_.data() + r * cols_;
    for (std::size_t c = 0; c < cols_; ++c) s += static_cast<double>(row[c]) * p[c];
    out[r] = static_cast<float>(s);
  }
  return out;
}

std::vector<float> mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("mock_embed: dim must be positive");
  std::mt19937_64 rng(mix_seed(seed, text));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      x = normal(rng);
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

EmbeddingTable mock_table(std::span<const std::string> names, std::size_t dim,
                          std::uint64_t seed) {
  std::vector<float> data;
  data.reserve(names.size() * dim);
  for (const auto& n : names) {
    auto v = mock_embed(n, dim, seed);
    data.insert(data.end(), v.begin(), v.end());
  }
  return EmbeddingTable(dim, {names.begin(), names.end()}, std::move(data));
}

EmbeddingTable graph_mock_table(const KnowledgeGraph& g, std::size_t dim, std::uint64_t seed,
                                int rounds) {
  const std::size_t n = g.entity_count();
  std::vector<double> cur(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = mock_embed(g.entity_names()[i], dim, seed);
    std::copy(v.begin(), v.end(), cur.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  std::vector<double> next(n * dim);
  for (int round = 0; round < rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      EntityId e{static_cast<std::uint32_t>(i)};
      auto nbrs = g.neighbors(e, Direction::kBoth);
      double* dst = next.data() + i * dim;
      const double* self = cur.data() + i * dim;
      std::copy(self, self + dim, dst);
      if (!nbrs.empty()) {
        double w = 1.0 / static_cast<double>(nbrs.size());
        for (const auto& edge : nbrs) {
          const double* src = cur.data() + static_cast<std::size_t>(edge.node.index) * dim;
          for (std::size_t k = 0; k < dim; ++k) dst[k] += w * src[k];
        }
      }
      double norm = 0.0;
      for (std::size_t k = 0; k < dim; ++k) norm += dst[k] * dst[k];
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (std::size_t k = 0; k < dim; ++k) dst[k] /= norm;
      }
    }
    std::swap(cur, next);
  }

  std::vector<std::string> vocab = g.entity_names();
  std::vector<float> data(cur.begin(), cur.end());
  for (const auto& rel : g.relation_names()) {
    vocab.push_back(rel);
    auto v = mock_embed(rel, dim, seed);
    data.insert(data.end(), v.begin(), v.end());
  }
  return EmbeddingTable(dim, std::move(vocab), std::move(data));
}

GraphEmbeddings::GraphEmbeddings(const KnowledgeGraph& g, const EmbeddingTable& table)
    : graph_(&g), table_(&table) {
  entity_rows_.resize(g.entity_count(), -1);
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    if (auto r = table.find(g.entity_names()[i])) {
      entity_rows_[i] = static_cast<std::int64_t>(*r);
    } else {
      ++missing_entities_;
    }
  }
  relation_rows_.resize(g.relation_count(), -1);
  for (std::size_t i = 0; i < g.relation_count(); ++i) {
    if (auto r = table.find(g.relation_names()[i])) relation_rows_[i] = static_cast<std::int64_t>(*r);
  }
}

std::optional<std::span<const float>> GraphEmbeddings::entity(EntityId e) const {
  if (e.index >= entity_rows_.size() || entity_rows_[e.index] < 0) return std::nullopt;
  return table_->row(static_cast<std::size_t>(entity_rows_[e.index]));
}

std::optional<std::span<const float>> GraphEmbeddings::relation(RelationId r) const {
  if (r.index >= relation_rows_.size() || relation_rows_[r.index] < 0) return std::nullopt;
  return table_->row(static_cast<std::size_t>(relation_rows_[r.index]));
}

std::span<const float> GraphEmbeddings::entity_or_throw(EntityId e) const {
  if (auto v = entity(e)) return *v;
  throw LookupError("no embedding for entity '" + graph_->entity_name(e) + "'");
}

std::span<const float> GraphEmbeddings::relation_or_throw(RelationId r) const {
  if (auto v = relation(r)) return *v;
  throw LookupError("no embedding for relation '" + graph_->relation_name(r) + "'");
}

std::vector<float> path_embedding(std::span<const EntityId> walk,
                                  std::span<const RelationId> relations,
                                  const GraphEmbeddings& emb) {
  if (walk.size() != relations.size() + 1) {
    throw ConfigError("path_embedding: walk must have one more entity than relations");
  }
  const std::size_t d = emb.dim();
  std::vector<double> acc(d, 0.0);
  auto add = [&](std::span<const float> v) {
    for (std::size_t k = 0; k < d; ++k) acc[k] += v[k];
  };
  add(emb.entity_or_throw(walk[0]));
  for (std::size_t i = 0; i < relations.size(); ++i) {
    add(emb.relation_or_throw(relations[i]));
    add(emb.entity_or_throw(walk[i + 1]));
  }
  const double n = static_cast<double>(walk.size() + relations.size());
  std::vector<float> out(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = static_cast<float>(acc[k] / n);
  return out;
}

}  // namespace knowgpt
