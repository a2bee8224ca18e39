#include "knowgpt/rl_policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "knowgpt/binary_io.hpp"
#include "knowgpt/error.hpp"
#include "knowgpt/hash.hpp"

namespace knowgpt {

Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "adam") return Optimizer::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

std::string_view to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }

void TrainConfig::validate() const {
  if (max_steps < 1) throw ConfigError("max_steps (K) must be >= 1");
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("discount must be in (0, 1]");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (log_interval < 1) throw ConfigError("log_interval must be >= 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) {
    throw ConfigError("baseline_decay must be in [0, 1)");
  }
}

std::vector<RelationId> ReasoningChain::relations() const {
  std::vector<RelationId> rels;
  rels.reserve(steps.size());
  for (const auto& t : steps) rels.push_back(t.rel);
  return rels;
}

// ---------------------------------------------------------------------------
// Parameters and checkpoints

std::size_t PolicyParams::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

bool PolicyParams::finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

PolicyParams PolicyParams::zeros(std::size_t d, std::size_t h) {
  const auto di = static_cast<Eigen::Index>(d);
  const auto hi = static_cast<Eigen::Index>(h);
  return PolicyParams{Eigen::MatrixXf::Zero(hi, 2 * di), Eigen::VectorXf::Zero(hi),
                      Eigen::MatrixXf::Zero(2 * di, hi), Eigen::VectorXf::Zero(2 * di)};
}

PolicyParams PolicyParams::random(std::size_t d, std::size_t h, std::uint64_t seed,
                                  double w2_scale) {
  auto p = zeros(d, h);
  std::mt19937_64 rng(splitmix64(seed ^ 0x504f4c49435955ULL));
  std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(2.0 * static_cast<double>(d)));
  std::normal_distribution<double> n2(0.0, w2_scale);
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = static_cast<float>(n1(rng));
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = static_cast<float>(n2(rng));
  return p;
}

bool operator==(const PolicyParams& a, const PolicyParams& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.w1, b.w1) && same(a.b1, b.b1) && same(a.w2, b.w2) && same(a.b2, b.b2);
}

namespace {

constexpr std::string_view kPolicyMagic = "KGPL";
constexpr std::uint32_t kPolicyVersion = 1;

void write_row_major(std::ostream& out, const Eigen::MatrixXf& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) io::write_le<float>(out, m(r, c));
  }
}

void read_row_major(std::istream& in, Eigen::MatrixXf& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = io::read_le<float>(in, "policy weights");
  }
}

}  // namespace

void save_policy(const PolicyParams& p, const std::filesystem::path& path) {
  auto out = io::open_binary_output(path);
  io::write_magic(out, kPolicyMagic);
  io::write_le<std::uint32_t>(out, kPolicyVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.embedding_dim()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.hidden()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.action_dim()));
  write_row_major(out, p.w1);
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) io::write_le<float>(out, p.b1(i));
  write_row_major(out, p.w2);
  for (Eigen::Index i = 0; i < p.b2.size(); ++i) io::write_le<float>(out, p.b2(i));
  if (!out) throw Error("write failed: " + path.string());
}

PolicyParams load_policy(const std::filesystem::path& path) {
  auto in = io::open_binary_input(path);
  io::expect_magic(in, kPolicyMagic);
  auto version = io::read_le<std::uint32_t>(in, "version");
  if (version != kPolicyVersion) {
    throw FormatError(path.string() + ": unsupported KGPL version " + std::to_string(version));
  }
  auto d = io::read_le<std::uint32_t>(in, "d");
  auto h = io::read_le<std::uint32_t>(in, "h");
  auto da = io::read_le<std::uint32_t>(in, "d_a");
  if (d == 0 || h == 0 || da != 2 * d) {
    throw FormatError(path.string() + ": inconsistent policy shape");
  }
  auto p = PolicyParams::zeros(d, h);
  read_row_major(in, p.w1);
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = io::read_le<float>(in, "b1");
  read_row_major(in, p.w2);
  for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2(i) = io::read_le<float>(in, "b2");
  io::expect_eof(in, path);
  if (!p.finite()) throw FormatError(path.string() + ": non-finite policy weights");
  return p;
}

// ---------------------------------------------------------------------------
// Gradients

PolicyGradient PolicyGradient::zeros_like(const PolicyParams& p) {
  return PolicyGradient{Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols()),
                        Eigen::VectorXd::Zero(p.b1.size()),
                        Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols()),
                        Eigen::VectorXd::Zero(p.b2.size())};
}

double PolicyGradient::norm() const {
  return std::sqrt(w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() + b2.squaredNorm());
}

bool PolicyGradient::finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

void PolicyGradient::scale(double s) {
  w1 *= s;
  b1 *= s;
  w2 *= s;
  b2 *= s;
}

void PolicyGradient::add(const PolicyGradient& other, double weight) {
  w1 += weight * other.w1;
  b1 += weight * other.b1;
  w2 += weight * other.w2;
  b2 += weight * other.b2;
}

double clip_gradient(PolicyGradient& g, double max_norm) {
  const double n = g.norm();
  if (n > max_norm) g.scale(max_norm / n);
  return n;
}

// ---------------------------------------------------------------------------
// Features and forward pass

std::vector<float> state_vector(std::span<const float> current, std::span<const float> target) {
  if (current.size() != target.size()) throw ConfigError("state_vector: dimension mismatch");
  std::vector<float> s(2 * current.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    s[i] = current[i];
    s[current.size() + i] = target[i] - current[i];
  }
  return s;
}

std::vector<float> state_vector(EntityId current, EntityId target, const GraphEmbeddings& emb) {
  return state_vector(emb.entity_or_throw(current), emb.entity_or_throw(target));
}

std::vector<float> target_embedding(std::span<const EntityId> targets,
                                    const GraphEmbeddings& emb) {
  if (targets.empty()) throw ConfigError("target_embedding: no targets");
  std::vector<double> acc(emb.dim(), 0.0);
  for (auto t : targets) {
    auto v = emb.entity_or_throw(t);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
  }
  std::vector<float> out(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) {
    out[k] = static_cast<float>(acc[k] / static_cast<double>(targets.size()));
  }
  return out;
}

std::vector<float> action_feature(const CandidateAction& a, const GraphEmbeddings& emb) {
  auto r = emb.relation_or_throw(a.rel);
  auto t = emb.entity_or_throw(a.tail);
  std::vector<float> f(r.begin(), r.end());
  f.insert(f.end(), t.begin(), t.end());
  return f;
}

Eigen::MatrixXd action_features(std::span<const CandidateAction> actions,
                                const GraphEmbeddings& emb) {
  const auto d = static_cast<Eigen::Index>(emb.dim());
  Eigen::MatrixXd f(static_cast<Eigen::Index>(actions.size()), 2 * d);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    auto r = emb.relation_or_throw(actions[i].rel);
    auto t = emb.entity_or_throw(actions[i].tail);
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index k = 0; k < d; ++k) {
      f(row, k) = r[static_cast<std::size_t>(k)];
      f(row, d + k) = t[static_cast<std::size_t>(k)];
    }
  }
  return f;
}

namespace {

struct Forward {
  Eigen::VectorXd state;
  Eigen::VectorXd hidden;
  Eigen::VectorXd head;
  Eigen::VectorXd probs;
};

Forward forward(const PolicyParams& p, std::span<const float> state,
                const Eigen::MatrixXd& features) {
  if (features.rows() == 0) throw ConfigError("policy_forward: empty action set");
  if (static_cast<Eigen::Index>(state.size()) != p.w1.cols()) {
    throw ConfigError("policy_forward: state has " + std::to_string(state.size()) +
                      " entries, policy expects " + std::to_string(p.w1.cols()));
  }
  if (features.cols() != p.w2.rows()) throw ConfigError("policy_forward: action dim mismatch");
  Forward f;
  f.state = Eigen::Map<const Eigen::VectorXf>(state.data(), static_cast<Eigen::Index>(state.size()))
                .cast<double>();
  f.hidden = (p.w1.cast<double>() * f.state + p.b1.cast<double>()).array().tanh().matrix();
  f.head = p.w2.cast<double>() * f.hidden + p.b2.cast<double>();
  Eigen::VectorXd logits = features * f.head;
  const double mx = logits.maxCoeff();
  f.probs = (logits.array() - mx).exp().matrix();
  f.probs /= f.probs.sum();
  return f;
}

}  // namespace

std::vector<double> policy_forward(const PolicyParams& p, std::span<const float> state,
                                   const Eigen::MatrixXd& features) {
  auto f = forward(p, state, features);
  return {f.probs.data(), f.probs.data() + f.probs.size()};
}

std::vector<double> policy_forward(const PolicyParams& p, std::span<const float> state,
                                   std::span<const CandidateAction> actions,
                                   const GraphEmbeddings& emb) {
  if (actions.empty()) throw ConfigError("policy_forward: empty action set");
  return policy_forward(p, state, action_features(actions, emb));
}

PolicyGradient log_prob_gradient(const PolicyParams& p, std::span<const float> state,
                                 const Eigen::MatrixXd& features, std::size_t chosen) {
  if (chosen >= static_cast<std::size_t>(features.rows())) {
    throw ConfigError("log_prob_gradient: chosen index out of range");
  }
  auto f = forward(p, state, features);
  // d log softmax_k / d head = F_k - E_p[F]
  Eigen::VectorXd g_head =
      features.row(static_cast<Eigen::Index>(chosen)).transpose() - features.transpose() * f.probs;
  PolicyGradient g;
  g.w2 = g_head * f.hidden.transpose();
  g.b2 = g_head;
  Eigen::VectorXd dz = (p.w2.cast<double>().transpose() * g_head).array() *
                       (1.0 - f.hidden.array().square());
  g.w1 = dz * f.state.transpose();
  g.b1 = dz;
  return g;
}

// ---------------------------------------------------------------------------
// Environment

std::vector<CandidateAction> candidate_actions(const KnowledgeGraph& g, EntityId current,
                                               Direction direction,
                                               std::span<const EntityId> visited) {
  std::vector<CandidateAction> out;
  auto is_visited = [&](EntityId e) {
    return std::find(visited.begin(), visited.end(), e) != visited.end();
  };
  if (direction != Direction::kBackward) {
    for (const auto& e : g.out_edges(current)) {
      if (!is_visited(e.node)) out.push_back({e.rel, e.node, false});
    }
  }
  if (direction != Direction::kForward) {
    for (const auto& e : g.in_edges(current)) {
      if (!is_visited(e.node)) out.push_back({e.rel, e.node, true});
    }
  }
  return out;
}

RolloutState transition(const RolloutState& s, const CandidateAction& a) {
  RolloutState next = s;
  next.visited.emplace_back(a.tail, a.rel);
  next.current = a.tail;
  next.step = s.step + 1;
  return next;
}

double reach_reward(const ReasoningChain& chain, int max_steps) {
  return chain.reached_target && static_cast<int>(chain.length()) <= max_steps ? 1.0 : -1.0;
}

double context_reward(const ReasoningChain& chain, std::span<const float> context,
                      const ProjectionMatrix& w, const GraphEmbeddings& emb) {
  const auto rels = chain.relations();
  auto prefix_cos = [&](std::size_t steps) {
    auto pe = path_embedding(std::span(chain.walk).first(steps + 1),
                             std::span(rels).first(steps), emb);
    return cosine(w.project(pe), context).value;
  };
  if (chain.steps.empty()) return prefix_cos(0);
  double sum = 0.0;
  for (std::size_t i = 1; i <= chain.steps.size(); ++i) sum += prefix_cos(i);
  return sum / static_cast<double>(chain.steps.size());
}

double concise_reward(const ReasoningChain& chain) {
  if (chain.steps.empty()) return 1.0;
  return 1.0 / static_cast<double>(chain.steps.size());
}

RewardBreakdown episode_return(const ReasoningChain& chain, const TrainConfig& cfg,
                               std::span<const float> context, const ProjectionMatrix& w,
                               const GraphEmbeddings& emb) {
  RewardBreakdown r;
  r.reach = reach_reward(chain, cfg.max_steps);
  r.cr = cfg.w_cr != 0.0 ? context_reward(chain, context, w, emb) : 0.0;
  r.cs = concise_reward(chain);
  r.degenerate_length = chain.steps.empty();
  r.total = cfg.w_reach * r.reach + cfg.w_cr * r.cr + cfg.w_cs * r.cs;
  return r;
}

namespace {

struct StepRecord {
  std::vector<float> state;
  Eigen::MatrixXd features;
  std::size_t chosen = 0;
};

struct Episode {
  ReasoningChain chain;
  std::vector<StepRecord> steps;
};

std::size_t sample_index(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (x < acc) return i;
  }
  return probs.size() - 1;
}

std::size_t argmax_index(std::span<const double> probs) {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

Episode run_episode(const KnowledgeGraph& g, const PolicyParams& p, const RolloutRequest& req,
                    const TrainConfig& cfg, const GraphEmbeddings& emb, std::mt19937_64& rng,
                    bool record) {
  Episode ep;
  ReasoningChain& chain = ep.chain;
  chain.source = req.source;
  chain.walk.push_back(req.source);
  auto is_target = [&](EntityId e) {
    return std::find(req.targets.begin(), req.targets.end(), e) != req.targets.end();
  };
  if (is_target(req.source)) {
    chain.reached_target = true;
    return ep;
  }
  EntityId current = req.source;
  for (int step = 0; step < cfg.max_steps; ++step) {
    auto actions = candidate_actions(g, current, cfg.direction, chain.walk);
    if (actions.empty()) break;
    auto state = state_vector(emb.entity_or_throw(current), req.target_vector);
    auto features = action_features(actions, emb);
    auto probs = policy_forward(p, state, features);
    std::size_t k = req.greedy ? argmax_index(probs) : sample_index(probs, rng);
    const auto& a = actions[k];
    chain.steps.push_back(a.inverse ? Triple{a.tail, a.rel, current} : Triple{current, a.rel, a.tail});
    chain.walk.push_back(a.tail);
    if (record) ep.steps.push_back({std::move(state), std::move(features), k});
    current = a.tail;
    if (is_target(current)) {
      chain.reached_target = true;
      break;
    }
  }
  return ep;
}

class AdamState {
 public:
  explicit AdamState(const PolicyParams& p)
      : m_(PolicyGradient::zeros_like(p)), v_(PolicyGradient::zeros_like(p)) {}

  // Returns the bias-corrected step direction m_hat / (sqrt(v_hat) + eps).
  PolicyGradient step(const PolicyGradient& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    PolicyGradient out = g;
    update(m_.w1, v_.w1, g.w1, out.w1, c1, c2);
    update(m_.b1, v_.b1, g.b1, out.b1, c1, c2);
    update(m_.w2, v_.w2, g.w2, out.w2, c1, c2);
    update(m_.b2, v_.b2, g.b2, out.b2, c1, c2);
    return out;
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  template <typename T>
  static void update(T& m, T& v, const T& g, T& out, double c1, double c2) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseAbs2();
    out = ((m / c1).array() / ((v / c2).array().sqrt() + kEps)).matrix();
  }

  PolicyGradient m_;
  PolicyGradient v_;
  int t_ = 0;
};

}  // namespace

ReasoningChain sample_rollout(const KnowledgeGraph& g, const PolicyParams& p,
                              const RolloutRequest& req, const TrainConfig& cfg,
                              const GraphEmbeddings& emb, std::mt19937_64& rng) {
  if (!g.valid(req.source)) throw LookupError("sample_rollout: invalid source entity");
  return run_episode(g, p, req, cfg, emb, rng, false).chain;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train_reinforce(const KnowledgeGraph& g, std::span<const PathQuery> queries,
                            PolicyParams init, const TrainConfig& cfg,
                            const GraphEmbeddings& emb, const ProjectionMatrix& w) {
  cfg.validate();
  if (queries.empty()) throw ConfigError("train_reinforce: no trainable question");
  if (init.embedding_dim() != emb.dim()) {
    throw ConfigError("train_reinforce: policy dim " + std::to_string(init.embedding_dim()) +
                      " does not match embedding dim " + std::to_string(emb.dim()));
  }
  std::vector<std::vector<float>> target_vectors;
  target_vectors.reserve(queries.size());
  for (const auto& q : queries) target_vectors.push_back(target_embedding(q.targets, emb));

  TrainResult result;
  result.params = std::move(init);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, queries.size() - 1);
  double baseline = 0.0;
  bool have_baseline = false;
  AdamState adam(result.params);

  TrainLogRow window;
  int in_window = 0;
  double reward_sum = 0.0;
  double success = 0.0;
  double len_sum = 0.0;

  for (int episode = 0; episode < cfg.episodes; ++episode) {
    const std::size_t qi = pick(rng);
    const auto& q = queries[qi];
    RolloutRequest req{q.source, q.targets, target_vectors[qi], false};
    auto ep = run_episode(g, result.params, req, cfg, emb, rng, true);
    auto rewards = episode_return(ep.chain, cfg, q.context, w, emb);
    const double total = rewards.total;

    if (!ep.steps.empty()) {
      auto grad = PolicyGradient::zeros_like(result.params);
      const std::size_t n = ep.steps.size();
      for (std::size_t t = 0; t < n; ++t) {
        const double g_t = std::pow(cfg.discount, static_cast<double>(n - 1 - t)) * total;
        const double advantage = g_t - (have_baseline ? baseline : 0.0);
        const auto& s = ep.steps[t];
        grad.add(log_prob_gradient(result.params, s.state, s.features, s.chosen), advantage);
      }
      if (!grad.finite()) {
        throw NumericError("train_reinforce: non-finite gradient at episode " +
                           std::to_string(episode) + " (return " + std::to_string(total) + ")");
      }
      clip_gradient(grad, cfg.clip_norm);
      result.max_applied_grad_norm = std::max(result.max_applied_grad_norm, grad.norm());
      if (cfg.learning_rate != 0.0) {
        if (cfg.optimizer == Optimizer::kAdam) grad = adam.step(grad);
        const double lr = cfg.learning_rate;
        result.params.w1 += (lr * grad.w1).cast<float>();
        result.params.b1 += (lr * grad.b1).cast<float>();
        result.params.w2 += (lr * grad.w2).cast<float>();
        result.params.b2 += (lr * grad.b2).cast<float>();
      }
    }
    if (have_baseline) {
      baseline = cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * total;
    } else {
      baseline = total;
      have_baseline = true;
    }

    reward_sum += total;
    success += ep.chain.reached_target ? 1.0 : 0.0;
    len_sum += static_cast<double>(ep.chain.length());
    if (++in_window == cfg.log_interval || episode + 1 == cfg.episodes) {
      window.epoch = static_cast<int>(result.log.size()) + 1;
      window.mean_reward = reward_sum / in_window;
      window.success_rate = success / in_window;
      window.mean_len = len_sum / in_window;
      result.log.push_back(window);
      in_window = 0;
      reward_sum = success = len_sum = 0.0;
    }
  }
  return result;
}

std::vector<PathQuery> path_queries(const std::vector<QuestionContext>& questions,
                                    std::span<const std::vector<float>> contexts) {
  if (contexts.size() != questions.size()) {
    throw ConfigError("path_queries: one context per question required");
  }
  std::vector<PathQuery> out;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const auto& q = questions[i];
    std::vector<EntityId> targets;
    if (q.gold_label) {
      if (auto it = q.target_entities.find(*q.gold_label); it != q.target_entities.end()) {
        targets = it->second;
      }
    } else {
      targets = q.all_targets();
    }
    if (targets.empty()) continue;
    for (auto s : q.source_entities) out.push_back({s, targets, contexts[i]});
  }
  return out;
}

void write_train_log_csv(std::span<const TrainLogRow> log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "epoch,mean_reward,success_rate,mean_len\n";
  for (const auto& row : log) {
    out << row.epoch << ',' << row.mean_reward << ',' << row.success_rate << ',' << row.mean_len
        << '\n';
  }
}

std::vector<ReasoningChain> extract_paths(const KnowledgeGraph& g, const PolicyParams& p,
                                          const QuestionContext& q, std::span<const float> context,
                                          const TrainConfig& cfg, const GraphEmbeddings& emb,
                                          const ProjectionMatrix& w, int n_rollouts) {
  std::vector<ReasoningChain> out;
  std::mt19937_64 rng(mix_seed(cfg.seed, q.id));
  for (auto source : q.source_entities) {
    if (!g.valid(source) || !emb.entity(source)) continue;
    for (const auto& [label, linked] : q.target_entities) {
      std::vector<EntityId> targets;
      for (auto t : linked) {
        if (g.valid(t) && emb.entity(t)) targets.push_back(t);
      }
      if (targets.empty()) continue;
      auto tvec = target_embedding(targets, emb);
      std::optional<ReasoningChain> best;
      for (int i = 0; i <= n_rollouts; ++i) {
        RolloutRequest req{source, targets, tvec, i == n_rollouts};
        auto chain = run_episode(g, p, req, cfg, emb, rng, false).chain;
        chain.rewards = episode_return(chain, cfg, context, w, emb);
        if (!best || chain.rewards.total > best->rewards.total) best = std::move(chain);
      }
      if (std::find(out.begin(), out.end(), *best) == out.end()) out.push_back(std::move(*best));
    }
  }
  return out;
}

}  // namespace knowgpt
