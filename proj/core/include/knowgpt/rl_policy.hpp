#pragma once

// Reinforcement-learned path extraction: walks from a source entity toward
// target entities, scored by reachability, context relatedness and
// conciseness, trained with REINFORCE.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "knowgpt/embeddings.hpp"
#include "knowgpt/kg_store.hpp"

namespace knowgpt {

enum class Optimizer { kSgd, kAdam };

Optimizer parse_optimizer(std::string_view s);
std::string_view to_string(Optimizer o);

struct TrainConfig {
  int max_steps = 4;  // K
  int episodes = 1000;
  double learning_rate = 0.002;
  double clip_norm = 5.0;
  double w_reach = 1.0;
  double w_cr = 0.5;
  double w_cs = 0.5;
  double discount = 0.99;
  std::uint64_t seed = 0;
  int hidden = 64;
  Direction direction = Direction::kBoth;
  // Episodes aggregated into one training-log row.
  int log_interval = 1;
  // Decay of the exponential running-mean baseline.
  double baseline_decay = 0.95;
  // Applied to the clipped gradient. Adam uses beta1 0.9, beta2 0.999.
  Optimizer optimizer = Optimizer::kAdam;

  // Throws ConfigError.
  void validate() const;
};

struct CandidateAction {
  RelationId rel;
  EntityId tail;
  // True when the edge is walked against its stored direction.
  bool inverse = false;
};

struct RewardBreakdown {
  double reach = -1.0;
  double cr = 0.0;
  double cs = 1.0;
  double total = 0.0;
  // Zero-length chain: conciseness defaulted to 1.
  bool degenerate_length = false;
};

struct ReasoningChain {
  EntityId source;
  // Graph triples in their stored orientation.
  std::vector<Triple> steps;
  // Entities visited, starting with source; walk.size() == steps.size() + 1.
  std::vector<EntityId> walk;
  bool reached_target = false;
  RewardBreakdown rewards;

  std::size_t length() const { return steps.size(); }
  EntityId end() const { return walk.back(); }
  std::vector<RelationId> relations() const;

  friend bool operator==(const ReasoningChain& a, const ReasoningChain& b) {
    return a.source == b.source && a.steps == b.steps && a.walk == b.walk;
  }
};

struct RolloutState {
  EntityId current;
  EntityId target;
  int step = 0;
  std::vector<std::pair<EntityId, RelationId>> visited;
};

// Two-layer scorer: head = w2 * tanh(w1 * s + b1) + b2, logit_i = feature_i . head.
struct PolicyParams {
  Eigen::MatrixXf w1;  // h x 2d
  Eigen::VectorXf b1;  // h
  Eigen::MatrixXf w2;  // d_a x h
  Eigen::VectorXf b2;  // d_a

  std::size_t embedding_dim() const { return static_cast<std::size_t>(w1.cols() / 2); }
  std::size_t hidden() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t action_dim() const { return static_cast<std::size_t>(w2.rows()); }
  std::size_t parameter_count() const;
  bool finite() const;

  // All-zero parameters give a uniform policy.
  static PolicyParams zeros(std::size_t d, std::size_t h);
  // Gaussian init: w1 ~ N(0, 1/2d), w2 ~ N(0, scale^2); biases zero.
  static PolicyParams random(std::size_t d, std::size_t h, std::uint64_t seed,
                             double w2_scale = 0.05);

  friend bool operator==(const PolicyParams& a, const PolicyParams& b);
};

// KGPL v1: "KGPL", u32 version, u32 d, u32 h, u32 d_a, then w1, b1, w2, b2 as
// row-major float32 LE.
void save_policy(const PolicyParams& p, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

// Gradient of a scalar w.r.t. every PolicyParams tensor, in double.
struct PolicyGradient {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;

  static PolicyGradient zeros_like(const PolicyParams& p);
  double norm() const;
  bool finite() const;
  void scale(double s);
  void add(const PolicyGradient& other, double weight = 1.0);
};

// Scales g so its global L2 norm is at most max_norm; returns the norm before
// clipping.
double clip_gradient(PolicyGradient& g, double max_norm);

// (e_current, e_target - e_current).
std::vector<float> state_vector(std::span<const float> current, std::span<const float> target);
std::vector<float> state_vector(EntityId current, EntityId target, const GraphEmbeddings& emb);

// Mean of the target vectors; used as e_target when a choice links to
// several entities.
std::vector<float> target_embedding(std::span<const EntityId> targets, const GraphEmbeddings& emb);

// (relation vector, tail vector).
std::vector<float> action_feature(const CandidateAction& a, const GraphEmbeddings& emb);

// Feature matrix with one row per candidate.
Eigen::MatrixXd action_features(std::span<const CandidateAction> actions,
                                const GraphEmbeddings& emb);

// Softmax over the candidates. Throws ConfigError for an empty action set.
std::vector<double> policy_forward(const PolicyParams& p, std::span<const float> state,
                                   std::span<const CandidateAction> actions,
                                   const GraphEmbeddings& emb);
std::vector<double> policy_forward(const PolicyParams& p, std::span<const float> state,
                                   const Eigen::MatrixXd& features);

// d/dtheta log pi(actions[chosen] | state).
PolicyGradient log_prob_gradient(const PolicyParams& p, std::span<const float> state,
                                 const Eigen::MatrixXd& features, std::size_t chosen);

// Outgoing candidates from `current` under `direction`, skipping entities in
// `visited`.
std::vector<CandidateAction> candidate_actions(const KnowledgeGraph& g, EntityId current,
                                               Direction direction,
                                               std::span<const EntityId> visited);

// Applies an action to a state: the walk moves to the action's tail.
RolloutState transition(const RolloutState& s, const CandidateAction& a);

double reach_reward(const ReasoningChain& chain, int max_steps);
// Mean over prefixes i = 1..n of cosine(W * path_embedding(prefix_i), c); an
// empty chain uses the source-only prefix. Zero vectors contribute 0.
double context_reward(const ReasoningChain& chain, std::span<const float> context,
                      const ProjectionMatrix& w, const GraphEmbeddings& emb);
// 1/|chain|; a zero-length chain yields 1.0 (flag reported via episode_return).
double concise_reward(const ReasoningChain& chain);
RewardBreakdown episode_return(const ReasoningChain& chain, const TrainConfig& cfg,
                               std::span<const float> context, const ProjectionMatrix& w,
                               const GraphEmbeddings& emb);

struct RolloutRequest {
  EntityId source;
  std::span<const EntityId> targets;
  // e_target used in the state vector.
  std::span<const float> target_vector;
  bool greedy = false;
};

// One walk of at most cfg.max_steps steps. Stops on a target, a dead end
// (no unvisited neighbour) or when K is exhausted. Rewards are not filled.
ReasoningChain sample_rollout(const KnowledgeGraph& g, const PolicyParams& p,
                              const RolloutRequest& req, const TrainConfig& cfg,
                              const GraphEmbeddings& emb, std::mt19937_64& rng);

// A (source, targets, context) training instance.
struct PathQuery {
  EntityId source;
  std::vector<EntityId> targets;
  std::vector<float> context;
};

struct TrainLogRow {
  int epoch = 0;
  double mean_reward = 0.0;
  double success_rate = 0.0;
  double mean_len = 0.0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<TrainLogRow> log;
  // Largest global gradient norm applied after clipping.
  double max_applied_grad_norm = 0.0;
};

// REINFORCE with a running-mean baseline, discounted per-step returns of the
// terminal episode reward and global-norm gradient clipping. One parameter
// update per episode; queries are sampled uniformly with replacement.
TrainResult train_reinforce(const KnowledgeGraph& g, std::span<const PathQuery> queries,
                            PolicyParams init, const TrainConfig& cfg,
                            const GraphEmbeddings& emb, const ProjectionMatrix& w);

// Builds training queries from questions: each source entity paired with the
// gold choice's targets (all targets when no gold label). Questions without a
// usable pair are skipped.
std::vector<PathQuery> path_queries(const std::vector<QuestionContext>& questions,
                                    std::span<const std::vector<float>> contexts);

void write_train_log_csv(std::span<const TrainLogRow> log, const std::filesystem::path& path);

// For every source and every choice with targets: n_rollouts sampled walks
// plus one greedy walk; the best-scoring chain per (source, choice) is kept,
// identical chains once. Seeded from cfg.seed and the question id.
std::vector<ReasoningChain> extract_paths(const KnowledgeGraph& g, const PolicyParams& p,
                                          const QuestionContext& q, std::span<const float> context,
                                          const TrainConfig& cfg, const GraphEmbeddings& emb,
                                          const ProjectionMatrix& w, int n_rollouts = 8);

}  // namespace knowgpt
