#pragma once

// Datasets, the question -> prompt -> answer pipeline, bandit training on
// answer feedback, and evaluation reports.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knowgpt/bandit.hpp"
#include "knowgpt/embeddings.hpp"
#include "knowgpt/kg_store.hpp"
#include "knowgpt/llm_gateway.hpp"
#include "knowgpt/prompt_render.hpp"
#include "knowgpt/rl_policy.hpp"

namespace knowgpt {

struct QaExample {
  QuestionContext question;
  std::vector<std::string> source_names;
  std::map<std::string, std::vector<std::string>> target_names;
  std::optional<std::string> gold_fact;
  // Optional grouping used by the contextual sim oracle.
  std::optional<std::string> cluster;

  const std::string& id() const { return question.id; }
};

// Links the raw names against g. Unresolved names are logged; the example is
// returned even when nothing resolves.
QaExample make_example(const KnowledgeGraph& g, std::string id, std::string question,
                       std::vector<Choice> choices, std::optional<std::string> answer,
                       std::vector<std::string> source_names,
                       std::map<std::string, std::vector<std::string>> target_names,
                       std::optional<std::string> gold_fact = std::nullopt,
                       std::optional<std::string> cluster = std::nullopt);

struct DatasetLoad {
  std::vector<QaExample> examples;
  // "<id>: <reason>" for every record that was dropped.
  std::vector<std::string> skipped;
};

// One JSON object per line:
//   {"id", "question", "choices": [{"label", "text"}], "answer"?,
//    "source_entities": [name], "target_entities": {label: [name]},
//    "gold_fact"?, "cluster"?}
// Blank lines are ignored. Throws FormatError naming the line on a schema
// violation. Records with no resolvable source entity are skipped.
DatasetLoad load_dataset(const std::filesystem::path& path, const KnowledgeGraph& g);
void write_dataset(std::span<const QaExample> examples, const std::filesystem::path& path);

struct PipelineConfig {
  std::size_t prune_k = 200;
  std::size_t max_triples = 50;
  int hops = 2;
  int rl_rollouts = 8;
  // Ask the gateway to write graph descriptions instead of the template.
  bool llm_graph_description = false;
  // Restricts bandit selection to the subgraph arms.
  bool subgraph_only = false;
  std::uint64_t seed = 0;
  // Rollout settings for path extraction (max_steps, direction, weights).
  TrainConfig rl;
};

// Non-owning view of everything one question needs.
struct Pipeline {
  const KnowledgeGraph* graph = nullptr;
  const GraphEmbeddings* node_embeddings = nullptr;
  // Question-context vectors keyed by example id; missing ids fall back to a
  // mock embedding of the question text.
  const EmbeddingTable* context_embeddings = nullptr;
  // Path -> context projection; identity when absent.
  const ProjectionMatrix* projection = nullptr;
  // Without a policy the RL arms always fall back to the subgraph bundle.
  const PolicyParams* policy = nullptr;
  LlmGateway* gateway = nullptr;
  PipelineConfig cfg;

  // Throws ConfigError on missing components or inconsistent dimensions.
  void validate() const;
  std::size_t context_dim() const;
  std::vector<float> context_for(const QaExample& ex) const;
};

struct Prediction {
  std::string example_id;
  // Empty in no-knowledge mode.
  std::optional<ArmId> arm;
  RenderedPrompt prompt;
  std::string reply;
  ParsedAnswer parsed;
  bool correct = false;
  bool fallback_used = false;
  bool from_cache = false;
  std::size_t triples = 0;
};

// Triples for one extractor. `fallback_used` is set when the RL extractor
// produced no target-reaching chain and the subgraph bundle was used.
KnowledgeBundle extract_knowledge(const QaExample& ex, const Pipeline& pipe, Extractor extractor,
                                  std::span<const float> context, bool* fallback_used = nullptr);

// Extraction, rendering and prompt assembly without calling the gateway.
Prediction render_with_arm(const QaExample& ex, const Pipeline& pipe, ArmId arm,
                           std::span<const float> context);
Prediction answer_with_arm(const QaExample& ex, const Pipeline& pipe, ArmId arm);
Prediction answer_with_arm(const QaExample& ex, const Pipeline& pipe, ArmId arm,
                           std::span<const float> context);
// Bandit-selected arm (honouring cfg.subgraph_only).
Prediction answer_question(const QaExample& ex, const Pipeline& pipe, const BanditModel& bandit);
// Question and choices only, no background section.
Prediction answer_no_kg(const QaExample& ex, const Pipeline& pipe);

BanditReward reward_from_prediction(const Prediction& p);

std::vector<ArmId> allowed_arms(const PipelineConfig& cfg);
ArmId select_arm(const BanditModel& bandit, std::span<const float> context,
                 const PipelineConfig& cfg);

struct CurveRow {
  std::size_t round = 0;  // 1-based
  // Accuracy over the trailing window ending at this round.
  double running_accuracy = 0.0;
  ArmId arm;
};

struct BanditTrainingResult {
  std::vector<CurveRow> curve;
  std::vector<ArmId> selections;
  std::size_t correct = 0;
};

inline constexpr std::size_t kCurveWindow = 100;

// rounds x (sample example uniformly with replacement, select, answer,
// update). Sequential; one gateway call per round.
BanditTrainingResult run_bandit_training(std::span<const QaExample> train, const Pipeline& pipe,
                                         BanditModel& bandit, std::size_t rounds,
                                         std::uint64_t seed);

void write_curve_csv(std::span<const CurveRow> curve, const std::filesystem::path& path);

enum class EvalMode { kKnowGpt, kFixedArm, kNoKg };

EvalMode parse_eval_mode(std::string_view s);
std::string_view to_string(EvalMode m);

struct CostLedger {
  std::size_t prompts = 0;
  std::size_t total_tokens = 0;
  double mean_tokens = 0.0;
  std::size_t knowledge_tokens = 0;
  double wall_clock_seconds = 0.0;
};

struct TemplateScore {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  EvalMode mode = EvalMode::kKnowGpt;
  std::optional<ArmId> fixed_arm;
  std::uint64_t seed = 0;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::array<std::size_t, kArmCount> arm_counts{};
  std::map<std::string, TemplateScore> per_template;
  std::size_t parse_failures = 0;
  double parse_failure_rate = 0.0;
  std::size_t fallbacks = 0;
  CostLedger cost;
  std::vector<Prediction> predictions;
};

struct EvalOptions {
  EvalMode mode = EvalMode::kKnowGpt;
  ArmId fixed_arm;
  // Required in knowgpt mode; never updated.
  const BanditModel* bandit = nullptr;
  int jobs = 1;
};

EvalReport evaluate(std::span<const QaExample> test, const Pipeline& pipe, const EvalOptions& opt);

std::string report_json(const EvalReport& r, bool with_predictions = true);
void write_report(const EvalReport& r, const std::filesystem::path& path);

}  // namespace knowgpt
