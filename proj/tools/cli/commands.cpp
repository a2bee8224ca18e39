#include "cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "knowgpt/bandit.hpp"
#include "knowgpt/embeddings.hpp"
#include "knowgpt/error.hpp"
#include "knowgpt/eval_harness.hpp"
#include "knowgpt/kg_store.hpp"
#include "knowgpt/llm_gateway.hpp"
#include "knowgpt/rl_policy.hpp"

namespace knowgpt::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string graph;
  std::string embeddings;
  std::string embeddings_vocab;
  std::size_t mock_dim = 64;
  std::string ctx_embeddings;
  std::string ctx_vocab;
  std::string projection;
  std::string dataset;
  std::string policy;
  std::string bandit;
  std::string report;

  std::string provider = "sim";
  std::string endpoint;
  std::string model;
  std::string api_key_env = "KNOWGPT_API_KEY";
  double timeout = 60.0;
  int max_retries = 3;
  int max_concurrent = 4;
  std::string cache;
  bool no_cache = false;

  std::string sim_mode = "fact_match";
  std::vector<double> sim_probs;
  std::vector<std::string> sim_clusters;

  std::uint64_t seed = 0;
  int jobs = 1;
  std::string log_level = "warn";

  std::size_t prune_k = 200;
  std::size_t max_triples = 50;
  int rl_rollouts = 8;
  int max_steps = 4;
  bool llm_description = false;
  bool no_rl = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->set_config("--config", "", "key=value file; command-line flags take precedence");
  app->add_option("--graph", o.graph, "Knowledge graph TSV (head, relation, tail)")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--embeddings", o.embeddings, "Node embeddings (KGEB)")->check(CLI::ExistingFile);
  app->add_option("--embeddings-vocab", o.embeddings_vocab,
                  "Vocabulary for --embeddings (default: <embeddings>.vocab)")
      ->check(CLI::ExistingFile);
  app->add_option("--mock-embeddings", o.mock_dim,
                  "Dimension of graph-derived mock embeddings used without --embeddings")
      ->check(CLI::PositiveNumber);
  app->add_option("--ctx-embeddings", o.ctx_embeddings, "Question context vectors keyed by id")
      ->check(CLI::ExistingFile);
  app->add_option("--ctx-vocab", o.ctx_vocab, "Vocabulary for --ctx-embeddings")
      ->check(CLI::ExistingFile);
  app->add_option("--projection", o.projection, "Path-to-context projection matrix (KGEB)")
      ->check(CLI::ExistingFile);
  app->add_option("--provider", o.provider, "LLM provider")
      ->check(CLI::IsMember({"http", "sim"}));
  app->add_option("--endpoint", o.endpoint, "Chat-completion URL (http provider)");
  app->add_option("--model", o.model, "Model identifier (http provider)");
  app->add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key");
  app->add_option("--timeout", o.timeout, "Request timeout in seconds");
  app->add_option("--max-retries", o.max_retries, "Retries on 429/5xx/transport errors");
  app->add_option("--max-concurrent", o.max_concurrent, "Concurrent request cap");
  app->add_option("--cache", o.cache, "Response cache JSONL (http default: knowgpt-cache.jsonl)");
  app->add_flag("--no-cache", o.no_cache, "Disable the response cache");
  app->add_option("--sim-mode", o.sim_mode, "Simulated oracle mode")
      ->check(CLI::IsMember({"fact_match", "per_arm_bernoulli", "contextual"}));
  app->add_option("--sim-probs", o.sim_probs, "Per-arm success probabilities")->delimiter(',');
  app->add_option("--sim-cluster", o.sim_clusters,
                  "Per-cluster probabilities as name=p0,p1,... (repeatable)");
  app->add_option("--seed", o.seed, "Seed for every random choice");
  app->add_option("--jobs", o.jobs, "Worker threads for evaluation")->check(CLI::PositiveNumber);
  app->add_option("--log-level", o.log_level, "trace|debug|info|warn|error|off");
  app->add_option("--prune-k", o.prune_k, "Subgraph node budget");
  app->add_option("--max-triples", o.max_triples, "Triples per prompt");
  app->add_option("--rl-rollouts", o.rl_rollouts, "Sampled walks per (source, choice)");
  app->add_option("--max-steps", o.max_steps, "Maximum reasoning-chain length K")
      ->check(CLI::PositiveNumber);
  app->add_flag("--llm-description", o.llm_description,
                "Let the LLM write graph descriptions");
}

SimOracleConfig sim_config(const CommonOptions& o) {
  SimOracleConfig sim;
  sim.mode = parse_sim_mode(o.sim_mode);
  sim.arm_probs = o.sim_probs;
  sim.seed = o.seed;
  for (const auto& spec : o.sim_clusters) {
    auto eq = spec.find('=');
    if (eq == std::string::npos) throw UsageError("--sim-cluster expects name=p0,p1,...: " + spec);
    std::vector<double> probs;
    std::stringstream ss(spec.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        probs.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("--sim-cluster: bad probability '" + item + "'");
      }
    }
    sim.cluster_probs[spec.substr(0, eq)] = std::move(probs);
  }
  sim.validate();
  return sim;
}

// Owns everything a Pipeline points at; never moved once built.
struct Runtime {
  explicit Runtime(KnowledgeGraph g) : graph(std::move(g)) {}

  KnowledgeGraph graph;
  EmbeddingTable node_table;
  std::unique_ptr<GraphEmbeddings> node_embeddings;
  std::optional<EmbeddingTable> ctx_table;
  std::optional<ProjectionMatrix> projection;
  std::optional<PolicyParams> policy;
  std::unique_ptr<LlmGateway> provider;
  std::unique_ptr<ResponseCache> cache;
  std::unique_ptr<CachingGateway> caching;
  Pipeline pipe;
};

std::unique_ptr<Runtime> load_runtime(const CommonOptions& o, bool need_gateway) {
  auto rt = std::make_unique<Runtime>(load_graph_tsv(o.graph));
  spdlog::info("graph: {} entities, {} relations, {} triples", rt->graph.entity_count(),
               rt->graph.relation_count(), rt->graph.triple_count());

  if (!o.embeddings.empty()) {
    auto vocab = o.embeddings_vocab.empty() ? o.embeddings + ".vocab" : o.embeddings_vocab;
    rt->node_table = load_embeddings(o.embeddings, vocab);
  } else {
    rt->node_table = graph_mock_table(rt->graph, o.mock_dim, o.seed);
  }
  rt->node_embeddings = std::make_unique<GraphEmbeddings>(rt->graph, rt->node_table);
  if (rt->node_embeddings->missing_entities() > 0) {
    spdlog::warn("{} entities have no embedding", rt->node_embeddings->missing_entities());
  }
  if (!o.ctx_embeddings.empty()) {
    auto vocab = o.ctx_vocab.empty() ? o.ctx_embeddings + ".vocab" : o.ctx_vocab;
    rt->ctx_table = load_embeddings(o.ctx_embeddings, vocab);
  }
  if (!o.projection.empty()) rt->projection = ProjectionMatrix::load(o.projection);

  auto& pipe = rt->pipe;
  pipe.graph = &rt->graph;
  pipe.node_embeddings = rt->node_embeddings.get();
  pipe.context_embeddings = rt->ctx_table ? &*rt->ctx_table : nullptr;
  pipe.projection = rt->projection ? &*rt->projection : nullptr;
  pipe.cfg.prune_k = o.prune_k;
  pipe.cfg.max_triples = o.max_triples;
  pipe.cfg.rl_rollouts = o.rl_rollouts;
  pipe.cfg.llm_graph_description = o.llm_description;
  pipe.cfg.subgraph_only = o.no_rl;
  pipe.cfg.seed = o.seed;
  pipe.cfg.rl.max_steps = o.max_steps;
  pipe.cfg.rl.seed = o.seed;

  if (need_gateway) {
    ProviderConfig pc;
    pc.kind = o.provider == "http" ? ProviderKind::kHttp : ProviderKind::kSim;
    pc.endpoint = o.endpoint;
    pc.model = o.model;
    pc.api_key_env = o.api_key_env;
    pc.timeout_seconds = o.timeout;
    pc.max_retries = o.max_retries;
    pc.max_concurrent = o.max_concurrent;
    if (pc.kind == ProviderKind::kHttp && (pc.endpoint.empty() || pc.model.empty())) {
      throw UsageError("--provider http needs --endpoint and --model");
    }
    SimOracleConfig sim;
    if (pc.kind == ProviderKind::kSim) sim = sim_config(o);
    rt->provider = make_gateway(pc, sim);
    pipe.gateway = rt->provider.get();

    std::string cache_path = o.cache;
    if (cache_path.empty() && pc.kind == ProviderKind::kHttp) cache_path = "knowgpt-cache.jsonl";
    if (!o.no_cache && !cache_path.empty()) {
      rt->cache = std::make_unique<ResponseCache>(cache_path);
      rt->caching = std::make_unique<CachingGateway>(*rt->provider, *rt->cache);
      pipe.gateway = rt->caching.get();
    }
  }
  return rt;
}

void load_policy_into(Runtime& rt, const std::string& path) {
  rt.policy = load_policy(path);
  rt.pipe.policy = &*rt.policy;
}

std::vector<QaExample> load_examples(const Runtime& rt, const std::string& path) {
  auto loaded = load_dataset(path, rt.graph);
  spdlog::info("dataset {}: {} examples, {} skipped", path, loaded.examples.size(),
               loaded.skipped.size());
  return std::move(loaded.examples);
}

void write_meta(const fs::path& artifact, std::string_view command, const CommonOptions& o,
                nlohmann::json extra = nlohmann::json::object()) {
  extra["command"] = command;
  extra["seed"] = o.seed;
  extra["graph"] = o.graph;
  if (!o.dataset.empty()) extra["dataset"] = o.dataset;
  std::ofstream out(artifact.string() + ".meta.json", std::ios::trunc);
  out << extra.dump(2) << '\n';
}

Direction parse_direction(const std::string& s) {
  if (s == "forward") return Direction::kForward;
  if (s == "backward") return Direction::kBackward;
  return Direction::kBoth;
}

void require_distinct(const std::string& input, const std::string& output, const char* what) {
  if (!input.empty() && !output.empty() && fs::exists(input) && fs::exists(output) &&
      fs::equivalent(input, output)) {
    throw UsageError(std::string(what) + ": output must not overwrite the input file");
  }
}

// --- train-policy ----------------------------------------------------------

struct TrainPolicyOptions {
  std::string log_path;
  int episodes = 1000;
  double learning_rate = 0.002;
  std::string optimizer = "adam";
  double clip_norm = 5.0;
  double w_reach = 1.0;
  double w_cr = 0.5;
  double w_cs = 0.5;
  double discount = 0.99;
  int hidden = 64;
  int log_interval = 1;
  std::string direction = "both";
};

int cmd_train_policy(const CommonOptions& o, const TrainPolicyOptions& t, std::ostream& out) {
  auto rt = load_runtime(o, false);
  auto examples = load_examples(*rt, o.dataset);

  std::vector<QuestionContext> questions;
  std::vector<std::vector<float>> contexts;
  for (const auto& ex : examples) {
    questions.push_back(ex.question);
    contexts.push_back(rt->pipe.context_for(ex));
  }
  auto queries = path_queries(questions, contexts);
  if (queries.empty()) throw Error("no usable (source, target) pair in " + o.dataset);

  TrainConfig cfg;
  cfg.max_steps = o.max_steps;
  cfg.episodes = t.episodes;
  cfg.learning_rate = t.learning_rate;
  cfg.optimizer = parse_optimizer(t.optimizer);
  cfg.clip_norm = t.clip_norm;
  cfg.w_reach = t.w_reach;
  cfg.w_cr = t.w_cr;
  cfg.w_cs = t.w_cs;
  cfg.discount = t.discount;
  cfg.seed = o.seed;
  cfg.hidden = t.hidden;
  cfg.direction = parse_direction(t.direction);
  cfg.log_interval = t.log_interval;
  cfg.validate();

  const auto d = rt->node_embeddings->dim();
  auto w = rt->projection ? *rt->projection : ProjectionMatrix::identity(d);
  auto init = PolicyParams::random(d, static_cast<std::size_t>(t.hidden), o.seed);
  auto result = train_reinforce(rt->graph, queries, std::move(init), cfg, *rt->node_embeddings, w);

  save_policy(result.params, o.policy);
  const auto log_path = t.log_path.empty() ? o.policy + ".log.csv" : t.log_path;
  write_train_log_csv(result.log, log_path);
  write_meta(o.policy, "train-policy", o,
             {{"episodes", cfg.episodes}, {"queries", queries.size()}, {"log", log_path}});

  const auto& last = result.log.empty() ? TrainLogRow{} : result.log.back();
  out << "policy=" << o.policy << '\n'
      << "log=" << log_path << '\n'
      << fmt::format("final_success_rate={:.4f}\n", last.success_rate);
  return kExitOk;
}

// --- train-bandit ----------------------------------------------------------

struct TrainBanditOptions {
  std::size_t rounds = 1000;
  std::string resume;
  std::string curve;
  double lambda = 1.0;
  double delta = 0.1;
};

int cmd_train_bandit(const CommonOptions& o, const TrainBanditOptions& t, std::ostream& out) {
  if (o.policy.empty() && !o.no_rl) {
    throw UsageError("train-bandit needs --policy, or --no-rl to use the subgraph arms only");
  }
  require_distinct(t.resume, o.bandit, "--bandit");
  auto rt = load_runtime(o, true);
  if (!o.policy.empty()) load_policy_into(*rt, o.policy);
  rt->pipe.validate();
  auto examples = load_examples(*rt, o.dataset);

  auto bandit = t.resume.empty() ? BanditModel(rt->pipe.context_dim(), t.lambda, t.delta)
                                 : BanditModel::load(t.resume);
  auto result = run_bandit_training(examples, rt->pipe, bandit, t.rounds, o.seed);

  bandit.save(o.bandit);
  const auto curve_path = t.curve.empty() ? o.bandit + ".curve.csv" : t.curve;
  write_curve_csv(result.curve, curve_path);
  write_meta(o.bandit, "train-bandit", o,
             {{"rounds", t.rounds}, {"curve", curve_path}, {"resumed_from", t.resume}});

  out << "bandit=" << o.bandit << '\n' << "curve=" << curve_path << '\n';
  if (t.rounds > 0) {
    out << fmt::format("train_accuracy={:.4f}\n", static_cast<double>(result.correct) /
                                                      static_cast<double>(t.rounds));
  }
  return kExitOk;
}

// --- evaluate --------------------------------------------------------------

struct EvaluateOptions {
  std::string mode = "knowgpt";
  int arm = -1;
};

int cmd_evaluate(const CommonOptions& o, const EvaluateOptions& e, std::ostream& out) {
  EvalOptions opt;
  opt.mode = parse_eval_mode(e.mode);
  opt.jobs = o.jobs;
  if (opt.mode == EvalMode::kFixedArm) {
    if (e.arm < 0) throw UsageError("--mode fixed needs --arm 0..5");
    opt.fixed_arm = ArmId{e.arm};
  }
  if (opt.mode == EvalMode::kKnowGpt && o.bandit.empty()) {
    throw UsageError("--mode knowgpt needs --bandit");
  }

  auto rt = load_runtime(o, true);
  if (!o.policy.empty()) load_policy_into(*rt, o.policy);
  std::optional<BanditModel> bandit;
  if (opt.mode == EvalMode::kKnowGpt) {
    bandit = BanditModel::load(o.bandit);
    opt.bandit = &*bandit;
  }
  if (opt.mode != EvalMode::kNoKg && rt->pipe.policy == nullptr && !o.no_rl) {
    spdlog::warn("no --policy given: RL arms fall back to subgraph knowledge");
  }
  auto examples = load_examples(*rt, o.dataset);
  auto report = evaluate(examples, rt->pipe, opt);

  if (!o.report.empty()) {
    write_report(report, o.report);
    out << "report=" << o.report << '\n';
  }
  out << fmt::format("examples={}\n", report.total)
      << fmt::format("mean_tokens={:.1f}\n", report.cost.mean_tokens)
      << fmt::format("accuracy={:.4f}\n", report.accuracy);
  return kExitOk;
}

// --- answer ----------------------------------------------------------------

struct AnswerOptions {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::string answer;
  int arm = -1;
  bool no_kg = false;
  bool dry_run = false;
};

std::pair<std::string, std::string> split_label(const std::string& spec, const char* flag) {
  auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError(std::string(flag) + " expects LABEL=value: " + spec);
  }
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

int cmd_answer(const CommonOptions& o, const AnswerOptions& a, std::ostream& out) {
  if (a.id.empty() == a.question.empty()) {
    throw UsageError("answer needs exactly one of --id (with --dataset) or --question");
  }
  if (!a.id.empty() && o.dataset.empty()) throw UsageError("--id needs --dataset");
  if (!a.question.empty() && a.choices.empty()) throw UsageError("--question needs --choice");

  auto rt = load_runtime(o, true);
  if (!o.policy.empty()) load_policy_into(*rt, o.policy);

  QaExample ex;
  if (!a.id.empty()) {
    auto examples = load_examples(*rt, o.dataset);
    auto it = std::find_if(examples.begin(), examples.end(),
                           [&](const QaExample& e) { return e.id() == a.id; });
    if (it == examples.end()) throw LookupError("no usable example with id " + a.id);
    ex = *it;
  } else {
    std::vector<Choice> choices;
    for (const auto& spec : a.choices) {
      auto [label, text] = split_label(spec, "--choice");
      choices.push_back(Choice{label, text});
    }
    std::map<std::string, std::vector<std::string>> targets;
    for (const auto& spec : a.targets) {
      auto [label, name] = split_label(spec, "--target");
      targets[label].push_back(name);
    }
    std::optional<std::string> gold;
    if (!a.answer.empty()) gold = a.answer;
    ex = make_example(rt->graph, "cli", a.question, std::move(choices), gold, a.sources,
                      std::move(targets));
    validate_question(ex.question, rt->graph);
    if (ex.question.source_entities.empty() && ex.question.all_targets().empty()) {
      spdlog::warn("no entity resolves in the graph; answering without background knowledge");
    }
  }

  rt->pipe.validate();
  auto context = rt->pipe.context_for(ex);
  Prediction pred;
  std::string arm_text;
  std::optional<ArmId> arm;
  if (!a.no_kg) {
    if (a.arm >= 0) {
      arm = ArmId{a.arm};
    } else if (!o.bandit.empty()) {
      auto bandit = BanditModel::load(o.bandit);
      arm = select_arm(bandit, context, rt->pipe.cfg);
    } else {
      arm = ArmId::of(Extractor::kSubgraph, TemplateId::kSentences);
    }
  }

  if (arm) {
    arm_text = fmt::format("{} ({})", arm_name(*arm), arm->index);
    pred = a.dry_run ? render_with_arm(ex, rt->pipe, *arm, context)
                     : answer_with_arm(ex, rt->pipe, *arm, context);
    if (pred.fallback_used) arm_text += " [fallback: subgraph knowledge]";
  } else {
    arm_text = "none (no_kg)";
    if (a.dry_run) {
      pred.prompt = assemble_prompt(ex.question, "", TemplateId::kTriples);
    } else {
      pred = answer_no_kg(ex, rt->pipe);
    }
  }

  out << "== arm ==\n" << arm_text << "\n\n";
  out << "== prompt ==\n" << pred.prompt.text << "\n\n";
  if (a.dry_run) {
    out << "(dry run: no provider call)\n";
    return kExitOk;
  }
  out << "== reply ==\n" << pred.reply << "\n\n";
  out << "== answer ==\n";
  if (pred.parsed.parse_ok) {
    out << *pred.parsed.label;
  } else {
    out << "unparsed";
  }
  if (ex.question.gold_label) out << (pred.correct ? " (correct)" : " (wrong)");
  out << '\n';
  return kExitOk;
}

spdlog::level::level_enum parse_level(const std::string& s) {
  auto level = spdlog::level::from_str(s);
  if (level == spdlog::level::off && s != "off") throw UsageError("unknown --log-level " + s);
  return level;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-graph prompting for multiple-choice QA", "knowgpt"};
  app.require_subcommand(1);

  CommonOptions common;
  TrainPolicyOptions tp;
  TrainBanditOptions tb;
  EvaluateOptions ev;
  AnswerOptions an;

  auto* train_policy = app.add_subcommand("train-policy", "Train the path-extraction policy");
  add_common(train_policy, common);
  train_policy->add_option("--dataset", common.dataset, "Training questions (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  train_policy->add_option("--policy", common.policy, "Output policy checkpoint")->required();
  train_policy->add_option("--log", tp.log_path, "Training log CSV (default: <policy>.log.csv)");
  train_policy->add_option("--episodes", tp.episodes, "REINFORCE episodes");
  train_policy->add_option("--lr", tp.learning_rate, "Learning rate");
  train_policy->add_option("--optimizer", tp.optimizer, "Update rule")
      ->check(CLI::IsMember({"adam", "sgd"}));
  train_policy->add_option("--clip-norm", tp.clip_norm, "Global gradient-norm clip");
  train_policy->add_option("--w-reach", tp.w_reach, "Reachability reward weight");
  train_policy->add_option("--w-cr", tp.w_cr, "Context-relevance reward weight");
  train_policy->add_option("--w-cs", tp.w_cs, "Conciseness reward weight");
  train_policy->add_option("--discount", tp.discount, "Per-step discount");
  train_policy->add_option("--hidden", tp.hidden, "Policy hidden width");
  train_policy->add_option("--log-interval", tp.log_interval, "Episodes per log row");
  train_policy->add_option("--direction", tp.direction, "Edge traversal")
      ->check(CLI::IsMember({"forward", "backward", "both"}));

  auto* train_bandit = app.add_subcommand("train-bandit", "Train the prompt-format bandit");
  add_common(train_bandit, common);
  train_bandit->add_option("--dataset", common.dataset, "Training questions (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  train_bandit->add_option("--policy", common.policy, "Policy checkpoint for the RL arms")
      ->check(CLI::ExistingFile);
  train_bandit->add_flag("--no-rl", common.no_rl, "Use only the subgraph arms");
  train_bandit->add_option("--bandit", common.bandit, "Output bandit state")->required();
  train_bandit->add_option("--resume", tb.resume, "Bandit state to continue from")
      ->check(CLI::ExistingFile);
  train_bandit->add_option("--rounds", tb.rounds, "Training rounds (one LLM call each)");
  train_bandit->add_option("--curve", tb.curve, "Learning-curve CSV (default: <bandit>.curve.csv)");
  train_bandit->add_option("--lambda", tb.lambda, "Ridge regulariser");
  train_bandit->add_option("--delta", tb.delta, "Confidence parameter in (0, 2]");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a test set");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--dataset", common.dataset, "Test questions (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--mode", ev.mode, "knowgpt | fixed | no_kg")
      ->check(CLI::IsMember({"knowgpt", "fixed", "no_kg"}));
  evaluate_cmd->add_option("--arm", ev.arm, "Arm index for --mode fixed")->check(CLI::Range(0, 5));
  evaluate_cmd->add_option("--policy", common.policy, "Policy checkpoint")
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--bandit", common.bandit, "Trained bandit state")
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_flag("--no-rl", common.no_rl, "Restrict bandit selection to subgraph arms");
  evaluate_cmd->add_option("--report", common.report, "Report JSON output");

  auto* answer_cmd = app.add_subcommand("answer", "Answer one question and show the prompt");
  add_common(answer_cmd, common);
  answer_cmd->add_option("--dataset", common.dataset, "Dataset for --id")
      ->check(CLI::ExistingFile);
  answer_cmd->add_option("--id", an.id, "Example id in --dataset");
  answer_cmd->add_option("--question", an.question, "Question text");
  answer_cmd->add_option("--choice", an.choices, "LABEL=text (repeatable)");
  answer_cmd->add_option("--source", an.sources, "Question entity name (repeatable)");
  answer_cmd->add_option("--target", an.targets, "LABEL=entity name (repeatable)");
  answer_cmd->add_option("--answer", an.answer, "Gold label, if known");
  answer_cmd->add_option("--arm", an.arm, "Force an arm 0..5")->check(CLI::Range(0, 5));
  answer_cmd->add_option("--policy", common.policy, "Policy checkpoint")
      ->check(CLI::ExistingFile);
  answer_cmd->add_option("--bandit", common.bandit, "Bandit state used to pick the arm")
      ->check(CLI::ExistingFile);
  answer_cmd->add_flag("--no-kg", an.no_kg, "Ask without background knowledge");
  answer_cmd->add_flag("--dry-run", an.dry_run, "Print the prompt without calling the provider");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto logger = std::make_shared<spdlog::logger>(
      "knowgpt", std::make_shared<spdlog::sinks::ostream_sink_mt>(err));
  logger->set_pattern("[%l] %v");
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(logger);
  struct Restore {
    std::shared_ptr<spdlog::logger> prev;
    ~Restore() { spdlog::set_default_logger(prev); }
  } restore{previous};

  try {
    spdlog::set_level(parse_level(common.log_level));
    if (*train_policy) return cmd_train_policy(common, tp, out);
    if (*train_bandit) return cmd_train_bandit(common, tb, out);
    if (*evaluate_cmd) return cmd_evaluate(common, ev, out);
    return cmd_answer(common, an, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace knowgpt::cli
