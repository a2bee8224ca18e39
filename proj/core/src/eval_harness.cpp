#include "knowgpt/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "knowgpt/error.hpp"
#include "knowgpt/subgraph.hpp"

namespace knowgpt {

using nlohmann::json;

QaExample make_example(const KnowledgeGraph& g, std::string id, std::string question,
                       std::vector<Choice> choices, std::optional<std::string> answer,
                       std::vector<std::string> source_names,
                       std::map<std::string, std::vector<std::string>> target_names,
                       std::optional<std::string> gold_fact, std::optional<std::string> cluster) {
  QaExample ex;
  ex.question.id = std::move(id);
  ex.question.question_text = std::move(question);
  ex.question.choices = std::move(choices);
  ex.question.gold_label = std::move(answer);
  ex.source_names = std::move(source_names);
  ex.target_names = std::move(target_names);
  ex.gold_fact = std::move(gold_fact);
  ex.cluster = std::move(cluster);

  auto sources = link_entities(g, ex.source_names);
  for (const auto& name : sources.unresolved) {
    spdlog::info("{}: source entity '{}' not in graph", ex.id(), name);
  }
  ex.question.source_entities = std::move(sources.ids);
  for (const auto& [label, names] : ex.target_names) {
    auto linked = link_entities(g, names);
    for (const auto& name : linked.unresolved) {
      spdlog::info("{}: target entity '{}' for choice {} not in graph", ex.id(), name, label);
    }
    ex.question.target_entities[label] = std::move(linked.ids);
  }
  return ex;
}

namespace {

std::string require_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::vector<std::string> string_list(const json& j, const char* what) {
  if (!j.is_array()) throw FormatError(std::string(what) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw FormatError(std::string(what) + " must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

QaExample parse_record(const json& j, const KnowledgeGraph& g) {
  if (!j.is_object()) throw FormatError("record must be a JSON object");
  auto id = require_string(j, "id");
  auto question = require_string(j, "question");

  auto choices_it = j.find("choices");
  if (choices_it == j.end() || !choices_it->is_array() || choices_it->empty()) {
    throw FormatError("'choices' must be a non-empty array");
  }
  std::vector<Choice> choices;
  for (const auto& c : *choices_it) {
    if (!c.is_object()) throw FormatError("choice must be an object");
    choices.push_back(Choice{require_string(c, "label"), require_string(c, "text")});
  }

  auto src_it = j.find("source_entities");
  if (src_it == j.end()) throw FormatError("missing field 'source_entities'");
  auto sources = string_list(*src_it, "source_entities");

  std::map<std::string, std::vector<std::string>> targets;
  if (auto tgt_it = j.find("target_entities"); tgt_it != j.end()) {
    if (!tgt_it->is_object()) throw FormatError("'target_entities' must be an object");
    for (const auto& [label, names] : tgt_it->items()) {
      targets[label] = string_list(names, "target_entities values");
    }
  }

  auto ex = make_example(g, std::move(id), std::move(question), std::move(choices),
                         optional_string(j, "answer"), std::move(sources), std::move(targets),
                         optional_string(j, "gold_fact"), optional_string(j, "cluster"));
  try {
    validate_question(ex.question, g);
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return ex;
}

}  // namespace

DatasetLoad load_dataset(const std::filesystem::path& path, const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  DatasetLoad out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++records;
    QaExample ex;
    try {
      ex = parse_record(json::parse(line), g);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (ex.question.source_entities.empty()) {
      std::string reason = ex.id() + ": no source entity resolves in the graph";
      spdlog::warn("skipping {}", reason);
      out.skipped.push_back(std::move(reason));
      continue;
    }
    out.examples.push_back(std::move(ex));
  }
  if (records == 0) spdlog::warn("dataset {} is empty", path.string());
  return out;
}

void write_dataset(std::span<const QaExample> examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write dataset " + path.string());
  for (const auto& ex : examples) {
    json j;
    j["id"] = ex.id();
    j["question"] = ex.question.question_text;
    j["choices"] = json::array();
    for (const auto& c : ex.question.choices) {
      j["choices"].push_back({{"label", c.label}, {"text", c.text}});
    }
    if (ex.question.gold_label) j["answer"] = *ex.question.gold_label;
    j["source_entities"] = ex.source_names;
    j["target_entities"] = ex.target_names;
    if (ex.gold_fact) j["gold_fact"] = *ex.gold_fact;
    if (ex.cluster) j["cluster"] = *ex.cluster;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

void Pipeline::validate() const {
  if (graph == nullptr) throw ConfigError("pipeline: graph missing");
  if (node_embeddings == nullptr) throw ConfigError("pipeline: node embeddings missing");
  if (gateway == nullptr) throw ConfigError("pipeline: gateway missing");
  cfg.rl.validate();
  const std::size_t d = node_embeddings->dim();
  const std::size_t c = context_dim();
  if (projection != nullptr) {
    if (projection->cols() != d) {
      throw ConfigError("projection expects " + std::to_string(projection->cols()) +
                        "-dim paths, node embeddings have " + std::to_string(d));
    }
  } else if (c != d) {
    throw ConfigError("context dim " + std::to_string(c) + " differs from node dim " +
                      std::to_string(d) + " and no projection is given");
  }
  if (policy != nullptr && policy->embedding_dim() != d) {
    throw ConfigError("policy was trained on " + std::to_string(policy->embedding_dim()) +
                      "-dim embeddings, node embeddings have " + std::to_string(d));
  }
}

std::size_t Pipeline::context_dim() const {
  if (context_embeddings != nullptr) return context_embeddings->dim();
  if (projection != nullptr) return projection->rows();
  return node_embeddings->dim();
}

std::vector<float> Pipeline::context_for(const QaExample& ex) const {
  if (context_embeddings != nullptr) {
    if (auto row = context_embeddings->find(ex.id())) {
      auto v = context_embeddings->row(*row);
      return {v.begin(), v.end()};
    }
  }
  std::string text = ex.question.question_text;
  for (const auto& c : ex.question.choices) text += " " + c.text;
  return mock_embed(text, context_dim(), cfg.seed);
}

namespace {

ProjectionMatrix projection_of(const Pipeline& pipe) {
  if (pipe.projection != nullptr) return *pipe.projection;
  return ProjectionMatrix::identity(pipe.node_embeddings->dim());
}

KnowledgeBundle subgraph_bundle(const QaExample& ex, const Pipeline& pipe,
                                std::span<const float> context) {
  const auto& g = *pipe.graph;
  bool any = false;
  for (auto e : ex.question.source_entities) any = any || g.valid(e);
  for (auto e : ex.question.all_targets()) any = any || g.valid(e);
  if (!any) return KnowledgeBundle{{}, Extractor::kSubgraph};

  auto sub = extract_two_hop(g, ex.question, pipe.cfg.hops);
  sub = score_and_prune(sub, context, *pipe.node_embeddings, pipe.cfg.prune_k, pipe.projection);
  auto triples = to_triples(sub, pipe.cfg.max_triples);
  return KnowledgeBundle::from(triples, Extractor::kSubgraph);
}

KnowledgeBundle rl_bundle(const QaExample& ex, const Pipeline& pipe,
                          std::span<const float> context) {
  if (pipe.policy == nullptr) return KnowledgeBundle{{}, Extractor::kRl};
  auto w = projection_of(pipe);
  TrainConfig cfg = pipe.cfg.rl;
  cfg.seed = pipe.cfg.seed;
  auto chains = extract_paths(*pipe.graph, *pipe.policy, ex.question, context, cfg,
                              *pipe.node_embeddings, w, pipe.cfg.rl_rollouts);
  std::vector<Triple> triples;
  for (const auto& chain : chains) {
    if (!chain.reached_target || chain.length() == 0) continue;
    triples.insert(triples.end(), chain.steps.begin(), chain.steps.end());
  }
  auto bundle = KnowledgeBundle::from(triples, Extractor::kRl);
  if (bundle.triples.size() > pipe.cfg.max_triples) bundle.triples.resize(pipe.cfg.max_triples);
  return bundle;
}

OracleHints hints_for(const QaExample& ex, ArmId arm) {
  OracleHints h;
  h.example_id = ex.id();
  for (const auto& c : ex.question.choices) h.labels.push_back(c.label);
  h.gold_label = ex.question.gold_label;
  h.gold_fact = ex.gold_fact;
  h.cluster = ex.cluster;
  h.arm = arm;
  return h;
}

Prediction finish(const QaExample& ex, const Pipeline& pipe, Prediction p, ArmId hint_arm) {
  LlmReply reply;
  try {
    reply = pipe.gateway->complete(CompletionRequest{p.prompt.text, hints_for(ex, hint_arm)});
  } catch (const Error& e) {
    throw Error("example " + ex.id() + ": " + e.what());
  }
  p.reply = reply.text;
  p.from_cache = reply.from_cache;
  p.parsed = parse_answer(reply.text, ex.question.choices);
  p.correct = p.parsed.parse_ok && ex.question.gold_label &&
              p.parsed.label == *ex.question.gold_label;
  return p;
}

}  // namespace

KnowledgeBundle extract_knowledge(const QaExample& ex, const Pipeline& pipe, Extractor extractor,
                                  std::span<const float> context, bool* fallback_used) {
  if (fallback_used != nullptr) *fallback_used = false;
  if (extractor == Extractor::kSubgraph) return subgraph_bundle(ex, pipe, context);
  auto bundle = rl_bundle(ex, pipe, context);
  if (!bundle.empty()) return bundle;
  if (fallback_used != nullptr) *fallback_used = true;
  return subgraph_bundle(ex, pipe, context);
}

Prediction answer_with_arm(const QaExample& ex, const Pipeline& pipe, ArmId arm) {
  auto c = pipe.context_for(ex);
  return answer_with_arm(ex, pipe, arm, c);
}

Prediction render_with_arm(const QaExample& ex, const Pipeline& pipe, ArmId arm,
                           std::span<const float> context) {
  if (arm.index < 0 || static_cast<std::size_t>(arm.index) >= kArmCount) {
    throw ConfigError("arm index " + std::to_string(arm.index) + " out of range");
  }
  Prediction p;
  p.example_id = ex.id();
  p.arm = arm;
  auto bundle = extract_knowledge(ex, pipe, arm.extractor(), context, &p.fallback_used);
  p.triples = bundle.triples.size();
  LlmGateway* describer = pipe.cfg.llm_graph_description ? pipe.gateway : nullptr;
  auto text = render_knowledge(bundle, *pipe.graph, arm.template_id(), describer);
  p.prompt = assemble_prompt(ex.question, text, arm.template_id());
  return p;
}

Prediction answer_with_arm(const QaExample& ex, const Pipeline& pipe, ArmId arm,
                           std::span<const float> context) {
  return finish(ex, pipe, render_with_arm(ex, pipe, arm, context), arm);
}

std::vector<ArmId> allowed_arms(const PipelineConfig& cfg) {
  std::vector<ArmId> arms;
  const std::size_t n = cfg.subgraph_only ? 3 : kArmCount;
  for (std::size_t i = 0; i < n; ++i) arms.push_back(ArmId{static_cast<int>(i)});
  return arms;
}

ArmId select_arm(const BanditModel& bandit, std::span<const float> context,
                 const PipelineConfig& cfg) {
  if (!cfg.subgraph_only) return bandit.select(context);
  auto arms = allowed_arms(cfg);
  return bandit.select_among(context, arms);
}

Prediction answer_question(const QaExample& ex, const Pipeline& pipe, const BanditModel& bandit) {
  auto c = pipe.context_for(ex);
  return answer_with_arm(ex, pipe, select_arm(bandit, c, pipe.cfg), c);
}

Prediction answer_no_kg(const QaExample& ex, const Pipeline& pipe) {
  Prediction p;
  p.example_id = ex.id();
  p.prompt = assemble_prompt(ex.question, "", TemplateId::kTriples);
  // The sim oracle keys its draws on an arm; no_kg uses index -1.
  return finish(ex, pipe, std::move(p), ArmId{-1});
}

BanditReward reward_from_prediction(const Prediction& p) { return BanditReward{p.correct ? 1 : 0}; }

BanditTrainingResult run_bandit_training(std::span<const QaExample> train, const Pipeline& pipe,
                                         BanditModel& bandit, std::size_t rounds,
                                         std::uint64_t seed) {
  BanditTrainingResult out;
  if (rounds == 0) return out;
  if (train.empty()) throw ConfigError("bandit training needs at least one example");
  pipe.validate();
  if (bandit.dim() != pipe.context_dim()) {
    throw ConfigError("bandit dim " + std::to_string(bandit.dim()) + " != context dim " +
                      std::to_string(pipe.context_dim()));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::deque<int> window;
  int window_correct = 0;
  out.curve.reserve(rounds);
  out.selections.reserve(rounds);
  for (std::size_t r = 1; r <= rounds; ++r) {
    const auto& ex = train[pick(rng)];
    auto c = pipe.context_for(ex);
    ArmId arm = select_arm(bandit, c, pipe.cfg);
    auto pred = answer_with_arm(ex, pipe, arm, c);
    auto reward = reward_from_prediction(pred);
    bandit.update(arm, c, reward);

    out.selections.push_back(arm);
    out.correct += static_cast<std::size_t>(reward.value);
    window.push_back(reward.value);
    window_correct += reward.value;
    if (window.size() > kCurveWindow) {
      window_correct -= window.front();
      window.pop_front();
    }
    out.curve.push_back(CurveRow{r, static_cast<double>(window_correct) /
                                        static_cast<double>(window.size()),
                                 arm});
  }
  return out;
}

void write_curve_csv(std::span<const CurveRow> curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "round,running_accuracy,arm\n";
  for (const auto& row : curve) {
    out << row.round << ',' << fmt::format("{:.4f}", row.running_accuracy) << ','
        << row.arm.index << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

EvalMode parse_eval_mode(std::string_view s) {
  if (s == "knowgpt") return EvalMode::kKnowGpt;
  if (s == "fixed") return EvalMode::kFixedArm;
  if (s == "no_kg") return EvalMode::kNoKg;
  throw ConfigError("unknown eval mode '" + std::string(s) + "' (knowgpt|fixed|no_kg)");
}

std::string_view to_string(EvalMode m) {
  switch (m) {
    case EvalMode::kKnowGpt: return "knowgpt";
    case EvalMode::kFixedArm: return "fixed";
    case EvalMode::kNoKg: return "no_kg";
  }
  return "?";
}

EvalReport evaluate(std::span<const QaExample> test, const Pipeline& pipe, const EvalOptions& opt) {
  pipe.validate();
  if (opt.mode == EvalMode::kKnowGpt) {
    if (opt.bandit == nullptr) throw ConfigError("knowgpt mode needs a bandit model");
    if (opt.bandit->dim() != pipe.context_dim()) {
      throw ConfigError("bandit dim " + std::to_string(opt.bandit->dim()) + " != context dim " +
                        std::to_string(pipe.context_dim()));
    }
  }
  if (opt.jobs < 1) throw ConfigError("jobs must be >= 1");

  const auto started = std::chrono::steady_clock::now();
  std::vector<Prediction> preds(test.size());
  auto run_one = [&](std::size_t i) {
    const auto& ex = test[i];
    switch (opt.mode) {
      case EvalMode::kKnowGpt: preds[i] = answer_question(ex, pipe, *opt.bandit); break;
      case EvalMode::kFixedArm: preds[i] = answer_with_arm(ex, pipe, opt.fixed_arm); break;
      case EvalMode::kNoKg: preds[i] = answer_no_kg(ex, pipe); break;
    }
  };

  const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(opt.jobs), test.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < test.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < test.size(); i = next++) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = test.size();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  EvalReport r;
  r.mode = opt.mode;
  if (opt.mode == EvalMode::kFixedArm) r.fixed_arm = opt.fixed_arm;
  r.seed = pipe.cfg.seed;
  r.total = preds.size();
  for (const auto& p : preds) {
    if (p.correct) ++r.correct;
    if (!p.parsed.parse_ok) ++r.parse_failures;
    if (p.fallback_used) ++r.fallbacks;
    if (p.arm) {
      ++r.arm_counts[static_cast<std::size_t>(p.arm->index)];
      auto& t = r.per_template[std::string(to_string(p.arm->template_id()))];
      ++t.count;
      if (p.correct) ++t.correct;
    }
    r.cost.total_tokens += p.prompt.token_estimate;
    r.cost.knowledge_tokens += p.prompt.knowledge_tokens;
  }
  for (auto& [name, t] : r.per_template) {
    t.accuracy = static_cast<double>(t.correct) / static_cast<double>(t.count);
  }
  r.cost.prompts = r.total;
  if (r.total > 0) {
    const auto n = static_cast<double>(r.total);
    r.accuracy = static_cast<double>(r.correct) / n;
    r.parse_failure_rate = static_cast<double>(r.parse_failures) / n;
    r.cost.mean_tokens = static_cast<double>(r.cost.total_tokens) / n;
  }
  r.cost.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  r.predictions = std::move(preds);
  return r;
}

std::string report_json(const EvalReport& r, bool with_predictions) {
  json j;
  j["mode"] = std::string(to_string(r.mode));
  if (r.fixed_arm) j["fixed_arm"] = r.fixed_arm->index;
  j["seed"] = r.seed;
  j["total"] = r.total;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy;
  json arms = json::object();
  for (std::size_t i = 0; i < kArmCount; ++i) {
    arms[arm_name(ArmId{static_cast<int>(i)})] = r.arm_counts[i];
  }
  j["arm_counts"] = arms;
  json templates = json::object();
  for (const auto& [name, t] : r.per_template) {
    templates[name] = {{"count", t.count}, {"correct", t.correct}, {"accuracy", t.accuracy}};
  }
  j["per_template_accuracy"] = templates;
  j["parse_failures"] = r.parse_failures;
  j["parse_failure_rate"] = r.parse_failure_rate;
  j["fallbacks"] = r.fallbacks;
  j["cost"] = {{"prompts", r.cost.prompts},
               {"total_tokens", r.cost.total_tokens},
               {"mean_tokens", r.cost.mean_tokens},
               {"background_tokens", r.cost.knowledge_tokens},
               {"wall_clock_seconds", r.cost.wall_clock_seconds}};
  if (with_predictions) {
    json preds = json::array();
    for (const auto& p : r.predictions) {
      json e{{"id", p.example_id},
             {"template", p.arm ? std::string(to_string(p.arm->template_id())) : "none"},
             {"label", p.parsed.label ? json(*p.parsed.label) : json(nullptr)},
             {"parse_ok", p.parsed.parse_ok},
             {"correct", p.correct},
             {"fallback_used", p.fallback_used},
             {"triples", p.triples},
             {"tokens", p.prompt.token_estimate},
             {"background_tokens", p.prompt.knowledge_tokens}};
      e["arm"] = p.arm ? json(p.arm->index) : json(nullptr);
      preds.push_back(std::move(e));
    }
    j["predictions"] = std::move(preds);
  }
  return j.dump(2);
}

void write_report(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write report " + path.string());
  out << report_json(r) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace knowgpt
