#pragma once

// Turns extracted triples into prompt text: raw triples, verbalized
// sentences, or a graph description centred on the hub entity.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knowgpt/kg_store.hpp"

namespace knowgpt {

class LlmGateway;

enum class Extractor { kSubgraph = 0, kRl = 1 };
enum class TemplateId { kTriples = 0, kSentences = 1, kGraphDescription = 2 };

std::string_view to_string(Extractor e);
std::string_view to_string(TemplateId t);

struct KnowledgeBundle {
  std::vector<Triple> triples;
  Extractor origin = Extractor::kSubgraph;

  // Keeps the first occurrence of each triple, preserving order.
  static KnowledgeBundle from(std::span<const Triple> triples, Extractor origin);
  bool empty() const { return triples.empty(); }
};

// ConceptNet-style key: strips a "/r/" prefix, splits camelCase, lowercases
// and maps spaces/hyphens to underscores ("AtLocation" -> "at_location").
std::string relation_key(std::string_view relation);

// Relation -> verb phrase used as "{head} <phrase> {tail}.".
class Verbalizer {
 public:
  static const Verbalizer& builtin();

  Verbalizer() = default;
  explicit Verbalizer(std::map<std::string, std::string> patterns);

  std::optional<std::string_view> pattern(std::string_view relation) const;
  // Underscores in entity names become spaces; unknown relations fall back to
  // "{head} is related to {tail} via {relation}.".
  std::string sentence(std::string_view head, std::string_view relation,
                       std::string_view tail) const;

 private:
  std::map<std::string, std::string> patterns_;
};

std::string display_name(std::string_view name);

// "(h, r, t), (h, r, t)" using vocabulary spellings.
std::string render_triples(const KnowledgeBundle& b, const KnowledgeGraph& g);
std::string render_triple(const Triple& t, const KnowledgeGraph& g);

std::string render_sentences(const KnowledgeBundle& b, const KnowledgeGraph& g,
                             const Verbalizer& verbalizer = Verbalizer::builtin());

// Highest in-bundle degree, ties to the lower id.
std::optional<EntityId> center_entity(const KnowledgeBundle& b);

struct GraphDescription {
  std::string text;
  bool used_llm = false;
  // LLM mode was requested but failed; text is the template rendering.
  bool llm_failed = false;
};

// Template mode when llm is null: "<Center> stands central in the network."
// then one sentence per triple touching the centre, then the rest. LLM mode
// asks the gateway to rewrite the triple list and falls back to template
// mode on failure.
GraphDescription render_graph_description(const KnowledgeBundle& b, const KnowledgeGraph& g,
                                          LlmGateway* llm = nullptr,
                                          const Verbalizer& verbalizer = Verbalizer::builtin());

std::string render_knowledge(const KnowledgeBundle& b, const KnowledgeGraph& g, TemplateId t,
                             LlmGateway* llm = nullptr);

struct RenderedPrompt {
  std::string text;
  TemplateId template_id = TemplateId::kTriples;
  std::size_t token_estimate = 0;
  // Tokens spent on the background section (0 for the no-knowledge frame).
  std::size_t knowledge_tokens = 0;
};

// ceil(bytes / 4).
std::size_t estimate_tokens(std::string_view text);

inline constexpr std::string_view kBackgroundHeader = "Background knowledge:";
inline constexpr std::string_view kAnswerInstruction =
    "Answer with the letter of the correct choice only.";

// Background section (omitted when knowledge_text is empty), the question,
// one "(<label>) <text>" line per choice, then the answer instruction.
RenderedPrompt assemble_prompt(const QuestionContext& q, std::string_view knowledge_text,
                               TemplateId t);

}  // namespace knowgpt
