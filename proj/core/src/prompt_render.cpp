#include "knowgpt/prompt_render.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "knowgpt/error.hpp"
#include "knowgpt/llm_gateway.hpp"

namespace knowgpt {

std::string_view to_string(Extractor e) {
  return e == Extractor::kSubgraph ? "P_sub" : "P_RL";
}

std::string_view to_string(TemplateId t) {
  switch (t) {
    case TemplateId::kTriples:
      return "triples";
    case TemplateId::kSentences:
      return "sentences";
    case TemplateId::kGraphDescription:
      return "graph_description";
  }
  return "unknown";
}

KnowledgeBundle KnowledgeBundle::from(std::span<const Triple> triples, Extractor origin) {
  KnowledgeBundle b;
  b.origin = origin;
  std::set<Triple> seen;
  for (const auto& t : triples) {
    if (seen.insert(t).second) b.triples.push_back(t);
  }
  return b;
}

std::string relation_key(std::string_view relation) {
  if (relation.starts_with("/r/")) relation.remove_prefix(3);
  std::string out;
  for (std::size_t i = 0; i < relation.size(); ++i) {
    const auto c = static_cast<unsigned char>(relation[i]);
    if (c == ' ' || c == '-') {
      out.push_back('_');
    } else if (std::isupper(c)) {
      const auto prev = i > 0 ? static_cast<unsigned char>(relation[i - 1]) : 0;
      if (i > 0 && (std::islower(prev) || std::isdigit(prev))) out.push_back('_');
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

const Verbalizer& Verbalizer::builtin() {
  static const Verbalizer table(std::map<std::string, std::string>{
      {"antonym", "is the opposite of"},
      {"at_location", "is located at"},
      {"capable_of", "is capable of"},
      {"causes", "causes"},
      {"causes_desire", "makes people want"},
      {"ceo_of", "is the CEO of"},
      {"created_by", "is created by"},
      {"defined_as", "is defined as"},
      {"derived_from", "is derived from"},
      {"desires", "desires"},
      {"distinct_from", "is distinct from"},
      {"entails", "entails"},
      {"etymologically_derived_from", "is etymologically derived from"},
      {"etymologically_related_to", "is etymologically related to"},
      {"form_of", "is a form of"},
      {"founder_of", "is a founder of"},
      {"has_a", "has a"},
      {"has_context", "is used in the context of"},
      {"has_first_subevent", "begins with"},
      {"has_last_subevent", "ends with"},
      {"has_prerequisite", "requires"},
      {"has_property", "has the property"},
      {"has_subevent", "involves"},
      {"instance_of", "is an instance of"},
      {"is_a", "is a"},
      {"located_near", "is located near"},
      {"made_of", "is made of"},
      {"manner_of", "is a way of"},
      {"motivated_by_goal", "is motivated by"},
      {"not_capable_of", "is not capable of"},
      {"not_desires", "does not desire"},
      {"not_has_property", "does not have the property"},
      {"obstructed_by", "is obstructed by"},
      {"part_of", "is part of"},
      {"receives_action", "can be"},
      {"related_to", "is related to"},
      {"similar_to", "is similar to"},
      {"symbol_of", "is a symbol of"},
      {"synonym", "means the same as"},
      {"used_for", "is used for"},
  });
  return table;
}

Verbalizer::Verbalizer(std::map<std::string, std::string> patterns) {
  for (auto& [k, v] : patterns) patterns_.emplace(relation_key(k), std::move(v));
}

std::optional<std::string_view> Verbalizer::pattern(std::string_view relation) const {
  auto it = patterns_.find(relation_key(relation));
  if (it == patterns_.end()) return std::nullopt;
  return it->second;
}

std::string display_name(std::string_view name) {
  std::string out(name);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

std::string Verbalizer::sentence(std::string_view head, std::string_view relation,
                                 std::string_view tail) const {
  std::string out = display_name(head);
  if (auto p = pattern(relation)) {
    out += ' ';
    out += *p;
    out += ' ';
    out += display_name(tail);
  } else {
    out += " is related to ";
    out += display_name(tail);
    out += " via ";
    out += display_name(relation);
  }
  out += '.';
  return out;
}

std::string render_triple(const Triple& t, const KnowledgeGraph& g) {
  std::string out = "(";
  out += g.entity_name(t.head);
  out += ", ";
  out += g.relation_name(t.rel);
  out += ", ";
  out += g.entity_name(t.tail);
  out += ')';
  return out;
}

std::string render_triples(const KnowledgeBundle& b, const KnowledgeGraph& g) {
  std::string out;
  for (std::size_t i = 0; i < b.triples.size(); ++i) {
    if (i > 0) out += ", ";
    out += render_triple(b.triples[i], g);
  }
  return out;
}

std::string render_sentences(const KnowledgeBundle& b, const KnowledgeGraph& g,
                             const Verbalizer& verbalizer) {
  std::string out;
  for (std::size_t i = 0; i < b.triples.size(); ++i) {
    const auto& t = b.triples[i];
    if (i > 0) out += ' ';
    out += verbalizer.sentence(g.entity_name(t.head), g.relation_name(t.rel),
                               g.entity_name(t.tail));
  }
  return out;
}

std::optional<EntityId> center_entity(const KnowledgeBundle& b) {
  if (b.triples.empty()) return std::nullopt;
  std::map<EntityId, std::size_t> degree;
  for (const auto& t : b.triples) {
    ++degree[t.head];
    if (t.tail != t.head) ++degree[t.tail];
  }
  // std::map iterates in id order, so strict > keeps the lowest id on ties.
  auto best = degree.begin();
  for (auto it = degree.begin(); it != degree.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

namespace {

std::string template_description(const KnowledgeBundle& b, const KnowledgeGraph& g,
                                 const Verbalizer& verbalizer) {
  auto center = center_entity(b);
  if (!center) return {};
  std::string out = display_name(g.entity_name(*center)) + " stands central in the network.";
  auto append = [&](const Triple& t) {
    out += ' ';
    out += verbalizer.sentence(g.entity_name(t.head), g.relation_name(t.rel),
                               g.entity_name(t.tail));
  };
  for (const auto& t : b.triples) {
    if (t.head == *center || t.tail == *center) append(t);
  }
  for (const auto& t : b.triples) {
    if (t.head != *center && t.tail != *center) append(t);
  }
  return out;
}

}  // namespace

GraphDescription render_graph_description(const KnowledgeBundle& b, const KnowledgeGraph& g,
                                          LlmGateway* llm, const Verbalizer& verbalizer) {
  GraphDescription out;
  if (b.empty()) return out;
  if (llm != nullptr) {
    auto center = center_entity(b);
    std::string request =
        "Describe the following knowledge as a connected graph. Start by naming the central "
        "entity \"" +
        display_name(g.entity_name(*center)) +
        "\", then explain how every other entity relates to it. Keep every fact and add "
        "nothing else.\n\n" +
        render_triples(b, g);
    try {
      auto reply = llm->complete(CompletionRequest{request, std::nullopt});
      if (!reply.text.empty()) {
        out.text = std::move(reply.text);
        out.used_llm = true;
        return out;
      }
      spdlog::warn("graph description: empty LLM reply, using template mode");
    } catch (const Error& e) {
      spdlog::warn("graph description: LLM rewrite failed ({}), using template mode", e.what());
    }
    out.llm_failed = true;
  }
  out.text = template_description(b, g, verbalizer);
  return out;
}

std::string render_knowledge(const KnowledgeBundle& b, const KnowledgeGraph& g, TemplateId t,
                             LlmGateway* llm) {
  switch (t) {
    case TemplateId::kTriples:
      return render_triples(b, g);
    case TemplateId::kSentences:
      return render_sentences(b, g);
    case TemplateId::kGraphDescription:
      return render_graph_description(b, g, llm).text;
  }
  return {};
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

RenderedPrompt assemble_prompt(const QuestionContext& q, std::string_view knowledge_text,
                               TemplateId t) {
  if (q.choices.empty()) throw ConfigError("question " + q.id + " has no choices");
  std::string text;
  if (!knowledge_text.empty()) {
    text += kBackgroundHeader;
    text += '\n';
    text += knowledge_text;
    text += "\n\n";
  }
  text += "Question: ";
  text += q.question_text;
  text += '\n';
  for (const auto& c : q.choices) {
    text += '(';
    text += c.label;
    text += ") ";
    text += c.text;
    text += '\n';
  }
  text += kAnswerInstruction;
  RenderedPrompt p;
  p.token_estimate = estimate_tokens(text);
  p.knowledge_tokens = knowledge_text.empty() ? 0 : estimate_tokens(knowledge_text);
  p.text = std::move(text);
  p.template_id = t;
  return p;
}

}  // namespace knowgpt
