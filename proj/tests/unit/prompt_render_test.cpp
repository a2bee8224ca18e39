#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "knowgpt/prompt_render.hpp"
#include "support/fixtures.hpp"

namespace knowgpt {
namespace {

using testing::graph_of;

const std::vector<testing::TripleSpec> kGoogle{{"Sergey_Brin", "founder_of", "Google"},
                                               {"Sundar_Pichai", "ceo_of", "Google"},
                                               {"Google", "is_a", "High-tech Company"}};

KnowledgeBundle all_of(const KnowledgeGraph& g) {
  return KnowledgeBundle::from(g.triples(), Extractor::kSubgraph);
}

TEST(RenderTriples, GoogleBundle) {
  auto g = graph_of(kGoogle);
  EXPECT_EQ(render_triples(all_of(g), g),
            "(Sergey_Brin, founder_of, Google), (Sundar_Pichai, ceo_of, Google), "
            "(Google, is_a, High-tech Company)");
}

TEST(RenderTriples, EmptyAndSingle) {
  auto g = graph_of({{"a", "r", "b"}});
  EXPECT_EQ(render_triples(KnowledgeBundle{}, g), "");
  EXPECT_EQ(render_triples(all_of(g), g), "(a, r, b)");
}

TEST(RenderTriples, ParsesBackToInput) {
  auto g = graph_of(testing::random_triples(30, 80, 5, 4));
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Triple> pick;
    for (int i = 0; i < 6; ++i) pick.push_back(g.triples()[rng() % g.triple_count()]);
    auto b = KnowledgeBundle::from(pick, Extractor::kRl);
    const auto text = render_triples(b, g);
    std::regex item(R"(\(([^,()]+), ([^,()]+), ([^,()]+)\))");
    std::vector<Triple> back;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), item); it != std::sregex_iterator();
         ++it) {
      back.push_back({*g.find_entity((*it)[1].str()), *g.find_relation((*it)[2].str()),
                      *g.find_entity((*it)[3].str())});
    }
    EXPECT_EQ(back, b.triples);
  }
}

TEST(KnowledgeBundleTest, DeduplicatesKeepingFirst) {
  auto g = graph_of({{"a", "r", "b"}, {"b", "r", "c"}});
  const auto t0 = g.triples()[0];
  const auto t1 = g.triples()[1];
  auto b = KnowledgeBundle::from(std::vector<Triple>{t1, t0, t1}, Extractor::kRl);
  EXPECT_EQ(b.triples, (std::vector<Triple>{t1, t0}));
  EXPECT_EQ(b.origin, Extractor::kRl);
}

TEST(RenderSentences, PatternApplication) {
  auto g = graph_of({{"Google", "is_a", "High-tech_Company"}});
  EXPECT_EQ(render_sentences(all_of(g), g), "Google is a High-tech Company.");
}

TEST(RenderSentences, UnknownRelationFallback) {
  auto g = graph_of({{"a", "zorps", "b"}});
  EXPECT_EQ(render_sentences(all_of(g), g), "a is related to b via zorps.");
}

TEST(RenderSentences, TwoSentencesJoinedBySpace) {
  auto g = graph_of({{"wheel", "part_of", "car"}, {"car", "at_location", "garage"}});
  const auto s = render_sentences(all_of(g), g);
  EXPECT_EQ(s, "wheel is part of car. car is located at garage.");
  EXPECT_EQ(render_sentences(all_of(g), g), s);
}

TEST(RelationKey, ConceptNetSpellings) {
  EXPECT_EQ(relation_key("AtLocation"), "at_location");
  EXPECT_EQ(relation_key("/r/IsA"), "is_a");
  EXPECT_EQ(relation_key("part-of"), "part_of");
  EXPECT_TRUE(Verbalizer::builtin().pattern("/r/Causes").has_value());
}

TEST(GraphDescription, GoogleCenter) {
  auto g = graph_of(kGoogle);
  auto b = all_of(g);
  EXPECT_EQ(center_entity(b), g.find_entity("Google"));
  auto d = render_graph_description(b, g);
  EXPECT_EQ(d.text.rfind("Google stands central in the network.", 0), 0u) << d.text;
  EXPECT_FALSE(d.used_llm);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(render_graph_description(b, g).text, d.text);
}

TEST(GraphDescription, EmptyBundle) {
  auto g = graph_of({{"a", "r", "b"}});
  EXPECT_EQ(render_graph_description(KnowledgeBundle{}, g).text, "");
  EXPECT_FALSE(center_entity(KnowledgeBundle{}).has_value());
}

TEST(GraphDescription, TieGoesToLowerId) {
  auto g = graph_of({{"x", "r", "y"}});
  EXPECT_EQ(center_entity(all_of(g)), g.find_entity("x"));
}

TEST(GraphDescription, CentreClausesFirst) {
  auto g = graph_of({{"p", "r", "q"}, {"hub", "is_a", "a"}, {"hub", "is_a", "b"}});
  const auto text = render_graph_description(all_of(g), g).text;
  EXPECT_LT(text.find("hub is a b"), text.find("p "));
}

QuestionContext five_choices() {
  QuestionContext q;
  q.id = "q";
  q.question_text = "Where would you find a wheel?";
  for (const char* l : {"A", "B", "C", "D", "E"}) q.choices.push_back({l, std::string("opt") + l});
  return q;
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

TEST(AssemblePrompt, EmptyKnowledgeOmitsBackground) {
  auto p = assemble_prompt(five_choices(), "", TemplateId::kTriples);
  EXPECT_EQ(p.text.find(kBackgroundHeader), std::string::npos);
  EXPECT_EQ(p.knowledge_tokens, 0u);
  EXPECT_EQ(p.text.rfind("Question: Where would you find a wheel?", 0), 0u);
}

TEST(AssemblePrompt, FrameAndChoiceOrder) {
  auto q = five_choices();
  auto p = assemble_prompt(q, "(a, r, b)", TemplateId::kSentences);
  EXPECT_EQ(p.text.rfind(std::string(kBackgroundHeader), 0), 0u);
  std::size_t last = 0;
  for (const auto& c : q.choices) {
    const auto line = "(" + c.label + ") " + c.text;
    EXPECT_EQ(count_of(p.text, "(" + c.label + ")"), 1u);
    const auto pos = p.text.find(line);
    ASSERT_NE(pos, std::string::npos);
    EXPECT_GT(pos, last);
    last = pos;
  }
  EXPECT_EQ(count_of(p.text, q.question_text), 1u);
  EXPECT_GT(p.text.find(kAnswerInstruction), last);
  EXPECT_EQ(p.template_id, TemplateId::kSentences);
  EXPECT_EQ(p.token_estimate, estimate_tokens(p.text));
}

TEST(EstimateTokens, CeilOfQuarterBytes) {
  EXPECT_EQ(estimate_tokens(std::string(100, 'x')), 25u);
  EXPECT_EQ(estimate_tokens(std::string(101, 'x')), 26u);
  EXPECT_EQ(estimate_tokens(""), 0u);
}

}  // namespace
}  // namespace knowgpt
