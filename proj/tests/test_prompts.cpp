#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace tabeae;

TEST(Prompts, MarkupBecomesMentions) {
  const auto p = make_prompt("Life.Die", "{Victim} died at {Place}");
  EXPECT_EQ(p.text, "Victim died at Place");
  ASSERT_EQ(p.role_mentions.size(), 2u);
  EXPECT_EQ(p.text.substr(p.role_mentions[1].char_start, p.role_mentions[1].char_end - p.role_mentions[1].char_start),
            "Place");
  EXPECT_EQ(p.role_set(), (std::vector<std::string>{"Victim", "Place"}));
}

TEST(Prompts, RepeatedRoleKeepsEveryMention) {
  const auto p = make_prompt("Life.Die", "{Victim} ( and {Victim} ) died");
  ASSERT_EQ(p.role_mentions.size(), 2u);
  EXPECT_EQ(p.role_set().size(), 1u);
}

TEST(Prompts, BadMarkupRejected) {
  EXPECT_THROW(make_prompt("X", "{Victim died"), DataError);
  EXPECT_THROW(make_prompt("X", "{} died"), DataError);
}

TEST(Prompts, RegistryLookupAndErrors) {
  auto r = fixture::life_registry();
  EXPECT_TRUE(r.contains("Life.Die"));
  EXPECT_EQ(r.find("Nope"), nullptr);
  try {
    r.at("Nope.Type");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("Nope.Type"), std::string::npos);
  }
  EXPECT_THROW(r.add(make_prompt("Life.Die", "{X}")), DataError);
}

TEST(Prompts, JsonlRoundTrip) {
  auto r = fixture::life_registry();
  r.set_version("t-1");
  const auto back = PromptRegistry::from_jsonl(r.to_jsonl());
  EXPECT_EQ(back.version(), "t-1");
  ASSERT_EQ(back.size(), r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(back.prompts()[i].text, r.prompts()[i].text);
    EXPECT_EQ(back.prompts()[i].role_mentions.size(), r.prompts()[i].role_mentions.size());
  }
}

TEST(Prompts, JsonlRejectsMisalignedMention) {
  EXPECT_THROW(PromptRegistry::from_jsonl(
                   R"({"type":"A","prompt":"x y","role_mentions":[{"role":"R","char_start":1,"char_end":9}]})"),
               DataError);
}

TEST(Prompts, BareRolePromptJoinsRoleNames) {
  const auto p = bare_role_prompt(make_prompt("Life.Die", "{Victim} ( and {Victim} ) died at {Place}"));
  EXPECT_EQ(p.text, "Victim Victim Place");
  EXPECT_EQ(p.role_mentions.size(), 3u);
}

TEST(Prompts, ShippedRegistriesLoad) {
  const auto mlee = PromptRegistry::from_file(std::string(TABEAE_DATA_DIR) + "/prompts/mlee.jsonl");
  const auto& ge = mlee.at("Gene_expression");
  EXPECT_EQ(ge.text, "expression of Gene and Gene ( and Gene )");
  int genes = 0;
  for (const auto& m : ge.role_mentions) genes += ge.text.substr(m.char_start, m.char_end - m.char_start) == "Gene";
  EXPECT_EQ(genes, 3);
  const auto synth = PromptRegistry::from_file(std::string(TABEAE_DATA_DIR) + "/prompts/synth.jsonl");
  EXPECT_EQ(synth.to_jsonl(), default_synth_schema().to_jsonl());
}
