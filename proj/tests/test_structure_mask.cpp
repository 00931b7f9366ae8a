#include <gtest/gtest.h>

#include "support.hpp"

using namespace tabeae;

namespace {

void expect_matches_oracle(const SlottedTable& t, bool symmetric = false) {
  const auto m = build_structure_mask(t, {symmetric});
  ASSERT_EQ(m.size, t.length());
  for (int q = 0; q < t.length(); ++q) {
    for (int k = 0; k < t.length(); ++k) {
      ASSERT_EQ(m.at(q, k), fixture::mask_rule(t, q, k, symmetric)) << "q=" << q << " k=" << k;
    }
  }
}

SlottedTable one_event_one_role() {
  PromptRegistry reg;
  reg.add(make_prompt("Life.Die", "the {Victim} died here"));
  const auto inst = fixture::instance("m", "he died", {fixture::event(1, 2, "Life.Die")});
  const auto tok = fixture::tokenizer_for({inst}, reg, 100);
  return build_table(inst, mark_triggers(inst, {0}, 250, tok), {0}, reg, tok);
}

}  // namespace

TEST(StructureMask, OneEventOneRole) {
  const auto t = one_event_one_role();
  const auto m = build_structure_mask(t);
  const int H = t.header.length;  // the Victim died here
  ASSERT_EQ(H, 4);
  const int trig = H;
  const int slot = H + 1;
  for (int q = 0; q < H; ++q) {
    for (int k = 0; k < H; ++k) EXPECT_TRUE(m.at(q, k));
    EXPECT_TRUE(m.at(q, trig));
  }
  EXPECT_TRUE(m.at(slot, 1));
  EXPECT_TRUE(m.at(1, slot));
  EXPECT_TRUE(m.at(slot, trig));
  EXPECT_TRUE(m.at(trig, slot));
  EXPECT_FALSE(m.at(slot, 0));
  EXPECT_FALSE(m.at(0, slot));
  for (int k : {0, 1, 2, 3}) EXPECT_FALSE(m.at(trig, k));
  for (int p = 0; p < t.length(); ++p) EXPECT_TRUE(m.at(p, p));
  expect_matches_oracle(t);
}

TEST(StructureMask, HeaderOnlyTableIsAllTrue) {
  const auto reg = fixture::life_registry();
  const auto tok = fixture::tokenizer_for({}, reg, 100);
  const auto t = assemble_table(build_column_header({"Life.Die"}, reg, tok), {});
  const auto m = build_structure_mask(t);
  EXPECT_EQ(m, StructureMask::all_true(t.header.length));
}

TEST(StructureMask, SlotsOfDifferentRowsNeverMeet) {
  PromptRegistry reg;
  reg.add(make_prompt("A", "{R1} a"));
  reg.add(make_prompt("B", "{R2} b"));
  const auto inst = fixture::instance("x", "p q r s", {fixture::event(0, 1, "A"), fixture::event(2, 3, "B")});
  const auto tok = fixture::tokenizer_for({inst}, reg, 100);
  const auto t = build_table(inst, mark_triggers(inst, {0, 1}, 250, tok), {0, 1}, reg, tok);
  const auto m = build_structure_mask(t);
  const int s1 = t.rows[0].slots[0].position;
  const int s2 = t.rows[1].slots[0].position;
  EXPECT_FALSE(m.at(s1, s2));
  EXPECT_FALSE(m.at(s2, s1));
  EXPECT_FALSE(m.at(s1, t.rows[1].trigger_begin));
  expect_matches_oracle(t);
}

TEST(StructureMask, SameRowDifferentRolesDoNotAttend) {
  const auto env_inst = fixture::davies();
  const auto reg = fixture::life_registry();
  const auto tok = fixture::tokenizer_for({env_inst}, reg, 100);
  const auto t = build_table(env_inst, mark_triggers(env_inst, {0}, 250, tok), {0}, reg, tok);
  const auto m = build_structure_mask(t);
  const auto& slots = t.rows[0].slots;
  EXPECT_FALSE(m.at(slots[2].position, slots[3].position));  // Place vs Killer
  EXPECT_TRUE(m.at(slots[2].position, t.rows[0].trigger_begin));
}

TEST(StructureMask, GroupsAreSymmetricAndHeaderToTriggerDirected) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    const auto rt = fixture::random_table(rng);
    const auto m = build_structure_mask(rt.table);
    for (int q = 0; q < m.size; ++q) {
      for (int k = 0; k < m.size; ++k) {
        const bool qh = q < rt.table.header.length;
        const bool kh = k < rt.table.header.length;
        if (qh == kh) {
          EXPECT_EQ(m.at(q, k), m.at(k, q));
        }
      }
    }
    for (const auto& row : rt.table.rows) {
      bool any = false;
      for (int h = 0; h < rt.table.header.length; ++h) {
        EXPECT_TRUE(m.at(h, row.trigger_begin));
        any = any || m.at(row.trigger_begin, h);
      }
      EXPECT_FALSE(any);
    }
  }
}

TEST(StructureMask, RandomTablesMatchRuleOracle) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    const auto rt = fixture::random_table(rng);
    expect_matches_oracle(rt.table, false);
    expect_matches_oracle(rt.table, true);
  }
}

TEST(StructureMask, LayoutGapRejected) {
  auto t = one_event_one_role();
  t.layout.back() = CellInfo{};
  EXPECT_THROW(build_structure_mask(t), Error);
  auto u = one_event_one_role();
  u.token_ids.pop_back();
  EXPECT_THROW(build_structure_mask(u), Error);
}

TEST(StructureMask, PackRoundTrip) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto m = build_structure_mask(fixture::random_table(rng).table);
    const auto bytes = pack_mask(m);
    EXPECT_EQ(bytes.size(), 4 + (static_cast<std::size_t>(m.size) * m.size + 7) / 8);
    EXPECT_EQ(unpack_mask(bytes), m);
  }
  // 2x2 identity: bits 0 and 3 set.
  StructureMask eye{2, {1, 0, 0, 1}};
  EXPECT_EQ(pack_mask(eye), (std::vector<std::uint8_t>{2, 0, 0, 0, 0x09}));
  EXPECT_THROW(unpack_mask({2, 0, 0}), DataError);
}
