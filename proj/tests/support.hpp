#pragma once

// Shared fixtures and brute-force oracles for the test suites. Nothing here
// calls into the code under test for the value it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tabeae/tabeae.hpp"

namespace fixture {

using namespace tabeae;

// Two event types with 5 and 3 role mentions.
inline PromptRegistry life_registry() {
  PromptRegistry r;
  r.add(make_prompt("Life.Die", "{Victim} ( and {Victim} ) died at {Place} killed by {Killer} with {Instrument}"));
  r.add(make_prompt("Life.Injure", "{Victim} injured by {Injurer} with {Instrument}"));
  r.add(make_prompt("Conflict.Attack", "{Attacker} attacked {Target} at {Place}"));
  r.add(make_prompt("Contact.Meet", "{Entity} met {Entity}"));
  r.add(make_prompt("Misc.Bare", "something happened"));
  return r;
}

inline EventRecord event(int ts, int te, std::string type, std::vector<Argument> args = {}) {
  return {{ts, te}, std::move(type), std::move(args)};
}

inline EAEInstance instance(std::string doc, std::string text, std::vector<EventRecord> events) {
  return {std::move(doc), split_whitespace(text), std::move(events)};
}

// "Davies was killed and his friend injured in Baghdad by a bomb"
//   0      1   2      3   4   5      6       7  8       9  10 11
inline EAEInstance davies() {
  return instance("davies", "Davies was killed and his friend injured in Baghdad by a bomb",
                  {event(2, 3, "Life.Die", {{"Victim", {0, 1}}, {"Place", {8, 9}}, {"Instrument", {11, 12}}}),
                   event(6, 7, "Life.Injure", {{"Victim", {0, 1}}, {"Victim", {4, 6}}, {"Instrument", {11, 12}}})});
}

inline Tokenizer tokenizer_for(const std::vector<EAEInstance>& corpus, const PromptRegistry& reg,
                               int piece_len = 4) {
  return build_tokenizer(corpus, reg, piece_len, 8);
}

inline InputContext context(const PromptRegistry& reg, const Tokenizer& tok, AblationConfig ab = {}) {
  InputContext ctx;
  ctx.registry = &reg;
  ctx.tokenizer = &tok;
  ctx.window = 250;
  ctx.max_encoder_len = 256;
  ctx.max_decoder_len = 256;
  ctx.max_span_len = 10;
  ctx.ablation = ab;
  return ctx;
}

inline ModelConfig tiny_model(int vocab, std::uint64_t seed = 7) {
  ModelConfig c = ModelConfig::desk(vocab);
  c.hidden = 16;
  c.heads = 2;
  c.ff = 32;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Random tables: up to 4 events over up to 6 distinct roles.

struct RandomTable {
  PromptRegistry registry;
  EAEInstance inst;
  Tokenizer tokenizer;
  MarkedText marked;
  SlottedTable table;
};

inline RandomTable random_table(std::mt19937_64& rng) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  RandomTable out;
  const int n_types = uni(1, 3);
  const int n_roles = uni(1, 6);
  for (int t = 0; t < n_types; ++t) {
    std::string markup = "ev" + std::to_string(t);
    const int mentions = uni(0, 4);
    for (int m = 0; m < mentions; ++m) {
      markup += " {R" + std::to_string(uni(0, n_roles - 1)) + "}";
      if (uni(0, 1)) markup += " of longfillerword";
    }
    out.registry.add(make_prompt("T" + std::to_string(t), markup));
  }
  const int n_events = uni(1, 4);
  std::vector<std::string> words;
  for (int i = 0; i < 6 + 4 * n_events; ++i) words.push_back("w" + std::to_string(uni(0, 30)) + (uni(0, 1) ? "xxxxx" : ""));
  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  out.inst.doc_id = "rand";
  out.inst.text = words;
  std::vector<WordSpan> used;
  for (int e = 0; e < n_events; ++e) {
    WordSpan trig;
    if (!used.empty() && uni(0, 3) == 0) {
      trig = used[static_cast<std::size_t>(uni(0, static_cast<int>(used.size()) - 1))];  // shared trigger
    } else {
      for (;;) {
        const int s = uni(0, static_cast<int>(words.size()) - 2);
        trig = {s, s + uni(1, 2)};
        bool clash = false;
        for (const auto& u : used) clash = clash || (trig.start < u.end && u.start < trig.end);
        if (!clash) break;
      }
      used.push_back(trig);
    }
    out.inst.events.push_back({trig, "T" + std::to_string(uni(0, n_types - 1)), {}});
  }
  out.tokenizer = build_tokenizer({out.inst}, out.registry, 3, 8);
  std::vector<int> all(static_cast<std::size_t>(n_events));
  for (int e = 0; e < n_events; ++e) all[static_cast<std::size_t>(e)] = e;
  out.marked = mark_triggers(out.inst, all, 250, out.tokenizer);
  out.table = build_table(out.inst, out.marked, all, out.registry, out.tokenizer);
  return out;
}

// Literal per-pair evaluation of the four attention rules from the table's
// header, column and row descriptions (not from its layout vector).
inline bool mask_rule(const SlottedTable& t, int q, int k, bool symmetric_header_trigger = false) {
  auto in_header = [&](int p) { return p >= 0 && p < t.header.length; };
  auto in_trigger_of = [&](int p, std::size_t r) { return p >= t.rows[r].trigger_begin && p < t.rows[r].trigger_end; };
  auto is_trigger = [&](int p) {
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (in_trigger_of(p, r)) return true;
    }
    return false;
  };
  auto slot_of = [&](int p) -> const SlotCell* {
    for (const auto& row : t.rows) {
      for (const auto& s : row.slots) {
        if (s.position == p) return &s;
      }
    }
    return nullptr;
  };
  auto in_column = [&](int p, std::size_t c) {
    const auto& col = t.header.columns[c];
    if (p >= col.begin && p < col.end) return true;
    const auto* s = slot_of(p);
    return s != nullptr && s->column == static_cast<int>(c);
  };
  auto slot_in_row = [&](int p, std::size_t r) {
    const auto* s = slot_of(p);
    return s != nullptr && s->event_row == static_cast<int>(r);
  };
  if (in_header(q) && in_header(k)) return true;                                   // R1
  if (in_header(q) && is_trigger(k)) return true;                                  // R2
  if (symmetric_header_trigger && is_trigger(q) && in_header(k)) return true;
  for (std::size_t c = 0; c < t.header.columns.size(); ++c) {
    if (in_column(q, c) && in_column(k, c)) return true;                           // R3
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const bool tq = in_trigger_of(q, r), tk = in_trigger_of(k, r);                 // R4
    if ((tq && tk) || (tq && slot_in_row(k, r)) || (slot_in_row(q, r) && tk)) return true;
  }
  return false;
}

// Minimum total cost over all permutations.
inline double brute_force_assignment(const ag::Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return n == 0 ? 0.0 : best;
}

struct ScanResult {
  int start = 0;
  int end = 0;
  double score = 0.0;
};

// Scans every (l, m) pair, keeps the valid ones, and applies the tie-break
// on (l, m) lexicographic order after collecting all maxima.
inline ScanResult exhaustive_span(const std::vector<double>& ls, const std::vector<double>& le, int length,
                                  int max_span_len, const std::vector<std::uint8_t>& start_ok = {}) {
  std::vector<ScanResult> valid;
  for (int l = 0; l < length; ++l) {
    for (int m = 0; m < length; ++m) {
      const bool empty = l == 0 && m == 0;
      const bool ok = l >= 1 && m - l > 0 && m - l < max_span_len && (start_ok.empty() || start_ok[static_cast<std::size_t>(l)]);
      if (empty || ok) valid.push_back({l, m, ls[static_cast<std::size_t>(l)] + le[static_cast<std::size_t>(m)]});
    }
  }
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& v : valid) top = std::max(top, v.score);
  ScanResult best{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), top};
  for (const auto& v : valid) {
    if (v.score == top && std::make_pair(v.start, v.end) < std::make_pair(best.start, best.end)) best = v;
  }
  return best;
}

// Central finite difference of f with respect to every entry of m.
inline ag::Matrix numeric_gradient(ag::Matrix& m, const std::function<double()>& f, double h = 1e-6) {
  ag::Matrix g(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double keep = m.data()[i];
    m.data()[i] = keep + h;
    const double up = f();
    m.data()[i] = keep - h;
    const double down = f();
    m.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_relative_error(const ag::Matrix& a, const ag::Matrix& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), 1e-3});
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / den);
  }
  return worst;
}

}  // namespace fixture
