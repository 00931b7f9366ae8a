#pragma once

// Slotted table construction.
//
// The table is laid out as
//   [column header | trigger_1 slots_1 | trigger_2 slots_2 | ...]
// where the column header concatenates one prompt per distinct event type and
// every role mention in a prompt is a column. Row i holds the tokens of the
// i-th trigger followed by one slot per role mention of its event's prompt.

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tabeae/autograd.hpp"
#include "tabeae/corpus.hpp"
#include "tabeae/error.hpp"
#include "tabeae/marking.hpp"
#include "tabeae/prompts.hpp"
#include "tabeae/tokenizer.hpp"

namespace tabeae {

// Prompt tokenized for the header. Mention ranges are relative to the prompt.
struct HeaderPrompt {
  std::string event_type;
  std::vector<std::string> tokens;
  std::vector<int> ids;
  std::vector<std::string> mention_roles;
  std::vector<std::pair<int, int>> mention_tokens;

  int length() const { return static_cast<int>(tokens.size()); }
  bool operator==(const HeaderPrompt&) const = default;
};

struct Column {
  std::string role;
  int prompt = 0;
  int begin = 0;  // absolute header positions [begin, end)
  int end = 0;

  bool operator==(const Column&) const = default;
};

struct ColumnHeader {
  std::vector<HeaderPrompt> prompts;
  std::vector<int> prompt_offset;
  std::vector<Column> columns;
  int length = 0;

  int prompt_index(const std::string& type) const {
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (prompts[i].event_type == type) return static_cast<int>(i);
    }
    throw Error("event type '" + type + "' has no prompt in the column header");
  }

  // Columns owned by a prompt, in prompt order.
  std::vector<int> columns_of(int prompt) const {
    std::vector<int> out;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c].prompt == prompt) out.push_back(static_cast<int>(c));
    }
    return out;
  }

  bool operator==(const ColumnHeader&) const = default;
};

enum class CellKind { kHeaderRole, kHeaderOther, kTrigger, kSlot };

struct CellInfo {
  CellKind kind = CellKind::kHeaderOther;
  int column = -1;  // header-role and slot cells
  int row = -1;     // trigger and slot cells
  int prompt = -1;  // header cells

  bool operator==(const CellInfo&) const = default;
};

struct SlotCell {
  std::string role;
  int column = 0;
  int event_row = 0;
  int position = 0;  // table position

  bool operator==(const SlotCell&) const = default;
};

struct TableRow {
  int event_index = 0;
  std::string event_type;
  int trigger_ordinal = 0;
  std::vector<int> trigger_text_positions;  // positions in the marked text
  int trigger_begin = 0;                    // table positions [begin, end)
  int trigger_end = 0;
  std::vector<SlotCell> slots;

  bool operator==(const TableRow&) const = default;
};

struct SlottedTable {
  ColumnHeader header;
  std::vector<TableRow> rows;
  std::vector<CellInfo> layout;
  // Vocabulary id at each table position; slots have none (-1).
  std::vector<int> token_ids;

  int length() const { return static_cast<int>(layout.size()); }

  int slot_count() const {
    int n = 0;
    for (const auto& r : rows) n += static_cast<int>(r.slots.size());
    return n;
  }

  std::vector<int> slot_positions() const {
    std::vector<int> out;
    for (const auto& r : rows) {
      for (const auto& s : r.slots) out.push_back(s.position);
    }
    return out;
  }

  bool operator==(const SlottedTable&) const = default;
};

// Tokenizes a prompt and maps its role mentions onto token ranges. Mentions
// must start and end on word boundaries.
inline HeaderPrompt tokenize_prompt(const PromptTemplate& p, const Tokenizer& tokenizer) {
  HeaderPrompt out;
  out.event_type = p.event_type;
  std::vector<std::pair<std::size_t, std::size_t>> word_chars;
  std::vector<std::pair<int, int>> word_tokens;
  std::size_t i = 0;
  const auto& text = p.text;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      const int first = out.length();
      for (const auto& piece : tokenizer.pieces(std::string_view(text).substr(i, j - i))) {
        out.tokens.push_back(piece);
        out.ids.push_back(tokenizer.vocab().id(piece));
      }
      word_chars.emplace_back(i, j);
      word_tokens.emplace_back(first, out.length());
    }
    i = j;
  }
  for (const auto& m : p.role_mentions) {
    int first = -1;
    int last = -1;
    for (std::size_t w = 0; w < word_chars.size(); ++w) {
      if (word_chars[w].first == m.char_start) first = word_tokens[w].first;
      if (word_chars[w].second == m.char_end) last = word_tokens[w].second;
    }
    if (first < 0 || last <= first) {
      throw DataError("prompt '" + p.event_type + "': role mention '" + m.role +
                      "' does not align with word boundaries");
    }
    out.mention_roles.push_back(m.role);
    out.mention_tokens.emplace_back(first, last);
  }
  return out;
}

struct TableOptions {
  bool use_prompts = true;  // false: header is the bare role names
};

// Concatenates one prompt per distinct event type, in the given order.
inline ColumnHeader build_column_header(const std::vector<std::string>& event_types, const PromptRegistry& registry,
                                        const Tokenizer& tokenizer, const TableOptions& opt = {}) {
  ColumnHeader h;
  for (const auto& type : event_types) {
    bool dup = false;
    for (const auto& p : h.prompts) dup = dup || p.event_type == type;
    if (dup) continue;
    const auto& prompt = registry.at(type);
    auto hp = tokenize_prompt(opt.use_prompts ? prompt : bare_role_prompt(prompt), tokenizer);
    const int pi = static_cast<int>(h.prompts.size());
    h.prompt_offset.push_back(h.length);
    for (std::size_t m = 0; m < hp.mention_roles.size(); ++m) {
      h.columns.push_back({hp.mention_roles[m], pi, h.length + hp.mention_tokens[m].first,
                           h.length + hp.mention_tokens[m].second});
    }
    h.length += hp.length();
    h.prompts.push_back(std::move(hp));
  }
  return h;
}

struct RowSpec {
  int event_index = 0;
  std::string event_type;
  int trigger_ordinal = 0;
  std::vector<int> trigger_text_positions;
  std::vector<int> trigger_ids;
};

// Lays out header and rows and fills the per-position layout.
inline SlottedTable assemble_table(ColumnHeader header, const std::vector<RowSpec>& rows) {
  SlottedTable t;
  t.header = std::move(header);
  const auto& h = t.header;
  t.layout.resize(static_cast<std::size_t>(h.length));
  t.token_ids.resize(static_cast<std::size_t>(h.length));
  for (std::size_t p = 0; p < h.prompts.size(); ++p) {
    for (int k = 0; k < h.prompts[p].length(); ++k) {
      const auto pos = static_cast<std::size_t>(h.prompt_offset[p] + k);
      t.layout[pos] = {CellKind::kHeaderOther, -1, -1, static_cast<int>(p)};
      t.token_ids[pos] = h.prompts[p].ids[static_cast<std::size_t>(k)];
    }
  }
  for (std::size_t c = 0; c < h.columns.size(); ++c) {
    for (int pos = h.columns[c].begin; pos < h.columns[c].end; ++pos) {
      auto& cell = t.layout[static_cast<std::size_t>(pos)];
      cell.kind = CellKind::kHeaderRole;
      cell.column = static_cast<int>(c);
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& spec = rows[r];
    if (spec.trigger_text_positions.empty()) throw Error("table row without trigger tokens");
    const int ri = static_cast<int>(r);
    TableRow row;
    row.event_index = spec.event_index;
    row.event_type = spec.event_type;
    row.trigger_ordinal = spec.trigger_ordinal;
    row.trigger_text_positions = spec.trigger_text_positions;
    row.trigger_begin = t.length();
    for (std::size_t k = 0; k < spec.trigger_text_positions.size(); ++k) {
      t.layout.push_back({CellKind::kTrigger, -1, ri, -1});
      t.token_ids.push_back(k < spec.trigger_ids.size() ? spec.trigger_ids[k] : -1);
    }
    row.trigger_end = t.length();
    for (int c : h.columns_of(h.prompt_index(spec.event_type))) {
      row.slots.push_back({h.columns[static_cast<std::size_t>(c)].role, c, ri, t.length()});
      t.layout.push_back({CellKind::kSlot, c, ri, -1});
      t.token_ids.push_back(-1);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Selected events in trigger order (ties by event index).
inline std::vector<int> events_in_trigger_order(const EAEInstance& inst, std::vector<int> events) {
  std::stable_sort(events.begin(), events.end(), [&](int a, int b) {
    const auto& ta = inst.events[static_cast<std::size_t>(a)].trigger;
    const auto& tb = inst.events[static_cast<std::size_t>(b)].trigger;
    return ta.start < tb.start || (ta.start == tb.start && a < b);
  });
  return events;
}

inline SlottedTable build_table(const EAEInstance& inst, const MarkedText& marked, const std::vector<int>& events,
                                const PromptRegistry& registry, const Tokenizer& tokenizer,
                                const TableOptions& opt = {}) {
  const auto order = events_in_trigger_order(inst, events);
  std::vector<std::string> types;
  std::vector<RowSpec> rows;
  for (int e : order) {
    const auto& ev = inst.events[static_cast<std::size_t>(e)];
    const auto& prompt = registry.at(ev.event_type);
    for (const auto& arg : ev.arguments) {
      if (!prompt.has_role(arg.role)) {
        throw DataError("doc '" + inst.doc_id + "': role '" + arg.role + "' has no column in the prompt of '" +
                        ev.event_type + "'");
      }
    }
    auto it = marked.event_ordinal.find(e);
    if (it == marked.event_ordinal.end()) {
      throw Error("doc '" + inst.doc_id + "': event " + std::to_string(e) + " is not marked in the text");
    }
    types.push_back(ev.event_type);
    RowSpec spec{e, ev.event_type, it->second, marked.trigger_positions(it->second), {}};
    for (int p : spec.trigger_text_positions) spec.trigger_ids.push_back(marked.ids[static_cast<std::size_t>(p)]);
    rows.push_back(std::move(spec));
  }
  return assemble_table(build_column_header(types, registry, tokenizer, opt), rows);
}

// ---------------------------------------------------------------------------
// Initial table representation.

enum class Provenance { kHeaderEncoding, kTriggerCopy, kSlotAverage };

struct TableEmbedding {
  ag::Var matrix;
  std::vector<Provenance> provenance;
};

// Row recipe over the stacked source [header encodings ; text encodings]:
// header rows copy themselves, trigger rows copy the trigger's text encoding,
// slot rows average (mean of role-mention tokens) with (mean of the trigger's
// two marker tokens).
inline std::pair<ag::RowRecipe, std::vector<Provenance>> table_recipe(const SlottedTable& t,
                                                                      const MarkedText& marked) {
  ag::RowRecipe recipe(static_cast<std::size_t>(t.length()));
  std::vector<Provenance> prov(static_cast<std::size_t>(t.length()));
  const int text0 = t.header.length;
  for (int p = 0; p < t.header.length; ++p) {
    recipe[static_cast<std::size_t>(p)] = {{p, 1.0}};
    prov[static_cast<std::size_t>(p)] = Provenance::kHeaderEncoding;
  }
  for (const auto& row : t.rows) {
    for (std::size_t k = 0; k < row.trigger_text_positions.size(); ++k) {
      const auto pos = static_cast<std::size_t>(row.trigger_begin) + k;
      recipe[pos] = {{text0 + row.trigger_text_positions[k], 1.0}};
      prov[pos] = Provenance::kTriggerCopy;
    }
    const auto [open, close] = marked.marker_positions.at(static_cast<std::size_t>(row.trigger_ordinal - 1));
    for (const auto& slot : row.slots) {
      const auto& col = t.header.columns[static_cast<std::size_t>(slot.column)];
      auto& r = recipe[static_cast<std::size_t>(slot.position)];
      const double wr = 0.5 / static_cast<double>(col.end - col.begin);
      for (int p = col.begin; p < col.end; ++p) r.emplace_back(p, wr);
      r.emplace_back(text0 + open, 0.25);
      r.emplace_back(text0 + close, 0.25);
      prov[static_cast<std::size_t>(slot.position)] = Provenance::kSlotAverage;
    }
  }
  return {std::move(recipe), std::move(prov)};
}

// prompt_encodings[j] is the encoder output for header prompt j.
inline TableEmbedding init_table_embeddings(const SlottedTable& t, const std::vector<ag::Var>& prompt_encodings,
                                            const ag::Var& text_encoding, const MarkedText& marked) {
  if (prompt_encodings.size() != t.header.prompts.size()) {
    throw ShapeError("init_table_embeddings: expected " + std::to_string(t.header.prompts.size()) +
                     " prompt encodings, got " + std::to_string(prompt_encodings.size()));
  }
  for (std::size_t j = 0; j < prompt_encodings.size(); ++j) {
    if (prompt_encodings[j].cols() != text_encoding.cols()) {
      throw ShapeError("init_table_embeddings: prompt encoding width " + std::to_string(prompt_encodings[j].cols()) +
                       " differs from text encoding width " + std::to_string(text_encoding.cols()));
    }
    if (prompt_encodings[j].rows() != t.header.prompts[j].length()) {
      throw ShapeError("init_table_embeddings: prompt encoding length mismatch");
    }
  }
  if (text_encoding.rows() != marked.length()) throw ShapeError("init_table_embeddings: text encoding length mismatch");
  std::vector<ag::Var> parts = prompt_encodings;
  parts.push_back(text_encoding);
  auto [recipe, prov] = table_recipe(t, marked);
  return {ag::combine_rows(ag::concat_rows(parts), recipe), std::move(prov)};
}

}  // namespace tabeae
