#pragma once

// One model sample end to end: marked text + slotted table + structure mask
// in, span logits out; plus the training loss and the slot-wise decode.

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tabeae/autograd.hpp"
#include "tabeae/corpus.hpp"
#include "tabeae/marking.hpp"
#include "tabeae/model.hpp"
#include "tabeae/prompts.hpp"
#include "tabeae/span_select.hpp"
#include "tabeae/structure_mask.hpp"
#include "tabeae/table.hpp"
#include "tabeae/tokenizer.hpp"

namespace tabeae {

// Component switches for the ablation study. All on by default.
struct AblationConfig {
  bool saam = true;     // structure-aware attention mask (off: all-true mask)
  bool pet = true;      // pre-computed table encodings (off: token embeddings)
  bool prompts = true;  // prompt header (off: bare role names)
  bool symmetric_header_trigger = false;
  AssignmentCost assignment_cost = AssignmentCost::kLogit;

  bool operator==(const AblationConfig&) const = default;
};

struct InputContext {
  const PromptRegistry* registry = nullptr;
  const Tokenizer* tokenizer = nullptr;
  int window = 250;
  int max_encoder_len = 500;
  int max_decoder_len = 360;
  int max_span_len = 10;
  AblationConfig ablation;
};

struct ModelInput {
  int instance = 0;
  std::vector<int> events;  // table row order
  MarkedText marked;
  SlottedTable table;
  StructureMask mask;

  bool operator==(const ModelInput&) const = default;
};

inline ModelInput prepare_input(const EAEInstance& inst, int instance_index, const std::vector<int>& selected,
                                const InputContext& ctx) {
  ModelInput in;
  in.instance = instance_index;
  in.events = events_in_trigger_order(inst, selected);
  // Shrink the window until the marked text fits the encoder.
  int window = ctx.window;
  for (;;) {
    in.marked = mark_triggers(inst, selected, window, *ctx.tokenizer);
    if (in.marked.length() <= ctx.max_encoder_len) break;
    const int next = std::max(1, window * 9 / 10);
    if (next == window) {
      throw Error("doc '" + inst.doc_id + "': marked text does not fit the encoder length " +
                  std::to_string(ctx.max_encoder_len));
    }
    window = next;
  }
  in.table = build_table(inst, in.marked, in.events, *ctx.registry, *ctx.tokenizer, {ctx.ablation.prompts});
  if (in.table.length() > ctx.max_decoder_len) {
    throw Error("doc '" + inst.doc_id + "': slotted table of " + std::to_string(in.table.length()) +
                " positions exceeds the maximum decoder length " + std::to_string(ctx.max_decoder_len));
  }
  in.mask = ctx.ablation.saam ? build_structure_mask(in.table, {ctx.ablation.symmetric_header_trigger})
                              : StructureMask::all_true(in.table.length());
  return in;
}

struct ForwardResult {
  ag::Var text_encoding;  // E
  ag::Var text_states;    // H
  TableEmbedding table_embedding;
  ag::Var table_states;   // H_Tab
  ag::Var slot_states;    // H_S
  SpanLogits logits;      // slots x L
};

inline ForwardResult forward(const TabEAEModel& model, const ModelInput& in, const AblationConfig& ablation,
                             std::mt19937_64* rng = nullptr) {
  ForwardResult r;
  r.text_encoding = model.encode(in.marked.ids, rng);
  r.text_states = model.contextualize(r.text_encoding, rng);
  if (ablation.pet) {
    std::vector<ag::Var> prompts;
    for (const auto& p : in.table.header.prompts) prompts.push_back(model.encode(p.ids, rng));
    r.table_embedding = init_table_embeddings(in.table, prompts, r.text_encoding, in.marked);
  } else {
    std::vector<int> header_ids;
    for (const auto& p : in.table.header.prompts) header_ids.insert(header_ids.end(), p.ids.begin(), p.ids.end());
    std::vector<ag::Var> parts;
    if (!header_ids.empty()) parts.push_back(model.token_embeddings(header_ids));
    parts.push_back(model.token_embeddings(in.marked.ids));
    auto [recipe, prov] = table_recipe(in.table, in.marked);
    r.table_embedding = {ag::combine_rows(ag::concat_rows(parts), recipe), std::move(prov)};
  }
  r.table_states = model.decode_table(r.table_embedding.matrix, in.mask, r.text_encoding, rng);
  r.slot_states = ag::gather_rows(r.table_states, in.table.slot_positions());
  r.logits = span_logits(make_selectors(r.slot_states, model.w_start(), model.w_end()), r.text_states);
  return r;
}

// Golden spans of one event in subword coordinates of the marked text, per
// role. Arguments outside the window are dropped.
inline std::map<std::string, std::vector<std::pair<int, int>>> golden_subword_spans(const EventRecord& ev,
                                                                                     const MarkedText& marked) {
  std::map<std::string, std::vector<std::pair<int, int>>> out;
  for (const auto& arg : ev.arguments) {
    if (auto s = marked.to_subwords(arg.span)) out[arg.role].push_back(*s);
  }
  return out;
}

// Per-slot targets from the Hungarian assignment of every row.
inline std::vector<std::pair<int, int>> assign_targets(const EAEInstance& inst, const ModelInput& in,
                                                       const SpanLogits& logits, AssignmentCost cost) {
  std::vector<std::pair<int, int>> targets;
  int offset = 0;
  for (const auto& row : in.table.rows) {
    const int k = static_cast<int>(row.slots.size());
    std::vector<std::string> roles;
    for (const auto& s : row.slots) roles.push_back(s.role);
    const auto golden = golden_subword_spans(inst.events[static_cast<std::size_t>(row.event_index)], in.marked);
    const auto a = assign_event(roles, logits.start.value().middleRows(offset, k),
                                logits.end.value().middleRows(offset, k), golden, cost);
    targets.insert(targets.end(), a.targets.begin(), a.targets.end());
    offset += k;
  }
  return targets;
}

inline ag::Var sample_loss(const TabEAEModel& model, const EAEInstance& inst, const ModelInput& in,
                           const AblationConfig& ablation, std::mt19937_64* rng = nullptr) {
  const auto r = forward(model, in, ablation, rng);
  return bipartite_loss(r.logits, assign_targets(inst, in, r.logits, ablation.assignment_cost));
}

struct PredictedArgument {
  std::string role;
  WordSpan span;
  double score = 0.0;

  bool operator==(const PredictedArgument&) const = default;
};

struct EventPrediction {
  int event_index = 0;
  std::vector<PredictedArgument> arguments;

  bool operator==(const EventPrediction&) const = default;
};

// Best span per slot; empty spans are dropped.
inline std::vector<EventPrediction> decode(const ModelInput& in, const SpanLogits& logits, int max_span_len) {
  const int L = in.marked.length();
  std::vector<std::uint8_t> start_ok(static_cast<std::size_t>(L));
  for (int p = 0; p < L; ++p) start_ok[static_cast<std::size_t>(p)] = in.marked.is_text(p) ? 1 : 0;
  std::vector<EventPrediction> out;
  int k = 0;
  for (const auto& row : in.table.rows) {
    EventPrediction ep{row.event_index, {}};
    for (const auto& slot : row.slots) {
      const auto& ls = logits.start.value();
      const auto& le = logits.end.value();
      const auto best = select_span({ls.row(k).data(), static_cast<std::size_t>(L)},
                                    {le.row(k).data(), static_cast<std::size_t>(L)}, L, max_span_len, start_ok);
      ++k;
      if (best.empty()) continue;
      const auto words = in.marked.to_words(best.start, best.end);
      if (words.empty()) continue;
      ep.arguments.push_back({slot.role, words, best.score});
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace tabeae
