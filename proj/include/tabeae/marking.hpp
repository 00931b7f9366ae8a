#pragma once

// Trigger-aware input construction: window the text around the selected
// triggers, wrap each distinct trigger span in <T-i> ... </T-i> (i counts the
// order of occurrence in the text) and frame everything with <s> ... </s>.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tabeae/corpus.hpp"
#include "tabeae/error.hpp"
#include "tabeae/tokenizer.hpp"

namespace tabeae {

struct MarkedText {
  std::vector<std::string> tokens;
  std::vector<int> ids;
  // marker_positions[i - 1] = (position of <T-i>, position of </T-i>).
  std::vector<std::pair<int, int>> marker_positions;
  // Trigger ordinal (1-based) of each selected event, keyed by event index.
  std::map<int, int> event_ordinal;
  // Window in instance word coordinates.
  WordSpan window;
  // word_to_subword[w] = [first, last) subword positions of window word w.
  std::vector<std::pair<int, int>> word_to_subword;
  // Instance word index of each position, -1 for sentinels and markers.
  std::vector<int> subword_to_word;

  int length() const { return static_cast<int>(tokens.size()); }
  bool is_text(int pos) const { return subword_to_word[static_cast<std::size_t>(pos)] >= 0; }

  // Subword positions strictly between the markers of a trigger ordinal.
  std::vector<int> trigger_positions(int ordinal) const {
    const auto [open, close] = marker_positions.at(static_cast<std::size_t>(ordinal - 1));
    std::vector<int> out;
    for (int p = open + 1; p < close; ++p) out.push_back(p);
    return out;
  }

  // Converts a word span of the instance to a subword span [first, last) of
  // this text, or nullopt when it is not fully inside the window.
  std::optional<std::pair<int, int>> to_subwords(const WordSpan& span) const {
    if (span.start < window.start || span.end > window.end || span.empty()) return std::nullopt;
    const auto first = word_to_subword[static_cast<std::size_t>(span.start - window.start)].first;
    const auto last = word_to_subword[static_cast<std::size_t>(span.end - 1 - window.start)].second;
    return std::make_pair(first, last);
  }

  // Expands a subword span [first, last) to whole words; empty when the span
  // covers no text token.
  WordSpan to_words(int first, int last) const {
    int ws = -1;
    int we = -1;
    for (int p = std::max(first, 0); p < std::min(last, length()); ++p) {
      const int w = subword_to_word[static_cast<std::size_t>(p)];
      if (w < 0) continue;
      if (ws < 0) ws = w;
      we = w + 1;
    }
    if (ws < 0) return {0, 0};
    return {ws, we};
  }

  bool operator==(const MarkedText&) const = default;
};

// Chooses the word window: the whole text when it fits, otherwise `window`
// words centred on the midpoint of the trigger extent.
inline WordSpan choose_window(const EAEInstance& inst, const std::vector<int>& selected, int window) {
  const int n = static_cast<int>(inst.text.size());
  if (n <= window) return {0, n};
  int lo = n;
  int hi = 0;
  for (int e : selected) {
    lo = std::min(lo, inst.events[static_cast<std::size_t>(e)].trigger.start);
    hi = std::max(hi, inst.events[static_cast<std::size_t>(e)].trigger.end);
  }
  const int mid = (lo + hi) / 2;
  int start = std::clamp(mid - window / 2, 0, n - window);
  return {start, start + window};
}

inline MarkedText mark_triggers(const EAEInstance& inst, const std::vector<int>& selected, int window,
                                const Tokenizer& tokenizer) {
  if (selected.empty()) throw Error("doc '" + inst.doc_id + "': no events selected for marking");
  if (window <= 0) throw Error("context window must be positive");
  for (int e : selected) {
    if (e < 0 || e >= static_cast<int>(inst.events.size())) {
      throw Error("doc '" + inst.doc_id + "': selected event index " + std::to_string(e) + " out of range");
    }
  }

  MarkedText out;
  out.window = choose_window(inst, selected, window);
  for (int e : selected) {
    const auto& t = inst.events[static_cast<std::size_t>(e)].trigger;
    if (t.start < out.window.start || t.end > out.window.end) {
      throw Error("doc '" + inst.doc_id + "': trigger of event " + std::to_string(e) +
                  " falls outside the " + std::to_string(window) + "-word context window");
    }
  }

  // Distinct trigger spans in text order; shared spans get one ordinal.
  std::vector<WordSpan> spans;
  for (int e : selected) spans.push_back(inst.events[static_cast<std::size_t>(e)].trigger);
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].start < spans[i - 1].end) {
      throw Error("doc '" + inst.doc_id + "': selected triggers overlap without being identical");
    }
  }
  for (int e : selected) {
    const auto& t = inst.events[static_cast<std::size_t>(e)].trigger;
    const auto it = std::lower_bound(spans.begin(), spans.end(), t);
    out.event_ordinal[e] = static_cast<int>(it - spans.begin()) + 1;
  }

  const auto& vocab = tokenizer.vocab();
  auto push = [&](const std::string& tok, int id, int word) {
    out.tokens.push_back(tok);
    out.ids.push_back(id);
    out.subword_to_word.push_back(word);
  };
  out.marker_positions.resize(spans.size());
  push(std::string(kBos), vocab.bos_id(), -1);
  std::size_t next = 0;
  for (int w = out.window.start; w < out.window.end; ++w) {
    if (next < spans.size() && spans[next].start == w) {
      const int ord = static_cast<int>(next) + 1;
      out.marker_positions[next].first = out.length();
      push(open_marker(ord), vocab.open_marker_id(ord), -1);
    }
    const int first = out.length();
    for (const auto& piece : tokenizer.pieces(inst.text[static_cast<std::size_t>(w)])) {
      push(piece, vocab.id(piece), w);
    }
    out.word_to_subword.emplace_back(first, out.length());
    if (next < spans.size() && spans[next].end == w + 1) {
      const int ord = static_cast<int>(next) + 1;
      out.marker_positions[next].second = out.length();
      push(close_marker(ord), vocab.close_marker_id(ord), -1);
      ++next;
    }
  }
  push(std::string(kEos), vocab.eos_id(), -1);
  return out;
}

// Drops sentinels and markers, leaving the tokenized window.
inline std::vector<std::string> strip_markers(const MarkedText& m) {
  std::vector<std::string> out;
  for (int p = 0; p < m.length(); ++p) {
    if (m.is_text(p)) out.push_back(m.tokens[static_cast<std::size_t>(p)]);
  }
  return out;
}

}  // namespace tabeae
