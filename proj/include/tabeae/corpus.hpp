#pragma once

// EAE instances and corpus readers.
//
// An instance is one context (sentence or document window) with every event
// annotated in it. Spans are word offsets, start inclusive and end exclusive.

#include <algorithm>
#include <compare>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tabeae/error.hpp"
#include "tabeae/prompts.hpp"

namespace tabeae {

struct WordSpan {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  bool empty() const { return end <= start; }
  auto operator<=>(const WordSpan&) const = default;
};

struct Argument {
  std::string role;
  WordSpan span;

  auto operator<=>(const Argument&) const = default;
};

struct EventRecord {
  WordSpan trigger;
  std::string event_type;
  std::vector<Argument> arguments;

  bool operator==(const EventRecord&) const = default;
};

struct EAEInstance {
  std::string doc_id;
  std::vector<std::string> text;
  std::vector<EventRecord> events;

  bool operator==(const EAEInstance&) const = default;
};

enum class CorpusFormat { kAce05, kRams, kWikiEvents, kMlee, kNativeJsonl };

inline CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "ace05") return CorpusFormat::kAce05;
  if (name == "rams") return CorpusFormat::kRams;
  if (name == "wikievents") return CorpusFormat::kWikiEvents;
  if (name == "mlee") return CorpusFormat::kMlee;
  if (name == "native-jsonl" || name == "native") return CorpusFormat::kNativeJsonl;
  throw UsageError("unknown corpus format '" + std::string(name) +
                   "' (expected ace05|rams|wikievents|mlee|native-jsonl)");
}

namespace detail {

inline void check_span(const EAEInstance& inst, const WordSpan& s, const std::string& field) {
  const int n = static_cast<int>(inst.text.size());
  if (s.start < 0 || s.end <= s.start || s.end > n) {
    throw DataError("doc '" + inst.doc_id + "': " + field + " span [" + std::to_string(s.start) +
                    ", " + std::to_string(s.end) + ") is invalid for text of " +
                    std::to_string(n) + " words");
  }
}

}  // namespace detail

// Structural checks only; see validate_schema for registry checks.
inline void validate(const EAEInstance& inst) {
  if (inst.events.empty()) {
    throw DataError("doc '" + inst.doc_id + "': events: instance has no events");
  }
  for (std::size_t i = 0; i < inst.events.size(); ++i) {
    const auto& ev = inst.events[i];
    const auto where = "events[" + std::to_string(i) + "]";
    if (ev.event_type.empty()) {
      throw DataError("doc '" + inst.doc_id + "': " + where + ".type is empty");
    }
    detail::check_span(inst, ev.trigger, where + ".trigger");
    for (std::size_t a = 0; a < ev.arguments.size(); ++a) {
      const auto& arg = ev.arguments[a];
      const auto aw = where + ".args[" + std::to_string(a) + "]";
      if (arg.role.empty()) throw DataError("doc '" + inst.doc_id + "': " + aw + ".role is empty");
      detail::check_span(inst, arg.span, aw + ".span");
    }
  }
}

// Every event type must be registered and every argument role must belong to
// the role set of its event type.
inline void validate_schema(const EAEInstance& inst, const PromptRegistry& registry) {
  for (const auto& ev : inst.events) {
    const auto* prompt = registry.find(ev.event_type);
    if (prompt == nullptr) {
      throw DataError("doc '" + inst.doc_id + "': unknown event type '" + ev.event_type + "'");
    }
    for (const auto& arg : ev.arguments) {
      if (!prompt->has_role(arg.role)) {
        throw DataError("doc '" + inst.doc_id + "': role '" + arg.role +
                        "' is not in the role set of event type '" + ev.event_type + "'");
      }
    }
  }
}

inline std::size_t count_events(const std::vector<EAEInstance>& corpus) {
  std::size_t n = 0;
  for (const auto& inst : corpus) n += inst.events.size();
  return n;
}

inline std::size_t count_arguments(const std::vector<EAEInstance>& corpus) {
  std::size_t n = 0;
  for (const auto& inst : corpus) {
    for (const auto& ev : inst.events) n += ev.arguments.size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Native JSONL: {doc_id, tokens, events:[{trigger:[s,e], type,
// args:[{role, span:[s,e]}]}]}

inline nlohmann::json to_native_json(const EAEInstance& inst) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& ev : inst.events) {
    nlohmann::json args = nlohmann::json::array();
    for (const auto& a : ev.arguments) {
      args.push_back({{"role", a.role}, {"span", {a.span.start, a.span.end}}});
    }
    events.push_back({{"trigger", {ev.trigger.start, ev.trigger.end}},
                      {"type", ev.event_type},
                      {"args", args}});
  }
  return {{"doc_id", inst.doc_id}, {"tokens", inst.text}, {"events", events}};
}

inline EAEInstance parse_native_json(const nlohmann::json& j) {
  EAEInstance inst;
  inst.doc_id = j.contains("doc_id") && j["doc_id"].is_string() ? j["doc_id"].get<std::string>()
                                                                 : std::string("<unknown>");
  auto field = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("doc '" + inst.doc_id + "': field '" + name + "': " + e.what());
    }
  };
  auto span_of = [](const nlohmann::json& s) {
    if (!s.is_array() || s.size() != 2) throw DataError("span must be [start, end]");
    return WordSpan{s[0].get<int>(), s[1].get<int>()};
  };
  field("tokens", [&] { inst.text = j.at("tokens").get<std::vector<std::string>>(); });
  field("events", [&] {
    const auto& evs = j.at("events");
    for (std::size_t i = 0; i < evs.size(); ++i) {
      const auto& e = evs[i];
      EventRecord ev;
      const auto where = "events[" + std::to_string(i) + "]";
      try {
        ev.trigger = span_of(e.at("trigger"));
        ev.event_type = e.at("type").get<std::string>();
        if (e.contains("args")) {
          for (const auto& a : e.at("args")) {
            ev.arguments.push_back({a.at("role").get<std::string>(), span_of(a.at("span"))});
          }
        }
      } catch (const DataError& err) {
        throw DataError("doc '" + inst.doc_id + "': field '" + where + "': " + err.what());
      }
      inst.events.push_back(std::move(ev));
    }
  });
  validate(inst);
  return inst;
}

inline std::string to_native_jsonl(const std::vector<EAEInstance>& corpus) {
  std::string out;
  for (const auto& inst : corpus) {
    out += to_native_json(inst).dump();
    out += '\n';
  }
  return out;
}

inline void write_native_jsonl(const std::string& path, const std::vector<EAEInstance>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus to '" + path + "'");
  out << to_native_jsonl(corpus);
}

// ---------------------------------------------------------------------------
// RAMS aggregation. RAMS is annotated one event per record; records that share
// a context become one multi-event instance.

struct EventWiseRecord {
  std::string context_id;
  std::string doc_id;  // instance id; the context id when empty
  std::vector<std::string> text;
  EventRecord event;
};

inline std::vector<EAEInstance> aggregate_rams(const std::vector<EventWiseRecord>& records) {
  std::vector<EAEInstance> out;
  std::map<std::string, std::size_t> by_context;
  for (const auto& r : records) {
    if (r.context_id.empty()) throw DataError("event-wise record without context id");
    auto [it, inserted] = by_context.emplace(r.context_id, out.size());
    if (inserted) {
      out.push_back(EAEInstance{r.doc_id.empty() ? r.context_id : r.doc_id, r.text, {}});
    } else if (out[it->second].text != r.text) {
      throw DataError("doc '" + out[it->second].doc_id + "': conflicting texts under context id '" + r.context_id + "'");
    }
    out[it->second].events.push_back(r.event);
  }
  for (auto& inst : out) {
    std::stable_sort(inst.events.begin(), inst.events.end(),
                     [](const EventRecord& a, const EventRecord& b) {
                       return a.trigger.start < b.trigger.start;
                     });
    validate(inst);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Converters for the benchmarks' preprocessed files.

namespace detail {

inline std::vector<nlohmann::json> read_json_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<std::string> flatten_sentences(const nlohmann::json& sentences) {
  std::vector<std::string> words;
  for (const auto& s : sentences) {
    for (const auto& w : s) words.push_back(w.get<std::string>());
  }
  return words;
}

// DyGIE++ layout: doc-level token offsets, inclusive ends, one event list per
// sentence. Each sentence with at least one event becomes an instance.
inline std::vector<EAEInstance> convert_ace05(const nlohmann::json& doc) {
  std::vector<EAEInstance> out;
  const auto doc_key = doc.at("doc_key").get<std::string>();
  const auto& sentences = doc.at("sentences");
  const auto& events = doc.at("events");
  int offset = 0;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto words = sentences[s].get<std::vector<std::string>>();
    if (s < events.size() && !events[s].empty()) {
      EAEInstance inst{doc_key + "#" + std::to_string(s), words, {}};
      for (const auto& ev : events[s]) {
        EventRecord rec;
        const int trig = ev[0][0].get<int>() - offset;
        rec.trigger = {trig, trig + 1};
        rec.event_type = ev[0][1].get<std::string>();
        for (std::size_t a = 1; a < ev.size(); ++a) {
          rec.arguments.push_back({ev[a][2].get<std::string>(),
                                   {ev[a][0].get<int>() - offset, ev[a][1].get<int>() - offset + 1}});
        }
        inst.events.push_back(std::move(rec));
      }
      validate(inst);
      out.push_back(std::move(inst));
    }
    offset += static_cast<int>(words.size());
  }
  return out;
}

// RAMS role labels look like "evt089arg01victim".
inline std::string rams_role(const std::string& label) {
  static const std::regex prefix("^evt[0-9]+arg[0-9]+");
  return std::regex_replace(label, prefix, "");
}

// Records are grouped by an explicit "context_id" when present, otherwise by
// their context text.
inline EventWiseRecord convert_rams(const nlohmann::json& rec) {
  EventWiseRecord out;
  out.doc_id = rec.at("doc_key").get<std::string>();
  out.text = flatten_sentences(rec.at("sentences"));
  if (rec.contains("context_id")) {
    out.context_id = rec.at("context_id").get<std::string>();
  } else {
    for (const auto& w : out.text) out.context_id += w + '\x1f';
  }
  const auto& trig = rec.at("evt_triggers").at(0);
  out.event.trigger = {trig[0].get<int>(), trig[1].get<int>() + 1};
  out.event.event_type = trig[2][0][0].get<std::string>();
  for (const auto& link : rec.at("gold_evt_links")) {
    out.event.arguments.push_back(
        {rams_role(link[2].get<std::string>()), {link[1][0].get<int>(), link[1][1].get<int>() + 1}});
  }
  return out;
}

// WikiEvents layout (also used for the MLEE conversion): exclusive ends,
// arguments reference entity mentions (or, for nested events, other event
// mentions) by id. Coreference annotations are ignored.
inline EAEInstance convert_entity_linked(const nlohmann::json& doc) {
  EAEInstance inst;
  inst.doc_id = doc.at("doc_id").get<std::string>();
  inst.text = doc.at("tokens").get<std::vector<std::string>>();
  std::map<std::string, WordSpan> spans;
  if (doc.contains("entity_mentions")) {
    for (const auto& m : doc.at("entity_mentions")) {
      spans[m.at("id").get<std::string>()] = {m.at("start").get<int>(), m.at("end").get<int>()};
    }
  }
  for (const auto& ev : doc.at("event_mentions")) {
    if (ev.contains("id")) {
      const auto& t = ev.at("trigger");
      spans.emplace(ev.at("id").get<std::string>(),
                    WordSpan{t.at("start").get<int>(), t.at("end").get<int>()});
    }
  }
  for (const auto& ev : doc.at("event_mentions")) {
    EventRecord rec;
    const auto& t = ev.at("trigger");
    rec.trigger = {t.at("start").get<int>(), t.at("end").get<int>()};
    rec.event_type = ev.at("event_type").get<std::string>();
    for (const auto& a : ev.at("arguments")) {
      const auto id = a.at("entity_id").get<std::string>();
      auto it = spans.find(id);
      if (it == spans.end()) {
        throw DataError("doc '" + inst.doc_id + "': argument references unknown mention '" + id + "'");
      }
      rec.arguments.push_back({a.at("role").get<std::string>(), it->second});
    }
    inst.events.push_back(std::move(rec));
  }
  if (inst.events.empty()) return inst;
  validate(inst);
  return inst;
}

}  // namespace detail

// Loads and normalizes a corpus. When `registry` is given every event type and
// role is checked against it.
inline std::vector<EAEInstance> load_corpus(const std::string& path, CorpusFormat format,
                                            const PromptRegistry* registry = nullptr) {
  const auto records = detail::read_json_lines(path);
  std::vector<EAEInstance> out;
  auto guarded = [&](const nlohmann::json& rec, auto&& fn) {
    try {
      fn();
    } catch (const nlohmann::json::exception& e) {
      std::string id = "<unknown>";
      for (const char* key : {"doc_id", "doc_key"}) {
        if (rec.is_object() && rec.contains(key) && rec[key].is_string()) id = rec[key].get<std::string>();
      }
      throw DataError("doc '" + id + "': malformed record: " + e.what());
    }
  };
  switch (format) {
    case CorpusFormat::kNativeJsonl:
      for (const auto& r : records) out.push_back(parse_native_json(r));
      break;
    case CorpusFormat::kAce05:
      for (const auto& r : records) {
        guarded(r, [&] {
          for (auto& inst : detail::convert_ace05(r)) out.push_back(std::move(inst));
        });
      }
      break;
    case CorpusFormat::kRams: {
      std::vector<EventWiseRecord> evs;
      for (const auto& r : records) guarded(r, [&] { evs.push_back(detail::convert_rams(r)); });
      out = aggregate_rams(evs);
      break;
    }
    case CorpusFormat::kWikiEvents:
    case CorpusFormat::kMlee:
      for (const auto& r : records) {
        guarded(r, [&] {
          auto inst = detail::convert_entity_linked(r);
          if (!inst.events.empty()) out.push_back(std::move(inst));
        });
      }
      break;
  }
  if (registry != nullptr) {
    for (const auto& inst : out) validate_schema(inst, *registry);
  }
  return out;
}

}  // namespace tabeae
