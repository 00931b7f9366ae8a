#pragma once

// Strict argument identification (Arg-I) and classification (Arg-C) micro-F1,
// plus the breakdowns by event count, by argument overlap and by
// trigger-argument distance.
//
// Within one event a predicted argument is an Arg-I hit when its word span
// equals a gold span of the event and an Arg-C hit when the role matches too.
// Matching is one-to-one: k copies of a prediction can hit at most k gold
// arguments, the remaining copies are false positives.

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabeae/corpus.hpp"
#include "tabeae/error.hpp"
#include "tabeae/pipeline.hpp"

namespace tabeae {

struct InstancePrediction {
  std::string doc_id;
  std::vector<EventPrediction> events;

  bool operator==(const InstancePrediction&) const = default;
};

struct Counts {
  long tp = 0;
  long pred = 0;
  long gold = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    pred += o.pred;
    gold += o.gold;
    return *this;
  }
};

struct PRF {
  double p = 0.0;
  double r = 0.0;
  double f1 = 0.0;
  Counts counts;
};

inline PRF prf(const Counts& c) {
  PRF out;
  out.counts = c;
  out.p = c.pred > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.pred) : 0.0;
  out.r = c.gold > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.gold) : 0.0;
  out.f1 = out.p + out.r > 0.0 ? 2.0 * out.p * out.r / (out.p + out.r) : 0.0;
  return out;
}

struct EventCounts {
  Counts arg_i;
  Counts arg_c;
};

inline EventCounts count_event(const std::vector<Argument>& gold, const std::vector<PredictedArgument>& pred) {
  std::map<WordSpan, long> gs, ps;
  std::map<std::pair<std::string, WordSpan>, long> gc, pc;
  for (const auto& a : gold) {
    ++gs[a.span];
    ++gc[{a.role, a.span}];
  }
  for (const auto& a : pred) {
    ++ps[a.span];
    ++pc[{a.role, a.span}];
  }
  EventCounts out;
  out.arg_i.pred = out.arg_c.pred = static_cast<long>(pred.size());
  out.arg_i.gold = out.arg_c.gold = static_cast<long>(gold.size());
  for (const auto& [span, n] : ps) {
    auto it = gs.find(span);
    if (it != gs.end()) out.arg_i.tp += std::min(n, it->second);
  }
  for (const auto& [key, n] : pc) {
    auto it = gc.find(key);
    if (it != gc.end()) out.arg_c.tp += std::min(n, it->second);
  }
  return out;
}

struct BucketScore {
  std::string label;
  long support = 0;  // events (or arguments, for the distance curve)
  PRF arg_i;
  PRF arg_c;
};

struct EvalReport {
  PRF arg_i;
  PRF arg_c;
  std::map<std::string, std::vector<BucketScore>> buckets;
};

namespace detail {

// Predicted arguments per (instance, event); validates event references.
inline std::vector<std::vector<std::vector<PredictedArgument>>> index_predictions(
    const std::vector<EAEInstance>& gold, const std::vector<InstancePrediction>& pred) {
  if (gold.size() != pred.size()) {
    throw Error("score: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gold.size()) +
                " gold instances");
  }
  std::vector<std::vector<std::vector<PredictedArgument>>> out(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i].doc_id != gold[i].doc_id) {
      throw Error("score: prediction for doc '" + pred[i].doc_id + "' aligned with gold doc '" + gold[i].doc_id + "'");
    }
    out[i].resize(gold[i].events.size());
    for (const auto& ev : pred[i].events) {
      if (ev.event_index < 0 || ev.event_index >= static_cast<int>(gold[i].events.size())) {
        throw Error("score: doc '" + gold[i].doc_id + "': prediction references unknown event " +
                    std::to_string(ev.event_index));
      }
      auto& dst = out[i][static_cast<std::size_t>(ev.event_index)];
      dst.insert(dst.end(), ev.arguments.begin(), ev.arguments.end());
    }
  }
  return out;
}

template <typename EventFilter>
BucketScore score_events(const std::string& label, const std::vector<EAEInstance>& gold,
                         const std::vector<std::vector<std::vector<PredictedArgument>>>& pred, EventFilter keep) {
  BucketScore b;
  b.label = label;
  Counts ci, cc;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t e = 0; e < gold[i].events.size(); ++e) {
      if (!keep(i, e)) continue;
      ++b.support;
      const auto c = count_event(gold[i].events[e].arguments, pred[i][e]);
      ci += c.arg_i;
      cc += c.arg_c;
    }
  }
  b.arg_i = prf(ci);
  b.arg_c = prf(cc);
  return b;
}

}  // namespace detail

inline EvalReport score(const std::vector<EAEInstance>& gold, const std::vector<InstancePrediction>& pred) {
  const auto idx = detail::index_predictions(gold, pred);
  const auto all = detail::score_events("all", gold, idx, [](std::size_t, std::size_t) { return true; });
  EvalReport r;
  r.arg_i = all.arg_i;
  r.arg_c = all.arg_c;
  return r;
}

inline std::vector<BucketScore> bucket_by_event_count(const std::vector<EAEInstance>& gold,
                                                      const std::vector<InstancePrediction>& pred) {
  const auto idx = detail::index_predictions(gold, pred);
  return {detail::score_events("#Ev=1", gold, idx, [&](std::size_t i, std::size_t) { return gold[i].events.size() == 1; }),
          detail::score_events("#Ev>1", gold, idx, [&](std::size_t i, std::size_t) { return gold[i].events.size() > 1; })};
}

// An event overlaps when one of its gold argument spans is also a gold
// argument span of another event in the same instance.
inline bool is_overlapping(const EAEInstance& inst, std::size_t e) {
  for (const auto& a : inst.events[e].arguments) {
    for (std::size_t o = 0; o < inst.events.size(); ++o) {
      if (o == e) continue;
      for (const auto& b : inst.events[o].arguments) {
        if (a.span == b.span) return true;
      }
    }
  }
  return false;
}

inline std::vector<BucketScore> overlap_split(const std::vector<EAEInstance>& gold,
                                              const std::vector<InstancePrediction>& pred) {
  const auto idx = detail::index_predictions(gold, pred);
  return {detail::score_events("non-overlapping", gold, idx,
                               [&](std::size_t i, std::size_t e) { return !is_overlapping(gold[i], e); }),
          detail::score_events("overlapping", gold, idx,
                               [&](std::size_t i, std::size_t e) { return is_overlapping(gold[i], e); })};
}

// Head word of a span is its first word; negative distances mean the
// argument is left of the trigger.
inline int trigger_distance(const WordSpan& trigger, const WordSpan& argument) {
  return argument.start - trigger.start;
}

// Bucket j covers [edges[j-1], edges[j]); the first and last buckets are open.
inline std::vector<int> default_distance_edges() { return {-20, -10, -5, 0, 1, 6, 11, 21}; }

inline std::string distance_label(const std::vector<int>& edges, std::size_t j) {
  if (j == 0) return "d<" + std::to_string(edges.front());
  if (j == edges.size()) return "d>=" + std::to_string(edges.back());
  if (edges[j] - edges[j - 1] == 1) return "d=" + std::to_string(edges[j - 1]);
  return std::to_string(edges[j - 1]) + "<=d<" + std::to_string(edges[j]);
}

inline std::size_t distance_bucket(const std::vector<int>& edges, int d) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), d) - edges.begin());
}

// Arguments (gold and predicted) are bucketed by their own distance; support
// counts gold arguments.
inline std::vector<BucketScore> distance_curve(const std::vector<EAEInstance>& gold,
                                               const std::vector<InstancePrediction>& pred,
                                               const std::vector<int>& edges = default_distance_edges()) {
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw Error("distance_curve: bucket edges must be strictly increasing");
  }
  const auto idx = detail::index_predictions(gold, pred);
  const std::size_t nb = edges.size() + 1;
  std::vector<Counts> ci(nb), cc(nb);
  std::vector<long> support(nb, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t e = 0; e < gold[i].events.size(); ++e) {
      const auto& ev = gold[i].events[e];
      std::vector<std::vector<Argument>> g(nb);
      std::vector<std::vector<PredictedArgument>> p(nb);
      for (const auto& a : ev.arguments) g[distance_bucket(edges, trigger_distance(ev.trigger, a.span))].push_back(a);
      for (const auto& a : idx[i][e]) p[distance_bucket(edges, trigger_distance(ev.trigger, a.span))].push_back(a);
      for (std::size_t b = 0; b < nb; ++b) {
        support[b] += static_cast<long>(g[b].size());
        const auto c = count_event(g[b], p[b]);
        ci[b] += c.arg_i;
        cc[b] += c.arg_c;
      }
    }
  }
  std::vector<BucketScore> out;
  for (std::size_t b = 0; b < nb; ++b) out.push_back({distance_label(edges, b), support[b], prf(ci[b]), prf(cc[b])});
  return out;
}

// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const PRF& s) {
  return {{"p", s.p}, {"r", s.r}, {"f1", s.f1}, {"tp", s.counts.tp}, {"pred", s.counts.pred}, {"gold", s.counts.gold}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"arg_i", to_json(r.arg_i)}, {"arg_c", to_json(r.arg_c)}, {"buckets", nlohmann::json::object()}};
  for (const auto& [name, rows] : r.buckets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : rows) {
      arr.push_back({{"label", b.label}, {"support", b.support}, {"arg_i", to_json(b.arg_i)}, {"arg_c", to_json(b.arg_c)}});
    }
    j["buckets"][name] = arr;
  }
  return j;
}

// Prediction dump: one line per predicted argument.
inline std::string predictions_to_jsonl(const std::vector<InstancePrediction>& preds) {
  std::string out;
  for (const auto& ip : preds) {
    for (const auto& ev : ip.events) {
      for (const auto& a : ev.arguments) {
        out += nlohmann::json{{"doc_id", ip.doc_id},
                              {"event", ev.event_index},
                              {"role", a.role},
                              {"span", {a.span.start, a.span.end}},
                              {"score", a.score}}
                   .dump();
        out += '\n';
      }
    }
  }
  return out;
}

// Inverse of predictions_to_jsonl, aligned with `gold` (events without lines
// get empty predictions).
inline std::vector<InstancePrediction> predictions_from_jsonl(const std::string& content,
                                                              const std::vector<EAEInstance>& gold) {
  std::map<std::string, std::size_t> by_doc;
  std::vector<InstancePrediction> out(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out[i].doc_id = gold[i].doc_id;
    for (std::size_t e = 0; e < gold[i].events.size(); ++e) out[i].events.push_back({static_cast<int>(e), {}});
    by_doc.emplace(gold[i].doc_id, i);
  }
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    const auto doc = j.at("doc_id").get<std::string>();
    auto it = by_doc.find(doc);
    if (it == by_doc.end()) throw Error("prediction for unknown doc '" + doc + "'");
    const int e = j.at("event").get<int>();
    if (e < 0 || e >= static_cast<int>(out[it->second].events.size())) {
      throw Error("doc '" + doc + "': prediction references unknown event " + std::to_string(e));
    }
    out[it->second].events[static_cast<std::size_t>(e)].arguments.push_back(
        {j.at("role").get<std::string>(), {j.at("span")[0].get<int>(), j.at("span")[1].get<int>()},
         j.value("score", 0.0)});
  }
  return out;
}

}  // namespace tabeae
