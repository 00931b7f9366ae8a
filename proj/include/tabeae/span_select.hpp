#pragma once

// Span selection and the bipartite matching loss.
//
// Each slot representation h becomes a pair of selectors h * w_start and
// h * w_end (element-wise). Dotting them with the context representation
// gives start/end logits over text positions. Spans are (start, end) with an
// exclusive end; (0, 0) is the empty span and scores logit_start[0] +
// logit_end[0].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tabeae/autograd.hpp"
#include "tabeae/error.hpp"
#include "tabeae/hungarian.hpp"

namespace tabeae {

struct SpanSelectors {
  ag::Var start;  // slots x d
  ag::Var end;    // slots x d
};

inline SpanSelectors make_selectors(const ag::Var& slot_states, const ag::Var& w_start, const ag::Var& w_end) {
  if (w_start.cols() != slot_states.cols() || w_end.cols() != slot_states.cols()) {
    throw ShapeError("make_selectors: selector weights have width " + std::to_string(w_start.cols()) +
                     " but slot states have width " + std::to_string(slot_states.cols()));
  }
  return {ag::mul_row(slot_states, w_start), ag::mul_row(slot_states, w_end)};
}

struct SpanLogits {
  ag::Var start;  // slots x L
  ag::Var end;    // slots x L
};

// Row k of each result is H_text * phi_k.
inline SpanLogits span_logits(const SpanSelectors& sel, const ag::Var& text_states) {
  if (text_states.cols() != sel.start.cols()) throw ShapeError("span_logits: width mismatch");
  return {ag::matmul_nt(sel.start, text_states), ag::matmul_nt(sel.end, text_states)};
}

struct SpanPrediction {
  int start = 0;
  int end = 0;
  double score = 0.0;

  bool empty() const { return start == 0 && end == 0; }
  bool operator==(const SpanPrediction&) const = default;
};

// Best span among {(0,0)} and {(l, m) : l >= 1, 0 < m - l < max_span_len,
// m < length, start_ok[l]}. Ties go to the smaller l, then the smaller m.
inline SpanPrediction select_span(std::span<const double> logit_start, std::span<const double> logit_end, int length,
                                  int max_span_len, std::span<const std::uint8_t> start_ok = {}) {
  if (static_cast<int>(logit_start.size()) < length || static_cast<int>(logit_end.size()) < length) {
    throw ShapeError("select_span: logits shorter than the text length");
  }
  SpanPrediction best{0, 0, logit_start[0] + logit_end[0]};
  for (int l = 1; l < length; ++l) {
    if (!start_ok.empty() && !start_ok[static_cast<std::size_t>(l)]) continue;
    const int last = std::min(length - 1, l + max_span_len - 1);
    for (int m = l + 1; m <= last; ++m) {
      const double s = logit_start[static_cast<std::size_t>(l)] + logit_end[static_cast<std::size_t>(m)];
      if (s > best.score) best = {l, m, s};
    }
  }
  return best;
}

enum class AssignmentCost { kLogit, kProbability };

// Golden span assignment for the slots of one event. targets[k] is the span
// assigned to slot k, (0, 0) when the slot has no argument.
struct Assignment {
  std::vector<std::pair<int, int>> targets;
  bool operator==(const Assignment&) const = default;
};

namespace detail {

inline std::vector<double> log_softmax(std::span<const double> x) {
  double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

}  // namespace detail

// Matches golden spans to slots, separately for every role: slots that share
// a role compete for that role's golden spans. Golden spans beyond a role's
// slot capacity stay unassigned.
//   slot_roles[k]       role of slot k
//   logit_start/end     slots x L logits (values only)
//   golden              role -> golden spans (exclusive end)
inline Assignment assign_event(const std::vector<std::string>& slot_roles, const ag::Matrix& logit_start,
                               const ag::Matrix& logit_end,
                               const std::map<std::string, std::vector<std::pair<int, int>>>& golden,
                               AssignmentCost cost_kind = AssignmentCost::kLogit) {
  Assignment out;
  out.targets.assign(slot_roles.size(), {0, 0});
  std::map<std::string, std::vector<int>> groups;
  for (std::size_t k = 0; k < slot_roles.size(); ++k) groups[slot_roles[k]].push_back(static_cast<int>(k));

  for (const auto& [role, slots] : groups) {
    auto it = golden.find(role);
    if (it == golden.end() || it->second.empty()) continue;
    const auto& spans = it->second;
    const int c = static_cast<int>(slots.size());
    const int g = static_cast<int>(spans.size());
    const int n = std::max(c, g);
    ag::Matrix cost = ag::Matrix::Zero(n, n);
    for (int r = 0; r < c; ++r) {
      const int k = slots[static_cast<std::size_t>(r)];
      std::span<const double> ls(logit_start.row(k).data(), static_cast<std::size_t>(logit_start.cols()));
      std::span<const double> le(logit_end.row(k).data(), static_cast<std::size_t>(logit_end.cols()));
      std::vector<double> ps, pe;
      if (cost_kind == AssignmentCost::kProbability) {
        ps = detail::log_softmax(ls);
        pe = detail::log_softmax(le);
        for (auto& v : ps) v = std::exp(v);
        for (auto& v : pe) v = std::exp(v);
      }
      auto score = [&](int s, int e) {
        if (cost_kind == AssignmentCost::kLogit) return ls[static_cast<std::size_t>(s)] + le[static_cast<std::size_t>(e)];
        return ps[static_cast<std::size_t>(s)] + pe[static_cast<std::size_t>(e)];
      };
      for (int j = 0; j < n; ++j) {
        const auto [s, e] = j < g ? spans[static_cast<std::size_t>(j)] : std::pair<int, int>{0, 0};
        if (s < 0 || e < 0 || s >= logit_start.cols() || e >= logit_end.cols()) {
          throw Error("assign_event: golden span index outside the text");
        }
        cost(r, j) = -score(s, e);
      }
    }
    const auto match = hungarian(cost);
    for (int r = 0; r < c; ++r) {
      const int j = match.row_to_col[static_cast<std::size_t>(r)];
      if (j < g) out.targets[static_cast<std::size_t>(slots[static_cast<std::size_t>(r)])] = spans[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

// Sum over slots of -log P_start[start_k] - log P_end[end_k].
inline ag::Var bipartite_loss(const SpanLogits& logits, const std::vector<std::pair<int, int>>& targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.start.rows()) {
    throw Error("bipartite_loss: " + std::to_string(targets.size()) + " targets for " +
                std::to_string(logits.start.rows()) + " slots");
  }
  std::vector<ag::Var> terms;
  terms.reserve(2 * targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    terms.push_back(ag::nll_of_softmax(ag::slice_rows(logits.start, row, 1), targets[k].first));
    terms.push_back(ag::nll_of_softmax(ag::slice_rows(logits.end, row, 1), targets[k].second));
  }
  return ag::sum_all(terms);
}

}  // namespace tabeae
