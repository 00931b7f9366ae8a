#pragma once

// Training-inference schemes and the training loop.
//
//   single mode: one sample per event, only that event's trigger is marked
//   multi mode:  one sample per instance, all triggers marked, one table row
//                per event
// Supported (train, infer) pairs: single-single, multi-multi, multi-single.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabeae/corpus.hpp"
#include "tabeae/error.hpp"
#include "tabeae/eval.hpp"
#include "tabeae/model.hpp"
#include "tabeae/optim.hpp"
#include "tabeae/pipeline.hpp"

namespace tabeae {

enum class Mode { kSingle, kMulti };

inline const char* mode_name(Mode m) { return m == Mode::kSingle ? "single" : "multi"; }

struct SchemeConfig {
  Mode train_mode = Mode::kMulti;
  Mode infer_mode = Mode::kSingle;

  std::string name() const { return std::string(mode_name(train_mode)) + "-" + mode_name(infer_mode); }
  bool operator==(const SchemeConfig&) const = default;
};

inline constexpr const char* kValidSchemes = "single-single, multi-multi, multi-single";

inline SchemeConfig parse_scheme(const std::string& name) {
  if (name == "single-single") return {Mode::kSingle, Mode::kSingle};
  if (name == "multi-multi") return {Mode::kMulti, Mode::kMulti};
  if (name == "multi-single") return {Mode::kMulti, Mode::kSingle};
  throw UsageError("unsupported training-inference scheme '" + name + "'; valid schemes are " + kValidSchemes);
}

struct TrainConfig {
  long steps = 10000;
  double warmup_ratio = 0.1;
  double learning_rate = 2e-5;
  double max_grad_norm = 5.0;
  int batch_size = 4;
  int context_window = 250;
  int max_span_len = 10;
  int max_encoder_len = 500;
  int max_decoder_len = 360;
  std::uint64_t seed = 42;
  double weight_decay = 0.01;
  double cross_attention_lr_scale = 1.5;
  long eval_interval = 0;  // 0: evaluate only at the end
  int workers = 1;         // sample preparation threads

  // Hyperparameters of the published runs, per dataset.
  static TrainConfig paper(const std::string& dataset = "wikievents") {
    TrainConfig c;
    if (dataset == "ace05") {
      c.batch_size = 8;
      c.max_encoder_len = 200;
      c.max_decoder_len = 250;
    } else if (dataset == "rams") {
      c.max_decoder_len = 200;
    } else if (dataset != "wikievents" && dataset != "mlee") {
      throw UsageError("no paper preset for dataset '" + dataset + "'");
    }
    c.eval_interval = 500;
    return c;
  }

  static TrainConfig desk() {
    TrainConfig c;
    c.steps = 600;
    c.learning_rate = 1e-3;
    c.batch_size = 4;
    c.max_encoder_len = 256;
    c.max_decoder_len = 256;
    c.weight_decay = 0.0;
    return c;
  }

  bool operator==(const TrainConfig&) const = default;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"warmup_ratio", c.warmup_ratio},
          {"learning_rate", c.learning_rate},
          {"max_grad_norm", c.max_grad_norm},
          {"batch_size", c.batch_size},
          {"context_window", c.context_window},
          {"max_span_len", c.max_span_len},
          {"max_encoder_len", c.max_encoder_len},
          {"max_decoder_len", c.max_decoder_len},
          {"seed", c.seed},
          {"weight_decay", c.weight_decay},
          {"cross_attention_lr_scale", c.cross_attention_lr_scale},
          {"eval_interval", c.eval_interval},
          {"workers", c.workers}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("steps", c.steps);
  get("warmup_ratio", c.warmup_ratio);
  get("learning_rate", c.learning_rate);
  get("max_grad_norm", c.max_grad_norm);
  get("batch_size", c.batch_size);
  get("context_window", c.context_window);
  get("max_span_len", c.max_span_len);
  get("max_encoder_len", c.max_encoder_len);
  get("max_decoder_len", c.max_decoder_len);
  get("seed", c.seed);
  get("weight_decay", c.weight_decay);
  get("cross_attention_lr_scale", c.cross_attention_lr_scale);
  get("eval_interval", c.eval_interval);
  get("workers", c.workers);
  return c;
}

inline void validate(const TrainConfig& c) {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("training config: ") + what + " must be positive");
  };
  positive(c.steps >= 0, "steps");
  positive(c.warmup_ratio >= 0.0 && c.warmup_ratio <= 1.0, "warmup_ratio (in [0, 1])");
  positive(c.learning_rate > 0.0, "learning_rate");
  positive(c.max_grad_norm > 0.0, "max_grad_norm");
  positive(c.batch_size > 0, "batch_size");
  positive(c.context_window > 0, "context_window");
  positive(c.max_span_len > 0, "max_span_len");
  positive(c.max_encoder_len > 0, "max_encoder_len");
  positive(c.max_decoder_len > 0, "max_decoder_len");
  positive(c.workers > 0, "workers");
}

inline InputContext make_context(const PromptRegistry& registry, const Tokenizer& tokenizer, const TrainConfig& cfg,
                                 const AblationConfig& ablation = {}) {
  InputContext ctx;
  ctx.registry = &registry;
  ctx.tokenizer = &tokenizer;
  ctx.window = cfg.context_window;
  ctx.max_encoder_len = cfg.max_encoder_len;
  ctx.max_decoder_len = cfg.max_decoder_len;
  ctx.max_span_len = cfg.max_span_len;
  ctx.ablation = ablation;
  return ctx;
}

// Event selections for one instance. In multi mode all events go in one
// sample unless their triggers do not fit one context window, in which case
// consecutive triggers are grouped greedily.
inline std::vector<std::vector<int>> event_groups(const EAEInstance& inst, Mode mode, int window) {
  std::vector<std::vector<int>> out;
  const int n = static_cast<int>(inst.events.size());
  if (mode == Mode::kSingle) {
    for (int e = 0; e < n; ++e) out.push_back({e});
    return out;
  }
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e) all[static_cast<std::size_t>(e)] = e;
  all = events_in_trigger_order(inst, all);
  std::vector<int> group;
  int lo = 0;
  int hi = 0;
  for (int e : all) {
    const auto& t = inst.events[static_cast<std::size_t>(e)].trigger;
    if (!group.empty() && std::max(hi, t.end) - lo > window) {
      out.push_back(group);
      group.clear();
    }
    if (group.empty()) {
      lo = t.start;
      hi = t.end;
    }
    hi = std::max(hi, t.end);
    group.push_back(e);
  }
  if (!group.empty()) out.push_back(group);
  return out;
}

inline std::vector<ModelInput> expand_instances(const EAEInstance& inst, int instance_index, Mode mode,
                                                const InputContext& ctx) {
  std::vector<ModelInput> out;
  for (const auto& g : event_groups(inst, mode, ctx.window)) out.push_back(prepare_input(inst, instance_index, g, ctx));
  return out;
}

// Expands a whole corpus, optionally on several threads; output order is
// independent of the thread count.
inline std::vector<ModelInput> expand_corpus(const std::vector<EAEInstance>& corpus, Mode mode, const InputContext& ctx,
                                             int workers = 1) {
  std::vector<std::vector<ModelInput>> per(corpus.size());
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(1, workers)));
  auto run = [&](std::size_t w, std::size_t stride) {
    try {
      for (std::size_t i = w; i < corpus.size(); i += stride) {
        per[i] = expand_instances(corpus[i], static_cast<int>(i), mode, ctx);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers <= 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(run, static_cast<std::size_t>(w), static_cast<std::size_t>(workers));
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<ModelInput> out;
  for (auto& v : per) {
    for (auto& s : v) out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference

struct Prediction {
  InstancePrediction output;
  std::vector<ModelInput> inputs;
};

inline Prediction predict(const EAEInstance& inst, int instance_index, Mode infer_mode, const TabEAEModel& model,
                          const InputContext& ctx) {
  ag::NoGradGuard no_grad;
  Prediction p;
  p.output.doc_id = inst.doc_id;
  for (std::size_t e = 0; e < inst.events.size(); ++e) p.output.events.push_back({static_cast<int>(e), {}});
  p.inputs = expand_instances(inst, instance_index, infer_mode, ctx);
  for (const auto& in : p.inputs) {
    const auto r = forward(model, in, ctx.ablation);
    for (auto& ev : decode(in, r.logits, ctx.max_span_len)) {
      auto& dst = p.output.events[static_cast<std::size_t>(ev.event_index)].arguments;
      dst.insert(dst.end(), ev.arguments.begin(), ev.arguments.end());
    }
  }
  return p;
}

inline std::vector<InstancePrediction> predict_corpus(const std::vector<EAEInstance>& corpus, Mode infer_mode,
                                                      const TabEAEModel& model, const InputContext& ctx) {
  std::vector<InstancePrediction> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.push_back(predict(corpus[i], static_cast<int>(i), infer_mode, model, ctx).output);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct LogEntry {
  long step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  double grad_norm = 0.0;
  std::optional<double> dev_arg_c;
};

inline nlohmann::json to_json(const LogEntry& e) {
  nlohmann::json j{{"step", e.step}, {"loss", e.loss}, {"lr", e.learning_rate}, {"grad_norm", e.grad_norm}};
  if (e.dev_arg_c) j["dev_arg_c_f1"] = *e.dev_arg_c;
  return j;
}

struct TrainResult {
  std::vector<LogEntry> log;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::optional<double> best_dev_arg_c;
  long best_step = 0;
};

struct TrainHooks {
  const std::vector<EAEInstance>* dev = nullptr;
  std::function<void(const LogEntry&)> on_log;
  bool keep_best = true;  // restore the best dev checkpoint at the end
  long log_interval = 50;
};

inline TrainResult train(const std::vector<EAEInstance>& corpus, const SchemeConfig& scheme, const TrainConfig& cfg,
                         TabEAEModel& model, const InputContext& ctx, const TrainHooks& hooks = {}) {
  if (corpus.empty()) throw Error("train: corpus is empty");
  validate(cfg);
  const auto samples = expand_corpus(corpus, scheme.train_mode, ctx, cfg.workers);
  TrainResult result;
  if (cfg.steps == 0) return result;

  AdamW opt(&model.parameters(), {0.9, 0.999, 1e-8, cfg.weight_decay, cfg.cross_attention_lr_scale});
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  const long warmup = static_cast<long>(std::llround(cfg.warmup_ratio * static_cast<double>(cfg.steps)));

  std::vector<ag::Matrix> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& p : model.parameters()) best.push_back(p.var.value());
  };
  auto evaluate_dev = [&]() -> double {
    const auto preds = predict_corpus(*hooks.dev, scheme.infer_mode, model, ctx);
    return score(*hooks.dev, preds).arg_c.f1;
  };

  double window_loss = 0.0;
  long window_steps = 0;
  for (long step = 0; step < cfg.steps; ++step) {
    model.zero_grad();
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        cursor = 0;
      }
      const auto& in = samples[order[cursor++]];
      const auto& inst = corpus[static_cast<std::size_t>(in.instance)];
      try {
        auto loss = sample_loss(model, inst, in, ctx.ablation, &rng);
        batch_loss += loss.scalar();
        ag::backward(ag::scale(loss, 1.0 / cfg.batch_size));
      } catch (const Error& e) {
        throw Error("training failed at step " + std::to_string(step + 1) + " on doc '" + inst.doc_id + "': " + e.what());
      }
    }
    batch_loss /= cfg.batch_size;
    if (!std::isfinite(batch_loss)) {
      throw Error("training diverged: non-finite loss at step " + std::to_string(step + 1));
    }
    if (step == 0) result.initial_loss = batch_loss;
    const double norm = clip_grad_norm(model.parameters(), cfg.max_grad_norm);
    const double lr = cfg.learning_rate * linear_schedule(step, cfg.steps, warmup);
    opt.step(lr);
    result.final_loss = batch_loss;
    window_loss += batch_loss;
    ++window_steps;

    const long done = step + 1;
    const bool eval_now = hooks.dev != nullptr &&
                          ((cfg.eval_interval > 0 && done % cfg.eval_interval == 0) || done == cfg.steps);
    const bool log_now = eval_now || (hooks.log_interval > 0 && done % hooks.log_interval == 0) || done == cfg.steps;
    if (log_now) {
      LogEntry e{done, window_loss / static_cast<double>(window_steps), lr, norm, std::nullopt};
      if (eval_now) {
        e.dev_arg_c = evaluate_dev();
        if (!result.best_dev_arg_c || *e.dev_arg_c > *result.best_dev_arg_c) {
          result.best_dev_arg_c = e.dev_arg_c;
          result.best_step = done;
          if (hooks.keep_best) snapshot();
        }
      }
      result.log.push_back(e);
      if (hooks.on_log) hooks.on_log(e);
      window_loss = 0.0;
      window_steps = 0;
    }
  }
  if (hooks.keep_best && !best.empty()) {
    for (std::size_t i = 0; i < best.size(); ++i) model.parameters()[i].var.mutable_value() = best[i];
  }
  return result;
}

}  // namespace tabeae
