// tabeae: synthesize data, train, predict, evaluate and run ablations.
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabeae/tabeae.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tabeae;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os << content;
  if (!os) throw Error("failed writing '" + path.string() + "'");
}

// Same digest as `git hash-object`.
std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) throw Error("SHA-1 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

struct LoadedRegistry {
  PromptRegistry registry;
  std::string source;
  std::string content;
};

LoadedRegistry load_registry(const std::string& path) {
  LoadedRegistry r;
  if (path.empty()) {
    r.registry = default_synth_schema();
    r.source = "builtin:synth";
    r.content = r.registry.to_jsonl();
  } else {
    r.content = read_file(path);
    r.registry = PromptRegistry::from_jsonl(r.content);
    r.source = path;
  }
  return r;
}

json registry_json(const LoadedRegistry& r) {
  return {{"source", r.source}, {"version", r.registry.version()}, {"sha1", git_blob_sha1(r.content)}};
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--seeds: '" + item + "' is not a seed");
    }
  }
  if (out.empty()) throw UsageError("--seeds: no seeds given");
  return out;
}

json mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  return {{"mean", mean}, {"std", sd}, {"values", v}};
}

// ---------------------------------------------------------------------------
// Options shared by train and ablate.

struct RunOptions {
  std::string data;
  std::string dev;
  std::string format = "native";
  std::string registry;
  std::string config;
  std::string scheme;
  std::string profile;
  std::string dataset;
  bool no_saam = false;
  bool no_pet = false;
  bool no_prompts = false;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::optional<long> steps;
  int workers = 1;
  std::string out;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--data", o.data, "Training corpus")->required();
  cmd->add_option("--dev", o.dev, "Development corpus (model selection and reported scores)");
  cmd->add_option("--format", o.format, "Corpus format: native, ace05, rams, wikievents, mlee");
  cmd->add_option("--registry", o.registry, "Prompt registry JSONL (default: built-in synthetic schema)");
  cmd->add_option("--config", o.config, "Run configuration JSON; flags override it");
  cmd->add_option("--scheme", o.scheme, "single-single, multi-multi or multi-single");
  cmd->add_option("--profile", o.profile, "desk or paper");
  cmd->add_option("--dataset", o.dataset, "Dataset preset for the paper profile: ace05, rams, wikievents, mlee");
  cmd->add_flag("--no-saam", o.no_saam, "Full self-attention over the table");
  cmd->add_flag("--no-pet", o.no_pet, "Initialize the table from token embeddings");
  cmd->add_flag("--no-prompts", o.no_prompts, "Bare role names as the column header");
  cmd->add_option("--seed", o.seed, "Single seed");
  cmd->add_option("--seeds", o.seeds, "Comma-separated seeds, one run each");
  cmd->add_option("--steps", o.steps, "Override the number of optimizer steps");
  cmd->add_option("--workers", o.workers, "Threads for data preparation")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "Run directory")->required();
}

RunConfig resolve_config(const RunOptions& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::string text;
    try {
      text = read_file(o.config);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw UsageError("config '" + o.config + "' is not valid JSON: " + e.what());
    }
  }
  if (!o.profile.empty()) j["profile"] = o.profile;
  if (!o.dataset.empty()) j["dataset"] = o.dataset;
  auto c = run_config_from_json(j);
  if (!o.scheme.empty()) c.scheme = parse_scheme(o.scheme);
  if (o.no_saam) c.ablation.saam = false;
  if (o.no_pet) c.ablation.pet = false;
  if (o.no_prompts) c.ablation.prompts = false;
  if (o.seed) c.train.seed = *o.seed;
  if (o.steps) c.train.steps = *o.steps;
  c.train.workers = o.workers;
  validate(c.train);
  return c;
}

struct Data {
  LoadedRegistry registry;
  std::vector<EAEInstance> train;
  std::vector<EAEInstance> dev;
  Tokenizer tokenizer;
};

Data load_data(const RunOptions& o, const RunConfig& cfg) {
  Data d;
  d.registry = load_registry(o.registry);
  const auto format = parse_corpus_format(o.format);
  d.train = load_corpus(o.data, format, &d.registry.registry);
  if (d.train.empty()) throw DataError("corpus '" + o.data + "' has no instances");
  if (!o.dev.empty()) d.dev = load_corpus(o.dev, format, &d.registry.registry);
  auto all = d.train;
  all.insert(all.end(), d.dev.begin(), d.dev.end());
  d.tokenizer = build_tokenizer(all, d.registry.registry, cfg.piece_len, cfg.max_markers);
  return d;
}

std::vector<std::uint64_t> seeds_of(const RunOptions& o, const RunConfig& cfg) {
  if (!o.seeds.empty()) {
    if (o.seed) throw UsageError("--seed and --seeds are mutually exclusive");
    return parse_seeds(o.seeds);
  }
  return {cfg.train.seed};
}

struct SeedResult {
  std::uint64_t seed = 0;
  double arg_i = 0.0;
  double arg_c = 0.0;
};

// Trains one model per seed under `dir`; the manifest is written first.
json run_training(const RunOptions& o, RunConfig cfg, const Data& data, const std::vector<std::uint64_t>& seeds,
                  const fs::path& dir, const std::string& command) {
  cfg.model.vocab_size = static_cast<int>(data.tokenizer.vocab().size());
  fs::create_directories(dir);
  const json manifest{
      {"command", command},
      {"config", to_json(cfg)},
      {"seeds", seeds},
      {"registry", registry_json(data.registry)},
      {"data", {{"train", o.data}, {"dev", o.dev}, {"format", o.format}}},
      {"layout",
       {{"manifest", "manifest.json"},
        {"checkpoint", "seed-<seed>/model.ckpt"},
        {"log", "seed-<seed>/log.jsonl"},
        {"metrics", "seed-<seed>/metrics.json"},
        {"aggregate", "aggregate.json"}}}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  const auto ctx = make_context(data.registry.registry, data.tokenizer, cfg.train, cfg.ablation);
  const bool has_dev = !data.dev.empty();
  const auto& eval_set = has_dev ? data.dev : data.train;
  std::vector<SeedResult> results;
  for (auto seed : seeds) {
    auto mc = cfg.model;
    mc.seed = seed;
    auto tc = cfg.train;
    tc.seed = seed;
    const fs::path sd = dir / ("seed-" + std::to_string(seed));
    fs::create_directories(sd);
    std::ofstream log(sd / "log.jsonl");
    TabEAEModel model(mc);
    TrainHooks hooks;
    if (has_dev) hooks.dev = &data.dev;
    hooks.on_log = [&](const LogEntry& e) {
      log << to_json(e).dump() << "\n";
      log.flush();
      std::fprintf(stderr, "[seed %llu] step %ld loss %.4f lr %.2e%s\n", static_cast<unsigned long long>(seed), e.step,
                   e.loss, e.learning_rate,
                   e.dev_arg_c ? (" dev Arg-C " + std::to_string(*e.dev_arg_c)).c_str() : "");
    };
    const auto r = train(data.train, cfg.scheme, tc, model, ctx, hooks);
    json meta{{"manifest", manifest}, {"seed", seed}, {"registry_jsonl", data.registry.content}};
    save_checkpoint((sd / "model.ckpt").string(), model, data.tokenizer, meta);
    const auto report = score(eval_set, predict_corpus(eval_set, cfg.scheme.infer_mode, model, ctx));
    json metrics{{"seed", seed},
                 {"split", has_dev ? "dev" : "train"},
                 {"initial_loss", r.initial_loss},
                 {"final_loss", r.final_loss},
                 {"arg_i", to_json(report.arg_i)},
                 {"arg_c", to_json(report.arg_c)}};
    if (r.best_dev_arg_c) {
      metrics["best_dev_arg_c_f1"] = *r.best_dev_arg_c;
      metrics["best_step"] = r.best_step;
    }
    write_file(sd / "metrics.json", metrics.dump(2) + "\n");
    results.push_back({seed, report.arg_i.f1, report.arg_c.f1});
    std::printf("seed %llu: %s Arg-I %.4f Arg-C %.4f\n", static_cast<unsigned long long>(seed),
                has_dev ? "dev" : "train", report.arg_i.f1, report.arg_c.f1);
  }
  std::vector<double> ai, ac;
  for (const auto& r : results) {
    ai.push_back(r.arg_i);
    ac.push_back(r.arg_c);
  }
  json agg{{"split", has_dev ? "dev" : "train"}, {"seeds", seeds}, {"arg_i_f1", mean_std(ai)}, {"arg_c_f1", mean_std(ac)}};
  write_file(dir / "aggregate.json", agg.dump(2) + "\n");
  return agg;
}

// ---------------------------------------------------------------------------

struct Loaded {
  TabEAEModel model;
  Checkpoint ck;
  RunConfig cfg;
  LoadedRegistry registry;
};

Loaded open_checkpoint(const std::string& path, const std::string& registry_path, const std::string& config_path) {
  if (!fs::exists(path)) throw Error("checkpoint '" + path + "' does not exist");
  auto [model, ck] = load_checkpoint(path);
  RunConfig cfg;
  if (ck.metadata.contains("manifest")) cfg = run_config_from_json(ck.metadata["manifest"].at("config"));
  if (!config_path.empty()) {
    // An explicit config must describe the checkpointed architecture.
    cfg = load_run_config(config_path);
    cfg.model.vocab_size = static_cast<int>(ck.tokenizer.vocab().size());
    TabEAEModel fresh(cfg.model);
    load_weights(path, fresh);
    model = std::move(fresh);
  }
  LoadedRegistry reg;
  if (!registry_path.empty()) {
    reg = load_registry(registry_path);
  } else if (ck.metadata.contains("registry_jsonl")) {
    reg.content = ck.metadata["registry_jsonl"].get<std::string>();
    reg.registry = PromptRegistry::from_jsonl(reg.content);
    reg.source = "checkpoint:" + path;
  } else {
    reg = load_registry("");
  }
  return {std::move(model), std::move(ck), std::move(cfg), std::move(reg)};
}

Mode parse_mode(const std::string& s) {
  if (s == "single") return Mode::kSingle;
  if (s == "multi") return Mode::kMulti;
  throw UsageError("unknown inference mode '" + s + "' (expected single or multi)");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_synth(std::uint64_t seed, std::size_t n, int max_events, const std::string& out, const std::string& registry_out) {
  SynthOptions o;
  o.seed = seed;
  o.n_instances = n;
  o.max_events = max_events;
  const auto schema = default_synth_schema();
  const auto corpus = synth_corpus(o, default_synth_vocab(), schema);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_native_jsonl(out, corpus);
  if (!registry_out.empty()) write_file(registry_out, schema.to_jsonl());
  std::printf("wrote %zu instances, %zu events, %zu arguments to %s\n", corpus.size(), count_events(corpus),
              count_arguments(corpus), out.c_str());
  return 0;
}

int cmd_train(const RunOptions& o) {
  const auto cfg = resolve_config(o);
  const auto seeds = seeds_of(o, cfg);
  const auto data = load_data(o, cfg);
  const auto agg = run_training(o, cfg, data, seeds, o.out, "train");
  std::printf("%zu seed(s): Arg-C %.4f +- %.4f\n", seeds.size(), agg["arg_c_f1"]["mean"].get<double>(),
              agg["arg_c_f1"]["std"].get<double>());
  return 0;
}

int cmd_ablate(const RunOptions& o) {
  if (o.no_saam || o.no_pet || o.no_prompts) throw UsageError("ablate runs every variant; drop the --no-* flags");
  const auto base = resolve_config(o);
  const auto seeds = seeds_of(o, base);
  const auto data = load_data(o, base);
  const std::vector<std::string> variants{"full", "no-saam", "no-pet", "no-prompts"};
  json table = json::array();
  std::vector<Bar> bars;
  double full = 0.0;
  for (const auto& v : variants) {
    auto cfg = base;
    if (v == "no-saam") cfg.ablation.saam = false;
    if (v == "no-pet") cfg.ablation.pet = false;
    if (v == "no-prompts") cfg.ablation.prompts = false;
    const auto agg = run_training(o, cfg, data, seeds, fs::path(o.out) / v, "ablate");
    const double ac = agg["arg_c_f1"]["mean"].get<double>();
    if (v == "full") full = ac;
    table.push_back({{"variant", v}, {"arg_i_f1", agg["arg_i_f1"]}, {"arg_c_f1", agg["arg_c_f1"]}, {"delta_arg_c", ac - full}});
    bars.push_back({v, ac * 100.0});
  }
  write_file(fs::path(o.out) / "ablation.json", json{{"seeds", seeds}, {"variants", table}}.dump(2) + "\n");
  write_file(fs::path(o.out) / "ablation.svg", bar_chart_svg("Arg-C F1 by variant", bars, 100.0));
  for (const auto& row : table) {
    std::printf("%-11s Arg-C %.4f (%+.4f)\n", row["variant"].get<std::string>().c_str(),
                row["arg_c_f1"]["mean"].get<double>(), row["delta_arg_c"].get<double>());
  }
  return 0;
}

struct PredictOptions {
  std::string checkpoint;
  std::string data;
  std::string format = "native";
  std::string registry;
  std::string config;
  std::string mode;
  std::string out;
  std::string analyses = "buckets,overlap,distance";
};

struct PredictRun {
  Loaded loaded;
  std::vector<EAEInstance> corpus;
  std::vector<InstancePrediction> preds;
  Mode mode;
};

PredictRun run_predict(const PredictOptions& o) {
  auto loaded = open_checkpoint(o.checkpoint, o.registry, o.config);
  auto corpus = load_corpus(o.data, parse_corpus_format(o.format), &loaded.registry.registry);
  const Mode mode = o.mode.empty() ? loaded.cfg.scheme.infer_mode : parse_mode(o.mode);
  auto train_cfg = loaded.cfg.train;
  train_cfg.max_encoder_len = loaded.ck.config.max_encoder_len;
  train_cfg.max_decoder_len = loaded.ck.config.max_decoder_len;
  const auto ctx = make_context(loaded.registry.registry, loaded.ck.tokenizer, train_cfg, loaded.cfg.ablation);
  auto preds = predict_corpus(corpus, mode, loaded.model, ctx);
  return {std::move(loaded), std::move(corpus), std::move(preds), mode};
}

int cmd_predict(const PredictOptions& o) {
  const auto r = run_predict(o);
  write_file(o.out, predictions_to_jsonl(r.preds));
  std::printf("wrote predictions for %zu instances to %s\n", r.preds.size(), o.out.c_str());
  return 0;
}

int cmd_eval(const PredictOptions& o) {
  const auto wanted = split_list(o.analyses);
  for (const auto& a : wanted) {
    if (a != "buckets" && a != "overlap" && a != "distance") {
      throw UsageError("unknown analysis '" + a + "' (expected buckets, overlap, distance)");
    }
  }
  const auto r = run_predict(o);
  auto report = score(r.corpus, r.preds);
  std::map<std::string, std::string> plots;
  for (const auto& a : wanted) {
    if (a == "buckets") report.buckets["event_count"] = bucket_by_event_count(r.corpus, r.preds);
    if (a == "overlap") report.buckets["overlap"] = overlap_split(r.corpus, r.preds);
    if (a == "distance") report.buckets["distance"] = distance_curve(r.corpus, r.preds);
  }
  for (const auto& [name, rows] : report.buckets) plots[name + ".svg"] = bucket_chart_svg("Arg-C F1: " + name, rows);
  plots["event_histogram.svg"] = bar_chart_svg("Instances by event count", event_count_histogram(r.corpus));

  json out = to_json(report);
  out["checkpoint"] = o.checkpoint;
  out["data"] = o.data;
  out["inference_mode"] = mode_name(r.mode);
  out["ablation"] = to_json(r.loaded.cfg.ablation);
  out["registry"] = registry_json(r.loaded.registry);
  if (r.loaded.ck.metadata.contains("manifest")) out["manifest"] = r.loaded.ck.metadata["manifest"];

  // Everything is computed before the first file is written.
  const fs::path dir(o.out);
  write_file(dir / "report.json", out.dump(2) + "\n");
  write_file(dir / "predictions.jsonl", predictions_to_jsonl(r.preds));
  for (const auto& [name, svg] : plots) write_file(dir / name, svg);
  std::printf("Arg-I P %.4f R %.4f F1 %.4f\nArg-C P %.4f R %.4f F1 %.4f\n", report.arg_i.p, report.arg_i.r,
              report.arg_i.f1, report.arg_c.p, report.arg_c.r, report.arg_c.f1);
  for (const auto& [name, rows] : report.buckets) {
    for (const auto& b : rows) {
      std::printf("  %-10s %-16s support %5ld  Arg-C F1 %.4f\n", name.c_str(), b.label.c_str(), b.support, b.arg_c.f1);
    }
  }
  return 0;
}

void add_predict_options(CLI::App* cmd, PredictOptions& o, bool with_analyses) {
  cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  cmd->add_option("--data", o.data, "Corpus to predict")->required();
  cmd->add_option("--format", o.format, "Corpus format: native, ace05, rams, wikievents, mlee");
  cmd->add_option("--registry", o.registry, "Prompt registry (default: the one stored in the checkpoint)");
  cmd->add_option("--config", o.config, "Run configuration the checkpoint must match");
  cmd->add_option("--mode", o.mode, "Inference mode: single or multi (default: from the training scheme)");
  cmd->add_option("--out", o.out, with_analyses ? "Report directory" : "Predictions JSONL")->required();
  if (with_analyses) cmd->add_option("--analyses", o.analyses, "Comma list of buckets, overlap, distance");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table-based event argument extraction"};
  app.require_subcommand(1);

  std::uint64_t synth_seed = 0;
  std::size_t synth_n = 50;
  int synth_max_events = 4;
  std::string synth_out, synth_registry_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--n", synth_n, "Number of instances");
  synth->add_option("--max-events", synth_max_events, "Largest number of events per instance")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Output JSONL")->required();
  synth->add_option("--registry-out", synth_registry_out, "Also write the schema's prompt registry");

  RunOptions train_opt, ablate_opt;
  auto* train_cmd = app.add_subcommand("train", "Train one model per seed");
  add_run_options(train_cmd, train_opt);
  auto* ablate_cmd = app.add_subcommand("ablate", "Train the full model and each ablated variant");
  add_run_options(ablate_cmd, ablate_opt);

  PredictOptions predict_opt, eval_opt;
  auto* predict_cmd = app.add_subcommand("predict", "Write predicted arguments as JSONL");
  add_predict_options(predict_cmd, predict_opt, false);
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint and write the report");
  add_predict_options(eval_cmd, eval_opt, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(synth_seed, synth_n, synth_max_events, synth_out, synth_registry_out);
    if (*train_cmd) return cmd_train(train_opt);
    if (*ablate_cmd) return cmd_ablate(ablate_opt);
    if (*predict_cmd) return cmd_predict(predict_opt);
    if (*eval_cmd) return cmd_eval(eval_opt);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
