#pragma once

// Run configuration: profile presets, JSON round trip, vocabulary building.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabeae/corpus.hpp"
#include "tabeae/error.hpp"
#include "tabeae/model.hpp"
#include "tabeae/pipeline.hpp"
#include "tabeae/prompts.hpp"
#include "tabeae/schemes.hpp"
#include "tabeae/tokenizer.hpp"

namespace tabeae {

inline const char* cost_name(AssignmentCost c) { return c == AssignmentCost::kLogit ? "logit" : "probability"; }

inline AssignmentCost parse_cost(const std::string& s) {
  if (s == "logit") return AssignmentCost::kLogit;
  if (s == "probability") return AssignmentCost::kProbability;
  throw UsageError("unknown assignment cost '" + s + "' (expected logit or probability)");
}

inline nlohmann::json to_json(const AblationConfig& a) {
  return {{"saam", a.saam},
          {"pet", a.pet},
          {"prompts", a.prompts},
          {"symmetric_header_trigger", a.symmetric_header_trigger},
          {"assignment_cost", cost_name(a.assignment_cost)}};
}

inline AblationConfig ablation_from_json(const nlohmann::json& j, AblationConfig a = {}) {
  if (j.contains("saam")) a.saam = j.at("saam").get<bool>();
  if (j.contains("pet")) a.pet = j.at("pet").get<bool>();
  if (j.contains("prompts")) a.prompts = j.at("prompts").get<bool>();
  if (j.contains("symmetric_header_trigger")) a.symmetric_header_trigger = j.at("symmetric_header_trigger").get<bool>();
  if (j.contains("assignment_cost")) a.assignment_cost = parse_cost(j.at("assignment_cost").get<std::string>());
  return a;
}

enum class Profile { kDesk, kPaper };

inline Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::kDesk;
  if (s == "paper") return Profile::kPaper;
  throw UsageError("unknown profile '" + s + "' (expected desk or paper)");
}

inline const char* profile_name(Profile p) { return p == Profile::kDesk ? "desk" : "paper"; }

struct RunConfig {
  Profile profile = Profile::kDesk;
  std::string dataset = "synth";
  SchemeConfig scheme;
  TrainConfig train = TrainConfig::desk();
  ModelConfig model = ModelConfig::desk(0);  // vocab_size set from the tokenizer
  AblationConfig ablation;
  int piece_len = 4;
  int max_markers = 16;

  static RunConfig preset(Profile profile, const std::string& dataset = "synth") {
    RunConfig c;
    c.profile = profile;
    c.dataset = dataset;
    if (profile == Profile::kPaper) {
      c.train = TrainConfig::paper(dataset == "synth" ? "wikievents" : dataset);
      c.model = ModelConfig::paper(0);
      c.model.max_encoder_len = c.train.max_encoder_len;
      c.model.max_decoder_len = c.train.max_decoder_len;
    }
    return c;
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"profile", profile_name(c.profile)},
          {"dataset", c.dataset},
          {"scheme", c.scheme.name()},
          {"train", to_json(c.train)},
          {"model", to_json(c.model)},
          {"ablation", to_json(c.ablation)},
          {"piece_len", c.piece_len},
          {"max_markers", c.max_markers}};
}

namespace detail {

// Every key of `j` must appear in `known`.
inline void check_keys(const nlohmann::json& j, const nlohmann::json& known, const std::string& where) {
  if (!j.is_object()) throw UsageError("run config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw UsageError("run config: unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

// Keys absent from `j` keep the values of the profile preset named in it.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  const auto known = to_json(RunConfig{});
  detail::check_keys(j, known, "the top level");
  for (const char* section : {"train", "model", "ablation"}) {
    if (j.contains(section)) detail::check_keys(j.at(section), known.at(section), std::string("'") + section + "'");
  }
  try {
    auto c = RunConfig::preset(parse_profile(j.value("profile", std::string("desk"))),
                               j.value("dataset", std::string("synth")));
    if (j.contains("scheme")) c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"), c.model);
    if (j.contains("ablation")) c.ablation = ablation_from_json(j.at("ablation"), c.ablation);
    if (j.contains("piece_len")) c.piece_len = j.at("piece_len").get<int>();
    if (j.contains("max_markers")) c.max_markers = j.at("max_markers").get<int>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed run config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return run_config_from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

// Vocabulary from every word of the corpus texts and the prompts. Marker
// pairs cover the largest event count in the corpus.
inline Tokenizer build_tokenizer(const std::vector<EAEInstance>& corpus, const PromptRegistry& registry,
                                 int piece_len = 4, int max_markers = 16) {
  std::size_t most = 1;
  for (const auto& inst : corpus) most = std::max(most, inst.events.size());
  Tokenizer tok(Vocabulary::with_specials(std::max(max_markers, static_cast<int>(most))),
                static_cast<std::size_t>(piece_len));
  for (const auto& inst : corpus) {
    for (const auto& w : inst.text) tok.learn(w);
  }
  for (const auto& p : registry.prompts()) {
    for (const auto& w : split_whitespace(p.text)) tok.learn(w);
    for (const auto& r : p.role_set()) tok.learn(r);
  }
  return tok;
}

}  // namespace tabeae
