#pragma once

// Synthetic EAE corpora for desk-scale tests and demos.
//
// Each event type draws its triggers from a small private lexicon and each
// role draws its fillers from another, so the task is learnable by a small
// model. Generated instances cover single events, co-occurring events, events
// that share an argument span and arguments that are the trigger of another
// event.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tabeae/corpus.hpp"
#include "tabeae/error.hpp"
#include "tabeae/prompts.hpp"

namespace tabeae {

inline PromptRegistry default_synth_schema() {
  PromptRegistry reg;
  reg.set_version("synth-1");
  reg.add(make_prompt("Conflict.Attack", "{Attacker} attacked {Target} ( and {Target} ) using {Instrument} at {Place}"));
  reg.add(make_prompt("Life.Die", "{Victim} ( and {Victim} ) died at {Place} killed by {Killer}"));
  reg.add(make_prompt("Life.Injure", "{Victim} injured by {Injurer} with {Instrument}"));
  reg.add(make_prompt("Movement.Transport", "{Agent} transported {Artifact} from {Origin} to {Destination}"));
  reg.add(make_prompt("Contact.Meet", "{Entity} met with {Entity} at {Place}"));
  reg.add(make_prompt("Regulation", "{Something} regulate {Event/Entity} at {Site}"));
  return reg;
}

// Deterministic pronounceable filler words ("bako", "temuri", ...).
inline std::vector<std::string> default_synth_vocab(std::size_t n = 400) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u"};
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::mt19937_64 rng(20230710);
  while (out.size() < n) {
    const int syllables = 1 + static_cast<int>(rng() % 3);
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w += kOnsets[rng() % 14];
      w += kVowels[rng() % 5];
    }
    if (w.size() >= 2 && seen.insert(w).second) out.push_back(w);
  }
  return out;
}

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t n_instances = 50;
  int max_events = 4;
  int triggers_per_type = 3;
  int fillers_per_role = 4;
  double overlap_prob = 0.35;
  double nested_prob = 0.6;
  int max_arg_distance = 6;
};

namespace detail {

inline int uniform(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline bool chance(std::mt19937_64& rng, double p) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
}

}  // namespace detail

inline std::vector<EAEInstance> synth_corpus(const SynthOptions& opt, const std::vector<std::string>& vocab,
                                             const PromptRegistry& schema) {
  if (opt.max_events < 1) throw Error("synth: max_events must be at least 1");
  if (schema.size() == 0) throw Error("synth: schema has no event types");

  std::vector<std::string> roles;
  for (const auto& p : schema.prompts()) {
    for (const auto& r : p.role_set()) {
      if (std::find(roles.begin(), roles.end(), r) == roles.end()) roles.push_back(r);
    }
  }
  constexpr std::size_t kMinFiller = 8;
  const std::size_t needed = schema.size() * static_cast<std::size_t>(opt.triggers_per_type) +
                             roles.size() * static_cast<std::size_t>(opt.fillers_per_role) + kMinFiller;
  if (vocab.size() < needed) {
    throw Error("synth: vocabulary of " + std::to_string(vocab.size()) + " words is too small, schema needs " +
                std::to_string(needed));
  }

  // Vocabulary partition: trigger lexicons, role lexicons, then filler.
  std::size_t cursor = 0;
  std::map<std::string, std::vector<std::string>> trigger_words;
  for (const auto& p : schema.prompts()) {
    for (int i = 0; i < opt.triggers_per_type; ++i) trigger_words[p.event_type].push_back(vocab[cursor++]);
  }
  std::map<std::string, std::vector<std::string>> role_words;
  for (const auto& r : roles) {
    for (int i = 0; i < opt.fillers_per_role; ++i) role_words[r].push_back(vocab[cursor++]);
  }
  const std::vector<std::string> filler(vocab.begin() + static_cast<std::ptrdiff_t>(cursor), vocab.end());

  std::mt19937_64 rng(opt.seed);
  std::vector<EAEInstance> corpus;
  corpus.reserve(opt.n_instances);
  for (std::size_t n = 0; n < opt.n_instances; ++n) {
    const int n_events = detail::uniform(rng, 1, opt.max_events);
    const int seg = 14;
    const int len = 4 + seg * n_events;
    EAEInstance inst;
    inst.doc_id = "synth-" + std::to_string(opt.seed) + "-" + std::to_string(n);
    inst.text.resize(static_cast<std::size_t>(len));
    for (auto& w : inst.text) w = filler[rng() % filler.size()];
    std::vector<char> used(static_cast<std::size_t>(len), 0);

    auto occupy = [&](int s, int e) {
      for (int i = s; i < e; ++i) used[static_cast<std::size_t>(i)] = 1;
    };
    auto is_free = [&](int s, int e) {
      if (s < 0 || e > len) return false;
      for (int i = s; i < e; ++i) {
        if (used[static_cast<std::size_t>(i)]) return false;
      }
      return true;
    };

    for (int i = 0; i < n_events; ++i) {
      const auto& prompt = schema.prompts()[rng() % schema.size()];
      EventRecord ev;
      ev.event_type = prompt.event_type;
      const int pos = 2 + seg * i + detail::uniform(rng, 4, seg - 5);
      const auto& lex = trigger_words[prompt.event_type];
      inst.text[static_cast<std::size_t>(pos)] = lex[rng() % lex.size()];
      ev.trigger = {pos, pos + 1};
      occupy(pos, pos + 1);
      inst.events.push_back(std::move(ev));
    }

    for (int i = 0; i < n_events; ++i) {
      auto& ev = inst.events[static_cast<std::size_t>(i)];
      const auto& prompt = schema.at(ev.event_type);
      std::map<std::string, int> capacity;
      for (const auto& m : prompt.role_mentions) ++capacity[m.role];
      for (const auto& role : prompt.role_set()) {
        // Nested event: the argument is another event's trigger.
        if (role == "Event/Entity" && n_events > 1 && detail::chance(rng, opt.nested_prob)) {
          int other = detail::uniform(rng, 0, n_events - 2);
          if (other >= i) ++other;
          ev.arguments.push_back({role, inst.events[static_cast<std::size_t>(other)].trigger});
          continue;
        }
        int count = detail::chance(rng, 0.65) ? 1 : 0;
        if (count == 1 && capacity[role] > 1 && detail::chance(rng, 0.25)) count = 2;
        for (int c = 0; c < count; ++c) {
          const int width = detail::chance(rng, 0.25) ? 2 : 1;
          for (int attempt = 0; attempt < 24; ++attempt) {
            int off = detail::uniform(rng, -opt.max_arg_distance, opt.max_arg_distance);
            if (off == 0) continue;
            const int s = ev.trigger.start + off;
            if (!is_free(s, s + width)) continue;
            const auto& words = role_words[role];
            for (int k = s; k < s + width; ++k) inst.text[static_cast<std::size_t>(k)] = words[rng() % words.size()];
            occupy(s, s + width);
            ev.arguments.push_back({role, {s, s + width}});
            break;
          }
        }
      }
    }

    // Overlapping events: re-use an argument of an earlier event under a role
    // of the same name.
    for (int i = 1; i < n_events; ++i) {
      if (!detail::chance(rng, opt.overlap_prob)) continue;
      auto& ev = inst.events[static_cast<std::size_t>(i)];
      const auto& prompt = schema.at(ev.event_type);
      const int j = detail::uniform(rng, 0, i - 1);
      for (const auto& arg : inst.events[static_cast<std::size_t>(j)].arguments) {
        if (!prompt.has_role(arg.role)) continue;
        const auto filled = std::count_if(ev.arguments.begin(), ev.arguments.end(),
                                          [&](const Argument& a) { return a.role == arg.role; });
        const auto slots = std::count_if(prompt.role_mentions.begin(), prompt.role_mentions.end(),
                                         [&](const RoleMention& m) { return m.role == arg.role; });
        if (filled >= slots) continue;
        const bool present = std::any_of(ev.arguments.begin(), ev.arguments.end(),
                                         [&](const Argument& a) { return a.span == arg.span; });
        if (!present) {
          ev.arguments.push_back(arg);
          break;
        }
      }
    }

    for (auto& ev : inst.events) std::sort(ev.arguments.begin(), ev.arguments.end(),
                                           [](const Argument& a, const Argument& b) {
                                             return a.span < b.span || (a.span == b.span && a.role < b.role);
                                           });
    validate(inst);
    corpus.push_back(std::move(inst));
  }
  return corpus;
}

}  // namespace tabeae
