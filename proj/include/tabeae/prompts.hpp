#pragma once

// Event-schema prompt registry.
//
// A prompt is a short natural-language template per event type. Each role
// mention inside the prompt becomes one column of the slotted table, so a
// role written twice ("Victim ( and Victim )") gets two argument slots.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tabeae/error.hpp"

namespace tabeae {

struct RoleMention {
  std::string role;
  std::size_t char_start = 0;
  std::size_t char_end = 0;

  bool operator==(const RoleMention&) const = default;
};

struct PromptTemplate {
  std::string event_type;
  std::string text;
  std::vector<RoleMention> role_mentions;

  // Distinct roles in first-mention order.
  std::vector<std::string> role_set() const {
    std::vector<std::string> roles;
    for (const auto& m : role_mentions) {
      if (std::find(roles.begin(), roles.end(), m.role) == roles.end()) {
        roles.push_back(m.role);
      }
    }
    return roles;
  }

  bool has_role(std::string_view role) const {
    return std::any_of(role_mentions.begin(), role_mentions.end(),
                       [&](const RoleMention& m) { return m.role == role; });
  }

  bool operator==(const PromptTemplate&) const = default;
};

// Builds a prompt from brace markup: "{Victim} died at {Place}". The braces
// are dropped and each braced phrase becomes a role mention named after it.
inline PromptTemplate make_prompt(std::string event_type, std::string_view markup) {
  PromptTemplate p;
  p.event_type = std::move(event_type);
  std::size_t i = 0;
  while (i < markup.size()) {
    if (markup[i] == '{') {
      auto close = markup.find('}', i);
      if (close == std::string_view::npos) {
        throw DataError("prompt markup for '" + p.event_type + "': unbalanced '{'");
      }
      std::string role(markup.substr(i + 1, close - i - 1));
      if (role.empty()) {
        throw DataError("prompt markup for '" + p.event_type + "': empty role");
      }
      RoleMention m{role, p.text.size(), p.text.size() + role.size()};
      p.text += role;
      p.role_mentions.push_back(std::move(m));
      i = close + 1;
    } else {
      p.text += markup[i++];
    }
  }
  return p;
}

inline void validate_prompt(const PromptTemplate& p) {
  if (p.event_type.empty()) throw DataError("prompt with empty event type");
  std::size_t prev_end = 0;
  for (const auto& m : p.role_mentions) {
    if (m.role.empty()) {
      throw DataError("prompt '" + p.event_type + "': role mention without role name");
    }
    if (m.char_start >= m.char_end || m.char_end > p.text.size()) {
      throw DataError("prompt '" + p.event_type + "': role mention '" + m.role +
                      "' has invalid character span");
    }
    if (m.char_start < prev_end) {
      throw DataError("prompt '" + p.event_type +
                      "': role mentions overlap or are out of order");
    }
    prev_end = m.char_end;
  }
}

class PromptRegistry {
 public:
  PromptRegistry() = default;

  void add(PromptTemplate prompt) {
    validate_prompt(prompt);
    auto [it, inserted] = index_.emplace(prompt.event_type, prompts_.size());
    if (!inserted) {
      throw DataError("duplicate prompt for event type '" + prompt.event_type + "'");
    }
    prompts_.push_back(std::move(prompt));
  }

  bool contains(std::string_view type) const {
    return index_.find(std::string(type)) != index_.end();
  }

  const PromptTemplate* find(std::string_view type) const {
    auto it = index_.find(std::string(type));
    return it == index_.end() ? nullptr : &prompts_[it->second];
  }

  const PromptTemplate& at(std::string_view type) const {
    const auto* p = find(type);
    if (p == nullptr) {
      throw DataError("no prompt registered for event type '" + std::string(type) + "'");
    }
    return *p;
  }

  const std::vector<PromptTemplate>& prompts() const { return prompts_; }
  std::size_t size() const { return prompts_.size(); }
  const std::string& version() const { return version_; }
  void set_version(std::string v) { version_ = std::move(v); }

  // One JSON record per line: {type, prompt, role_mentions:[{role, char_start,
  // char_end}]}. An optional leading {"version": ...} record tags the file.
  std::string to_jsonl() const {
    std::ostringstream out;
    if (!version_.empty()) out << nlohmann::json{{"version", version_}}.dump() << '\n';
    for (const auto& p : prompts_) {
      nlohmann::json mentions = nlohmann::json::array();
      for (const auto& m : p.role_mentions) {
        mentions.push_back({{"role", m.role}, {"char_start", m.char_start}, {"char_end", m.char_end}});
      }
      out << nlohmann::json{{"type", p.event_type}, {"prompt", p.text}, {"role_mentions", mentions}}.dump()
          << '\n';
    }
    return out.str();
  }

  static PromptRegistry from_jsonl(std::string_view content) {
    PromptRegistry reg;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError("prompt registry line " + std::to_string(lineno) + ": " + e.what());
      }
      if (j.contains("version") && !j.contains("type")) {
        reg.version_ = j.at("version").get<std::string>();
        continue;
      }
      reg.add(parse_record(j, lineno));
    }
    return reg;
  }

  static PromptRegistry from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open prompt registry '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_jsonl(ss.str());
  }

 private:
  static PromptTemplate parse_record(const nlohmann::json& j, std::size_t lineno) {
    auto where = "prompt registry line " + std::to_string(lineno);
    try {
      PromptTemplate p;
      p.event_type = j.at("type").get<std::string>();
      p.text = j.at("prompt").get<std::string>();
      for (const auto& m : j.at("role_mentions")) {
        p.role_mentions.push_back({m.at("role").get<std::string>(),
                                   m.at("char_start").get<std::size_t>(),
                                   m.at("char_end").get<std::size_t>()});
      }
      return p;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }

  std::vector<PromptTemplate> prompts_;
  std::map<std::string, std::size_t> index_;
  std::string version_;
};

// Header built from bare role names instead of prompts (the "w/o Prompts"
// ablation). Every role mention is kept so slot capacity is unchanged.
inline PromptTemplate bare_role_prompt(const PromptTemplate& p) {
  PromptTemplate bare;
  bare.event_type = p.event_type;
  for (const auto& m : p.role_mentions) {
    if (!bare.text.empty()) bare.text += ' ';
    bare.role_mentions.push_back({m.role, bare.text.size(), bare.text.size() + m.role.size()});
    bare.text += m.role;
  }
  return bare;
}

}  // namespace tabeae
