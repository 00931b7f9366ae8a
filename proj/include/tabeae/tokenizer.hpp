#pragma once

// Word-piece style tokenizer for the desk profile.
//
// Words are split on whitespace and every word longer than `piece_len`
// characters is cut into fixed-size pieces; continuation pieces carry a "##"
// prefix. The vocabulary is closed after construction and unknown pieces map
// to <unk>.

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tabeae/error.hpp"

namespace tabeae {

inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";

inline std::string open_marker(int ordinal) { return "<T-" + std::to_string(ordinal) + ">"; }
inline std::string close_marker(int ordinal) { return "</T-" + std::to_string(ordinal) + ">"; }

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  // Specials first: <pad> <unk> <s> </s> then marker pairs 1..max_markers.
  static Vocabulary with_specials(int max_markers) {
    Vocabulary v;
    v.max_markers_ = max_markers;
    v.add(std::string(kPad));
    v.add(std::string(kUnk));
    v.add(std::string(kBos));
    v.add(std::string(kEos));
    for (int i = 1; i <= max_markers; ++i) {
      v.add(open_marker(i));
      v.add(close_marker(i));
    }
    return v;
  }

  int add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    ids_.emplace(token, id);
    tokens_.push_back(token);
    return id;
  }

  int id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? unk_id() : it->second;
  }
  bool contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  int pad_id() const { return 0; }
  int unk_id() const { return 1; }
  int bos_id() const { return 2; }
  int eos_id() const { return 3; }
  int open_marker_id(int ordinal) const { return marker_id(ordinal, 0); }
  int close_marker_id(int ordinal) const { return marker_id(ordinal, 1); }
  int max_markers() const { return max_markers_; }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens, int max_markers) {
    Vocabulary v;
    v.max_markers_ = max_markers;
    for (const auto& t : tokens) v.add(t);
    if (v.size() < 4 + 2 * static_cast<std::size_t>(max_markers) || v.token(0) != kPad ||
        v.token(1) != kUnk || v.token(2) != kBos || v.token(3) != kEos) {
      throw DataError("vocabulary does not start with the reserved special tokens");
    }
    return v;
  }

 private:
  int marker_id(int ordinal, int which) const {
    if (ordinal < 1 || ordinal > max_markers_) {
      throw Error("trigger ordinal " + std::to_string(ordinal) + " exceeds the " +
                  std::to_string(max_markers_) + " marker pairs in the vocabulary");
    }
    return 4 + 2 * (ordinal - 1) + which;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int max_markers_ = 0;
};

class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(Vocabulary vocab, std::size_t piece_len) : vocab_(std::move(vocab)), piece_len_(piece_len) {
    if (piece_len_ == 0) throw Error("tokenizer piece length must be positive");
  }

  std::vector<std::string> pieces(std::string_view word) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < word.size(); i += piece_len_) {
      auto piece = std::string(word.substr(i, piece_len_));
      out.push_back(i == 0 ? piece : "##" + piece);
    }
    if (out.empty()) out.emplace_back();
    return out;
  }

  // Adds every piece of `word` to the vocabulary (used while building it).
  void learn(std::string_view word) {
    for (const auto& p : pieces(word)) vocab_.add(p);
  }

  std::vector<int> ids(std::string_view word) const {
    std::vector<int> out;
    for (const auto& p : pieces(word)) out.push_back(vocab_.id(p));
    return out;
  }

  const Vocabulary& vocab() const { return vocab_; }
  Vocabulary& vocab() { return vocab_; }
  std::size_t piece_len() const { return piece_len_; }

 private:
  Vocabulary vocab_;
  std::size_t piece_len_ = 4;
};

}  // namespace tabeae
