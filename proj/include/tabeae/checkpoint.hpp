#pragma once

// Binary checkpoints: magic line, 8-byte little-endian header length, JSON
// header (model config, tokenizer, tensor manifest, free-form metadata), then
// the tensors as raw row-major doubles in manifest order.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabeae/error.hpp"
#include "tabeae/model.hpp"
#include "tabeae/tokenizer.hpp"

namespace tabeae {

inline constexpr char kCheckpointMagic[] = "TABEAE-CKPT-1\n";

struct Checkpoint {
  ModelConfig config;
  Tokenizer tokenizer;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline nlohmann::json manifest(const TabEAEModel& model) {
  nlohmann::json m = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    m.push_back({{"name", p.name}, {"rows", p.var.value().rows()}, {"cols", p.var.value().cols()}});
  }
  return m;
}

// Human-readable list of manifest differences; empty when they agree.
inline std::string manifest_diff(const nlohmann::json& expected, const nlohmann::json& found) {
  std::map<std::string, std::pair<long, long>> want, got;
  for (const auto& t : expected) want[t.at("name")] = {t.at("rows"), t.at("cols")};
  for (const auto& t : found) got[t.at("name")] = {t.at("rows"), t.at("cols")};
  std::ostringstream os;
  auto shape = [](const std::pair<long, long>& s) {
    return std::to_string(s.first) + "x" + std::to_string(s.second);
  };
  for (const auto& [name, s] : want) {
    auto it = got.find(name);
    if (it == got.end()) {
      os << "\n  missing tensor " << name << " (" << shape(s) << ")";
    } else if (it->second != s) {
      os << "\n  " << name << ": model " << shape(s) << ", checkpoint " << shape(it->second);
    }
  }
  for (const auto& [name, s] : got) {
    if (!want.count(name)) os << "\n  unexpected tensor " << name << " (" << shape(s) << ")";
  }
  return os.str();
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const TabEAEModel& model, const Tokenizer& tokenizer,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json header{{"model", to_json(model.config())},
                        {"tokenizer",
                         {{"piece_len", tokenizer.piece_len()},
                          {"max_markers", tokenizer.vocab().max_markers()},
                          {"tokens", tokenizer.vocab().tokens()}}},
                        {"tensors", detail::manifest(model)},
                        {"metadata", metadata}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint '" + path + "'");
  const auto text = header.dump();
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  detail::write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.parameters()) {
    const auto& m = p.var.value();
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw Error("failed writing checkpoint '" + path + "'");
}

namespace detail {

inline nlohmann::json read_header(std::istream& is, const std::string& path) {
  std::string magic(sizeof(kCheckpointMagic) - 1, '\0');
  if (!is.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kCheckpointMagic) {
    throw DataError("'" + path + "' is not a checkpoint");
  }
  const auto n = read_u64(is);
  std::string text(n, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint '" + path + "': truncated header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "': malformed header: " + e.what());
  }
}

inline void read_tensors(std::istream& is, TabEAEModel& model, const std::string& path) {
  for (auto& p : model.parameters()) {
    auto& m = p.var.mutable_value();
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw DataError("checkpoint '" + path + "': truncated at tensor " + p.name);
    }
  }
}

}  // namespace detail

// Restores weights into an existing model; the tensor manifest must match.
inline nlohmann::json load_weights(const std::string& path, TabEAEModel& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint '" + path + "'");
  const auto header = detail::read_header(is, path);
  const auto diff = detail::manifest_diff(detail::manifest(model), header.at("tensors"));
  if (!diff.empty()) throw ShapeError("checkpoint '" + path + "' does not match the model:" + diff);
  detail::read_tensors(is, model, path);
  return header.value("metadata", nlohmann::json::object());
}

// Rebuilds the model and tokenizer stored in a checkpoint.
inline std::pair<TabEAEModel, Checkpoint> load_checkpoint(const std::string& path) {
  Checkpoint ck;
  {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint '" + path + "'");
    const auto header = detail::read_header(is, path);
    ck.config = model_config_from_json(header.at("model"));
    const auto& tok = header.at("tokenizer");
    ck.tokenizer = Tokenizer(Vocabulary::from_tokens(tok.at("tokens").get<std::vector<std::string>>(),
                                                     tok.at("max_markers").get<int>()),
                             tok.at("piece_len").get<std::size_t>());
    ck.metadata = header.value("metadata", nlohmann::json::object());
  }
  TabEAEModel model(ck.config);
  load_weights(path, model);
  return {std::move(model), std::move(ck)};
}

}  // namespace tabeae
