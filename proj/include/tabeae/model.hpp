#pragma once

// Encoder / non-autoregressive table decoder.
//
// One encoder stack encodes the marked text and, separately, every prompt of
// the column header. One decoder stack is run twice: over the text encoding
// with full self-attention and no cross-attention (the context
// representation), and over the initial table with the structure mask plus
// cross-attention to the text encoding (the table representation). Layers are
// post-norm transformer blocks.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabeae/autograd.hpp"
#include "tabeae/error.hpp"
#include "tabeae/marking.hpp"
#include "tabeae/span_select.hpp"
#include "tabeae/structure_mask.hpp"
#include "tabeae/table.hpp"

namespace tabeae {

struct ModelConfig {
  int vocab_size = 0;
  int hidden = 64;
  int heads = 4;
  int ff = 256;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int max_encoder_len = 256;
  int max_decoder_len = 256;
  double dropout = 0.0;
  double init_std = 0.02;
  double layer_norm_eps = 1e-5;
  // Learned positions for decoder inputs; table positions restart at 0.
  bool decoder_positions = true;
  std::uint64_t seed = 0;

  // Small randomly initialized stack with the full wiring.
  static ModelConfig desk(int vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    return c;
  }

  // 24-layer RoBERTa-large geometry split 17 + 7.
  static ModelConfig paper(int vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.hidden = 1024;
    c.heads = 16;
    c.ff = 4096;
    c.encoder_layers = 17;
    c.decoder_layers = 7;
    c.max_encoder_len = 500;
    c.max_decoder_len = 360;
    c.dropout = 0.1;
    c.decoder_positions = true;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},       {"hidden", c.hidden},
          {"heads", c.heads},                 {"ff", c.ff},
          {"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
          {"max_encoder_len", c.max_encoder_len}, {"max_decoder_len", c.max_decoder_len},
          {"dropout", c.dropout},             {"init_std", c.init_std},
          {"layer_norm_eps", c.layer_norm_eps}, {"decoder_positions", c.decoder_positions},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("vocab_size", c.vocab_size);
  get("hidden", c.hidden);
  get("heads", c.heads);
  get("ff", c.ff);
  get("encoder_layers", c.encoder_layers);
  get("decoder_layers", c.decoder_layers);
  get("max_encoder_len", c.max_encoder_len);
  get("max_decoder_len", c.max_decoder_len);
  get("dropout", c.dropout);
  get("init_std", c.init_std);
  get("layer_norm_eps", c.layer_norm_eps);
  get("decoder_positions", c.decoder_positions);
  get("seed", c.seed);
  return c;
}

enum class ParamGroup { kBase, kCrossAttention };

struct Parameter {
  std::string name;
  ag::Var var;
  ParamGroup group = ParamGroup::kBase;
};

namespace nn {

// Box-Muller normal samples, independent of the standard library's
// distribution implementation.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

class Registry {
 public:
  Registry(std::vector<Parameter>* params, NormalSampler* sampler, double std)
      : params_(params), sampler_(sampler), std_(std) {}

  ag::Var normal(const std::string& name, int rows, int cols, ParamGroup group) {
    ag::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std_ * (*sampler_)();
    return add(name, std::move(m), group);
  }
  ag::Var constant(const std::string& name, int rows, int cols, double value, ParamGroup group) {
    return add(name, ag::Matrix::Constant(rows, cols, value), group);
  }

 private:
  ag::Var add(const std::string& name, ag::Matrix m, ParamGroup group) {
    auto v = ag::leaf(std::move(m));
    params_->push_back({name, v, group});
    return v;
  }

  std::vector<Parameter>* params_;
  NormalSampler* sampler_;
  double std_;
};

struct Linear {
  ag::Var weight;  // in x out
  ag::Var bias;    // 1 x out

  Linear() = default;
  Linear(Registry& reg, const std::string& name, int in, int out, ParamGroup g)
      : weight(reg.normal(name + ".weight", in, out, g)), bias(reg.constant(name + ".bias", 1, out, 0.0, g)) {}

  ag::Var operator()(const ag::Var& x) const { return ag::add_row(ag::matmul(x, weight), bias); }
};

struct LayerNorm {
  ag::Var gain;
  ag::Var bias;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(Registry& reg, const std::string& name, int width, double eps_, ParamGroup g)
      : gain(reg.constant(name + ".gain", 1, width, 1.0, g)),
        bias(reg.constant(name + ".bias", 1, width, 0.0, g)),
        eps(eps_) {}

  ag::Var operator()(const ag::Var& x) const { return ag::layer_norm(x, gain, bias, eps); }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(Registry& reg, const std::string& name, int width, int heads_, ParamGroup g)
      : q(reg, name + ".q", width, width, g),
        k(reg, name + ".k", width, width, g),
        v(reg, name + ".v", width, width, g),
        o(reg, name + ".o", width, width, g),
        heads(heads_) {}

  ag::Var operator()(const ag::Var& queries, const ag::Var& memory, const ag::AttentionMask* mask) const {
    const auto Q = q(queries);
    const auto K = k(memory);
    const auto V = v(memory);
    const Eigen::Index dh = Q.cols() / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ag::Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto qh = ag::slice_cols(Q, h * dh, dh);
      const auto kh = ag::slice_cols(K, h * dh, dh);
      const auto vh = ag::slice_cols(V, h * dh, dh);
      const auto probs = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), scale), mask);
      outs.push_back(ag::matmul(probs, vh));
    }
    return o(heads == 1 ? outs.front() : ag::concat_cols(outs));
  }
};

struct FeedForward {
  Linear in, out;

  FeedForward() = default;
  FeedForward(Registry& reg, const std::string& name, int width, int inner, ParamGroup g)
      : in(reg, name + ".in", width, inner, g), out(reg, name + ".out", inner, width, g) {}

  ag::Var operator()(const ag::Var& x) const { return out(ag::gelu(in(x))); }
};

struct EncoderLayer {
  MultiHeadAttention self_attn;
  LayerNorm ln1;
  FeedForward ff;
  LayerNorm ln2;
};

struct DecoderLayer {
  MultiHeadAttention self_attn;
  LayerNorm ln1;
  MultiHeadAttention cross_attn;
  LayerNorm ln_cross;
  FeedForward ff;
  LayerNorm ln2;
};

}  // namespace nn

class TabEAEModel {
 public:
  explicit TabEAEModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.vocab_size <= 0) throw Error("model: vocab_size must be positive");
    if (cfg.hidden % cfg.heads != 0) throw Error("model: hidden width must be divisible by the head count");
    nn::NormalSampler sampler(cfg.seed);
    nn::Registry reg(&params_, &sampler, cfg.init_std);
    const auto B = ParamGroup::kBase;
    const int d = cfg.hidden;
    const int max_pos = std::max(cfg.max_encoder_len, cfg.max_decoder_len);
    token_embedding_ = reg.normal("embeddings.token", cfg.vocab_size, d, B);
    position_embedding_ = reg.normal("embeddings.position", max_pos, d, B);
    embedding_ln_ = nn::LayerNorm(reg, "embeddings.ln", d, cfg.layer_norm_eps, B);
    for (int i = 0; i < cfg.encoder_layers; ++i) {
      const auto p = "encoder.layers." + std::to_string(i);
      encoder_.push_back({nn::MultiHeadAttention(reg, p + ".self_attn", d, cfg.heads, B),
                          nn::LayerNorm(reg, p + ".ln1", d, cfg.layer_norm_eps, B),
                          nn::FeedForward(reg, p + ".ff", d, cfg.ff, B),
                          nn::LayerNorm(reg, p + ".ln2", d, cfg.layer_norm_eps, B)});
    }
    if (cfg.decoder_positions) decoder_position_ = reg.normal("decoder.position", max_pos, d, B);
    decoder_ln_ = nn::LayerNorm(reg, "decoder.ln", d, cfg.layer_norm_eps, B);
    for (int i = 0; i < cfg.decoder_layers; ++i) {
      const auto p = "decoder.layers." + std::to_string(i);
      const auto C = ParamGroup::kCrossAttention;
      decoder_.push_back({nn::MultiHeadAttention(reg, p + ".self_attn", d, cfg.heads, B),
                          nn::LayerNorm(reg, p + ".ln1", d, cfg.layer_norm_eps, B),
                          nn::MultiHeadAttention(reg, p + ".cross_attn", d, cfg.heads, C),
                          nn::LayerNorm(reg, p + ".ln_cross", d, cfg.layer_norm_eps, C),
                          nn::FeedForward(reg, p + ".ff", d, cfg.ff, B),
                          nn::LayerNorm(reg, p + ".ln2", d, cfg.layer_norm_eps, B)});
    }
    w_start_ = reg.normal("span.w_start", 1, d, B);
    w_end_ = reg.normal("span.w_end", 1, d, B);
    // Selector weights start near one so that h * w is close to h.
    w_start_.mutable_value().array() += 1.0;
    w_end_.mutable_value().array() += 1.0;
  }

  TabEAEModel(const TabEAEModel&) = delete;
  TabEAEModel& operator=(const TabEAEModel&) = delete;
  TabEAEModel(TabEAEModel&&) = default;
  TabEAEModel& operator=(TabEAEModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  Parameter& parameter(std::string_view name) {
    for (auto& p : params_) {
      if (p.name == name) return p;
    }
    throw Error("model has no parameter '" + std::string(name) + "'");
  }

  const ag::Var& w_start() const { return w_start_; }
  const ag::Var& w_end() const { return w_end_; }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  // Token plus position embeddings, normalized.
  ag::Var embed(const std::vector<int>& ids, std::mt19937_64* rng = nullptr) const {
    check_ids(ids);
    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) pos[i] = static_cast<int>(i);
    auto x = ag::add(ag::gather_rows(token_embedding_, ids), ag::gather_rows(position_embedding_, pos));
    return ag::dropout(embedding_ln_(x), cfg_.dropout, rng);
  }

  // Raw rows of the token embedding table.
  ag::Var token_embeddings(const std::vector<int>& ids) const {
    check_ids(ids);
    return ag::gather_rows(token_embedding_, ids);
  }

  // E = Encoder(tokens).
  ag::Var encode(const std::vector<int>& ids, std::mt19937_64* rng = nullptr) const {
    if (ids.empty()) throw Error("encode: empty input");
    if (static_cast<int>(ids.size()) > cfg_.max_encoder_len) {
      throw Error("encode: input of " + std::to_string(ids.size()) + " tokens exceeds the maximum encoder length " +
                  std::to_string(cfg_.max_encoder_len) + "; window the text first");
    }
    auto x = embed(ids, rng);
    for (const auto& layer : encoder_) {
      x = layer.ln1(ag::add(x, ag::dropout(layer.self_attn(x, x, nullptr), cfg_.dropout, rng)));
      x = layer.ln2(ag::add(x, ag::dropout(layer.ff(x), cfg_.dropout, rng)));
    }
    return x;
  }

  // H = Decoder(E) with full self-attention and cross-attention skipped.
  ag::Var contextualize(const ag::Var& text_encoding, std::mt19937_64* rng = nullptr) const {
    if (text_encoding.cols() != cfg_.hidden) throw ShapeError("contextualize: width mismatch");
    return run_decoder(text_encoding, nullptr, nullptr, rng);
  }

  // H_Tab = Decoder(E_Tab) with the structure mask and cross-attention to the
  // text encoding.
  ag::Var decode_table(const ag::Var& table_embedding, const StructureMask& mask, const ag::Var& text_encoding,
                       std::mt19937_64* rng = nullptr) const {
    if (mask.size != table_embedding.rows()) {
      throw ShapeError("decode_table: mask covers " + std::to_string(mask.size) + " positions but the table has " +
                       std::to_string(table_embedding.rows()));
    }
    if (table_embedding.rows() > cfg_.max_decoder_len) {
      throw Error("decode_table: table of " + std::to_string(table_embedding.rows()) +
                  " positions exceeds the maximum decoder length " + std::to_string(cfg_.max_decoder_len));
    }
    if (table_embedding.cols() != cfg_.hidden || text_encoding.cols() != cfg_.hidden) {
      throw ShapeError("decode_table: width mismatch");
    }
    const auto attention = mask.as_attention();
    return run_decoder(table_embedding, &attention, &text_encoding, rng);
  }

 private:
  ag::Var run_decoder(const ag::Var& input, const ag::AttentionMask* mask, const ag::Var* memory,
                      std::mt19937_64* rng) const {
    auto x = input;
    if (cfg_.decoder_positions) {
      if (input.rows() > decoder_position_.rows()) throw Error("decoder input longer than the position table");
      std::vector<int> pos(static_cast<std::size_t>(input.rows()));
      for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
      x = ag::add(x, ag::gather_rows(decoder_position_, pos));
    }
    x = decoder_ln_(x);
    for (const auto& layer : decoder_) {
      x = layer.ln1(ag::add(x, ag::dropout(layer.self_attn(x, x, mask), cfg_.dropout, rng)));
      if (memory != nullptr) {
        x = layer.ln_cross(ag::add(x, ag::dropout(layer.cross_attn(x, *memory, nullptr), cfg_.dropout, rng)));
      }
      x = layer.ln2(ag::add(x, ag::dropout(layer.ff(x), cfg_.dropout, rng)));
    }
    return x;
  }

  void check_ids(const std::vector<int>& ids) const {
    for (int id : ids) {
      if (id < 0 || id >= cfg_.vocab_size) {
        throw Error("token id " + std::to_string(id) + " outside the vocabulary of " + std::to_string(cfg_.vocab_size));
      }
    }
  }

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  ag::Var token_embedding_;
  ag::Var position_embedding_;
  nn::LayerNorm embedding_ln_;
  std::vector<nn::EncoderLayer> encoder_;
  ag::Var decoder_position_;
  nn::LayerNorm decoder_ln_;
  std::vector<nn::DecoderLayer> decoder_;
  ag::Var w_start_;
  ag::Var w_end_;
};

// Copies a pretrained bidirectional stack into the model: the bottom layers
// become the encoder, the top layers supply the decoder's self-attention and
// feed-forward weights. Cross-attention and decoder positions keep their
// fresh initialization. Tensor names follow the model's own scheme with a
// "layers.<i>." prefix for stack layers, e.g. "layers.3.self_attn.q.weight".
inline void load_pretrained_stack(TabEAEModel& model, const std::map<std::string, ag::Matrix>& tensors) {
  const auto& cfg = model.config();
  const int total = cfg.encoder_layers + cfg.decoder_layers;
  int stack_layers = 0;
  while (tensors.count("layers." + std::to_string(stack_layers) + ".self_attn.q.weight") != 0) ++stack_layers;
  if (stack_layers != total) {
    throw ShapeError("pretrained stack has " + std::to_string(stack_layers) + " layers, model needs " +
                     std::to_string(cfg.encoder_layers) + " + " + std::to_string(cfg.decoder_layers));
  }
  auto copy = [&](const std::string& src, const std::string& dst) {
    auto it = tensors.find(src);
    if (it == tensors.end()) throw ShapeError("pretrained stack is missing tensor '" + src + "'");
    auto& p = model.parameter(dst);
    if (p.var.rows() != it->second.rows() || p.var.cols() != it->second.cols()) {
      throw ShapeError("pretrained tensor '" + src + "' is " + std::to_string(it->second.rows()) + "x" +
                       std::to_string(it->second.cols()) + ", parameter '" + dst + "' is " +
                       std::to_string(p.var.rows()) + "x" + std::to_string(p.var.cols()));
    }
    p.var.mutable_value() = it->second;
  };
  for (const char* name : {"embeddings.token", "embeddings.position", "embeddings.ln.gain", "embeddings.ln.bias"}) {
    copy(name, name);
  }
  static const char* kLayerTensors[] = {
      "self_attn.q.weight", "self_attn.q.bias", "self_attn.k.weight", "self_attn.k.bias", "self_attn.v.weight",
      "self_attn.v.bias",   "self_attn.o.weight", "self_attn.o.bias", "ln1.gain",          "ln1.bias",
      "ff.in.weight",       "ff.in.bias",        "ff.out.weight",     "ff.out.bias",       "ln2.gain",
      "ln2.bias"};
  for (int i = 0; i < total; ++i) {
    const auto src = "layers." + std::to_string(i) + ".";
    const auto dst = i < cfg.encoder_layers ? "encoder.layers." + std::to_string(i) + "."
                                            : "decoder.layers." + std::to_string(i - cfg.encoder_layers) + ".";
    for (const char* t : kLayerTensors) copy(src + t, dst + t);
  }
}

}  // namespace tabeae
