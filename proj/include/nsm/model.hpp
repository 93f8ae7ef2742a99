#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsm/error.hpp"
#include "nsm/tape.hpp"
#include "nsm/tensor.hpp"
#include "nsm/value.hpp"

namespace nsm {

/// Weights of one GRU layer: x-path W, h-path U and bias b for the update
/// gate z, reset gate r and candidate state.
struct GRUParams {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;

  GRUParams() = default;
  GRUParams(std::size_t input_dim, std::size_t hidden_dim)
      : w_z(Tensor::matrix(hidden_dim, input_dim)), u_z(Tensor::matrix(hidden_dim, hidden_dim)),
        b_z(Tensor::vector(hidden_dim)), w_r(Tensor::matrix(hidden_dim, input_dim)),
        u_r(Tensor::matrix(hidden_dim, hidden_dim)), b_r(Tensor::vector(hidden_dim)),
        w_h(Tensor::matrix(hidden_dim, input_dim)), u_h(Tensor::matrix(hidden_dim, hidden_dim)),
        b_h(Tensor::vector(hidden_dim)) {}

  std::size_t input_dim() const { return w_z.cols(); }
  std::size_t hidden_dim() const { return w_z.rows(); }

  friend bool operator==(const GRUParams&, const GRUParams&) = default;
};

/// One GRU step on a tape:
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   h~ = tanh(W_h x + U_h (r * h) + b_h)
///   h' = z * h + (1 - z) * h~
inline Tape::Id gru_step(Tape& t, const GRUParams& p, Tape::Id h, Tape::Id x) {
  if (t.value(h).size() != p.hidden_dim() || t.value(x).size() != p.input_dim())
    throw ContractError("gru_step shape mismatch");
  const auto z = t.sigmoid(t.add(t.add(t.matvec(p.w_z, x), t.matvec(p.u_z, h)), t.param(p.b_z)));
  const auto r = t.sigmoid(t.add(t.add(t.matvec(p.w_r, x), t.matvec(p.u_r, h)), t.param(p.b_r)));
  const auto cand = t.tanh(t.add(t.add(t.matvec(p.w_h, x), t.matvec(p.u_h, t.mul(r, h))), t.param(p.b_h)));
  return t.add(t.mul(z, h), t.mul(t.one_minus(z), cand));
}

inline Vec gru_step(const Vec& h, const Vec& x, const GRUParams& p) {
  Tape t;
  const auto hi = t.constant(h);
  const auto xi = t.constant(x);
  return t.value(gru_step(t, p, hi, xi));
}

/// Dot-product attention: s_t = u . (W_a h_t), a = softmax(s),
/// ctx = sum_t a_t h_t, output = tanh(W_c [u; ctx]).
/// `projected[t]` must hold W_a h_t (computed once per question).
inline Tape::Id attend(Tape& t, const Tensor& combine, Tape::Id u, const std::vector<Tape::Id>& encoder_outputs,
                       const std::vector<Tape::Id>& projected) {
  if (encoder_outputs.empty()) throw ContractError("attention over no encoder outputs");
  std::vector<Tape::Id> scores;
  scores.reserve(projected.size());
  for (auto k : projected) scores.push_back(t.dot(u, k));
  const auto weights = t.softmax(t.stack(scores));
  const auto context = t.weighted_sum(weights, encoder_outputs);
  return t.tanh(t.matvec(combine, t.concat(u, context)));
}

struct AttentionResult {
  Vec weights;
  Vec context;
  Vec output;
};

inline AttentionResult attention(const Vec& u, const std::vector<Vec>& encoder_outputs, const Tensor& attention_w,
                                 const Tensor& combine) {
  if (encoder_outputs.empty()) throw ContractError("attention over no encoder outputs");
  Tape t;
  const auto ui = t.constant(u);
  std::vector<Tape::Id> outs, proj;
  for (const auto& h : encoder_outputs) {
    outs.push_back(t.constant(h));
    proj.push_back(t.matvec(attention_w, outs.back()));
  }
  std::vector<Tape::Id> scores;
  for (auto k : proj) scores.push_back(t.dot(ui, k));
  const auto weights = t.softmax(t.stack(scores));
  const auto context = t.weighted_sum(weights, outs);
  const auto output = t.tanh(t.matvec(combine, t.concat(ui, context)));
  return {t.value(weights), t.value(context), t.value(output)};
}

/// Decoder output vocabulary: fixed syntax tokens followed by properties.
struct TokenVocab {
  static constexpr std::size_t kOpen = 0, kClose = 1, kReturn = 2, kGo = 3, kFirstFunc = 4, kFirstProp = 8;
  static inline const std::vector<std::string> kFixed = {"(", ")", "RETURN", "GO", "Hop", "ArgMax", "ArgMin", "Equal"};

  std::vector<std::string> items;
  std::unordered_map<std::string, std::size_t> index;

  TokenVocab() = default;
  explicit TokenVocab(const std::vector<PropertyId>& properties) {
    for (const auto& s : kFixed) add(s);
    for (const auto& p : properties) add(p);
  }

  std::size_t size() const { return items.size(); }
  std::vector<PropertyId> properties() const { return {items.begin() + kFirstProp, items.end()}; }
  const std::size_t* find(const std::string& s) const {
    auto it = index.find(s);
    return it == index.end() ? nullptr : &it->second;
  }

 private:
  void add(const std::string& s) {
    if (index.emplace(s, items.size()).second) items.push_back(s);
  }
};

/// Question-word vocabulary; index 0 is the unknown word, 1 is "ENT".
struct WordVocab {
  static constexpr std::size_t kUnk = 0, kEnt = 1;

  std::vector<std::string> items;
  std::unordered_map<std::string, std::size_t> index;

  WordVocab() : WordVocab(std::vector<std::string>{}) {}
  explicit WordVocab(const std::vector<std::string>& words) {
    add("<unk>");
    add("ENT");
    for (const auto& w : words) add(w);
  }

  std::size_t size() const { return items.size(); }
  std::size_t lookup(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? kUnk : it->second;
  }

 private:
  void add(const std::string& s) {
    if (index.emplace(s, items.size()).second) items.push_back(s);
  }
};

struct ModelDims {
  std::size_t embed = 32;
  std::size_t hidden = 64;
};

/// Every trainable tensor of the programmer.
struct ModelParams {
  Tensor word_embedding;   // [words, embed]
  Tensor token_embedding;  // [tokens, embed], decoder inputs for static tokens
  GRUParams encoder;       // embed -> hidden
  GRUParams decoder;       // embed -> hidden
  Tensor attention;        // [hidden, hidden]
  Tensor combine;          // [hidden, 2 * hidden]
  Tensor output;           // [tokens, hidden]
  Tensor output_bias;      // [tokens]
  Tensor var_query;        // [hidden, hidden], decoder output -> key space for variable logits
  Tensor var_embed;        // [embed, hidden], memory key -> decoder input for variable tokens

  ModelParams() = default;
  ModelParams(const ModelDims& d, std::size_t words, std::size_t tokens)
      : word_embedding(Tensor::matrix(words, d.embed)), token_embedding(Tensor::matrix(tokens, d.embed)),
        encoder(d.embed, d.hidden), decoder(d.embed, d.hidden), attention(Tensor::matrix(d.hidden, d.hidden)),
        combine(Tensor::matrix(d.hidden, 2 * d.hidden)), output(Tensor::matrix(tokens, d.hidden)),
        output_bias(Tensor::vector(tokens)), var_query(Tensor::matrix(d.hidden, d.hidden)),
        var_embed(Tensor::matrix(d.embed, d.hidden)) {}

  /// Flat, fixed-order view of all tensors.
  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out{&word_embedding, &token_embedding};
    for (GRUParams* g : {&encoder, &decoder})
      for (Tensor* t : {&g->w_z, &g->u_z, &g->b_z, &g->w_r, &g->u_r, &g->b_r, &g->w_h, &g->u_h, &g->b_h})
        out.push_back(t);
    for (Tensor* t : {&attention, &combine, &output, &output_bias, &var_query, &var_embed}) out.push_back(t);
    return out;
  }
  std::vector<const Tensor*> tensors() const {
    auto v = const_cast<ModelParams*>(this)->tensors();
    return {v.begin(), v.end()};
  }

  static const std::vector<std::string>& tensor_names() {
    static const std::vector<std::string> names = [] {
      std::vector<std::string> n{"word_embedding", "token_embedding"};
      for (const char* g : {"encoder", "decoder"})
        for (const char* t : {"w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"})
          n.push_back(std::string(g) + "." + t);
      for (const char* t : {"attention", "combine", "output", "output_bias", "var_query", "var_embed"}) n.push_back(t);
      return n;
    }();
    return names;
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
  }

  /// Same shapes, all zeros.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto* t : z.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
    return z;
  }

  /// Binds every tensor of `this` to the matching tensor of `grads`.
  Tape::Binding bind(ModelParams& grads) const {
    Tape::Binding b;
    auto mine = tensors();
    auto theirs = grads.tensors();
    for (std::size_t i = 0; i < mine.size(); ++i) b.emplace_back(mine[i], theirs[i]);
    return b;
  }

  /// uniform(-scale, scale) for every scalar, in tensors() order.
  void init_uniform(std::uint64_t seed, double scale = 0.1) {
    std::mt19937_64 rng(seed);
    for (auto* t : tensors()) t->fill_uniform(rng, -scale, scale);
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto* t : tensors())
      for (double x : t->data) s += x * x;
    return s;
  }

  /// this += k * other.
  void axpy(double k, const ModelParams& other) {
    auto mine = tensors();
    auto theirs = other.tensors();
    for (std::size_t i = 0; i < mine.size(); ++i)
      for (std::size_t j = 0; j < mine[i]->size(); ++j) mine[i]->data[j] += k * theirs[i]->data[j];
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Parameters together with the vocabularies they are indexed by.
struct Model {
  ModelDims dims;
  WordVocab words;
  TokenVocab tokens;
  ModelParams params;

  Model() = default;
  Model(const ModelDims& d, WordVocab w, TokenVocab t, std::uint64_t seed)
      : dims(d), words(std::move(w)), tokens(std::move(t)), params(d, words.size(), tokens.size()) {
    params.init_uniform(seed);
  }
};

inline constexpr const char* kCheckpointMagic = "nsm-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Text checkpoint: header, vocabularies, then every tensor with its shape
/// and shortest round-trip decimal values.
inline std::string serialize_model(const Model& m) {
  std::ostringstream out;
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "embed " << m.dims.embed << '\n' << "hidden " << m.dims.hidden << '\n';
  out << "words " << m.words.size() << '\n';
  for (const auto& w : m.words.items) out << w << '\n';
  const auto props = m.tokens.properties();
  out << "properties " << props.size() << '\n';
  for (const auto& p : props) out << p << '\n';
  const auto tensors = m.params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = *tensors[i];
    out << "tensor " << ModelParams::tensor_names()[i] << ' ' << t.shape.size();
    for (auto d : t.shape) out << ' ' << d;
    out << '\n';
    for (std::size_t j = 0; j < t.size(); ++j) out << (j ? " " : "") << format_number(t.data[j]);
    out << '\n';
  }
  return out.str();
}

inline Model parse_model(std::istream& in) {
  auto fail = [](const std::string& what) -> FormatError { return FormatError("checkpoint: " + what); };
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) throw fail("bad header");
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));
  auto read_count = [&](const char* key) {
    std::string k;
    std::size_t n = 0;
    if (!(in >> k >> n) || k != key) throw fail(std::string("expected '") + key + "'");
    return n;
  };
  auto read_lines = [&](std::size_t n) {
    std::vector<std::string> items(n);
    std::string rest;
    std::getline(in, rest);
    for (auto& s : items)
      if (!std::getline(in, s)) throw fail("truncated vocabulary");
    return items;
  };
  ModelDims dims;
  dims.embed = read_count("embed");
  dims.hidden = read_count("hidden");
  auto words = read_lines(read_count("words"));
  if (words.size() < 2 || words[0] != "<unk>" || words[1] != "ENT") throw fail("bad word vocabulary");
  auto props = read_lines(read_count("properties"));
  Model m;
  m.dims = dims;
  m.words = WordVocab(std::vector<std::string>(words.begin() + 2, words.end()));
  m.tokens = TokenVocab(props);
  if (m.words.size() != words.size() || m.tokens.size() != props.size() + TokenVocab::kFixed.size())
    throw fail("duplicate vocabulary entries");
  m.params = ModelParams(dims, m.words.size(), m.tokens.size());
  auto tensors = m.params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    std::string tag, name;
    std::size_t rank = 0;
    if (!(in >> tag >> name >> rank) || tag != "tensor" || name != ModelParams::tensor_names()[i])
      throw fail("expected tensor " + ModelParams::tensor_names()[i]);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) in >> d;
    if (shape != tensors[i]->shape) throw fail("shape mismatch for " + name);
    for (auto& x : tensors[i]->data) {
      std::string tok;
      if (!(in >> tok)) throw fail("truncated tensor " + name);
      auto v = parse_number(tok);
      if (!v) throw fail("bad number in " + name);
      x = *v;
    }
  }
  return m;
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint '" + path + "'");
  out << serialize_model(m);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  return parse_model(in);
}

}  // namespace nsm
