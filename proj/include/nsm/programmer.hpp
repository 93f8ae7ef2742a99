#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nsm/assist.hpp"
#include "nsm/error.hpp"
#include "nsm/kb.hpp"
#include "nsm/model.hpp"
#include "nsm/tape.hpp"

namespace nsm {

/// A question with its resolved entity mentions and gold answers.
struct QAItem {
  std::string id;
  std::vector<std::string> question;      // raw tokens
  std::vector<EntityMention> entities;    // spans over `question`, left to right
  EntitySet answers;

  /// Question tokens with every token of an entity mention replaced by "ENT".
  std::vector<std::string> abstracted() const {
    auto out = question;
    for (const auto& m : entities)
      for (std::size_t i = m.begin; i < m.end && i < out.size(); ++i) out[i] = "ENT";
    return out;
  }

  /// One singleton variable per mention: R0, R1, ...
  std::vector<EntitySet> initial_vars() const {
    std::vector<EntitySet> out;
    for (const auto& m : entities) out.push_back(EntitySet{Value::entity(m.entity)});
    return out;
  }

  void validate() const {
    std::size_t prev_end = 0;
    for (const auto& m : entities) {
      if (m.begin >= m.end || m.end > question.size() || m.begin < prev_end)
        throw FormatError("item " + id + ": bad entity span");
      prev_end = m.end;
    }
  }
};

/// Key-variable memory entry: neural key for interpreter variable R<variable>.
struct MemoryEntry {
  Vec key;
  std::size_t variable = 0;
};

/// Encoder results kept by value for decoding without a tape.
struct Encoding {
  std::vector<Vec> outputs;    // GRU output per abstracted question token
  std::vector<Vec> projected;  // attention matrix times each output
  Vec final_state;
  std::vector<Vec> entity_keys;
};

/// A (partial) program with everything needed to continue decoding it.
struct Hypothesis {
  std::shared_ptr<const Encoding> encoding;
  DecodingState state;
  Vec decoder_state;  // decoder GRU output after reading the last emitted token
  std::vector<MemoryEntry> memory;
  std::vector<std::size_t> token_ids;
  std::vector<double> step_log_probs;
  double log_prob = 0.0;

  bool terminated() const { return state.terminated(); }
};

/// Distribution over the valid next tokens (all others have probability 0).
struct Distribution {
  std::vector<std::size_t> token_ids;  // ascending
  Vec probs;
  Vec log_probs;
};

/// Sequence-to-sequence programmer over the code-assist masked vocabulary.
///
/// Token ids: [0, tokens.size()) are static tokens of the model's
/// TokenVocab; tokens.size() + i is variable R<i>.
class Programmer {
 public:
  Programmer(const Model& model, const KnowledgeBase& kb, std::size_t max_expressions = 3)
      : model_(&model), kb_(&kb), max_expressions_(max_expressions) {}

  const Model& model() const { return *model_; }
  std::size_t max_expressions() const { return max_expressions_; }
  std::size_t static_tokens() const { return model_->tokens.size(); }

  Token token_of(std::size_t id) const {
    if (id < static_tokens()) return Token(model_->tokens.items[id]);
    return Token::var(id - static_tokens());
  }

  std::optional<std::size_t> id_of(const Token& t) const {
    if (t.kind() == TokenKind::Var) return static_tokens() + t.var_index();
    if (const auto* i = model_->tokens.find(t.text())) return *i;
    return std::nullopt;
  }

  std::vector<Token> tokens_of(const std::vector<std::size_t>& ids) const {
    std::vector<Token> out;
    for (auto id : ids) out.push_back(token_of(id));
    return out;
  }

  /// Valid-token mask over static tokens plus `nvars` variable tokens.
  std::vector<bool> mask_for(const DecodingState& s) const {
    std::vector<bool> mask(static_tokens() + s.machine().num_variables(), false);
    for (const auto& t : s.valid_tokens())
      if (auto id = id_of(t)) mask[*id] = true;
    return mask;
  }

  // --- traced computation, shared by inference and training ---

  struct TracedEncoding {
    std::vector<Tape::Id> outputs, projected;
    Tape::Id final_state = 0;
    std::vector<Tape::Id> entity_keys;
  };

  TracedEncoding encode(Tape& t, const QAItem& item) const {
    const auto words = item.abstracted();
    if (words.empty()) throw ContractError("cannot encode an empty question");
    const auto& p = model_->params;
    TracedEncoding enc;
    auto h = t.constant(Vec(model_->dims.hidden, 0.0));
    for (const auto& w : words) {
      h = gru_step(t, p.encoder, h, t.param_row(p.word_embedding, model_->words.lookup(w)));
      enc.outputs.push_back(h);
      enc.projected.push_back(t.matvec(p.attention, h));
    }
    enc.final_state = h;
    for (const auto& m : item.entities) {
      if (m.end > words.size() || m.begin >= m.end) throw ContractError("entity span out of range");
      std::vector<Tape::Id> span(enc.outputs.begin() + static_cast<std::ptrdiff_t>(m.begin),
                                 enc.outputs.begin() + static_cast<std::ptrdiff_t>(m.end));
      enc.entity_keys.push_back(t.mean(span));
    }
    return enc;
  }

  /// Decoder input for a token: a static embedding row, or the projected
  /// memory key for a variable token.
  Tape::Id input_embedding(Tape& t, std::size_t id, const std::vector<Tape::Id>& keys) const {
    const auto& p = model_->params;
    if (id < static_tokens()) return t.param_row(p.token_embedding, id);
    return t.matvec(p.var_embed, keys.at(id - static_tokens()));
  }

  /// Unnormalized scores for every static token and every variable.
  Tape::Id logits(Tape& t, Tape::Id u, const std::vector<Tape::Id>& outputs, const std::vector<Tape::Id>& projected,
                  const std::vector<Tape::Id>& keys) const {
    const auto& p = model_->params;
    const auto o = attend(t, p.combine, u, outputs, projected);
    auto scores = t.add(t.matvec(p.output, o), t.param(p.output_bias));
    if (keys.empty()) return scores;
    const auto q = t.matvec(p.var_query, o);
    std::vector<Tape::Id> var_scores;
    for (auto k : keys) var_scores.push_back(t.dot(q, k));
    return t.concat(scores, t.stack(var_scores));
  }

  /// log p(program | item) traced on `t`; `ids` must end with RETURN and
  /// be valid under the oracle at every step.
  Tape::Id log_prob(Tape& t, const QAItem& item, const std::vector<std::size_t>& ids) const {
    const auto& p = model_->params;
    const auto enc = encode(t, item);
    DecodingState state(*kb_, item.initial_vars(), max_expressions_);
    std::vector<Tape::Id> keys = enc.entity_keys;
    auto u = gru_step(t, p.decoder, enc.final_state, t.param_row(p.token_embedding, TokenVocab::kGo));
    std::vector<Tape::Id> steps;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (state.terminated()) throw ContractError("tokens after RETURN");
      const auto mask = mask_for(state);
      if (ids[i] >= mask.size() || !mask[ids[i]])
        throw ContractError("token '" + token_of(ids[i]).text() + "' is not valid at step " + std::to_string(i));
      steps.push_back(t.log_prob(logits(t, u, enc.outputs, enc.projected, keys), mask, ids[i]));
      state.advance(token_of(ids[i]));
      if (state.terminated()) break;
      u = gru_step(t, p.decoder, u, input_embedding(t, ids[i], keys));
      if (ids[i] == TokenVocab::kClose) keys.push_back(u);
    }
    if (!state.terminated()) throw ContractError("program does not end with RETURN");
    return t.sum(steps);
  }

  // --- inference on values ---

  Encoding encode(const QAItem& item) const {
    Tape t;
    const auto ids = encode(t, item);
    Encoding enc;
    for (auto i : ids.outputs) enc.outputs.push_back(t.value(i));
    for (auto i : ids.projected) enc.projected.push_back(t.value(i));
    enc.final_state = t.value(ids.final_state);
    for (auto i : ids.entity_keys) enc.entity_keys.push_back(t.value(i));
    return enc;
  }

  /// Encodes `item` and consumes the GO token.
  Hypothesis start(const QAItem& item) const {
    auto enc = std::make_shared<const Encoding>(encode(item));
    Hypothesis h{enc, DecodingState(*kb_, item.initial_vars(), max_expressions_), {}, {}, {}, {}, 0.0};
    for (std::size_t i = 0; i < enc->entity_keys.size(); ++i) h.memory.push_back({enc->entity_keys[i], i});
    Tape t;
    h.decoder_state = t.value(gru_step(t, model_->params.decoder, t.constant(enc->final_state),
                                       t.param_row(model_->params.token_embedding, TokenVocab::kGo)));
    return h;
  }

  Distribution decode_step(const Hypothesis& h) const {
    if (h.terminated()) throw ContractError("decode_step on a terminated hypothesis");
    Tape t;
    const auto u = t.constant(h.decoder_state);
    std::vector<Tape::Id> outputs, projected, keys;
    for (const auto& v : h.encoding->outputs) outputs.push_back(t.constant(v));
    for (const auto& v : h.encoding->projected) projected.push_back(t.constant(v));
    for (const auto& m : h.memory) keys.push_back(t.constant(m.key));
    const auto& scores = t.value(logits(t, u, outputs, projected, keys));
    const auto mask = mask_for(h.state);
    Distribution d;
    if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) return d;
    const auto probs = masked_softmax(scores, mask);
    const auto logps = kernel::masked_log_softmax(scores, mask);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      d.token_ids.push_back(i);
      d.probs.push_back(probs[i]);
      d.log_probs.push_back(logps[i]);
    }
    return d;
  }

  /// Appends token `id` whose log-probability is `log_p`.
  Hypothesis extend(const Hypothesis& h, std::size_t id, double log_p) const {
    Hypothesis next = h;
    next.state.advance(token_of(id));
    next.token_ids.push_back(id);
    next.step_log_probs.push_back(log_p);
    next.log_prob += log_p;
    if (next.terminated()) return next;
    Tape t;
    std::vector<Tape::Id> keys;
    for (const auto& m : next.memory) keys.push_back(t.constant(m.key));
    next.decoder_state = t.value(
        gru_step(t, model_->params.decoder, t.constant(next.decoder_state), input_embedding(t, id, keys)));
    if (id == TokenVocab::kClose) next.memory.push_back({next.decoder_state, next.memory.size()});
    return next;
  }

  Hypothesis extend(const Hypothesis& h, std::size_t id) const {
    const auto d = decode_step(h);
    auto it = std::find(d.token_ids.begin(), d.token_ids.end(), id);
    if (it == d.token_ids.end()) throw ContractError("token '" + token_of(id).text() + "' is not valid here");
    return extend(h, id, d.log_probs[static_cast<std::size_t>(it - d.token_ids.begin())]);
  }

  /// Top-k terminated programs by total log-probability. Ties are broken
  /// by the token id sequence, lexicographically smallest first.
  std::vector<Hypothesis> beam_search(const QAItem& item, std::size_t k) const {
    if (k == 0) throw ContractError("beam size must be positive");
    struct Candidate {
      std::size_t parent;
      std::size_t id;
      double log_p;
      double score;
      std::vector<std::size_t> seq;
    };
    std::vector<Hypothesis> active{start(item)};
    std::vector<Hypothesis> finished;
    while (!active.empty()) {
      std::vector<Candidate> cands;
      for (std::size_t a = 0; a < active.size(); ++a) {
        const auto d = decode_step(active[a]);
        for (std::size_t j = 0; j < d.token_ids.size(); ++j) {
          auto seq = active[a].token_ids;
          seq.push_back(d.token_ids[j]);
          cands.push_back({a, d.token_ids[j], d.log_probs[j], active[a].log_prob + d.log_probs[j], std::move(seq)});
        }
      }
      std::sort(cands.begin(), cands.end(), [&](const Candidate& x, const Candidate& y) {
        if (x.score != y.score) return x.score > y.score;
        return x.seq < y.seq;
      });
      if (cands.size() > k) cands.resize(k);
      std::vector<Hypothesis> next;
      for (const auto& c : cands) {
        auto h = extend(active[c.parent], c.id, c.log_p);
        (h.terminated() ? finished : next).push_back(std::move(h));
      }
      active = std::move(next);
      sort_hypotheses(finished);
      if (finished.size() > k) finished.erase(finished.begin() + static_cast<std::ptrdiff_t>(k), finished.end());
      if (finished.size() == k && !active.empty()) {
        double best_active = active.front().log_prob;
        for (const auto& h : active) best_active = std::max(best_active, h.log_prob);
        if (best_active < finished.back().log_prob) break;
      }
    }
    return finished;
  }

  /// Ancestral sample until RETURN.
  Hypothesis sample(const QAItem& item, std::mt19937_64& rng) const {
    auto h = start(item);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    while (!h.terminated()) {
      const auto d = decode_step(h);
      if (d.token_ids.empty()) throw ContractError("no decodable token in the model vocabulary");
      const double r = uni(rng);
      std::size_t pick = d.token_ids.size() - 1;
      double acc = 0.0;
      for (std::size_t j = 0; j < d.probs.size(); ++j) {
        acc += d.probs[j];
        if (r < acc) {
          pick = j;
          break;
        }
      }
      h = extend(h, d.token_ids[pick], d.log_probs[pick]);
    }
    return h;
  }

  /// Best-first order: higher log-probability, then smaller token ids.
  static void sort_hypotheses(std::vector<Hypothesis>& hs) {
    std::stable_sort(hs.begin(), hs.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return a.token_ids < b.token_ids;
    });
  }

 private:
  const Model* model_;
  const KnowledgeBase* kb_;
  std::size_t max_expressions_;
};

}  // namespace nsm
