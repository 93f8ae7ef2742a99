#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsm/config.hpp"
#include "nsm/error.hpp"
#include "nsm/interpreter.hpp"
#include "nsm/model.hpp"
#include "nsm/programmer.hpp"

namespace nsm {

/// Per-question F1 of a predicted answer set; 0 for an empty prediction.
inline double reward_f1(const EntitySet& predicted, const EntitySet& gold) {
  if (gold.empty()) throw FormatError("gold answer set is empty");
  if (predicted.empty()) return 0.0;
  const double hit = static_cast<double>(predicted.intersection_size(gold));
  if (hit == 0.0) return 0.0;
  const double p = hit / static_cast<double>(predicted.size());
  const double r = hit / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

struct RewardedProgram {
  std::vector<std::string> tokens;  // token texts, ending with RETURN
  double reward = 0.0;
  double log_prob = 0.0;            // at discovery time
};

/// True when `a` should replace `b`: higher reward, then fewer tokens,
/// then lexicographically smaller token text.
inline bool better_program(const RewardedProgram& a, const RewardedProgram& b) {
  if (a.reward != b.reward) return a.reward > b.reward;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

/// Best program found so far per question. Updates only ever replace an
/// entry by a better one, so stored rewards never decrease.
class PseudoGoldStore {
 public:
  /// Returns true if `candidate` replaced (or created) the entry.
  bool update(const std::string& question_id, const RewardedProgram& candidate) {
    auto it = best_.find(question_id);
    if (it == best_.end()) {
      best_.emplace(question_id, candidate);
      return true;
    }
    if (!better_program(candidate, it->second)) return false;
    it->second = candidate;
    return true;
  }

  const RewardedProgram* find(const std::string& question_id) const {
    auto it = best_.find(question_id);
    return it == best_.end() ? nullptr : &it->second;
  }

  double reward(const std::string& question_id) const {
    const auto* p = find(question_id);
    return p ? p->reward : 0.0;
  }

  std::size_t size() const { return best_.size(); }

  /// Fraction of `items` whose stored program has reward 1.
  double coverage(const std::vector<QAItem>& items) const {
    if (items.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& q : items) n += reward(q.id) == 1.0;
    return static_cast<double>(n) / static_cast<double>(items.size());
  }

 private:
  std::map<std::string, RewardedProgram> best_;
};

struct Metrics {
  double avg_precision = 0.0;
  double avg_recall = 0.0;
  double avg_f1 = 0.0;
  double accuracy = 0.0;  // accuracy@1: predicted set equals gold set
};

/// Averages per-question precision, recall and F1 of (predicted, gold) pairs.
inline Metrics score_predictions(const std::vector<std::pair<EntitySet, EntitySet>>& pairs) {
  Metrics m;
  if (pairs.empty()) return m;
  for (const auto& [pred, gold] : pairs) {
    if (gold.empty()) throw FormatError("gold answer set is empty");
    const double hit = static_cast<double>(pred.intersection_size(gold));
    if (!pred.empty()) m.avg_precision += hit / static_cast<double>(pred.size());
    m.avg_recall += hit / static_cast<double>(gold.size());
    m.avg_f1 += reward_f1(pred, gold);
    m.accuracy += pred == gold ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(pairs.size());
  m.avg_precision /= n;
  m.avg_recall /= n;
  m.avg_f1 /= n;
  m.accuracy /= n;
  return m;
}

/// Greedy (beam 1) prediction for one question; empty when decoding fails.
inline EntitySet predict(const Programmer& programmer, const QAItem& item) {
  auto best = programmer.beam_search(item, 1);
  if (best.empty()) return {};
  return best.front().state.result();
}

inline Metrics evaluate(const std::vector<QAItem>& dataset, const Model& model, const KnowledgeBase& kb,
                        std::size_t max_expressions = 3) {
  Programmer programmer(model, kb, max_expressions);
  std::vector<std::pair<EntitySet, EntitySet>> pairs;
  for (const auto& q : dataset) pairs.emplace_back(predict(programmer, q), q.answers);
  return score_predictions(pairs);
}

/// params += lr * g, with g rescaled to norm `clip` when larger.
inline void sgd_step(ModelParams& params, const ModelParams& grad, double lr, double clip) {
  const double norm = std::sqrt(grad.squared_norm());
  if (norm == 0.0) return;
  const double scale = norm > clip ? clip / norm : 1.0;
  params.axpy(lr * scale, grad);
}

/// Gradient of sum_i weights[i] * log p(programs[i] | item).
inline ModelParams weighted_log_prob_gradient(const Programmer& programmer, const QAItem& item,
                                              const std::vector<std::vector<std::size_t>>& programs,
                                              const std::vector<double>& weights) {
  ModelParams grad = programmer.model().params.zeros_like();
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) return grad;
  Tape tape(programmer.model().params.bind(grad));
  std::vector<Tape::Id> terms;
  for (std::size_t i = 0; i < programs.size(); ++i)
    terms.push_back(tape.scale(programmer.log_prob(tape, item, programs[i]), weights[i]));
  tape.backward(tape.sum(terms));
  return grad;
}

inline std::vector<std::size_t> program_ids(const Programmer& programmer, const std::vector<std::string>& tokens) {
  std::vector<std::size_t> ids;
  for (const auto& t : tokens) {
    auto id = programmer.id_of(Token(t));
    if (!id) throw ContractError("token '" + t + "' is not in the model vocabulary");
    ids.push_back(*id);
  }
  return ids;
}

inline RewardedProgram rewarded(const Programmer& programmer, const Hypothesis& h, const QAItem& item) {
  RewardedProgram rp;
  for (auto id : h.token_ids) rp.tokens.push_back(programmer.token_of(id).text());
  rp.reward = reward_f1(h.state.result(), item.answers);
  rp.log_prob = h.log_prob;
  return rp;
}

/// One line of the training log.
struct TrainLogEntry {
  std::string phase;  // "ml" or "reinforce"
  std::size_t iteration = 0;
  double mean_train_reward = 0.0;
  double dev_f1 = 0.0;
  double store_coverage = 0.0;
  std::vector<double> store_rewards;  // per train question, dataset order

  std::string json() const {
    nlohmann::ordered_json j;
    j["phase"] = phase;
    j["iteration"] = iteration;
    j["mean_train_reward"] = mean_train_reward;
    j["dev_f1"] = dev_f1;
    j["store_coverage"] = store_coverage;
    j["store_rewards"] = store_rewards;
    return j.dump();
  }
};

using LogSink = std::function<void(const TrainLogEntry&)>;

/// Mutable training state: model, pseudo-gold programs, per-question
/// baselines and the random stream.
class Trainer {
 public:
  Trainer(Model& model, const KnowledgeBase& kb, TrainConfig config)
      : model_(&model), kb_(&kb), config_(std::move(config)), rng_(config_.seed ^ 0x9e3779b97f4a7c15ULL) {
    config_.validate();
  }

  const TrainConfig& config() const { return config_; }
  const PseudoGoldStore& store() const { return store_; }
  PseudoGoldStore& store() { return store_; }
  Programmer programmer() const { return Programmer(*model_, *kb_, config_.max_expressions); }
  double baseline(const std::string& question_id) const {
    auto it = baselines_.find(question_id);
    return it == baselines_.end() ? 0.0 : it->second;
  }

  /// Beam search over every question, merging the results into the store.
  /// Returns the mean reward of the top beam entry.
  double search(const std::vector<QAItem>& dataset) {
    const auto prog = programmer();
    double total = 0.0;
    for (const auto& q : dataset) {
      const auto beam = prog.beam_search(q, config_.beam_size);
      for (std::size_t i = 0; i < beam.size(); ++i) {
        auto rp = rewarded(prog, beam[i], q);
        if (i == 0) total += rp.reward;
        if (rp.reward > 0.0) store_.update(q.id, rp);
      }
    }
    return dataset.empty() ? 0.0 : total / static_cast<double>(dataset.size());
  }

  /// One epoch of per-question gradient ascent on log p(pseudo-gold).
  void likelihood_epoch(const std::vector<QAItem>& dataset) {
    const auto prog = programmer();
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (store_.reward(dataset[i].id) > 0.0) order.push_back(i);
    std::shuffle(order.begin(), order.end(), rng_);
    for (auto i : order) {
      const auto& q = dataset[i];
      const auto grad = weighted_log_prob_gradient(prog, q, {program_ids(prog, store_.find(q.id)->tokens)}, {1.0});
      sgd_step(model_->params, grad, config_.learning_rate, config_.clip_norm);
    }
  }

  struct ReinforceEstimate {
    ModelParams gradient;
    std::vector<double> sampled_rewards;  // rollouts only, not the substituted pseudo-gold
  };

  /// Policy-gradient estimate for one question: rollouts (some replaced by
  /// the pseudo-gold program) weighted by reward minus the current baseline.
  /// Merges rewarded rollouts into the store but leaves params and baseline alone.
  ReinforceEstimate reinforce_estimate(const QAItem& q) {
    const auto prog = programmer();
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<std::vector<std::size_t>> programs;
    std::vector<double> rewards;
    ReinforceEstimate out;
    for (std::size_t s = 0; s < config_.samples_per_question; ++s) {
      const bool use_gold = uni(rng_) < config_.alpha;
      const auto* gold = store_.find(q.id);
      if (use_gold && gold) {
        programs.push_back(program_ids(prog, gold->tokens));
        rewards.push_back(gold->reward);
        continue;
      }
      const auto h = prog.sample(q, rng_);
      auto rp = rewarded(prog, h, q);
      if (rp.reward > 0.0) store_.update(q.id, rp);
      programs.push_back(h.token_ids);
      rewards.push_back(rp.reward);
      out.sampled_rewards.push_back(rp.reward);
    }
    const double b = baseline(q.id);
    std::vector<double> weights;
    for (double r : rewards) weights.push_back(r - b);
    out.gradient = weighted_log_prob_gradient(prog, q, programs, weights);
    return out;
  }

  /// Applies one estimate and moves the question's baseline toward the
  /// mean sampled reward, which is returned.
  double reinforce_step(const QAItem& q) {
    const auto est = reinforce_estimate(q);
    sgd_step(model_->params, est.gradient, config_.learning_rate, config_.clip_norm);
    if (est.sampled_rewards.empty()) return 0.0;
    const double b = baseline(q.id);
    const double mean = std::accumulate(est.sampled_rewards.begin(), est.sampled_rewards.end(), 0.0) /
                        static_cast<double>(est.sampled_rewards.size());
    baselines_[q.id] = config_.baseline_decay * b + (1.0 - config_.baseline_decay) * mean;
    return mean;
  }

  double reinforce_epoch(const std::vector<QAItem>& dataset) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    double total = 0.0;
    for (auto i : order) total += reinforce_step(dataset[i]);
    return dataset.empty() ? 0.0 : total / static_cast<double>(dataset.size());
  }

  TrainLogEntry log_entry(const std::string& phase, std::size_t iteration, double mean_reward,
                          const std::vector<QAItem>& train, const std::vector<QAItem>& dev) const {
    TrainLogEntry e;
    e.phase = phase;
    e.iteration = iteration;
    e.mean_train_reward = mean_reward;
    e.dev_f1 = dev.empty() ? 0.0 : evaluate(dev, *model_, *kb_, config_.max_expressions).avg_f1;
    e.store_coverage = store_.coverage(train);
    for (const auto& q : train) e.store_rewards.push_back(store_.reward(q.id));
    return e;
  }

  /// Alternates beam search for better programs with likelihood training
  /// on the best ones found so far.
  void iterative_ml(const std::vector<QAItem>& train, const std::vector<QAItem>& dev, const LogSink& sink = {}) {
    if (train.empty()) throw ContractError("empty training set");
    for (std::size_t it = 1; it <= config_.ml_iterations; ++it) {
      const double mean = search(train);
      for (std::size_t e = 0; e < config_.ml_epochs; ++e) likelihood_epoch(train);
      if (sink) sink(log_entry("ml", it, mean, train, dev));
    }
  }

  /// REINFORCE anchored on the stored pseudo-gold programs.
  void augmented_reinforce(const std::vector<QAItem>& train, const std::vector<QAItem>& dev,
                           const LogSink& sink = {}) {
    for (std::size_t e = 1; e <= config_.reinforce_epochs; ++e) {
      const double mean = reinforce_epoch(train);
      if (sink) sink(log_entry("reinforce", config_.ml_iterations + e, mean, train, dev));
    }
  }

 private:
  Model* model_;
  const KnowledgeBase* kb_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  PseudoGoldStore store_;
  std::map<std::string, double> baselines_;
};

/// Fresh model whose word vocabulary covers the abstracted training questions.
inline Model make_model(const std::vector<QAItem>& train, const KnowledgeBase& kb, const TrainConfig& cfg) {
  std::set<std::string> words;
  for (const auto& q : train)
    for (const auto& w : q.abstracted()) words.insert(w);
  words.erase("ENT");
  const std::vector<PropertyId> props(kb.properties().begin(), kb.properties().end());
  return Model(ModelDims{cfg.embed_dim, cfg.hidden_dim}, WordVocab({words.begin(), words.end()}), TokenVocab(props),
               cfg.seed);
}

}  // namespace nsm
