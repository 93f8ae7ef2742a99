#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nsm/kb.hpp"
#include "nsm/model.hpp"
#include "nsm/programmer.hpp"
#include "nsm/trainer.hpp"

namespace nsm {

enum class Objective { Likelihood, PolicyGradient };

struct GradCheckConfig {
  std::size_t embed = 8;
  std::size_t hidden = 12;
  std::size_t vocab = 20;  // size of both the word and the output-token vocabularies
  std::size_t programs = 3;
  Objective objective = Objective::Likelihood;
  double epsilon = 1e-5;
  /// Gradients smaller than this are compared absolutely rather than relatively;
  /// at epsilon 1e-5 the round-off in a central difference is about 1e-10.
  double floor = 1e-5;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t coordinates = 0;
};

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// A miniature problem: KB, question and model for gradient checking.
struct MiniProblem {
  KnowledgeBase kb;
  QAItem item;
  Model model;
};

inline MiniProblem make_mini_problem(const GradCheckConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab <= TokenVocab::kFirstProp || cfg.vocab < 3) throw ContractError("vocab too small for a miniature model");
  std::mt19937_64 rng(seed);
  const std::size_t n_props = cfg.vocab - TokenVocab::kFirstProp;
  const std::size_t n_ents = 6;
  std::vector<Triple> triples;
  std::uniform_int_distribution<std::size_t> ent(0, n_ents - 1);
  std::uniform_int_distribution<int> num(1, 100);
  auto name = [](std::size_t i) { return "a" + std::to_string(i); };
  for (std::size_t p = 0; p < n_props; ++p) {
    const auto prop = "p" + std::to_string(p);
    for (std::size_t e = 0; e < n_ents; ++e) {
      if (p % 4 == 3) {
        triples.push_back({name(e), prop, Value(static_cast<double>(num(rng)))});
      } else if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.5) {
        triples.push_back({name(e), prop, Value::entity(name(ent(rng)))});
      }
    }
  }
  MiniProblem mp{KnowledgeBase(std::move(triples), {}), {}, {}};
  std::vector<std::string> words;
  for (std::size_t w = 0; w + 2 < cfg.vocab; ++w) words.push_back("w" + std::to_string(w));
  std::uniform_int_distribution<std::size_t> word(0, words.size() - 1);
  auto& q = mp.item;
  q.id = "mini";
  for (int i = 0; i < 6; ++i) q.question.push_back(words[word(rng)]);
  q.entities = {{1, 2, name(0)}, {3, 5, name(1)}};
  q.answers = EntitySet{Value::entity(name(2))};
  const std::vector<PropertyId> props(mp.kb.properties().begin(), mp.kb.properties().end());
  std::vector<PropertyId> all_props;
  for (std::size_t p = 0; p < n_props; ++p) all_props.push_back("p" + std::to_string(p));
  mp.model = Model(ModelDims{cfg.embed, cfg.hidden}, WordVocab(words), TokenVocab(all_props), seed);
  // larger weights than training init so that gradients are far from zero
  mp.model.params.init_uniform(seed, 0.5);
  return mp;
}

/// Compares traced gradients of the chosen objective against central finite
/// differences over every parameter coordinate. Programs are sampled from
/// the model once and then held fixed.
inline GradCheckResult grad_check(const GradCheckConfig& cfg, std::uint64_t seed) {
  auto mp = make_mini_problem(cfg, seed);
  Programmer prog(mp.model, mp.kb, 3);
  std::mt19937_64 rng(seed + 17);
  std::vector<std::vector<std::size_t>> programs;
  std::vector<double> weights;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < cfg.programs; ++i) {
    programs.push_back(prog.sample(mp.item, rng).token_ids);
    // likelihood: unit weights; policy gradient: fixed (reward - baseline)
    weights.push_back(cfg.objective == Objective::Likelihood ? 1.0 : uni(rng) - 0.4);
  }
  GradCheckResult res;
  if (programs.empty()) return res;

  const auto analytic = weighted_log_prob_gradient(prog, mp.item, programs, weights);
  auto objective = [&] {
    Tape t;
    double f = 0.0;
    for (std::size_t i = 0; i < programs.size(); ++i) f += weights[i] * t.scalar(prog.log_prob(t, mp.item, programs[i]));
    return f;
  };

  auto params = mp.model.params.tensors();
  const auto grads = analytic.tensors();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t j = 0; j < params[k]->size(); ++j) {
      double& x = params[k]->data[j];
      const double saved = x;
      x = saved + cfg.epsilon;
      const double up = objective();
      x = saved - cfg.epsilon;
      const double down = objective();
      x = saved;
      const double numeric = (up - down) / (2.0 * cfg.epsilon);
      const double err = relative_error(grads[k]->data[j], numeric, cfg.floor);
      ++res.coordinates;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_tensor = ModelParams::tensor_names()[k];
      }
    }
  }
  return res;
}

}  // namespace nsm
