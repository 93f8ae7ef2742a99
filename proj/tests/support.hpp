#pragma once

#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "nsm/nsm.hpp"

namespace nsm::fixture {

inline KnowledgeBase hodgenville_kb() {
  return parse_kb("Hodgenville\tPlaceOfBirthOf\tAbeLincoln\tentity\n");
}

inline KnowledgeBase city_kb() {
  return parse_kb(
      "NYC\tPopulationOf\t8400000\tnumber\n"
      "LA\tPopulationOf\t3900000\tnumber\n"
      "USA\tCityIn\tNYC\tentity\n"
      "USA\tCityIn\tLA\tentity\n"
      "USA\tCityIn\tChicago\tentity\n"
      "Chicago\tPopulationOf\t2700000\tnumber\n"
      "NYC\tFounded\t1624-01-01\tdate\n"
      "LA\tFounded\t1781-09-04\tdate\n");
}

inline Value ent(const std::string& id) { return Value::entity(id); }

/// Random KB over e0..e(n-1): entity relations, numeric and date
/// attributes, and occasionally a property mixing kinds.
inline KnowledgeBase random_kb(std::uint64_t seed, std::size_t n_entities, std::size_t n_properties) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n_entities - 1);
  std::uniform_int_distribution<int> small(1, 6), year(1900, 1910);
  std::vector<Triple> triples;
  for (std::size_t p = 0; p < n_properties; ++p) {
    const auto prop = "p" + std::to_string(p);
    const int style = static_cast<int>(p % 4);  // 0,1 relation; 2 number; 3 date or mixed
    const bool mixed = style == 3 && uni(rng) < 0.3;
    for (std::size_t e = 0; e < n_entities; ++e) {
      if (uni(rng) > 0.45) continue;
      const auto subj = "e" + std::to_string(e);
      const int count = uni(rng) < 0.25 ? 2 : 1;
      for (int c = 0; c < count; ++c) {
        if (style <= 1) {
          triples.push_back({subj, prop, ent("e" + std::to_string(pick(rng)))});
        } else if (style == 2 || (mixed && uni(rng) < 0.5)) {
          triples.push_back({subj, prop, Value(static_cast<double>(small(rng)))});
        } else {
          triples.push_back({subj, prop, Value(Date{year(rng), 1u, static_cast<unsigned>(small(rng))})});
        }
      }
    }
  }
  return KnowledgeBase(std::move(triples), {});
}

/// Direct set-comprehension evaluation over the triple list; nullopt for a
/// run-time error.
class NaiveOracle {
 public:
  explicit NaiveOracle(const KnowledgeBase& kb) : kb_(kb) {}

  std::optional<std::set<Value>> hop(const std::set<Value>& v, const std::string& p) const {
    if (!known(p)) return std::nullopt;
    std::set<Value> out;
    for (const auto& t : kb_.triples())
      if (t.property == p && v.count(ent_or(t.subject))) out.insert(t.object);
    return out;
  }

  std::optional<std::set<Value>> extreme(const std::set<Value>& v, const std::string& p, bool maximize) const {
    if (!known(p)) return std::nullopt;
    std::set<int> kinds;
    for (const auto& t : kb_.triples())
      if (t.property == p && v.count(ent_or(t.subject))) kinds.insert(static_cast<int>(t.object.kind()));
    if (kinds.count(static_cast<int>(ValueKind::Entity)) || kinds.size() > 1) return std::nullopt;
    // e1 qualifies when its own best value is at least every value reachable from v
    std::set<Value> out;
    for (const auto& e1 : v) {
      for (const auto& t1 : kb_.triples()) {
        if (t1.property != p || ent_or(t1.subject) != e1) continue;
        bool best = true;
        for (const auto& t2 : kb_.triples()) {
          if (t2.property != p || !v.count(ent_or(t2.subject))) continue;
          if (maximize ? t1.object < t2.object : t2.object < t1.object) best = false;
        }
        if (best) out.insert(e1);
      }
    }
    return out;
  }

  std::optional<std::set<Value>> equal(const std::set<Value>& v1, const std::set<Value>& v2,
                                       const std::string& p) const {
    if (!known(p)) return std::nullopt;
    std::set<Value> out;
    for (const auto& t : kb_.triples())
      if (t.property == p && v1.count(ent_or(t.subject)) && v2.count(t.object)) out.insert(ent_or(t.subject));
    return out;
  }

  std::optional<std::set<Value>> run(const Program& prog, const std::vector<std::set<Value>>& init) const {
    std::vector<std::set<Value>> vars = init;
    for (const auto& e : prog.expressions) {
      for (auto i : e.vars)
        if (i >= vars.size()) return std::nullopt;
      std::optional<std::set<Value>> r;
      switch (e.func) {
        case Func::Hop: r = hop(vars[e.vars[0]], e.property); break;
        case Func::ArgMax: r = extreme(vars[e.vars[0]], e.property, true); break;
        case Func::ArgMin: r = extreme(vars[e.vars[0]], e.property, false); break;
        case Func::Equal: r = equal(vars[e.vars[0]], vars[e.vars[1]], e.property); break;
      }
      if (!r) return std::nullopt;
      vars.push_back(*r);
    }
    if (prog.expressions.empty()) return std::set<Value>{};
    return vars.back();
  }

 private:
  bool known(const std::string& p) const {
    for (const auto& t : kb_.triples())
      if (t.property == p) return true;
    return false;
  }
  static Value ent_or(const std::string& id) { return Value::entity(id); }

  const KnowledgeBase& kb_;
};

inline std::set<Value> as_set(const EntitySet& s) { return {s.begin(), s.end()}; }

/// Grammatical program with random (possibly failing) choices.
inline Program random_program(std::mt19937_64& rng, std::size_t n_init, std::size_t n_properties,
                              std::size_t max_expressions) {
  std::uniform_int_distribution<std::size_t> n_expr(0, max_expressions);
  std::uniform_int_distribution<std::size_t> func(0, 3), prop(0, n_properties);
  Program p;
  const std::size_t count = n_expr(rng);
  for (std::size_t i = 0; i < count; ++i) {
    Expression e;
    e.func = kAllFuncs[func(rng)];
    std::uniform_int_distribution<std::size_t> var(0, n_init + i - 1);
    for (std::size_t k = 0; k < var_arity(e.func); ++k) e.vars.push_back(var(rng));
    const auto j = prop(rng);
    e.property = j == n_properties ? "missing" : "p" + std::to_string(j);
    p.expressions.push_back(e);
  }
  p.terminated = true;
  return p;
}

/// Every valid complete program (as token lists) reachable through the
/// assist oracle, depth-first in token order.
inline std::vector<std::vector<Token>> enumerate_programs(const KnowledgeBase& kb, const std::vector<EntitySet>& init,
                                                          std::size_t max_expressions) {
  std::vector<std::vector<Token>> out;
  std::function<void(const DecodingState&)> walk = [&](const DecodingState& s) {
    for (const auto& t : s.valid_tokens()) {
      DecodingState next = s;
      next.advance(t);
      if (next.terminated())
        out.push_back(next.tokens());
      else
        walk(next);
    }
  };
  walk(DecodingState(kb, init, max_expressions));
  return out;
}

/// Five questions over `p` edges, decoded by a model whose only nonzero
/// parameters are output biases forcing "( Hop R0 p ) RETURN" whenever Hop
/// is valid. Predicted vs gold, per question:
///   a: {x} vs {x}      b: {x,y} vs {x}      c: {x} vs {x,y}
///   d: {y} vs {x}      e: no outgoing edge, so RETURN and {} vs {x}
struct MetricFixture {
  KnowledgeBase kb;
  std::vector<QAItem> items;
  Model model;
};

inline MetricFixture metric_fixture() {
  MetricFixture f{parse_kb("a\tp\tx\tentity\n"
                           "b\tp\tx\tentity\nb\tp\ty\tentity\n"
                           "c\tp\tx\tentity\n"
                           "d\tp\ty\tentity\n"
                           "x\tq\te\tentity\n"),
                  {},
                  {}};
  const std::vector<std::pair<std::string, EntitySet>> rows = {
      {"a", EntitySet::of_entities({"x"})},      {"b", EntitySet::of_entities({"x"})},
      {"c", EntitySet::of_entities({"x", "y"})}, {"d", EntitySet::of_entities({"x"})},
      {"e", EntitySet::of_entities({"x"})}};
  for (const auto& [e, gold] : rows) {
    QAItem q;
    q.id = "m-" + e;
    q.question = {"what", "is", e};
    q.entities = {{2, 3, e}};
    q.answers = gold;
    f.items.push_back(q);
  }
  const std::vector<PropertyId> props(f.kb.properties().begin(), f.kb.properties().end());
  f.model = Model(ModelDims{4, 4}, WordVocab({"what", "is"}), TokenVocab(props), 0);
  f.model.params = f.model.params.zeros_like();
  f.model.params.output_bias.data[TokenVocab::kOpen] = 10.0;
  f.model.params.output_bias.data[*f.model.tokens.find("p")] = 10.0;
  return f;
}

/// KB a -p-> b with one expression allowed: the only programs are
/// "RETURN" (reward 0) and "( Hop R0 p ) RETURN" (reward 1).
struct ReinforceToy {
  KnowledgeBase kb;
  QAItem item;
  Model model;
  TrainConfig config;
};

inline ReinforceToy reinforce_toy(std::uint64_t seed) {
  ReinforceToy t{parse_kb("a\tp\tb\tentity\n"), {}, {}, {}};
  t.item.id = "toy";
  t.item.question = {"where", "does", "a", "go"};
  t.item.entities = {{2, 3, "a"}};
  t.item.answers = EntitySet::of_entities({"b"});
  t.config.max_expressions = 1;
  t.config.samples_per_question = 1;
  t.config.alpha = 0.0;
  t.config.embed_dim = 5;
  t.config.hidden_dim = 6;
  t.config.seed = seed;
  t.model = make_model({t.item}, t.kb, t.config);
  t.model.params.init_uniform(seed, 0.5);
  return t;
}

/// Every scalar of `p` in tensor order.
inline std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  for (const auto* t : p.tensors()) out.insert(out.end(), t->data.begin(), t->data.end());
  return out;
}

}  // namespace nsm::fixture
