#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "nsm/error.hpp"
#include "nsm/assist.hpp"
#include "nsm/interpreter.hpp"
#include "nsm/kb.hpp"
#include "nsm/programmer.hpp"

namespace nsm {

struct KbGenOptions {
  std::uint64_t seed = 0;
  std::size_t n_entities = 100;
  std::size_t n_properties = 10;
  /// Probability that an entity has a given entity-valued relation.
  double edge_density = 0.3;
  /// Probability that an entity carries a given numeric or date attribute.
  double attribute_density = 0.75;
};

namespace detail {

inline const std::vector<std::string>& relation_words() {
  static const std::vector<std::string> w = {"capital", "mayor",  "founder", "neighbor", "rival",  "partner",
                                             "ally",    "owner",  "leader",  "member",   "sponsor", "creator",
                                             "mentor",  "supplier"};
  return w;
}
inline const std::vector<std::string>& number_words() {
  static const std::vector<std::string> w = {"population", "elevation", "revenue", "area"};
  return w;
}
inline const std::vector<std::string>& date_words() {
  static const std::vector<std::string> w = {"founded", "opened"};
  return w;
}

inline std::string pick_word(const std::vector<std::string>& words, std::size_t i, const char* fallback) {
  return i < words.size() ? words[i] : std::string(fallback) + std::to_string(i);
}

/// Pronounceable consonant-vowel names, unique within one call.
class NameMaker {
 public:
  explicit NameMaker(std::mt19937_64& rng) : rng_(&rng) {}

  std::string word() {
    static const std::string cons = "bdfgklmnprstvz";
    static const std::string vows = "aeiou";
    for (;;) {
      std::uniform_int_distribution<int> syl(2, 3);
      std::uniform_int_distribution<std::size_t> c(0, cons.size() - 1), v(0, vows.size() - 1);
      std::string w;
      for (int s = syl(*rng_); s > 0; --s) {
        w += cons[c(*rng_)];
        w += vows[v(*rng_)];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::mt19937_64* rng_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Random KB with at least one numeric attribute and an alias for every
/// entity. Entity ids are `m.<surface>` with spaces replaced by '_'.
inline KnowledgeBase gen_kb(const KbGenOptions& opt) {
  if (opt.n_entities == 0 || opt.n_properties == 0) throw ContractError("gen_kb needs at least one entity and property");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  detail::NameMaker names(rng);

  std::vector<std::string> ids;
  std::vector<std::pair<std::string, std::string>> aliases;
  for (std::size_t i = 0; i < opt.n_entities; ++i) {
    std::string surface = names.word();
    if (uni(rng) < 0.2) surface += " " + names.word();
    std::string id = "m." + surface;
    std::replace(id.begin(), id.end(), ' ', '_');
    ids.push_back(id);
    aliases.emplace_back(surface, id);
  }

  const std::size_t n_numbers = std::max<std::size_t>(1, opt.n_properties / 5);
  const std::size_t n_dates = opt.n_properties >= 5 ? 1 : 0;
  const std::size_t n_relations = opt.n_properties - n_numbers - n_dates;

  std::vector<Triple> triples;
  if (opt.n_entities >= 2) {
    std::uniform_int_distribution<std::size_t> other(0, opt.n_entities - 2);
    for (std::size_t p = 0; p < n_relations; ++p) {
      const auto prop = detail::pick_word(detail::relation_words(), p, "relation");
      for (std::size_t e = 0; e < opt.n_entities; ++e) {
        if (uni(rng) >= opt.edge_density) continue;
        std::size_t k = 1;
        while (k < 3 && uni(rng) < 0.5) ++k;
        for (std::size_t j = 0; j < k; ++j) {
          std::size_t o = other(rng);
          if (o >= e) ++o;  // no self edges
          triples.push_back({ids[e], prop, Value::entity(ids[o])});
        }
      }
    }
    std::uniform_int_distribution<int> number(1, 1000000);
    for (std::size_t p = 0; p < n_numbers; ++p) {
      const auto prop = detail::pick_word(detail::number_words(), p, "measure");
      bool any = false;
      for (std::size_t e = 0; e < opt.n_entities; ++e) {
        if (uni(rng) >= opt.attribute_density && (any || e + 1 < opt.n_entities)) continue;
        triples.push_back({ids[e], prop, Value(static_cast<double>(number(rng)))});
        any = true;
      }
    }
    std::uniform_int_distribution<int> year(1800, 2020), month(1, 12), day(1, 28);
    for (std::size_t p = 0; p < n_dates; ++p) {
      const auto prop = detail::pick_word(detail::date_words(), p, "dated");
      for (std::size_t e = 0; e < opt.n_entities; ++e) {
        if (uni(rng) >= opt.attribute_density) continue;
        const int y = year(rng);
        const auto m = static_cast<unsigned>(month(rng));
        const auto d = static_cast<unsigned>(day(rng));
        triples.push_back({ids[e], prop, Value(Date{y, m, d})});
      }
    }
  }
  return KnowledgeBase(std::move(triples), aliases);
}

enum class TemplateKind { OneHop, TwoHop, HopArgExtreme, HopEqual };

/// Question pattern plus the gold program skeleton it is answered by.
struct Template {
  std::string name;
  TemplateKind kind;
};

inline std::vector<Template> default_templates() {
  return {{"one_hop", TemplateKind::OneHop},
          {"two_hop", TemplateKind::TwoHop},
          {"hop_argmax", TemplateKind::HopArgExtreme},
          {"hop_equal", TemplateKind::HopEqual}};
}

/// A generated question together with the program that produced its answers.
struct GeneratedItem {
  QAItem item;
  std::string template_name;
  std::string gold_program;
};

struct GeneratedDataset {
  std::vector<GeneratedItem> train, dev, test;
};

namespace detail {

struct Instantiation {
  std::string key;
  std::vector<std::string> entities;       // in question order
  std::vector<std::string> words;          // pattern with "{0}", "{1}" entity slots
  std::string program;
};

inline std::string alias_of(const KnowledgeBase& kb, const std::string& id) {
  for (const auto& [surface, target] : kb.aliases())
    if (target == id) return surface;
  return {};
}

/// Executes the gold program; returns its answers, or nothing when the
/// answer is empty or coincides with an intermediate or initial value.
inline std::optional<EntitySet> checked_answers(const KnowledgeBase& kb, const Instantiation& inst) {
  std::vector<EntitySet> init;
  for (const auto& e : inst.entities) init.push_back(EntitySet{Value::entity(e)});
  const auto prog = parse_program(inst.program, {init.size(), 3});
  MachineState state(kb, init);
  for (const auto& e : prog.expressions) state.execute(e);
  const auto& answer = state.variable(state.num_variables() - 1);
  if (answer.empty()) return std::nullopt;
  for (std::size_t v = 0; v + 1 < state.num_variables(); ++v)
    if (state.variable(v) == answer) return std::nullopt;
  if (execute_program(kb, prog, init) != answer) throw Error("gold program re-execution mismatch");
  return answer;
}

/// True when no assist-valid program that is shorter than the gold one, or
/// equally long and lexicographically smaller, yields the same answers.
inline bool gold_is_first(const KnowledgeBase& kb, const Instantiation& inst, const EntitySet& answers) {
  std::vector<EntitySet> init;
  for (const auto& e : inst.entities) init.push_back(EntitySet{Value::entity(e)});
  const auto gold = split_whitespace(inst.program);
  std::vector<std::string> prefix;
  // depth-first in text order; returns false on the first earlier rival
  std::function<bool(const DecodingState&)> search = [&](const DecodingState& state) {
    for (const auto& tok : state.valid_tokens()) {
      prefix.push_back(tok.text());
      const bool longer = prefix.size() > gold.size() || (prefix.size() == gold.size() && tok.kind() != TokenKind::Return);
      if (!longer) {
        DecodingState next = state;
        next.advance(tok);
        if (next.terminated()) {
          if (next.result() == answers && (prefix.size() < gold.size() || prefix < gold)) return false;
        } else if (!search(next)) {
          return false;
        }
      }
      prefix.pop_back();
    }
    return true;
  };
  return search(DecodingState(kb, init, 3));
}

inline std::vector<Instantiation> instantiate(const KnowledgeBase& kb, TemplateKind kind) {
  std::vector<Instantiation> out;
  for (const auto& e : kb.entities()) {
    const EntitySet self{Value::entity(e)};
    for (const auto& [p1, objs] : kb.outgoing(e)) {
      if (kind == TemplateKind::OneHop) {
        out.push_back({"one_hop|" + e + "|" + p1, {e}, {"what", "is", "the", p1, "of", "{0}"},
                       "( Hop R0 " + p1 + " ) RETURN"});
        continue;
      }
      if (!objs.front().is_entity()) continue;
      const auto mid = forward(kb, self, p1);
      if (kind == TemplateKind::TwoHop) {
        for (const auto& p2 : reachable_properties(kb, mid))
          out.push_back({"two_hop|" + e + "|" + p1 + "|" + p2, {e},
                         {"what", "is", "the", p2, "of", "the", p1, "of", "{0}"},
                         "( Hop R0 " + p1 + " ) ( Hop R1 " + p2 + " ) RETURN"});
      } else if (kind == TemplateKind::HopArgExtreme) {
        if (mid.size() < 2) continue;
        for (const auto& p2 : comparable_properties(kb, mid)) {
          out.push_back({"hop_argmax|max|" + e + "|" + p1 + "|" + p2, {e},
                         {"which", p1, "of", "{0}", "has", "the", "largest", p2},
                         "( Hop R0 " + p1 + " ) ( ArgMax R1 " + p2 + " ) RETURN"});
          out.push_back({"hop_argmax|min|" + e + "|" + p1 + "|" + p2, {e},
                         {"which", p1, "of", "{0}", "has", "the", "smallest", p2},
                         "( Hop R0 " + p1 + " ) ( ArgMin R1 " + p2 + " ) RETURN"});
        }
      } else {
        if (mid.size() < 2) continue;
        std::set<std::pair<PropertyId, std::string>> filters;
        for (const auto& x : mid)
          for (const auto& [p2, targets] : kb.outgoing(x.entity_id()))
            for (const auto& t : targets)
              if (t.is_entity() && t.entity_id() != e) filters.emplace(p2, t.entity_id());
        for (const auto& [p2, e1] : filters)
          out.push_back({"hop_equal|" + e + "|" + p1 + "|" + p2 + "|" + e1, {e, e1},
                         {"which", p1, "of", "{0}", "has", p2, "{1}"},
                         "( Hop R0 " + p1 + " ) ( Equal R2 R1 " + p2 + " ) RETURN"});
      }
    }
  }
  return out;
}

inline QAItem realize(const KnowledgeBase& kb, const Instantiation& inst, const EntitySet& answers,
                      const std::string& id) {
  QAItem item;
  item.id = id;
  for (const auto& w : inst.words) {
    if (w.size() == 3 && w.front() == '{' && w.back() == '}') {
      const auto& ent = inst.entities.at(static_cast<std::size_t>(w[1] - '0'));
      auto surface = split_whitespace(alias_of(kb, ent));
      if (surface.empty()) surface = {ent};
      item.entities.push_back({item.question.size(), item.question.size() + surface.size(), ent});
      item.question.insert(item.question.end(), surface.begin(), surface.end());
    } else {
      item.question.push_back(w);
    }
  }
  item.answers = answers;
  return item;
}

}  // namespace detail

namespace detail {

/// Splits `total` into parts proportional to `weights` (largest remainder,
/// ties to the lower index), never exceeding `caps`.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights,
                                          const std::vector<std::size_t>& caps) {
  std::size_t wsum = 0;
  for (auto w : weights) wsum += w;
  std::vector<std::size_t> out(weights.size(), 0);
  if (wsum == 0) return out;
  std::vector<std::pair<double, std::size_t>> rest;
  std::size_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * static_cast<double>(weights[i]) / static_cast<double>(wsum);
    out[i] = std::min(caps[i], static_cast<std::size_t>(exact));
    given += out[i];
    rest.emplace_back(-(exact - static_cast<double>(out[i])), i);
  }
  std::sort(rest.begin(), rest.end());
  while (given < total) {
    bool moved = false;
    for (const auto& [frac, i] : rest) {
      if (given == total) break;
      if (out[i] < caps[i]) {
        ++out[i];
        ++given;
        moved = true;
      }
    }
    if (!moved) break;
  }
  return out;
}

}  // namespace detail

/// Samples disjoint train/dev/test questions spread evenly over `templates`.
/// Answers always come from executing the instantiated gold program.
/// Instantiations whose answers are also produced by a shorter or
/// lexicographically earlier program are skipped.
inline GeneratedDataset gen_dataset(const KnowledgeBase& kb, const std::vector<Template>& templates,
                                    std::uint64_t seed, std::size_t n_train, std::size_t n_dev, std::size_t n_test) {
  if (templates.empty()) throw ContractError("no templates");
  std::mt19937_64 rng(seed);
  const std::size_t total = n_train + n_dev + n_test;

  struct Ready {
    const detail::Instantiation* inst;
    EntitySet answers;
  };
  std::vector<std::vector<detail::Instantiation>> pools;
  std::vector<std::vector<Ready>> ready(templates.size());
  for (const auto& t : templates) {
    auto pool = detail::instantiate(kb, t.kind);
    std::shuffle(pool.begin(), pool.end(), rng);
    pools.push_back(std::move(pool));
  }
  std::set<std::string> used;
  for (std::size_t t = 0; t < templates.size(); ++t) {
    for (const auto& inst : pools[t]) {
      if (ready[t].size() == total) break;
      if (!used.insert(inst.key).second) continue;
      auto answers = detail::checked_answers(kb, inst);
      if (!answers || !detail::gold_is_first(kb, inst, *answers)) continue;
      ready[t].push_back({&inst, std::move(*answers)});
    }
    if (ready[t].empty())
      throw ContractError("template '" + templates[t].name + "' has no usable instantiation on this knowledge base");
  }

  // even share per template, surplus moved to templates with room left
  std::vector<std::size_t> avail, quota;
  std::size_t supply = 0;
  for (const auto& r : ready) avail.push_back(r.size()), supply += r.size();
  if (supply < total)
    throw ContractError("templates yield only " + std::to_string(supply) + " of " + std::to_string(total) + " items");
  quota = detail::apportion(total, std::vector<std::size_t>(templates.size(), 1), avail);

  GeneratedDataset out;
  std::vector<std::size_t> left = quota, taken(templates.size(), 0);
  const std::size_t sizes[3] = {n_train, n_dev, n_test};
  const char* names[3] = {"train", "dev", "test"};
  std::vector<GeneratedItem>* dests[3] = {&out.train, &out.dev, &out.test};
  std::size_t counter = 0;
  for (int s = 0; s < 3; ++s) {
    const auto share = s == 2 ? left : detail::apportion(sizes[s], quota, left);
    std::vector<std::pair<std::size_t, std::size_t>> picks;  // (template, index into ready)
    for (std::size_t t = 0; t < templates.size(); ++t) {
      for (std::size_t j = 0; j < share[t]; ++j) picks.emplace_back(t, taken[t] + j);
      taken[t] += share[t];
      left[t] -= share[t];
    }
    if (picks.size() != sizes[s]) throw ContractError(std::string("cannot fill the ") + names[s] + " split");
    std::shuffle(picks.begin(), picks.end(), rng);
    for (const auto& [t, j] : picks) {
      const auto& r = ready[t][j];
      dests[s]->push_back({detail::realize(kb, *r.inst, r.answers, std::string(names[s]) + "-" + std::to_string(counter++)),
                           templates[t].name, r.inst->program});
    }
  }
  return out;
}

inline std::vector<QAItem> items_of(const std::vector<GeneratedItem>& gen) {
  std::vector<QAItem> out;
  for (const auto& g : gen) out.push_back(g.item);
  return out;
}

}  // namespace nsm
