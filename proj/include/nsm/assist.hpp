#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "nsm/error.hpp"
#include "nsm/interpreter.hpp"
#include "nsm/kb.hpp"
#include "nsm/program.hpp"

namespace nsm {

/// Interpreter state plus the partially emitted program, advanced one token
/// at a time. Only tokens from valid_tokens() may be appended, so every
/// completed expression executes without error and has a non-empty value.
class DecodingState {
 public:
  DecodingState(const KnowledgeBase& kb, const std::vector<EntitySet>& initial, std::size_t max_expressions = 3)
      : machine_(kb), max_expressions_(max_expressions) {
    for (const auto& v : initial) add_variable(v);
  }

  const MachineState& machine() const { return machine_; }
  const std::vector<Token>& tokens() const { return tokens_; }
  std::size_t expression_count() const { return program_.expressions.size(); }
  std::size_t max_expressions() const { return max_expressions_; }
  bool terminated() const { return program_.terminated; }
  bool at_boundary() const { return partial_.empty(); }
  const Program& program() const { return program_; }
  std::size_t initial_vars() const { return machine_.num_variables() - program_.expressions.size(); }

  /// Value of the last created variable, or the empty set if none was created by the program.
  EntitySet result() const {
    if (program_.expressions.empty()) return {};
    return machine_.variable(machine_.num_variables() - 1);
  }

  /// Tokens that keep the program completable without errors, sorted by text.
  std::vector<Token> valid_tokens() const {
    std::vector<Token> out;
    if (terminated()) return out;
    const std::size_t nvars = machine_.num_variables();
    if (partial_.empty()) {
      const bool can_open = expression_count() < max_expressions_ &&
                            std::any_of(kAllFuncs.begin(), kAllFuncs.end(), [&](Func f) { return func_satisfiable(f); });
      if (can_open) out.push_back(Token::open());
      // RETURN needs an answer variable; with nothing else legal it is the only way out.
      if (nvars > 0 || !can_open) out.push_back(Token::ret());
    } else if (partial_.size() == 1) {
      for (Func f : kAllFuncs)
        if (func_satisfiable(f)) out.push_back(Token::func(f));
    } else {
      const Func f = partial_[1].func();
      const std::size_t nargs = partial_.size() - 2;  // tokens after "( F"
      const std::size_t arity = var_arity(f);
      if (nargs < arity) {
        for (std::size_t v = 0; v < nvars; ++v)
          if (var_slot_ok(f, nargs, v)) out.push_back(Token::var(v));
      } else if (nargs == arity) {
        for (const auto& p : property_slot(f)) out.push_back(Token::prop(p));
      } else {
        out.push_back(Token::close());
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool is_valid(const Token& t) const {
    auto valid = valid_tokens();
    return std::binary_search(valid.begin(), valid.end(), t);
  }

  /// Appends `t`; executes the expression on ")". Throws ContractError for
  /// a token outside valid_tokens().
  void advance(const Token& t) {
    if (!is_valid(t)) throw ContractError("token '" + t.text() + "' is not valid after '" + join_tokens(tokens_) + "'");
    tokens_.push_back(t);
    switch (t.kind()) {
      case TokenKind::Return:
        program_.terminated = true;
        break;
      case TokenKind::Close: {
        Expression e;
        e.func = partial_[1].func();
        for (std::size_t k = 0; k < var_arity(e.func); ++k) e.vars.push_back(partial_[2 + k].var_index());
        e.property = partial_[2 + var_arity(e.func)].text();
        add_variable(machine_.evaluate(e));
        program_.expressions.push_back(std::move(e));
        partial_.clear();
        break;
      }
      default:
        partial_.push_back(t);
    }
  }

  /// Properties that can complete a Hop/ArgMax/ArgMin on variable `v`.
  const PropertySet& reachable(std::size_t v) const { return info(v).reachable; }
  const PropertySet& comparable(std::size_t v) const { return info(v).comparable; }

  /// connecting_properties(value(a), value(b)).
  const PropertySet& connecting(std::size_t a, std::size_t b) const {
    if (a == b) return info(a).self;
    if (a > b) return info(a).to_older[b];
    return info(b).from_older[a];
  }

 private:
  struct VarInfo {
    PropertySet reachable;
    PropertySet comparable;
    PropertySet self;
    std::vector<PropertySet> to_older;    // connecting(this, k)
    std::vector<PropertySet> from_older;  // connecting(k, this)
  };

  const VarInfo& info(std::size_t v) const {
    if (v >= infos_.size()) throw ContractError("undefined variable " + var_name(v));
    return *infos_[v];
  }

  void add_variable(EntitySet value) {
    const auto& kb = machine_.kb();
    auto vi = std::make_shared<VarInfo>();
    vi->reachable = reachable_properties(kb, value);
    vi->comparable = comparable_properties(kb, value);
    vi->self = connecting_properties(kb, value, value);
    for (std::size_t k = 0; k < machine_.num_variables(); ++k) {
      vi->to_older.push_back(connecting_properties(kb, value, machine_.variable(k)));
      vi->from_older.push_back(connecting_properties(kb, machine_.variable(k), value));
    }
    machine_.define(std::move(value));
    infos_.push_back(std::move(vi));
  }

  bool equal_first_ok(std::size_t v1) const {
    for (std::size_t v2 = 0; v2 < machine_.num_variables(); ++v2)
      if (!connecting(v1, v2).empty()) return true;
    return false;
  }

  bool var_slot_ok(Func f, std::size_t slot, std::size_t v) const {
    switch (f) {
      case Func::Hop: return !reachable(v).empty();
      case Func::ArgMax:
      case Func::ArgMin: return !comparable(v).empty();
      case Func::Equal:
        if (slot == 0) return equal_first_ok(v);
        return !connecting(partial_[2].var_index(), v).empty();
    }
    return false;
  }

  bool func_satisfiable(Func f) const {
    for (std::size_t v = 0; v < machine_.num_variables(); ++v)
      if (var_slot_ok(f, 0, v)) return true;
    return false;
  }

  const PropertySet& property_slot(Func f) const {
    const std::size_t v = partial_[2].var_index();
    switch (f) {
      case Func::Hop: return reachable(v);
      case Func::ArgMax:
      case Func::ArgMin: return comparable(v);
      case Func::Equal: return connecting(v, partial_[3].var_index());
    }
    return reachable(v);
  }

  MachineState machine_;
  std::size_t max_expressions_;
  std::vector<Token> tokens_;
  std::vector<Token> partial_;  // tokens of the expression in progress, starting at "("
  Program program_;
  std::vector<std::shared_ptr<const VarInfo>> infos_;
};

/// Replays `prefix` through the oracle; throws ContractError if some token
/// was not valid at its step.
inline DecodingState replay(const KnowledgeBase& kb, const std::vector<EntitySet>& initial,
                            const std::vector<Token>& prefix, std::size_t max_expressions = 3) {
  DecodingState s(kb, initial, max_expressions);
  for (const auto& t : prefix) s.advance(t);
  return s;
}

/// Samples uniformly among valid tokens until RETURN.
inline Program random_rollout(const KnowledgeBase& kb, const std::vector<EntitySet>& initial, std::uint64_t seed,
                              std::size_t max_expressions = 3) {
  std::mt19937_64 rng(seed);
  DecodingState s(kb, initial, max_expressions);
  while (!s.terminated()) {
    auto valid = s.valid_tokens();
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
    s.advance(valid[pick(rng)]);
  }
  return s.program();
}

}  // namespace nsm
