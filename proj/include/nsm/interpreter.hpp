#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nsm/error.hpp"
#include "nsm/kb.hpp"
#include "nsm/program.hpp"
#include "nsm/value.hpp"

namespace nsm {

/// ( Hop v p ): objects of p reached from v.
inline EntitySet hop(const KnowledgeBase& kb, const EntitySet& v, const PropertyId& p) { return forward(kb, v, p); }

namespace detail {

/// Entities of `v` whose own best p-value (max when `maximize`) equals the
/// best score over all of `v`. Values must all be numbers or all dates.
inline EntitySet arg_extreme(const KnowledgeBase& kb, const EntitySet& v, const PropertyId& p, bool maximize) {
  if (!kb.has_property(p)) throw ExecError("unknown property '" + p + "'");
  std::optional<ValueKind> kind;
  std::vector<std::pair<const Value*, const Value*>> scored;  // (entity, its extreme value)
  for (const auto& e : v) {
    if (!e.is_entity()) continue;
    auto objs = kb.objects(e.entity_id(), p);
    if (objs.empty()) continue;
    for (const auto& o : objs) {
      if (o.is_entity())
        throw ExecError("property '" + p + "' has entity values; ArgMax/ArgMin need numbers or dates");
      if (kind && *kind != o.kind()) throw ExecError("property '" + p + "' mixes numbers and dates");
      kind = o.kind();
    }
    // objects are sorted ascending
    scored.emplace_back(&e, maximize ? &objs.back() : &objs.front());
  }
  if (scored.empty()) return {};
  const Value* best = scored.front().second;
  for (const auto& [e, s] : scored)
    if (maximize ? *best < *s : *s < *best) best = s;
  std::vector<Value> out;
  for (const auto& [e, s] : scored)
    if (*s == *best) out.push_back(*e);
  return EntitySet(std::move(out));
}

}  // namespace detail

inline EntitySet argmax(const KnowledgeBase& kb, const EntitySet& v, const PropertyId& p) {
  return detail::arg_extreme(kb, v, p, true);
}

inline EntitySet argmin(const KnowledgeBase& kb, const EntitySet& v, const PropertyId& p) {
  return detail::arg_extreme(kb, v, p, false);
}

/// ( Equal v1 v2 p ): members of v1 with a p-edge into v2.
inline EntitySet equal(const KnowledgeBase& kb, const EntitySet& v1, const EntitySet& v2, const PropertyId& p) {
  if (!kb.has_property(p)) throw ExecError("unknown property '" + p + "'");
  std::vector<Value> out;
  if (v2.empty()) return {};
  for (const auto& e : v1) {
    if (!e.is_entity()) continue;
    for (const auto& o : kb.objects(e.entity_id(), p)) {
      if (v2.contains(o)) {
        out.push_back(e);
        break;
      }
    }
  }
  return EntitySet(std::move(out));
}

/// Write-once variable store of the interpreter. Variables are named R0,
/// R1, ... in creation order.
class MachineState {
 public:
  explicit MachineState(const KnowledgeBase& kb, const std::vector<EntitySet>& initial = {}) : kb_(&kb) {
    for (const auto& v : initial) define(v);
  }

  const KnowledgeBase& kb() const { return *kb_; }
  std::size_t num_variables() const { return vars_.size(); }

  const EntitySet& variable(std::size_t index) const {
    if (index >= vars_.size()) throw ExecError("undefined variable " + var_name(index));
    return *vars_[index];
  }

  std::size_t define(EntitySet value) {
    vars_.push_back(std::make_shared<const EntitySet>(std::move(value)));
    return vars_.size() - 1;
  }

  /// Evaluates `e` without storing the result.
  EntitySet evaluate(const Expression& e) const {
    if (e.vars.size() != var_arity(e.func))
      throw ExecError(std::string(func_name(e.func)) + " takes " + std::to_string(var_arity(e.func)) + " variable(s)");
    switch (e.func) {
      case Func::Hop: return hop(*kb_, variable(e.vars[0]), e.property);
      case Func::ArgMax: return argmax(*kb_, variable(e.vars[0]), e.property);
      case Func::ArgMin: return argmin(*kb_, variable(e.vars[0]), e.property);
      case Func::Equal: return equal(*kb_, variable(e.vars[0]), variable(e.vars[1]), e.property);
    }
    return {};
  }

  /// Evaluates `e` and stores the result in a fresh variable.
  std::size_t execute(const Expression& e) { return define(evaluate(e)); }

 private:
  const KnowledgeBase* kb_;
  std::vector<std::shared_ptr<const EntitySet>> vars_;
};

inline EntitySet exec_hop(MachineState& s, std::size_t v, const PropertyId& p) {
  return s.variable(s.execute({Func::Hop, {v}, p}));
}

inline EntitySet exec_argmax(MachineState& s, std::size_t v, const PropertyId& p) {
  return s.variable(s.execute({Func::ArgMax, {v}, p}));
}

inline EntitySet exec_argmin(MachineState& s, std::size_t v, const PropertyId& p) {
  return s.variable(s.execute({Func::ArgMin, {v}, p}));
}

inline EntitySet exec_equal(MachineState& s, std::size_t v1, std::size_t v2, const PropertyId& p) {
  return s.variable(s.execute({Func::Equal, {v1, v2}, p}));
}

/// Runs every expression in order and returns the value of the last one
/// (the empty set for a program with no expressions). Throws ExecError.
inline EntitySet execute_program(const KnowledgeBase& kb, const Program& program,
                                 const std::vector<EntitySet>& initial_vars) {
  MachineState state(kb, initial_vars);
  if (program.expressions.empty()) return {};
  std::size_t last = 0;
  for (const auto& e : program.expressions) last = state.execute(e);
  return state.variable(last);
}

/// Total version of execute_program: a failing program denotes the empty set.
inline EntitySet denotation(const KnowledgeBase& kb, const Program& program,
                            const std::vector<EntitySet>& initial_vars) {
  try {
    return execute_program(kb, program, initial_vars);
  } catch (const ExecError&) {
    return {};
  }
}

}  // namespace nsm
