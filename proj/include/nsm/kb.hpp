#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nsm/error.hpp"
#include "nsm/program.hpp"
#include "nsm/value.hpp"

namespace nsm {

struct Triple {
  std::string subject;
  PropertyId property;
  Value object;

  friend bool operator==(const Triple& a, const Triple& b) {
    return a.subject == b.subject && a.property == b.property && a.object == b.object;
  }
  friend bool operator<(const Triple& a, const Triple& b) {
    if (a.subject != b.subject) return a.subject < b.subject;
    if (a.property != b.property) return a.property < b.property;
    return a.object < b.object;
  }
};

using PropertySet = std::set<PropertyId>;

/// Immutable triple store. Literal values (numbers, dates) never have
/// outgoing edges; only entity ids appear as subjects.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  /// Builds and indexes a KB. Duplicate triples collapse; the order of
  /// `triples` and `aliases` does not matter.
  KnowledgeBase(std::vector<Triple> triples, const std::vector<std::pair<std::string, std::string>>& aliases) {
    for (auto& t : triples) {
      if (t.subject.empty()) throw KbError("empty subject");
      if (is_reserved_token(t.property)) throw KbError("invalid property id '" + t.property + "'");
      entities_.insert(t.subject);
      if (t.object.is_entity()) {
        if (t.object.entity_id().empty()) throw KbError("empty object entity id");
        entities_.insert(t.object.entity_id());
      }
      properties_.insert(t.property);
      triples_.insert(std::move(t));
    }
    for (const auto& t : triples_) {
      auto& out = out_[t.subject];
      out[t.property].push_back(t.object);  // triples_ is sorted, so objects arrive sorted
    }
    for (const auto& [surface, id] : aliases) add_alias(surface, id);
  }

  const std::set<std::string>& entities() const { return entities_; }
  const PropertySet& properties() const { return properties_; }
  const std::set<Triple>& triples() const { return triples_; }
  /// Normalized (lowercase, single-spaced) surface form -> entity id.
  const std::map<std::string, std::string>& aliases() const { return aliases_; }

  bool has_property(const PropertyId& p) const { return properties_.count(p) != 0; }

  /// Objects of (subject, p) in canonical order; empty when absent.
  std::span<const Value> objects(const std::string& subject, const PropertyId& p) const {
    auto it = out_.find(subject);
    if (it == out_.end()) return {};
    auto jt = it->second.find(p);
    if (jt == it->second.end()) return {};
    return jt->second;
  }

  /// Outgoing edges of `subject`, keyed by property.
  const std::map<PropertyId, std::vector<Value>>& outgoing(const std::string& subject) const {
    static const std::map<PropertyId, std::vector<Value>> none;
    auto it = out_.find(subject);
    return it == out_.end() ? none : it->second;
  }

  /// Alias surfaces as token sequences, for span matching.
  const std::map<std::vector<std::string>, std::string>& alias_phrases() const { return phrases_; }
  std::size_t longest_alias() const { return longest_alias_; }

 private:
  void add_alias(const std::string& surface, const std::string& id) {
    auto words = split_whitespace(surface);
    if (words.empty()) throw KbError("empty alias surface");
    if (id.empty()) throw KbError("empty alias entity id");
    for (auto& w : words)
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
    std::string norm;
    for (const auto& w : words) norm += (norm.empty() ? "" : " ") + w;
    auto [it, inserted] = aliases_.emplace(norm, id);
    if (!inserted && it->second != id)
      throw KbError("alias '" + norm + "' maps to both '" + it->second + "' and '" + id + "'");
    entities_.insert(id);
    longest_alias_ = std::max(longest_alias_, words.size());
    phrases_.emplace(std::move(words), id);
  }

  std::set<std::string> entities_;
  PropertySet properties_;
  std::set<Triple> triples_;
  std::map<std::string, std::string> aliases_;
  std::map<std::vector<std::string>, std::string> phrases_;
  std::size_t longest_alias_ = 0;
  std::unordered_map<std::string, std::map<PropertyId, std::vector<Value>>> out_;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// Parses the tab-separated KB format:
///   subject<TAB>property<TAB>object<TAB>entity|number|date
///   @alias<TAB>surface<TAB>entity_id
/// Blank lines are ignored.
inline KnowledgeBase parse_kb(std::istream& in) {
  std::vector<Triple> triples;
  std::vector<std::pair<std::string, std::string>> aliases;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields[0] == "@alias") {
      if (fields.size() != 3) throw KbError(lineno, "alias line needs 3 tab-separated fields");
      if (fields[1].empty() || fields[2].empty()) throw KbError(lineno, "empty alias field");
      aliases.emplace_back(std::string(fields[1]), std::string(fields[2]));
      continue;
    }
    if (fields.size() != 4) throw KbError(lineno, "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    if (fields[0].empty()) throw KbError(lineno, "empty subject");
    if (is_reserved_token(fields[1])) throw KbError(lineno, "invalid property id '" + std::string(fields[1]) + "'");
    const auto kind = parse_kind(fields[3]);
    if (!kind) throw KbError(lineno, "unknown object kind '" + std::string(fields[3]) + "'");
    auto object = Value::parse(fields[2], *kind);
    if (!object) throw KbError(lineno, "bad " + std::string(kind_name(*kind)) + " literal '" + std::string(fields[2]) + "'");
    triples.push_back({std::string(fields[0]), std::string(fields[1]), std::move(*object)});
  }
  return KnowledgeBase(std::move(triples), aliases);
}

inline KnowledgeBase parse_kb(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_kb(in);
}

inline KnowledgeBase load_kb(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw KbError("cannot open knowledge base file '" + path + "'");
  return parse_kb(in);
}

/// Canonical text form: sorted triples, then sorted aliases.
inline std::string serialize_kb(const KnowledgeBase& kb) {
  std::string out;
  for (const auto& t : kb.triples()) {
    out += t.subject + '\t' + t.property + '\t' + t.object.str() + '\t' + std::string(kind_name(t.object.kind())) + '\n';
  }
  for (const auto& [surface, id] : kb.aliases()) out += "@alias\t" + surface + '\t' + id + '\n';
  return out;
}

inline void save_kb(const KnowledgeBase& kb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw KbError("cannot write knowledge base file '" + path + "'");
  out << serialize_kb(kb);
}

/// { e2 | e1 in v, (e1, p, e2) in K }.
inline EntitySet forward(const KnowledgeBase& kb, const EntitySet& v, const PropertyId& p) {
  if (!kb.has_property(p)) throw ExecError("unknown property '" + p + "'");
  std::vector<Value> out;
  for (const auto& e : v) {
    if (!e.is_entity()) continue;
    auto objs = kb.objects(e.entity_id(), p);
    out.insert(out.end(), objs.begin(), objs.end());
  }
  return EntitySet(std::move(out));
}

inline PropertySet reachable_properties(const KnowledgeBase& kb, const EntitySet& v) {
  PropertySet out;
  for (const auto& e : v) {
    if (!e.is_entity()) continue;
    for (const auto& [p, objs] : kb.outgoing(e.entity_id())) out.insert(p);
  }
  return out;
}

/// Reachable properties whose objects from `v` are all numbers or all dates.
inline PropertySet comparable_properties(const KnowledgeBase& kb, const EntitySet& v) {
  std::map<PropertyId, unsigned> kinds;  // bitmask of ValueKind seen
  for (const auto& e : v) {
    if (!e.is_entity()) continue;
    for (const auto& [p, objs] : kb.outgoing(e.entity_id())) {
      auto& mask = kinds[p];
      for (const auto& o : objs) mask |= 1u << static_cast<unsigned>(o.kind());
    }
  }
  PropertySet out;
  constexpr unsigned number = 1u << static_cast<unsigned>(ValueKind::Number);
  constexpr unsigned date = 1u << static_cast<unsigned>(ValueKind::Date);
  for (const auto& [p, mask] : kinds)
    if (mask == number || mask == date) out.insert(p);
  return out;
}

/// { p | exists e1 in v1, e2 in v2 : (e1, p, e2) in K }.
inline PropertySet connecting_properties(const KnowledgeBase& kb, const EntitySet& v1, const EntitySet& v2) {
  PropertySet out;
  if (v2.empty()) return out;
  for (const auto& e : v1) {
    if (!e.is_entity()) continue;
    for (const auto& [p, objs] : kb.outgoing(e.entity_id())) {
      if (out.count(p)) continue;
      if (std::any_of(objs.begin(), objs.end(), [&](const Value& o) { return v2.contains(o); })) out.insert(p);
    }
  }
  return out;
}

struct EntityMention {
  std::size_t begin = 0;  // token span [begin, end)
  std::size_t end = 0;
  std::string entity;

  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

/// Greedy left-to-right longest match of alias phrases over lowercased
/// tokens; matches never overlap.
inline std::vector<EntityMention> resolve_entities(const KnowledgeBase& kb, const std::vector<std::string>& words) {
  std::vector<std::string> lower = words;
  for (auto& w : lower)
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
  std::vector<EntityMention> out;
  const auto& phrases = kb.alias_phrases();
  std::size_t i = 0;
  while (i < lower.size()) {
    std::size_t best = 0;
    const std::string* id = nullptr;
    for (std::size_t len = std::min(kb.longest_alias(), lower.size() - i); len >= 1; --len) {
      std::vector<std::string> span(lower.begin() + static_cast<std::ptrdiff_t>(i),
                                    lower.begin() + static_cast<std::ptrdiff_t>(i + len));
      if (auto it = phrases.find(span); it != phrases.end()) {
        best = len;
        id = &it->second;
        break;
      }
    }
    if (id) {
      out.push_back({i, i + best, *id});
      i += best;
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace nsm
