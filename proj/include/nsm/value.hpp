#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "nsm/error.hpp"

namespace nsm {

using PropertyId = std::string;

struct EntityRef {
  std::string id;

  friend auto operator<=>(const EntityRef&, const EntityRef&) = default;
};

/// Proleptic Gregorian calendar date.
struct Date {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  friend auto operator<=>(const Date&, const Date&) = default;

  bool valid() const {
    return std::chrono::year_month_day{std::chrono::year{year}, std::chrono::month{month},
                                       std::chrono::day{day}}
        .ok();
  }

  /// Parses strict `YYYY-MM-DD`.
  static std::optional<Date> parse(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    Date d;
    auto digits = [](std::string_view s, auto& out) {
      if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
      return ec == std::errc{} && ptr == s.data() + s.size();
    };
    if (!digits(text.substr(0, 4), d.year) || !digits(text.substr(5, 2), d.month) ||
        !digits(text.substr(8, 2), d.day))
      return std::nullopt;
    if (!d.valid()) return std::nullopt;
    return d;
  }

  std::string str() const {
    char buf[16];
    auto put = [&](char* at, unsigned v, int width) {
      for (int i = width - 1; i >= 0; --i) {
        at[i] = static_cast<char>('0' + v % 10);
        v /= 10;
      }
    };
    put(buf, static_cast<unsigned>(year), 4);
    buf[4] = '-';
    put(buf + 5, month, 2);
    buf[7] = '-';
    put(buf + 8, day, 2);
    return std::string(buf, 10);
  }
};

enum class ValueKind { Entity, Number, Date };

inline std::string_view kind_name(ValueKind k) {
  switch (k) {
    case ValueKind::Entity: return "entity";
    case ValueKind::Number: return "number";
    case ValueKind::Date: return "date";
  }
  return "entity";
}

inline std::optional<ValueKind> parse_kind(std::string_view s) {
  if (s == "entity") return ValueKind::Entity;
  if (s == "number") return ValueKind::Number;
  if (s == "date") return ValueKind::Date;
  return std::nullopt;
}

/// Shortest decimal text that parses back to exactly `x`.
inline std::string format_number(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

inline std::optional<double> parse_number(std::string_view s) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(x)) return std::nullopt;
  return x;
}

/// An element of a denotation: an entity id, a finite number, or a date.
///
/// Values order entities first (lexicographic by id), then numbers, then
/// dates, each ascending. Numbers are never NaN, so the order is total.
class Value {
 public:
  Value() : v_(EntityRef{}) {}
  Value(EntityRef e) : v_(std::move(e)) {}
  Value(double x) : v_(x) {
    if (!std::isfinite(x)) throw KbError("number value must be finite");
  }
  Value(Date d) : v_(d) {
    if (!d.valid()) throw KbError("invalid calendar date");
  }

  static Value entity(std::string id) { return Value(EntityRef{std::move(id)}); }

  /// Parses the textual form used in KB files for the given kind.
  static std::optional<Value> parse(std::string_view text, ValueKind kind) {
    switch (kind) {
      case ValueKind::Entity:
        if (text.empty()) return std::nullopt;
        return Value::entity(std::string(text));
      case ValueKind::Number:
        if (auto x = parse_number(text)) return Value(*x);
        return std::nullopt;
      case ValueKind::Date:
        if (auto d = Date::parse(text)) return Value(*d);
        return std::nullopt;
    }
    return std::nullopt;
  }

  ValueKind kind() const { return static_cast<ValueKind>(v_.index()); }
  bool is_entity() const { return kind() == ValueKind::Entity; }
  bool is_number() const { return kind() == ValueKind::Number; }
  bool is_date() const { return kind() == ValueKind::Date; }

  const std::string& entity_id() const { return std::get<EntityRef>(v_).id; }
  double number() const { return std::get<double>(v_); }
  const Date& date() const { return std::get<Date>(v_); }

  std::string str() const {
    switch (kind()) {
      case ValueKind::Entity: return entity_id();
      case ValueKind::Number: return format_number(number());
      case ValueKind::Date: return date().str();
    }
    return {};
  }

  friend bool operator==(const Value& a, const Value& b) { return a.v_ == b.v_; }
  friend bool operator<(const Value& a, const Value& b) { return a.v_ < b.v_; }

 private:
  std::variant<EntityRef, double, Date> v_;
};

/// Duplicate-free values kept in canonical order.
class EntitySet {
 public:
  using const_iterator = std::vector<Value>::const_iterator;

  EntitySet() = default;
  EntitySet(std::initializer_list<Value> values) : EntitySet(std::vector<Value>(values)) {}
  explicit EntitySet(std::vector<Value> values) : items_(std::move(values)) {
    std::sort(items_.begin(), items_.end());
    items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
  }

  static EntitySet of_entities(std::initializer_list<std::string_view> ids) {
    std::vector<Value> v;
    for (auto id : ids) v.push_back(Value::entity(std::string(id)));
    return EntitySet(std::move(v));
  }

  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  const_iterator begin() const { return items_.begin(); }
  const_iterator end() const { return items_.end(); }
  const Value& operator[](std::size_t i) const { return items_[i]; }
  const std::vector<Value>& values() const { return items_; }

  bool contains(const Value& v) const { return std::binary_search(items_.begin(), items_.end(), v); }

  std::size_t intersection_size(const EntitySet& other) const {
    std::size_t n = 0;
    auto a = items_.begin();
    auto b = other.items_.begin();
    while (a != items_.end() && b != other.items_.end()) {
      if (*a < *b) {
        ++a;
      } else if (*b < *a) {
        ++b;
      } else {
        ++n;
        ++a;
        ++b;
      }
    }
    return n;
  }

  friend bool operator==(const EntitySet&, const EntitySet&) = default;

 private:
  std::vector<Value> items_;
};

}  // namespace nsm
