#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nsm/error.hpp"
#include "nsm/value.hpp"

namespace nsm {

enum class Func { Hop, ArgMax, ArgMin, Equal };

inline constexpr std::array<Func, 4> kAllFuncs = {Func::Hop, Func::ArgMax, Func::ArgMin, Func::Equal};

inline std::string_view func_name(Func f) {
  switch (f) {
    case Func::Hop: return "Hop";
    case Func::ArgMax: return "ArgMax";
    case Func::ArgMin: return "ArgMin";
    case Func::Equal: return "Equal";
  }
  return "Hop";
}

inline std::optional<Func> parse_func(std::string_view s) {
  for (Func f : kAllFuncs)
    if (func_name(f) == s) return f;
  return std::nullopt;
}

/// Number of variable arguments; every function then takes exactly one property.
inline std::size_t var_arity(Func f) { return f == Func::Equal ? 2 : 1; }

enum class TokenKind { Open, Close, Func, Prop, Var, Return, Go };

/// `R<n>` with no leading zeros.
inline std::optional<std::size_t> parse_var_name(std::string_view s) {
  if (s.size() < 2 || s[0] != 'R') return std::nullopt;
  if (s[1] == '0' && s.size() > 2) return std::nullopt;
  std::size_t n = 0;
  for (char c : s.substr(1)) {
    if (c < '0' || c > '9') return std::nullopt;
    n = n * 10 + static_cast<std::size_t>(c - '0');
  }
  return n;
}

inline std::string var_name(std::size_t index) { return "R" + std::to_string(index); }

/// Kind of a surface token. Anything that is not a keyword, function or
/// variable name is a property.
inline TokenKind classify_token(std::string_view s) {
  if (s == "(") return TokenKind::Open;
  if (s == ")") return TokenKind::Close;
  if (s == "RETURN") return TokenKind::Return;
  if (s == "GO") return TokenKind::Go;
  if (parse_func(s)) return TokenKind::Func;
  if (parse_var_name(s)) return TokenKind::Var;
  return TokenKind::Prop;
}

/// True when `s` cannot be used as a property id.
inline bool is_reserved_token(std::string_view s) {
  if (s.empty()) return true;
  for (char c : s)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return true;
  return classify_token(s) != TokenKind::Prop;
}

class Token {
 public:
  explicit Token(std::string text) : kind_(classify_token(text)), text_(std::move(text)) {}

  static Token open() { return Token("("); }
  static Token close() { return Token(")"); }
  static Token ret() { return Token("RETURN"); }
  static Token go() { return Token("GO"); }
  static Token func(Func f) { return Token(std::string(func_name(f))); }
  static Token var(std::size_t index) { return Token(var_name(index)); }
  static Token prop(const PropertyId& p) {
    if (is_reserved_token(p)) throw ContractError("not a property token: '" + p + "'");
    return Token(p);
  }

  TokenKind kind() const { return kind_; }
  const std::string& text() const { return text_; }
  Func func() const { return *parse_func(text_); }
  std::size_t var_index() const { return *parse_var_name(text_); }

  friend bool operator==(const Token& a, const Token& b) { return a.text_ == b.text_; }
  friend bool operator<(const Token& a, const Token& b) { return a.text_ < b.text_; }

 private:
  TokenKind kind_;
  std::string text_;
};

/// `( F v... p )`: variable arguments followed by one property.
struct Expression {
  Func func = Func::Hop;
  std::vector<std::size_t> vars;
  PropertyId property;

  std::vector<Token> tokens() const {
    std::vector<Token> out{Token::open(), Token::func(func)};
    for (auto v : vars) out.push_back(Token::var(v));
    out.push_back(Token::prop(property));
    out.push_back(Token::close());
    return out;
  }

  friend bool operator==(const Expression&, const Expression&) = default;
};

struct Program {
  std::vector<Expression> expressions;
  bool terminated = false;

  std::vector<Token> tokens() const {
    std::vector<Token> out;
    for (const auto& e : expressions) {
      auto t = e.tokens();
      out.insert(out.end(), t.begin(), t.end());
    }
    if (terminated) out.push_back(Token::ret());
    return out;
  }

  friend bool operator==(const Program&, const Program&) = default;
};

inline std::string join_tokens(const std::vector<Token>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t.text();
  }
  return out;
}

inline std::string serialize(const Program& p) { return join_tokens(p.tokens()); }

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

struct ParseOptions {
  /// Variables R0..R{n-1} that exist before the first expression.
  std::size_t initial_vars = 0;
  std::size_t max_expressions = 3;
};

/// Parses whitespace-separated program text. The result is always
/// terminated: a missing RETURN is an error.
inline Program parse_program(std::string_view text, const ParseOptions& opts = {}) {
  const auto words = split_whitespace(text);
  Program prog;
  std::size_t defined = opts.initial_vars;
  std::size_t i = 0;
  auto expect = [&](TokenKind kind, const char* what) -> const std::string& {
    if (i >= words.size()) throw ParseError(i, std::string("unexpected end of program, expected ") + what);
    if (classify_token(words[i]) != kind)
      throw ParseError(i, "expected " + std::string(what) + ", got '" + words[i] + "'");
    return words[i++];
  };
  while (i < words.size()) {
    const auto kind = classify_token(words[i]);
    if (kind == TokenKind::Return) {
      prog.terminated = true;
      ++i;
      break;
    }
    if (kind != TokenKind::Open) throw ParseError(i, "expected '(' or RETURN, got '" + words[i] + "'");
    if (prog.expressions.size() >= opts.max_expressions)
      throw ParseError(i, "more than " + std::to_string(opts.max_expressions) + " expressions");
    ++i;
    if (i < words.size() && classify_token(words[i]) != TokenKind::Func &&
        classify_token(words[i]) != TokenKind::Close)
      throw ParseError(i, "unknown function '" + words[i] + "'");
    Expression e;
    e.func = *parse_func(expect(TokenKind::Func, "function"));
    for (std::size_t k = 0; k < var_arity(e.func); ++k) {
      const std::size_t at = i;
      const auto v = *parse_var_name(expect(TokenKind::Var, "variable"));
      if (v >= defined) throw ParseError(at, "undefined variable " + var_name(v));
      e.vars.push_back(v);
    }
    e.property = expect(TokenKind::Prop, "property");
    expect(TokenKind::Close, "')'");
    prog.expressions.push_back(std::move(e));
    ++defined;
  }
  if (!prog.terminated) throw ParseError(i, "missing RETURN");
  if (i != words.size()) throw ParseError(i, "tokens after RETURN");
  return prog;
}

}  // namespace nsm
