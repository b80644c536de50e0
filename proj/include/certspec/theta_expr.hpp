#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <string_view>

#include "certspec/param_box.hpp"
#include "certspec/types.hpp"

namespace certspec {

/// Scalar coefficient function theta(mu) given as a small expression tree.
///
/// Grammar (whitespace insignificant):
///
///     expr    := term (('+' | '-') term)*
///     term    := unary (('*' | '/') unary)*
///     unary   := '-' unary | power
///     power   := primary ('^' ['-'] digits)?
///     primary := number | 'mu' digits | 'exp' '(' expr ')' | 'sq' '(' expr ')' | '(' expr ')'
///
/// Variables are 1-based (`mu1`, `mu2`, ...). Only integer exponents are
/// accepted, so every expression is real-analytic wherever it is finite.
class ThetaExpr {
 public:
  enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Exp, Square };

  struct Node {
    Op op;
    double value = 0.0;     // Const
    int index = 0;          // Var (0-based), Pow exponent
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
  };
  using NodePtr = std::shared_ptr<const Node>;

  ThetaExpr() : root_(make_const(0.0)), params_(1) {}

  static ThetaExpr parse(std::string_view text, std::size_t params) {
    Parser ps{text, 0, params};
    ps.skip_ws();
    if (ps.pos >= text.size()) throw ParseError("empty coefficient expression", 0);
    NodePtr root = ps.expr();
    ps.skip_ws();
    if (ps.pos != text.size()) throw ParseError("unexpected character '" + std::string(1, text[ps.pos]) + "'", ps.pos);
    return ThetaExpr(std::move(root), params);
  }

  static ThetaExpr constant(double c, std::size_t params) { return ThetaExpr(make_const(c), params); }

  static ThetaExpr product(const ThetaExpr& a, const ThetaExpr& b) {
    return ThetaExpr(make_bin(Op::Mul, a.root_, b.root_), std::max(a.params_, b.params_));
  }
  static ThetaExpr square(const ThetaExpr& a) {
    return ThetaExpr(make_unary(Op::Square, a.root_), a.params_);
  }
  static ThetaExpr scaled(double c, const ThetaExpr& a) {
    return ThetaExpr(make_bin(Op::Mul, make_const(c), a.root_), a.params_);
  }

  std::size_t params() const { return params_; }
  const Node& root() const { return *root_; }

  double operator()(const Point& mu) const { return eval(*root_, mu); }

  /// Canonical, fully parenthesised text; parse(to_string()) reproduces the tree.
  std::string to_string() const { return print(*root_); }

  /// Evaluates on a small tensor mesh of the box (plus the center) and throws
  /// DegenerateCoefficientError at the first non-finite value.
  void validate_on(const ParamBox& box, std::size_t per_dim = 7) const {
    auto check = [&](const Point& mu) {
      double v = (*this)(mu);
      if (!std::isfinite(v))
        throw DegenerateCoefficientError("coefficient '" + to_string() + "' is not finite on the parameter box");
    };
    for (const auto& mu : uniform_grid(box, per_dim)) check(mu);
    check(box.center());
  }

  friend bool operator==(const ThetaExpr& a, const ThetaExpr& b) {
    return a.params_ == b.params_ && same(*a.root_, *b.root_);
  }

 private:
  ThetaExpr(NodePtr root, std::size_t params) : root_(std::move(root)), params_(params) {}

  static NodePtr make_const(double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = v;
    return n;
  }
  static NodePtr make_var(int i) {
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->index = i;
    return n;
  }
  static NodePtr make_bin(Op op, NodePtr l, NodePtr r) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
  }
  static NodePtr make_unary(Op op, NodePtr a) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->lhs = std::move(a);
    return n;
  }
  static NodePtr make_pow(NodePtr a, int e) {
    auto n = std::make_shared<Node>();
    n->op = Op::Pow;
    n->index = e;
    n->lhs = std::move(a);
    return n;
  }

  static bool same(const Node& a, const Node& b) {
    if (a.op != b.op) return false;
    switch (a.op) {
      case Op::Const: return a.value == b.value || (std::isnan(a.value) && std::isnan(b.value));
      case Op::Var: return a.index == b.index;
      case Op::Pow: return a.index == b.index && same(*a.lhs, *b.lhs);
      case Op::Neg:
      case Op::Exp:
      case Op::Square: return same(*a.lhs, *b.lhs);
      default: return same(*a.lhs, *b.lhs) && same(*a.rhs, *b.rhs);
    }
  }

  static double eval(const Node& n, const Point& mu) {
    switch (n.op) {
      case Op::Const: return n.value;
      case Op::Var: return mu[static_cast<std::size_t>(n.index)];
      case Op::Add: return eval(*n.lhs, mu) + eval(*n.rhs, mu);
      case Op::Sub: return eval(*n.lhs, mu) - eval(*n.rhs, mu);
      case Op::Mul: return eval(*n.lhs, mu) * eval(*n.rhs, mu);
      case Op::Div: return eval(*n.lhs, mu) / eval(*n.rhs, mu);
      case Op::Neg: return -eval(*n.lhs, mu);
      case Op::Pow: return std::pow(eval(*n.lhs, mu), n.index);
      case Op::Exp: return std::exp(eval(*n.lhs, mu));
      case Op::Square: {
        double v = eval(*n.lhs, mu);
        return v * v;
      }
    }
    return std::nan("");
  }

  static std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    if (v < 0) s = "(" + s + ")";
    return s;
  }

  static std::string print(const Node& n) {
    switch (n.op) {
      case Op::Const: return number(n.value);
      case Op::Var: return "mu" + std::to_string(n.index + 1);
      case Op::Add: return "(" + print(*n.lhs) + " + " + print(*n.rhs) + ")";
      case Op::Sub: return "(" + print(*n.lhs) + " - " + print(*n.rhs) + ")";
      case Op::Mul: return "(" + print(*n.lhs) + " * " + print(*n.rhs) + ")";
      case Op::Div: return "(" + print(*n.lhs) + " / " + print(*n.rhs) + ")";
      case Op::Neg: return "(-" + print(*n.lhs) + ")";
      case Op::Pow: return "(" + print(*n.lhs) + "^" + std::to_string(n.index) + ")";
      case Op::Exp: return "exp(" + print(*n.lhs) + ")";
      case Op::Square: return "sq(" + print(*n.lhs) + ")";
    }
    return "?";
  }

  struct Parser {
    std::string_view s;
    std::size_t pos;
    std::size_t params;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    void expect(char c) {
      if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos);
    }

    NodePtr expr() {
      NodePtr lhs = term();
      for (;;) {
        if (accept('+')) lhs = make_bin(Op::Add, lhs, term());
        else if (accept('-')) lhs = make_bin(Op::Sub, lhs, term());
        else return lhs;
      }
    }
    NodePtr term() {
      NodePtr lhs = unary();
      for (;;) {
        if (accept('*')) lhs = make_bin(Op::Mul, lhs, unary());
        else if (accept('/')) lhs = make_bin(Op::Div, lhs, unary());
        else return lhs;
      }
    }
    NodePtr unary() {
      if (accept('-')) {
        NodePtr a = unary();
        if (a->op == Op::Const) return make_const(-a->value);
        return make_unary(Op::Neg, a);
      }
      return power();
    }
    NodePtr power() {
      NodePtr base = primary();
      if (accept('^')) {
        skip_ws();
        const std::size_t start = pos;
        bool neg = false;
        if (pos < s.size() && s[pos] == '-') {
          neg = true;
          ++pos;
        }
        const std::size_t digits = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos == digits) throw ParseError("exponent must be an integer", start);
        int e = 0;
        auto [p, ec] = std::from_chars(s.data() + digits, s.data() + pos, e);
        if (ec != std::errc()) throw ParseError("exponent out of range", start);
        (void)p;
        return make_pow(base, neg ? -e : e);
      }
      return base;
    }
    bool keyword(std::string_view kw) {
      skip_ws();
      if (s.substr(pos, kw.size()) != kw) return false;
      std::size_t after = pos + kw.size();
      if (after < s.size() && std::isalpha(static_cast<unsigned char>(s[after]))) return false;
      pos = after;
      return true;
    }
    NodePtr primary() {
      skip_ws();
      if (pos >= s.size()) throw ParseError("unexpected end of expression", pos);
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        NodePtr e = expr();
        expect(')');
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return literal();
      const std::size_t start = pos;
      if (keyword("exp")) {
        expect('(');
        NodePtr e = expr();
        expect(')');
        return make_unary(Op::Exp, e);
      }
      if (keyword("sq")) {
        expect('(');
        NodePtr e = expr();
        expect(')');
        return make_unary(Op::Square, e);
      }
      if (s.substr(pos, 2) == "mu") {
        pos += 2;
        const std::size_t digits = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos == digits) throw ParseError("variable needs an index (mu1, mu2, ...)", start);
        std::size_t k = 0;
        std::from_chars(s.data() + digits, s.data() + pos, k);
        if (k < 1 || k > params)
          throw ParseError("unknown variable mu" + std::to_string(k) + " (parameter count " +
                               std::to_string(params) + ")",
                           start);
        return make_var(static_cast<int>(k - 1));
      }
      throw ParseError("unexpected character '" + std::string(1, c) + "'", pos);
    }
    NodePtr literal() {
      const std::size_t start = pos;
      while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) ++pos;
      if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
        std::size_t save = pos++;
        if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) ++pos;
        if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
          while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        } else {
          pos = save;
        }
      }
      double v = 0.0;
      auto [p, ec] = std::from_chars(s.data() + start, s.data() + pos, v);
      if (ec != std::errc() || p != s.data() + pos) throw ParseError("malformed number", start);
      return make_const(v);
    }
  };

  NodePtr root_;
  std::size_t params_;
};

}  // namespace certspec
