#pragma once

// Small arithmetic expression language for user-defined drift and noise
// scale functions of a state x.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'lx' | 'x' digits | 'e' | 'pi'
//            | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// `lx` is ell * x, `x1` .. `xd` are the coordinates (one-based). Functions:
// log, exp, sqrt, abs (one argument) and pow, min, max (two arguments).

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nearcrit/core.hpp"

namespace nearcrit {

/// Evaluation context for a compiled expression.
struct ExprContext {
  double ell_x = 0.0;
  const Vector* x = nullptr;
};

class Expression {
 public:
  using Node = std::function<double(const ExprContext&)>;

  /// Parses `source`; `dim` bounds the admissible coordinate names x1..xdim.
  static Expression parse(const std::string& source, Eigen::Index dim) {
    Parser p{source, 0, dim};
    Node root = p.expr();
    p.skip_space();
    if (p.pos != source.size()) p.fail("unexpected trailing input");
    Expression e;
    e.source_ = source;
    e.root_ = std::move(root);
    return e;
  }

  double operator()(const ExprContext& ctx) const { return root_(ctx); }
  const std::string& source() const { return source_; }

 private:
  struct Parser {
    const std::string& s;
    std::size_t pos;
    Eigen::Index dim;

    [[noreturn]] void fail(const std::string& msg) const {
      throw InvalidArgument("expression '" + s + "' at offset " + std::to_string(pos) + ": " + msg);
    }

    void skip_space() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool accept(char c) {
      skip_space();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    void expect(char c) {
      if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    Node expr() {
      Node lhs = term();
      for (;;) {
        if (accept('+')) {
          Node rhs = term();
          lhs = [lhs, rhs](const ExprContext& c) { return lhs(c) + rhs(c); };
        } else if (accept('-')) {
          Node rhs = term();
          lhs = [lhs, rhs](const ExprContext& c) { return lhs(c) - rhs(c); };
        } else {
          return lhs;
        }
      }
    }

    Node term() {
      Node lhs = unary();
      for (;;) {
        if (accept('*')) {
          Node rhs = unary();
          lhs = [lhs, rhs](const ExprContext& c) { return lhs(c) * rhs(c); };
        } else if (accept('/')) {
          Node rhs = unary();
          lhs = [lhs, rhs](const ExprContext& c) { return lhs(c) / rhs(c); };
        } else {
          return lhs;
        }
      }
    }

    Node unary() {
      if (accept('-')) {
        Node inner = unary();
        return [inner](const ExprContext& c) { return -inner(c); };
      }
      return power();
    }

    Node power() {
      Node base = primary();
      if (accept('^')) {
        Node exponent = unary();
        return [base, exponent](const ExprContext& c) { return std::pow(base(c), exponent(c)); };
      }
      return base;
    }

    Node primary() {
      skip_space();
      if (pos >= s.size()) fail("unexpected end of input");
      const char c = s[pos];
      if (accept('(')) {
        Node inner = expr();
        expect(')');
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c))) return name();
      fail(std::string("unexpected character '") + c + "'");
    }

    Node number() {
      const char* begin = s.c_str() + pos;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos += static_cast<std::size_t>(end - begin);
      return [v](const ExprContext&) { return v; };
    }

    Node name() {
      const std::size_t start = pos;
      while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
      const std::string id = s.substr(start, pos - start);

      if (id == "lx") return [](const ExprContext& c) { return c.ell_x; };
      if (id == "e") return [](const ExprContext&) { return std::exp(1.0); };
      if (id == "pi") return [](const ExprContext&) { return std::acos(-1.0); };
      if (id.size() > 1 && id[0] == 'x' &&
          id.find_first_not_of("0123456789", 1) == std::string::npos) {
        const long j = std::stol(id.substr(1));
        if (j < 1 || j > dim) fail("coordinate " + id + " out of range 1.." + std::to_string(dim));
        const Eigen::Index idx = static_cast<Eigen::Index>(j - 1);
        return [idx](const ExprContext& c) { return (*c.x)(idx); };
      }

      skip_space();
      if (pos >= s.size() || s[pos] != '(') fail("unknown identifier '" + id + "'");
      ++pos;
      std::vector<Node> args{expr()};
      while (accept(',')) args.push_back(expr());
      expect(')');

      auto unary_fn = [&](double (*f)(double)) -> Node {
        if (args.size() != 1) fail(id + " takes one argument");
        Node a = args[0];
        return [a, f](const ExprContext& c) { return f(a(c)); };
      };
      auto binary_fn = [&](double (*f)(double, double)) -> Node {
        if (args.size() != 2) fail(id + " takes two arguments");
        Node a = args[0], b = args[1];
        return [a, b, f](const ExprContext& c) { return f(a(c), b(c)); };
      };

      if (id == "log") return unary_fn([](double v) { return std::log(v); });
      if (id == "exp") return unary_fn([](double v) { return std::exp(v); });
      if (id == "sqrt") return unary_fn([](double v) { return std::sqrt(v); });
      if (id == "abs") return unary_fn([](double v) { return std::abs(v); });
      if (id == "pow") return binary_fn([](double a, double b) { return std::pow(a, b); });
      if (id == "min") return binary_fn([](double a, double b) { return std::fmin(a, b); });
      if (id == "max") return binary_fn([](double a, double b) { return std::fmax(a, b); });
      fail("unknown function '" + id + "'");
    }
  };

  std::string source_;
  Node root_;
};

}  // namespace nearcrit
