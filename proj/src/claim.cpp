#include "bsde/claim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <vector>

#include "bsde/error.hpp"

namespace bsde {

ClaimType claim_type_from_string(const std::string& s) {
  if (s == "call") return ClaimType::call;
  if (s == "put") return ClaimType::put;
  if (s == "forward") return ClaimType::forward;
  if (s == "custom") return ClaimType::custom;
  throw ConfigError("claim.type must be one of call, put, forward, custom (got \"" + s + "\")");
}

std::string to_string(ClaimType t) {
  switch (t) {
  case ClaimType::call: return "call";
  case ClaimType::put: return "put";
  case ClaimType::forward: return "forward";
  case ClaimType::custom: return "custom";
  }
  return "?";
}

// ------------------------------------------------------------- expression

struct PayoffExpression::Node {
  enum class Kind { number, asset, strike, neg, add, sub, mul, div, pow, call } kind;
  double value = 0.0;
  std::size_t index = 0;
  std::string fn;
  std::vector<std::shared_ptr<const Node>> args;

  double eval(std::span<const double> s, double k) const {
    switch (kind) {
    case Kind::number: return value;
    case Kind::asset: return s[index];
    case Kind::strike: return k;
    case Kind::neg: return -args[0]->eval(s, k);
    case Kind::add: return args[0]->eval(s, k) + args[1]->eval(s, k);
    case Kind::sub: return args[0]->eval(s, k) - args[1]->eval(s, k);
    case Kind::mul: return args[0]->eval(s, k) * args[1]->eval(s, k);
    case Kind::div: return args[0]->eval(s, k) / args[1]->eval(s, k);
    case Kind::pow: return std::pow(args[0]->eval(s, k), args[1]->eval(s, k));
    case Kind::call: break;
    }
    if (fn == "max" || fn == "min") {
      double r = args[0]->eval(s, k);
      for (std::size_t j = 1; j < args.size(); ++j)
        r = fn == "max" ? std::max(r, args[j]->eval(s, k)) : std::min(r, args[j]->eval(s, k));
      return r;
    }
    const double x = args[0]->eval(s, k);
    if (fn == "exp") return std::exp(x);
    if (fn == "log") return std::log(x);
    if (fn == "sqrt") return std::sqrt(x);
    return std::abs(x);
  }
};

namespace {

using NodePtr = std::shared_ptr<const PayoffExpression::Node>;
using Kind = PayoffExpression::Node::Kind;

class Parser {
public:
  Parser(const std::string& src, std::size_t num_assets) : src_(src), n_(num_assets) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("claim.expression: " + msg + " at position " + std::to_string(pos_) + " in \"" + src_ + "\"");
  }

  void skip() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  static NodePtr make(Kind k, std::vector<NodePtr> args = {}) {
    auto n = std::make_shared<PayoffExpression::Node>();
    n->kind = k;
    n->args = std::move(args);
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) lhs = make(Kind::add, {lhs, term()});
      else if (accept('-')) lhs = make(Kind::sub, {lhs, term()});
      else return lhs;
    }
  }
  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) lhs = make(Kind::mul, {lhs, unary()});
      else if (accept('/')) lhs = make(Kind::div, {lhs, unary()});
      else return lhs;
    }
  }
  NodePtr unary() {
    if (accept('-')) return make(Kind::neg, {unary()});
    if (accept('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Kind::pow, {base, unary()}); // right-associative
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (accept('(')) {
      NodePtr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      auto n = std::make_shared<PayoffExpression::Node>();
      n->kind = Kind::number;
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
      const std::string id = src_.substr(start, pos_ - start);
      if (id == "max" || id == "min" || id == "exp" || id == "log" || id == "sqrt" || id == "abs") {
        expect('(');
        std::vector<NodePtr> args{expr()};
        while (accept(',')) args.push_back(expr());
        expect(')');
        const bool variadic = id == "max" || id == "min";
        if (variadic ? args.size() < 2 : args.size() != 1)
          fail(id + (variadic ? " needs at least two arguments" : " takes one argument"));
        auto n = std::make_shared<PayoffExpression::Node>();
        n->kind = Kind::call;
        n->fn = id;
        n->args = std::move(args);
        return n;
      }
      if (id == "K") return make(Kind::strike);
      if (id[0] == 'S') {
        std::size_t idx = 0;
        if (id.size() > 1) {
          if (!std::all_of(id.begin() + 1, id.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
            fail("unknown identifier \"" + id + "\"");
          idx = std::stoul(id.substr(1));
        }
        if (idx >= n_) fail("asset " + id + " does not exist (market has " + std::to_string(n_) + " assets)");
        auto n = std::make_shared<PayoffExpression::Node>();
        n->kind = Kind::asset;
        n->index = idx;
        return n;
      }
      pos_ = start;
      fail("unknown identifier \"" + id + "\"");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& src_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

} // namespace

PayoffExpression::PayoffExpression(const std::string& source, std::size_t num_assets)
    : source_(source), root_(Parser(source_, num_assets).parse()) {}

double PayoffExpression::eval(std::span<const double> prices, double strike) const {
  return root_->eval(prices, strike);
}

// ------------------------------------------------------------------ claims

double ClaimSpec::payoff(std::span<const double> prices) const {
  if (type == ClaimType::custom) return PayoffExpression(expression, prices.size()).eval(prices, strike);
  if (asset >= prices.size()) throw ConfigError("claim.asset out of range");
  const double s = prices[asset];
  switch (type) {
  case ClaimType::call: return std::max(s - strike, 0.0);
  case ClaimType::put: return std::max(strike - s, 0.0);
  default: return s - strike;
  }
}

TerminalVariable make_terminal(const ClaimSpec& claim, const AdaptedProcess& assets) {
  const std::size_t n = assets.dim();
  const std::size_t last = assets.num_steps();
  if (claim.type != ClaimType::custom && claim.asset >= n) throw ConfigError("claim.asset out of range");
  std::optional<PayoffExpression> expr;
  if (claim.type == ClaimType::custom) expr.emplace(claim.expression, n);
  std::vector<double> v(assets.num_paths());
  for (std::size_t p = 0; p < v.size(); ++p) {
    const auto s = assets.at(last, p);
    v[p] = expr ? expr->eval(s, claim.strike) : claim.payoff(s);
    if (!std::isfinite(v[p])) throw ConfigError("claim payoff is not finite on path " + std::to_string(p));
  }
  return TerminalVariable(assets.paths(), 1, std::move(v));
}

} // namespace bsde
