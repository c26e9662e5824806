#pragma once

// European claims on the terminal asset prices: vanilla call, put and forward
// on one asset, or a custom expression of S0..S{n-1}.

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "bsde/core.hpp"

namespace bsde {

enum class ClaimType { call, put, forward, custom };

ClaimType claim_type_from_string(const std::string& s);
std::string to_string(ClaimType t);

/// Arithmetic expression over S0..S{n-1} (S is an alias of S0) and K, the
/// claim strike. Supports + - * / ^, unary minus, parentheses and the
/// functions max, min, exp, log, sqrt, abs.
class PayoffExpression {
public:
  /// Throws ConfigError with the offending position on a parse error or a
  /// reference to an asset index >= num_assets.
  PayoffExpression(const std::string& source, std::size_t num_assets);

  double eval(std::span<const double> prices, double strike) const;
  const std::string& source() const noexcept { return source_; }

  struct Node;

private:
  std::string source_;
  std::shared_ptr<const Node> root_;
};

struct ClaimSpec {
  ClaimType type = ClaimType::call;
  double strike = 0.0;
  std::size_t asset = 0;     ///< underlying for call, put and forward
  std::string expression;    ///< custom claims only

  double payoff(std::span<const double> prices) const;
};

/// xi on every path from the terminal slice of the asset process.
/// Custom expressions are parsed once.
TerminalVariable make_terminal(const ClaimSpec& claim, const AdaptedProcess& assets);

} // namespace bsde
