#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crystal {

// Arithmetic over named insight items:
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('+' | '-') unary | number | identifier | '(' expr ')'
class Expression {
 public:
  struct EvalOptions {
    // 0/0 evaluates to 0 instead of NaN (the percent-change guard).
    bool zero_over_zero_is_zero = false;
  };
  using Lookup = std::function<std::optional<double>(std::string_view)>;

  // Throws BadExpression with the offending position.
  static Expression parse(std::string_view text);

  // Throws UnknownIdentifier when lookup returns nullopt.
  double evaluate(const Lookup& lookup, EvalOptions options) const;
  double evaluate(const Lookup& lookup) const { return evaluate(lookup, EvalOptions{}); }

  // Distinct identifiers in first-use order.
  std::vector<std::string> identifiers() const;
  // Canonical text with minimal parentheses; parses back to the same tree.
  std::string to_string() const;

  friend bool operator==(const Expression&, const Expression&) = default;

 private:
  enum class Kind { Number, Identifier, Negate, Add, Subtract, Multiply, Divide };
  struct Node {
    Kind kind = Kind::Number;
    double number = 0.0;
    std::string name;
    int lhs = -1;
    int rhs = -1;
    friend bool operator==(const Node&, const Node&) = default;
  };

  double eval_node(int index, const Lookup& lookup, EvalOptions options) const;
  std::string print_node(int index, int parent_precedence, bool right_side) const;

  std::vector<Node> nodes_;
  int root_ = -1;

  friend class ExpressionParser;
};

double eval_expression(const Expression& expr, const std::map<std::string, double>& item_values,
                       Expression::EvalOptions options = {});

enum class CompareOp { Greater, GreaterEqual, Less, LessEqual, Equal, NotEqual };

struct Comparison {
  std::string term;
  CompareOp op = CompareOp::Greater;
  double literal = 0.0;
  friend bool operator==(const Comparison&, const Comparison&) = default;
};

// Conjunction of `term op literal` clauses joined by '&'.
class ThresholdExpr {
 public:
  static ThresholdExpr parse(std::string_view text);

  const std::vector<Comparison>& clauses() const noexcept { return clauses_; }
  std::vector<std::string> identifiers() const;
  // Missing or non-finite operands make their clause false.
  bool evaluate(const Expression::Lookup& lookup) const;
  std::string to_string() const;

  friend bool operator==(const ThresholdExpr&, const ThresholdExpr&) = default;

 private:
  std::vector<Comparison> clauses_;
};

std::string_view compare_op_symbol(CompareOp op) noexcept;

// Shortest decimal text that round-trips the double.
std::string format_shortest(double value);

}  // namespace crystal
