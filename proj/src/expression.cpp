#include "crystal/expression.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "crystal/error.hpp"

namespace crystal {
namespace {

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

[[noreturn]] void bad(std::string_view text, std::size_t pos, std::string_view what) {
  throw Error(ErrorCode::BadExpression,
              std::string(what) + " at position " + std::to_string(pos) + " in '" +
                  std::string(text) + "'");
}

class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }
  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  bool consume(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool consume(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }
  std::optional<std::string> identifier() {
    skip_space();
    if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) return std::nullopt;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }
  std::optional<double> number() {
    skip_space();
    if (pos_ >= text_.size() || !(is_digit(text_[pos_]) || text_[pos_] == '.')) return std::nullopt;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (is_digit(text_[pos_]) || text_[pos_] == '.')) ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && is_digit(text_[p])) {
        pos_ = p;
        while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
      }
    }
    double value = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) bad(text_, start, "malformed number");
    return value;
  }
  std::size_t pos() const noexcept { return pos_; }
  std::string_view text() const noexcept { return text_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

int precedence_of(int kind_code) {
  // Add/Subtract = 1, Multiply/Divide = 2, Negate = 3, leaves = 4
  return kind_code;
}

}  // namespace

class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view text) : cur_(text) {}

  Expression run() {
    if (cur_.at_end()) bad(cur_.text(), 0, "empty expression");
    expr_.root_ = parse_sum();
    if (!cur_.at_end()) bad(cur_.text(), cur_.pos(), "unexpected character");
    return std::move(expr_);
  }

 private:
  using Kind = Expression::Kind;

  int add(Expression::Node node) {
    expr_.nodes_.push_back(std::move(node));
    return static_cast<int>(expr_.nodes_.size() - 1);
  }

  int parse_sum() {
    int lhs = parse_product();
    for (;;) {
      if (cur_.consume('+')) {
        lhs = add({Kind::Add, 0.0, {}, lhs, parse_product()});
      } else if (cur_.consume('-')) {
        lhs = add({Kind::Subtract, 0.0, {}, lhs, parse_product()});
      } else {
        return lhs;
      }
    }
  }

  int parse_product() {
    int lhs = parse_unary();
    for (;;) {
      if (cur_.consume('*')) {
        lhs = add({Kind::Multiply, 0.0, {}, lhs, parse_unary()});
      } else if (cur_.consume('/')) {
        lhs = add({Kind::Divide, 0.0, {}, lhs, parse_unary()});
      } else {
        return lhs;
      }
    }
  }

  int parse_unary() {
    if (++depth_ > 256) bad(cur_.text(), cur_.pos(), "expression nested too deeply");
    int result = -1;
    if (cur_.consume('-')) {
      result = add({Kind::Negate, 0.0, {}, parse_unary(), -1});
    } else if (cur_.consume('+')) {
      result = parse_unary();
    } else if (cur_.consume('(')) {
      result = parse_sum();
      if (!cur_.consume(')')) bad(cur_.text(), cur_.pos(), "expected ')'");
    } else if (auto value = cur_.number()) {
      result = add({Kind::Number, *value, {}, -1, -1});
    } else if (auto name = cur_.identifier()) {
      result = add({Kind::Identifier, 0.0, std::move(*name), -1, -1});
    } else {
      bad(cur_.text(), cur_.pos(), cur_.at_end() ? "unexpected end of expression" : "unexpected character");
    }
    --depth_;
    return result;
  }

  Cursor cur_;
  Expression expr_;
  int depth_ = 0;
};

Expression Expression::parse(std::string_view text) { return ExpressionParser(text).run(); }

double Expression::eval_node(int index, const Lookup& lookup, EvalOptions options) const {
  const Node& node = nodes_[static_cast<std::size_t>(index)];
  switch (node.kind) {
    case Kind::Number: return node.number;
    case Kind::Identifier: {
      const auto value = lookup(node.name);
      if (!value) throw Error(ErrorCode::UnknownIdentifier, "unknown identifier '" + node.name + "'");
      return *value;
    }
    case Kind::Negate: return -eval_node(node.lhs, lookup, options);
    case Kind::Add: return eval_node(node.lhs, lookup, options) + eval_node(node.rhs, lookup, options);
    case Kind::Subtract:
      return eval_node(node.lhs, lookup, options) - eval_node(node.rhs, lookup, options);
    case Kind::Multiply:
      return eval_node(node.lhs, lookup, options) * eval_node(node.rhs, lookup, options);
    case Kind::Divide: {
      const double num = eval_node(node.lhs, lookup, options);
      const double den = eval_node(node.rhs, lookup, options);
      if (options.zero_over_zero_is_zero && num == 0.0 && den == 0.0) return 0.0;
      return num / den;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double Expression::evaluate(const Lookup& lookup, EvalOptions options) const {
  return eval_node(root_, lookup, options);
}

std::vector<std::string> Expression::identifiers() const {
  std::vector<std::string> names;
  // Nodes are stored in post-order per subtree, so walk the tree explicitly
  // to report first use in reading order.
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.kind == Kind::Identifier &&
        std::find(names.begin(), names.end(), node.name) == names.end()) {
      names.push_back(node.name);
    }
    if (node.rhs >= 0) stack.push_back(node.rhs);
    if (node.lhs >= 0) stack.push_back(node.lhs);
  }
  return names;
}

std::string Expression::print_node(int index, int parent_precedence, bool right_side) const {
  const Node& node = nodes_[static_cast<std::size_t>(index)];
  auto binary = [&](int prec, char op) {
    std::string text = print_node(node.lhs, prec, false) + op + print_node(node.rhs, prec, true);
    const bool wrap = prec < parent_precedence || (right_side && prec == parent_precedence);
    return wrap ? "(" + text + ")" : text;
  };
  switch (node.kind) {
    case Kind::Number: {
      std::string text = format_shortest(node.number);
      return text;
    }
    case Kind::Identifier: return node.name;
    case Kind::Negate: {
      std::string text = "-" + print_node(node.lhs, precedence_of(3), false);
      return parent_precedence > 3 ? "(" + text + ")" : text;
    }
    case Kind::Add: return binary(1, '+');
    case Kind::Subtract: return binary(1, '-');
    case Kind::Multiply: return binary(2, '*');
    case Kind::Divide: return binary(2, '/');
  }
  return {};
}

std::string Expression::to_string() const { return print_node(root_, 0, false); }

double eval_expression(const Expression& expr, const std::map<std::string, double>& item_values,
                       Expression::EvalOptions options) {
  return expr.evaluate(
      [&](std::string_view name) -> std::optional<double> {
        const auto it = item_values.find(std::string(name));
        if (it == item_values.end()) return std::nullopt;
        return it->second;
      },
      options);
}

// --- thresholds ---------------------------------------------------------------

std::string_view compare_op_symbol(CompareOp op) noexcept {
  switch (op) {
    case CompareOp::Greater: return ">";
    case CompareOp::GreaterEqual: return ">=";
    case CompareOp::Less: return "<";
    case CompareOp::LessEqual: return "<=";
    case CompareOp::Equal: return "==";
    case CompareOp::NotEqual: return "!=";
  }
  return "?";
}

ThresholdExpr ThresholdExpr::parse(std::string_view text) {
  Cursor cur(text);
  ThresholdExpr out;
  if (cur.at_end()) bad(text, 0, "empty threshold");
  do {
    Comparison clause;
    auto name = cur.identifier();
    if (!name) bad(text, cur.pos(), "expected insight item name");
    clause.term = std::move(*name);
    // Two-character operators first.
    if (cur.consume(">=")) clause.op = CompareOp::GreaterEqual;
    else if (cur.consume("<=")) clause.op = CompareOp::LessEqual;
    else if (cur.consume("==")) clause.op = CompareOp::Equal;
    else if (cur.consume("!=")) clause.op = CompareOp::NotEqual;
    else if (cur.consume('>')) clause.op = CompareOp::Greater;
    else if (cur.consume('<')) clause.op = CompareOp::Less;
    else bad(text, cur.pos(), "expected comparison operator");
    bool negative = false;
    if (cur.consume('-')) negative = true;
    else cur.consume('+');
    auto value = cur.number();
    if (!value) bad(text, cur.pos(), "expected numeric literal");
    clause.literal = negative ? -*value : *value;
    out.clauses_.push_back(std::move(clause));
  } while (cur.consume('&'));
  if (!cur.at_end()) bad(text, cur.pos(), "unexpected character");
  return out;
}

std::vector<std::string> ThresholdExpr::identifiers() const {
  std::vector<std::string> names;
  for (const auto& c : clauses_) {
    if (std::find(names.begin(), names.end(), c.term) == names.end()) names.push_back(c.term);
  }
  return names;
}

bool ThresholdExpr::evaluate(const Expression::Lookup& lookup) const {
  for (const auto& c : clauses_) {
    const auto value = lookup(c.term);
    if (!value || !std::isfinite(*value)) return false;
    const double v = *value;
    bool pass = false;
    switch (c.op) {
      case CompareOp::Greater: pass = v > c.literal; break;
      case CompareOp::GreaterEqual: pass = v >= c.literal; break;
      case CompareOp::Less: pass = v < c.literal; break;
      case CompareOp::LessEqual: pass = v <= c.literal; break;
      case CompareOp::Equal: pass = v == c.literal; break;
      case CompareOp::NotEqual: pass = v != c.literal; break;
    }
    if (!pass) return false;
  }
  return true;
}

std::string ThresholdExpr::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < clauses_.size(); ++i) {
    if (i > 0) out += " & ";
    out += clauses_[i].term;
    out += compare_op_symbol(clauses_[i].op);
    out += format_shortest(clauses_[i].literal);
  }
  return out;
}

std::string format_shortest(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace crystal
