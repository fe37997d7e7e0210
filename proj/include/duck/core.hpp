#ifndef DUCK_CORE_HPP_
#define DUCK_CORE_HPP_

#include <compare>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace duck {

// Failures that signal a malformed request. Inconsistent knowledge is not an
// error; it travels as a value (an empty ProbInterval or a report).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A conjunction would contain a symbol with both polarities.
class ContradictionError : public Error {
 public:
  using Error::Error;
};

// A statement violates a well-formedness constraint (interval order,
// bidirectional coupling, antecedent/consequent overlap, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Premises do not have the event structure an inference rule needs.
class PremiseShapeError : public Error {
 public:
  using Error::Error;
};

// A numeric side condition of an inference rule does not hold (x1 > 0, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class UnknownSymbolError : public Error {
 public:
  using Error::Error;
};

struct Literal {
  std::string symbol;
  bool negated = false;

  Literal complement() const { return Literal{symbol, !negated}; }
  std::string to_string() const;

  // Order by symbol name first so canonical events sort by name.
  auto operator<=>(const Literal&) const = default;
};

inline Literal pos(std::string symbol) { return Literal{std::move(symbol), false}; }
inline Literal neg(std::string symbol) { return Literal{std::move(symbol), true}; }

// Conjunction of literals over pairwise distinct symbols, kept sorted by
// symbol name. Two ConjEvents compare equal iff they denote the same
// conjunction.
class ConjEvent {
 public:
  // Sorts and deduplicates. Throws ContradictionError when a symbol occurs
  // with both polarities and std::invalid_argument on an empty list.
  static ConjEvent canonicalize(std::vector<Literal> literals);
  static ConjEvent of(Literal literal);

  std::span<const Literal> literals() const { return literals_; }
  std::size_t width() const { return literals_.size(); }

  bool contains(const Literal& literal) const;
  bool has_symbol(std::string_view symbol) const;
  bool shares_symbol(const ConjEvent& other) const;
  // Every literal of `other` is a literal of this event.
  bool includes(const ConjEvent& other) const;
  // Literals of this event that are not in `other`. Throws std::invalid_argument
  // if nothing would remain.
  ConjEvent without(const ConjEvent& other) const;

  // "A & !B"
  std::string to_string() const;

  auto operator<=>(const ConjEvent&) const = default;

 private:
  ConjEvent() = default;
  std::vector<Literal> literals_;
};

// Canonical union of the literal sets. Throws ContradictionError on
// complementary literals.
ConjEvent conjoin(const ConjEvent& e1, const ConjEvent& e2);

// Closed interval of probabilities. lo > hi is the distinguished empty value
// that marks an inconsistency.
struct ProbInterval {
  double lo = 0.0;
  double hi = 1.0;

  static constexpr ProbInterval vacuous() { return {0.0, 1.0}; }
  static constexpr ProbInterval point(double p) { return {p, p}; }

  bool empty() const { return lo > hi; }
  bool valid() const { return 0.0 <= lo && lo <= hi && hi <= 1.0; }
  bool is_point() const { return lo == hi; }
  bool is_vacuous() const { return lo <= 0.0 && hi >= 1.0; }
  bool contains(double p) const { return lo <= p && p <= hi; }
  bool subset_of(const ProbInterval& other) const {
    return other.lo <= lo && hi <= other.hi;
  }
  // Exact shortest round-trip text by default; `significant_digits` > 0
  // rounds for display.
  std::string to_string(int significant_digits = 0) const;

  bool operator==(const ProbInterval&) const = default;
};

// Componentwise intersection; may be empty.
ProbInterval interval_meet(const ProbInterval& p, const ProbInterval& q);

// P(consequent | antecedent) lies in bounds. Antecedent and consequent never
// share a symbol. The bounds may be empty when the rule is a derived
// inconsistency; they are never NaN.
class UncertainRule {
 public:
  UncertainRule(ConjEvent antecedent, ConjEvent consequent, ProbInterval bounds);

  const ConjEvent& antecedent() const { return antecedent_; }
  const ConjEvent& consequent() const { return consequent_; }
  const ProbInterval& bounds() const { return bounds_; }

  UncertainRule with_bounds(ProbInterval bounds) const {
    return UncertainRule(antecedent_, consequent_, bounds);
  }

  // "A & B -> C : [0.2, 0.8]"
  std::string to_string(int significant_digits = 0) const;

  bool operator==(const UncertainRule&) const = default;

 private:
  ConjEvent antecedent_;
  ConjEvent consequent_;
  ProbInterval bounds_;
};

// Paired bounds on P(b|a) (forward) and P(a|b) (backward). Enforces
// forward.hi == 0 <=> backward.hi == 0.
class BidirRule {
 public:
  BidirRule(ConjEvent a, ConjEvent b, ProbInterval forward, ProbInterval backward);

  const ConjEvent& a() const { return a_; }
  const ConjEvent& b() const { return b_; }
  const ProbInterval& forward() const { return forward_; }
  const ProbInterval& backward() const { return backward_; }

  UncertainRule forward_rule() const { return UncertainRule(a_, b_, forward_); }
  UncertainRule backward_rule() const { return UncertainRule(b_, a_, backward_); }

  std::string to_string() const;

  bool operator==(const BidirRule&) const = default;

 private:
  ConjEvent a_;
  ConjEvent b_;
  ProbInterval forward_;
  ProbInterval backward_;
};

// I(a, b, c): c is independent of a given b, i.e. P(c | b a) = P(c | b).
// Asserts P(a b) > 0. The three events are pairwise symbol-disjoint.
class IndepStmt {
 public:
  IndepStmt(ConjEvent a, ConjEvent b, ConjEvent c);

  const ConjEvent& a() const { return a_; }
  const ConjEvent& b() const { return b_; }
  const ConjEvent& c() const { return c_; }

  // "I(A, B & C, D)"
  std::string to_string() const;

  auto operator<=>(const IndepStmt&) const = default;

 private:
  ConjEvent a_;
  ConjEvent b_;
  ConjEvent c_;
};

// Shortest decimal text that parses back to exactly `value`, or `%.<n>g`
// style rounding when significant_digits > 0.
std::string format_probability(double value, int significant_digits = 0);

}  // namespace duck

#endif  // DUCK_CORE_HPP_
