#ifndef DUCK_CALCULUS_HPP_
#define DUCK_CALCULUS_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "duck/core.hpp"

namespace duck {

// Tags for every inference step the calculus and engine know about.
enum class RuleId {
  kI1a,
  kI1b,
  kI1c,
  kI1d,
  kI2,
  kI3,
  kI4,
  kI5,
  kI6a,
  kI6b,
  kI7,
  kI8,
  kI9,
  kI10,
  kI11a,
  kI11b,
  kI12,
  kRC,
  kPRC,
  kRCI1,
  kRCI2,
  kPRCI_A,
  kPRCI_B,
};

inline constexpr RuleId kAllRuleIds[] = {
    RuleId::kI1a,  RuleId::kI1b,  RuleId::kI1c,  RuleId::kI1d,    RuleId::kI2,
    RuleId::kI3,   RuleId::kI4,   RuleId::kI5,   RuleId::kI6a,    RuleId::kI6b,
    RuleId::kI7,   RuleId::kI8,   RuleId::kI9,   RuleId::kI10,    RuleId::kI11a,
    RuleId::kI11b, RuleId::kI12,  RuleId::kRC,   RuleId::kPRC,    RuleId::kRCI1,
    RuleId::kRCI2, RuleId::kPRCI_A, RuleId::kPRCI_B,
};

std::string_view to_string(RuleId id);
// Accepts exact tags ("I1a", "PRC") and family names that expand to their
// variants ("I1" -> I1a..I1d, "I6", "I11", "RCI", "PRCI").
std::vector<RuleId> parse_rule_tag(std::string_view tag);

using Statement = std::variant<UncertainRule, IndepStmt>;

std::string to_string(const Statement& statement);

// Result of one inference step. `premises` are the statements the step
// consumed, in the order the rule lists them; the engine resolves them to
// derivation nodes.
struct Conclusion {
  RuleId rule_id;
  Statement result;
  std::vector<Statement> premises;

  const UncertainRule& rule() const { return std::get<UncertainRule>(result); }
  const IndepStmt& independence() const { return std::get<IndepStmt>(result); }
  bool inconsistent() const {
    return std::holds_alternative<UncertainRule>(result) && rule().bounds().empty();
  }
};

// Interval formulas of the calculus, free of event bookkeeping. Arguments
// are the premise bounds in the order the rule lists them. The engine calls
// these directly on its compact event encoding.
namespace bounds {

// I1a: P(FC|A) in x, P(!F C|A) in y.
ProbInterval chain_split(const ProbInterval& x, const ProbInterval& y);
// I1b: P(BC|A) in x gives P(C|A) >= x.lo.
ProbInterval chain_relax(const ProbInterval& x);
// I3. Throws PreconditionError unless x.lo > 0.
ProbInterval conjunction_left(const ProbInterval& x, const ProbInterval& y);
// I4.
ProbInterval conjunction_right(const ProbInterval& x, const ProbInterval& y);
// I5; v1 is the lower bound on P(A|B). Throws PreconditionError unless v1 > 0.
ProbInterval weak_conjunction_left(double v1, const ProbInterval& y);
// I6a.
ProbInterval weak_conjunction_right(const ProbInterval& x);
// I6b; y must be exactly 0 or 1 (PreconditionError otherwise).
ProbInterval weak_conjunction_right_point(const ProbInterval& x, double y);
// I7.
ProbInterval negate(const ProbInterval& x);
// I8: P(C|A) in x, P(FC|A) in y.
ProbInterval conjunction_right_negation(const ProbInterval& x, const ProbInterval& y);
// I9. Throws PreconditionError unless v1 > 0 and y1 > 0.
ProbInterval weak_conjunction_right_negation(double u2, double v1, double x2, double y1);

// Rule chaining from A<->B (u forward, v backward) and B<->C (x forward,
// y backward) to bounds on P(C|A). Case guards compare exactly.
ProbInterval rule_chaining(const ProbInterval& u, const ProbInterval& v, const ProbInterval& x,
                           const ProbInterval& y);
ProbInterval precise_rule_chaining(const ProbInterval& u, const ProbInterval& v,
                                   const ProbInterval& x, const ProbInterval& y);

struct ChainingPoint {
  double w;                  // P(C|A)
  std::optional<double> z;   // P(B|AC), defined when w > 0
};

// Point chaining through B and !B under I(A,B,C) and I(A,!B,C).
ChainingPoint chaining_under_independence(double u, double x, double y);
// Interval versions: bounds on P(C|A) and on P(B|AC).
ProbInterval independent_chain_forward(const ProbInterval& u, const ProbInterval& x,
                                       const ProbInterval& y);
// Throws PreconditionError when x.lo == 0 and y.lo == 0, or when the
// premises leave a 0/0 term (only possible for inconsistent u).
ProbInterval independent_chain_update(const ProbInterval& u, const ProbInterval& x,
                                      const ProbInterval& y);

}  // namespace bounds

// Typed inference steps. Each checks the event structure of its premises,
// throws PremiseShapeError / PreconditionError on misuse, and returns the
// conclusion. Empty result intervals mean the premises are inconsistent.

// I1a: A -> F&C and A -> !F&C give A -> C. F must be a single literal.
Conclusion chain_split(const UncertainRule& fc, const UncertainRule& not_fc);
// I1b: A -> B&C gives A -> [x1, 1] C, where `kept` is C.
Conclusion chain_relax(const UncertainRule& bc, const ConjEvent& kept);
// I1c: A -> B&C and C -> [1,1] B give A -> C.
Conclusion chain_implied(const UncertainRule& bc, const UncertainRule& c_implies_b);
// I1d: A -> B&C and A -> [1,1] B give A -> C.
Conclusion chain_certain(const UncertainRule& bc, const UncertainRule& a_certain_b);

// I2.
Conclusion sharpen(const UncertainRule& r1, const UncertainRule& r2);
// I3: A -> B and A -> B&C give A&B -> C.
Conclusion conjunction_left(const UncertainRule& b, const UncertainRule& bc);
// I4: A -> B and A&B -> C give A -> B&C.
Conclusion conjunction_right(const UncertainRule& b, const UncertainRule& c);
// I5: A <-> B (backward lower bound > 0) and B -> C give A&B -> C.
Conclusion weak_conjunction_left(const BidirRule& ab, const UncertainRule& c);
// I6a: A -> B gives A -> [0, x2] B&C.
Conclusion weak_conjunction_right(const UncertainRule& b, const ConjEvent& c);
// I6b: A -> B and B -> [y, y] C with y in {0, 1} give A -> B&C.
Conclusion weak_conjunction_right(const UncertainRule& b, const UncertainRule& point_c);
// I7: consequent must be a single literal.
Conclusion negate(const UncertainRule& r);
// I8: A -> C and A -> F&C give A -> !F&C.
Conclusion conjunction_right_negation(const UncertainRule& c, const UncertainRule& fc);
// I9: A <-> F and F <-> C give A -> [0, z2] !F&C.
Conclusion weak_conjunction_right_negation(const BidirRule& af, const BidirRule& fc);
// I10: B -> [0,0] A and A -> B give A -> [0,0] B.
Conclusion annul(const UncertainRule& zero_back, const UncertainRule& r);
// I11a: B -> C and I(A,B,C) give A&B -> C.
Conclusion invariance_extend(const UncertainRule& r, const IndepStmt& ind);
// I11b: A&B -> C and I(A,B,C) give B -> C.
Conclusion invariance_reduce(const UncertainRule& r, const IndepStmt& ind);
// I12: I(A,B,C) and B <-> C with a positive lower bound give I(C,B,A).
Conclusion independence_symmetry(const IndepStmt& ind, const BidirRule& bc);

// Chaining A <-> B <-> C to A -> C.
// rule_chaining needs B to be a single literal; the precise version accepts
// any conjunction.
Conclusion rule_chaining(const BidirRule& ab, const BidirRule& bc);
Conclusion precise_rule_chaining(const BidirRule& ab, const BidirRule& bc);

}  // namespace duck

#endif  // DUCK_CALCULUS_HPP_
