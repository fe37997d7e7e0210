#include "duck/calculus.hpp"

#include <algorithm>
#include <map>

namespace duck {

namespace {

struct TagInfo {
  RuleId id;
  std::string_view name;
};

constexpr TagInfo kTags[] = {
    {RuleId::kI1a, "I1a"},   {RuleId::kI1b, "I1b"},     {RuleId::kI1c, "I1c"},
    {RuleId::kI1d, "I1d"},   {RuleId::kI2, "I2"},       {RuleId::kI3, "I3"},
    {RuleId::kI4, "I4"},     {RuleId::kI5, "I5"},       {RuleId::kI6a, "I6a"},
    {RuleId::kI6b, "I6b"},   {RuleId::kI7, "I7"},       {RuleId::kI8, "I8"},
    {RuleId::kI9, "I9"},     {RuleId::kI10, "I10"},     {RuleId::kI11a, "I11a"},
    {RuleId::kI11b, "I11b"}, {RuleId::kI12, "I12"},     {RuleId::kRC, "RC"},
    {RuleId::kPRC, "PRC"},   {RuleId::kRCI1, "RCI1"},   {RuleId::kRCI2, "RCI2"},
    {RuleId::kPRCI_A, "PRCI_A"}, {RuleId::kPRCI_B, "PRCI_B"},
};

[[noreturn]] void shape_error(const std::string& rule, const std::string& detail) {
  throw PremiseShapeError(rule + ": " + detail);
}

bool is_certain(const ProbInterval& p) { return p.lo == 1.0 && p.hi == 1.0; }

}  // namespace

std::string_view to_string(RuleId id) {
  for (const auto& tag : kTags) {
    if (tag.id == id) return tag.name;
  }
  return "?";
}

std::vector<RuleId> parse_rule_tag(std::string_view tag) {
  static const std::map<std::string_view, std::vector<RuleId>> kFamilies = {
      {"I1", {RuleId::kI1a, RuleId::kI1b, RuleId::kI1c, RuleId::kI1d}},
      {"I6", {RuleId::kI6a, RuleId::kI6b}},
      {"I11", {RuleId::kI11a, RuleId::kI11b}},
      {"RCI", {RuleId::kRCI1, RuleId::kRCI2}},
      {"PRCI", {RuleId::kPRCI_A, RuleId::kPRCI_B}},
  };
  if (auto it = kFamilies.find(tag); it != kFamilies.end()) return it->second;
  for (const auto& info : kTags) {
    if (info.name == tag) return {info.id};
  }
  throw std::invalid_argument("unknown rule tag '" + std::string(tag) + "'");
}

std::string to_string(const Statement& statement) {
  if (const auto* rule = std::get_if<UncertainRule>(&statement)) return rule->to_string();
  return std::get<IndepStmt>(statement).to_string();
}

namespace bounds {

ProbInterval chain_split(const ProbInterval& x, const ProbInterval& y) {
  return {x.lo + y.lo, std::min(1.0, x.hi + y.hi)};
}

ProbInterval chain_relax(const ProbInterval& x) { return {x.lo, 1.0}; }

ProbInterval conjunction_left(const ProbInterval& x, const ProbInterval& y) {
  if (!(x.lo > 0.0)) throw PreconditionError("I3 needs a positive lower bound on P(B|A)");
  return {y.lo / x.hi, std::min(1.0, y.hi / x.lo)};
}

ProbInterval conjunction_right(const ProbInterval& x, const ProbInterval& y) {
  return {x.lo * y.lo, x.hi * y.hi};
}

ProbInterval weak_conjunction_left(double v1, const ProbInterval& y) {
  if (!(v1 > 0.0)) throw PreconditionError("I5 needs a positive lower bound on P(A|B)");
  return {std::max(0.0, (v1 + y.lo - 1.0) / v1), std::min(1.0, y.hi / v1)};
}

ProbInterval weak_conjunction_right(const ProbInterval& x) { return {0.0, x.hi}; }

ProbInterval weak_conjunction_right_point(const ProbInterval& x, double y) {
  if (y == 0.0) return {0.0, 0.0};
  if (y == 1.0) return x;
  throw PreconditionError("I6b needs P(C|B) to be exactly 0 or 1");
}

ProbInterval negate(const ProbInterval& x) { return {1.0 - x.hi, 1.0 - x.lo}; }

ProbInterval conjunction_right_negation(const ProbInterval& x, const ProbInterval& y) {
  return {std::max(0.0, x.lo - y.hi), x.hi - y.lo};
}

ProbInterval weak_conjunction_right_negation(double u2, double v1, double x2, double y1) {
  if (!(v1 > 0.0) || !(y1 > 0.0)) {
    throw PreconditionError("I9 needs positive lower bounds on P(A|F) and P(F|C)");
  }
  return {0.0, std::min(1.0, (1.0 - y1) * (u2 * x2) / (v1 * y1))};
}

ProbInterval rule_chaining(const ProbInterval& u, const ProbInterval& v, const ProbInterval& x,
                           const ProbInterval& y) {
  const double u1 = u.lo, u2 = u.hi, v1 = v.lo, x1 = x.lo, x2 = x.hi, y1 = y.lo;
  double z1 = 0.0;
  if (v1 > 0.0) {
    z1 = (u1 / v1) * std::max(0.0, v1 + x1 - 1.0);
  } else if (x1 == 1.0) {
    z1 = u1;
  }
  double z2 = 1.0;
  if (v1 > 0.0 && y1 > 0.0) {
    const double tau = u2 * x2 / (v1 * y1);
    z2 = std::min({1.0, u2 + tau * (1.0 - y1), 1.0 - u1 + tau * y1, tau});
  } else if (v1 > 0.0) {
    z2 = std::min(1.0, 1.0 - u1 + u2 * x2 / v1);
  } else if (x2 == 0.0) {
    z2 = 1.0 - u1;
  }
  return {z1, z2};
}

ProbInterval precise_rule_chaining(const ProbInterval& u, const ProbInterval& v,
                                   const ProbInterval& x, const ProbInterval& y) {
  const double u1 = u.lo, u2 = u.hi, v1 = v.lo, x1 = x.lo, x2 = x.hi, y1 = y.lo;
  double z1 = 0.0;
  if (v1 > 0.0) {
    z1 = std::max(0.0, u1 * (1.0 - (1.0 / v1) * (1.0 - x1)));
  } else if (x1 == 1.0) {
    z1 = u1;
  }
  double z2 = 1.0;
  if (v1 > 0.0 && y1 > 0.0) {
    z2 = std::min({1.0, u2 * x2 / (v1 * y1), u2 * (1.0 - x2 / v1 * (1.0 - 1.0 / y1)),
                   1.0 - u1 * (1.0 - x2 / v1), x2 / (y1 * (v1 - x2) + x2)});
  } else if (v1 > 0.0) {
    z2 = std::min(1.0, 1.0 - u1 * (1.0 - x2 / v1));
  } else if (x2 == 0.0) {
    z2 = 1.0 - u1;
  } else if (y1 == 1.0) {
    z2 = u2;
  }
  return {z1, z2};
}

ChainingPoint chaining_under_independence(double u, double x, double y) {
  const double w = u * x + (1.0 - u) * y;
  ChainingPoint result{w, std::nullopt};
  if (w > 0.0) result.z = u * x / w;
  return result;
}

ProbInterval independent_chain_forward(const ProbInterval& u, const ProbInterval& x,
                                       const ProbInterval& y) {
  const double z1 = x.lo > y.lo ? u.lo * x.lo + (1.0 - u.lo) * y.lo
                                : u.hi * x.lo + (1.0 - u.hi) * y.lo;
  const double z2 = x.hi > y.hi ? u.hi * x.hi + (1.0 - u.hi) * y.hi
                                : u.lo * x.hi + (1.0 - u.lo) * y.hi;
  return {z1, z2};
}

ProbInterval independent_chain_update(const ProbInterval& u, const ProbInterval& x,
                                      const ProbInterval& y) {
  if (!(x.lo > 0.0) && !(y.lo > 0.0)) {
    throw PreconditionError("updating needs P(C|B) > 0 or P(C|!B) > 0");
  }
  double z1 = 1.0;
  if (!(u.lo == 0.0 && y.hi == 0.0)) {
    const double den = u.lo * x.lo + (1.0 - u.lo) * y.hi;
    if (!(den > 0.0)) throw PreconditionError("P(B|A) bounds leave 0/0 in the lower bound");
    z1 = u.lo * x.lo / den;
  }
  double z2 = 0.0;
  if (!(u.hi == 1.0 && x.hi == 0.0)) {
    const double den = u.hi * x.hi + (1.0 - u.hi) * y.lo;
    if (!(den > 0.0)) throw PreconditionError("P(B|A) bounds leave 0/0 in the upper bound");
    z2 = u.hi * x.hi / den;
  }
  return {z1, z2};
}

}  // namespace bounds

Conclusion chain_split(const UncertainRule& fc, const UncertainRule& not_fc) {
  if (fc.antecedent() != not_fc.antecedent()) shape_error("I1a", "antecedents differ");
  const auto& left = fc.consequent();
  const auto& right = not_fc.consequent();
  if (left.width() != right.width() || left.width() < 2) {
    shape_error("I1a", "consequents must be F & C and !F & C with C nonempty");
  }
  std::vector<Literal> only_left;
  for (const auto& literal : left.literals()) {
    if (!right.contains(literal)) only_left.push_back(literal);
  }
  if (only_left.size() != 1 || !right.contains(only_left.front().complement())) {
    shape_error("I1a", "consequents must differ in the polarity of exactly one literal");
  }
  ConjEvent rest = left.without(ConjEvent::of(only_left.front()));
  return {RuleId::kI1a,
          UncertainRule(fc.antecedent(), rest, bounds::chain_split(fc.bounds(), not_fc.bounds())),
          {fc, not_fc}};
}

Conclusion chain_relax(const UncertainRule& bc, const ConjEvent& kept) {
  if (!bc.consequent().includes(kept) || kept.width() >= bc.consequent().width()) {
    shape_error("I1b", kept.to_string() + " is not a proper part of " +
                           bc.consequent().to_string());
  }
  return {RuleId::kI1b, UncertainRule(bc.antecedent(), kept, bounds::chain_relax(bc.bounds())),
          {bc}};
}

Conclusion chain_implied(const UncertainRule& bc, const UncertainRule& c_implies_b) {
  const ConjEvent& c = c_implies_b.antecedent();
  const ConjEvent& b = c_implies_b.consequent();
  if (!bc.consequent().includes(c) || !bc.consequent().includes(b) ||
      b.width() + c.width() != bc.consequent().width()) {
    shape_error("I1c", "second premise must split " + bc.consequent().to_string());
  }
  if (!is_certain(c_implies_b.bounds())) {
    throw PreconditionError("I1c needs C -> [1, 1] B");
  }
  return {RuleId::kI1c, UncertainRule(bc.antecedent(), c, bc.bounds()), {bc, c_implies_b}};
}

Conclusion chain_certain(const UncertainRule& bc, const UncertainRule& a_certain_b) {
  if (bc.antecedent() != a_certain_b.antecedent()) shape_error("I1d", "antecedents differ");
  const ConjEvent& b = a_certain_b.consequent();
  if (!bc.consequent().includes(b) || b.width() >= bc.consequent().width()) {
    shape_error("I1d", b.to_string() + " is not a proper part of " + bc.consequent().to_string());
  }
  if (!is_certain(a_certain_b.bounds())) throw PreconditionError("I1d needs A -> [1, 1] B");
  return {RuleId::kI1d,
          UncertainRule(bc.antecedent(), bc.consequent().without(b), bc.bounds()),
          {bc, a_certain_b}};
}

Conclusion sharpen(const UncertainRule& r1, const UncertainRule& r2) {
  if (r1.antecedent() != r2.antecedent() || r1.consequent() != r2.consequent()) {
    shape_error("I2", "rules bound different conditionals");
  }
  return {RuleId::kI2, r1.with_bounds(interval_meet(r1.bounds(), r2.bounds())), {r1, r2}};
}

Conclusion conjunction_left(const UncertainRule& b, const UncertainRule& bc) {
  if (b.antecedent() != bc.antecedent()) shape_error("I3", "antecedents differ");
  if (!bc.consequent().includes(b.consequent()) ||
      b.consequent().width() >= bc.consequent().width()) {
    shape_error("I3", "second consequent must extend " + b.consequent().to_string());
  }
  const ConjEvent c = bc.consequent().without(b.consequent());
  return {RuleId::kI3,
          UncertainRule(conjoin(b.antecedent(), b.consequent()), c,
                        bounds::conjunction_left(b.bounds(), bc.bounds())),
          {b, bc}};
}

Conclusion conjunction_right(const UncertainRule& b, const UncertainRule& c) {
  if (c.antecedent() != conjoin(b.antecedent(), b.consequent())) {
    shape_error("I4", "second antecedent must be " +
                          conjoin(b.antecedent(), b.consequent()).to_string());
  }
  return {RuleId::kI4,
          UncertainRule(b.antecedent(), conjoin(b.consequent(), c.consequent()),
                        bounds::conjunction_right(b.bounds(), c.bounds())),
          {b, c}};
}

Conclusion weak_conjunction_left(const BidirRule& ab, const UncertainRule& c) {
  if (c.antecedent() != ab.b()) shape_error("I5", "second antecedent must be " + ab.b().to_string());
  if (c.consequent().shares_symbol(ab.a())) shape_error("I5", "C must be disjoint from A");
  return {RuleId::kI5,
          UncertainRule(conjoin(ab.a(), ab.b()), c.consequent(),
                        bounds::weak_conjunction_left(ab.backward().lo, c.bounds())),
          {ab.forward_rule(), ab.backward_rule(), c}};
}

Conclusion weak_conjunction_right(const UncertainRule& b, const ConjEvent& c) {
  if (c == b.antecedent()) throw PreconditionError("I6a needs A != C");
  if (c.shares_symbol(b.antecedent()) || c.shares_symbol(b.consequent())) {
    shape_error("I6a", c.to_string() + " must be disjoint from the premise events");
  }
  return {RuleId::kI6a,
          UncertainRule(b.antecedent(), conjoin(b.consequent(), c),
                        bounds::weak_conjunction_right(b.bounds())),
          {b}};
}

Conclusion weak_conjunction_right(const UncertainRule& b, const UncertainRule& point_c) {
  if (point_c.antecedent() != b.consequent()) {
    shape_error("I6b", "second antecedent must be " + b.consequent().to_string());
  }
  const ConjEvent& c = point_c.consequent();
  if (c == b.antecedent()) throw PreconditionError("I6b needs A != C");
  if (c.shares_symbol(b.antecedent())) shape_error("I6b", "C must be disjoint from A");
  if (!point_c.bounds().is_point()) throw PreconditionError("I6b needs a point rule B -> C");
  return {RuleId::kI6b,
          UncertainRule(b.antecedent(), conjoin(b.consequent(), c),
                        bounds::weak_conjunction_right_point(b.bounds(), point_c.bounds().lo)),
          {b, point_c}};
}

Conclusion negate(const UncertainRule& r) {
  if (r.consequent().width() != 1) shape_error("I7", "consequent must be a single literal");
  return {RuleId::kI7,
          UncertainRule(r.antecedent(), ConjEvent::of(r.consequent().literals()[0].complement()),
                        bounds::negate(r.bounds())),
          {r}};
}

Conclusion conjunction_right_negation(const UncertainRule& c, const UncertainRule& fc) {
  if (c.antecedent() != fc.antecedent()) shape_error("I8", "antecedents differ");
  if (!fc.consequent().includes(c.consequent()) ||
      fc.consequent().width() != c.consequent().width() + 1) {
    shape_error("I8", "second consequent must be F & " + c.consequent().to_string());
  }
  const ConjEvent f = fc.consequent().without(c.consequent());
  return {RuleId::kI8,
          UncertainRule(c.antecedent(),
                        conjoin(ConjEvent::of(f.literals()[0].complement()), c.consequent()),
                        bounds::conjunction_right_negation(c.bounds(), fc.bounds())),
          {c, fc}};
}

Conclusion weak_conjunction_right_negation(const BidirRule& af, const BidirRule& fc) {
  if (af.b() != fc.a() || af.b().width() != 1) {
    shape_error("I9", "rules must share a single middle literal F");
  }
  const ConjEvent& a = af.a();
  const ConjEvent& c = fc.b();
  if (a == c) throw PreconditionError("I9 needs A != C");
  if (a.shares_symbol(c)) shape_error("I9", "A and C must be disjoint");
  const ProbInterval z = bounds::weak_conjunction_right_negation(
      af.forward().hi, af.backward().lo, fc.forward().hi, fc.backward().lo);
  return {RuleId::kI9,
          UncertainRule(a, conjoin(ConjEvent::of(af.b().literals()[0].complement()), c), z),
          {af.forward_rule(), af.backward_rule(), fc.forward_rule(), fc.backward_rule()}};
}

Conclusion annul(const UncertainRule& zero_back, const UncertainRule& r) {
  if (zero_back.antecedent() != r.consequent() || zero_back.consequent() != r.antecedent()) {
    shape_error("I10", "first premise must be the reverse of " + r.to_string());
  }
  if (zero_back.bounds().hi != 0.0) throw PreconditionError("I10 needs B -> [0, 0] A");
  return {RuleId::kI10, r.with_bounds(ProbInterval::point(0.0)), {zero_back, r}};
}

Conclusion invariance_extend(const UncertainRule& r, const IndepStmt& ind) {
  if (r.antecedent() != ind.b() || r.consequent() != ind.c()) {
    shape_error("I11a", r.to_string() + " does not match " + ind.to_string());
  }
  return {RuleId::kI11a, UncertainRule(conjoin(ind.a(), ind.b()), ind.c(), r.bounds()), {r, ind}};
}

Conclusion invariance_reduce(const UncertainRule& r, const IndepStmt& ind) {
  if (r.antecedent() != conjoin(ind.a(), ind.b()) || r.consequent() != ind.c()) {
    shape_error("I11b", r.to_string() + " does not match " + ind.to_string());
  }
  return {RuleId::kI11b, UncertainRule(ind.b(), ind.c(), r.bounds()), {r, ind}};
}

Conclusion independence_symmetry(const IndepStmt& ind, const BidirRule& bc) {
  if (bc.a() != ind.b() || bc.b() != ind.c()) {
    shape_error("I12", bc.to_string() + " does not link the events of " + ind.to_string());
  }
  if (!(bc.forward().lo > 0.0) && !(bc.backward().lo > 0.0)) {
    throw PreconditionError("I12 needs a positive lower bound between B and C");
  }
  return {RuleId::kI12, IndepStmt(ind.c(), ind.b(), ind.a()),
          {ind, bc.forward_rule(), bc.backward_rule()}};
}

namespace {

Conclusion chaining(RuleId id, const BidirRule& ab, const BidirRule& bc) {
  const std::string tag(to_string(id));
  if (ab.b() != bc.a()) shape_error(tag, "rules must share the middle event");
  if (id == RuleId::kRC && ab.b().width() != 1) {
    shape_error(tag, "middle event must be a single literal");
  }
  if (ab.a().shares_symbol(bc.b())) shape_error(tag, "A and C must be disjoint");
  const ProbInterval z =
      id == RuleId::kRC
          ? bounds::rule_chaining(ab.forward(), ab.backward(), bc.forward(), bc.backward())
          : bounds::precise_rule_chaining(ab.forward(), ab.backward(), bc.forward(),
                                          bc.backward());
  return {id, UncertainRule(ab.a(), bc.b(), z),
          {ab.forward_rule(), ab.backward_rule(), bc.forward_rule(), bc.backward_rule()}};
}

}  // namespace

Conclusion rule_chaining(const BidirRule& ab, const BidirRule& bc) {
  return chaining(RuleId::kRC, ab, bc);
}

Conclusion precise_rule_chaining(const BidirRule& ab, const BidirRule& bc) {
  return chaining(RuleId::kPRC, ab, bc);
}

}  // namespace duck
