#include <chrono>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "duck/calculus.hpp"
#include "duck/engine.hpp"
#include "duck/kbformat.hpp"
#include "duck/oracle.hpp"
#include "support.hpp"

using namespace duck;
using duck::testing::ev;

namespace {

ProbInterval random_interval(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double a = unit(rng), b = unit(rng);
  if (unit(rng) < 0.15) a = 0.0;
  if (unit(rng) < 0.15) b = 1.0;
  return {std::min(a, b), std::max(a, b)};
}

// Grows p on each side by a random amount, staying inside [0, 1].
ProbInterval enlarge(const ProbInterval& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return {p.lo * unit(rng), p.hi + (1.0 - p.hi) * unit(rng)};
}

ProbInterval clamp01(ProbInterval p) {
  p.lo = std::clamp(p.lo, 0.0, 1.0);
  p.hi = std::clamp(p.hi, 0.0, 1.0);
  return p;
}

const UncertainRule& rule_of(const NodePtr& n) { return std::get<UncertainRule>(n->statement); }

// Missing directions stand in as [0, 1], or [0, 0] when the other direction
// has a zero upper bound.
BidirRule pair_of(const NodePtr& fwd, const NodePtr& bwd) {
  const UncertainRule& f = rule_of(fwd);
  const UncertainRule& b = rule_of(bwd);
  return BidirRule(f.antecedent(), f.consequent(), f.bounds(), b.bounds());
}

// Recomputes a derived node from its premises through the typed calculus
// API, independent of the engine's bitmask formulas. Returns nothing for
// nodes this replay does not cover.
std::optional<ProbInterval> replay(const DerivationNode& node) {
  const auto& p = node.premises;
  const UncertainRule& out = std::get<UncertainRule>(node.statement);
  switch (*node.rule) {
    case RuleId::kI1a:
      return chain_split(rule_of(p[0]), rule_of(p[1])).rule().bounds();
    case RuleId::kI1b:
      return chain_relax(rule_of(p[0]), out.consequent()).rule().bounds();
    case RuleId::kI1c:
      return chain_implied(rule_of(p[0]), rule_of(p[1])).rule().bounds();
    case RuleId::kI1d:
      return chain_certain(rule_of(p[0]), rule_of(p[1])).rule().bounds();
    case RuleId::kI3:
      return conjunction_left(rule_of(p[0]), rule_of(p[1])).rule().bounds();
    case RuleId::kI4:
      return conjunction_right(rule_of(p[0]), rule_of(p[1])).rule().bounds();
    case RuleId::kI5: {
      // Backward rule B -> A, then B -> C.
      const UncertainRule& back = rule_of(p[0]);
      const UncertainRule& c = rule_of(p[1]);
      ProbInterval fwd = back.bounds().hi == 0.0 ? ProbInterval{0, 0} : ProbInterval::vacuous();
      return weak_conjunction_left(
                 BidirRule(back.consequent(), back.antecedent(), fwd, back.bounds()), c)
          .rule()
          .bounds();
    }
    case RuleId::kI6a: {
      const UncertainRule& b = rule_of(p[0]);
      return weak_conjunction_right(b, out.consequent().without(b.consequent())).rule().bounds();
    }
    case RuleId::kI6b:
      return weak_conjunction_right(rule_of(p[0]), rule_of(p[1])).rule().bounds();
    case RuleId::kI7:
      return negate(rule_of(p[0])).rule().bounds();
    case RuleId::kI8:
      return conjunction_right_negation(rule_of(p[0]), rule_of(p[1])).rule().bounds();
    case RuleId::kI9:
      return weak_conjunction_right_negation(pair_of(p[0], p[1]), pair_of(p[2], p[3]))
          .rule()
          .bounds();
    case RuleId::kI10:
      return annul(rule_of(p[0]), rule_of(p[1])).rule().bounds();
    case RuleId::kI11a:
      return invariance_extend(rule_of(p[0]), std::get<IndepStmt>(p[1]->statement)).rule().bounds();
    case RuleId::kI11b:
      return invariance_reduce(rule_of(p[0]), std::get<IndepStmt>(p[1]->statement)).rule().bounds();
    case RuleId::kRC:
      return rule_chaining(pair_of(p[0], p[1]), pair_of(p[2], p[3])).rule().bounds();
    case RuleId::kPRC:
      return precise_rule_chaining(pair_of(p[0], p[1]), pair_of(p[2], p[3])).rule().bounds();
    case RuleId::kRCI1:
    case RuleId::kRCI2:
    case RuleId::kPRCI_A:
    case RuleId::kPRCI_B: {
      const IndepStmt& ind = std::get<IndepStmt>(p[p.size() - 2]->statement);
      const ConjEvent& b = ind.b();
      const ConjEvent not_b = ConjEvent::of(b.literals()[0].complement());
      ProbInterval u = ProbInterval::vacuous(), x, y;
      for (std::size_t i = 0; i + 2 < p.size(); ++i) {
        const UncertainRule& r = rule_of(p[i]);
        if (r.antecedent() == ind.a() && r.consequent() == b) u = interval_meet(u, r.bounds());
        if (r.antecedent() == ind.a() && r.consequent() == not_b) {
          u = interval_meet(u, bounds::negate(r.bounds()));
        }
        if (r.antecedent() == b) x = r.bounds();
        if (r.antecedent() == not_b) y = r.bounds();
      }
      const bool forward = *node.rule == RuleId::kRCI1 || *node.rule == RuleId::kPRCI_A;
      return forward ? bounds::independent_chain_forward(u, x, y)
                     : bounds::independent_chain_update(u, x, y);
    }
    default:
      return std::nullopt;
  }
}

struct ReplayStats {
  int checked = 0;
  int sharpened = 0;
  int axioms = 0;
  std::set<RuleId> rules;
};

void check_derivations(const KnowledgeBase& original, const KnowledgeBase& saturated,
                       ReplayStats& stats) {
  std::set<const DerivationNode*> seen;
  std::function<void(const NodePtr&)> walk = [&](const NodePtr& node) {
    if (!node || !seen.insert(node.get()).second) return;
    for (const auto& premise : node->premises) walk(premise);
    switch (node->kind) {
      case DerivationNode::Kind::kAxiom: {
        ++stats.axioms;
        CHECK(node->premises.empty());
        if (const auto* r = std::get_if<UncertainRule>(&node->statement)) {
          // Leaves are stated rules: their bounds contain the stored interval.
          auto stored = original.find(r->antecedent(), r->consequent());
          REQUIRE(stored.has_value());
          CHECK(stored->subset_of(r->bounds()));
        } else {
          CHECK(original.independences().contains(std::get<IndepStmt>(node->statement)));
        }
        break;
      }
      case DerivationNode::Kind::kAssumed:
        CHECK(node->premises.empty());
        break;
      case DerivationNode::Kind::kSharpened: {
        ++stats.sharpened;
        REQUIRE(node->premises.size() == 2);
        const auto& b = std::get<UncertainRule>(node->statement).bounds();
        CHECK(b.lo == rule_of(node->premises[0]).bounds().lo);
        CHECK(b.hi == rule_of(node->premises[1]).bounds().hi);
        break;
      }
      case DerivationNode::Kind::kDerived: {
        REQUIRE(node->rule.has_value());
        stats.rules.insert(*node->rule);
        if (*node->rule == RuleId::kI12) {
          const IndepStmt& in = std::get<IndepStmt>(node->premises[0]->statement);
          CHECK(std::get<IndepStmt>(node->statement) == IndepStmt(in.c(), in.b(), in.a()));
          break;
        }
        std::optional<ProbInterval> expected = replay(*node);
        if (!expected) break;
        const ProbInterval got = std::get<UncertainRule>(node->statement).bounds();
        const ProbInterval want = clamp01(*expected);
        CAPTURE(node->label());
        CAPTURE(to_string(node->statement));
        CAPTURE(want.to_string());
        if (want.lo <= want.hi) {
          CHECK(std::abs(got.lo - want.lo) <= 1e-12);
          CHECK(std::abs(got.hi - want.hi) <= 1e-12);
        } else {
          CHECK(want.lo - want.hi <= 1e-9);  // noise collapsed to a point
        }
        ++stats.checked;
        break;
      }
    }
  };
  for (const auto& [key, entry] : saturated.rules()) walk(entry.node);
  for (const auto& [stmt, node] : saturated.independences()) walk(node);
}

KnowledgeBase load(const std::string& text) {
  ParseResult r = parse_kb(text);
  REQUIRE(r.ok());
  return build_knowledge_base(r.document).kb;
}

std::string read_file(const std::string& relative) {
  std::ifstream in(std::string(DUCK_SOURCE_DIR) + "/" + relative);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Smallest and largest P(b | a) over the grid of atom masses in steps of
// 1 / steps that satisfies every rule of a KB without independences.
struct GridRange {
  double lo = 1e300;
  double hi = -1e300;
  long feasible = 0;
};

GridRange grid_range(const std::vector<std::string>& symbols, const KnowledgeBase& kb,
                     const ConjEvent& a, const ConjEvent& b, int steps) {
  const std::size_t atoms = std::size_t{1} << symbols.size();
  // Each rule row: P(ant cons) - lo P(ant) >= 0 and hi P(ant) - P(ant cons) >= 0.
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> positive;  // P(ant) > 0
  auto indicator = [&](const ConjEvent& e) {
    std::vector<double> v(atoms, 1.0);
    for (const Literal& l : e.literals()) {
      const auto bit = std::find(symbols.begin(), symbols.end(), l.symbol) - symbols.begin();
      for (std::size_t atom = 0; atom < atoms; ++atom) {
        if (((atom >> bit) & 1) == (l.negated ? 1u : 0u)) v[atom] = 0.0;
      }
    }
    return v;
  };
  for (const auto& [key, entry] : kb.rules()) {
    const auto ant = indicator(key.antecedent);
    const auto both = indicator(conjoin(key.antecedent, key.consequent));
    std::vector<double> lo(atoms), hi(atoms);
    for (std::size_t i = 0; i < atoms; ++i) {
      lo[i] = both[i] - entry.bounds.lo * ant[i];
      hi[i] = entry.bounds.hi * ant[i] - both[i];
    }
    rows.push_back(lo);
    rows.push_back(hi);
    positive.push_back(ant);
  }
  rows.push_back(indicator(conjoin(a, b)));  // numerator, row n - 2
  rows.push_back(indicator(a));              // denominator, row n - 1
  for (auto& p : positive) rows.push_back(p);
  const std::size_t n_rows = rows.size();
  const std::size_t n_rules = 2 * kb.rules().size();

  GridRange out;
  std::vector<std::vector<double>> partial(atoms + 1, std::vector<double>(n_rows, 0.0));
  std::vector<double> leaf_acc(n_rows);
  // Value of the query at a complete grid point, or nothing if infeasible.
  auto leaf = [&](const std::vector<double>& base, std::size_t atom, int k, int left)
      -> std::optional<double> {
    for (std::size_t r = 0; r < n_rows; ++r) {
      leaf_acc[r] = base[r] + rows[r][atom] * k + rows[r][atom + 1] * (left - k);
    }
    for (std::size_t r = 0; r < n_rules; ++r) {
      if (leaf_acc[r] < -1e-9) return std::nullopt;
    }
    for (std::size_t r = n_rules + 1; r < n_rows; ++r) {
      if (leaf_acc[r] <= 0.0) return std::nullopt;
    }
    return leaf_acc[n_rules] / leaf_acc[n_rules + 1];
  };
  std::function<void(std::size_t, int)> recurse = [&](std::size_t atom, int left) {
    if (atom + 2 == atoms) {
      // Every row is linear in the split k of the last two atoms, so the
      // feasible k form a range and the ratio is monotone along it. Bound the
      // range from the rows, then confirm its ends with the exact test.
      const auto& base = partial[atom];
      double k_lo = 0.0, k_hi = left;
      for (std::size_t r = 0; r < n_rows; ++r) {
        if (r == n_rules) continue;
        const double c = base[r] + rows[r][atom + 1] * left;
        const double d = rows[r][atom] - rows[r][atom + 1];
        if (d > 0) k_lo = std::max(k_lo, std::floor(-c / d) - 1);
        if (d < 0) k_hi = std::min(k_hi, std::ceil(-c / d) + 1);
      }
      int first = static_cast<int>(std::max(0.0, k_lo));
      int last = static_cast<int>(std::min<double>(left, k_hi));
      std::optional<double> v_first, v_last;
      for (; first <= last && !(v_first = leaf(base, atom, first, left)); ++first) {
      }
      for (; last >= first && !(v_last = leaf(base, atom, last, left)); --last) {
      }
      if (first > last) return;
      out.lo = std::min({out.lo, *v_first, *v_last});
      out.hi = std::max({out.hi, *v_first, *v_last});
      out.feasible += last - first + 1;
      return;
    }
    for (int k = 0; k <= left; ++k) {
      auto& acc = partial[atom + 1];
      for (std::size_t r = 0; r < n_rows; ++r) acc[r] = partial[atom][r] + rows[r][atom] * k;
      recurse(atom + 1, left - k);
    }
  };
  recurse(0, steps);
  return out;
}

}  // namespace

TEST_CASE("interval meet is a semilattice with [0, 1] as identity") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 2000; ++i) {
    const ProbInterval p = random_interval(rng), q = random_interval(rng), r = random_interval(rng);
    CHECK(interval_meet(p, p) == p);
    CHECK(interval_meet(p, q) == interval_meet(q, p));
    CHECK(interval_meet(interval_meet(p, q), r) == interval_meet(p, interval_meet(q, r)));
    CHECK(interval_meet(p, ProbInterval::vacuous()) == p);
    const ProbInterval m = interval_meet(p, q);
    if (!m.empty()) {
      CHECK(m.subset_of(p));
      CHECK(m.subset_of(q));
    }
  }
}

TEST_CASE("canonical events") {
  std::mt19937_64 rng(22);
  auto random_event = [&](std::vector<std::string> pool) {
    std::vector<Literal> lits;
    for (const auto& n : pool) {
      if (rng() % 2 == 0) lits.push_back(Literal{n, rng() % 2 == 0});
    }
    if (lits.empty()) lits.push_back(Literal{pool.front(), false});
    return ConjEvent::canonicalize(lits);
  };
  for (int i = 0; i < 500; ++i) {
    const ConjEvent e = random_event({"D", "A", "F"});
    const ConjEvent f = random_event({"B", "E"});
    const ConjEvent g = random_event({"G", "C", "H"});
    std::vector<Literal> lits(e.literals().begin(), e.literals().end());
    std::shuffle(lits.begin(), lits.end(), rng);
    lits.push_back(lits.front());
    CHECK(ConjEvent::canonicalize(lits) == e);
    CHECK(std::is_sorted(e.literals().begin(), e.literals().end()));
    CHECK(conjoin(e, f) == conjoin(f, e));
    CHECK(conjoin(conjoin(e, f), g) == conjoin(e, conjoin(f, g)));
    CHECK(conjoin(e, e) == e);
  }
}

TEST_CASE("negation is an involution and sharpening is the meet") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 1000; ++i) {
    const ProbInterval p = random_interval(rng), q = random_interval(rng);
    const ProbInterval back = bounds::negate(bounds::negate(p));
    CHECK(std::abs(back.lo - p.lo) <= 1e-15);
    CHECK(std::abs(back.hi - p.hi) <= 1e-15);
    const UncertainRule r1(ev("A"), ev("B"), p), r2(ev("A"), ev("B"), q);
    CHECK(sharpen(r1, r2).rule().bounds() == interval_meet(p, q));
  }
}

TEST_CASE("point chaining under independence stays between its inputs") {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double u = unit(rng), x = unit(rng), y = unit(rng);
    const double w = bounds::chaining_under_independence(u, x, y).w;
    CHECK(w >= std::min(x, y) - 1e-15);
    CHECK(w <= std::max(x, y) + 1e-15);
  }
}

TEST_CASE("precise chaining is monotone in its inputs") {
  std::mt19937_64 rng(25);
  int checked = 0;
  for (int i = 0; i < 3000; ++i) {
    const ProbInterval u = random_interval(rng), v = random_interval(rng),
                       x = random_interval(rng), y = random_interval(rng);
    if ((u.hi == 0.0) != (v.hi == 0.0) || (x.hi == 0.0) != (y.hi == 0.0)) continue;
    ProbInterval u2 = u, v2 = v, x2 = x, y2 = y;
    switch (rng() % 4) {
      case 0: u2 = enlarge(u, rng); break;
      case 1: v2 = enlarge(v, rng); break;
      case 2: x2 = enlarge(x, rng); break;
      default: y2 = enlarge(y, rng); break;
    }
    if ((u2.hi == 0.0) != (v2.hi == 0.0) || (x2.hi == 0.0) != (y2.hi == 0.0)) continue;
    const ProbInterval narrow = bounds::precise_rule_chaining(u, v, x, y);
    const ProbInterval wide = bounds::precise_rule_chaining(u2, v2, x2, y2);
    CAPTURE(u.to_string() + v.to_string() + x.to_string() + y.to_string());
    CAPTURE(u2.to_string() + v2.to_string() + x2.to_string() + y2.to_string());
    CHECK(wide.lo <= narrow.lo + 1e-12);
    CHECK(narrow.hi <= wide.hi + 1e-12);
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("every derivation step replays through the calculus") {
  ReplayStats stats;
  std::vector<KnowledgeBase> kbs;
  kbs.push_back(load(read_file("kb/cancer.duck")));
  kbs.push_back(load(read_file("kb/two_birules.duck")));
  kbs.push_back(load(
      "rule A -> B : [0.8, 1]\n"
      "rule B -> C : [0.7, 0.8]\n"
      "rule !B -> C : [0.2, 0.3]\n"
      "indep I(A, B, C)\n"
      "indep I(A, !B, C)\n"));
  kbs.push_back(load(
      "birule A <-> F : [0.3, 0.5] / [0.5, 1]\n"
      "birule F <-> C : [0.1, 0.2] / [0.5, 0.9]\n"
      "rule A -> B & C : [0.1, 0.3]\n"
      "rule A -> B : [1, 1]\n"
      "rule D -> A : [0, 0]\n"
      "rule A -> D : [0, 0.4]\n"
      "rule B -> E : [1, 1]\n"));
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    JointModel m = random_network_model({"A", "B", "C", "D"}, seed);
    kbs.push_back(random_kb_from_model(m, 0.1 * (seed % 3), seed + 5));
  }
  for (const auto& kb : kbs) {
    SaturationConfig config;
    config.enabled_rules.insert(RuleId::kRC);
    SaturationResult result = saturate(kb, config);
    REQUIRE(result.status != SaturationStatus::kInconsistent);
    check_derivations(kb, result.kb, stats);
  }
  CHECK(stats.checked > 1000);
  CHECK(stats.axioms > 0);
  CHECK(stats.sharpened > 0);
  for (RuleId id : {RuleId::kI1a, RuleId::kI3, RuleId::kI4, RuleId::kI5, RuleId::kI6a,
                    RuleId::kI7, RuleId::kI8, RuleId::kI9, RuleId::kI11a, RuleId::kPRC,
                    RuleId::kPRCI_A, RuleId::kPRCI_B}) {
    CAPTURE(to_string(id));
    CHECK(stats.rules.contains(id));
  }
}

TEST_CASE("sampled ranges match an exhaustive grid on linear knowledge bases") {
  struct Case {
    const char* text;
    const char* antecedent;
    const char* consequent;
  };
  const Case cases[] = {
      {"rule A -> B : [0.75, 0.875]\nrule B -> C : [0.25, 0.5]\n", "A", "C"},
      {"birule A <-> B : [0.5, 1] / [0.25, 0.5]\nbirule B <-> C : [0.5, 0.75] / [0.5, 1]\n", "A",
       "C"},
  };
  for (const Case& c : cases) {
    KnowledgeBase kb = load(c.text);
    const GridRange grid = grid_range({"A", "B", "C"}, kb, ev(c.antecedent), ev(c.consequent), 64);
    REQUIRE(grid.feasible > 0);
    OracleOptions options;
    options.budget = 200000;
    OracleReport report = estimate_range(kb, ev(c.antecedent), ev(c.consequent), options);
    REQUIRE(report.feasible_found);
    CAPTURE(c.text);
    CAPTURE(grid.lo);
    CAPTURE(grid.hi);
    CAPTURE(report.achieved_min);
    CAPTURE(report.achieved_max);
    CHECK(std::abs(report.achieved_min - grid.lo) <= 0.02);
    CHECK(std::abs(report.achieved_max - grid.hi) <= 0.02);
  }
}
