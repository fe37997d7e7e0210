#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "duck/engine.hpp"
#include "duck/kbformat.hpp"
#include "duck/oracle.hpp"
#include "support.hpp"

using namespace duck;
using duck::testing::ev;
using duck::testing::point_rule;
using duck::testing::rule;

namespace {

KbDocument read_document(const std::string& relative) {
  std::ifstream in(std::string(DUCK_SOURCE_DIR) + "/" + relative);
  REQUIRE(in);
  std::stringstream buffer;
  buffer << in.rdbuf();
  ParseResult parsed = parse_kb(buffer.str());
  REQUIRE(parsed.ok());
  return parsed.document;
}

KnowledgeBase cancer_kb() { return build_knowledge_base(read_document("kb/cancer.duck")).kb; }

double gap(const ProbInterval& p, double lo, double hi) {
  return std::max(std::abs(p.lo - lo), std::abs(p.hi - hi));
}

}  // namespace

TEST_CASE("cancer knowledge base") {
  SaturationResult result = saturate(cancer_kb());
  REQUIRE(result.status == SaturationStatus::kFixpoint);
  CHECK(gap(result.kb.query(ev("A"), ev("D")).bounds, 0.68, 0.68) <= 1e-9);
  CHECK(gap(result.kb.query(ev("A"), ev("E")).bounds, 0.64, 0.64) <= 1e-9);
  CHECK(result.derived > 0);
}

TEST_CASE("cancer derivation with independence, negation, conjunction and chaining only") {
  SaturationConfig config;
  config.enabled_rules = {RuleId::kI11a, RuleId::kI11b, RuleId::kI7, RuleId::kI4, RuleId::kI1a};
  SaturationResult result = saturate(cancer_kb(), config);
  REQUIRE(result.status == SaturationStatus::kFixpoint);
  QueryAnswer answer = result.kb.query(ev("A"), ev("D"));
  CHECK(gap(answer.bounds, 0.68, 0.68) <= 1e-9);
  REQUIRE_FALSE(answer.trace.empty());
  for (RuleId id : answer.trace.rules_used()) {
    CAPTURE(to_string(id));
    CHECK((id == RuleId::kI11a || id == RuleId::kI7 || id == RuleId::kI4 || id == RuleId::kI1a ||
           id == RuleId::kI2));
  }
  const auto used = answer.trace.rules_used();
  CHECK(used.contains(RuleId::kI11a));
  CHECK(used.contains(RuleId::kI4));
  CHECK(used.contains(RuleId::kI1a));
  CHECK(answer.trace.axiom_count() > 0);
}

TEST_CASE("traces render in both formats") {
  SaturationResult result = saturate(cancer_kb());
  QueryAnswer answer = result.kb.query(ev("A"), ev("E"));
  const std::string human = answer.trace.render(TraceFormat::kHuman);
  CHECK(human.starts_with("#1 A -> E : [0.64, 0.64]"));
  CHECK(human.find("[axiom]") != std::string::npos);
  const std::string machine = answer.trace.render(TraceFormat::kMachine);
  std::istringstream lines(machine);
  std::string line, last;
  int count = 0;
  while (std::getline(lines, line)) {
    CHECK(line.starts_with("trace id="));
    last = line;
    ++count;
  }
  CHECK(count > 1);
  // Post-order: the root comes last.
  CHECK(last.find("statement=\"A -> E :") != std::string::npos);
}

TEST_CASE("contradictory point values are reported with both derivations") {
  KnowledgeBase kb;
  CHECK_FALSE(kb.insert(point_rule("A", "B", .6)).has_value());
  std::optional<InconsistencyReport> report = kb.insert(point_rule("A", "B", .7));
  REQUIRE(report.has_value());
  CHECK(kb.inconsistent());
  CHECK(report->existing == ProbInterval::point(.6));
  CHECK(report->incoming == ProbInterval::point(.7));
  CHECK(report->describe().find("P(B | A)") != std::string::npos);
  ConsistencyVerdict verdict = check_consistency(kb);
  CHECK_FALSE(verdict.consistent);
  CHECK(verdict.status == SaturationStatus::kInconsistent);
}

TEST_CASE("inconsistency found by saturation") {
  KnowledgeBase kb;
  kb.insert(point_rule("A", "B", .6));
  kb.insert(point_rule("A", "!B", .6));
  SaturationResult result = saturate(kb);
  CHECK(result.status == SaturationStatus::kInconsistent);
  REQUIRE(result.inconsistency.has_value());
  CHECK_FALSE(result.inconsistency->incoming_trace.empty());
  CHECK_FALSE(check_consistency(kb).consistent);
}

TEST_CASE("coupling is checked when a bidirectional rule is built") {
  CHECK_THROWS_AS(BidirRule(ev("A"), ev("B"), {.9, 1}, {0, 0}), ValidationError);
  KnowledgeBase kb;
  CHECK_THROWS_AS(kb.insert(UncertainRule(ev("A"), ev("B"), {.5, .4})), ValidationError);
}

TEST_CASE("sharpening keeps the tighter side of each bound") {
  KnowledgeBase kb;
  kb.insert(rule("A", "B", .2, .9));
  kb.insert(rule("A", "B", .4, 1));
  CHECK(kb.find(ev("A"), ev("B")) == ProbInterval{.4, .9});
  QueryAnswer answer = kb.query(ev("A"), ev("B"));
  CHECK(answer.trace.rules_used().contains(RuleId::kI2));
}

TEST_CASE("queries") {
  KnowledgeBase kb;
  kb.insert(point_rule("A", "B", .3));
  QueryAnswer unknown_pair = kb.query(ev("B"), ev("A"));
  CHECK(unknown_pair.bounds.is_vacuous());
  CHECK(unknown_pair.trace.empty());
  CHECK_THROWS_AS(kb.query(ev("A"), ev("Z")), UnknownSymbolError);
  CHECK_THROWS_AS(kb.query(ev("A"), ev("A & B")), ValidationError);
}

TEST_CASE("single-step derivations inside the engine") {
  KnowledgeBase kb;
  kb.insert(point_rule("A", "B", .5));
  kb.insert(point_rule("A", "B & C", .2));
  SaturationResult result = saturate(kb);
  REQUIRE(result.status == SaturationStatus::kFixpoint);
  auto p = result.kb.find(ev("A & B"), ev("C"));
  REQUIRE(p.has_value());
  CHECK(gap(*p, .4, .4) <= 1e-12);
  p = result.kb.find(ev("A"), ev("!B"));
  REQUIRE(p.has_value());
  CHECK(gap(*p, .5, .5) <= 1e-12);
}

TEST_CASE("precise chaining fires on paired rules") {
  KnowledgeBase kb;
  kb.insert(BidirRule(ev("A"), ev("B"), {.6, 1}, {1, 1}));
  kb.insert(BidirRule(ev("B"), ev("C"), {.8, .8}, {.8, .8}));
  SaturationResult result = saturate(kb);
  REQUIRE(result.status == SaturationStatus::kFixpoint);
  QueryAnswer answer = result.kb.query(ev("A"), ev("C"));
  CHECK(answer.bounds.lo == doctest::Approx(0.48));
  CHECK(answer.bounds.hi <= 0.8334);
  CHECK(answer.trace.rules_used().contains(RuleId::kPRC));
}

TEST_CASE("empty knowledge base saturates in zero rounds") {
  SaturationResult result = saturate(KnowledgeBase{});
  CHECK(result.status == SaturationStatus::kFixpoint);
  CHECK(result.rounds == 0);
  CHECK(result.kb.rules().empty());
}

TEST_CASE("round limit") {
  SaturationConfig config;
  config.max_rounds = 1;
  SaturationResult result = saturate(cancer_kb(), config);
  CHECK(result.status == SaturationStatus::kRoundLimit);
  CHECK(to_string(result.status) == "round-limit");
}

TEST_CASE("width limit") {
  KnowledgeBase kb;
  kb.insert(point_rule("A & B & C", "D", .5));
  SaturationConfig config;
  config.max_width = 2;
  CHECK_THROWS_AS(saturate(kb, config), ValidationError);
  config.max_width = 3;
  SaturationResult result = saturate(kb, config);
  for (const auto& [key, entry] : result.kb.rules()) {
    CHECK(key.antecedent.width() <= 3);
    CHECK(key.consequent.width() <= 3);
  }
}

TEST_CASE("intervals only narrow from round to round") {
  std::map<RuleKey, ProbInterval> previous;
  int violations = 0;
  int rounds_seen = 0;
  saturate(cancer_kb(), {}, [&](int, const std::map<RuleKey, ProbInterval>& now) {
    ++rounds_seen;
    for (const auto& [key, p] : previous) {
      auto it = now.find(key);
      if (it == now.end() || !it->second.subset_of(p)) ++violations;
    }
    previous = now;
  });
  CHECK(rounds_seen > 1);
  CHECK(violations == 0);
}

TEST_CASE("saturation does not depend on insertion order") {
  KbDocument doc = read_document("kb/cancer.duck");
  const std::string reference = serialize(saturate(build_knowledge_base(doc).kb).kb);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(doc.statements.begin(), doc.statements.end(), rng);
    CHECK(serialize(saturate(build_knowledge_base(doc).kb).kb) == reference);
  }
}

TEST_CASE("saturated intervals contain the generating model's conditionals") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::vector<std::string> names{"A", "B", "C", "D"};
    JointModel model = random_network_model({names.begin(), names.begin() + 3 + seed % 2}, seed);
    KnowledgeBase kb = random_kb_from_model(model, 0.3 * (seed % 4) / 3.0, seed + 1000);
    SaturationResult result = saturate(kb);
    CAPTURE(seed);
    REQUIRE(result.status == SaturationStatus::kFixpoint);
    for (const auto& [key, entry] : result.kb.rules()) {
      const auto truth = eval_conditional(model, key.antecedent, key.consequent);
      REQUIRE(truth.has_value());
      CAPTURE(conditional_text(key.antecedent, key.consequent));
      CAPTURE(entry.bounds.to_string());
      CHECK(duck::testing::within(entry.bounds, *truth, 1e-9));
    }
  }
}
