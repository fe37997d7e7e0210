#ifndef DUCK_ENGINE_HPP_
#define DUCK_ENGINE_HPP_

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "duck/calculus.hpp"
#include "duck/core.hpp"

namespace duck {

struct RuleKey {
  ConjEvent antecedent;
  ConjEvent consequent;

  auto operator<=>(const RuleKey&) const = default;
};

struct DerivationNode;
using NodePtr = std::shared_ptr<const DerivationNode>;

// One step of a derivation. Nodes are immutable and shared, so a trace is a
// DAG; renderers print a repeated node once and refer back to it.
struct DerivationNode {
  enum class Kind {
    kAxiom,      // stated in the knowledge base
    kDerived,    // conclusion of `rule` from `premises`
    kSharpened,  // lower bound from premises[0], upper bound from premises[1]
    kAssumed,    // vacuous [0, 1] stand-in for a missing direction of a pair
  };

  Kind kind;
  std::optional<RuleId> rule;
  Statement statement;
  std::vector<NodePtr> premises;

  // "axiom", "assumed", or the rule tag ("I2" for sharpened nodes).
  std::string label() const;
};

enum class TraceFormat { kHuman, kMachine };

// Derivation tree behind an answer. Empty when nothing was known.
struct DerivationTrace {
  NodePtr root;

  bool empty() const { return root == nullptr; }
  // Rule tags used anywhere in the derivation (I2 for sharpening steps).
  std::set<RuleId> rules_used() const;
  std::size_t axiom_count() const;
  // Human: indented tree with rounded numbers. Machine: one
  // `trace id=... rule=... statement="..." premises=...` line per node with
  // exact numbers.
  std::string render(TraceFormat format) const;
};

// Two incompatible bounds on one conditional: the first empty meet found.
struct InconsistencyReport {
  RuleKey key;
  ProbInterval existing;
  ProbInterval incoming;
  DerivationTrace existing_trace;
  DerivationTrace incoming_trace;

  std::string describe() const;
};

struct QueryAnswer {
  ProbInterval bounds;
  DerivationTrace trace;
};

// Rule store: one interval per (antecedent, consequent), merged by
// sharpening on insert, plus independence statements and the pairing records
// of inserted bidirectional rules.
class KnowledgeBase {
 public:
  struct Entry {
    ProbInterval bounds;
    NodePtr lower;  // derivation of bounds.lo
    NodePtr upper;  // derivation of bounds.hi
    NodePtr node;   // lower and upper combined
  };

  // Throws ValidationError when the bounds are not a valid interval. Returns
  // a report (and flags the KB) when the merged interval is empty.
  std::optional<InconsistencyReport> insert(const UncertainRule& rule);
  // Inserts both directions and keeps a pairing record.
  std::optional<InconsistencyReport> insert(const BidirRule& rule);
  void insert(const IndepStmt& statement);

  std::optional<ProbInterval> find(const ConjEvent& antecedent, const ConjEvent& consequent) const;

  // Stored bounds on P(consequent | antecedent), or [0, 1] with an empty
  // trace. Throws UnknownSymbolError for symbols the KB never mentioned.
  QueryAnswer query(const ConjEvent& antecedent, const ConjEvent& consequent) const;

  const std::map<RuleKey, Entry>& rules() const { return rules_; }
  const std::map<IndepStmt, NodePtr>& independences() const { return independences_; }
  const std::set<RuleKey>& pairings() const { return pairings_; }
  const std::set<std::string>& symbols() const { return symbols_; }
  std::size_t max_event_width() const;
  bool inconsistent() const { return inconsistency_.has_value(); }
  // First empty meet met by insert, if any.
  const std::optional<InconsistencyReport>& inconsistency() const { return inconsistency_; }

 private:
  friend class Saturator;

  void add_symbols(const ConjEvent& event);

  std::map<RuleKey, Entry> rules_;
  std::map<IndepStmt, NodePtr> independences_;
  std::set<RuleKey> pairings_;
  std::set<std::string> symbols_;
  std::optional<InconsistencyReport> inconsistency_;
};

// Every tag except RC, which precise chaining supersedes.
std::set<RuleId> default_enabled_rules();

struct SaturationConfig {
  // Upper bound on the width of generated antecedents and consequents.
  int max_width = 4;
  // Narrowing (lo gain + hi loss) an entry needs to count as progress.
  double epsilon = 1e-9;
  int max_rounds = 1000;
  std::set<RuleId> enabled_rules = default_enabled_rules();
  // A meet with lo > hi by at most this much is floating-point noise from
  // two derivations of the same value; it collapses to a point instead of
  // reporting an inconsistency.
  double noise_tolerance = 1e-9;
};

enum class SaturationStatus { kFixpoint, kRoundLimit, kInconsistent };

std::string_view to_string(SaturationStatus status);

struct SaturationResult {
  KnowledgeBase kb;
  SaturationStatus status = SaturationStatus::kFixpoint;
  int rounds = 0;
  std::size_t derived = 0;  // entries created by saturation
  std::optional<InconsistencyReport> inconsistency;
};

// Called after every round with the current interval of each entry.
using RoundObserver = std::function<void(int round, const std::map<RuleKey, ProbInterval>&)>;

// Bottom-up, semi-naive fixpoint of the enabled inference rules. Each round
// fires every rule instance with at least one premise changed in the
// previous round, reading the store as it was at the start of the round, and
// merges the conclusions by sharpening. The result depends only on the
// contents of `kb` and `config`, never on insertion order.
// Throws ValidationError when the KB uses more than 32 symbols or an event
// wider than config.max_width.
SaturationResult saturate(const KnowledgeBase& kb, const SaturationConfig& config = {},
                          const RoundObserver& observer = {});

struct ConsistencyVerdict {
  bool consistent = true;
  SaturationStatus status = SaturationStatus::kFixpoint;
  int rounds = 0;
  std::optional<InconsistencyReport> report;
};

ConsistencyVerdict check_consistency(const KnowledgeBase& kb, const SaturationConfig& config = {});

// "P(B | A)"
std::string conditional_text(const ConjEvent& antecedent, const ConjEvent& consequent);

}  // namespace duck

#endif  // DUCK_ENGINE_HPP_
