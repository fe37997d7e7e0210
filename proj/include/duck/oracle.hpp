#ifndef DUCK_ORACLE_HPP_
#define DUCK_ORACLE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duck/core.hpp"
#include "duck/engine.hpp"

namespace duck {

inline constexpr int kMaxOracleSymbols = 5;

// Probability mass over the 2^n atoms of n basic events. Atom index bit i is
// the truth value of symbols()[i]; symbols are kept sorted by name.
class JointModel {
 public:
  // Throws ValidationError unless n <= 5, mass has 2^n nonnegative entries,
  // and the entries sum to 1 within 1e-12.
  JointModel(std::vector<std::string> symbols, std::vector<double> mass);

  static JointModel uniform(std::vector<std::string> symbols);

  const std::vector<std::string>& symbols() const { return symbols_; }
  std::span<const double> mass() const { return mass_; }
  std::size_t atom_count() const { return mass_.size(); }

  // Sum of the masses of atoms where every literal of `event` holds. Throws
  // UnknownSymbolError for symbols outside the model.
  double probability(const ConjEvent& event) const;

  // Atom test for `event`: atom satisfies it iff (atom & care) == value.
  struct AtomFilter {
    std::uint32_t care = 0;
    std::uint32_t value = 0;
    bool matches(std::uint32_t atom) const { return (atom & care) == value; }
  };
  AtomFilter filter(const ConjEvent& event) const;

 private:
  std::vector<std::string> symbols_;
  std::vector<double> mass_;
};

// P(b | a), or nothing when P(a) = 0.
std::optional<double> eval_conditional(const JointModel& model, const ConjEvent& a,
                                       const ConjEvent& b);

struct FeasibilityTolerances {
  double rule = 1e-6;          // slack on each conditional bound
  double independence = 1e-6;  // |P(abc)P(b) - P(ab)P(bc)|
  double positivity = 1e-7;    // operational meaning of P(x) > 0
};

// Every rule holds within tolerance with its antecedent at least
// `positivity` likely, and every independence statement holds in product
// form with P(ab) >= positivity. Throws UnknownSymbolError when the KB uses a
// symbol the model lacks.
bool satisfies(const JointModel& model, const KnowledgeBase& kb,
               const FeasibilityTolerances& tolerances = {});

struct OracleOptions {
  std::size_t budget = 100000;     // random models drawn
  std::uint64_t seed = 20240611;
  FeasibilityTolerances tolerances;
  int workers = 0;                 // 0: hardware concurrency
  int refine_starts = 3;           // extremal samples refined per direction
};

struct OracleReport {
  bool feasible_found = false;
  // Extreme values of P(b | a) over the feasible models found; NaN when none.
  double achieved_min = 0.0;
  double achieved_max = 0.0;
  std::optional<JointModel> min_witness;
  std::optional<JointModel> max_witness;
  std::size_t samples_used = 0;
  std::size_t feasible_samples = 0;
};

// Searches the models of `kb` (over its symbols plus the query's, at most 5)
// for the smallest and largest P(b | a). Random simplex draws are repaired
// toward the constraints by alternating projection; the extremal feasible
// ones are refined by constrained ascent. Results depend only on the inputs,
// the budget and the seed, not on the number of workers. Throws
// ValidationError for more than 5 symbols or overlapping query events.
OracleReport estimate_range(const KnowledgeBase& kb, const ConjEvent& a, const ConjEvent& b,
                            const OracleOptions& options = {});

// Bayesian network over `symbols` in the given order: each node draws up to
// two parents among earlier nodes, and every conditional table entry lies in
// [0.1, 0.9], so every atom has positive mass.
JointModel random_network_model(std::vector<std::string> symbols, std::uint64_t seed);

struct RandomKbOptions {
  int min_rules = 4;
  int max_rules = 10;
  int max_event_width = 2;
  double reverse_probability = 0.5;  // also state P(a|b), as a birule
  int max_independences = 3;
};

// KB whose every statement holds in `model`: rule intervals contain the true
// conditional, widened on each side by a random amount up to `slack`, and
// independence statements are ones the model satisfies to 1e-12.
KnowledgeBase random_kb_from_model(const JointModel& model, double slack, std::uint64_t seed,
                                   const RandomKbOptions& options = {});

}  // namespace duck

#endif  // DUCK_ORACLE_HPP_
