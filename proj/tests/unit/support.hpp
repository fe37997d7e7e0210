#ifndef DUCK_TESTS_SUPPORT_HPP_
#define DUCK_TESTS_SUPPORT_HPP_

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "duck/core.hpp"
#include "duck/kbformat.hpp"

namespace duck::testing {

inline ConjEvent ev(const char* text) { return parse_event(text); }

inline UncertainRule rule(const char* a, const char* b, double lo, double hi) {
  return UncertainRule(ev(a), ev(b), {lo, hi});
}

inline UncertainRule point_rule(const char* a, const char* b, double p) {
  return rule(a, b, p, p);
}

// Brute-force joint distribution keyed by symbol name. Kept separate from
// the library's JointModel so tests do not check the oracle with itself.
class TruthTable {
 public:
  TruthTable(std::vector<std::string> symbols, std::vector<double> mass)
      : symbols_(std::move(symbols)), mass_(std::move(mass)) {}

  // Dirichlet(1, ..., 1) draw over 2^n atoms.
  static TruthTable random(std::vector<std::string> symbols, std::mt19937_64& rng) {
    std::exponential_distribution<double> exp(1.0);
    std::vector<double> mass(std::size_t{1} << symbols.size());
    double total = 0.0;
    for (double& m : mass) total += (m = exp(rng));
    for (double& m : mass) m /= total;
    return TruthTable(std::move(symbols), std::move(mass));
  }

  double p(const ConjEvent& e) const {
    double total = 0.0;
    for (std::size_t atom = 0; atom < mass_.size(); ++atom) {
      bool holds = true;
      for (const auto& lit : e.literals()) {
        const bool value = (atom >> index(lit.symbol)) & 1;
        if (value == lit.negated) holds = false;
      }
      if (holds) total += mass_[atom];
    }
    return total;
  }

  double cond(const ConjEvent& a, const ConjEvent& b) const {
    return p(conjoin(a, b)) / p(a);
  }
  double cond(const char* a, const char* b) const { return cond(ev(a), ev(b)); }

  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::vector<double>& mass() const { return mass_; }

 private:
  std::size_t index(const std::string& s) const {
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      if (symbols_[i] == s) return i;
    }
    throw std::out_of_range(s);
  }

  std::vector<std::string> symbols_;
  std::vector<double> mass_;
};

inline bool within(const ProbInterval& p, double value, double tol = 1e-9) {
  return p.lo - tol <= value && value <= p.hi + tol;
}

inline double round2(double v) { return std::floor(v * 100.0 + 0.5 + 1e-9) / 100.0; }

}  // namespace duck::testing

#endif  // DUCK_TESTS_SUPPORT_HPP_
