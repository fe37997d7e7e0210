#include "duck/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <iterator>

namespace duck {

std::string Literal::to_string() const {
  return negated ? "!" + symbol : symbol;
}

ConjEvent ConjEvent::canonicalize(std::vector<Literal> literals) {
  if (literals.empty()) {
    throw std::invalid_argument("conjunctive event needs at least one literal");
  }
  std::sort(literals.begin(), literals.end());
  literals.erase(std::unique(literals.begin(), literals.end()), literals.end());
  for (std::size_t i = 1; i < literals.size(); ++i) {
    if (literals[i].symbol == literals[i - 1].symbol) {
      throw ContradictionError("contradictory conjunction: " + literals[i - 1].to_string() +
                               " & " + literals[i].to_string());
    }
  }
  ConjEvent event;
  event.literals_ = std::move(literals);
  return event;
}

ConjEvent ConjEvent::of(Literal literal) {
  ConjEvent event;
  event.literals_.push_back(std::move(literal));
  return event;
}

bool ConjEvent::contains(const Literal& literal) const {
  return std::binary_search(literals_.begin(), literals_.end(), literal);
}

bool ConjEvent::has_symbol(std::string_view symbol) const {
  return std::any_of(literals_.begin(), literals_.end(),
                     [&](const Literal& l) { return l.symbol == symbol; });
}

bool ConjEvent::shares_symbol(const ConjEvent& other) const {
  auto i = literals_.begin();
  auto j = other.literals_.begin();
  while (i != literals_.end() && j != other.literals_.end()) {
    if (i->symbol == j->symbol) return true;
    if (i->symbol < j->symbol) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

bool ConjEvent::includes(const ConjEvent& other) const {
  return std::includes(literals_.begin(), literals_.end(), other.literals_.begin(),
                       other.literals_.end());
}

ConjEvent ConjEvent::without(const ConjEvent& other) const {
  std::vector<Literal> rest;
  std::set_difference(literals_.begin(), literals_.end(), other.literals_.begin(),
                      other.literals_.end(), std::back_inserter(rest));
  if (rest.empty()) {
    throw std::invalid_argument("removing " + other.to_string() + " from " + to_string() +
                                " leaves no literal");
  }
  ConjEvent event;
  event.literals_ = std::move(rest);
  return event;
}

std::string ConjEvent::to_string() const {
  std::string out;
  for (const auto& literal : literals_) {
    if (!out.empty()) out += " & ";
    out += literal.to_string();
  }
  return out;
}

ConjEvent conjoin(const ConjEvent& e1, const ConjEvent& e2) {
  std::vector<Literal> all(e1.literals().begin(), e1.literals().end());
  all.insert(all.end(), e2.literals().begin(), e2.literals().end());
  return ConjEvent::canonicalize(std::move(all));
}

std::string ProbInterval::to_string(int significant_digits) const {
  return "[" + format_probability(lo, significant_digits) + ", " +
         format_probability(hi, significant_digits) + "]";
}

ProbInterval interval_meet(const ProbInterval& p, const ProbInterval& q) {
  return {std::max(p.lo, q.lo), std::min(p.hi, q.hi)};
}

UncertainRule::UncertainRule(ConjEvent antecedent, ConjEvent consequent, ProbInterval bounds)
    : antecedent_(std::move(antecedent)), consequent_(std::move(consequent)), bounds_(bounds) {
  if (antecedent_.shares_symbol(consequent_)) {
    throw ValidationError("antecedent " + antecedent_.to_string() + " and consequent " +
                          consequent_.to_string() + " share a symbol");
  }
  if (std::isnan(bounds_.lo) || std::isnan(bounds_.hi)) {
    throw ValidationError("NaN bound in rule " + antecedent_.to_string() + " -> " +
                          consequent_.to_string());
  }
}

std::string UncertainRule::to_string(int significant_digits) const {
  return antecedent_.to_string() + " -> " + consequent_.to_string() + " : " +
         bounds_.to_string(significant_digits);
}

BidirRule::BidirRule(ConjEvent a, ConjEvent b, ProbInterval forward, ProbInterval backward)
    : a_(std::move(a)), b_(std::move(b)), forward_(forward), backward_(backward) {
  if (a_.shares_symbol(b_)) {
    throw ValidationError("bidirectional rule events " + a_.to_string() + " and " +
                          b_.to_string() + " share a symbol");
  }
  if ((forward_.hi == 0.0) != (backward_.hi == 0.0)) {
    throw ValidationError("bidirectional rule " + a_.to_string() + " <-> " + b_.to_string() +
                          " violates upper-bound coupling: forward " + forward_.to_string() +
                          ", backward " + backward_.to_string());
  }
}

std::string BidirRule::to_string() const {
  return a_.to_string() + " <-> " + b_.to_string() + " : " + forward_.to_string() + " / " +
         backward_.to_string();
}

IndepStmt::IndepStmt(ConjEvent a, ConjEvent b, ConjEvent c)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
  if (a_.shares_symbol(b_) || a_.shares_symbol(c_) || b_.shares_symbol(c_)) {
    throw ValidationError("independence " + to_string() + " needs symbol-disjoint events");
  }
}

std::string IndepStmt::to_string() const {
  return "I(" + a_.to_string() + ", " + b_.to_string() + ", " + c_.to_string() + ")";
}

std::string format_probability(double value, int significant_digits) {
  if (value == 0.0) return "0";  // also folds -0
  char buffer[64];
  if (significant_digits > 0) {
    std::snprintf(buffer, sizeof(buffer), "%.*g", significant_digits, value);
    return buffer;
  }
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc{}) return "nan";
  std::string text(buffer, end);
  // to_chars may pick scientific notation for tiny values; the text format
  // only knows plain decimals.
  if (text.find('e') != std::string::npos) {
    auto [fend, fec] =
        std::to_chars(buffer, buffer + sizeof(buffer), value, std::chars_format::fixed);
    if (fec == std::errc{}) text.assign(buffer, fend);
  }
  return text;
}

}  // namespace duck
