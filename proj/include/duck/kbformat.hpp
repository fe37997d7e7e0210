#ifndef DUCK_KBFORMAT_HPP_
#define DUCK_KBFORMAT_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "duck/core.hpp"
#include "duck/engine.hpp"

namespace duck {

// 1-based line and column.
struct SourcePos {
  int line = 1;
  int column = 1;

  bool operator==(const SourcePos&) const = default;
};

// query P(consequent | antecedent)
struct QueryStmt {
  ConjEvent antecedent;
  ConjEvent consequent;

  std::string to_string() const { return conditional_text(antecedent, consequent); }
  bool operator==(const QueryStmt&) const = default;
};

using KbStatement = std::variant<UncertainRule, BidirRule, IndepStmt, QueryStmt>;

struct LocatedStatement {
  KbStatement statement;
  SourcePos pos;

  // Positions do not take part in equality.
  bool operator==(const LocatedStatement& other) const { return statement == other.statement; }
};

struct KbDocument {
  std::vector<LocatedStatement> statements;

  bool operator==(const KbDocument&) const = default;
};

enum class DiagnosticKind {
  kSyntax,
  kRange,          // number outside [0, 1]
  kIntervalOrder,  // lo > hi
  kCoupling,       // birule with exactly one zero upper bound
  kContradiction,  // event holding a symbol with both polarities
  kOverlap,        // events that must be disjoint share a symbol
};

std::string_view to_string(DiagnosticKind kind);

struct Diagnostic {
  SourcePos pos;
  int length = 1;
  DiagnosticKind kind = DiagnosticKind::kSyntax;
  std::string message;

  // "3:14: interval-order: ..."
  std::string to_string() const;
};

struct ParseResult {
  KbDocument document;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return diagnostics.empty(); }
};

// Parses the whole text, one statement per line. A bad line produces a
// diagnostic and parsing resumes on the next line.
ParseResult parse_kb(std::string_view text);

// Single event ("A & !B") or query body ("P(B | A)"). Throw ValidationError
// with the diagnostic text on malformed input.
ConjEvent parse_event(std::string_view text);
QueryStmt parse_query(std::string_view text);

// Canonical text: one statement per line, literals sorted, shortest decimal
// numbers that read back exactly.
std::string serialize(const KbStatement& statement);
std::string serialize(const KbDocument& document);
// Rule entries whose KB pairing record survives (both directions stored,
// coupling intact) print as birules; everything else as rules, then
// independences.
std::string serialize(const KnowledgeBase& kb);

struct LoadedKb {
  KnowledgeBase kb;
  std::vector<QueryStmt> queries;
  std::optional<InconsistencyReport> inconsistency;  // first empty meet on insert
};

LoadedKb build_knowledge_base(const KbDocument& document);

}  // namespace duck

#endif  // DUCK_KBFORMAT_HPP_
