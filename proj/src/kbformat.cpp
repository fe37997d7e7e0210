#include "duck/kbformat.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

namespace duck {

std::string_view to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::kSyntax:
      return "syntax";
    case DiagnosticKind::kRange:
      return "range";
    case DiagnosticKind::kIntervalOrder:
      return "interval-order";
    case DiagnosticKind::kCoupling:
      return "coupling";
    case DiagnosticKind::kContradiction:
      return "contradiction";
    case DiagnosticKind::kOverlap:
      return "overlap";
  }
  return "?";
}

std::string Diagnostic::to_string() const {
  return std::to_string(pos.line) + ":" + std::to_string(pos.column) + ": " +
         std::string(duck::to_string(kind)) + ": " + message;
}

namespace {

enum class Tok { kIdent, kNumber, kPunct, kEnd };

struct Token {
  Tok kind;
  std::string text;
  int column;  // 1-based
};

// Thrown inside a line parse; the driver turns it into a diagnostic and
// moves on to the next line.
struct LineError {
  Diagnostic diagnostic;
};

class LineParser {
 public:
  LineParser(std::string_view line, int line_no) : line_no_(line_no) { lex(line); }

  bool blank() const { return tokens_.front().kind == Tok::kEnd; }
  int first_column() const { return tokens_.front().column; }

  KbStatement statement() {
    const Token& head = peek();
    if (head.kind != Tok::kIdent) fail(head, "expected rule, birule, indep or query");
    KbStatement out = parse_body(head.text);
    expect_end();
    return out;
  }

  ConjEvent lone_event() {
    Spanned e = event();
    expect_end();
    return std::move(e.value);
  }

  QueryStmt lone_query() {
    QueryStmt q = query_body();
    expect_end();
    return q;
  }

 private:
  struct Spanned {
    ConjEvent value;
    int column;
    int length;
  };

  KbStatement parse_body(const std::string& keyword) {
    if (keyword == "rule") {
      next();
      Spanned a = event();
      expect("->");
      Spanned b = event();
      expect(":");
      ProbInterval bounds = interval();
      check_disjoint(a, b, "antecedent and consequent");
      return UncertainRule(std::move(a.value), std::move(b.value), bounds);
    }
    if (keyword == "birule") {
      next();
      Spanned a = event();
      expect("<->");
      Spanned b = event();
      expect(":");
      const int forward_col = peek().column;
      ProbInterval forward = interval();
      expect("/");
      ProbInterval backward = interval();
      check_disjoint(a, b, "birule events");
      if ((forward.hi == 0.0) != (backward.hi == 0.0)) {
        fail_at(forward_col, last_end_ - forward_col, DiagnosticKind::kCoupling,
                "upper bounds must be zero together: forward " + forward.to_string() +
                    ", backward " + backward.to_string());
      }
      return BidirRule(std::move(a.value), std::move(b.value), forward, backward);
    }
    if (keyword == "indep") {
      next();
      const Token& i = peek();
      if (i.kind != Tok::kIdent || i.text != "I") fail(i, "expected 'I('");
      next();
      expect("(");
      Spanned a = event();
      expect(",");
      Spanned b = event();
      expect(",");
      Spanned c = event();
      expect(")");
      check_disjoint(a, b, "independence events");
      check_disjoint(a, c, "independence events");
      check_disjoint(b, c, "independence events");
      return IndepStmt(std::move(a.value), std::move(b.value), std::move(c.value));
    }
    if (keyword == "query") {
      next();
      return query_body();
    }
    fail(peek(), "unknown statement '" + keyword + "'");
  }

  QueryStmt query_body() {
    const Token& p = peek();
    if (p.kind != Tok::kIdent || p.text != "P") fail(p, "expected 'P('");
    next();
    expect("(");
    Spanned b = event();
    expect("|");
    Spanned a = event();
    expect(")");
    check_disjoint(a, b, "query events");
    return QueryStmt{std::move(a.value), std::move(b.value)};
  }

  Spanned event() {
    const int start = peek().column;
    std::vector<Literal> literals;
    while (true) {
      bool negated = false;
      if (is_punct("!")) {
        negated = true;
        next();
      }
      const Token& name = peek();
      if (name.kind != Tok::kIdent) fail(name, "expected an event symbol");
      literals.push_back(Literal{name.text, negated});
      next();
      if (!is_punct("&")) break;
      next();
    }
    try {
      return {ConjEvent::canonicalize(std::move(literals)), start, last_end_ - start};
    } catch (const ContradictionError& e) {
      fail_at(start, last_end_ - start, DiagnosticKind::kContradiction, e.what());
    }
  }

  ProbInterval interval() {
    const int start = peek().column;
    expect("[");
    const double lo = number();
    expect(",");
    const double hi = number();
    expect("]");
    if (lo > hi) {
      fail_at(start, last_end_ - start, DiagnosticKind::kIntervalOrder,
              "lower bound " + format_probability(lo) + " exceeds upper bound " +
                  format_probability(hi));
    }
    return {lo, hi};
  }

  double number() {
    const Token& t = peek();
    if (t.kind != Tok::kNumber) fail(t, "expected a number");
    double value = 0.0;
    const char* first = t.text.data();
    const char* last = first + t.text.size();
    auto [end, ec] = std::from_chars(first, last, value, std::chars_format::fixed);
    if (ec != std::errc{} || end != last) fail(t, "malformed number '" + t.text + "'");
    if (value < 0.0 || value > 1.0) {
      fail_at(t.column, static_cast<int>(t.text.size()), DiagnosticKind::kRange,
              "probability " + t.text + " is outside [0, 1]");
    }
    next();
    return value;
  }

  void check_disjoint(const Spanned& x, const Spanned& y, const std::string& what) {
    if (!x.value.shares_symbol(y.value)) return;
    const int end = std::max(x.column + x.length, y.column + y.length);
    const int start = std::min(x.column, y.column);
    fail_at(start, end - start, DiagnosticKind::kOverlap,
            what + " " + x.value.to_string() + " and " + y.value.to_string() +
                " share a symbol");
  }

  void lex(std::string_view line) {
    std::size_t i = 0;
    auto column = [&](std::size_t at) { return static_cast<int>(at) + 1; };
    while (i < line.size()) {
      const char ch = line[i];
      if (ch == '#') break;
      if (std::isspace(static_cast<unsigned char>(ch))) {
        ++i;
        continue;
      }
      const std::size_t start = i;
      if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
        while (i < line.size() &&
               (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_')) {
          ++i;
        }
        tokens_.push_back({Tok::kIdent, std::string(line.substr(start, i - start)), column(start)});
        continue;
      }
      const bool minus = ch == '-' && i + 1 < line.size() &&
                         (std::isdigit(static_cast<unsigned char>(line[i + 1])) || line[i + 1] == '.');
      if (minus || std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
        if (minus) ++i;
        while (i < line.size() &&
               (std::isdigit(static_cast<unsigned char>(line[i])) || line[i] == '.')) {
          ++i;
        }
        tokens_.push_back({Tok::kNumber, std::string(line.substr(start, i - start)), column(start)});
        continue;
      }
      if (line.substr(i, 3) == "<->") {
        tokens_.push_back({Tok::kPunct, "<->", column(start)});
        i += 3;
        continue;
      }
      if (line.substr(i, 2) == "->") {
        tokens_.push_back({Tok::kPunct, "->", column(start)});
        i += 2;
        continue;
      }
      if (std::string_view("&!:[],/()|").find(ch) != std::string_view::npos) {
        tokens_.push_back({Tok::kPunct, std::string(1, ch), column(start)});
        ++i;
        continue;
      }
      tokens_.push_back({Tok::kPunct, std::string(1, ch), column(start)});
      fail(tokens_.back(), std::string("unexpected character '") + ch + "'");
    }
    tokens_.push_back({Tok::kEnd, "", column(i)});
  }

  const Token& peek() const { return tokens_[pos_]; }
  void next() {
    last_end_ = tokens_[pos_].column + static_cast<int>(tokens_[pos_].text.size());
    if (pos_ + 1 < tokens_.size()) ++pos_;
  }
  bool is_punct(std::string_view p) const { return peek().kind == Tok::kPunct && peek().text == p; }
  void expect(std::string_view p) {
    if (!is_punct(p)) fail(peek(), "expected '" + std::string(p) + "'");
    next();
  }
  void expect_end() {
    if (peek().kind != Tok::kEnd) fail(peek(), "unexpected '" + peek().text + "' after statement");
  }

  [[noreturn]] void fail(const Token& at, const std::string& message) {
    const int length = at.kind == Tok::kEnd ? 1 : static_cast<int>(at.text.size());
    const std::string found = at.kind == Tok::kEnd ? "end of line" : "'" + at.text + "'";
    fail_at(at.column, length, DiagnosticKind::kSyntax,
            message.starts_with("expected") ? message + ", found " + found : message);
  }
  [[noreturn]] void fail_at(int column, int length, DiagnosticKind kind, std::string message) {
    throw LineError{Diagnostic{{line_no_, column}, std::max(1, length), kind, std::move(message)}};
  }

  int line_no_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int last_end_ = 1;
};

}  // namespace

ParseResult parse_kb(std::string_view text) {
  ParseResult result;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    try {
      LineParser parser(line, line_no);
      if (!parser.blank()) {
        const SourcePos pos{line_no, parser.first_column()};
        result.document.statements.push_back({parser.statement(), pos});
      }
    } catch (const LineError& e) {
      result.diagnostics.push_back(e.diagnostic);
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return result;
}

ConjEvent parse_event(std::string_view text) {
  try {
    return LineParser(text, 1).lone_event();
  } catch (const LineError& e) {
    throw ValidationError(e.diagnostic.to_string());
  }
}

QueryStmt parse_query(std::string_view text) {
  try {
    return LineParser(text, 1).lone_query();
  } catch (const LineError& e) {
    throw ValidationError(e.diagnostic.to_string());
  }
}

namespace {

struct StatementWriter {
  std::string operator()(const UncertainRule& r) const {
    return "rule " + r.antecedent().to_string() + " -> " + r.consequent().to_string() + " : " +
           r.bounds().to_string();
  }
  std::string operator()(const BidirRule& r) const {
    return "birule " + r.a().to_string() + " <-> " + r.b().to_string() + " : " +
           r.forward().to_string() + " / " + r.backward().to_string();
  }
  std::string operator()(const IndepStmt& s) const { return "indep " + s.to_string(); }
  std::string operator()(const QueryStmt& q) const { return "query " + q.to_string(); }
};

}  // namespace

std::string serialize(const KbStatement& statement) {
  return std::visit(StatementWriter{}, statement);
}

std::string serialize(const KbDocument& document) {
  std::string out;
  for (const auto& located : document.statements) {
    out += serialize(located.statement);
    out += '\n';
  }
  return out;
}

std::string serialize(const KnowledgeBase& kb) {
  std::string out;
  std::set<RuleKey> done;
  for (const auto& [key, entry] : kb.rules()) {
    if (done.contains(key)) continue;
    const RuleKey reverse{key.consequent, key.antecedent};
    auto back = kb.rules().find(reverse);
    const bool paired = kb.pairings().contains(key) && back != kb.rules().end();
    if (paired && !entry.bounds.empty() && !back->second.bounds.empty() &&
        (entry.bounds.hi == 0.0) == (back->second.bounds.hi == 0.0)) {
      out += serialize(KbStatement(
                 BidirRule(key.antecedent, key.consequent, entry.bounds, back->second.bounds))) +
             "\n";
      done.insert(reverse);
      continue;
    }
    out += serialize(KbStatement(UncertainRule(key.antecedent, key.consequent, entry.bounds))) +
           "\n";
  }
  for (const auto& [stmt, node] : kb.independences()) {
    out += serialize(KbStatement(stmt)) + "\n";
  }
  return out;
}

LoadedKb build_knowledge_base(const KbDocument& document) {
  LoadedKb loaded;
  for (const auto& located : document.statements) {
    std::optional<InconsistencyReport> report;
    if (const auto* r = std::get_if<UncertainRule>(&located.statement)) {
      report = loaded.kb.insert(*r);
    } else if (const auto* b = std::get_if<BidirRule>(&located.statement)) {
      report = loaded.kb.insert(*b);
    } else if (const auto* i = std::get_if<IndepStmt>(&located.statement)) {
      loaded.kb.insert(*i);
    } else {
      loaded.queries.push_back(std::get<QueryStmt>(located.statement));
    }
    if (report && !loaded.inconsistency) loaded.inconsistency = std::move(report);
  }
  return loaded;
}

}  // namespace duck
