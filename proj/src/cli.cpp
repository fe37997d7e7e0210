#include "duck/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "duck/calculus.hpp"
#include "duck/engine.hpp"
#include "duck/kbformat.hpp"
#include "duck/oracle.hpp"

namespace duck::cli {
namespace {

// Oracle/calculus comparison slack for the verify verdict.
constexpr double kVerifyTolerance = 1e-6;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string two_decimals(double v) {
  const double r = std::floor(v * 100.0 + 0.5 + 1e-9) / 100.0;
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", r);
  return buffer;
}

std::string rounded(const ProbInterval& p) {
  return "[" + two_decimals(p.lo) + ", " + two_decimals(p.hi) + "]";
}

std::string in_quotes(const std::string& s) { return "\"" + s + "\""; }

ProbInterval parse_interval_flag(const std::string& name, const std::string& text) {
  auto read = [&](std::string_view part) {
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    double value = 0.0;
    auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), value,
                                     std::chars_format::fixed);
    if (part.empty() || ec != std::errc{} || end != part.data() + part.size() || value < 0.0 ||
        value > 1.0) {
      throw UsageError("--" + name + ": '" + text + "' is not a probability or lo,hi pair");
    }
    return value;
  };
  const auto comma = text.find(',');
  ProbInterval p;
  if (comma == std::string::npos) {
    p.lo = p.hi = read(text);
  } else {
    p.lo = read(std::string_view(text).substr(0, comma));
    p.hi = read(std::string_view(text).substr(comma + 1));
  }
  if (p.empty()) throw UsageError("--" + name + ": lower bound exceeds upper bound");
  return p;
}

class Runner {
 public:
  Runner(const RunConfig& config, std::ostream& out, std::ostream& err)
      : config_(config), out_(out), err_(err) {}

  int dispatch() {
    if (config_.subcommand == "chain") return chain();
    if (config_.subcommand == "check") return check();
    if (config_.subcommand == "query") return query();
    return verify();
  }

 private:
  bool machine() const { return config_.format == OutputFormat::kMachine; }

  SaturationConfig saturation_config() const {
    SaturationConfig sc;
    sc.max_width = config_.max_width;
    sc.epsilon = config_.epsilon;
    sc.max_rounds = config_.max_rounds;
    if (!config_.rules.empty()) {
      sc.enabled_rules.clear();
      for (const auto& tag : config_.rules) {
        std::vector<RuleId> ids;
        try {
          ids = parse_rule_tag(tag);
        } catch (const std::exception&) {
          throw UsageError("--rules: unknown rule tag '" + tag + "'");
        }
        sc.enabled_rules.insert(ids.begin(), ids.end());
      }
    }
    if (config_.with_rc) sc.enabled_rules.insert(RuleId::kRC);
    return sc;
  }

  // Parses every input. Returns false after printing diagnostics.
  bool load(LoadedKb& loaded) {
    KbDocument all;
    bool ok = true;
    for (const auto& path : config_.inputs) {
      std::ifstream in(path, std::ios::binary);
      if (!in) {
        err_ << path << ": cannot open file\n";
        ok = false;
        continue;
      }
      std::stringstream buffer;
      buffer << in.rdbuf();
      ParseResult parsed = parse_kb(buffer.str());
      for (const auto& d : parsed.diagnostics) err_ << path << ":" << d.to_string() << "\n";
      ok = ok && parsed.ok();
      all.statements.insert(all.statements.end(), parsed.document.statements.begin(),
                            parsed.document.statements.end());
    }
    if (!ok) return false;
    loaded = build_knowledge_base(all);
    return true;
  }

  void report_inconsistency(const InconsistencyReport& report) {
    if (machine()) {
      const auto& k = report.key;
      out_ << "verdict=inconsistent conditional=" << in_quotes(conditional_text(k.antecedent, k.consequent))
           << " existing_lo=" << format_probability(report.existing.lo)
           << " existing_hi=" << format_probability(report.existing.hi)
           << " incoming_lo=" << format_probability(report.incoming.lo)
           << " incoming_hi=" << format_probability(report.incoming.hi) << "\n";
      out_ << "section=existing\n" << report.existing_trace.render(TraceFormat::kMachine);
      out_ << "section=incoming\n" << report.incoming_trace.render(TraceFormat::kMachine);
    } else {
      out_ << report.describe();
    }
  }

  // Saturates the loaded KB; returns an exit code, or -1 to continue.
  int saturate_loaded(const LoadedKb& loaded, SaturationResult& result) {
    if (loaded.inconsistency) {
      report_inconsistency(*loaded.inconsistency);
      return kExitInconsistent;
    }
    result = saturate(loaded.kb, saturation_config());
    if (machine()) {
      out_ << "status=" << to_string(result.status) << " rounds=" << result.rounds
           << " derived=" << result.derived << "\n";
    }
    if (result.status == SaturationStatus::kInconsistent) {
      report_inconsistency(*result.inconsistency);
      return kExitInconsistent;
    }
    if (result.status == SaturationStatus::kRoundLimit) {
      err_ << "saturation stopped after " << result.rounds
           << " rounds without a fixpoint (raise --max-rounds)\n";
      return kExitLimit;
    }
    return -1;
  }

  int check() {
    LoadedKb loaded;
    if (!load(loaded)) return kExitInvalid;
    SaturationResult result;
    const int code = saturate_loaded(loaded, result);
    if (code >= 0) return code;
    if (machine()) {
      out_ << "verdict=consistent\n";
    } else {
      out_ << "consistent: fixpoint after " << result.rounds << " rounds, "
           << result.kb.rules().size() << " rules\n";
    }
    return kExitOk;
  }

  int query() {
    LoadedKb loaded;
    if (!load(loaded)) return kExitInvalid;
    SaturationResult result;
    const int code = saturate_loaded(loaded, result);
    if (code >= 0) return code;
    // Canonical order, so the output does not depend on statement order.
    std::vector<QueryStmt> queries = loaded.queries;
    std::sort(queries.begin(), queries.end(), [](const QueryStmt& x, const QueryStmt& y) {
      return RuleKey{x.antecedent, x.consequent} < RuleKey{y.antecedent, y.consequent};
    });
    queries.erase(std::unique(queries.begin(), queries.end()), queries.end());
    if (queries.empty() && !machine()) out_ << "no query statements\n";
    for (const auto& q : queries) {
      QueryAnswer answer;
      try {
        answer = result.kb.query(q.antecedent, q.consequent);
      } catch (const UnknownSymbolError&) {
        answer.bounds = ProbInterval::vacuous();
      }
      if (machine()) {
        out_ << "answer conditional=" << in_quotes(q.to_string())
             << " lo=" << format_probability(answer.bounds.lo)
             << " hi=" << format_probability(answer.bounds.hi) << "\n";
        if (config_.trace) out_ << answer.trace.render(TraceFormat::kMachine);
      } else {
        out_ << q.to_string() << " = " << answer.bounds.to_string(6) << "\n";
        if (config_.trace) {
          out_ << (answer.trace.empty() ? "  (nothing derived)\n"
                                        : answer.trace.render(TraceFormat::kHuman));
        }
      }
    }
    if (config_.dump) {
      std::istringstream lines(serialize(result.kb));
      for (std::string line; std::getline(lines, line);) {
        out_ << (machine() ? "kb statement=" + in_quotes(line) : line) << "\n";
      }
    }
    return kExitOk;
  }

  int chain() {
    const ProbInterval u = parse_interval_flag("u", config_.u);
    const ProbInterval v = parse_interval_flag("v", config_.v);
    const ProbInterval x = parse_interval_flag("x", config_.x);
    const ProbInterval y = parse_interval_flag("y", config_.y);
    if ((u.hi == 0.0) != (v.hi == 0.0) || (x.hi == 0.0) != (y.hi == 0.0)) {
      throw ValidationError("upper bounds of a pair must be zero together");
    }
    const ProbInterval prc = bounds::precise_rule_chaining(u, v, x, y);
    const ProbInterval rc = bounds::rule_chaining(u, v, x, y);
    if (machine()) {
      out_ << "prc_lo=" << format_probability(prc.lo) << " prc_hi=" << format_probability(prc.hi)
           << " rc_lo=" << format_probability(rc.lo) << " rc_hi=" << format_probability(rc.hi)
           << "\n";
    } else {
      out_ << "u=" << u.to_string() << " v=" << v.to_string() << " x=" << x.to_string()
           << " y=" << y.to_string() << "\n";
      out_ << "PRC " << rounded(prc) << "\n";
      out_ << "RC  " << rounded(rc) << "\n";
    }
    return kExitOk;
  }

  int verify() {
    const QueryStmt q = parse_query(config_.query);
    LoadedKb loaded;
    if (!load(loaded)) return kExitInvalid;
    SaturationResult result;
    const int code = saturate_loaded(loaded, result);
    if (code >= 0) return code;
    ProbInterval calculus = ProbInterval::vacuous();
    if (auto found = result.kb.find(q.antecedent, q.consequent)) calculus = *found;

    OracleOptions options;
    options.budget = config_.budget;
    options.seed = config_.seed;
    options.workers = config_.workers;
    const OracleReport report = estimate_range(loaded.kb, q.antecedent, q.consequent, options);

    std::string verdict;
    double gap = std::nan("");
    if (!report.feasible_found) {
      verdict = "no-feasible-model";
    } else {
      const bool contained = report.achieved_min >= calculus.lo - kVerifyTolerance &&
                             report.achieved_max <= calculus.hi + kVerifyTolerance;
      gap = std::max(report.achieved_min - calculus.lo, calculus.hi - report.achieved_max);
      gap = std::max(gap, 0.0);
      verdict = !contained ? "unsound" : gap <= kVerifyTolerance ? "tight" : "sound";
    }
    if (machine()) {
      out_ << "verify conditional=" << in_quotes(q.to_string())
           << " calculus_lo=" << format_probability(calculus.lo)
           << " calculus_hi=" << format_probability(calculus.hi);
      if (report.feasible_found) {
        out_ << " oracle_lo=" << format_probability(report.achieved_min)
             << " oracle_hi=" << format_probability(report.achieved_max)
             << " gap=" << format_probability(gap);
      }
      out_ << " samples=" << report.samples_used << " feasible=" << report.feasible_samples
           << " verdict=" << verdict << "\n";
    } else {
      out_ << q.to_string() << "\n";
      out_ << "  calculus " << calculus.to_string(6) << "\n";
      if (report.feasible_found) {
        out_ << "  oracle   " << ProbInterval{report.achieved_min, report.achieved_max}.to_string(6)
             << "  (" << report.feasible_samples << " of " << report.samples_used
             << " samples feasible)\n";
        out_ << "  verdict  " << verdict << ", gap " << format_probability(gap, 3) << "\n";
      } else {
        out_ << "  oracle   no feasible model among " << report.samples_used << " samples\n";
      }
    }
    return verdict == "unsound" ? kExitInconsistent : kExitOk;
  }

  const RunConfig& config_;
  std::ostream& out_;
  std::ostream& err_;
};

void add_saturation_flags(CLI::App& cmd, RunConfig& c) {
  cmd.add_option("files", c.inputs, "Knowledge base files (.duck)")->required();
  cmd.add_option("--max-width", c.max_width, "Widest event saturation may create")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--epsilon", c.epsilon, "Narrowing that counts as progress")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--max-rounds", c.max_rounds, "Round limit")->check(CLI::PositiveNumber);
  cmd.add_option("--rules", c.rules, "Enabled rule tags (e.g. I11,I7,I4,I1a)")->delimiter(',');
  cmd.add_flag("--with-rc", c.with_rc, "Also fire plain rule chaining");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig config;
  CLI::App app{"Interval probability knowledge bases", "duck"};
  app.require_subcommand(1);
  std::string format = "human";
  app.add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"human", "machine"}));

  CLI::App* check = app.add_subcommand("check", "Report whether a knowledge base is consistent");
  add_saturation_flags(*check, config);

  CLI::App* query = app.add_subcommand("query", "Answer every query statement after saturation");
  add_saturation_flags(*query, config);
  query->add_flag("--trace", config.trace, "Print derivation trees");
  query->add_flag("--dump", config.dump, "Print the saturated knowledge base");

  CLI::App* chain = app.add_subcommand("chain", "Compare plain and precise rule chaining");
  chain->add_option("--u", config.u, "P(B|A), lo,hi")->required();
  chain->add_option("--v", config.v, "P(A|B), lo,hi")->required();
  chain->add_option("--x", config.x, "P(C|B), lo,hi")->required();
  chain->add_option("--y", config.y, "P(B|C), lo,hi")->required();

  CLI::App* verify = app.add_subcommand("verify", "Compare calculus bounds with sampled models");
  add_saturation_flags(*verify, config);
  verify->add_option("--query", config.query, "Conditional such as 'P(B | A)'")->required();
  verify->add_option("--budget", config.budget, "Random models drawn")->check(CLI::PositiveNumber);
  verify->add_option("--seed", config.seed, "Sampling seed");
  verify->add_option("--workers", config.workers, "Sampling threads, 0 for all cores")
      ->check(CLI::NonNegativeNumber);

  for (CLI::App* sub : {check, query, chain, verify}) {
    sub->fallthrough();
    sub->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"human", "machine"}));
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitInvalid;
  }
  config.subcommand = app.get_subcommands().front()->get_name();
  config.format = format == "machine" ? OutputFormat::kMachine : OutputFormat::kHuman;

  try {
    return Runner(config, out, err).dispatch();
  } catch (const UsageError& e) {
    err << e.what() << "\n";
    return kExitInvalid;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitInvalid;
  }
}

}  // namespace duck::cli
