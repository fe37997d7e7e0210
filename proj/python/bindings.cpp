#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "duck/calculus.hpp"
#include "duck/engine.hpp"
#include "duck/kbformat.hpp"
#include "duck/oracle.hpp"

namespace py = pybind11;
using namespace duck;

namespace {

using Pair = std::pair<double, double>;

// A float is a point interval; anything else must be a (lo, hi) pair.
ProbInterval to_interval(const py::handle& value) {
  if (py::isinstance<py::float_>(value) || py::isinstance<py::int_>(value)) {
    return ProbInterval::point(value.cast<double>());
  }
  const auto pair = value.cast<Pair>();
  const ProbInterval p{pair.first, pair.second};
  if (!p.valid()) throw ValidationError("invalid interval " + p.to_string());
  return p;
}

Pair to_pair(const ProbInterval& p) { return {p.lo, p.hi}; }

QueryStmt to_query(const std::string& text) { return parse_query(text); }

std::string diagnostics_text(const ParseResult& r) {
  std::ostringstream out;
  for (const auto& d : r.diagnostics) out << d.to_string() << "\n";
  return out.str();
}

struct Saturation {
  KnowledgeBase kb;
  std::string status;
  int rounds = 0;
  std::size_t derived = 0;
  std::string inconsistency;
};

Saturation run_saturation(const KnowledgeBase& kb, int max_rounds, int max_width,
                          const std::optional<std::vector<std::string>>& rules) {
  SaturationConfig config;
  config.max_rounds = max_rounds;
  config.max_width = max_width;
  if (rules) {
    config.enabled_rules.clear();
    for (const auto& tag : *rules) {
      for (RuleId id : parse_rule_tag(tag)) config.enabled_rules.insert(id);
    }
  }
  SaturationResult r;
  {
    py::gil_scoped_release release;
    r = saturate(kb, config);
  }
  Saturation out{std::move(r.kb), std::string(to_string(r.status)), r.rounds, r.derived, ""};
  if (r.inconsistency) out.inconsistency = r.inconsistency->describe();
  return out;
}

}  // namespace

PYBIND11_MODULE(_duck, m) {
  m.doc() = "Interval probability bounds propagation over uncertain rules";

  py::register_exception<Error>(m, "DuckError", PyExc_ValueError);

  m.def(
      "prc_bounds",
      [](const py::handle& u, const py::handle& v, const py::handle& x, const py::handle& y) {
        return to_pair(bounds::precise_rule_chaining(to_interval(u), to_interval(v),
                                                     to_interval(x), to_interval(y)));
      },
      py::arg("u"), py::arg("v"), py::arg("x"), py::arg("y"),
      "Bounds on P(C|A) from P(B|A) in u, P(A|B) in v, P(C|B) in x, P(B|C) in y.");
  m.def(
      "rc_bounds",
      [](const py::handle& u, const py::handle& v, const py::handle& x, const py::handle& y) {
        return to_pair(bounds::rule_chaining(to_interval(u), to_interval(v), to_interval(x),
                                             to_interval(y)));
      },
      py::arg("u"), py::arg("v"), py::arg("x"), py::arg("y"));
  m.def(
      "prci_forward",
      [](const py::handle& u, const py::handle& x, const py::handle& y) {
        return to_pair(
            bounds::independent_chain_forward(to_interval(u), to_interval(x), to_interval(y)));
      },
      py::arg("u"), py::arg("x"), py::arg("y"),
      "Bounds on P(C|A) from P(B|A), P(C|B), P(C|!B) under I(A,B,C) and I(A,!B,C).");
  m.def(
      "prci_update",
      [](const py::handle& u, const py::handle& x, const py::handle& y) {
        return to_pair(
            bounds::independent_chain_update(to_interval(u), to_interval(x), to_interval(y)));
      },
      py::arg("u"), py::arg("x"), py::arg("y"), "Bounds on P(B|AC) from the same premises.");

  m.def(
      "normalize",
      [](const std::string& text) {
        const ParseResult r = parse_kb(text);
        if (!r.ok()) throw ValidationError(diagnostics_text(r));
        return serialize(r.document);
      },
      py::arg("text"), "Canonical text of a knowledge base document.");

  py::class_<OracleReport>(m, "OracleReport")
      .def_readonly("feasible_found", &OracleReport::feasible_found)
      .def_readonly("achieved_min", &OracleReport::achieved_min)
      .def_readonly("achieved_max", &OracleReport::achieved_max)
      .def_readonly("samples_used", &OracleReport::samples_used)
      .def_readonly("feasible_samples", &OracleReport::feasible_samples)
      .def_property_readonly("min_witness",
                             [](const OracleReport& r) -> std::optional<std::vector<double>> {
                               if (!r.min_witness) return std::nullopt;
                               auto mass = r.min_witness->mass();
                               return std::vector<double>(mass.begin(), mass.end());
                             })
      .def_property_readonly("max_witness",
                             [](const OracleReport& r) -> std::optional<std::vector<double>> {
                               if (!r.max_witness) return std::nullopt;
                               auto mass = r.max_witness->mass();
                               return std::vector<double>(mass.begin(), mass.end());
                             });

  py::class_<KnowledgeBase>(m, "KnowledgeBase")
      .def(py::init<>())
      .def_static(
          "from_text",
          [](const std::string& text) {
            const ParseResult r = parse_kb(text);
            if (!r.ok()) throw ValidationError(diagnostics_text(r));
            LoadedKb loaded = build_knowledge_base(r.document);
            if (loaded.inconsistency) throw ContradictionError(loaded.inconsistency->describe());
            return loaded.kb;
          },
          py::arg("text"))
      .def(
          "add_rule",
          [](KnowledgeBase& kb, const std::string& antecedent, const std::string& consequent,
             const py::handle& bounds) {
            auto report =
                kb.insert(UncertainRule(parse_event(antecedent), parse_event(consequent),
                                        to_interval(bounds)));
            if (report) throw ContradictionError(report->describe());
          },
          py::arg("antecedent"), py::arg("consequent"), py::arg("bounds"))
      .def(
          "add_birule",
          [](KnowledgeBase& kb, const std::string& a, const std::string& b,
             const py::handle& forward, const py::handle& backward) {
            auto report = kb.insert(BidirRule(parse_event(a), parse_event(b),
                                              to_interval(forward), to_interval(backward)));
            if (report) throw ContradictionError(report->describe());
          },
          py::arg("a"), py::arg("b"), py::arg("forward"), py::arg("backward"))
      .def(
          "add_indep",
          [](KnowledgeBase& kb, const std::string& a, const std::string& b, const std::string& c) {
            kb.insert(IndepStmt(parse_event(a), parse_event(b), parse_event(c)));
          },
          py::arg("a"), py::arg("b"), py::arg("c"))
      .def(
          "query",
          [](const KnowledgeBase& kb, const std::string& text) {
            const QueryStmt q = to_query(text);
            return to_pair(kb.query(q.antecedent, q.consequent).bounds);
          },
          py::arg("query"), "Stored bounds for a query such as 'P(D | A)'.")
      .def(
          "trace",
          [](const KnowledgeBase& kb, const std::string& text, bool machine) {
            const QueryStmt q = to_query(text);
            return kb.query(q.antecedent, q.consequent)
                .trace.render(machine ? TraceFormat::kMachine : TraceFormat::kHuman);
          },
          py::arg("query"), py::arg("machine") = false)
      .def("saturate", &run_saturation, py::arg("max_rounds") = 1000, py::arg("max_width") = 4,
           py::arg("rules") = std::nullopt)
      .def(
          "estimate_range",
          [](const KnowledgeBase& kb, const std::string& text, std::size_t budget,
             std::uint64_t seed, int workers) {
            const QueryStmt q = to_query(text);
            OracleOptions options;
            options.budget = budget;
            options.seed = seed;
            options.workers = workers;
            py::gil_scoped_release release;
            return estimate_range(kb, q.antecedent, q.consequent, options);
          },
          py::arg("query"), py::arg("budget") = 100000, py::arg("seed") = 20240611,
          py::arg("workers") = 0)
      .def("serialize", [](const KnowledgeBase& kb) { return serialize(kb); })
      .def_property_readonly("symbols",
                             [](const KnowledgeBase& kb) {
                               return std::vector<std::string>(kb.symbols().begin(),
                                                               kb.symbols().end());
                             })
      .def("__len__", [](const KnowledgeBase& kb) { return kb.rules().size(); });

  py::class_<Saturation>(m, "Saturation")
      .def_readonly("kb", &Saturation::kb)
      .def_readonly("status", &Saturation::status)
      .def_readonly("rounds", &Saturation::rounds)
      .def_readonly("derived", &Saturation::derived)
      .def_readonly("inconsistency", &Saturation::inconsistency);
}
