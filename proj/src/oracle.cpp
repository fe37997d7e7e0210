#include "duck/oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <thread>

namespace duck {

JointModel::JointModel(std::vector<std::string> symbols, std::vector<double> mass)
    : symbols_(std::move(symbols)), mass_(std::move(mass)) {
  if (symbols_.size() > static_cast<std::size_t>(kMaxOracleSymbols)) {
    throw ValidationError("joint models support at most 5 symbols");
  }
  if (!std::is_sorted(symbols_.begin(), symbols_.end()) ||
      std::adjacent_find(symbols_.begin(), symbols_.end()) != symbols_.end()) {
    throw ValidationError("joint model symbols must be sorted and distinct");
  }
  if (mass_.size() != (std::size_t{1} << symbols_.size())) {
    throw ValidationError("joint model needs 2^n masses");
  }
  double total = 0.0;
  for (double p : mass_) {
    if (!(p >= 0.0)) throw ValidationError("joint model mass must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ValidationError("joint model mass sums to " + std::to_string(total));
  }
}

JointModel JointModel::uniform(std::vector<std::string> symbols) {
  std::sort(symbols.begin(), symbols.end());
  const std::size_t atoms = std::size_t{1} << symbols.size();
  return JointModel(std::move(symbols), std::vector<double>(atoms, 1.0 / atoms));
}

JointModel::AtomFilter JointModel::filter(const ConjEvent& event) const {
  AtomFilter f;
  for (const auto& literal : event.literals()) {
    auto it = std::lower_bound(symbols_.begin(), symbols_.end(), literal.symbol);
    if (it == symbols_.end() || *it != literal.symbol) {
      throw UnknownSymbolError("model has no symbol '" + literal.symbol + "'");
    }
    const auto bit = std::uint32_t{1} << (it - symbols_.begin());
    f.care |= bit;
    if (!literal.negated) f.value |= bit;
  }
  return f;
}

double JointModel::probability(const ConjEvent& event) const {
  const AtomFilter f = filter(event);
  double total = 0.0;
  for (std::uint32_t atom = 0; atom < mass_.size(); ++atom) {
    if (f.matches(atom)) total += mass_[atom];
  }
  return total;
}

std::optional<double> eval_conditional(const JointModel& model, const ConjEvent& a,
                                       const ConjEvent& b) {
  const double pa = model.probability(a);
  if (!(pa > 0.0)) return std::nullopt;
  return model.probability(conjoin(a, b)) / pa;
}

bool satisfies(const JointModel& model, const KnowledgeBase& kb,
               const FeasibilityTolerances& tol) {
  for (const auto& [key, entry] : kb.rules()) {
    const double pa = model.probability(key.antecedent);
    if (pa < tol.positivity) return false;
    const double p = model.probability(conjoin(key.antecedent, key.consequent)) / pa;
    if (p < entry.bounds.lo - tol.rule || p > entry.bounds.hi + tol.rule) return false;
  }
  for (const auto& [stmt, node] : kb.independences()) {
    const double pab = model.probability(conjoin(stmt.a(), stmt.b()));
    if (pab < tol.positivity) return false;
    const double pabc = model.probability(conjoin(conjoin(stmt.a(), stmt.b()), stmt.c()));
    const double pb = model.probability(stmt.b());
    const double pbc = model.probability(conjoin(stmt.b(), stmt.c()));
    if (std::abs(pabc * pb - pab * pbc) > tol.independence) return false;
  }
  return true;
}

namespace {

// At most 32 atoms; bounded vectors stay off the heap in the sampling loop.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 64, 1>;
using Mat = Eigen::MatrixXd;

// Constraint c . m >= r (inequality) or c . m == r (equality) over the free
// atoms.
struct Row {
  Vec c;
  double r = 0.0;
  double margin = 0.0;  // repair aims this far inside an inequality
};

// P(abc) P(b) - P(ab) P(bc) == 0.
struct IndepRow {
  Vec abc, b, ab, bc;

  double value(const Vec& m) const { return abc.dot(m) * b.dot(m) - ab.dot(m) * bc.dot(m); }
  Vec gradient(const Vec& m) const {
    return abc * b.dot(m) + b * abc.dot(m) - ab * bc.dot(m) - bc * ab.dot(m);
  }
};

constexpr double kPointWidth = 1e-9;  // narrower intervals become equalities
constexpr double kFloor = 1e-8;       // repaired samples keep every free atom above this
constexpr double kRepairMargin = 1e-7;
constexpr double kEqualityTol = 1e-12;
constexpr double kIndepTarget = 1e-9;

// The feasibility problem of a KB plus the query objective, restricted to
// atoms not forced to zero by the constraints.
struct Problem {
  std::vector<std::string> symbols;
  std::size_t atoms = 0;
  std::vector<int> free;  // free atom -> atom index
  std::vector<Row> equalities;
  std::vector<Row> inequalities;
  std::vector<IndepRow> independences;
  Vec numerator;    // P(ab) of the query
  Vec denominator;  // P(a)
  bool infeasible = false;

  // Equality subspace {m : affine m = affine_rhs}, its lifting matrix
  // A^T (A A^T)^+, the projector onto its tangent space, and each
  // inequality normal projected onto that tangent space.
  Mat affine;
  Vec affine_rhs;
  Mat lift;
  Mat tangent;
  std::vector<Vec> inequality_dirs;

  std::size_t size() const { return free.size(); }
  double objective(const Vec& m) const { return numerator.dot(m) / denominator.dot(m); }
  bool linear() const { return independences.empty(); }

  std::vector<double> expand(const Vec& m) const {
    std::vector<double> mass(atoms, 0.0);
    for (std::size_t i = 0; i < free.size(); ++i) mass[free[i]] = std::max(0.0, m[i]);
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    for (double& p : mass) p /= total;
    return mass;
  }
};

Vec indicator(const JointModel& shape, const ConjEvent& event) {
  const auto f = shape.filter(event);
  Vec v = Vec::Zero(static_cast<Eigen::Index>(shape.atom_count()));
  for (std::uint32_t atom = 0; atom < shape.atom_count(); ++atom) {
    if (f.matches(atom)) v[atom] = 1.0;
  }
  return v;
}

Problem build_problem(const KnowledgeBase& kb, const ConjEvent& a, const ConjEvent& b,
                      const FeasibilityTolerances& tol) {
  std::set<std::string> names = kb.symbols();
  for (const auto& literal : a.literals()) names.insert(literal.symbol);
  for (const auto& literal : b.literals()) names.insert(literal.symbol);
  if (names.size() > static_cast<std::size_t>(kMaxOracleSymbols)) {
    throw ValidationError("oracle supports at most 5 symbols, query needs " +
                          std::to_string(names.size()));
  }
  if (a.shares_symbol(b)) throw ValidationError("query events share a symbol");
  const JointModel shape = JointModel::uniform({names.begin(), names.end()});

  Problem p;
  p.symbols = shape.symbols();
  p.atoms = shape.atom_count();
  std::vector<Row> eq, ineq;
  std::vector<IndepRow> ind;
  const double delta = tol.positivity;
  for (const auto& [key, entry] : kb.rules()) {
    const ProbInterval& bounds = entry.bounds;
    if (bounds.empty()) {
      p.infeasible = true;
      return p;
    }
    const Vec x = indicator(shape, key.antecedent);
    const Vec xy = indicator(shape, conjoin(key.antecedent, key.consequent));
    ineq.push_back({x, delta, kRepairMargin});
    if (bounds.hi - bounds.lo <= kPointWidth) {
      const double mid = 0.5 * (bounds.lo + bounds.hi);
      eq.push_back({xy - mid * x, 0.0, 0.0});
      continue;
    }
    const double margin = std::min(kRepairMargin, 0.1 * (bounds.hi - bounds.lo));
    if (bounds.lo > 0.0) ineq.push_back({xy - bounds.lo * x, 0.0, margin});
    if (bounds.hi < 1.0) ineq.push_back({bounds.hi * x - xy, 0.0, margin});
  }
  for (const auto& [stmt, node] : kb.independences()) {
    const ConjEvent ab = conjoin(stmt.a(), stmt.b());
    IndepRow row{indicator(shape, conjoin(ab, stmt.c())), indicator(shape, stmt.b()),
                 indicator(shape, ab), indicator(shape, conjoin(stmt.b(), stmt.c()))};
    ineq.push_back({row.ab, delta, kRepairMargin});
    ind.push_back(std::move(row));
  }
  const Vec qa = indicator(shape, a);
  const Vec qab = indicator(shape, conjoin(a, b));
  ineq.push_back({qa, delta, kRepairMargin});

  // An equality with zero right-hand side and one-signed coefficients pins
  // its atoms to zero mass.
  std::vector<bool> zero(p.atoms, false);
  for (const auto& row : eq) {
    const bool nonneg = (row.c.array() >= 0.0).all();
    const bool nonpos = (row.c.array() <= 0.0).all();
    if (row.r == 0.0 && (nonneg || nonpos)) {
      for (std::size_t i = 0; i < p.atoms; ++i) {
        if (row.c[i] != 0.0) zero[i] = true;
      }
    }
  }
  for (std::size_t i = 0; i < p.atoms; ++i) {
    if (!zero[i]) p.free.push_back(static_cast<int>(i));
  }
  if (p.free.empty()) {
    p.infeasible = true;
    return p;
  }
  auto restrict = [&](const Vec& v) {
    Vec out(static_cast<Eigen::Index>(p.free.size()));
    for (std::size_t i = 0; i < p.free.size(); ++i) out[i] = v[p.free[i]];
    return out;
  };
  for (auto& row : eq) {
    Vec c = restrict(row.c);
    if (c.cwiseAbs().maxCoeff() == 0.0) continue;  // satisfied by the pinned atoms
    p.equalities.push_back({std::move(c), row.r, 0.0});
  }
  for (auto& row : ineq) {
    Vec c = restrict(row.c);
    if (c.cwiseAbs().maxCoeff() == 0.0) {
      if (row.r > 0.0) {
        p.infeasible = true;
        return p;
      }
      continue;
    }
    p.inequalities.push_back({std::move(c), row.r, row.margin});
  }
  for (auto& row : ind) {
    p.independences.push_back(
        {restrict(row.abc), restrict(row.b), restrict(row.ab), restrict(row.bc)});
  }
  p.numerator = restrict(qab);
  p.denominator = restrict(qa);

  const auto n = static_cast<Eigen::Index>(p.free.size());
  const auto k = static_cast<Eigen::Index>(p.equalities.size() + 1);
  p.affine.resize(k, n);
  p.affine_rhs.resize(k);
  p.affine.row(0).setOnes();
  p.affine_rhs[0] = 1.0;
  for (Eigen::Index i = 1; i < k; ++i) {
    p.affine.row(i) = p.equalities[i - 1].c.transpose();
    p.affine_rhs[i] = p.equalities[i - 1].r;
  }
  const Mat gram = p.affine * p.affine.transpose();
  p.lift = p.affine.transpose() * gram.completeOrthogonalDecomposition().pseudoInverse();
  p.tangent = Mat::Identity(n, n) - p.lift * p.affine;
  for (const auto& row : p.inequalities) p.inequality_dirs.push_back(p.tangent * row.c);
  return p;
}

// Exact projection onto the affine subspace of the linear equalities
// (including total mass 1): m - K (A m - r).
void project_affine(const Problem& p, Vec& m) { m -= p.lift * (p.affine * m - p.affine_rhs); }

bool repaired(const Problem& p, const Vec& m) {
  if (m.minCoeff() < kFloor * 0.5) return false;
  if (std::abs(m.sum() - 1.0) > kEqualityTol) return false;
  for (const auto& row : p.equalities) {
    if (std::abs(row.c.dot(m) - row.r) > kEqualityTol) return false;
  }
  for (const auto& row : p.inequalities) {
    if (row.c.dot(m) < row.r + 0.5 * row.margin) return false;
  }
  for (const auto& row : p.independences) {
    if (std::abs(row.value(m)) > kIndepTarget) return false;
  }
  return true;
}

// Cyclic projections onto the violated constraints, moving only inside the
// equality subspace so the equalities stay exact.
bool repair(const Problem& p, Vec& m, int max_iterations) {
  auto push = [&](const Vec& normal, const Vec& direction, double shortfall) {
    const double scale = normal.dot(direction);
    if (scale > 1e-14) m += (shortfall / scale) * direction;
  };
  for (int iter = 0; iter < max_iterations; ++iter) {
    project_affine(p, m);
    if (repaired(p, m)) return true;
    for (std::size_t k = 0; k < p.inequalities.size(); ++k) {
      const auto& row = p.inequalities[k];
      const double shortfall = row.r + row.margin - row.c.dot(m);
      if (shortfall > 0.0) push(row.c, p.inequality_dirs[k], shortfall);
    }
    for (const auto& row : p.independences) {
      const double h = row.value(m);
      if (std::abs(h) <= kIndepTarget) continue;
      const Vec g = row.gradient(m);
      push(g, p.tangent * g, -h);
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (m[i] >= kFloor) continue;
      const double scale = p.tangent(i, i);
      if (scale > 1e-14) m += ((kFloor - m[i]) / scale) * p.tangent.col(i);
    }
  }
  project_affine(p, m);
  return repaired(p, m);
}

// Feasible samples kept for refinement: the extremes in each direction.
struct Candidate {
  double value;
  std::size_t order;  // global draw index, for deterministic ties
  Vec m;
};

struct ChunkResult {
  std::size_t drawn = 0;
  std::size_t feasible = 0;
  Vec sum;
  std::vector<Candidate> lowest;
  std::vector<Candidate> highest;
};

void keep(std::vector<Candidate>& list, Candidate candidate, std::size_t limit, bool low) {
  auto before = [low](const Candidate& x, const Candidate& y) {
    if (x.value != y.value) return low ? x.value < y.value : x.value > y.value;
    return x.order < y.order;
  };
  list.insert(std::upper_bound(list.begin(), list.end(), candidate, before), std::move(candidate));
  if (list.size() > limit) list.pop_back();
}

ChunkResult sample_chunk(const Problem& p, std::uint64_t seed, std::size_t chunk,
                         std::size_t first, std::size_t count, std::size_t keep_count) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chunk)};
  std::mt19937_64 rng(seq);
  std::exponential_distribution<double> exponential(1.0);
  ChunkResult out;
  out.sum = Vec::Zero(static_cast<Eigen::Index>(p.size()));
  Vec m(static_cast<Eigen::Index>(p.size()));
  for (std::size_t k = 0; k < count; ++k) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = exponential(rng);
    m /= m.sum();
    ++out.drawn;
    if (!repair(p, m, 60)) continue;
    ++out.feasible;
    out.sum += m;
    const double value = p.objective(m);
    keep(out.lowest, {value, first + k, m}, keep_count, true);
    keep(out.highest, {value, first + k, m}, keep_count, false);
  }
  return out;
}

double barrier_value(const Problem& p, const Vec& c, double mu, const Vec& m) {
  double value = c.dot(m);
  for (const auto& row : p.inequalities) {
    const double s = row.c.dot(m) - row.r;
    if (!(s > 0.0)) return -std::numeric_limits<double>::infinity();
    value += mu * std::log(s);
  }
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!(m[i] > 0.0)) return -std::numeric_limits<double>::infinity();
    value += mu * std::log(m[i]);
  }
  return value;
}

bool independences_hold(const Problem& p, const Vec& m, double tol) {
  for (const auto& row : p.independences) {
    if (std::abs(row.value(m)) > tol) return false;
  }
  return true;
}

// Maximizes c . m with a logarithmic barrier on the inequalities and atom
// masses, following the barrier path down with damped Newton steps. Linear
// equalities and the linearized independence equalities enter the Newton
// system; steps keep every slack positive.
Vec barrier_ascent(const Problem& p, const Vec& c, Vec m) {
  const auto n = static_cast<Eigen::Index>(p.size());
  const auto n_eq = static_cast<Eigen::Index>(1 + p.equalities.size() + p.independences.size());
  const double indep_tol = 1e-8;
  for (double mu = 1e-3; mu > 1e-13; mu *= 0.1) {
    for (int iter = 0; iter < 50; ++iter) {
      Vec grad = c;
      Mat hess = Mat::Zero(n, n);
      for (const auto& row : p.inequalities) {
        const double s = row.c.dot(m) - row.r;
        grad += (mu / s) * row.c;
        hess += (mu / (s * s)) * row.c * row.c.transpose();
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        grad[i] += mu / m[i];
        hess(i, i) += mu / (m[i] * m[i]);
      }
      Mat kkt = Mat::Zero(n + n_eq, n + n_eq);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + n_eq);
      kkt.topLeftCorner(n, n) = hess;
      rhs.head(n) = grad;
      Eigen::Index k = n;
      auto add_equality = [&](const Vec& row, double residual) {
        kkt.block(k, 0, 1, n) = row.transpose();
        kkt.block(0, k, n, 1) = row;
        rhs[k] = -residual;
        ++k;
      };
      add_equality(Vec::Ones(n), m.sum() - 1.0);
      for (const auto& row : p.equalities) add_equality(row.c, row.c.dot(m) - row.r);
      for (const auto& row : p.independences) add_equality(row.gradient(m), row.value(m));
      const Eigen::VectorXd solution = kkt.completeOrthogonalDecomposition().solve(rhs);
      const Vec d = solution.head(n);
      if (!d.allFinite()) break;
      const double decrement = grad.dot(d);
      if (decrement < 1e-15) break;

      const double current = barrier_value(p, c, mu, m);
      double t = 1.0;
      bool moved = false;
      while (t > 1e-10) {
        const Vec trial = m + t * d;
        const double value = barrier_value(p, c, mu, trial);
        if (std::isfinite(value) && value >= current + 1e-4 * t * decrement &&
            independences_hold(p, trial, indep_tol)) {
          m = trial;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved) break;
    }
  }
  return m;
}

// Dinkelbach iteration: the extreme of the ratio P(ab)/P(a) is the root of
// the parametric linear problem max sign * (P(ab) - lambda P(a)).
Vec refine(const Problem& p, Vec m, bool maximize) {
  const double sign = maximize ? 1.0 : -1.0;
  double lambda = p.objective(m);
  for (int outer = 0; outer < 30; ++outer) {
    const Vec c = sign * (p.numerator - lambda * p.denominator);
    const Vec next = barrier_ascent(p, c, m);
    const double value = p.objective(next);
    if (!(sign * (value - lambda) > 1e-13)) {
      if (sign * (value - lambda) > 0.0) m = next;
      break;
    }
    m = next;
    lambda = value;
  }
  return m;
}

}  // namespace

OracleReport estimate_range(const KnowledgeBase& kb, const ConjEvent& a, const ConjEvent& b,
                            const OracleOptions& options) {
  const Problem p = build_problem(kb, a, b, options.tolerances);
  OracleReport report;
  report.achieved_min = report.achieved_max = std::numeric_limits<double>::quiet_NaN();
  if (p.infeasible) return report;

  // Fixed chunking keeps the draws independent of the worker count.
  constexpr std::size_t kChunks = 16;
  const std::size_t keep_count = static_cast<std::size_t>(std::max(1, options.refine_starts));
  std::vector<ChunkResult> chunks(kChunks);
  auto run_chunk = [&](std::size_t i) {
    const std::size_t first = options.budget * i / kChunks;
    const std::size_t last = options.budget * (i + 1) / kChunks;
    chunks[i] = sample_chunk(p, options.seed, i, first, last - first, keep_count);
  };
  unsigned workers = options.workers > 0 ? static_cast<unsigned>(options.workers)
                                         : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, kChunks);
  if (workers <= 1) {
    for (std::size_t i = 0; i < kChunks; ++i) run_chunk(i);
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        for (std::size_t i = w; i < kChunks; i += workers) run_chunk(i);
      });
    }
    for (auto& thread : threads) thread.join();
  }

  std::vector<Candidate> lowest, highest;
  Vec sum = Vec::Zero(static_cast<Eigen::Index>(p.size()));
  for (auto& chunk : chunks) {
    report.samples_used += chunk.drawn;
    report.feasible_samples += chunk.feasible;
    sum += chunk.sum;
    for (auto& cand : chunk.lowest) keep(lowest, std::move(cand), keep_count, true);
    for (auto& cand : chunk.highest) keep(highest, std::move(cand), keep_count, false);
  }
  if (report.feasible_samples == 0) return report;
  report.feasible_found = true;

  // With linear constraints the feasible set is convex, so pulling a start
  // toward the mean of all feasible samples keeps it feasible and away from
  // the boundary, which the barrier needs.
  const Vec mean = sum / static_cast<double>(report.feasible_samples);
  auto start_from = [&](const Vec& m) -> Vec {
    if (!p.linear()) return m;
    Vec blended = 0.5 * m + 0.5 * mean;
    return repaired(p, blended) ? blended : m;
  };

  auto accept = [&](const Vec& m) -> std::optional<JointModel> {
    if (!m.allFinite() || m.minCoeff() < 0.0) return std::nullopt;
    JointModel model(p.symbols, p.expand(m));
    if (!satisfies(model, kb, options.tolerances)) return std::nullopt;
    if (model.probability(a) < options.tolerances.positivity) return std::nullopt;
    return model;
  };

  auto search = [&](const std::vector<Candidate>& starts, bool maximize) {
    std::optional<JointModel> best;
    double best_value = 0.0;
    auto consider = [&](const Vec& m) {
      auto model = accept(m);
      if (!model) return;
      const double value = *eval_conditional(*model, a, b);
      if (!best || (maximize ? value > best_value : value < best_value)) {
        best = std::move(model);
        best_value = value;
      }
    };
    for (const auto& start : starts) {
      consider(start.m);
      consider(refine(p, start_from(start.m), maximize));
    }
    return std::pair(std::move(best), best_value);
  };

  auto [min_model, min_value] = search(lowest, false);
  auto [max_model, max_value] = search(highest, true);
  if (!min_model || !max_model) {
    report.feasible_found = false;
    return report;
  }
  report.achieved_min = min_value;
  report.achieved_max = max_value;
  report.min_witness = std::move(min_model);
  report.max_witness = std::move(max_model);
  return report;
}

JointModel random_network_model(std::vector<std::string> symbols, std::uint64_t seed) {
  const std::size_t n = symbols.size();
  if (n > static_cast<std::size_t>(kMaxOracleSymbols)) {
    throw ValidationError("joint models support at most 5 symbols");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> cpt(0.1, 0.9);
  std::bernoulli_distribution coin(0.5);

  // parents[i] are indices into `symbols` (network order).
  std::vector<std::vector<std::size_t>> parents(n);
  std::vector<std::vector<double>> table(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i && parents[i].size() < 2; ++j) {
      if (coin(rng)) parents[i].push_back(j);
    }
    table[i].resize(std::size_t{1} << parents[i].size());
    for (double& entry : table[i]) entry = cpt(rng);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return symbols[x] < symbols[y];
  });
  // position[i]: bit of network node i in the sorted atom index.
  std::vector<std::size_t> position(n);
  for (std::size_t k = 0; k < n; ++k) position[order[k]] = k;

  std::vector<double> mass(std::size_t{1} << n, 0.0);
  for (std::uint32_t atom = 0; atom < mass.size(); ++atom) {
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t row = 0;
      for (std::size_t k = 0; k < parents[i].size(); ++k) {
        if (atom >> position[parents[i][k]] & 1U) row |= std::size_t{1} << k;
      }
      const double on = table[i][row];
      p *= (atom >> position[i] & 1U) ? on : 1.0 - on;
    }
    mass[atom] = p;
  }
  // Products can leave the total a few ulps off 1.
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (double& p : mass) p /= total;
  std::vector<std::string> sorted;
  for (std::size_t k : order) sorted.push_back(symbols[k]);
  return JointModel(std::move(sorted), std::move(mass));
}

namespace {

// Every event over `symbols` with width 1..max_width.
std::vector<ConjEvent> all_events(const std::vector<std::string>& symbols, int max_width) {
  std::vector<ConjEvent> events;
  const std::size_t n = symbols.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 3;
  for (std::size_t code = 1; code < total; ++code) {
    std::vector<Literal> literals;
    std::size_t rest = code;
    for (std::size_t i = 0; i < n; ++i, rest /= 3) {
      if (rest % 3 == 1) literals.push_back(pos(symbols[i]));
      if (rest % 3 == 2) literals.push_back(neg(symbols[i]));
    }
    if (!literals.empty() && static_cast<int>(literals.size()) <= max_width) {
      events.push_back(ConjEvent::canonicalize(std::move(literals)));
    }
  }
  std::sort(events.begin(), events.end());
  return events;
}

}  // namespace

KnowledgeBase random_kb_from_model(const JointModel& model, double slack, std::uint64_t seed,
                                   const RandomKbOptions& options) {
  if (!(slack >= 0.0 && slack < 1.0)) throw ValidationError("slack must lie in [0, 1)");
  const auto& symbols = model.symbols();
  const int n = static_cast<int>(symbols.size());
  KnowledgeBase kb;
  if (n < 2) return kb;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> rule_count(options.min_rules, options.max_rules);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution reverse(options.reverse_probability);

  auto widen = [&](double p) {
    return ProbInterval{std::max(0.0, p - unit(rng) * slack), std::min(1.0, p + unit(rng) * slack)};
  };
  auto random_event = [&](std::vector<std::string>::const_iterator first, int width) {
    std::vector<Literal> literals;
    for (int i = 0; i < width; ++i, ++first) {
      literals.push_back(Literal{*first, coin(rng)});
    }
    return ConjEvent::canonicalize(std::move(literals));
  };

  const int rules = rule_count(rng);
  std::vector<std::string> shuffled = symbols;
  for (int made = 0, attempts = 0; made < rules && attempts < 100 * rules; ++attempts) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const int max_width = std::max(1, std::min(options.max_event_width, n - 1));
    const int w1 = std::uniform_int_distribution<int>(1, max_width)(rng);
    const int w2 =
        std::uniform_int_distribution<int>(1, std::max(1, std::min(options.max_event_width, n - w1)))(rng);
    const ConjEvent ant = random_event(shuffled.begin(), w1);
    const ConjEvent cons = random_event(shuffled.begin() + w1, w2);
    const double pa = model.probability(ant);
    const double pc = model.probability(cons);
    if (!(pa > 1e-9)) continue;
    const double joint = model.probability(conjoin(ant, cons));
    const ProbInterval forward = widen(joint / pa);
    if (pc > 1e-9 && reverse(rng)) {
      const ProbInterval backward = widen(joint / pc);
      if ((forward.hi == 0.0) == (backward.hi == 0.0)) {
        kb.insert(BidirRule(ant, cons, forward, backward));
        ++made;
        continue;
      }
    }
    kb.insert(UncertainRule(ant, cons, forward));
    ++made;
  }

  if (options.max_independences > 0) {
    const auto events = all_events(symbols, options.max_event_width);
    std::vector<IndepStmt> found;
    for (const auto& bev : events) {
      const double pb = model.probability(bev);
      for (const auto& aev : events) {
        if (aev.shares_symbol(bev)) continue;
        const ConjEvent ab = conjoin(aev, bev);
        const double pab = model.probability(ab);
        if (!(pab > 1e-9)) continue;
        for (const auto& cev : events) {
          if (cev.shares_symbol(ab)) continue;
          const double lhs = model.probability(conjoin(ab, cev)) / pab;
          const double rhs = model.probability(conjoin(bev, cev)) / pb;
          if (std::abs(lhs - rhs) <= 1e-12) found.emplace_back(aev, bev, cev);
        }
      }
    }
    std::shuffle(found.begin(), found.end(), rng);
    // Prefer statements whose complement partner I(a, !b, c) also holds, so
    // chaining under independence has something to work with.
    const std::set<IndepStmt> all(found.begin(), found.end());
    std::stable_partition(found.begin(), found.end(), [&](const IndepStmt& s) {
      if (s.b().width() != 1) return false;
      const ConjEvent nb = ConjEvent::of(s.b().literals()[0].complement());
      return all.contains(IndepStmt(s.a(), nb, s.c()));
    });
    const std::size_t limit =
        std::min(found.size(), static_cast<std::size_t>(options.max_independences));
    for (std::size_t i = 0; i < limit; ++i) kb.insert(found[i]);
  }
  return kb;
}

}  // namespace duck
