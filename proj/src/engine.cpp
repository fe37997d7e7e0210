#include "duck/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <unordered_map>

namespace duck {

namespace {

NodePtr make_axiom(Statement statement) {
  return std::make_shared<const DerivationNode>(
      DerivationNode{DerivationNode::Kind::kAxiom, std::nullopt, std::move(statement), {}});
}

NodePtr make_sharpened(const UncertainRule& rule, NodePtr lower, NodePtr upper) {
  return std::make_shared<const DerivationNode>(DerivationNode{
      DerivationNode::Kind::kSharpened, RuleId::kI2, rule, {std::move(lower), std::move(upper)}});
}

const ProbInterval& node_bounds(const NodePtr& node) {
  return std::get<UncertainRule>(node->statement).bounds();
}

void check_symbols(const std::set<std::string>& known, const ConjEvent& event) {
  for (const auto& literal : event.literals()) {
    if (!known.contains(literal.symbol)) {
      throw UnknownSymbolError("unknown symbol '" + literal.symbol + "'");
    }
  }
}

}  // namespace

std::string DerivationNode::label() const {
  switch (kind) {
    case Kind::kAxiom:
      return "axiom";
    case Kind::kAssumed:
      return "assumed";
    case Kind::kSharpened:
      return "I2";
    case Kind::kDerived:
      break;
  }
  return rule ? std::string(to_string(*rule)) : "?";
}

std::set<RuleId> DerivationTrace::rules_used() const {
  std::set<RuleId> used;
  std::set<const DerivationNode*> seen;
  std::vector<const DerivationNode*> stack;
  if (root) stack.push_back(root.get());
  while (!stack.empty()) {
    const auto* node = stack.back();
    stack.pop_back();
    if (!seen.insert(node).second) continue;
    if (node->kind == DerivationNode::Kind::kSharpened) used.insert(RuleId::kI2);
    if (node->kind == DerivationNode::Kind::kDerived && node->rule) used.insert(*node->rule);
    for (const auto& premise : node->premises) stack.push_back(premise.get());
  }
  return used;
}

std::size_t DerivationTrace::axiom_count() const {
  std::size_t count = 0;
  std::set<const DerivationNode*> seen;
  std::vector<const DerivationNode*> stack;
  if (root) stack.push_back(root.get());
  while (!stack.empty()) {
    const auto* node = stack.back();
    stack.pop_back();
    if (!seen.insert(node).second) continue;
    if (node->kind == DerivationNode::Kind::kAxiom) ++count;
    for (const auto& premise : node->premises) stack.push_back(premise.get());
  }
  return count;
}

namespace {

std::string statement_text(const Statement& statement, int digits) {
  if (const auto* rule = std::get_if<UncertainRule>(&statement)) return rule->to_string(digits);
  return std::get<IndepStmt>(statement).to_string();
}

void render_human(const DerivationNode* node, int depth,
                  std::map<const DerivationNode*, int>& ids, std::string& out) {
  out.append(static_cast<std::size_t>(depth) * 2, ' ');
  if (auto it = ids.find(node); it != ids.end()) {
    out += "#" + std::to_string(it->second) + " (see above)\n";
    return;
  }
  const int id = static_cast<int>(ids.size()) + 1;
  ids.emplace(node, id);
  out += "#" + std::to_string(id) + " " + statement_text(node->statement, 6) + "  [" +
         node->label() + "]\n";
  for (const auto& premise : node->premises) render_human(premise.get(), depth + 1, ids, out);
}

int render_machine(const DerivationNode* node, std::map<const DerivationNode*, int>& ids,
                   std::string& out) {
  if (auto it = ids.find(node); it != ids.end()) return it->second;
  std::vector<int> premise_ids;
  for (const auto& premise : node->premises) {
    premise_ids.push_back(render_machine(premise.get(), ids, out));
  }
  const int id = static_cast<int>(ids.size()) + 1;
  ids.emplace(node, id);
  out += "trace id=" + std::to_string(id) + " rule=" + node->label() + " statement=\"" +
         statement_text(node->statement, 0) + "\" premises=";
  for (std::size_t i = 0; i < premise_ids.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(premise_ids[i]);
  }
  out += "\n";
  return id;
}

}  // namespace

std::string DerivationTrace::render(TraceFormat format) const {
  std::string out;
  if (!root) return out;
  std::map<const DerivationNode*, int> ids;
  if (format == TraceFormat::kHuman) {
    render_human(root.get(), 0, ids, out);
  } else {
    render_machine(root.get(), ids, out);
  }
  return out;
}

std::string conditional_text(const ConjEvent& antecedent, const ConjEvent& consequent) {
  return "P(" + consequent.to_string() + " | " + antecedent.to_string() + ")";
}

std::string InconsistencyReport::describe() const {
  std::string out = "inconsistent bounds on " + conditional_text(key.antecedent, key.consequent) +
                    ": " + existing.to_string() + " vs " + incoming.to_string() + "\n";
  out += "existing:\n";
  out += existing_trace.empty() ? "  (no prior bound)\n" : existing_trace.render(TraceFormat::kHuman);
  out += "incoming:\n";
  out += incoming_trace.render(TraceFormat::kHuman);
  return out;
}

void KnowledgeBase::add_symbols(const ConjEvent& event) {
  for (const auto& literal : event.literals()) symbols_.insert(literal.symbol);
}

std::optional<InconsistencyReport> KnowledgeBase::insert(const UncertainRule& rule) {
  if (!rule.bounds().valid()) {
    throw ValidationError("rule " + rule.to_string() + " needs 0 <= lo <= hi <= 1");
  }
  add_symbols(rule.antecedent());
  add_symbols(rule.consequent());
  NodePtr node = make_axiom(rule);
  RuleKey key{rule.antecedent(), rule.consequent()};
  auto it = rules_.find(key);
  if (it == rules_.end()) {
    rules_.emplace(std::move(key), Entry{rule.bounds(), node, node, node});
    return std::nullopt;
  }
  Entry& entry = it->second;
  const ProbInterval& in = rule.bounds();
  // Ties go to the smaller interval so the kept axiom does not depend on
  // insertion order.
  auto better_lower = [&](const NodePtr& current) {
    const auto& cur = node_bounds(current);
    return in.lo > cur.lo || (in.lo == cur.lo && std::pair(in.lo, in.hi) < std::pair(cur.lo, cur.hi));
  };
  auto better_upper = [&](const NodePtr& current) {
    const auto& cur = node_bounds(current);
    return in.hi < cur.hi || (in.hi == cur.hi && std::pair(in.lo, in.hi) < std::pair(cur.lo, cur.hi));
  };
  const ProbInterval before = entry.bounds;
  const NodePtr before_node = entry.node;
  if (better_lower(entry.lower)) entry.lower = node;
  if (better_upper(entry.upper)) entry.upper = node;
  entry.bounds = interval_meet(before, in);
  entry.node = entry.lower == entry.upper
                   ? entry.lower
                   : make_sharpened(rule.with_bounds(entry.bounds), entry.lower, entry.upper);
  if (entry.bounds.empty()) {
    InconsistencyReport report{it->first, before, in, {before_node}, {node}};
    if (!inconsistency_) inconsistency_ = report;
    return report;
  }
  return std::nullopt;
}

std::optional<InconsistencyReport> KnowledgeBase::insert(const BidirRule& rule) {
  auto first = insert(rule.forward_rule());
  auto second = insert(rule.backward_rule());
  pairings_.insert(RuleKey{rule.a(), rule.b()});
  return first ? first : second;
}

void KnowledgeBase::insert(const IndepStmt& statement) {
  add_symbols(statement.a());
  add_symbols(statement.b());
  add_symbols(statement.c());
  independences_.try_emplace(statement, make_axiom(statement));
}

std::optional<ProbInterval> KnowledgeBase::find(const ConjEvent& antecedent,
                                                const ConjEvent& consequent) const {
  auto it = rules_.find(RuleKey{antecedent, consequent});
  if (it == rules_.end()) return std::nullopt;
  return it->second.bounds;
}

QueryAnswer KnowledgeBase::query(const ConjEvent& antecedent, const ConjEvent& consequent) const {
  check_symbols(symbols_, antecedent);
  check_symbols(symbols_, consequent);
  if (antecedent.shares_symbol(consequent)) {
    throw ValidationError("query " + conditional_text(antecedent, consequent) +
                          " mentions a symbol on both sides");
  }
  auto it = rules_.find(RuleKey{antecedent, consequent});
  if (it == rules_.end()) return {ProbInterval::vacuous(), {}};
  return {it->second.bounds, {it->second.node}};
}

std::size_t KnowledgeBase::max_event_width() const {
  std::size_t width = 0;
  for (const auto& [key, entry] : rules_) {
    width = std::max({width, key.antecedent.width(), key.consequent.width()});
  }
  for (const auto& [stmt, node] : independences_) {
    width = std::max({width, stmt.a().width(), stmt.b().width(), stmt.c().width()});
  }
  return width;
}

std::set<RuleId> default_enabled_rules() {
  std::set<RuleId> rules(std::begin(kAllRuleIds), std::end(kAllRuleIds));
  rules.erase(RuleId::kRC);
  return rules;
}

std::string_view to_string(SaturationStatus status) {
  switch (status) {
    case SaturationStatus::kFixpoint:
      return "fixpoint";
    case SaturationStatus::kRoundLimit:
      return "round-limit";
    case SaturationStatus::kInconsistent:
      return "inconsistent";
  }
  return "?";
}

// Saturation works on a compact encoding: symbol i (in name order) owns bit i
// for the positive literal and bit 32 + i for the negated one, so an event is
// a 64-bit mask and conjunction of disjoint events is bitwise or.
namespace {

using Ev = std::uint64_t;
constexpr Ev kLow = 0xffffffffULL;

Ev symbols_of(Ev e) { return (e | (e >> 32)) & kLow; }
bool disjoint(Ev a, Ev b) { return (symbols_of(a) & symbols_of(b)) == 0; }
int width_of(Ev e) { return std::popcount(e); }
Ev complement_of(Ev literal) { return literal <= kLow ? literal << 32 : literal >> 32; }
bool contains_all(Ev outer, Ev inner) { return (outer & inner) == inner; }

struct Key {
  Ev ant;
  Ev cons;
  auto operator<=>(const Key&) const = default;
};

struct Triple {
  Ev a;
  Ev b;
  Ev c;
  auto operator<=>(const Triple&) const = default;
};

struct INode;
using INodePtr = std::shared_ptr<const INode>;

struct INode {
  DerivationNode::Kind kind = DerivationNode::Kind::kDerived;
  RuleId rule = RuleId::kI2;
  bool indep = false;
  Triple events{};  // rules use a = antecedent, c = consequent
  ProbInterval bounds;
  std::vector<INodePtr> premises;
  NodePtr external;  // set for nodes carried over from the input KB
};

struct Slot {
  ProbInterval bounds;
  INodePtr lower;
  INodePtr upper;
  mutable INodePtr combined;
};

bool certain(const ProbInterval& p) { return p.lo == 1.0 && p.hi == 1.0; }

bool narrows(const ProbInterval& incoming, const ProbInterval& current) {
  return incoming.lo > current.lo || incoming.hi < current.hi;
}

}  // namespace

class Saturator {
 public:
  Saturator(const KnowledgeBase& kb, const SaturationConfig& config);
  SaturationResult run(const RoundObserver& observer);

 private:
  // A premise is a store slot, an independence node, or a stand-in for a
  // missing direction of a pair.
  struct Prem {
    const Slot* slot = nullptr;
    INodePtr node;
    Key assumed_key{};
    ProbInterval assumed_bounds;
  };
  struct Pending {
    Key key;
    ProbInterval bounds;
    INodePtr node;
  };
  struct PendingIndep {
    Triple stmt;
    INodePtr node;
  };

  Ev encode(const ConjEvent& event) const;
  const ConjEvent& decode(Ev e);
  const Slot* get(Ev ant, Ev cons) const;
  Prem slot_prem(const Slot* slot) const { return Prem{slot, nullptr, {}, {}}; }
  Prem assumed_prem(Key key, ProbInterval bounds) const { return Prem{nullptr, nullptr, key, bounds}; }
  INodePtr resolve(const Prem& prem) const;
  INodePtr combined(const Key& key, const Slot& slot) const;

  bool enabled(RuleId id) const { return enabled_[static_cast<std::size_t>(id)]; }
  void emit(RuleId id, Key key, ProbInterval bounds, std::initializer_list<Prem> premises);
  void emit_indep(Triple stmt, std::initializer_list<Prem> premises);

  void fire_key(const Key& key);
  void fire_pivot(Ev pivot);
  void fire_indep(const Triple& stmt, const INodePtr& node);

  bool merge(std::set<Key>& changed, std::set<Triple>& new_indeps);
  void add_slot(const Key& key, Slot slot);

  NodePtr publish(const INodePtr& node);
  DerivationTrace publish_trace(const INodePtr& node) { return {node ? publish(node) : nullptr}; }
  KnowledgeBase write_back();
  std::map<RuleKey, ProbInterval> snapshot();

  const KnowledgeBase& source_;
  SaturationConfig config_;
  std::vector<bool> enabled_;
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
  std::unordered_map<Ev, ConjEvent> decoded_;

  std::map<Key, Slot> store_;
  std::unordered_map<Ev, std::vector<Ev>> by_ant_;   // antecedent -> consequents
  std::unordered_map<Ev, std::vector<Ev>> by_cons_;  // consequent -> antecedents
  std::map<Triple, INodePtr> indeps_;

  std::vector<Pending> pending_;
  std::vector<PendingIndep> pending_indeps_;
  std::optional<InconsistencyReport> report_;
  std::unordered_map<const INode*, NodePtr> published_;
  std::size_t initial_size_ = 0;
  Ev universe_ = 0;  // one bit per symbol
};

Saturator::Saturator(const KnowledgeBase& kb, const SaturationConfig& config)
    : source_(kb), config_(config), enabled_(std::size(kAllRuleIds), false) {
  if (config.max_width < 1 || config.max_rounds < 1 || !(config.epsilon >= 0.0) ||
      !(config.noise_tolerance >= 0.0)) {
    throw ValidationError("saturation needs max_width >= 1, max_rounds >= 1, epsilon >= 0");
  }
  if (kb.symbols().size() > 32) {
    throw ValidationError("saturation supports at most 32 symbols, KB has " +
                          std::to_string(kb.symbols().size()));
  }
  if (kb.max_event_width() > static_cast<std::size_t>(config.max_width)) {
    throw ValidationError("KB contains an event of width " + std::to_string(kb.max_event_width()) +
                          ", above max_width " + std::to_string(config.max_width));
  }
  for (RuleId id : config.enabled_rules) enabled_[static_cast<std::size_t>(id)] = true;
  for (const auto& name : kb.symbols()) {
    index_.emplace(name, static_cast<int>(names_.size()));
    names_.push_back(name);
  }
  universe_ = names_.size() == 32 ? kLow : (Ev{1} << names_.size()) - 1;

  std::unordered_map<const DerivationNode*, INodePtr> wrapped;
  auto wrap = [&](const NodePtr& node, Key key) {
    auto [it, fresh] = wrapped.try_emplace(node.get());
    if (fresh) {
      auto inode = std::make_shared<INode>();
      inode->kind = node->kind;
      inode->events = {key.ant, 0, key.cons};
      inode->bounds = node_bounds(node);
      inode->external = node;
      it->second = std::move(inode);
    }
    return it->second;
  };
  for (const auto& [rule_key, entry] : kb.rules()) {
    Key key{encode(rule_key.antecedent), encode(rule_key.consequent)};
    Slot slot{entry.bounds, wrap(entry.lower, key), wrap(entry.upper, key), nullptr};
    slot.combined = wrap(entry.node, key);
    add_slot(key, std::move(slot));
  }
  for (const auto& [stmt, node] : kb.independences()) {
    auto inode = std::make_shared<INode>();
    inode->kind = node->kind;
    inode->indep = true;
    inode->events = {encode(stmt.a()), encode(stmt.b()), encode(stmt.c())};
    inode->external = node;
    indeps_.emplace(inode->events, inode);
  }
  initial_size_ = store_.size();
}

Ev Saturator::encode(const ConjEvent& event) const {
  Ev e = 0;
  for (const auto& literal : event.literals()) {
    const int bit = index_.at(literal.symbol);
    e |= (Ev{1} << bit) << (literal.negated ? 32 : 0);
  }
  return e;
}

const ConjEvent& Saturator::decode(Ev e) {
  auto it = decoded_.find(e);
  if (it != decoded_.end()) return it->second;
  std::vector<Literal> literals;
  for (Ev rest = e; rest != 0; rest &= rest - 1) {
    const int bit = std::countr_zero(rest);
    literals.push_back(bit < 32 ? pos(names_[bit]) : neg(names_[bit - 32]));
  }
  return decoded_.emplace(e, ConjEvent::canonicalize(std::move(literals))).first->second;
}

const Slot* Saturator::get(Ev ant, Ev cons) const {
  auto it = store_.find(Key{ant, cons});
  return it == store_.end() ? nullptr : &it->second;
}

INodePtr Saturator::combined(const Key& key, const Slot& slot) const {
  if (slot.combined) return slot.combined;
  if (slot.lower == slot.upper) {
    slot.combined = slot.lower;
  } else {
    auto node = std::make_shared<INode>();
    node->kind = DerivationNode::Kind::kSharpened;
    node->events = {key.ant, 0, key.cons};
    node->bounds = slot.bounds;
    node->premises = {slot.lower, slot.upper};
    slot.combined = std::move(node);
  }
  return slot.combined;
}

INodePtr Saturator::resolve(const Prem& prem) const {
  if (prem.node) return prem.node;
  if (prem.slot) {
    // Slot addresses are stable while a round fires; recover the key from
    // the combined node or the lower node.
    const INode& any = *prem.slot->lower;
    return combined(Key{any.events.a, any.events.c}, *prem.slot);
  }
  auto node = std::make_shared<INode>();
  node->kind = DerivationNode::Kind::kAssumed;
  node->events = {prem.assumed_key.ant, 0, prem.assumed_key.cons};
  node->bounds = prem.assumed_bounds;
  return node;
}

void Saturator::emit(RuleId id, Key key, ProbInterval z, std::initializer_list<Prem> premises) {
  if (!enabled(id)) return;
  if (key.ant == 0 || key.cons == 0 || !disjoint(key.ant, key.cons)) return;
  if (width_of(key.ant) > config_.max_width || width_of(key.cons) > config_.max_width) return;
  if (std::isnan(z.lo) || std::isnan(z.hi)) return;
  if (z.lo > z.hi && z.lo - z.hi <= config_.noise_tolerance) z.lo = z.hi;
  if (!z.empty()) {
    z.lo = std::clamp(z.lo, 0.0, 1.0);
    z.hi = std::clamp(z.hi, 0.0, 1.0);
    if (z.is_vacuous()) return;
  }
  const Slot* current = get(key.ant, key.cons);
  if (current && !z.empty() && !narrows(z, current->bounds)) return;

  auto node = std::make_shared<INode>();
  node->rule = id;
  node->events = {key.ant, 0, key.cons};
  node->bounds = z;
  node->premises.reserve(premises.size());
  for (const auto& prem : premises) node->premises.push_back(resolve(prem));
  pending_.push_back({key, z, std::move(node)});
}

void Saturator::emit_indep(Triple stmt, std::initializer_list<Prem> premises) {
  if (!enabled(RuleId::kI12) || indeps_.contains(stmt)) return;
  auto node = std::make_shared<INode>();
  node->rule = RuleId::kI12;
  node->indep = true;
  node->events = stmt;
  for (const auto& prem : premises) node->premises.push_back(resolve(prem));
  pending_indeps_.push_back({stmt, std::move(node)});
}

// Every rule instance in which the entry `key` is one of the premises.
void Saturator::fire_key(const Key& key) {
  const Slot* self = get(key.ant, key.cons);
  const Ev a = key.ant;
  const Ev x_ev = key.cons;
  const ProbInterval x = self->bounds;
  const Prem me = slot_prem(self);
  const int x_width = width_of(x_ev);

  // I1a: key is A -> F C (or A -> !F C) and the other polarity is stored.
  if (x_width >= 2) {
    for (Ev rest = x_ev; rest != 0; rest &= rest - 1) {
      const Ev f = rest & (~rest + 1);
      const Ev c = x_ev & ~f;
      if (const Slot* other = get(a, c | complement_of(f))) {
        emit(RuleId::kI1a, {a, c}, bounds::chain_split(x, other->bounds), {me, slot_prem(other)});
      }
    }
  }

  // Rules that split the consequent into B (sub) and C (x_ev \ sub).
  if (x_width >= 2) {
    for (Ev sub = (x_ev - 1) & x_ev; sub != 0; sub = (sub - 1) & x_ev) {
      const Ev rest = x_ev & ~sub;
      if (x.lo > 0.0) emit(RuleId::kI1b, {a, sub}, bounds::chain_relax(x), {me});
      // I1c: A -> B C with C -> [1,1] B.
      if (const Slot* t = get(rest, sub); t && certain(t->bounds)) {
        emit(RuleId::kI1c, {a, rest}, x, {me, slot_prem(t)});
      }
      if (const Slot* t = get(a, sub)) {
        // I1d: A -> B C with A -> [1,1] B.
        if (certain(t->bounds)) emit(RuleId::kI1d, {a, rest}, x, {me, slot_prem(t)});
        // I3: A -> B and A -> B C.
        if (t->bounds.lo > 0.0) {
          emit(RuleId::kI3, {a | sub, rest}, bounds::conjunction_left(t->bounds, x),
               {slot_prem(t), me});
        }
      }
      // I8 with key as A -> F C: F is a single literal.
      if (width_of(sub) == 1) {
        if (const Slot* t = get(a, rest)) {
          emit(RuleId::kI8, {a, rest | complement_of(sub)},
               bounds::conjunction_right_negation(t->bounds, x), {slot_prem(t), me});
        }
      }
    }
  }

  // I1c with key as C -> [1,1] B: every A -> B C.
  if (certain(x)) {
    if (auto it = by_cons_.find(x_ev | a); it != by_cons_.end()) {
      for (Ev other_ant : it->second) {
        const Slot* t = get(other_ant, x_ev | a);
        emit(RuleId::kI1c, {other_ant, a}, t->bounds, {slot_prem(t), me});
      }
    }
  }

  if (auto it = by_ant_.find(a); it != by_ant_.end()) {
    for (Ev y_ev : it->second) {
      if (y_ev == x_ev) continue;
      const Slot* t = get(a, y_ev);
      if (contains_all(y_ev, x_ev)) {
        const Ev rest = y_ev & ~x_ev;
        // I1d with key as A -> [1,1] B.
        if (certain(x)) emit(RuleId::kI1d, {a, rest}, t->bounds, {slot_prem(t), me});
        // I3 with key as A -> B.
        if (x.lo > 0.0) {
          emit(RuleId::kI3, {a | x_ev, rest}, bounds::conjunction_left(x, t->bounds),
               {me, slot_prem(t)});
        }
        // I8 with key as A -> C.
        if (width_of(rest) == 1) {
          emit(RuleId::kI8, {a, x_ev | complement_of(rest)},
               bounds::conjunction_right_negation(x, t->bounds), {me, slot_prem(t)});
        }
      }
      // I5: B -> A (lower bound v1 > 0) and B -> C give A B -> C. The key can
      // play either part.
      if (disjoint(x_ev, y_ev)) {
        if (x.lo > 0.0) {
          emit(RuleId::kI5, {a | x_ev, y_ev}, bounds::weak_conjunction_left(x.lo, t->bounds),
               {me, slot_prem(t)});
        }
        if (t->bounds.lo > 0.0) {
          emit(RuleId::kI5, {a | y_ev, x_ev}, bounds::weak_conjunction_left(t->bounds.lo, x),
               {slot_prem(t), me});
        }
      }
    }
  }

  // I4 with key as A -> B: every A B -> C.
  if (auto it = by_ant_.find(a | x_ev); it != by_ant_.end()) {
    for (Ev c : it->second) {
      const Slot* t = get(a | x_ev, c);
      emit(RuleId::kI4, {a, x_ev | c}, bounds::conjunction_right(x, t->bounds),
           {me, slot_prem(t)});
    }
  }
  // I4 with key as A B -> C: split the antecedent.
  if (width_of(a) >= 2) {
    for (Ev sub = (a - 1) & a; sub != 0; sub = (sub - 1) & a) {
      const Ev base = a & ~sub;
      if (const Slot* t = get(base, sub)) {
        emit(RuleId::kI4, {base, sub | x_ev}, bounds::conjunction_right(t->bounds, x),
             {slot_prem(t), me});
      }
    }
  }

  // I6a: single-literal extensions; wider ones follow by repetition.
  if (x.hi < 1.0 && x_width < config_.max_width) {
    const Ev free = universe_ & ~symbols_of(a | x_ev);
    for (Ev rest = free; rest != 0; rest &= rest - 1) {
      const Ev bit = rest & (~rest + 1);
      emit(RuleId::kI6a, {a, x_ev | bit}, bounds::weak_conjunction_right(x), {me});
      emit(RuleId::kI6a, {a, x_ev | (bit << 32)}, bounds::weak_conjunction_right(x), {me});
    }
  }

  // I6b with key as A -> B: every point rule B -> C with value 0 or 1.
  if (auto it = by_ant_.find(x_ev); it != by_ant_.end()) {
    for (Ev c : it->second) {
      const Slot* t = get(x_ev, c);
      const ProbInterval& y = t->bounds;
      if (y.is_point() && (y.lo == 0.0 || y.lo == 1.0) && disjoint(c, a)) {
        emit(RuleId::kI6b, {a, x_ev | c}, bounds::weak_conjunction_right_point(x, y.lo),
             {me, slot_prem(t)});
      }
    }
  }
  // I6b with key as B -> C.
  if (x.is_point() && (x.lo == 0.0 || x.lo == 1.0)) {
    if (auto it = by_cons_.find(a); it != by_cons_.end()) {
      for (Ev other_ant : it->second) {
        if (!disjoint(other_ant, x_ev)) continue;
        const Slot* t = get(other_ant, a);
        emit(RuleId::kI6b, {other_ant, a | x_ev},
             bounds::weak_conjunction_right_point(t->bounds, x.lo), {slot_prem(t), me});
      }
    }
  }

  // I7.
  if (x_width == 1) emit(RuleId::kI7, {a, complement_of(x_ev)}, bounds::negate(x), {me});

  // I10 in both directions.
  if (const Slot* t = get(x_ev, a)) {
    if (x.hi == 0.0) emit(RuleId::kI10, {x_ev, a}, ProbInterval::point(0.0), {me, slot_prem(t)});
    if (t->bounds.hi == 0.0) {
      emit(RuleId::kI10, {a, x_ev}, ProbInterval::point(0.0), {slot_prem(t), me});
    }
  }
}

// Rules joined on a middle event: I9 through a literal F, chaining through B.
void Saturator::fire_pivot(Ev b) {
  auto ants = by_cons_.find(b);   // A -> B
  auto conses = by_ant_.find(b);  // B -> C

  if (width_of(b) == 1 && enabled(RuleId::kI9) && conses != by_ant_.end() &&
      ants != by_cons_.end()) {
    const Ev f = b;
    for (Ev a : conses->second) {
      const Slot* fa = get(f, a);
      if (!(fa->bounds.lo > 0.0)) continue;
      const Slot* af = get(a, f);
      for (Ev c : ants->second) {
        if (c == a || !disjoint(a, c)) continue;
        const Slot* cf = get(c, f);
        if (!(cf->bounds.lo > 0.0)) continue;
        const Slot* fc = get(f, c);
        const double u2 = af ? af->bounds.hi : 1.0;
        const double x2 = fc ? fc->bounds.hi : 1.0;
        emit(RuleId::kI9, {a, complement_of(f) | c},
             bounds::weak_conjunction_right_negation(u2, fa->bounds.lo, x2, cf->bounds.lo),
             {af ? slot_prem(af) : assumed_prem({a, f}, ProbInterval::vacuous()), slot_prem(fa),
              fc ? slot_prem(fc) : assumed_prem({f, c}, ProbInterval::vacuous()), slot_prem(cf)});
      }
    }
  }

  const bool prc = enabled(RuleId::kPRC);
  const bool rc = enabled(RuleId::kRC) && width_of(b) == 1;
  if ((!prc && !rc) || ants == by_cons_.end() || conses == by_ant_.end()) return;
  for (Ev a : ants->second) {
    const Slot* ab = get(a, b);
    const ProbInterval& u = ab->bounds;
    const Slot* ba = get(b, a);
    // A missing reverse direction is unconstrained apart from the coupling
    // of zero upper bounds.
    const ProbInterval v = ba ? ba->bounds : ProbInterval{0.0, u.hi == 0.0 ? 0.0 : 1.0};
    if ((u.hi == 0.0) != (v.hi == 0.0)) continue;
    for (Ev c : conses->second) {
      if (c == a || !disjoint(a, c)) continue;
      const Slot* bc = get(b, c);
      const ProbInterval& x = bc->bounds;
      const Slot* cb = get(c, b);
      const ProbInterval y = cb ? cb->bounds : ProbInterval{0.0, x.hi == 0.0 ? 0.0 : 1.0};
      if ((x.hi == 0.0) != (y.hi == 0.0)) continue;
      const Prem p_v = ba ? slot_prem(ba) : assumed_prem({b, a}, v);
      const Prem p_y = cb ? slot_prem(cb) : assumed_prem({c, b}, y);
      if (prc) {
        emit(RuleId::kPRC, {a, c}, bounds::precise_rule_chaining(u, v, x, y),
             {slot_prem(ab), p_v, slot_prem(bc), p_y});
      }
      if (rc) {
        emit(RuleId::kRC, {a, c}, bounds::rule_chaining(u, v, x, y),
             {slot_prem(ab), p_v, slot_prem(bc), p_y});
      }
    }
  }
}

void Saturator::fire_indep(const Triple& stmt, const INodePtr& node) {
  const Prem ind{nullptr, node, {}, {}};
  const Ev a = stmt.a, b = stmt.b, c = stmt.c;

  // I11 in both directions.
  if (const Slot* t = get(b, c)) {
    emit(RuleId::kI11a, {a | b, c}, t->bounds, {slot_prem(t), ind});
  }
  if (const Slot* t = get(a | b, c)) {
    emit(RuleId::kI11b, {b, c}, t->bounds, {slot_prem(t), ind});
  }

  // I12.
  {
    const Slot* bc = get(b, c);
    const Slot* cb = get(c, b);
    if ((bc && bc->bounds.lo > 0.0) || (cb && cb->bounds.lo > 0.0)) {
      if (bc && cb) {
        emit_indep({c, b, a}, {ind, slot_prem(bc), slot_prem(cb)});
      } else {
        emit_indep({c, b, a}, {ind, slot_prem(bc ? bc : cb)});
      }
    }
  }

  // Chaining through B and !B under I(A,B,C) and I(A,!B,C).
  if (width_of(b) != 1) return;
  const Ev nb = complement_of(b);
  auto partner = indeps_.find(Triple{a, nb, c});
  if (partner == indeps_.end()) return;
  const Slot* x_slot = get(b, c);
  const Slot* y_slot = get(nb, c);
  const Slot* u_pos = get(a, b);
  const Slot* u_neg = get(a, nb);
  if (!x_slot || !y_slot || (!u_pos && !u_neg)) return;
  ProbInterval u = ProbInterval::vacuous();
  if (u_pos) u = interval_meet(u, u_pos->bounds);
  if (u_neg) u = interval_meet(u, bounds::negate(u_neg->bounds));
  if (u.empty()) return;  // sharpening reports this elsewhere
  const ProbInterval& x = x_slot->bounds;
  const ProbInterval& y = y_slot->bounds;
  const bool points = u.is_point() && x.is_point() && y.is_point();
  const Prem other{nullptr, partner->second, {}, {}};
  auto emit_chain = [&](RuleId id, Key key, ProbInterval z) {
    if (u_pos && u_neg) {
      emit(id, key, z, {slot_prem(u_pos), slot_prem(u_neg), slot_prem(x_slot), slot_prem(y_slot),
                        ind, other});
    } else {
      emit(id, key, z,
           {slot_prem(u_pos ? u_pos : u_neg), slot_prem(x_slot), slot_prem(y_slot), ind, other});
    }
  };
  emit_chain(points ? RuleId::kRCI1 : RuleId::kPRCI_A, {a, c},
             bounds::independent_chain_forward(u, x, y));
  try {
    emit_chain(points ? RuleId::kRCI2 : RuleId::kPRCI_B, {a | c, b},
               bounds::independent_chain_update(u, x, y));
  } catch (const PreconditionError&) {
    // no update bound from these premises
  }
}

void Saturator::add_slot(const Key& key, Slot slot) {
  store_.emplace(key, std::move(slot));
  by_ant_[key.ant].push_back(key.cons);
  by_cons_[key.cons].push_back(key.ant);
}

// Applies pending conclusions in emission order. Returns false on the first
// empty meet.
bool Saturator::merge(std::set<Key>& changed, std::set<Triple>& new_indeps) {
  for (auto& item : pending_indeps_) {
    if (indeps_.emplace(item.stmt, item.node).second) new_indeps.insert(item.stmt);
  }
  for (auto& item : pending_) {
    auto it = store_.find(item.key);
    if (it == store_.end()) {
      if (item.bounds.empty()) {
        report_ = InconsistencyReport{{decode(item.key.ant), decode(item.key.cons)},
                                      ProbInterval::vacuous(), item.bounds, {},
                                      publish_trace(item.node)};
        return false;
      }
      add_slot(item.key, Slot{item.bounds, item.node, item.node, nullptr});
      changed.insert(item.key);
      continue;
    }
    Slot& slot = it->second;
    const ProbInterval old = slot.bounds;
    ProbInterval meet = interval_meet(old, item.bounds);
    if (meet.lo > meet.hi) {
      if (item.bounds.empty() || meet.lo - meet.hi > config_.noise_tolerance) {
        report_ = InconsistencyReport{{decode(item.key.ant), decode(item.key.cons)}, old,
                                      item.bounds, publish_trace(combined(item.key, slot)),
                                      publish_trace(item.node)};
        return false;
      }
      // Collapse to a point inside the old interval so entries never widen.
      if (meet.hi >= old.lo) {
        meet.lo = meet.hi;
      } else {
        meet.hi = meet.lo;
      }
    }
    if (meet == old) continue;
    if (item.bounds.lo > old.lo) slot.lower = item.node;
    if (item.bounds.hi < old.hi) slot.upper = item.node;
    slot.bounds = meet;
    slot.combined = nullptr;
    if ((meet.lo - old.lo) + (old.hi - meet.hi) > config_.epsilon) changed.insert(item.key);
  }
  return true;
}

NodePtr Saturator::publish(const INodePtr& node) {
  if (node->external) return node->external;
  if (auto it = published_.find(node.get()); it != published_.end()) return it->second;
  std::vector<NodePtr> premises;
  premises.reserve(node->premises.size());
  for (const auto& premise : node->premises) premises.push_back(publish(premise));
  const Triple& e = node->events;
  Statement statement =
      node->indep ? Statement(IndepStmt(decode(e.a), decode(e.b), decode(e.c)))
                  : Statement(UncertainRule(decode(e.a), decode(e.c), node->bounds));
  std::optional<RuleId> rule;
  if (node->kind == DerivationNode::Kind::kDerived) rule = node->rule;
  if (node->kind == DerivationNode::Kind::kSharpened) rule = RuleId::kI2;
  auto out = std::make_shared<const DerivationNode>(
      DerivationNode{node->kind, rule, std::move(statement), std::move(premises)});
  published_.emplace(node.get(), out);
  return out;
}

KnowledgeBase Saturator::write_back() {
  KnowledgeBase kb;
  kb.symbols_ = source_.symbols();
  kb.pairings_ = source_.pairings();
  for (const auto& [key, slot] : store_) {
    kb.rules_.emplace(RuleKey{decode(key.ant), decode(key.cons)},
                      KnowledgeBase::Entry{slot.bounds, publish(slot.lower), publish(slot.upper),
                                           publish(combined(key, slot))});
  }
  for (const auto& [stmt, node] : indeps_) {
    kb.independences_.emplace(std::get<IndepStmt>(publish(node)->statement), publish(node));
  }
  kb.inconsistency_ = report_ ? report_ : source_.inconsistency();
  return kb;
}

std::map<RuleKey, ProbInterval> Saturator::snapshot() {
  std::map<RuleKey, ProbInterval> out;
  for (const auto& [key, slot] : store_) {
    out.emplace(RuleKey{decode(key.ant), decode(key.cons)}, slot.bounds);
  }
  return out;
}

SaturationResult Saturator::run(const RoundObserver& observer) {
  SaturationResult result;
  if (source_.inconsistent()) {
    result.kb = source_;
    result.status = SaturationStatus::kInconsistent;
    result.inconsistency = source_.inconsistency();
    return result;
  }

  std::set<Key> changed;
  for (const auto& [key, slot] : store_) changed.insert(key);
  std::set<Triple> new_indeps;
  for (const auto& [stmt, node] : indeps_) new_indeps.insert(stmt);

  while (!changed.empty() || !new_indeps.empty()) {
    if (result.rounds == config_.max_rounds) {
      result.status = SaturationStatus::kRoundLimit;
      break;
    }
    ++result.rounds;
    pending_.clear();
    pending_indeps_.clear();

    std::set<Ev> pivots;
    for (const Key& key : changed) {
      fire_key(key);
      pivots.insert(key.ant);
      pivots.insert(key.cons);
    }
    for (Ev pivot : pivots) fire_pivot(pivot);
    // Independence rules are few; refire them all against the new store.
    for (const auto& [stmt, node] : indeps_) fire_indep(stmt, node);

    changed.clear();
    new_indeps.clear();
    if (!merge(changed, new_indeps)) {
      result.status = SaturationStatus::kInconsistent;
      break;
    }
    if (observer) observer(result.rounds, snapshot());
  }

  result.derived = store_.size() - initial_size_;
  result.kb = write_back();
  result.inconsistency = report_;
  return result;
}

SaturationResult saturate(const KnowledgeBase& kb, const SaturationConfig& config,
                          const RoundObserver& observer) {
  Saturator saturator(kb, config);
  return saturator.run(observer);
}

ConsistencyVerdict check_consistency(const KnowledgeBase& kb, const SaturationConfig& config) {
  SaturationResult result = saturate(kb, config);
  return {result.status != SaturationStatus::kInconsistent, result.status, result.rounds,
          result.inconsistency};
}

}  // namespace duck
