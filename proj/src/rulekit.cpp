#include "uvf/rulekit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

namespace uvf::rules {

std::string to_string(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          if (std::isfinite(x) && x == std::floor(x) && std::fabs(x) < 1e15) {
            return std::to_string(static_cast<long long>(x));
          }
          std::ostringstream os;
          os.precision(15);
          os << x;
          return os.str();
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else {
          return x.name;
        }
      },
      v);
}

int compare(const Value& a, const Value& b) {
  if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
  return std::visit(
      [&](const auto& x) -> int {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b);
        if (x < y) return -1;
        if (y < x) return 1;
        return 0;
      },
      a);
}

Expr Expr::binary(Op op, Expr a, Expr b) {
  Expr e;
  e.op = op;
  e.args = {std::move(a), std::move(b)};
  return e;
}

std::string Decision::describe() const {
  std::string out = kind + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out += ",";
    out += to_string(args[i]);
  }
  return out + ")";
}

// ---------------------------------------------------------------------------
// Working memory

void WorkingMemory::assert_fact(const Fact& fact) {
  auto& subjects = by_attribute_[fact.attribute];
  auto it = subjects.find(fact.subject);
  if (it != subjects.end() && compare(it->second.value, fact.value) == 0) return;
  auto& entry = subjects[fact.subject];
  entry.value = fact.value;
  entry.timestamp = ++clock_;
}

bool WorkingMemory::retract(const std::string& subject, const std::string& attribute) {
  auto it = by_attribute_.find(attribute);
  if (it == by_attribute_.end()) return false;
  const bool erased = it->second.erase(subject) > 0;
  if (it->second.empty()) by_attribute_.erase(it);
  return erased;
}

const WorkingMemory::Entry* WorkingMemory::find(const std::string& subject, const std::string& attribute) const {
  auto it = by_attribute_.find(attribute);
  if (it == by_attribute_.end()) return nullptr;
  auto jt = it->second.find(subject);
  return jt == it->second.end() ? nullptr : &jt->second;
}

std::optional<Value> WorkingMemory::value(const std::string& subject, const std::string& attribute) const {
  if (const auto* e = find(subject, attribute)) return e->value;
  return std::nullopt;
}

std::vector<Fact> WorkingMemory::facts() const {
  std::vector<Fact> out;
  for (const auto& [attr, subjects] : by_attribute_) {
    for (const auto& [subject, entry] : subjects) out.push_back(Fact{subject, attr, entry.value});
  }
  return out;
}

std::size_t WorkingMemory::size() const {
  std::size_t n = 0;
  for (const auto& [_, subjects] : by_attribute_) n += subjects.size();
  return n;
}

const std::map<std::string, WorkingMemory::Entry>* WorkingMemory::with_attribute(const std::string& attribute) const {
  auto it = by_attribute_.find(attribute);
  return it == by_attribute_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Matching

namespace {

std::optional<Value> resolve(const Term& term, const Bindings& b) {
  if (const auto* v = std::get_if<Var>(&term)) {
    auto it = b.find(v->name);
    if (it == b.end()) return std::nullopt;
    return it->second;
  }
  return std::get<Value>(term);
}

std::optional<std::string> subject_name(const Value& v) {
  if (const auto* i = std::get_if<Id>(&v)) return i->name;
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return std::nullopt;
}

/// Unifies `term` with `value`, binding a free variable if needed.
bool unify(const Term& term, const Value& value, Bindings& b) {
  if (const auto* v = std::get_if<Var>(&term)) {
    auto [it, inserted] = b.emplace(v->name, value);
    return inserted || compare(it->second, value) == 0;
  }
  return compare(std::get<Value>(term), value) == 0;
}

int compare_bindings(const Bindings& a, const Bindings& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end() && ib != b.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return ia->first < ib->first ? -1 : 1;
    if (int c = compare(ia->second, ib->second)) return c;
  }
  if (ia == a.end() && ib == b.end()) return 0;
  return ia == a.end() ? -1 : 1;
}

std::string serialize(const Bindings& b) {
  std::string out;
  for (const auto& [k, v] : b) {
    out += k;
    out += '=';
    out += std::to_string(v.index());
    out += ':';
    out += to_string(v);
    out += ';';
  }
  return out;
}

bool test_holds(CmpOp op, const Value& a, const Value& b) {
  const int c = compare(a, b);
  switch (op) {
    case CmpOp::Eq:
      return c == 0;
    case CmpOp::Ne:
      return c != 0;
    case CmpOp::Lt:
      return c < 0;
    case CmpOp::Le:
      return c <= 0;
    case CmpOp::Gt:
      return c > 0;
    case CmpOp::Ge:
      return c >= 0;
  }
  return false;
}

void match_from(std::span<const Condition> conds, std::size_t i, const WorkingMemory& wm, Match current,
                std::vector<Match>& out);

void match_pattern(const Pattern& p, std::span<const Condition> conds, std::size_t i, const WorkingMemory& wm,
                   const Match& current, std::vector<Match>& out) {
  auto try_entry = [&](const std::string& subject, const WorkingMemory::Entry& entry) {
    Match next = current;
    if (!unify(p.subject, Value{Id{subject}}, next.bindings)) return;
    if (!unify(p.value, entry.value, next.bindings)) return;
    next.support.push_back(entry.timestamp);
    match_from(conds, i + 1, wm, std::move(next), out);
  };

  if (auto s = resolve(p.subject, current.bindings)) {
    auto name = subject_name(*s);
    if (!name) return;
    if (const auto* e = wm.find(*name, p.attribute)) {
      Match next = current;
      if (!unify(p.value, e->value, next.bindings)) return;
      next.support.push_back(e->timestamp);
      match_from(conds, i + 1, wm, std::move(next), out);
    }
    return;
  }
  if (const auto* subjects = wm.with_attribute(p.attribute)) {
    for (const auto& [subject, entry] : *subjects) try_entry(subject, entry);
  }
}

void match_from(std::span<const Condition> conds, std::size_t i, const WorkingMemory& wm, Match current,
                std::vector<Match>& out) {
  if (i == conds.size()) {
    out.push_back(std::move(current));
    return;
  }
  const auto& node = conds[i].node;
  if (const auto* p = std::get_if<Pattern>(&node)) {
    match_pattern(*p, conds, i, wm, current, out);
  } else if (const auto* t = std::get_if<Test>(&node)) {
    if (test_holds(t->op, evaluate(t->lhs, current.bindings), evaluate(t->rhs, current.bindings))) {
      match_from(conds, i + 1, wm, std::move(current), out);
    }
  } else if (const auto* e = std::get_if<Exists>(&node)) {
    if (!match(e->body, wm, current.bindings).empty()) match_from(conds, i + 1, wm, std::move(current), out);
  } else if (const auto* n = std::get_if<NotExists>(&node)) {
    if (match(n->body, wm, current.bindings).empty()) match_from(conds, i + 1, wm, std::move(current), out);
  } else if (const auto* c = std::get_if<Count>(&node)) {
    auto sols = match(c->body, wm, current.bindings);
    std::set<std::string> distinct;
    for (const auto& s : sols) {
      distinct.insert(serialize(s.bindings));
      current.support.insert(current.support.end(), s.support.begin(), s.support.end());
    }
    if (!unify(var(c->var), Value{static_cast<double>(distinct.size())}, current.bindings)) return;
    match_from(conds, i + 1, wm, std::move(current), out);
  } else if (const auto* b = std::get_if<Best>(&node)) {
    auto sols = match(b->body, wm, current.bindings);
    if (sols.empty()) return;
    auto key_of = [&](const Match& m, const SortKey& k) -> const Value& {
      auto it = m.bindings.find(k.var);
      if (it == m.bindings.end()) throw RuleError("sort key ?" + k.var + " is not bound by the aggregate body");
      return it->second;
    };
    auto better = [&](const Match& x, const Match& y) {
      for (const auto& k : b->keys) {
        int c = compare(key_of(x, k), key_of(y, k));
        if (c != 0) return k.descending ? c > 0 : c < 0;
      }
      return compare_bindings(x.bindings, y.bindings) < 0;
    };
    const auto& best = *std::min_element(sols.begin(), sols.end(), better);
    Match next;
    next.bindings = best.bindings;
    next.support = current.support;
    next.support.insert(next.support.end(), best.support.begin(), best.support.end());
    match_from(conds, i + 1, wm, std::move(next), out);
  }
}

}  // namespace

std::vector<Match> match(std::span<const Condition> conditions, const WorkingMemory& wm, const Bindings& seed) {
  std::vector<Match> out;
  Match start;
  start.bindings = seed;
  match_from(conditions, 0, wm, std::move(start), out);
  return out;
}

Value evaluate(const Expr& expr, const Bindings& bindings) {
  if (expr.op == Expr::Op::Term) {
    auto v = resolve(expr.term, bindings);
    if (!v) throw RuleError("unbound variable ?" + std::get<Var>(expr.term).name);
    return *v;
  }
  auto a = evaluate(expr.args.at(0), bindings);
  auto b = evaluate(expr.args.at(1), bindings);
  const auto* x = std::get_if<double>(&a);
  const auto* y = std::get_if<double>(&b);
  if (!x || !y) throw RuleError("arithmetic on non-numeric values");
  switch (expr.op) {
    case Expr::Op::Add:
      return *x + *y;
    case Expr::Op::Sub:
      return *x - *y;
    case Expr::Op::Mul:
      return *x * *y;
    case Expr::Op::Term:
      break;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Forward chaining

std::vector<Activation> build_agenda(const WorkingMemory& wm, std::span<const Rule> rules) {
  std::vector<Activation> agenda;
  for (std::size_t r = 0; r < rules.size(); ++r) {
    for (auto& m : match(rules[r].conditions, wm)) {
      Activation a{r, std::move(m.bindings), std::move(m.support), 0};
      std::sort(a.support.begin(), a.support.end());
      a.support.erase(std::unique(a.support.begin(), a.support.end()), a.support.end());
      a.recency = a.support.empty() ? 0 : a.support.back();
      agenda.push_back(std::move(a));
    }
  }
  std::stable_sort(agenda.begin(), agenda.end(), [&](const Activation& x, const Activation& y) {
    const auto& rx = rules[x.rule_index];
    const auto& ry = rules[y.rule_index];
    if (rx.salience != ry.salience) return rx.salience > ry.salience;
    if (x.recency != y.recency) return x.recency < y.recency;
    if (rx.name != ry.name) return rx.name < ry.name;
    if (int c = compare_bindings(x.bindings, y.bindings)) return c < 0;
    return x.rule_index < y.rule_index;
  });
  return agenda;
}

namespace {

void fire(const Rule& rule, const Bindings& b, WorkingMemory& wm, std::vector<Decision>& decisions) {
  for (const auto& action : rule.actions) {
    if (const auto* a = std::get_if<AssertAction>(&action)) {
      auto subject = subject_name(evaluate(Expr(a->subject), b));
      if (!subject) throw RuleError("rule " + rule.name + " asserts a fact with a non-identifier subject");
      wm.assert_fact(Fact{*subject, a->attribute, evaluate(a->value, b)});
    } else if (const auto* r = std::get_if<RetractAction>(&action)) {
      auto subject = subject_name(evaluate(Expr(r->subject), b));
      if (!subject) throw RuleError("rule " + rule.name + " retracts a fact with a non-identifier subject");
      wm.retract(*subject, r->attribute);
    } else {
      const auto& e = std::get<EmitAction>(action);
      Decision d{rule.label(), e.kind, {}};
      for (const auto& arg : e.args) d.args.push_back(evaluate(arg, b));
      decisions.push_back(std::move(d));
    }
  }
}

}  // namespace

ForwardResult run_forward(WorkingMemory wm, std::span<const Rule> rules, std::size_t max_cycles) {
  if (max_cycles == 0) throw ArgumentError("max_cycles must be positive");
  ForwardResult result;
  std::set<std::tuple<std::size_t, std::string, std::vector<std::uint64_t>>> refracted;
  std::size_t fired = 0;
  for (;;) {
    auto agenda = build_agenda(wm, rules);
    const Activation* next = nullptr;
    for (const auto& a : agenda) {
      if (!refracted.contains({a.rule_index, serialize(a.bindings), a.support})) {
        next = &a;
        break;
      }
    }
    if (next == nullptr) break;
    if (fired == max_cycles) throw CycleLimitExceeded(max_cycles);
    refracted.insert({next->rule_index, serialize(next->bindings), next->support});
    const auto& rule = rules[next->rule_index];
    fire(rule, next->bindings, wm, result.decisions);
    result.fired.emplace_back(rule.name, next->bindings);
    ++fired;
  }
  result.memory = std::move(wm);
  return result;
}

// ---------------------------------------------------------------------------
// Backward chaining

namespace {

class Prover {
 public:
  Prover(const WorkingMemory& wm, std::span<const Rule> rules, std::size_t max_depth)
      : wm_(wm), max_depth_(max_depth) {
    for (std::size_t i = 0; i < rules.size(); ++i) order_.push_back(&rules[i]);
    std::stable_sort(order_.begin(), order_.end(), [](const Rule* a, const Rule* b) {
      if (a->salience != b->salience) return a->salience > b->salience;
      return a->name < b->name;
    });
  }

  std::vector<Bindings> conditions(std::span<const Condition> conds, const Bindings& env, std::size_t depth) {
    std::vector<Bindings> out;
    conditions_from(conds, 0, env, depth, out);
    return out;
  }

  std::vector<Bindings> pattern(const Pattern& p, const Bindings& env, std::size_t depth) {
    if (depth > max_depth_) throw DepthLimitExceeded(max_depth_);

    std::vector<Bindings> out;
    const Condition as_condition{p};
    for (auto& m : match(std::span(&as_condition, 1), wm_, env)) out.push_back(std::move(m.bindings));

    const auto key = goal_key(p, env);
    if (std::find(stack_.begin(), stack_.end(), key) != stack_.end()) return dedupe(std::move(out));
    stack_.push_back(key);

    const auto goal_subject = resolve(p.subject, env);
    const auto goal_value = resolve(p.value, env);
    for (const Rule* rule : order_) {
      for (const auto& action : rule->actions) {
        const auto* head = std::get_if<AssertAction>(&action);
        if (head == nullptr || head->attribute != p.attribute) continue;

        Bindings rule_env;
        if (goal_subject && !unify_head(head->subject, normalize_subject(*goal_subject), rule_env)) continue;
        if (goal_value && head->value.op == Expr::Op::Term && !unify_head(head->value.term, *goal_value, rule_env)) {
          continue;
        }
        for (const auto& sol : conditions(rule->conditions, rule_env, depth + 1)) {
          Bindings next = env;
          auto hs = evaluate(Expr(head->subject), sol);
          if (!unify_subject(p.subject, hs, next)) continue;
          if (!unify(p.value, evaluate(head->value, sol), next)) continue;
          out.push_back(std::move(next));
        }
      }
    }
    stack_.pop_back();
    return dedupe(std::move(out));
  }

 private:
  void conditions_from(std::span<const Condition> conds, std::size_t i, const Bindings& env, std::size_t depth,
                       std::vector<Bindings>& out) {
    if (i == conds.size()) {
      out.push_back(env);
      return;
    }
    if (const auto* p = std::get_if<Pattern>(&conds[i].node)) {
      for (const auto& b : pattern(*p, env, depth)) conditions_from(conds, i + 1, b, depth, out);
      return;
    }
    for (auto& m : match(conds.subspan(i, 1), wm_, env)) conditions_from(conds, i + 1, m.bindings, depth, out);
  }

  static Value normalize_subject(const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return Id{*s};
    return v;
  }

  static bool unify_subject(const Term& t, const Value& v, Bindings& env) {
    if (const auto* lit_value = std::get_if<Value>(&t)) return subject_name(*lit_value) == subject_name(v);
    return unify(t, normalize_subject(v), env);
  }

  static bool unify_head(const Term& head, const Value& v, Bindings& env) {
    if (const auto* lit_value = std::get_if<Value>(&head)) {
      return compare(normalize_subject(*lit_value), normalize_subject(v)) == 0 || compare(*lit_value, v) == 0;
    }
    return unify(head, v, env);
  }

  static std::string goal_key(const Pattern& p, const Bindings& env) {
    auto part = [&](const Term& t) {
      auto v = resolve(t, env);
      return v ? std::to_string(v->index()) + ":" + to_string(*v) : std::string("?");
    };
    return part(p.subject) + "|" + p.attribute + "|" + part(p.value);
  }

  static std::vector<Bindings> dedupe(std::vector<Bindings> in) {
    std::vector<Bindings> out;
    std::set<std::string> seen;
    for (auto& b : in) {
      if (seen.insert(serialize(b)).second) out.push_back(std::move(b));
    }
    return out;
  }

  const WorkingMemory& wm_;
  std::size_t max_depth_;
  std::vector<const Rule*> order_;
  std::vector<std::string> stack_;
};

}  // namespace

std::vector<Bindings> prove_all(const WorkingMemory& wm, std::span<const Rule> rules, const Condition& goal,
                                std::size_t max_depth) {
  Prover prover(wm, rules, max_depth);
  if (const auto* p = std::get_if<Pattern>(&goal.node)) return prover.pattern(*p, {}, 0);
  return prover.conditions(std::span(&goal, 1), {}, 0);
}

std::optional<Bindings> run_backward(const WorkingMemory& wm, std::span<const Rule> rules, const Condition& goal,
                                     std::size_t max_depth) {
  auto all = prove_all(wm, rules, goal, max_depth);
  if (all.empty()) return std::nullopt;
  return std::move(all.front());
}

}  // namespace uvf::rules
