#pragma once

// A small production-rule engine. Working memory holds (subject, attribute)
// -> value facts; rules pair a condition list with actions. Forward chaining
// runs the match/resolve/fire loop to a fixpoint; backward chaining proves a
// goal pattern from facts and rule consequences.
//
// Matching is naive re-evaluation each cycle. Fleets are at most a dozen UVs,
// which keeps working memory well under a few hundred facts.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uvf/common.hpp"

namespace uvf::rules {

/// Identifier value (a fact subject used as a value). Distinct from a plain
/// string so "UAV1" the vehicle and "UAV1" the label never unify by accident.
struct Id {
  std::string name;
  friend bool operator==(const Id&, const Id&) = default;
  friend auto operator<=>(const Id&, const Id&) = default;
};

using Value = std::variant<bool, double, std::string, Id>;

std::string to_string(const Value& v);
/// Total order: numbers numerically, then by alternative index across types.
int compare(const Value& a, const Value& b);

struct Var {
  std::string name;
  friend bool operator==(const Var&, const Var&) = default;
};

using Term = std::variant<Var, Value>;

inline Term var(std::string name) { return Var{std::move(name)}; }
inline Term lit(Value v) { return v; }
inline Term lit(const char* s) { return Value{std::string(s)}; }
inline Term lit(bool b) { return Value{b}; }
inline Term lit(int n) { return Value{static_cast<double>(n)}; }
inline Term lit(double x) { return Value{x}; }
inline Term lit(std::string s) { return Value{std::move(s)}; }
inline Term id(std::string name) { return Value{Id{std::move(name)}}; }

using Bindings = std::map<std::string, Value>;

/// Arithmetic over terms, used by tests and assert actions.
struct Expr {
  enum class Op { Term, Add, Sub, Mul };
  Op op = Op::Term;
  Term term = Value{false};
  std::vector<Expr> args;

  Expr() = default;
  Expr(Term t) : term(std::move(t)) {}  // NOLINT: implicit on purpose
  static Expr binary(Op op, Expr a, Expr b);
};

inline Expr operator+(Expr a, Expr b) { return Expr::binary(Expr::Op::Add, std::move(a), std::move(b)); }
inline Expr operator-(Expr a, Expr b) { return Expr::binary(Expr::Op::Sub, std::move(a), std::move(b)); }
inline Expr operator*(Expr a, Expr b) { return Expr::binary(Expr::Op::Mul, std::move(a), std::move(b)); }

struct Fact {
  std::string subject;
  std::string attribute;
  Value value;
  friend bool operator==(const Fact&, const Fact&) = default;
};

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

struct Condition;

struct Pattern {
  Term subject;
  std::string attribute;
  Term value;
};

struct Test {
  CmpOp op;
  Expr lhs;
  Expr rhs;
};

struct Exists {
  std::vector<Condition> body;
};

struct NotExists {
  std::vector<Condition> body;
};

/// Binds `var` to the number of distinct solutions of `body`.
struct Count {
  std::string var;
  std::vector<Condition> body;
};

struct SortKey {
  std::string var;
  bool descending = false;
};

/// Keeps only the best solution of `body` under `keys` (min-by / max-by).
/// Remaining ties fall back to the lexicographic order of the bindings.
struct Best {
  std::vector<SortKey> keys;
  std::vector<Condition> body;
};

struct Condition {
  std::variant<Pattern, Test, Exists, NotExists, Count, Best> node;

  Condition(Pattern p) : node(std::move(p)) {}  // NOLINT
  Condition(Test t) : node(std::move(t)) {}     // NOLINT
  Condition(Exists e) : node(std::move(e)) {}   // NOLINT
  Condition(NotExists n) : node(std::move(n)) {}  // NOLINT
  Condition(Count c) : node(std::move(c)) {}    // NOLINT
  Condition(Best b) : node(std::move(b)) {}     // NOLINT
};

inline Condition fact(Term subject, std::string attribute, Term value) {
  return Pattern{std::move(subject), std::move(attribute), std::move(value)};
}
inline Condition test(CmpOp op, Expr lhs, Expr rhs) { return Test{op, std::move(lhs), std::move(rhs)}; }
inline Condition exists(std::vector<Condition> body) { return Exists{std::move(body)}; }
inline Condition not_exists(std::vector<Condition> body) { return NotExists{std::move(body)}; }
inline Condition count(std::string var, std::vector<Condition> body) { return Count{std::move(var), std::move(body)}; }
inline Condition min_by(std::vector<std::string> vars, std::vector<Condition> body) {
  Best b;
  for (auto& v : vars) b.keys.push_back(SortKey{std::move(v), false});
  b.body = std::move(body);
  return b;
}
inline Condition max_by(std::vector<std::string> vars, std::vector<Condition> body) {
  Best b;
  for (auto& v : vars) b.keys.push_back(SortKey{std::move(v), true});
  b.body = std::move(body);
  return b;
}

struct AssertAction {
  Term subject;
  std::string attribute;
  Expr value;
};

struct RetractAction {
  Term subject;
  std::string attribute;
};

struct EmitAction {
  std::string kind;
  std::vector<Expr> args;
};

using Action = std::variant<AssertAction, RetractAction, EmitAction>;

inline Action assert_(Term subject, std::string attribute, Expr value) {
  return AssertAction{std::move(subject), std::move(attribute), std::move(value)};
}
inline Action retract(Term subject, std::string attribute) {
  return RetractAction{std::move(subject), std::move(attribute)};
}
inline Action emit(std::string kind, std::vector<Expr> args) { return EmitAction{std::move(kind), std::move(args)}; }

struct Rule {
  std::string name;
  int salience = 0;
  std::vector<Condition> conditions;
  std::vector<Action> actions;
  /// Label written into decisions; defaults to `name` when empty. Several
  /// rules can share one label (e.g. two variants of the same domain rule).
  std::string tag;

  const std::string& label() const { return tag.empty() ? name : tag; }
};

struct Decision {
  std::string rule;
  std::string kind;
  std::vector<Value> args;

  /// "kind(arg1,arg2)"
  std::string describe() const;
  friend bool operator==(const Decision&, const Decision&) = default;
};

class RuleError : public Error {
 public:
  using Error::Error;
};

class CycleLimitExceeded : public Error {
 public:
  explicit CycleLimitExceeded(std::size_t limit)
      : Error("rule set did not converge within " + std::to_string(limit) + " firings") {}
};

class DepthLimitExceeded : public Error {
 public:
  explicit DepthLimitExceeded(std::size_t limit)
      : Error("backward chaining exceeded depth " + std::to_string(limit)) {}
};

class WorkingMemory {
 public:
  struct Entry {
    Value value;
    std::uint64_t timestamp = 0;
  };

  /// Inserts or overwrites (subject, attribute). Re-asserting an unchanged
  /// value is a no-op, so it neither refreshes recency nor reactivates rules.
  void assert_fact(const Fact& fact);
  bool retract(const std::string& subject, const std::string& attribute);

  const Entry* find(const std::string& subject, const std::string& attribute) const;
  std::optional<Value> value(const std::string& subject, const std::string& attribute) const;

  /// All facts, ordered by (attribute, subject).
  std::vector<Fact> facts() const;
  std::size_t size() const;

  /// Subjects carrying `attribute`, ordered by subject.
  const std::map<std::string, Entry>* with_attribute(const std::string& attribute) const;

  friend bool operator==(const WorkingMemory& a, const WorkingMemory& b) {
    return a.facts() == b.facts();
  }

 private:
  std::map<std::string, std::map<std::string, Entry>> by_attribute_;
  std::uint64_t clock_ = 0;
};

/// One way of satisfying a condition list: variable bindings plus the
/// timestamps of the facts that supported it.
struct Match {
  Bindings bindings;
  std::vector<std::uint64_t> support;
};

/// All solutions of `conditions` against `wm`, extending `seed`.
std::vector<Match> match(std::span<const Condition> conditions, const WorkingMemory& wm, const Bindings& seed = {});

Value evaluate(const Expr& expr, const Bindings& bindings);

struct Activation {
  std::size_t rule_index;
  Bindings bindings;
  std::vector<std::uint64_t> support;
  std::uint64_t recency = 0;
};

/// Agenda order: salience descending, recency ascending, rule name, bindings.
std::vector<Activation> build_agenda(const WorkingMemory& wm, std::span<const Rule> rules);

struct ForwardResult {
  WorkingMemory memory;
  std::vector<Decision> decisions;
  /// (rule name, bindings) of every firing, in order.
  std::vector<std::pair<std::string, Bindings>> fired;
};

ForwardResult run_forward(WorkingMemory wm, std::span<const Rule> rules, std::size_t max_cycles);

/// Goal-driven proof of `goal`. Patterns recurse through facts and through
/// rules whose assert actions can produce a matching fact; aggregates and
/// negations are evaluated against stored facts only. Returns the first
/// solution in agenda order.
std::optional<Bindings> run_backward(const WorkingMemory& wm, std::span<const Rule> rules, const Condition& goal,
                                     std::size_t max_depth = 32);

/// Every solution, in the same order run_backward would consider them.
std::vector<Bindings> prove_all(const WorkingMemory& wm, std::span<const Rule> rules, const Condition& goal,
                                std::size_t max_depth = 32);

}  // namespace uvf::rules
