#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "manas/logic.hpp"

namespace manas {

enum class LogicOp : std::uint8_t { kAnd, kOr };

// One binary step. Operands are slot indices: raw inputs occupy slots
// 0..n-1, step i produces slot n+i. A set negation flag routes that operand
// through the NOT module.
struct ArchStep {
  LogicOp op = LogicOp::kAnd;
  int left = 0, right = 0;
  bool neg_left = false, neg_right = false;

  bool operator==(const ArchStep&) const = default;
};

// A valid architecture consumes every slot except the root exactly once;
// n-1 steps total.
struct LogicArchitecture {
  int n = 1;
  std::vector<ArchStep> steps;

  int root_slot() const { return 2 * n - 2; }
  bool operator==(const LogicArchitecture&) const = default;
};

struct Violation {
  int step;  // -1 for whole-architecture violations
  std::string rule;
};

std::vector<Violation> validate(const LogicArchitecture& arch);
bool is_valid(const LogicArchitecture& arch);

// Minimal unsigned big integer; enough for exact search-space counts.
struct BigUint {
  std::vector<std::uint32_t> limbs;  // little-endian, base 2^32

  static BigUint from(std::uint64_t v);
  void mul(std::uint64_t m);
  bool fits_u64() const { return limbs.size() <= 2; }
  std::uint64_t to_u64() const;
  std::string str() const;
  bool operator==(const BigUint&) const = default;
};

// 4^(n-1) * n! * (n-1)!, exactly.
BigUint count_architectures(int n);

// Complete, duplicate-free list of canonical architectures. Guarded at
// n <= 5; beyond that the error message carries the count that a full
// enumeration would have produced.
std::vector<LogicArchitecture> enumerate_architectures(int n);

// Sorts each step's operands by slot index (negation flags travel with
// their operand). Canonical-form equality defines architecture identity.
LogicArchitecture canonicalize(const LogicArchitecture& arch);

// Compact text form "AND,0,1,0,1;OR,2,4,1,0" (op,left,right,negL,negR per
// step); doubles as the grouping key. n=1 serializes to "id".
std::string arch_key(const LogicArchitecture& arch);
LogicArchitecture parse_arch_key(const std::string& key);

// Evaluates the steps in canonical operand order over d-dim inputs;
// negation flags route operands through NOT. Returns the root vector.
Tensor assemble_premise(const LogicSpace& space, const LogicArchitecture& arch,
                        const std::vector<std::span<const double>>& inputs);
int assemble_premise(Tape& tape, const LogicSpace& space,
                     const LogicArchitecture& arch,
                     const std::vector<int>& input_nodes);

// truth_score(OR(NOT(premise), e_target)) - the De Morgan'd implication
// "premise -> target".
double horn_score(const LogicSpace& space, std::span<const double> premise,
                  int target_item);
int horn_score(Tape& tape, const LogicSpace& space, int premise,
               int target_item);

// Boolean semantics of the same architecture; used by synthetic-rule
// generation and as a structural oracle.
bool evaluate_boolean(const LogicArchitecture& arch,
                      const std::vector<char>& truths);

// Rendering and parsing of expression strings like "((e1 ∧ e2) ∨ e3) ∧ e4".
// Parsing rebuilds steps in post-order, so step numbering may differ from
// the source architecture for the same expression tree; the printed string
// is stable under parse/print round trips.
std::string to_expression_string(const LogicArchitecture& arch,
                                 const std::vector<std::string>& names);
LogicArchitecture parse_expression(const std::string& text,
                                   const std::vector<std::string>& names);

std::string to_dot(const LogicArchitecture& arch,
                   const std::vector<std::string>& names);

std::vector<std::string> default_variable_names(int n);

// The fixed left-deep conjunction e1 AND e2 AND ... AND en.
LogicArchitecture fixed_conjunction(int n);

}  // namespace manas
