#pragma once

#include <span>
#include <vector>

#include "manas/nn.hpp"

namespace manas {

// Laws the logic regularizer enforces. The set is configurable; the default
// gives every module at least one constraint.
struct RegularizerLaws {
  bool idempotence_and = true;   // 1 - Sim(AND(x,x), x)
  bool idempotence_or = true;    // 1 - Sim(OR(x,x), x)
  bool double_negation = true;   // 1 - Sim(NOT(NOT(x)), x)
  bool anchor_negation = true;   // 1 + Sim(NOT(T), T), added once
};

// Child-network parameter space: per-item predicate embeddings, the shared
// AND/OR/NOT modules, and the frozen true-anchor vector. Modules are MLPs
// with one ReLU hidden layer of width `hidden` and a linear output of width
// `dim`; AND/OR take the concatenated pair.
struct LogicSpace {
  int num_items = 0;
  int dim = 64;
  int hidden = 64;

  ParameterSet params;  // "emb" plus "and.*", "or.*", "not.*"
  Tensor anchor;        // unit norm; never updated

  MlpSpec and_spec() const { return {"and", {2 * dim, hidden, dim}}; }
  MlpSpec or_spec() const { return {"or", {2 * dim, hidden, dim}}; }
  MlpSpec not_spec() const { return {"not", {dim, hidden, dim}}; }

  std::span<const double> embedding(int item) const;
};

LogicSpace make_logic_space(int num_items, int dim, int hidden, Rng& rng);

// Module forward passes (fast path).
Tensor apply_and(const LogicSpace& s, std::span<const double> x,
                 std::span<const double> y);
Tensor apply_or(const LogicSpace& s, std::span<const double> x,
                std::span<const double> y);
Tensor apply_not(const LogicSpace& s, std::span<const double> x);

// Tape variants.
int apply_and(Tape& tape, const LogicSpace& s, int x, int y);
int apply_or(Tape& tape, const LogicSpace& s, int x, int y);
int apply_not(Tape& tape, const LogicSpace& s, int x);

// Mean over X of the enabled per-sample law residuals, each of the form
// 1 - Sim(lhs, rhs), plus the anchor law once. Non-negative. X must be
// nonempty.
double logic_regularizer(const LogicSpace& s,
                         const std::vector<std::span<const double>>& X,
                         const RegularizerLaws& laws = {});
int logic_regularizer(Tape& tape, const LogicSpace& s,
                      const std::vector<int>& x_nodes,
                      const RegularizerLaws& laws = {});

// The AND idempotence term alone; the residual tracked by the regularizer
// descent check.
double idempotence_residual(const LogicSpace& s,
                            const std::vector<std::span<const double>>& X);

// Cosine similarity of an expression output against the true anchor.
double truth_score(const LogicSpace& s, std::span<const double> expression_out);
int truth_score(Tape& tape, const LogicSpace& s, int expression_out);

}  // namespace manas
