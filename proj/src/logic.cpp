#include "manas/logic.hpp"

#include <cmath>

#include "manas/error.hpp"

namespace manas {

std::span<const double> LogicSpace::embedding(int item) const {
  const Tensor& e = params.at("emb");
  if (item < 0 || static_cast<std::size_t>(item) >= e.rows())
    throw Error::vocabulary("unknown item id " + std::to_string(item));
  return e.row(item);
}

LogicSpace make_logic_space(int num_items, int dim, int hidden, Rng& rng) {
  if (num_items < 1 || dim < 1 || hidden < 1)
    throw Error::domain("make_logic_space: bad dimensions");
  LogicSpace s;
  s.num_items = num_items;
  s.dim = dim;
  s.hidden = hidden;
  s.params.add("emb",
               Tensor::gaussian({static_cast<std::size_t>(num_items),
                                 static_cast<std::size_t>(dim)},
                                0.0, 0.01, rng));
  init_mlp(s.params, s.and_spec(), rng);
  init_mlp(s.params, s.or_spec(), rng);
  init_mlp(s.params, s.not_spec(), rng);
  // Anchor: drawn once, normalized, then frozen.
  s.anchor = Tensor::gaussian({static_cast<std::size_t>(dim)}, 0.0, 1.0, rng);
  const double norm = l2_norm(s.anchor.span());
  for (auto& v : s.anchor.data) v /= norm;
  return s;
}

namespace {
Tensor concat(std::span<const double> x, std::span<const double> y) {
  Tensor t = Tensor::vector(x.size() + y.size());
  std::copy(x.begin(), x.end(), t.data.begin());
  std::copy(y.begin(), y.end(), t.data.begin() + x.size());
  return t;
}

void check_dim(const LogicSpace& s, std::span<const double> v, const char* who) {
  if (static_cast<int>(v.size()) != s.dim)
    throw Error::dimension(std::string(who) + ": expected dim " +
                           std::to_string(s.dim));
}
}  // namespace

Tensor apply_and(const LogicSpace& s, std::span<const double> x,
                 std::span<const double> y) {
  check_dim(s, x, "apply_and");
  check_dim(s, y, "apply_and");
  return mlp_forward(s.params, s.and_spec(), concat(x, y).span());
}

Tensor apply_or(const LogicSpace& s, std::span<const double> x,
                std::span<const double> y) {
  check_dim(s, x, "apply_or");
  check_dim(s, y, "apply_or");
  return mlp_forward(s.params, s.or_spec(), concat(x, y).span());
}

Tensor apply_not(const LogicSpace& s, std::span<const double> x) {
  check_dim(s, x, "apply_not");
  return mlp_forward(s.params, s.not_spec(), x);
}

int apply_and(Tape& tape, const LogicSpace& s, int x, int y) {
  return mlp_forward(tape, s.params, s.and_spec(), tape.concat2(x, y));
}

int apply_or(Tape& tape, const LogicSpace& s, int x, int y) {
  return mlp_forward(tape, s.params, s.or_spec(), tape.concat2(x, y));
}

int apply_not(Tape& tape, const LogicSpace& s, int x) {
  return mlp_forward(tape, s.params, s.not_spec(), x);
}

double logic_regularizer(const LogicSpace& s,
                         const std::vector<std::span<const double>>& X,
                         const RegularizerLaws& laws) {
  if (X.empty()) throw Error::domain("logic_regularizer: empty sample set");
  double total = 0.0;
  for (const auto& x : X) {
    double r = 0.0;
    if (laws.idempotence_and)
      r += 1.0 - cosine_similarity(apply_and(s, x, x).span(), x);
    if (laws.idempotence_or)
      r += 1.0 - cosine_similarity(apply_or(s, x, x).span(), x);
    if (laws.double_negation)
      r += 1.0 - cosine_similarity(apply_not(s, apply_not(s, x).span()).span(), x);
    total += r;
  }
  total /= static_cast<double>(X.size());
  if (laws.anchor_negation)
    total += 1.0 + cosine_similarity(apply_not(s, s.anchor.span()).span(),
                                     s.anchor.span());
  return total;
}

int logic_regularizer(Tape& tape, const LogicSpace& s,
                      const std::vector<int>& x_nodes,
                      const RegularizerLaws& laws) {
  if (x_nodes.empty()) throw Error::domain("logic_regularizer: empty sample set");
  std::vector<int> residuals;
  for (int x : x_nodes) {
    if (laws.idempotence_and)
      residuals.push_back(
          tape.affine(tape.cosine(apply_and(tape, s, x, x), x), -1.0, 1.0));
    if (laws.idempotence_or)
      residuals.push_back(
          tape.affine(tape.cosine(apply_or(tape, s, x, x), x), -1.0, 1.0));
    if (laws.double_negation)
      residuals.push_back(tape.affine(
          tape.cosine(apply_not(tape, s, apply_not(tape, s, x)), x), -1.0, 1.0));
  }
  int total = -1;
  if (!residuals.empty())
    total = tape.scale(tape.addn(residuals),
                       1.0 / static_cast<double>(x_nodes.size()));
  if (laws.anchor_negation) {
    int anchor = tape.input(s.anchor.span());
    int law = tape.affine(tape.cosine(apply_not(tape, s, anchor), anchor), 1.0, 1.0);
    total = total < 0 ? law : tape.add(total, law);
  }
  if (total < 0) throw Error::domain("logic_regularizer: no laws enabled");
  return total;
}

double idempotence_residual(const LogicSpace& s,
                            const std::vector<std::span<const double>>& X) {
  if (X.empty()) throw Error::domain("idempotence_residual: empty sample set");
  double total = 0.0;
  for (const auto& x : X)
    total += 1.0 - cosine_similarity(apply_and(s, x, x).span(), x);
  return total / static_cast<double>(X.size());
}

double truth_score(const LogicSpace& s, std::span<const double> expression_out) {
  check_dim(s, expression_out, "truth_score");
  return cosine_similarity(expression_out, s.anchor.span());
}

int truth_score(Tape& tape, const LogicSpace& s, int expression_out) {
  return tape.cosine(expression_out, tape.input(s.anchor.span()));
}

}  // namespace manas
