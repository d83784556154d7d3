#include <doctest.h>

#include <cmath>

#include "manas/error.hpp"
#include "manas/logic.hpp"

using namespace manas;

namespace {

LogicSpace small_space(int items = 6, int dim = 8, std::uint64_t seed = 12) {
  Rng rng(seed);
  return make_logic_space(items, dim, dim, rng);
}

std::vector<double> randvec(Rng& rng, int d, double stddev = 1.0) {
  std::vector<double> v(d);
  for (auto& x : v) x = rand_normal(rng, 0, stddev);
  return v;
}

// Reference forward for a 2-layer module, written independently.
std::vector<double> reference_module(const ParameterSet& p,
                                     const std::string& prefix,
                                     const std::vector<double>& in) {
  const Tensor& w0 = p.at(prefix + ".w0");
  const Tensor& b0 = p.at(prefix + ".b0");
  const Tensor& w1 = p.at(prefix + ".w1");
  const Tensor& b1 = p.at(prefix + ".b1");
  std::vector<double> hid(w0.rows());
  for (std::size_t r = 0; r < w0.rows(); ++r) {
    double s = b0[r];
    for (std::size_t c = 0; c < w0.cols(); ++c) s += w0.at(r, c) * in[c];
    hid[r] = std::max(0.0, s);
  }
  std::vector<double> out(w1.rows());
  for (std::size_t r = 0; r < w1.rows(); ++r) {
    double s = b1[r];
    for (std::size_t c = 0; c < w1.cols(); ++c) s += w1.at(r, c) * hid[c];
    out[r] = s;
  }
  return out;
}

}  // namespace

TEST_CASE("anchor is unit norm") {
  LogicSpace s = small_space();
  CHECK(l2_norm(s.anchor.span()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("module outputs are deterministic and finite") {
  LogicSpace s = small_space();
  Rng rng(3);
  auto x = randvec(rng, s.dim);
  auto y = randvec(rng, s.dim);
  Tensor a1 = apply_and(s, x, y);
  Tensor a2 = apply_and(s, x, y);
  CHECK(a1 == a2);
  CHECK(a1.all_finite());
  CHECK(static_cast<int>(a1.numel()) == s.dim);
  Tensor o = apply_or(s, x, y);
  CHECK(o.all_finite());
  Tensor n = apply_not(s, x);
  CHECK(n.all_finite());
}

TEST_CASE("modules match the naive reference forward") {
  LogicSpace s = small_space();
  Rng rng(17);
  for (int t = 0; t < 10; ++t) {
    auto x = randvec(rng, s.dim);
    auto y = randvec(rng, s.dim);
    std::vector<double> xy(x);
    xy.insert(xy.end(), y.begin(), y.end());
    Tensor got = apply_and(s, x, y);
    auto want = reference_module(s.params, "and", xy);
    for (int i = 0; i < s.dim; ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    got = apply_or(s, x, y);
    want = reference_module(s.params, "or", xy);
    for (int i = 0; i < s.dim; ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    got = apply_not(s, x);
    want = reference_module(s.params, "not", x);
    for (int i = 0; i < s.dim; ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("module dimension errors") {
  LogicSpace s = small_space();
  std::vector<double> bad(s.dim + 1, 0.0);
  std::vector<double> ok(s.dim, 0.1);
  CHECK_THROWS_AS(apply_and(s, bad, ok), Error);
  CHECK_THROWS_AS(apply_not(s, bad), Error);
}

TEST_CASE("idempotence probe residual lies in cosine bounds") {
  LogicSpace s = small_space();
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    auto x = randvec(rng, s.dim);
    Tensor ax = apply_and(s, x, x);
    const double r = 1.0 - cosine_similarity(ax.span(), x);
    CHECK(r >= 0.0);
    CHECK(r <= 2.0);
  }
}

TEST_CASE("regularizer is positive at random init") {
  LogicSpace s = small_space();
  Rng rng(23);
  std::vector<std::vector<double>> storage;
  std::vector<std::span<const double>> X;
  for (int i = 0; i < 16; ++i) storage.push_back(randvec(rng, s.dim));
  for (const auto& v : storage) X.emplace_back(v.data(), v.size());
  const double r = logic_regularizer(s, X);
  CHECK(r > 0.0);
  CHECK(std::isfinite(r));
}

TEST_CASE("regularizer rejects an empty sample set") {
  LogicSpace s = small_space();
  std::vector<std::span<const double>> empty;
  CHECK_THROWS_AS(logic_regularizer(s, empty), Error);
}

TEST_CASE("a perfect AND module zeroes the idempotence term") {
  // Construct AND(x, x) = x on the positive orthant: w0 = [I/2 | I/2],
  // ReLU passes positives, w1 = I.
  LogicSpace s = small_space();
  Tensor& w0 = s.params.at("and.w0");
  Tensor& b0 = s.params.at("and.b0");
  Tensor& w1 = s.params.at("and.w1");
  Tensor& b1 = s.params.at("and.b1");
  w0.fill(0.0);
  b0.fill(0.0);
  w1.fill(0.0);
  b1.fill(0.0);
  for (int i = 0; i < s.dim; ++i) {
    w0.at(i, i) = 0.5;
    w0.at(i, s.dim + i) = 0.5;
    w1.at(i, i) = 1.0;
  }
  Rng rng(31);
  std::vector<std::vector<double>> storage;
  std::vector<std::span<const double>> X;
  for (int i = 0; i < 8; ++i) {
    auto v = randvec(rng, s.dim);
    for (auto& e : v) e = std::fabs(e) + 0.1;  // positive orthant
    storage.push_back(std::move(v));
  }
  for (const auto& v : storage) X.emplace_back(v.data(), v.size());
  CHECK(idempotence_residual(s, X) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("truth score anchors") {
  LogicSpace s = small_space();
  CHECK(truth_score(s, s.anchor.span()) == doctest::Approx(1.0));
  Tensor neg = s.anchor;
  for (auto& v : neg.data) v = -v;
  CHECK(truth_score(s, neg.span()) == doctest::Approx(-1.0));
  // A vector orthogonal to the anchor scores 0.
  Tensor orth = Tensor::vector(s.dim);
  orth[0] = -s.anchor[1];
  orth[1] = s.anchor[0];
  CHECK(truth_score(s, orth.span()) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("tape regularizer value matches the fast path") {
  LogicSpace s = small_space();
  Rng rng(41);
  std::vector<std::vector<double>> storage;
  std::vector<std::span<const double>> X;
  for (int i = 0; i < 5; ++i) storage.push_back(randvec(rng, s.dim));
  for (const auto& v : storage) X.emplace_back(v.data(), v.size());
  Tape tape;
  std::vector<int> nodes;
  for (const auto& v : storage) nodes.push_back(tape.input({v.data(), v.size()}));
  int reg = logic_regularizer(tape, s, nodes);
  CHECK(tape.value_scalar(reg) ==
        doctest::Approx(logic_regularizer(s, X)).epsilon(1e-12));
}

TEST_CASE("regularizer gradients match finite differences") {
  LogicSpace s = small_space(4, 6, 77);
  Rng rng(43);
  std::vector<std::vector<double>> storage;
  for (int i = 0; i < 3; ++i) storage.push_back(randvec(rng, s.dim, 0.5));

  auto loss = [&](const ParameterSet&) {
    std::vector<std::span<const double>> X;
    for (const auto& v : storage) X.emplace_back(v.data(), v.size());
    return logic_regularizer(s, X);
  };
  Tape tape;
  std::vector<int> nodes;
  for (const auto& v : storage) nodes.push_back(tape.input({v.data(), v.size()}));
  int reg = logic_regularizer(tape, s, nodes);
  GradMap grads;
  tape.backward(reg, grads);
  CHECK(finite_difference_check(loss, s.params, grads, 1e-5) < 1e-4);
}

TEST_CASE("regularizer-only training halves the idempotence residual") {
  // Adam on the module parameters alone, random embedding batches.
  LogicSpace s = small_space(4, 16, 2024);
  Rng rng(2024);
  std::vector<std::vector<double>> batch_storage(32);

  auto fresh_batch = [&]() {
    std::vector<std::span<const double>> X;
    for (auto& v : batch_storage) {
      v = randvec(rng, s.dim, 1.0);
      X.emplace_back(v.data(), v.size());
    }
    return X;
  };

  auto probe_residual = [&]() {
    Rng probe_rng(555);
    std::vector<std::vector<double>> st(64);
    std::vector<std::span<const double>> X;
    for (auto& v : st) {
      v = randvec(probe_rng, s.dim, 1.0);
      X.emplace_back(v.data(), v.size());
    }
    return idempotence_residual(s, X);
  };

  const double before = probe_residual();
  AdamConfig adam;
  adam.lr = 0.01;
  Tape tape;
  for (int step = 0; step < 200; ++step) {
    auto X = fresh_batch();
    tape.reset();
    std::vector<int> nodes;
    for (const auto& v : X) nodes.push_back(tape.input(v));
    int reg = logic_regularizer(tape, s, nodes);
    GradMap grads;
    tape.backward(reg, grads);
    adam_update(s.params, grads, adam);
  }
  const double after = probe_residual();
  CHECK(after <= 0.5 * before);
}

TEST_CASE("anchor never changes during regularizer training") {
  LogicSpace s = small_space(4, 8, 3);
  Tensor anchor_before = s.anchor;
  Rng rng(8);
  AdamConfig adam;
  Tape tape;
  for (int step = 0; step < 20; ++step) {
    std::vector<std::vector<double>> st(8);
    tape.reset();
    std::vector<int> nodes;
    for (auto& v : st) {
      v = randvec(rng, s.dim);
      nodes.push_back(tape.input({v.data(), v.size()}));
    }
    GradMap grads;
    tape.backward(logic_regularizer(tape, s, nodes), grads);
    adam_update(s.params, grads, adam);
  }
  CHECK(s.anchor == anchor_before);
}
