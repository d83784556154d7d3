#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "manas/error.hpp"
#include "manas/evaluation.hpp"

using namespace manas;

namespace {

InteractionTable small_table(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.users = 30;
  spec.items = 40;
  spec.interactions_per_user = 8;
  spec.history_length = 2;
  spec.rule = make_planted_rule(spec.items, 4, 2, 0.3);
  spec.seed = seed;
  return generate_synthetic(spec);
}

// Candidate sets crafted directly, without a table.
std::vector<EvalCandidateSet> synthetic_candidates(int users, int negatives,
                                                   std::uint64_t seed) {
  std::vector<EvalCandidateSet> out;
  for (int u = 0; u < users; ++u) {
    EvalCandidateSet cs;
    cs.user = u;
    cs.positive = 0;
    for (int k = 1; k <= negatives; ++k) cs.negatives.push_back(k);
    cs.seed = derive_seed(seed, u);
    out.push_back(std::move(cs));
  }
  return out;
}

std::vector<SequenceSample> matching_samples(
    const std::vector<EvalCandidateSet>& cands) {
  std::vector<SequenceSample> out;
  for (const auto& c : cands) out.push_back({c.user, {0, 1}, c.positive});
  return out;
}

}  // namespace

TEST_CASE("hit and ndcg values at the boundaries") {
  CHECK(hit_at_k(1, 10) == 1.0);
  CHECK(hit_at_k(10, 10) == 1.0);
  CHECK(hit_at_k(11, 10) == 0.0);
  CHECK(ndcg_at_k(1, 10) == doctest::Approx(1.0));
  CHECK(ndcg_at_k(3, 10) == doctest::Approx(0.5));  // 1/log2(4)
  CHECK(ndcg_at_k(10, 10) == doctest::Approx(1.0 / std::log2(11.0)));
  CHECK(ndcg_at_k(11, 10) == 0.0);
  CHECK_THROWS_AS(hit_at_k(0, 10), Error);
  CHECK_THROWS_AS(ndcg_at_k(0, 10), Error);
}

TEST_CASE("ndcg never exceeds hit") {
  for (int rank = 1; rank <= 100; ++rank)
    for (int k : {5, 10})
      CHECK(ndcg_at_k(rank, k) <= hit_at_k(rank, k));
}

TEST_CASE("rank_of_positive breaks ties by item id and ignores order") {
  std::vector<int> cands{7, 3, 9, 5};
  std::vector<double> scores{0.5, 0.8, 0.5, 0.2};
  // positive = 9 (score 0.5): 3 beats it (0.8), 7 ties with smaller id.
  CHECK(rank_of_positive(cands, scores, 9) == 3);
  // positive = 7 (score 0.5): only 3 is ahead; the tie with 9 is resolved
  // in 7's favor.
  CHECK(rank_of_positive(cands, scores, 7) == 2);
  // Invariance to permutation.
  std::vector<int> perm{3, 9, 5, 7};
  std::vector<double> pscores{0.8, 0.5, 0.2, 0.5};
  CHECK(rank_of_positive(perm, pscores, 9) == 3);
  CHECK_THROWS_AS(rank_of_positive(cands, scores, 999), Error);
}

TEST_CASE("candidate sets exclude interacted items and the positive") {
  InteractionTable table = small_table();
  SequenceData seq = build_sequences(table, 2);
  auto sets = build_candidate_sets(table, seq.test, 20, 99);
  REQUIRE(sets.size() == seq.test.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& cs = sets[i];
    CHECK(cs.positive == seq.test[i].target);
    CHECK(cs.negatives.size() == 20);
    auto interacted = table.interacted_items(cs.user);
    std::set<int> seen;
    for (int neg : cs.negatives) {
      CHECK(neg != cs.positive);
      CHECK_FALSE(std::binary_search(interacted.begin(), interacted.end(), neg));
      CHECK(seen.insert(neg).second);  // distinct
    }
  }
  // Same seed -> identical sets; different seed -> different sets.
  auto again = build_candidate_sets(table, seq.test, 20, 99);
  bool same = true;
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (sets[i].negatives != again[i].negatives) same = false;
  CHECK(same);
  auto other = build_candidate_sets(table, seq.test, 20, 100);
  bool all_equal = true;
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (sets[i].negatives != other[i].negatives) all_equal = false;
  CHECK_FALSE(all_equal);
}

TEST_CASE("candidate construction fails when negatives cannot be found") {
  SyntheticSpec spec;
  spec.users = 4;
  spec.items = 6;
  spec.interactions_per_user = 5;
  spec.history_length = 2;
  spec.rule = make_planted_rule(spec.items, 4, 2, 0.5);
  spec.seed = 5;
  InteractionTable table = generate_synthetic(spec);
  SequenceData seq = build_sequences(table, 2);
  CHECK_THROWS_AS(build_candidate_sets(table, seq.test, 99, 1), Error);
}

TEST_CASE("oracle scorer reaches perfect metrics") {
  auto cands = synthetic_candidates(50, 30, 1);
  auto samples = matching_samples(cands);
  ScoreFn oracle = [](const SequenceSample& s, const std::vector<int>& c, Rng&) {
    std::vector<double> scores(c.size(), 0.0);
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c[i] == s.target) scores[i] = 1.0;
    return scores;
  };
  EvalOptions opts;
  auto report = evaluate(oracle, samples, cands, opts);
  CHECK(report.values.at("HR@5") == doctest::Approx(1.0));
  CHECK(report.values.at("HR@10") == doctest::Approx(1.0));
  CHECK(report.values.at("N@5") == doctest::Approx(1.0));
  CHECK(report.values.at("N@10") == doctest::Approx(1.0));
}

TEST_CASE("uniform random scorer lands near HR@10 = K/100") {
  auto cands = synthetic_candidates(2500, 99, 7);
  auto samples = matching_samples(cands);
  ScoreFn random_scorer = [](const SequenceSample&, const std::vector<int>& c,
                             Rng& rng) {
    std::vector<double> scores(c.size());
    for (auto& s : scores) s = rand_uniform(rng, 0.0, 1.0);
    return scores;
  };
  EvalOptions opts;
  opts.seed = 31;
  auto report = evaluate(random_scorer, samples, cands, opts);
  // Binomial: p = 0.1, sigma = sqrt(p(1-p)/2500) ~ 0.006.
  const double sigma = std::sqrt(0.1 * 0.9 / 2500.0);
  CHECK(std::fabs(report.values.at("HR@10") - 0.1) <= 3.0 * sigma);
  CHECK(report.values.at("N@10") <= report.values.at("HR@10"));
}

TEST_CASE("multi-run report orders avg/min/max and computes population std") {
  auto cands = synthetic_candidates(60, 30, 3);
  auto samples = matching_samples(cands);
  ScoreFn noisy = [](const SequenceSample& s, const std::vector<int>& c,
                     Rng& rng) {
    std::vector<double> scores(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      scores[i] = rand_uniform(rng, 0.0, 1.0);
      if (c[i] == s.target) scores[i] += 0.4;  // biased toward the positive
    }
    return scores;
  };
  EvalOptions opts;
  opts.mode = EvalMode::multi;
  opts.runs = 20;
  opts.seed = 5;
  auto report = evaluate(noisy, samples, cands, opts);
  REQUIRE(report.multi);
  REQUIRE(report.per_run.size() == 20);
  for (const auto& key : {"HR@5", "HR@10", "N@5", "N@10"}) {
    CHECK(report.min.at(key) <= report.avg.at(key) + 1e-15);
    CHECK(report.avg.at(key) <= report.max.at(key) + 1e-15);
    CHECK(report.std.at(key) >= 0.0);
    // Independent recomputation of the population std.
    double mean = 0.0;
    for (const auto& run : report.per_run) mean += run.at(key);
    mean /= 20.0;
    double var = 0.0;
    for (const auto& run : report.per_run) {
      const double d = run.at(key) - mean;
      var += d * d;
    }
    CHECK(report.std.at(key) ==
          doctest::Approx(std::sqrt(var / 20.0)).epsilon(1e-12));
    CHECK(report.avg.at(key) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("deterministic scorer has zero std in multi mode") {
  auto cands = synthetic_candidates(40, 25, 11);
  auto samples = matching_samples(cands);
  ScoreFn deterministic = [](const SequenceSample&, const std::vector<int>& c,
                             Rng&) {
    std::vector<double> scores(c.size());
    for (std::size_t i = 0; i < c.size(); ++i)
      scores[i] = 1.0 / (1.0 + c[i]);
    return scores;
  };
  EvalOptions opts;
  opts.mode = EvalMode::multi;
  opts.runs = 20;
  auto report = evaluate(deterministic, samples, cands, opts);
  for (const auto& key : {"HR@5", "HR@10", "N@5", "N@10"}) {
    CHECK(report.std.at(key) == 0.0);
    CHECK(report.min.at(key) == report.max.at(key));
  }
}

TEST_CASE("empty evaluation set is an error") {
  EvalOptions opts;
  ScoreFn fn = [](const SequenceSample&, const std::vector<int>& c, Rng&) {
    return std::vector<double>(c.size(), 0.0);
  };
  CHECK_THROWS_AS(evaluate(fn, {}, {}, opts), Error);
}
