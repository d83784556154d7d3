#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "manas/data.hpp"

namespace manas {

// Real-plus-N candidate set: the positive plus `negatives` items the user
// never interacted with.
struct EvalCandidateSet {
  int user = 0;
  int positive = 0;
  std::vector<int> negatives;
  std::uint64_t seed = 0;  // the stream that produced the negatives

  std::vector<int> candidates() const;  // positive first, then negatives
};

// One fixed candidate set per split sample; negatives are disjoint from all
// of the user's interacted items so every model ranks identical lists.
std::vector<EvalCandidateSet> build_candidate_sets(
    const InteractionTable& table, const std::vector<SequenceSample>& samples,
    int num_negatives, std::uint64_t seed);

double hit_at_k(int rank, int k);
double ndcg_at_k(int rank, int k);  // 1/log2(rank+1) within K, else 0

// 1-based rank of the positive under (score desc, item id asc) ordering;
// invariant to candidate order.
int rank_of_positive(const std::vector<int>& candidates,
                     const std::vector<double>& scores, int positive);

// Scores aligned with `candidates`; rng is pre-seeded per (run, user).
using ScoreFn = std::function<std::vector<double>(
    const SequenceSample&, const std::vector<int>& candidates, Rng&)>;

enum class EvalMode { single, multi };

struct EvalOptions {
  std::vector<int> ks = {5, 10};
  EvalMode mode = EvalMode::single;
  int runs = 20;  // multi mode
  std::uint64_t seed = 0;
};

// Metric keys are "HR@K" / "N@K". Single mode fills `values`; multi mode
// fills avg/min/max/std over the per-run user-averaged metrics.
struct MetricReport {
  std::map<std::string, double> values;
  std::map<std::string, double> avg, min, max, std;
  int runs = 1;
  bool multi = false;
  std::vector<std::map<std::string, double>> per_run;
};

MetricReport evaluate(const ScoreFn& score_fn,
                      const std::vector<SequenceSample>& samples,
                      const std::vector<EvalCandidateSet>& candidate_sets,
                      const EvalOptions& options);

}  // namespace manas
