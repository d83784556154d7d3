#include "manas/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "manas/error.hpp"

namespace manas {

std::vector<int> EvalCandidateSet::candidates() const {
  std::vector<int> out;
  out.reserve(negatives.size() + 1);
  out.push_back(positive);
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

std::vector<EvalCandidateSet> build_candidate_sets(
    const InteractionTable& table, const std::vector<SequenceSample>& samples,
    int num_negatives, std::uint64_t seed) {
  const int num_items = static_cast<int>(table.num_items());
  std::vector<EvalCandidateSet> out;
  out.reserve(samples.size());
  for (const SequenceSample& s : samples) {
    std::vector<int> interacted = table.interacted_items(s.user);
    auto is_excluded = [&](int item) {
      return item == s.target ||
             std::binary_search(interacted.begin(), interacted.end(), item);
    };
    int available = 0;
    for (int i = 0; i < num_items; ++i)
      if (!is_excluded(i)) ++available;
    if (available < num_negatives)
      throw Error::domain("build_candidate_sets: user " +
                          table.vocab.user_name(s.user) + " has only " +
                          std::to_string(available) + " candidate negatives");
    EvalCandidateSet cs;
    cs.user = s.user;
    cs.positive = s.target;
    cs.seed = derive_seed(seed, 0xCA9D, static_cast<std::uint64_t>(s.user),
                          static_cast<std::uint64_t>(s.target));
    Rng rng(cs.seed);
    std::vector<char> taken(num_items, 0);
    while (static_cast<int>(cs.negatives.size()) < num_negatives) {
      const int item = rand_index(rng, num_items);
      if (taken[item] || is_excluded(item)) continue;
      taken[item] = 1;
      cs.negatives.push_back(item);
    }
    out.push_back(std::move(cs));
  }
  return out;
}

double hit_at_k(int rank, int k) {
  if (rank < 1) throw Error::domain("hit_at_k: rank must be >= 1");
  return rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(int rank, int k) {
  if (rank < 1) throw Error::domain("ndcg_at_k: rank must be >= 1");
  if (rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

int rank_of_positive(const std::vector<int>& candidates,
                     const std::vector<double>& scores, int positive) {
  if (candidates.size() != scores.size())
    throw Error::dimension("rank_of_positive: scores/candidates mismatch");
  std::size_t pos_idx = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i] == positive) {
      pos_idx = i;
      break;
    }
  if (pos_idx == candidates.size())
    throw Error::domain("rank_of_positive: positive not among candidates");
  const double ps = scores[pos_idx];
  int rank = 1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i == pos_idx) continue;
    if (scores[i] > ps || (scores[i] == ps && candidates[i] < positive)) ++rank;
  }
  return rank;
}

namespace {

std::map<std::string, double> run_once(
    const ScoreFn& score_fn, const std::vector<SequenceSample>& samples,
    const std::vector<EvalCandidateSet>& candidate_sets,
    const std::vector<int>& ks, std::uint64_t seed, int run) {
  std::map<std::string, double> sums;
  for (int k : ks) {
    sums["HR@" + std::to_string(k)] = 0.0;
    sums["N@" + std::to_string(k)] = 0.0;
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto cands = candidate_sets[i].candidates();
    Rng rng = make_rng(seed, 0xE7A1, static_cast<std::uint64_t>(run),
                       static_cast<std::uint64_t>(i));
    const std::vector<double> scores = score_fn(samples[i], cands, rng);
    const int rank = rank_of_positive(cands, scores, candidate_sets[i].positive);
    for (int k : ks) {
      sums["HR@" + std::to_string(k)] += hit_at_k(rank, k);
      sums["N@" + std::to_string(k)] += ndcg_at_k(rank, k);
    }
  }
  for (auto& [_, v] : sums) v /= static_cast<double>(samples.size());
  return sums;
}

}  // namespace

MetricReport evaluate(const ScoreFn& score_fn,
                      const std::vector<SequenceSample>& samples,
                      const std::vector<EvalCandidateSet>& candidate_sets,
                      const EvalOptions& options) {
  if (samples.empty()) throw Error::domain("evaluate: empty evaluation set");
  if (samples.size() != candidate_sets.size())
    throw Error::dimension("evaluate: samples/candidate sets mismatch");
  MetricReport report;
  if (options.mode == EvalMode::single) {
    report.values = run_once(score_fn, samples, candidate_sets, options.ks,
                             options.seed, 0);
    report.per_run.push_back(report.values);
    return report;
  }
  report.multi = true;
  report.runs = options.runs;
  for (int run = 0; run < options.runs; ++run)
    report.per_run.push_back(run_once(score_fn, samples, candidate_sets,
                                      options.ks, options.seed, run));
  for (const auto& [key, _] : report.per_run[0]) {
    double sum = 0.0, lo = report.per_run[0].at(key), hi = lo;
    for (const auto& run : report.per_run) {
      const double v = run.at(key);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = sum / report.runs;
    double var = 0.0;
    for (const auto& run : report.per_run) {
      const double d = run.at(key) - mean;
      var += d * d;
    }
    report.avg[key] = mean;
    report.min[key] = lo;
    report.max[key] = hi;
    report.std[key] = std::sqrt(var / report.runs);  // population std
  }
  return report;
}

}  // namespace manas
