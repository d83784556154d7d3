#pragma once

#include "manas/controller.hpp"
#include "manas/evaluation.hpp"

namespace manas {

// manas: adaptive controller; nanas: positional controller; ncr_fixed: the
// fixed conjunction template, no controller training.
enum class RunMode { manas, nanas, ncr_fixed };

ControllerMode controller_mode_of(RunMode mode);

struct TrainConfig {
  RunMode mode = RunMode::manas;
  SampleStrategy strategy = SampleStrategy::sample;  // search-time strategy
  int epochs = 20;
  int controller_steps = 50;   // K: controller steps per epoch
  int arch_gen_batch = 1024;   // architecture generation chunk
  int child_batch = 256;       // cap per grouped child batch
  int controller_batch = 256;  // validation minibatch
  double child_lr = 0.001;
  double controller_lr = 0.005;
  double l2_weight = 1e-5;
  double logic_reg_weight = 1e-5;
  double baseline_decay = 0.99;
  int reward_cutoff = 10;  // K_r for the reward HR@K + NDCG@K
  int embedding_dim = 64;  // d; also the LSTM hidden width
  int history_length = 4;  // n
  int eval_negatives = 99;
  double score_temperature = 1.0;  // divides scores before BPR; 1 = raw
  std::uint64_t seed = 2022;
  // Candidate negatives are seeded independently of the model seed so every
  // model and ablation ranks identical lists.
  std::uint64_t candidate_seed = 77;
};

struct MovingBaseline {
  double value = 0.0;
  double decay = 0.99;
  bool initialized = false;

  // First observation initializes; afterwards value is a convex
  // combination of past rewards.
  void observe(double reward);
};

// -ln sigmoid(pos - neg)
double bpr_loss(double pos_score, double neg_score);

struct ArchitectureGroup {
  std::string key;
  LogicArchitecture arch;
  std::vector<int> members;  // indices into the sampled chunk
};

// Exact partition by canonical architecture; all architectures must share
// one n. Group order follows first appearance.
std::vector<ArchitectureGroup> group_by_architecture(
    const std::vector<LogicArchitecture>& archs);

struct TrainState {
  LogicSpace child;
  ControllerSpace controller;
  MovingBaseline baseline;
  int epoch = 0;  // completed epochs
};

TrainState make_train_state(const TrainConfig& cfg, int num_items);

// One architecture for one sequence according to the run mode.
SampleTrace propose_architecture(const ControllerSpace& controller,
                                 std::span<const int> items, RunMode mode,
                                 SampleStrategy strategy, Rng& rng);

// Precomputed per-item first-layer projections of the OR module; valid
// while the child parameters are frozen.
struct ScorerCache {
  Tensor item_proj;  // num_items x hidden
};
ScorerCache build_scorer_cache(const LogicSpace& child);

// Horn scores of every candidate against one history under one
// architecture. `cache` may be null.
std::vector<double> score_candidates(const LogicSpace& child,
                                     const LogicArchitecture& arch,
                                     const std::vector<int>& history,
                                     const std::vector<int>& candidates,
                                     const ScorerCache* cache = nullptr);

struct ChildExample {
  const SequenceSample* sample;
  int negative;
};

struct ChildLossNodes {
  int loss;      // mean BPR + logic_reg_weight * regularizer
  int mean_bpr;
  int reg;
};

// Tape graph for one grouped batch. The l2 term is added analytically by
// the caller.
ChildLossNodes child_batch_loss(Tape& tape, const LogicSpace& child,
                                const LogicArchitecture& arch,
                                const std::vector<ChildExample>& batch,
                                double logic_reg_weight, double temperature);

// Adds 2*weight*value to every parameter gradient (creating zero entries
// for untouched parameters so Adam sees the full dense set); returns the
// squared parameter norm.
double apply_l2_and_densify(const ParameterSet& params, GradMap& grads,
                            double weight);

struct ChildEpochStats {
  double mean_loss = 0.0;  // batch-size weighted, includes l2 term
  double mean_bpr = 0.0;
  double mean_reg = 0.0;
  int batches = 0;
  int groups = 0;
  std::size_t samples = 0;
};

// One full pass over data.train: sample architectures per chunk, group,
// batch, Adam updates on the child. The controller is frozen.
ChildEpochStats train_child_epoch(const SequenceData& data,
                                  const InteractionTable& table,
                                  const ControllerSpace& controller,
                                  LogicSpace& child, const TrainConfig& cfg,
                                  int epoch, Rng& rng);

// HR@K + NDCG@K averaged over the minibatch, in [0, 2].
double reward(const std::vector<const SequenceSample*>& batch,
              const std::vector<const EvalCandidateSet*>& candidate_sets,
              const std::vector<LogicArchitecture>& archs,
              const LogicSpace& child, int cutoff,
              const ScorerCache* cache = nullptr);

struct ControllerStats {
  double mean_reward = 0.0;
  int updates = 0;
  double final_baseline = 0.0;
};

// K controller steps; each step is one pass over the validation set in
// minibatches: sample architectures, compute the reward, take an Adam step
// on -(R - baseline) * sum log pi, then update the baseline. The child is
// frozen.
ControllerStats train_controller_steps(
    const std::vector<SequenceSample>& valid,
    const std::vector<EvalCandidateSet>& candidate_sets,
    const LogicSpace& child, ControllerSpace& controller,
    MovingBaseline& baseline, const TrainConfig& cfg, int epoch, Rng& rng);

struct Derivation {
  LogicArchitecture arch;
  std::vector<std::pair<int, double>> ranked;  // (item, score), best first
};

// Samples one architecture from the trained policy and ranks candidates
// with the shared child network.
Derivation derive(const ControllerSpace& controller, const LogicSpace& child,
                  const std::vector<int>& items,
                  const std::vector<int>& candidates, RunMode mode,
                  SampleStrategy strategy, Rng& rng,
                  const ScorerCache* cache = nullptr);

struct EpochLog {
  int epoch = 0;
  ChildEpochStats child;
  ControllerStats controller;
  double val_hr10 = 0.0, val_ndcg10 = 0.0, val_reward = 0.0;
  double wall_child_s = 0.0, wall_controller_s = 0.0, wall_eval_s = 0.0;
};

// Orchestrates Algorithm-style interleaved training over a dataset bundle.
class Trainer {
 public:
  Trainer(InteractionTable table, TrainConfig cfg);

  EpochLog run_epoch();

  // Sampled/greedy evaluation of a split with the current state.
  MetricReport evaluate_split(const std::vector<SequenceSample>& samples,
                              const std::vector<EvalCandidateSet>& cands,
                              const EvalOptions& options,
                              SampleStrategy strategy) const;

  const InteractionTable& table() const { return table_; }
  const TrainConfig& config() const { return cfg_; }
  const SequenceData& sequences() const { return seq_; }
  const std::vector<EvalCandidateSet>& valid_candidates() const {
    return valid_cands_;
  }
  const std::vector<EvalCandidateSet>& test_candidates() const {
    return test_cands_;
  }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

 private:
  InteractionTable table_;
  TrainConfig cfg_;
  SequenceData seq_;
  std::vector<EvalCandidateSet> valid_cands_, test_cands_;
  TrainState state_;
};

}  // namespace manas
