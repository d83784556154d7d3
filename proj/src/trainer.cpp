#include "manas/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "manas/error.hpp"

namespace manas {

namespace {

double wall_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

std::vector<int> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> d(0, i - 1);
    std::swap(idx[i - 1], idx[d(rng)]);
  }
  return idx;
}

// Uniform over items the user never interacted with.
int sample_negative(int num_items, const std::vector<int>& interacted,
                    Rng& rng) {
  if (static_cast<int>(interacted.size()) >= num_items)
    throw Error::domain("sample_negative: user interacted with every item");
  for (;;) {
    const int item = rand_index(rng, num_items);
    if (!std::binary_search(interacted.begin(), interacted.end(), item))
      return item;
  }
}

}  // namespace

ControllerMode controller_mode_of(RunMode mode) {
  return mode == RunMode::nanas ? ControllerMode::positional
                                : ControllerMode::adaptive;
}

void MovingBaseline::observe(double reward) {
  if (!initialized) {
    value = reward;
    initialized = true;
    return;
  }
  value = decay * value + (1.0 - decay) * reward;
}

double bpr_loss(double pos_score, double neg_score) {
  const double x = pos_score - neg_score;
  // -ln sigmoid(x) = softplus(-x)
  if (x < 0) return -x + std::log1p(std::exp(x));
  return std::log1p(std::exp(-x));
}

std::vector<ArchitectureGroup> group_by_architecture(
    const std::vector<LogicArchitecture>& archs) {
  std::vector<ArchitectureGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  int n = -1;
  for (std::size_t i = 0; i < archs.size(); ++i) {
    const LogicArchitecture canon = canonicalize(archs[i]);
    if (n < 0) n = canon.n;
    if (canon.n != n)
      throw Error::domain("group_by_architecture: mixed history lengths");
    std::string key = arch_key(canon);
    auto [it, inserted] = index.emplace(std::move(key), groups.size());
    if (inserted) groups.push_back({it->first, canon, {}});
    groups[it->second].members.push_back(static_cast<int>(i));
  }
  return groups;
}

TrainState make_train_state(const TrainConfig& cfg, int num_items) {
  TrainState st;
  Rng child_rng = make_rng(cfg.seed, 0xC41D);
  st.child = make_logic_space(num_items, cfg.embedding_dim, cfg.embedding_dim,
                              child_rng);
  Rng ctrl_rng = make_rng(cfg.seed, 0xC091);
  st.controller = make_controller_space(num_items, cfg.embedding_dim,
                                        cfg.embedding_dim,
                                        std::max(cfg.history_length, 1),
                                        ctrl_rng);
  st.baseline.decay = cfg.baseline_decay;
  return st;
}

SampleTrace propose_architecture(const ControllerSpace& controller,
                                 std::span<const int> items, RunMode mode,
                                 SampleStrategy strategy, Rng& rng) {
  if (mode == RunMode::ncr_fixed) {
    SampleTrace trace;
    trace.arch = fixed_conjunction(static_cast<int>(items.size()));
    return trace;
  }
  return sample_architecture(controller, items, controller_mode_of(mode),
                             strategy, rng);
}

ScorerCache build_scorer_cache(const LogicSpace& child) {
  const Tensor& w0 = child.params.at("or.w0");  // hidden x 2d
  const Tensor& emb = child.params.at("emb");
  const int hidden = static_cast<int>(w0.rows());
  const int d = child.dim;
  ScorerCache cache;
  cache.item_proj = Tensor::matrix(emb.rows(), hidden);
  for (std::size_t k = 0; k < emb.rows(); ++k) {
    const double* e = emb.row(k).data();
    double* out = cache.item_proj.row(k).data();
    for (int r = 0; r < hidden; ++r) {
      const double* wr = w0.data.data() + static_cast<std::size_t>(r) * w0.cols();
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += wr[d + j] * e[j];
      out[r] = s;
    }
  }
  return cache;
}

std::vector<double> score_candidates(const LogicSpace& child,
                                     const LogicArchitecture& arch,
                                     const std::vector<int>& history,
                                     const std::vector<int>& candidates,
                                     const ScorerCache* cache) {
  std::vector<std::span<const double>> inputs;
  inputs.reserve(history.size());
  for (int item : history) inputs.push_back(child.embedding(item));
  const Tensor premise = assemble_premise(child, arch, inputs);
  std::vector<double> scores(candidates.size());
  if (cache == nullptr) {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      scores[i] = horn_score(child, premise.span(), candidates[i]);
    return scores;
  }
  // Split the OR module's first layer between the (fixed) negated premise
  // and the per-candidate embedding.
  const Tensor negated = apply_not(child, premise.span());
  const Tensor& w0 = child.params.at("or.w0");
  const Tensor& b0 = child.params.at("or.b0");
  const Tensor& w1 = child.params.at("or.w1");
  const Tensor& b1 = child.params.at("or.b1");
  const int hidden = static_cast<int>(w0.rows());
  const int d = child.dim;
  std::vector<double> base(hidden);
  for (int r = 0; r < hidden; ++r) {
    const double* wr = w0.data.data() + static_cast<std::size_t>(r) * w0.cols();
    double s = b0.data[r];
    for (int j = 0; j < d; ++j) s += wr[j] * negated.data[j];
    base[r] = s;
  }
  std::vector<double> act(hidden), out(d);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double* proj = cache->item_proj.row(candidates[i]).data();
    for (int r = 0; r < hidden; ++r) {
      const double pre = base[r] + proj[r];
      act[r] = pre > 0.0 ? pre : 0.0;
    }
    for (int r = 0; r < d; ++r) {
      const double* wr = w1.data.data() + static_cast<std::size_t>(r) * w1.cols();
      double s = b1.data[r];
      for (int j = 0; j < hidden; ++j) s += wr[j] * act[j];
      out[r] = s;
    }
    scores[i] = truth_score(child, {out.data(), out.size()});
  }
  return scores;
}

ChildLossNodes child_batch_loss(Tape& tape, const LogicSpace& child,
                                const LogicArchitecture& arch,
                                const std::vector<ChildExample>& batch,
                                double logic_reg_weight, double temperature) {
  if (batch.empty()) throw Error::domain("child_batch_loss: empty batch");
  const Tensor& emb = child.params.at("emb");
  std::vector<int> bpr_nodes;
  std::vector<int> reg_items;
  bpr_nodes.reserve(batch.size());
  for (const ChildExample& ex : batch) {
    std::vector<int> inputs;
    inputs.reserve(ex.sample->history.size());
    for (int item : ex.sample->history) {
      child.embedding(item);  // vocabulary check
      inputs.push_back(tape.param_row("emb", emb, item));
      reg_items.push_back(item);
    }
    const int premise = assemble_premise(tape, child, arch, inputs);
    const int pos = horn_score(tape, child, premise, ex.sample->target);
    const int neg = horn_score(tape, child, premise, ex.negative);
    reg_items.push_back(ex.sample->target);
    reg_items.push_back(ex.negative);
    int diff = tape.sub(pos, neg);
    if (temperature != 1.0) diff = tape.scale(diff, 1.0 / temperature);
    bpr_nodes.push_back(tape.softplus(tape.neg(diff)));
  }
  ChildLossNodes nodes{};
  nodes.mean_bpr = tape.scale(tape.addn(bpr_nodes),
                              1.0 / static_cast<double>(bpr_nodes.size()));
  std::sort(reg_items.begin(), reg_items.end());
  reg_items.erase(std::unique(reg_items.begin(), reg_items.end()),
                  reg_items.end());
  std::vector<int> reg_nodes;
  reg_nodes.reserve(reg_items.size());
  for (int item : reg_items) reg_nodes.push_back(tape.param_row("emb", emb, item));
  nodes.reg = logic_regularizer(tape, child, reg_nodes);
  nodes.loss = tape.add(nodes.mean_bpr, tape.scale(nodes.reg, logic_reg_weight));
  return nodes;
}

double apply_l2_and_densify(const ParameterSet& params, GradMap& grads,
                            double weight) {
  double norm_sq = 0.0;
  for (const auto& [name, entry] : params.entries) {
    Tensor& g = grads[name];
    if (g.numel() == 0) {
      g.shape = entry.value.shape;
      g.data.assign(entry.value.numel(), 0.0);
    }
    for (std::size_t i = 0; i < entry.value.numel(); ++i) {
      const double v = entry.value.data[i];
      norm_sq += v * v;
      g.data[i] += 2.0 * weight * v;
    }
  }
  return norm_sq;
}

ChildEpochStats train_child_epoch(const SequenceData& data,
                                  const InteractionTable& table,
                                  const ControllerSpace& controller,
                                  LogicSpace& child, const TrainConfig& cfg,
                                  int epoch, Rng& rng) {
  if (data.train.empty()) throw Error::domain("train_child_epoch: no train data");
  const int num_items = static_cast<int>(table.num_items());

  // Interacted sets for negative sampling, built once.
  std::vector<std::vector<int>> interacted(table.num_users());
  for (const SequenceSample& s : data.train)
    if (interacted[s.user].empty())
      interacted[s.user] = table.interacted_items(s.user);

  const std::vector<int> order = shuffled_indices(data.train.size(), rng);
  AdamConfig adam;
  adam.lr = cfg.child_lr;

  ChildEpochStats stats;
  Tape tape;
  GradMap grads;
  std::vector<LogicArchitecture> archs;
  std::vector<int> negatives;
  for (std::size_t chunk_begin = 0; chunk_begin < order.size();
       chunk_begin += cfg.arch_gen_batch) {
    const std::size_t chunk_end =
        std::min(order.size(), chunk_begin + cfg.arch_gen_batch);
    archs.clear();
    negatives.clear();
    for (std::size_t i = chunk_begin; i < chunk_end; ++i) {
      const SequenceSample& s = data.train[order[i]];
      archs.push_back(propose_architecture(controller, s.history, cfg.mode,
                                           cfg.strategy, rng)
                          .arch);
      negatives.push_back(sample_negative(num_items, interacted[s.user], rng));
    }
    for (const ArchitectureGroup& group : group_by_architecture(archs)) {
      ++stats.groups;
      for (std::size_t b = 0; b < group.members.size();
           b += cfg.child_batch) {
        const std::size_t e =
            std::min(group.members.size(), b + cfg.child_batch);
        std::vector<ChildExample> batch;
        batch.reserve(e - b);
        for (std::size_t m = b; m < e; ++m) {
          const int chunk_idx = group.members[m];
          batch.push_back(
              {&data.train[order[chunk_begin + chunk_idx]], negatives[chunk_idx]});
        }
        tape.reset();
        grads.clear();
        const ChildLossNodes nodes = child_batch_loss(
            tape, child, group.arch, batch, cfg.logic_reg_weight,
            cfg.score_temperature);
        tape.backward(nodes.loss, grads);
        const double norm_sq =
            apply_l2_and_densify(child.params, grads, cfg.l2_weight);
        adam_update(child.params, grads, adam);

        const double w = static_cast<double>(batch.size());
        stats.mean_loss +=
            w * (tape.value_scalar(nodes.loss) + cfg.l2_weight * norm_sq);
        stats.mean_bpr += w * tape.value_scalar(nodes.mean_bpr);
        stats.mean_reg += w * tape.value_scalar(nodes.reg);
        stats.samples += batch.size();
        ++stats.batches;
      }
    }
  }
  stats.mean_loss /= static_cast<double>(stats.samples);
  stats.mean_bpr /= static_cast<double>(stats.samples);
  stats.mean_reg /= static_cast<double>(stats.samples);
  (void)epoch;
  return stats;
}

double reward(const std::vector<const SequenceSample*>& batch,
              const std::vector<const EvalCandidateSet*>& candidate_sets,
              const std::vector<LogicArchitecture>& archs,
              const LogicSpace& child, int cutoff, const ScorerCache* cache) {
  if (batch.empty()) throw Error::domain("reward: empty minibatch");
  if (batch.size() != candidate_sets.size() || batch.size() != archs.size())
    throw Error::dimension("reward: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto cands = candidate_sets[i]->candidates();
    const auto scores =
        score_candidates(child, archs[i], batch[i]->history, cands, cache);
    const int rank = rank_of_positive(cands, scores, candidate_sets[i]->positive);
    total += hit_at_k(rank, cutoff) + ndcg_at_k(rank, cutoff);
  }
  return total / static_cast<double>(batch.size());
}

ControllerStats train_controller_steps(
    const std::vector<SequenceSample>& valid,
    const std::vector<EvalCandidateSet>& candidate_sets,
    const LogicSpace& child, ControllerSpace& controller,
    MovingBaseline& baseline, const TrainConfig& cfg, int epoch, Rng& rng) {
  if (valid.empty())
    throw Error::domain("train_controller_steps: empty validation set");
  if (valid.size() != candidate_sets.size())
    throw Error::dimension("train_controller_steps: candidate sets mismatch");
  if (cfg.mode == RunMode::ncr_fixed)
    throw Error::domain("train_controller_steps: fixed template has no controller");

  const ControllerMode mode = controller_mode_of(cfg.mode);
  const ScorerCache cache = build_scorer_cache(child);
  AdamConfig adam;
  adam.lr = cfg.controller_lr;

  ControllerStats stats;
  Tape tape;
  GradMap grads;
  double reward_sum = 0.0;
  for (int step = 0; step < cfg.controller_steps; ++step) {
    const std::vector<int> order = shuffled_indices(valid.size(), rng);
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.controller_batch) {
      const std::size_t end =
          std::min(order.size(), begin + cfg.controller_batch);
      std::vector<const SequenceSample*> batch;
      std::vector<const EvalCandidateSet*> cands;
      std::vector<SampleTrace> traces;
      std::vector<LogicArchitecture> archs;
      for (std::size_t i = begin; i < end; ++i) {
        const SequenceSample& s = valid[order[i]];
        batch.push_back(&s);
        cands.push_back(&candidate_sets[order[i]]);
        traces.push_back(sample_architecture(controller, s.history, mode,
                                             SampleStrategy::sample, rng));
        archs.push_back(traces.back().arch);
      }
      const double r =
          reward(batch, cands, archs, child, cfg.reward_cutoff, &cache);

      tape.reset();
      grads.clear();
      std::vector<int> logps;
      logps.reserve(traces.size());
      for (std::size_t i = 0; i < traces.size(); ++i)
        logps.push_back(trace_log_prob(tape, controller, batch[i]->history,
                                       mode, traces[i].decisions));
      tape.backward(tape.addn(logps), grads);
      const double coeff = -(r - baseline.value);
      for (auto& [_, g] : grads)
        for (double& v : g.data) v *= coeff;
      // Dense update set for deterministic Adam bookkeeping.
      apply_l2_and_densify(controller.params, grads, 0.0);
      adam_update(controller.params, grads, adam);
      baseline.observe(r);

      reward_sum += r;
      ++stats.updates;
    }
  }
  stats.mean_reward = stats.updates ? reward_sum / stats.updates : 0.0;
  stats.final_baseline = baseline.value;
  (void)epoch;
  return stats;
}

Derivation derive(const ControllerSpace& controller, const LogicSpace& child,
                  const std::vector<int>& items,
                  const std::vector<int>& candidates, RunMode mode,
                  SampleStrategy strategy, Rng& rng, const ScorerCache* cache) {
  Derivation d;
  d.arch = propose_architecture(controller, items, mode, strategy, rng).arch;
  const auto scores = score_candidates(child, d.arch, items, candidates, cache);
  d.ranked.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    d.ranked.emplace_back(candidates[i], scores[i]);
  std::sort(d.ranked.begin(), d.ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return d;
}

Trainer::Trainer(InteractionTable table, TrainConfig cfg)
    : table_(std::move(table)), cfg_(cfg) {
  seq_ = build_sequences(table_, cfg_.history_length);
  if (seq_.train.empty() || seq_.valid.empty())
    throw Error::domain("Trainer: dataset too small for history length " +
                        std::to_string(cfg_.history_length));
  valid_cands_ = build_candidate_sets(table_, seq_.valid, cfg_.eval_negatives,
                                      derive_seed(cfg_.candidate_seed, 0x7A11));
  test_cands_ = build_candidate_sets(table_, seq_.test, cfg_.eval_negatives,
                                     derive_seed(cfg_.candidate_seed, 0x7E57));
  state_ = make_train_state(cfg_, static_cast<int>(table_.num_items()));
}

EpochLog Trainer::run_epoch() {
  EpochLog log;
  log.epoch = state_.epoch + 1;

  auto t0 = std::chrono::steady_clock::now();
  Rng child_rng = make_rng(cfg_.seed, 0xE90C, log.epoch);
  log.child = train_child_epoch(seq_, table_, state_.controller, state_.child,
                                cfg_, log.epoch, child_rng);
  log.wall_child_s = wall_seconds(t0);

  if (cfg_.mode != RunMode::ncr_fixed) {
    t0 = std::chrono::steady_clock::now();
    Rng ctrl_rng = make_rng(cfg_.seed, 0xE90D, log.epoch);
    log.controller = train_controller_steps(seq_.valid, valid_cands_,
                                            state_.child, state_.controller,
                                            state_.baseline, cfg_, log.epoch,
                                            ctrl_rng);
    log.wall_controller_s = wall_seconds(t0);
  }

  t0 = std::chrono::steady_clock::now();
  EvalOptions opts;
  opts.ks = {5, 10};
  if (std::find(opts.ks.begin(), opts.ks.end(), cfg_.reward_cutoff) ==
      opts.ks.end())
    opts.ks.push_back(cfg_.reward_cutoff);
  opts.seed = derive_seed(cfg_.seed, 0xE7A1, log.epoch);
  const MetricReport report =
      evaluate_split(seq_.valid, valid_cands_, opts, cfg_.strategy);
  const std::string kr = std::to_string(cfg_.reward_cutoff);
  log.val_hr10 = report.values.at("HR@10");
  log.val_ndcg10 = report.values.at("N@10");
  log.val_reward = report.values.at("HR@" + kr) + report.values.at("N@" + kr);
  log.wall_eval_s = wall_seconds(t0);

  state_.epoch += 1;
  return log;
}

MetricReport Trainer::evaluate_split(
    const std::vector<SequenceSample>& samples,
    const std::vector<EvalCandidateSet>& cands, const EvalOptions& options,
    SampleStrategy strategy) const {
  const ScorerCache cache = build_scorer_cache(state_.child);
  ScoreFn fn = [&](const SequenceSample& s, const std::vector<int>& candidates,
                   Rng& rng) {
    const SampleTrace trace = propose_architecture(
        state_.controller, s.history, cfg_.mode, strategy, rng);
    return score_candidates(state_.child, trace.arch, s.history, candidates,
                            &cache);
  };
  return evaluate(fn, samples, cands, options);
}

}  // namespace manas
