#include "manas/controller.hpp"

#include <algorithm>
#include <cmath>

#include "manas/error.hpp"

namespace manas {

ControllerSpace make_controller_space(int num_items, int dim, int hidden,
                                      int max_positions, Rng& rng) {
  if (num_items < 1 || dim < 1 || hidden < 1 || max_positions < 1)
    throw Error::domain("make_controller_space: bad dimensions");
  ControllerSpace cs;
  cs.num_items = num_items;
  cs.dim = dim;
  cs.hidden = hidden;
  cs.max_positions = max_positions;
  init_lstm(cs.params, cs.lstm_spec(), rng);
  cs.params.add("w1", Tensor::gaussian({static_cast<std::size_t>(hidden)}, 0.0,
                                       0.1, rng));
  cs.params.add("b1", Tensor::vector(1));
  cs.params.add("op.w", Tensor::gaussian({2, static_cast<std::size_t>(hidden)},
                                         0.0, 0.1, rng));
  cs.params.add("op.b", Tensor::vector(2));
  cs.params.add("emb",
                Tensor::gaussian({static_cast<std::size_t>(num_items),
                                  static_cast<std::size_t>(dim)},
                                 0.0, 0.01, rng));
  cs.params.add("pos",
                Tensor::gaussian({static_cast<std::size_t>(max_positions),
                                  static_cast<std::size_t>(dim)},
                                 0.0, 0.01, rng));
  for (const char* name :
       {"step.empty", "step.op_and", "step.op_or", "step.not_yes", "step.not_no"})
    cs.params.add(name, Tensor::gaussian({static_cast<std::size_t>(dim)}, 0.0,
                                         0.01, rng));
  return cs;
}

std::vector<double> variable_logits(
    const ControllerSpace& cs,
    const std::vector<std::span<const double>>& pool_reps,
    std::span<const double> h) {
  if (pool_reps.empty()) throw Error::domain("variable_logits: empty pool");
  const Tensor& w1 = cs.params.at("w1");
  const double b1 = cs.params.at("b1").data[0];
  if (static_cast<int>(h.size()) != cs.hidden)
    throw Error::dimension("variable_logits: bad hidden state size");
  std::vector<double> logits(pool_reps.size());
  for (std::size_t i = 0; i < pool_reps.size(); ++i) {
    const auto& rep = pool_reps[i];
    if (rep.size() != h.size())
      throw Error::dimension("variable_logits: rep/hidden size mismatch");
    double s = b1;
    for (std::size_t j = 0; j < h.size(); ++j)
      s += w1.data[j] * (rep[j] + h[j]);
    logits[i] = s;
  }
  return logits;
}

std::array<double, 2> op_logits(const ControllerSpace& cs,
                                std::span<const double> h) {
  const Tensor& w = cs.params.at("op.w");
  const Tensor& b = cs.params.at("op.b");
  std::array<double, 2> out{};
  for (int r = 0; r < 2; ++r) {
    double s = b.data[r];
    const double* wr = w.data.data() + static_cast<std::size_t>(r) * w.cols();
    for (std::size_t j = 0; j < h.size(); ++j) s += wr[j] * h[j];
    out[r] = s;
  }
  return out;
}

std::array<double, 2> not_logits(double selected_logit) {
  return {-selected_logit, selected_logit};
}

namespace {

// log softmax over `logits`, returning per-entry log probabilities.
void log_softmax(std::span<const double> logits, std::vector<double>& out) {
  out.resize(logits.size());
  double m = logits[0];
  for (double l : logits) m = std::max(m, l);
  double s = 0.0;
  for (double l : logits) s += std::exp(l - m);
  const double lse = m + std::log(s);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

int sample_categorical(std::span<const double> log_probs, Rng& rng) {
  const double u = rand_uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    acc += std::exp(log_probs[i]);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(log_probs.size()) - 1;
}

int argmax_first(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

void check_items(const ControllerSpace& cs, std::span<const int> items,
                 ControllerMode mode) {
  const int n = static_cast<int>(items.size());
  if (n < 1) throw Error::domain("controller: empty item sequence");
  if (mode == ControllerMode::adaptive) {
    for (int it : items)
      if (it < 0 || it >= cs.num_items)
        throw Error::vocabulary("controller: unknown item id " +
                                std::to_string(it));
  } else if (n > cs.max_positions) {
    throw Error::domain("controller: sequence length " + std::to_string(n) +
                        " exceeds position table (" +
                        std::to_string(cs.max_positions) + ")");
  }
}

// Stochastic forward pass. Also serves scripted replay (class_log_prob
// paths) when `script` is set.
struct FastPolicy {
  const ControllerSpace& cs;
  ControllerMode mode;
  SampleStrategy strategy;
  Rng* rng = nullptr;
  const std::vector<Decision>* script = nullptr;
  std::size_t script_pos = 0;

  LstmState state;
  Tensor pending;
  std::vector<int> slots;    // ascending; new slots append with larger ids
  std::vector<Tensor> reps;  // parallel to slots
  double chosen_logit = 0.0;

  std::vector<Decision> decisions;
  std::vector<double> log_probs;
  double total = 0.0;
  std::vector<double> scratch_;

  FastPolicy(const ControllerSpace& c, ControllerMode m, SampleStrategy s,
             std::span<const int> items)
      : cs(c), mode(m), strategy(s), state(lstm_zero_state(c.hidden)) {
    pending = Tensor::vector(cs.dim);
    const Tensor& empty = cs.params.at("step.empty");
    std::copy(empty.data.begin(), empty.data.end(), pending.data.begin());
    const int n = static_cast<int>(items.size());
    const Tensor& table =
        cs.params.at(mode == ControllerMode::adaptive ? "emb" : "pos");
    for (int j = 0; j < n; ++j) {
      slots.push_back(j);
      const int row = mode == ControllerMode::adaptive ? items[j] : j;
      Tensor rep = Tensor::vector(cs.dim);
      std::copy(table.row(row).begin(), table.row(row).end(), rep.data.begin());
      reps.push_back(std::move(rep));
    }
  }

  void advance() { lstm_step(cs.params, cs.lstm_spec(), pending.span(), state); }

  void set_pending(const Tensor& t) {
    std::copy(t.data.begin(), t.data.end(), pending.data.begin());
  }

  int pick(std::span<const double> logits, int forced_index) {
    log_softmax(logits, scratch_);
    int idx;
    if (script != nullptr)
      idx = forced_index;
    else if (strategy == SampleStrategy::greedy)
      idx = argmax_first(logits);
    else
      idx = sample_categorical(scratch_, *rng);
    log_probs.push_back(scratch_[idx]);
    total += scratch_[idx];
    return idx;
  }

  Decision next_scripted() {
    if (script_pos >= script->size())
      throw Error::domain("controller replay: script exhausted");
    return (*script)[script_pos++];
  }

  int decide_op() {
    auto logits = op_logits(cs, state.h.span());
    int forced = script ? next_scripted().choice : -1;
    int idx = pick(logits, forced);
    decisions.push_back({Decision::Kind::kOp, idx});
    set_pending(cs.params.at(idx == 0 ? "step.op_and" : "step.op_or"));
    return idx;
  }

  int decide_var() {
    std::vector<std::span<const double>> pool_view;
    pool_view.reserve(reps.size());
    for (const auto& r : reps) pool_view.push_back(r.span());
    auto logits = variable_logits(cs, pool_view, state.h.span());
    int forced = -1;
    if (script) {
      const int slot = next_scripted().choice;
      auto it = std::find(slots.begin(), slots.end(), slot);
      if (it == slots.end())
        throw Error::domain("controller replay: slot not in pool");
      forced = static_cast<int>(it - slots.begin());
    }
    int idx = pick(logits, forced);
    chosen_logit = logits[idx];
    const int slot = slots[idx];
    decisions.push_back({Decision::Kind::kVar, slot});
    set_pending(reps[idx]);
    slots.erase(slots.begin() + idx);
    reps.erase(reps.begin() + idx);
    return slot;
  }

  int decide_not() {
    auto logits = not_logits(chosen_logit);
    int forced = script ? next_scripted().choice : -1;
    int idx = pick(logits, forced);
    decisions.push_back({Decision::Kind::kNegate, idx});
    set_pending(cs.params.at(idx == 1 ? "step.not_yes" : "step.not_no"));
    return idx;
  }

  void create_slot(int slot_id) {
    slots.push_back(slot_id);
    Tensor rep = state.h;
    reps.push_back(std::move(rep));
  }
};

// Teacher-forced tape pass; mirrors FastPolicy's schedule with node ids.
struct TapePolicy {
  Tape& tape;
  const ControllerSpace& cs;
  ControllerMode mode;
  const std::vector<Decision>& script;
  std::size_t script_pos = 0;

  int h, c;
  int pending;
  std::vector<int> slots;
  std::vector<int> reps;  // node ids
  int chosen_logit_node = -1;
  std::vector<int> log_prob_nodes;

  TapePolicy(Tape& t, const ControllerSpace& c2, ControllerMode m,
             std::span<const int> items, const std::vector<Decision>& d)
      : tape(t), cs(c2), mode(m), script(d) {
    Tensor zero = Tensor::vector(cs.hidden);
    h = tape.input(zero.span());
    c = tape.input(zero.span());
    pending = tape.param("step.empty", cs.params.at("step.empty"));
    const char* table = mode == ControllerMode::adaptive ? "emb" : "pos";
    for (int j = 0; j < static_cast<int>(items.size()); ++j) {
      const int row = mode == ControllerMode::adaptive ? items[j] : j;
      slots.push_back(j);
      reps.push_back(tape.param_row(table, cs.params.at(table), row));
    }
  }

  Decision next() {
    if (script_pos >= script.size())
      throw Error::domain("trace_log_prob: decision list too short");
    return script[script_pos++];
  }

  void advance() {
    auto [nh, nc] = lstm_step(tape, cs.params, cs.lstm_spec(), pending, h, c);
    h = nh;
    c = nc;
  }

  int decide_op() {
    Decision d = next();
    if (d.kind != Decision::Kind::kOp)
      throw Error::domain("trace_log_prob: expected op decision");
    int w = tape.param("op.w", cs.params.at("op.w"));
    int b = tape.param("op.b", cs.params.at("op.b"));
    int logits = tape.add(tape.matvec(w, h), b);
    log_prob_nodes.push_back(tape.log_softmax_pick(logits, d.choice));
    pending = tape.param(d.choice == 0 ? "step.op_and" : "step.op_or",
                         cs.params.at(d.choice == 0 ? "step.op_and" : "step.op_or"));
    return d.choice;
  }

  int decide_var() {
    Decision d = next();
    if (d.kind != Decision::Kind::kVar)
      throw Error::domain("trace_log_prob: expected var decision");
    int w1 = tape.param("w1", cs.params.at("w1"));
    int b1 = tape.param("b1", cs.params.at("b1"));
    std::vector<int> logit_nodes(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i)
      logit_nodes[i] = tape.add(tape.dot(w1, tape.add(reps[i], h)), b1);
    auto it = std::find(slots.begin(), slots.end(), d.choice);
    if (it == slots.end())
      throw Error::domain("trace_log_prob: slot not in pool");
    const int idx = static_cast<int>(it - slots.begin());
    int logits = tape.cat_scalars(logit_nodes);
    log_prob_nodes.push_back(tape.log_softmax_pick(logits, idx));
    chosen_logit_node = logit_nodes[idx];
    pending = reps[idx];
    slots.erase(slots.begin() + idx);
    reps.erase(reps.begin() + idx);
    return d.choice;
  }

  int decide_not() {
    Decision d = next();
    if (d.kind != Decision::Kind::kNegate)
      throw Error::domain("trace_log_prob: expected negate decision");
    std::vector<int> pair = {tape.neg(chosen_logit_node), chosen_logit_node};
    int logits = tape.cat_scalars(pair);
    log_prob_nodes.push_back(tape.log_softmax_pick(logits, d.choice));
    const char* name = d.choice == 1 ? "step.not_yes" : "step.not_no";
    pending = tape.param(name, cs.params.at(name));
    return d.choice;
  }

  void create_slot(int slot_id) {
    slots.push_back(slot_id);
    reps.push_back(h);
  }
};

// The shared decision schedule. Returns the produced steps.
template <typename Policy>
std::vector<ArchStep> run_schedule(Policy& p, int n) {
  std::vector<ArchStep> steps;
  for (int layer = 0; layer + 1 < n; ++layer) {
    p.advance();
    const int op = p.decide_op();
    p.advance();
    const int first = p.decide_var();
    p.advance();
    const int neg_first = p.decide_not();
    p.advance();
    const int second = p.decide_var();
    p.advance();
    const int neg_second = p.decide_not();
    p.create_slot(n + layer);
    steps.push_back({op == 0 ? LogicOp::kAnd : LogicOp::kOr, first, second,
                     neg_first != 0, neg_second != 0});
  }
  return steps;
}

}  // namespace

SampleTrace sample_architecture(const ControllerSpace& cs,
                                std::span<const int> items,
                                ControllerMode mode, SampleStrategy strategy,
                                Rng& rng) {
  check_items(cs, items, mode);
  const int n = static_cast<int>(items.size());
  SampleTrace trace;
  if (n == 1) {
    trace.arch = LogicArchitecture{1, {}};
    return trace;
  }
  FastPolicy p(cs, mode, strategy, items);
  p.rng = &rng;
  auto steps = run_schedule(p, n);
  trace.arch = canonicalize(LogicArchitecture{n, std::move(steps)});
  trace.decisions = std::move(p.decisions);
  trace.log_probs = std::move(p.log_probs);
  trace.total_log_prob = p.total;
  return trace;
}

int trace_log_prob(Tape& tape, const ControllerSpace& cs,
                   std::span<const int> items, ControllerMode mode,
                   const std::vector<Decision>& decisions) {
  check_items(cs, items, mode);
  const int n = static_cast<int>(items.size());
  if (n == 1) {
    Tensor zero = Tensor::scalar(0.0);
    return tape.input(zero.span());
  }
  TapePolicy p(tape, cs, mode, items, decisions);
  run_schedule(p, n);
  if (p.script_pos != decisions.size())
    throw Error::domain("trace_log_prob: unused trailing decisions");
  return tape.addn(p.log_prob_nodes);
}

namespace {

// All ordered decision sequences whose canonical form is `arch`: two
// operand orders per step.
void enumerate_orderings(const LogicArchitecture& arch, int step,
                         std::vector<Decision>& prefix,
                         std::vector<std::vector<Decision>>& out) {
  if (step == static_cast<int>(arch.steps.size())) {
    out.push_back(prefix);
    return;
  }
  const ArchStep& s = arch.steps[step];
  const int op_choice = s.op == LogicOp::kAnd ? 0 : 1;
  for (int order = 0; order < 2; ++order) {
    const int a = order == 0 ? s.left : s.right;
    const int b = order == 0 ? s.right : s.left;
    const bool na = order == 0 ? s.neg_left : s.neg_right;
    const bool nb = order == 0 ? s.neg_right : s.neg_left;
    prefix.push_back({Decision::Kind::kOp, op_choice});
    prefix.push_back({Decision::Kind::kVar, a});
    prefix.push_back({Decision::Kind::kNegate, na ? 1 : 0});
    prefix.push_back({Decision::Kind::kVar, b});
    prefix.push_back({Decision::Kind::kNegate, nb ? 1 : 0});
    enumerate_orderings(arch, step + 1, prefix, out);
    prefix.resize(prefix.size() - 5);
  }
}

std::vector<std::vector<Decision>> class_orderings(
    const LogicArchitecture& arch) {
  if (arch.n > 10)
    throw Error::domain("class_log_prob: n too large for ordering sum");
  auto violations = validate(arch);
  if (!violations.empty())
    throw Error::domain("class_log_prob: invalid architecture: " +
                        violations.front().rule);
  std::vector<std::vector<Decision>> out;
  std::vector<Decision> prefix;
  enumerate_orderings(canonicalize(arch), 0, prefix, out);
  return out;
}

}  // namespace

double class_log_prob(const ControllerSpace& cs, const LogicArchitecture& arch,
                      std::span<const int> items, ControllerMode mode) {
  check_items(cs, items, mode);
  if (arch.n != static_cast<int>(items.size()))
    throw Error::dimension("class_log_prob: arch/items length mismatch");
  if (arch.n == 1) return 0.0;
  std::vector<double> path_logps;
  for (const auto& script : class_orderings(arch)) {
    FastPolicy p(cs, mode, SampleStrategy::sample, items);
    p.script = &script;
    run_schedule(p, arch.n);
    path_logps.push_back(p.total);
  }
  double m = path_logps[0];
  for (double v : path_logps) m = std::max(m, v);
  double s = 0.0;
  for (double v : path_logps) s += std::exp(v - m);
  return m + std::log(s);
}

int class_log_prob(Tape& tape, const ControllerSpace& cs,
                   const LogicArchitecture& arch, std::span<const int> items,
                   ControllerMode mode) {
  check_items(cs, items, mode);
  if (arch.n != static_cast<int>(items.size()))
    throw Error::dimension("class_log_prob: arch/items length mismatch");
  if (arch.n == 1) {
    Tensor zero = Tensor::scalar(0.0);
    return tape.input(zero.span());
  }
  std::vector<int> path_nodes;
  for (const auto& script : class_orderings(arch))
    path_nodes.push_back(trace_log_prob(tape, cs, items, mode, script));
  return tape.logsumexp(tape.cat_scalars(path_nodes));
}

}  // namespace manas
