#pragma once

#include <array>
#include <span>
#include <vector>

#include "manas/architecture.hpp"
#include "manas/nn.hpp"

namespace manas {

// adaptive: raw candidates are represented by per-item embeddings, so the
// sampled architecture depends on the input sequence. positional: raw
// candidates are represented by position embeddings only, giving one global
// architecture distribution per sequence length.
enum class ControllerMode { adaptive, positional };

enum class SampleStrategy { sample, greedy };

// Policy network: LSTM plus a scalar scoring head for candidate variables
// (shared weight vector w1 and bias b1), a 2-way head for the AND/OR choice,
// controller-space item embeddings, position embeddings, and learned
// embeddings for each decision outcome fed back as the next LSTM input.
struct ControllerSpace {
  int num_items = 0;
  int dim = 64;
  int hidden = 64;
  int max_positions = 0;

  ParameterSet params;

  LstmSpec lstm_spec() const { return {"lstm", dim, hidden}; }
};

ControllerSpace make_controller_space(int num_items, int dim, int hidden,
                                      int max_positions, Rng& rng);

struct Decision {
  enum class Kind : std::uint8_t { kOp, kVar, kNegate };
  Kind kind;
  int choice;  // op: 0=AND 1=OR; var: slot id; negate: 0=no 1=yes

  bool operator==(const Decision&) const = default;
};

struct SampleTrace {
  LogicArchitecture arch;  // canonical
  std::vector<Decision> decisions;
  std::vector<double> log_probs;  // one per decision
  double total_log_prob = 0.0;    // ordered-path log probability
};

// One logit per candidate representation: l_i = w1 . (rep_i + h) + b1.
std::vector<double> variable_logits(
    const ControllerSpace& cs,
    const std::vector<std::span<const double>>& pool_reps,
    std::span<const double> h);

// 2 logits for {AND, OR} from the hidden state alone.
std::array<double, 2> op_logits(const ControllerSpace& cs,
                                std::span<const double> h);

// [-l, l]; index 1 means "couple with NOT", so P(NOT) = sigmoid(2l).
std::array<double, 2> not_logits(double selected_logit);

// Samples one architecture for `items` (n = items.size()). Decision
// schedule per layer: op, first operand, its NOT flag, second operand, its
// NOT flag; the LSTM advances once per decision, fed the embedding of the
// decision just made (initial input: the learned empty embedding; initial
// state: zero). A finished layer's slot enters the pool carrying the
// then-current hidden state as its representation. n = 1 returns the
// trivial architecture with log-prob 0.
SampleTrace sample_architecture(const ControllerSpace& cs,
                                std::span<const int> items,
                                ControllerMode mode, SampleStrategy strategy,
                                Rng& rng);

// Teacher-forced replay of a recorded decision sequence; returns the node
// holding the ordered-path log probability (the REINFORCE objective term).
int trace_log_prob(Tape& tape, const ControllerSpace& cs,
                   std::span<const int> items, ControllerMode mode,
                   const std::vector<Decision>& decisions);

// Log of the canonical-class probability: the sum over all ordered decision
// paths (2^(n-1) operand orderings) that canonicalize to `arch`. Test
// oracle; guarded at n <= 10.
double class_log_prob(const ControllerSpace& cs, const LogicArchitecture& arch,
                      std::span<const int> items, ControllerMode mode);
int class_log_prob(Tape& tape, const ControllerSpace& cs,
                   const LogicArchitecture& arch, std::span<const int> items,
                   ControllerMode mode);

}  // namespace manas
