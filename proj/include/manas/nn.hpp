#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "manas/tape.hpp"
#include "manas/tensor.hpp"

namespace manas {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameter group with per-tensor Adam moment accumulators and a
// shared step counter. std::map keeps iteration deterministic.
struct ParameterSet {
  struct Entry {
    Tensor value, m, v;
  };

  std::map<std::string, Entry> entries;
  std::int64_t step = 0;

  Tensor& add(const std::string& name, Tensor init);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return entries.count(name) > 0; }
  std::size_t total_params() const;
};

// Bias-corrected Adam step applied in place; updates exactly the parameters
// named in `grads`. A grads key with no matching parameter is an error.
void adam_update(ParameterSet& params, const GradMap& grads,
                 const AdamConfig& config);

// MLP with parameters "<prefix>.w<k>" (out x in) and "<prefix>.b<k>".
// ReLU on hidden layers, linear output.
struct MlpSpec {
  std::string prefix;
  std::vector<int> widths;  // [in, hidden..., out]

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
};

void init_mlp(ParameterSet& params, const MlpSpec& spec, Rng& rng);
Tensor mlp_forward(const ParameterSet& params, const MlpSpec& spec,
                   std::span<const double> input);
int mlp_forward(Tape& tape, const ParameterSet& params, const MlpSpec& spec,
                int input);

// Single LSTM cell. Parameters "<prefix>.w_ih" (4h x in), "<prefix>.w_hh"
// (4h x h), "<prefix>.b" (4h); gate row order [input, forget, cell, output].
struct LstmSpec {
  std::string prefix;
  int input_dim = 0;
  int hidden_dim = 0;
};

void init_lstm(ParameterSet& params, const LstmSpec& spec, Rng& rng);

struct LstmState {
  Tensor h, c;
};

LstmState lstm_zero_state(int hidden_dim);

// state is advanced in place: h = o * tanh(c'), c' = f * c + i * g.
void lstm_step(const ParameterSet& params, const LstmSpec& spec,
               std::span<const double> x, LstmState& state);

// Tape variant; returns (h, c) node ids.
std::pair<int, int> lstm_step(Tape& tape, const ParameterSet& params,
                              const LstmSpec& spec, int x, int h, int c);

// Central-difference gradient oracle. Perturbs every coordinate of every
// parameter named in `analytic` and returns the max over coordinates of
//   |g_fd - g_an| / max(|g_fd|, |g_an|, 1e-8).
// `f` must be deterministic; params are restored on exit.
double finite_difference_check(
    const std::function<double(const ParameterSet&)>& f, ParameterSet& params,
    const GradMap& analytic, double perturbation);

}  // namespace manas
