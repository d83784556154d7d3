#include "manas/nn.hpp"

#include <cmath>

#include "manas/error.hpp"

namespace manas {

Tensor& ParameterSet::add(const std::string& name, Tensor init) {
  if (entries.count(name))
    throw Error::domain("parameter already exists: " + name);
  Entry e;
  e.m.shape = init.shape;
  e.m.data.assign(init.numel(), 0.0);
  e.v = e.m;
  e.value = std::move(init);
  return entries.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = entries.find(name);
  if (it == entries.end()) throw Error::domain("unknown parameter: " + name);
  return it->second.value;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw Error::domain("unknown parameter: " + name);
  return it->second.value;
}

std::size_t ParameterSet::total_params() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries) n += e.value.numel();
  return n;
}

void adam_update(ParameterSet& params, const GradMap& grads,
                 const AdamConfig& config) {
  for (const auto& [name, g] : grads) {
    auto it = params.entries.find(name);
    if (it == params.entries.end())
      throw Error::domain("adam_update: gradient for unknown parameter " + name);
    if (g.shape != it->second.value.shape)
      throw Error::dimension("adam_update: gradient shape mismatch for " + name);
  }
  params.step += 1;
  const double t = static_cast<double>(params.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    ParameterSet::Entry& e = params.entries.find(name)->second;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double gi = g.data[i];
      e.m.data[i] = config.beta1 * e.m.data[i] + (1.0 - config.beta1) * gi;
      e.v.data[i] = config.beta2 * e.v.data[i] + (1.0 - config.beta2) * gi * gi;
      const double mhat = e.m.data[i] / bc1;
      const double vhat = e.v.data[i] / bc2;
      e.value.data[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

namespace {
std::string wname(const MlpSpec& s, int layer) {
  return s.prefix + ".w" + std::to_string(layer);
}
std::string bname(const MlpSpec& s, int layer) {
  return s.prefix + ".b" + std::to_string(layer);
}
}  // namespace

void init_mlp(ParameterSet& params, const MlpSpec& spec, Rng& rng) {
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.widths[l], out = spec.widths[l + 1];
    const double stddev = std::sqrt(2.0 / (in + out));
    params.add(wname(spec, l),
               Tensor::gaussian({static_cast<std::size_t>(out),
                                 static_cast<std::size_t>(in)},
                                0.0, stddev, rng));
    params.add(bname(spec, l), Tensor::vector(out));
  }
}

Tensor mlp_forward(const ParameterSet& params, const MlpSpec& spec,
                   std::span<const double> input) {
  if (static_cast<int>(input.size()) != spec.input_dim())
    throw Error::dimension("mlp_forward: input dim " +
                           std::to_string(input.size()) + " != " +
                           std::to_string(spec.input_dim()));
  Tensor cur;
  cur.shape = {input.size()};
  cur.data.assign(input.begin(), input.end());
  for (int l = 0; l < spec.num_layers(); ++l) {
    const Tensor& W = params.at(wname(spec, l));
    const Tensor& b = params.at(bname(spec, l));
    Tensor next = Tensor::vector(W.rows());
    for (std::size_t i = 0; i < W.rows(); ++i) {
      const double* wr = W.data.data() + i * W.cols();
      double s = b.data[i];
      for (std::size_t j = 0; j < W.cols(); ++j) s += wr[j] * cur.data[j];
      next.data[i] = s;
    }
    if (l + 1 < spec.num_layers())
      for (auto& x : next.data) x = x > 0.0 ? x : 0.0;
    cur = std::move(next);
  }
  return cur;
}

int mlp_forward(Tape& tape, const ParameterSet& params, const MlpSpec& spec,
                int input) {
  if (tape.length(input) != spec.input_dim())
    throw Error::dimension("mlp_forward(tape): input dim mismatch");
  int cur = input;
  for (int l = 0; l < spec.num_layers(); ++l) {
    int w = tape.param(wname(spec, l), params.at(wname(spec, l)));
    int b = tape.param(bname(spec, l), params.at(bname(spec, l)));
    cur = tape.add(tape.matvec(w, cur), b);
    if (l + 1 < spec.num_layers()) cur = tape.relu(cur);
  }
  return cur;
}

void init_lstm(ParameterSet& params, const LstmSpec& spec, Rng& rng) {
  const auto h = static_cast<std::size_t>(spec.hidden_dim);
  const auto in = static_cast<std::size_t>(spec.input_dim);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(h));
  params.add(spec.prefix + ".w_ih", Tensor::gaussian({4 * h, in}, 0.0, stddev, rng));
  params.add(spec.prefix + ".w_hh", Tensor::gaussian({4 * h, h}, 0.0, stddev, rng));
  params.add(spec.prefix + ".b", Tensor::vector(4 * h));
}

LstmState lstm_zero_state(int hidden_dim) {
  return {Tensor::vector(hidden_dim), Tensor::vector(hidden_dim)};
}

void lstm_step(const ParameterSet& params, const LstmSpec& spec,
               std::span<const double> x, LstmState& state) {
  const int h = spec.hidden_dim;
  if (static_cast<int>(x.size()) != spec.input_dim ||
      static_cast<int>(state.h.numel()) != h ||
      static_cast<int>(state.c.numel()) != h)
    throw Error::dimension("lstm_step: dimension mismatch");
  const Tensor& Wih = params.at(spec.prefix + ".w_ih");
  const Tensor& Whh = params.at(spec.prefix + ".w_hh");
  const Tensor& b = params.at(spec.prefix + ".b");

  std::vector<double> gates(4 * static_cast<std::size_t>(h));
  for (int r = 0; r < 4 * h; ++r) {
    const double* wi = Wih.data.data() + static_cast<std::size_t>(r) * Wih.cols();
    const double* wh = Whh.data.data() + static_cast<std::size_t>(r) * Whh.cols();
    double s = b.data[r];
    for (std::size_t j = 0; j < x.size(); ++j) s += wi[j] * x[j];
    for (int j = 0; j < h; ++j) s += wh[j] * state.h.data[j];
    gates[r] = s;
  }
  for (int j = 0; j < h; ++j) {
    const double i = 1.0 / (1.0 + std::exp(-gates[j]));
    const double f = 1.0 / (1.0 + std::exp(-gates[h + j]));
    const double g = std::tanh(gates[2 * h + j]);
    const double o = 1.0 / (1.0 + std::exp(-gates[3 * h + j]));
    const double c = f * state.c.data[j] + i * g;
    state.c.data[j] = c;
    state.h.data[j] = o * std::tanh(c);
  }
}

std::pair<int, int> lstm_step(Tape& tape, const ParameterSet& params,
                              const LstmSpec& spec, int x, int h, int c) {
  const int hd = spec.hidden_dim;
  int wih = tape.param(spec.prefix + ".w_ih", params.at(spec.prefix + ".w_ih"));
  int whh = tape.param(spec.prefix + ".w_hh", params.at(spec.prefix + ".w_hh"));
  int b = tape.param(spec.prefix + ".b", params.at(spec.prefix + ".b"));
  std::vector<int> parts = {tape.matvec(wih, x), tape.matvec(whh, h), b};
  int gates = tape.addn(parts);
  int i = tape.sigmoid(tape.slice(gates, 0, hd));
  int f = tape.sigmoid(tape.slice(gates, hd, hd));
  int g = tape.tanh(tape.slice(gates, 2 * hd, hd));
  int o = tape.sigmoid(tape.slice(gates, 3 * hd, hd));
  int c_next = tape.add(tape.hadamard(f, c), tape.hadamard(i, g));
  int h_next = tape.hadamard(o, tape.tanh(c_next));
  return {h_next, c_next};
}

double finite_difference_check(
    const std::function<double(const ParameterSet&)>& f, ParameterSet& params,
    const GradMap& analytic, double perturbation) {
  if (perturbation <= 0.0)
    throw Error::domain("finite_difference_check: perturbation must be > 0");
  double worst = 0.0;
  for (const auto& [name, g] : analytic) {
    Tensor& value = params.at(name);
    if (g.shape != value.shape)
      throw Error::dimension("finite_difference_check: shape mismatch for " + name);
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value.data[i];
      value.data[i] = saved + perturbation;
      const double fp = f(params);
      value.data[i] = saved - perturbation;
      const double fm = f(params);
      value.data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw Error::domain("finite_difference_check: non-finite value at " + name);
      const double fd = (fp - fm) / (2.0 * perturbation);
      const double an = g.data[i];
      const double rel =
          std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace manas
