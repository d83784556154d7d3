#include "manas/tape.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "manas/error.hpp"

namespace manas {

namespace {
constexpr std::size_t kExternal = static_cast<std::size_t>(-1);

double stable_softplus(double x) {
  // log(1 + e^x) without overflow for large |x|.
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}
}  // namespace

int Tape::push(Node n, int value_len) {
  n.len = value_len;
  if (n.ext == nullptr) {
    n.voff = buf_.size();
    buf_.resize(buf_.size() + static_cast<std::size_t>(value_len));
  } else {
    n.voff = kExternal;
  }
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

double* Tape::val_ptr(int id) {
  Node& n = nodes_[id];
  return n.voff == kExternal ? nullptr : buf_.data() + n.voff;
}

const double* Tape::val_ptr(int id) const {
  const Node& n = nodes_[id];
  return n.voff == kExternal ? n.ext : buf_.data() + n.voff;
}

std::span<const double> Tape::value(int id) const {
  return {val_ptr(id), static_cast<std::size_t>(nodes_[id].len)};
}

void Tape::check_vec(int id, const char* who) const {
  if (nodes_[id].cols != 0)
    throw Error::dimension(std::string(who) + ": expected rank-1 operand");
}

int Tape::register_param(const std::string& name, const Tensor& t) {
  auto it = param_ids_.find(&t);
  if (it != param_ids_.end()) return it->second;
  params_.push_back({name, &t});
  int pid = static_cast<int>(params_.size()) - 1;
  param_ids_.emplace(&t, pid);
  return pid;
}

int Tape::input(std::span<const double> v) {
  Node n;
  n.op = Op::kInput;
  int id = push(n, static_cast<int>(v.size()));
  std::memcpy(val_ptr(id), v.data(), v.size() * sizeof(double));
  return id;
}

int Tape::param(const std::string& name, const Tensor& t) {
  int pid = register_param(name, t);
  auto it = param_node_cache_.find(pid);
  if (it != param_node_cache_.end()) return it->second;
  Node n;
  n.op = Op::kParam;
  n.ext = t.data.data();
  n.pid = pid;
  if (t.rank() == 2) {
    n.rows = static_cast<int>(t.rows());
    n.cols = static_cast<int>(t.cols());
  }
  int id = push(n, static_cast<int>(t.numel()));
  param_node_cache_.emplace(pid, id);
  return id;
}

int Tape::param_row(const std::string& name, const Tensor& t, int row) {
  if (t.rank() != 2 || row < 0 || static_cast<std::size_t>(row) >= t.rows())
    throw Error::dimension("param_row: bad row " + std::to_string(row) +
                           " for " + name);
  int pid = register_param(name, t);
  std::uint64_t key = (static_cast<std::uint64_t>(pid) << 32) |
                      static_cast<std::uint32_t>(row);
  auto it = row_cache_.find(key);
  if (it != row_cache_.end()) return it->second;
  Node n;
  n.op = Op::kParamRow;
  n.ext = t.data.data() + static_cast<std::size_t>(row) * t.cols();
  n.pid = pid;
  n.aux = row;
  int id = push(n, static_cast<int>(t.cols()));
  row_cache_.emplace(key, id);
  return id;
}

int Tape::matvec(int w, int x) {
  // Copy shape fields up front: push() may reallocate nodes_.
  const int rows = nodes_[w].rows, cols = nodes_[w].cols;
  if (cols == 0) throw Error::dimension("matvec: W must be rank-2");
  if (cols != nodes_[x].len)
    throw Error::dimension("matvec: W cols " + std::to_string(cols) +
                           " != x len " + std::to_string(nodes_[x].len));
  Node n;
  n.op = Op::kMatVec;
  n.in0 = w;
  n.in1 = x;
  int id = push(n, rows);
  const double* W = val_ptr(w) ? val_ptr(w) : nodes_[w].ext;
  const double* xv = this->value(x).data();
  double* y = val_ptr(id);
  for (int i = 0; i < rows; ++i) {
    const double* wr = W + static_cast<std::size_t>(i) * cols;
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += wr[j] * xv[j];
    y[i] = s;
  }
  return id;
}

int Tape::add(int a, int b) {
  if (nodes_[a].len != nodes_[b].len) throw Error::dimension("add: length mismatch");
  Node n;
  n.op = Op::kAdd;
  n.in0 = a;
  n.in1 = b;
  int id = push(n, nodes_[a].len);
  const double* av = value(a).data();
  const double* bv = value(b).data();
  double* y = val_ptr(id);
  for (int i = 0; i < nodes_[id].len; ++i) y[i] = av[i] + bv[i];
  return id;
}

int Tape::addn(std::span<const int> xs) {
  if (xs.empty()) throw Error::dimension("addn: no operands");
  int len = nodes_[xs[0]].len;
  for (int x : xs)
    if (nodes_[x].len != len) throw Error::dimension("addn: length mismatch");
  Node n;
  n.op = Op::kAddN;
  n.ins_beg = static_cast<int>(ins_pool_.size());
  n.ins_len = static_cast<int>(xs.size());
  ins_pool_.insert(ins_pool_.end(), xs.begin(), xs.end());
  int id = push(n, len);
  double* y = val_ptr(id);
  std::memset(y, 0, sizeof(double) * len);
  for (int x : xs) {
    const double* xv = value(x).data();
    for (int i = 0; i < len; ++i) y[i] += xv[i];
  }
  return id;
}

int Tape::sub(int a, int b) {
  if (nodes_[a].len != nodes_[b].len) throw Error::dimension("sub: length mismatch");
  Node n;
  n.op = Op::kSub;
  n.in0 = a;
  n.in1 = b;
  int id = push(n, nodes_[a].len);
  const double* av = value(a).data();
  const double* bv = value(b).data();
  double* y = val_ptr(id);
  for (int i = 0; i < nodes_[id].len; ++i) y[i] = av[i] - bv[i];
  return id;
}

int Tape::neg(int x) { return affine(x, -1.0, 0.0); }
int Tape::scale(int x, double a) { return affine(x, a, 0.0); }

int Tape::affine(int x, double a, double b) {
  Node n;
  n.op = Op::kAffine;
  n.in0 = x;
  n.a = a;
  n.b = b;
  int id = push(n, nodes_[x].len);
  const double* xv = value(x).data();
  double* y = val_ptr(id);
  for (int i = 0; i < nodes_[id].len; ++i) y[i] = a * xv[i] + b;
  return id;
}

int Tape::relu(int x) {
  Node n;
  n.op = Op::kRelu;
  n.in0 = x;
  int id = push(n, nodes_[x].len);
  const double* xv = value(x).data();
  double* y = val_ptr(id);
  for (int i = 0; i < nodes_[id].len; ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return id;
}

int Tape::tanh(int x) {
  Node n;
  n.op = Op::kTanh;
  n.in0 = x;
  int id = push(n, nodes_[x].len);
  const double* xv = value(x).data();
  double* y = val_ptr(id);
  for (int i = 0; i < nodes_[id].len; ++i) y[i] = std::tanh(xv[i]);
  return id;
}

int Tape::sigmoid(int x) {
  Node n;
  n.op = Op::kSigmoid;
  n.in0 = x;
  int id = push(n, nodes_[x].len);
  const double* xv = value(x).data();
  double* y = val_ptr(id);
  for (int i = 0; i < nodes_[id].len; ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return id;
}

int Tape::softplus(int x) {
  Node n;
  n.op = Op::kSoftplus;
  n.in0 = x;
  int id = push(n, nodes_[x].len);
  const double* xv = value(x).data();
  double* y = val_ptr(id);
  for (int i = 0; i < nodes_[id].len; ++i) y[i] = stable_softplus(xv[i]);
  return id;
}

int Tape::hadamard(int a, int b) {
  if (nodes_[a].len != nodes_[b].len)
    throw Error::dimension("hadamard: length mismatch");
  Node n;
  n.op = Op::kHadamard;
  n.in0 = a;
  n.in1 = b;
  int id = push(n, nodes_[a].len);
  const double* av = value(a).data();
  const double* bv = value(b).data();
  double* y = val_ptr(id);
  for (int i = 0; i < nodes_[id].len; ++i) y[i] = av[i] * bv[i];
  return id;
}

int Tape::slice(int x, int offset, int len) {
  if (offset < 0 || len <= 0 || offset + len > nodes_[x].len)
    throw Error::dimension("slice: out of range");
  Node n;
  n.op = Op::kSlice;
  n.in0 = x;
  n.aux = offset;
  int id = push(n, len);
  std::memcpy(val_ptr(id), value(x).data() + offset, sizeof(double) * len);
  return id;
}

int Tape::concat2(int a, int b) {
  Node n;
  n.op = Op::kConcat2;
  n.in0 = a;
  n.in1 = b;
  int la = nodes_[a].len, lb = nodes_[b].len;
  int id = push(n, la + lb);
  std::memcpy(val_ptr(id), value(a).data(), sizeof(double) * la);
  std::memcpy(val_ptr(id) + la, value(b).data(), sizeof(double) * lb);
  return id;
}

int Tape::dot(int a, int b) {
  if (nodes_[a].len != nodes_[b].len) throw Error::dimension("dot: length mismatch");
  Node n;
  n.op = Op::kDot;
  n.in0 = a;
  n.in1 = b;
  int id = push(n, 1);
  const double* av = value(a).data();
  const double* bv = value(b).data();
  double s = 0.0;
  for (int i = 0; i < nodes_[a].len; ++i) s += av[i] * bv[i];
  *val_ptr(id) = s;
  return id;
}

int Tape::cosine(int a, int b) {
  if (nodes_[a].len != nodes_[b].len)
    throw Error::dimension("cosine: length mismatch");
  Node n;
  n.op = Op::kCosine;
  n.in0 = a;
  n.in1 = b;
  int id = push(n, 1);
  *val_ptr(id) = cosine_similarity(value(a), value(b));
  return id;
}

int Tape::cat_scalars(std::span<const int> xs) {
  for (int x : xs)
    if (nodes_[x].len != 1)
      throw Error::dimension("cat_scalars: non-scalar operand");
  Node n;
  n.op = Op::kCatScalars;
  n.ins_beg = static_cast<int>(ins_pool_.size());
  n.ins_len = static_cast<int>(xs.size());
  ins_pool_.insert(ins_pool_.end(), xs.begin(), xs.end());
  int id = push(n, static_cast<int>(xs.size()));
  double* y = val_ptr(id);
  for (std::size_t i = 0; i < xs.size(); ++i) y[i] = value(xs[i])[0];
  return id;
}

int Tape::log_softmax_pick(int v, int k) {
  check_vec(v, "log_softmax_pick");
  if (k < 0 || k >= nodes_[v].len)
    throw Error::dimension("log_softmax_pick: index out of range");
  Node n;
  n.op = Op::kLogSoftmaxPick;
  n.in0 = v;
  n.aux = k;
  int id = push(n, 1);
  const double* xv = value(v).data();
  const int len = nodes_[v].len;
  double m = xv[0];
  for (int i = 1; i < len; ++i) m = std::max(m, xv[i]);
  double s = 0.0;
  for (int i = 0; i < len; ++i) s += std::exp(xv[i] - m);
  *val_ptr(id) = xv[k] - (m + std::log(s));
  return id;
}

int Tape::logsumexp(int v) {
  check_vec(v, "logsumexp");
  Node n;
  n.op = Op::kLogSumExp;
  n.in0 = v;
  int id = push(n, 1);
  const double* xv = value(v).data();
  const int len = nodes_[v].len;
  double m = xv[0];
  for (int i = 1; i < len; ++i) m = std::max(m, xv[i]);
  double s = 0.0;
  for (int i = 0; i < len; ++i) s += std::exp(xv[i] - m);
  *val_ptr(id) = m + std::log(s);
  return id;
}

void Tape::backward(int root, GradMap& grads) {
  if (root < 0 || root >= static_cast<int>(nodes_.size()))
    throw Error::domain("backward: bad root");
  if (nodes_[root].len != 1) throw Error::dimension("backward: root not scalar");

  // Adjoint arena mirrors the value arena; param leaves get slots too.
  std::size_t total = 0;
  std::vector<std::size_t> aoff(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    aoff[i] = total;
    total += static_cast<std::size_t>(nodes_[i].len);
  }
  adj_.assign(total, 0.0);
  adj_[aoff[root]] = 1.0;

  auto adj = [&](int id) { return adj_.data() + aoff[id]; };

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    const Node& n = nodes_[id];
    const double* g = adj(id);
    bool any = false;
    for (int i = 0; i < n.len; ++i)
      if (g[i] != 0.0) { any = true; break; }
    if (!any) continue;

    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParam: {
        const ParamRef& p = params_[n.pid];
        Tensor& gt = grads[p.name];
        if (gt.numel() == 0) {
          gt.shape = p.tensor->shape;
          gt.data.assign(p.tensor->numel(), 0.0);
        }
        for (int i = 0; i < n.len; ++i) gt.data[i] += g[i];
        break;
      }
      case Op::kParamRow: {
        const ParamRef& p = params_[n.pid];
        Tensor& gt = grads[p.name];
        if (gt.numel() == 0) {
          gt.shape = p.tensor->shape;
          gt.data.assign(p.tensor->numel(), 0.0);
        }
        double* row = gt.data.data() +
                      static_cast<std::size_t>(n.aux) * p.tensor->cols();
        for (int i = 0; i < n.len; ++i) row[i] += g[i];
        break;
      }
      case Op::kMatVec: {
        const Node& wn = nodes_[n.in0];
        const double* W = val_ptr(n.in0) ? val_ptr(n.in0) : wn.ext;
        const double* xv = value(n.in1).data();
        double* wg = adj(n.in0);
        double* xg = adj(n.in1);
        const int rows = wn.rows, cols = wn.cols;
        for (int i = 0; i < rows; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          double* wgr = wg + static_cast<std::size_t>(i) * cols;
          const double* wr = W + static_cast<std::size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) {
            wgr[j] += gi * xv[j];
            xg[j] += gi * wr[j];
          }
        }
        break;
      }
      case Op::kAdd: {
        double* ag = adj(n.in0);
        double* bg = adj(n.in1);
        for (int i = 0; i < n.len; ++i) {
          ag[i] += g[i];
          bg[i] += g[i];
        }
        break;
      }
      case Op::kAddN: {
        for (int k = 0; k < n.ins_len; ++k) {
          double* xg = adj(ins_pool_[n.ins_beg + k]);
          for (int i = 0; i < n.len; ++i) xg[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        double* ag = adj(n.in0);
        double* bg = adj(n.in1);
        for (int i = 0; i < n.len; ++i) {
          ag[i] += g[i];
          bg[i] -= g[i];
        }
        break;
      }
      case Op::kAffine: {
        double* xg = adj(n.in0);
        for (int i = 0; i < n.len; ++i) xg[i] += n.a * g[i];
        break;
      }
      case Op::kRelu: {
        const double* xv = value(n.in0).data();
        double* xg = adj(n.in0);
        for (int i = 0; i < n.len; ++i)
          if (xv[i] > 0.0) xg[i] += g[i];
        break;
      }
      case Op::kTanh: {
        const double* y = val_ptr(id);
        double* xg = adj(n.in0);
        for (int i = 0; i < n.len; ++i) xg[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::kSigmoid: {
        const double* y = val_ptr(id);
        double* xg = adj(n.in0);
        for (int i = 0; i < n.len; ++i) xg[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::kSoftplus: {
        const double* xv = value(n.in0).data();
        double* xg = adj(n.in0);
        for (int i = 0; i < n.len; ++i)
          xg[i] += g[i] / (1.0 + std::exp(-xv[i]));
        break;
      }
      case Op::kHadamard: {
        const double* av = value(n.in0).data();
        const double* bv = value(n.in1).data();
        double* ag = adj(n.in0);
        double* bg = adj(n.in1);
        for (int i = 0; i < n.len; ++i) {
          ag[i] += g[i] * bv[i];
          bg[i] += g[i] * av[i];
        }
        break;
      }
      case Op::kSlice: {
        double* xg = adj(n.in0) + n.aux;
        for (int i = 0; i < n.len; ++i) xg[i] += g[i];
        break;
      }
      case Op::kConcat2: {
        const int la = nodes_[n.in0].len;
        double* ag = adj(n.in0);
        double* bg = adj(n.in1);
        for (int i = 0; i < la; ++i) ag[i] += g[i];
        for (int i = la; i < n.len; ++i) bg[i - la] += g[i];
        break;
      }
      case Op::kDot: {
        const double* av = value(n.in0).data();
        const double* bv = value(n.in1).data();
        double* ag = adj(n.in0);
        double* bg = adj(n.in1);
        const double gs = g[0];
        for (int i = 0; i < nodes_[n.in0].len; ++i) {
          ag[i] += gs * bv[i];
          bg[i] += gs * av[i];
        }
        break;
      }
      case Op::kCosine: {
        const double* av = value(n.in0).data();
        const double* bv = value(n.in1).data();
        const int len = nodes_[n.in0].len;
        double d = 0.0, na2 = 0.0, nb2 = 0.0;
        for (int i = 0; i < len; ++i) {
          d += av[i] * bv[i];
          na2 += av[i] * av[i];
          nb2 += bv[i] * bv[i];
        }
        const double na = std::sqrt(na2), nb = std::sqrt(nb2);
        if (na == 0.0 || nb == 0.0) break;  // value 0, gradient defined as 0
        const double inv = 1.0 / (na * nb);
        const double c = d * inv;
        double* ag = adj(n.in0);
        double* bg = adj(n.in1);
        const double gs = g[0];
        for (int i = 0; i < len; ++i) {
          ag[i] += gs * (bv[i] * inv - c * av[i] / na2);
          bg[i] += gs * (av[i] * inv - c * bv[i] / nb2);
        }
        break;
      }
      case Op::kCatScalars: {
        for (int k = 0; k < n.ins_len; ++k)
          adj(ins_pool_[n.ins_beg + k])[0] += g[k];
        break;
      }
      case Op::kLogSoftmaxPick: {
        const double* xv = value(n.in0).data();
        const int len = nodes_[n.in0].len;
        double m = xv[0];
        for (int i = 1; i < len; ++i) m = std::max(m, xv[i]);
        double s = 0.0;
        for (int i = 0; i < len; ++i) s += std::exp(xv[i] - m);
        double* xg = adj(n.in0);
        const double gs = g[0];
        for (int i = 0; i < len; ++i) {
          const double smx = std::exp(xv[i] - m) / s;
          xg[i] += gs * ((i == n.aux ? 1.0 : 0.0) - smx);
        }
        break;
      }
      case Op::kLogSumExp: {
        const double* xv = value(n.in0).data();
        const int len = nodes_[n.in0].len;
        const double lse = *val_ptr(id);
        double* xg = adj(n.in0);
        const double gs = g[0];
        for (int i = 0; i < len; ++i) xg[i] += gs * std::exp(xv[i] - lse);
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  ins_pool_.clear();
  buf_.clear();
  params_.clear();
  param_ids_.clear();
  row_cache_.clear();
  param_node_cache_.clear();
}

}  // namespace manas
