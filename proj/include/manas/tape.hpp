#pragma once

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "manas/tensor.hpp"

namespace manas {

// Named parameter gradients, full tensor shape per entry.
using GradMap = std::map<std::string, Tensor>;

// Minimal reverse-mode tape over vector-valued nodes. Values are computed
// eagerly at node creation; backward() runs one reverse sweep and
// accumulates parameter adjoints into a GradMap. The tape owns all value
// and adjoint storage in two flat arenas, so reset() keeps capacity across
// batches.
//
// Scalars are 1-element vectors. Matrices appear only as parameter leaves
// feeding matvec.
class Tape {
 public:
  // Leaves.
  int input(std::span<const double> v);                 // constant, copied
  int param(const std::string& name, const Tensor& t);  // whole tensor
  int param_row(const std::string& name, const Tensor& t, int row);

  // y = W x, W is rank-2 (typically a param leaf), x rank-1.
  int matvec(int w, int x);

  int add(int a, int b);
  int addn(std::span<const int> xs);  // same-shape n-ary sum
  int sub(int a, int b);
  int neg(int x);
  int scale(int x, double a);
  int affine(int x, double a, double b);  // a*x + b elementwise
  int relu(int x);
  int tanh(int x);
  int sigmoid(int x);
  int softplus(int x);  // log(1 + e^x)
  int hadamard(int a, int b);
  int slice(int x, int offset, int len);
  int concat2(int a, int b);
  int dot(int a, int b);
  int cosine(int a, int b);  // zero-norm convention: value 0, zero gradient
  int cat_scalars(std::span<const int> xs);
  // log softmax(v)[k]; gradient is (onehot_k - softmax).
  int log_softmax_pick(int v, int k);
  int logsumexp(int v);

  std::span<const double> value(int id) const;
  double value_scalar(int id) const { return value(id)[0]; }
  int length(int id) const { return nodes_[id].len; }

  // Root must be scalar. Accumulates parameter gradients into `grads`
  // (missing entries are created zero-filled at full parameter shape).
  void backward(int root, GradMap& grads);

  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : unsigned char {
    kInput, kParam, kParamRow, kMatVec, kAdd, kAddN, kSub, kAffine, kRelu,
    kTanh, kSigmoid, kSoftplus, kHadamard, kSlice, kConcat2, kDot, kCosine,
    kCatScalars, kLogSoftmaxPick, kLogSumExp,
  };

  struct Node {
    Op op;
    int in0 = -1, in1 = -1;
    int ins_beg = 0, ins_len = 0;   // into ins_pool_ for n-ary ops
    int len = 0;                    // value length
    int rows = 0, cols = 0;         // param matrices only
    std::size_t voff = 0;           // value offset into buf_ (kSize if external)
    const double* ext = nullptr;    // external value (param leaves)
    int aux = 0;                    // slice offset / pick index / param row
    double a = 0.0, b = 0.0;        // scale/affine constants
    int pid = -1;                   // param registry index
  };

  struct ParamRef {
    std::string name;
    const Tensor* tensor;
  };

  int push(Node n, int value_len);
  double* val_ptr(int id);
  const double* val_ptr(int id) const;
  int register_param(const std::string& name, const Tensor& t);
  void check_vec(int id, const char* who) const;

  std::vector<Node> nodes_;
  std::vector<int> ins_pool_;
  std::vector<double> buf_;   // values
  std::vector<double> adj_;   // adjoints, sized in backward()
  std::vector<ParamRef> params_;
  std::unordered_map<const Tensor*, int> param_ids_;
  std::unordered_map<std::uint64_t, int> row_cache_;  // (pid, row) -> node
  std::unordered_map<int, int> param_node_cache_;     // pid -> node
};

}  // namespace manas
