#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vlnwb/rng.hpp"
#include "vlnwb/tensor.hpp"

namespace vlnwb {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape. A tape belongs to one thread and one
// forward/backward episode; parameters live outside it in a ParamStore and
// receive gradient accumulation through leaf sinks.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // leaves
  Var param(Tensor& t);
  Var constant(std::vector<int> shape, std::vector<Real> data);
  Var scalar(Real v) { return constant({1}, {v}); }

  // node access
  const std::vector<int>& shape(Var v) const { return node(v).shape; }
  const std::vector<Real>& value(Var v) const { return node(v).val; }
  const std::vector<Real>& gradient(Var v) const { return node(v).grad; }
  Real scalar_value(Var v) const;

  // elementwise / linear algebra
  Var add(Var a, Var b);            // same shape
  Var add_bias(Var m, Var bias);    // (r x c) + (c), broadcast over rows
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, Real c);
  Var matmul(Var a, Var b);         // (n x k)(k x m) -> (n x m)
  Var matvec(Var m, Var v);         // (n x k)(k) -> (n)
  Var transpose(Var a);
  Var dot(Var a, Var b);            // (n)(n) -> scalar

  // shape ops
  Var concat(std::span<const Var> parts, int axis);
  Var slice(Var a, int axis, int start, int len);
  Var reshape(Var a, std::vector<int> shape);
  Var row(Var m, int r);            // (n x d) -> (d)

  // reductions
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var mean_rows(Var a);             // (n x d) -> (d), mean over rows

  // nonlinearities
  Var tanh_op(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var softmax(Var a);               // rank 1
  // Row softmax with optional visibility mask (row-major, 1 = visible).
  // Hidden entries get probability exactly 0; a fully hidden row throws.
  Var softmax_rows(Var a, const std::vector<char>* visible = nullptr);

  // table (V x d), ids -> (|ids| x d); gradient scatters into the table rows
  Var embedding(Var table, std::span<const int> ids);

  Var layer_norm(Var x, Var gain, Var bias, Real eps = 1e-5);
  Var dropout(Var x, Real p, bool train, Rng& rng);

  Var cross_entropy(Var logits, int target);                       // (k) -> scalar
  Var cross_entropy_rows(Var logits, std::span<const int> targets);  // (b x k) -> mean

  // (cin,h,w) * (cout,cin,kh,kw) + (cout) -> (cout,h',w')
  Var conv2d(Var input, Var kernel, Var bias, int stride, int pad);

  // composite layers
  Var linear(Var x, Var w, Var b);  // rank1: w (m x n) x + b; rank2 x: rows mapped

  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> shape;
    std::vector<Real> val;
    std::vector<Real> grad;
    bool needs_grad = false;
    std::function<void()> back;
    Tensor* sink = nullptr;
  };

  Node& node(Var v) {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
      throw std::runtime_error("tape: invalid var");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
      throw std::runtime_error("tape: invalid var");
    return nodes_[v.id];
  }

  Var make(std::vector<int> shape, bool needs_grad);
  static void require(bool cond, const std::string& msg);

  std::vector<Node> nodes_;
};

// Single LSTM cell step with packed gate parameters:
//   gates = w (4h x (x+h)) * [x; h_prev] + b, gate order [input, forget, output, candidate].
struct LstmState {
  Var h, c;
};
LstmState lstm_cell(Tape& t, Var x, LstmState prev, Var w, Var b);

// Scaled dot-product multi-head attention over packed projection weights.
// q_seq (tq x d), kv_seq (tk x d); visible is a row-major (tq x tk) visibility
// mask or nullptr for full visibility. d must divide by n_heads.
struct AttentionParams {
  Var wq, wk, wv, wo;  // each (d x d)
  Var bq, bk, bv, bo;  // each (d)
};
Var multi_head_attention(Tape& t, Var q_seq, Var kv_seq, int n_heads,
                         const std::vector<char>* visible, const AttentionParams& p);

}  // namespace vlnwb
