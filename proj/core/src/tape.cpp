#include "vlnwb/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vlnwb {

namespace {

std::string shape_str(std::span<const int> s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

}  // namespace

void Tape::require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error("tape: " + msg);
}

Var Tape::make(std::vector<int> shape, bool needs_grad) {
  Node n;
  n.shape = std::move(shape);
  n.val.assign(static_cast<size_t>(shape_numel(n.shape)), 0.0);
  n.needs_grad = needs_grad;
  if (needs_grad) n.grad.assign(n.val.size(), 0.0);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

#ifndef NDEBUG
namespace {
void check_finite(const std::vector<Real>& v) {
  for (Real x : v)
    if (!std::isfinite(x)) throw std::runtime_error("tape: non-finite forward value");
}
}  // namespace
#define VLNWB_CHECK_FINITE(out) check_finite(nodes_[(out).id].val)
#else
#define VLNWB_CHECK_FINITE(out) (void)0
#endif

Var Tape::param(Tensor& t) {
  Var out = make(t.shape, t.requires_grad);
  nodes_[out.id].val = t.data;
  if (t.requires_grad) {
    nodes_[out.id].sink = &t;
    Tensor* sink = &t;
    const int id = out.id;
    nodes_[out.id].back = [this, id, sink] {
      const auto& g = nodes_[id].grad;
      for (size_t i = 0; i < g.size(); ++i) sink->grad[i] += g[i];
    };
  }
  return out;
}

Var Tape::constant(std::vector<int> shape, std::vector<Real> data) {
  require(static_cast<int64_t>(data.size()) == shape_numel(shape),
          "constant: data size does not match shape " + shape_str(shape));
  Var out = make(std::move(shape), false);
  nodes_[out.id].val = std::move(data);
  return out;
}

Real Tape::scalar_value(Var v) const {
  require(node(v).val.size() == 1, "scalar_value: not a scalar");
  return node(v).val[0];
}

Var Tape::add(Var a, Var b) {
  require(node(a).shape == node(b).shape, "add: shape mismatch " + shape_str(node(a).shape) +
                                              " vs " + shape_str(node(b).shape));
  Var out = make(node(a).shape, node(a).needs_grad || node(b).needs_grad);
  const auto& av = nodes_[a.id].val;
  const auto& bv = nodes_[b.id].val;
  auto& ov = nodes_[out.id].val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, b, out] {
      const auto& g = nodes_[out.id].grad;
      if (nodes_[a.id].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[a.id].grad[i] += g[i];
      if (nodes_[b.id].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[b.id].grad[i] += g[i];
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::add_bias(Var m, Var bias) {
  require(node(m).shape.size() == 2 && node(bias).shape.size() == 1 &&
              node(m).shape[1] == node(bias).shape[0],
          "add_bias: want (r x c) + (c), got " + shape_str(node(m).shape) + " + " +
              shape_str(node(bias).shape));
  const int rows = node(m).shape[0], cols = node(m).shape[1];
  Var out = make(node(m).shape, node(m).needs_grad || node(bias).needs_grad);
  const auto& mv = nodes_[m.id].val;
  const auto& bv = nodes_[bias.id].val;
  auto& ov = nodes_[out.id].val;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) ov[r * cols + c] = mv[r * cols + c] + bv[c];
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, m, bias, out, rows, cols] {
      const auto& g = nodes_[out.id].grad;
      if (nodes_[m.id].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[m.id].grad[i] += g[i];
      if (nodes_[bias.id].needs_grad)
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) nodes_[bias.id].grad[c] += g[r * cols + c];
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
  require(node(a).shape == node(b).shape, "mul: shape mismatch " + shape_str(node(a).shape) +
                                              " vs " + shape_str(node(b).shape));
  Var out = make(node(a).shape, node(a).needs_grad || node(b).needs_grad);
  const auto& av = nodes_[a.id].val;
  const auto& bv = nodes_[b.id].val;
  auto& ov = nodes_[out.id].val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, b, out] {
      const auto& g = nodes_[out.id].grad;
      if (nodes_[a.id].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[a.id].grad[i] += g[i] * nodes_[b.id].val[i];
      if (nodes_[b.id].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) nodes_[b.id].grad[i] += g[i] * nodes_[a.id].val[i];
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::scale(Var a, Real c) {
  Var out = make(node(a).shape, node(a).needs_grad);
  const auto& av = nodes_[a.id].val;
  auto& ov = nodes_[out.id].val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out, c] {
      const auto& g = nodes_[out.id].grad;
      for (size_t i = 0; i < g.size(); ++i) nodes_[a.id].grad[i] += g[i] * c;
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::matmul(Var a, Var b) {
  require(node(a).shape.size() == 2 && node(b).shape.size() == 2 &&
              node(a).shape[1] == node(b).shape[0],
          "matmul: incompatible " + shape_str(node(a).shape) + " x " + shape_str(node(b).shape));
  const int n = node(a).shape[0], k = node(a).shape[1], m = node(b).shape[1];
  Var out = make({n, m}, node(a).needs_grad || node(b).needs_grad);
  {
    const auto& av = nodes_[a.id].val;
    const auto& bv = nodes_[b.id].val;
    auto& ov = nodes_[out.id].val;
    for (int i = 0; i < n; ++i)
      for (int kk = 0; kk < k; ++kk) {
        const Real aik = av[i * k + kk];
        if (aik == 0.0) continue;
        const Real* brow = &bv[kk * m];
        Real* orow = &ov[i * m];
        for (int j = 0; j < m; ++j) orow[j] += aik * brow[j];
      }
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, b, out, n, k, m] {
      const auto& g = nodes_[out.id].grad;
      if (nodes_[a.id].needs_grad) {
        auto& ga = nodes_[a.id].grad;
        const auto& bv = nodes_[b.id].val;
        for (int i = 0; i < n; ++i)
          for (int kk = 0; kk < k; ++kk) {
            Real acc = 0.0;
            const Real* grow = &g[i * m];
            const Real* brow = &bv[kk * m];
            for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
            ga[i * k + kk] += acc;
          }
      }
      if (nodes_[b.id].needs_grad) {
        auto& gb = nodes_[b.id].grad;
        const auto& av = nodes_[a.id].val;
        for (int i = 0; i < n; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const Real aik = av[i * k + kk];
            if (aik == 0.0) continue;
            const Real* grow = &g[i * m];
            Real* gbrow = &gb[kk * m];
            for (int j = 0; j < m; ++j) gbrow[j] += aik * grow[j];
          }
      }
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::matvec(Var m, Var v) {
  require(node(m).shape.size() == 2 && node(v).shape.size() == 1 &&
              node(m).shape[1] == node(v).shape[0],
          "matvec: incompatible " + shape_str(node(m).shape) + " x " + shape_str(node(v).shape));
  const int rows = node(m).shape[0], cols = node(m).shape[1];
  Var out = make({rows}, node(m).needs_grad || node(v).needs_grad);
  {
    const auto& mv = nodes_[m.id].val;
    const auto& vv = nodes_[v.id].val;
    auto& ov = nodes_[out.id].val;
    for (int r = 0; r < rows; ++r) {
      Real acc = 0.0;
      const Real* mrow = &mv[r * cols];
      for (int c = 0; c < cols; ++c) acc += mrow[c] * vv[c];
      ov[r] = acc;
    }
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, m, v, out, rows, cols] {
      const auto& g = nodes_[out.id].grad;
      if (nodes_[m.id].needs_grad) {
        auto& gm = nodes_[m.id].grad;
        const auto& vv = nodes_[v.id].val;
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) gm[r * cols + c] += g[r] * vv[c];
      }
      if (nodes_[v.id].needs_grad) {
        auto& gv = nodes_[v.id].grad;
        const auto& mv = nodes_[m.id].val;
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) gv[c] += g[r] * mv[r * cols + c];
      }
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::transpose(Var a) {
  require(node(a).shape.size() == 2, "transpose: rank-2 only, got " + shape_str(node(a).shape));
  const int n = node(a).shape[0], m = node(a).shape[1];
  Var out = make({m, n}, node(a).needs_grad);
  {
    const auto& av = nodes_[a.id].val;
    auto& ov = nodes_[out.id].val;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ov[j * n + i] = av[i * m + j];
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out, n, m] {
      const auto& g = nodes_[out.id].grad;
      auto& ga = nodes_[a.id].grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) ga[i * m + j] += g[j * n + i];
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::dot(Var a, Var b) {
  require(node(a).shape.size() == 1 && node(a).shape == node(b).shape,
          "dot: want equal rank-1 shapes");
  Var out = make({1}, node(a).needs_grad || node(b).needs_grad);
  {
    const auto& av = nodes_[a.id].val;
    const auto& bv = nodes_[b.id].val;
    Real acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
    nodes_[out.id].val[0] = acc;
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, b, out] {
      const Real g = nodes_[out.id].grad[0];
      if (nodes_[a.id].needs_grad)
        for (size_t i = 0; i < nodes_[a.id].grad.size(); ++i)
          nodes_[a.id].grad[i] += g * nodes_[b.id].val[i];
      if (nodes_[b.id].needs_grad)
        for (size_t i = 0; i < nodes_[b.id].grad.size(); ++i)
          nodes_[b.id].grad[i] += g * nodes_[a.id].val[i];
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::concat(std::span<const Var> parts, int axis) {
  require(!parts.empty(), "concat: no parts");
  const auto& first = node(parts[0]).shape;
  const int rank = static_cast<int>(first.size());
  require(rank == 1 || rank == 2, "concat: rank-1/2 only");
  require(axis >= 0 && axis < rank, "concat: bad axis");

  std::vector<int> out_shape = first;
  bool needs = false;
  int total = 0;
  for (Var p : parts) {
    const auto& s = node(p).shape;
    require(static_cast<int>(s.size()) == rank, "concat: rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis) require(s[d] == first[d], "concat: off-axis dim mismatch");
    total += s[axis];
    needs = needs || node(p).needs_grad;
  }
  out_shape[axis] = total;

  Var out = make(out_shape, needs);
  std::vector<Var> part_vec(parts.begin(), parts.end());
  auto& ov = nodes_[out.id].val;
  if (rank == 1 || axis == 0) {
    size_t off = 0;
    for (Var p : part_vec) {
      const auto& pv = nodes_[p.id].val;
      std::copy(pv.begin(), pv.end(), ov.begin() + off);
      off += pv.size();
    }
  } else {  // rank 2, axis 1
    const int rows = out_shape[0], out_cols = out_shape[1];
    int col_off = 0;
    for (Var p : part_vec) {
      const int cols = nodes_[p.id].shape[1];
      const auto& pv = nodes_[p.id].val;
      for (int r = 0; r < rows; ++r)
        std::copy(pv.begin() + r * cols, pv.begin() + (r + 1) * cols,
                  ov.begin() + r * out_cols + col_off);
      col_off += cols;
    }
  }
  if (needs)
    nodes_[out.id].back = [this, part_vec, out, rank, axis, out_shape] {
      const auto& g = nodes_[out.id].grad;
      if (rank == 1 || axis == 0) {
        size_t off = 0;
        for (Var p : part_vec) {
          auto& n = nodes_[p.id];
          if (n.needs_grad)
            for (size_t i = 0; i < n.val.size(); ++i) n.grad[i] += g[off + i];
          off += n.val.size();
        }
      } else {
        const int rows = out_shape[0], out_cols = out_shape[1];
        int col_off = 0;
        for (Var p : part_vec) {
          auto& n = nodes_[p.id];
          const int cols = n.shape[1];
          if (n.needs_grad)
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < cols; ++c) n.grad[r * cols + c] += g[r * out_cols + col_off + c];
          col_off += cols;
        }
      }
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::slice(Var a, int axis, int start, int len) {
  const std::vector<int> s = node(a).shape;  // make() may reallocate the node pool
  const int rank = static_cast<int>(s.size());
  require(rank == 1 || rank == 2, "slice: rank-1/2 only");
  require(axis >= 0 && axis < rank, "slice: bad axis");
  require(start >= 0 && len > 0 && start + len <= s[axis], "slice: out of range");

  std::vector<int> out_shape = s;
  out_shape[axis] = len;
  Var out = make(out_shape, node(a).needs_grad);
  const auto& av = nodes_[a.id].val;
  auto& ov = nodes_[out.id].val;
  if (rank == 1) {
    std::copy(av.begin() + start, av.begin() + start + len, ov.begin());
  } else if (axis == 0) {
    const int cols = s[1];
    std::copy(av.begin() + start * cols, av.begin() + (start + len) * cols, ov.begin());
  } else {
    const int cols = s[1];
    for (int r = 0; r < s[0]; ++r)
      std::copy(av.begin() + r * cols + start, av.begin() + r * cols + start + len,
                ov.begin() + r * len);
  }
  if (nodes_[out.id].needs_grad) {
    const std::vector<int> in_shape = s;
    nodes_[out.id].back = [this, a, out, rank, axis, start, len, in_shape] {
      const auto& g = nodes_[out.id].grad;
      auto& ga = nodes_[a.id].grad;
      if (rank == 1) {
        for (int i = 0; i < len; ++i) ga[start + i] += g[i];
      } else if (axis == 0) {
        const int cols = in_shape[1];
        for (int i = 0; i < len * cols; ++i) ga[start * cols + i] += g[i];
      } else {
        const int cols = in_shape[1];
        for (int r = 0; r < in_shape[0]; ++r)
          for (int c = 0; c < len; ++c) ga[r * cols + start + c] += g[r * len + c];
      }
    };
  }
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  require(shape_numel(shape) == static_cast<int64_t>(node(a).val.size()),
          "reshape: element count mismatch");
  Var out = make(std::move(shape), node(a).needs_grad);
  nodes_[out.id].val = nodes_[a.id].val;
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out] {
      const auto& g = nodes_[out.id].grad;
      auto& ga = nodes_[a.id].grad;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  return out;
}

Var Tape::row(Var m, int r) {
  require(node(m).shape.size() == 2, "row: rank-2 only");
  const int cols = node(m).shape[1];
  return reshape(slice(m, 0, r, 1), {cols});
}

Var Tape::sum_all(Var a) {
  Var out = make({1}, node(a).needs_grad);
  Real acc = 0.0;
  for (Real x : nodes_[a.id].val) acc += x;
  nodes_[out.id].val[0] = acc;
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out] {
      const Real g = nodes_[out.id].grad[0];
      for (auto& x : nodes_[a.id].grad) x += g;
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::mean_all(Var a) {
  const Real inv = 1.0 / static_cast<Real>(node(a).val.size());
  return scale(sum_all(a), inv);
}

Var Tape::mean_rows(Var a) {
  require(node(a).shape.size() == 2, "mean_rows: rank-2 only");
  const int rows = node(a).shape[0], cols = node(a).shape[1];
  Var out = make({cols}, node(a).needs_grad);
  {
    const auto& av = nodes_[a.id].val;
    auto& ov = nodes_[out.id].val;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) ov[c] += av[r * cols + c];
    for (int c = 0; c < cols; ++c) ov[c] /= static_cast<Real>(rows);
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out, rows, cols] {
      const auto& g = nodes_[out.id].grad;
      auto& ga = nodes_[a.id].grad;
      const Real inv = 1.0 / static_cast<Real>(rows);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) ga[r * cols + c] += g[c] * inv;
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::tanh_op(Var a) {
  Var out = make(node(a).shape, node(a).needs_grad);
  const auto& av = nodes_[a.id].val;
  auto& ov = nodes_[out.id].val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(av[i]);
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out] {
      const auto& g = nodes_[out.id].grad;
      const auto& y = nodes_[out.id].val;
      auto& ga = nodes_[a.id].grad;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::sigmoid(Var a) {
  Var out = make(node(a).shape, node(a).needs_grad);
  const auto& av = nodes_[a.id].val;
  auto& ov = nodes_[out.id].val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-av[i]));
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out] {
      const auto& g = nodes_[out.id].grad;
      const auto& y = nodes_[out.id].val;
      auto& ga = nodes_[a.id].grad;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::relu(Var a) {
  Var out = make(node(a).shape, node(a).needs_grad);
  const auto& av = nodes_[a.id].val;
  auto& ov = nodes_[out.id].val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out] {
      const auto& g = nodes_[out.id].grad;
      const auto& x = nodes_[a.id].val;
      auto& ga = nodes_[a.id].grad;
      for (size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) ga[i] += g[i];
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

namespace {

// softmax over [begin, begin+len) of x into y, restricted to visible entries
void softmax_span(const Real* x, Real* y, int len, const char* visible) {
  Real mx = -1e300;
  for (int i = 0; i < len; ++i)
    if (!visible || visible[i]) mx = std::max(mx, x[i]);
  Real sum = 0.0;
  for (int i = 0; i < len; ++i) {
    y[i] = (!visible || visible[i]) ? std::exp(x[i] - mx) : 0.0;
    sum += y[i];
  }
  for (int i = 0; i < len; ++i) y[i] /= sum;
}

void softmax_span_backward(const Real* y, const Real* gy, Real* gx, int len) {
  Real dotp = 0.0;
  for (int i = 0; i < len; ++i) dotp += gy[i] * y[i];
  for (int i = 0; i < len; ++i) gx[i] += y[i] * (gy[i] - dotp);
}

}  // namespace

Var Tape::softmax(Var a) {
  require(node(a).shape.size() == 1, "softmax: rank-1 only (use softmax_rows)");
  const int len = node(a).shape[0];
  Var out = make(node(a).shape, node(a).needs_grad);
  softmax_span(nodes_[a.id].val.data(), nodes_[out.id].val.data(), len, nullptr);
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out, len] {
      softmax_span_backward(nodes_[out.id].val.data(), nodes_[out.id].grad.data(),
                            nodes_[a.id].grad.data(), len);
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::softmax_rows(Var a, const std::vector<char>* visible) {
  require(node(a).shape.size() == 2, "softmax_rows: rank-2 only");
  const int rows = node(a).shape[0], cols = node(a).shape[1];
  std::vector<char> vis;
  if (visible) {
    require(static_cast<int>(visible->size()) == rows * cols,
            "softmax_rows: mask size mismatch");
    vis = *visible;
    for (int r = 0; r < rows; ++r) {
      bool any = false;
      for (int c = 0; c < cols; ++c) any = any || vis[r * cols + c];
      if (!any) throw std::runtime_error("tape: softmax_rows row " + std::to_string(r) +
                                         " fully masked");
    }
  }
  Var out = make(node(a).shape, node(a).needs_grad);
  for (int r = 0; r < rows; ++r)
    softmax_span(&nodes_[a.id].val[r * cols], &nodes_[out.id].val[r * cols], cols,
                 visible ? &vis[r * cols] : nullptr);
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, a, out, rows, cols] {
      for (int r = 0; r < rows; ++r)
        softmax_span_backward(&nodes_[out.id].val[r * cols], &nodes_[out.id].grad[r * cols],
                              &nodes_[a.id].grad[r * cols], cols);
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::embedding(Var table, std::span<const int> ids) {
  require(node(table).shape.size() == 2, "embedding: table must be (V x d)");
  const int vocab = node(table).shape[0], dim = node(table).shape[1];
  for (int id : ids)
    require(id >= 0 && id < vocab,
            "embedding: index " + std::to_string(id) + " outside vocab of " + std::to_string(vocab));
  const int n = static_cast<int>(ids.size());
  require(n > 0, "embedding: empty index list");
  Var out = make({n, dim}, node(table).needs_grad);
  std::vector<int> idv(ids.begin(), ids.end());
  {
    const auto& tv = nodes_[table.id].val;
    auto& ov = nodes_[out.id].val;
    for (int i = 0; i < n; ++i)
      std::copy(tv.begin() + idv[i] * dim, tv.begin() + (idv[i] + 1) * dim, ov.begin() + i * dim);
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, table, out, idv, dim] {
      const auto& g = nodes_[out.id].grad;
      auto& gt = nodes_[table.id].grad;
      for (size_t i = 0; i < idv.size(); ++i)
        for (int c = 0; c < dim; ++c) gt[idv[i] * dim + c] += g[i * dim + c];
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, Real eps) {
  const auto& xs = node(x).shape;
  require(xs.size() == 1 || xs.size() == 2, "layer_norm: rank-1/2 only");
  const int cols = xs.back();
  const int rows = xs.size() == 2 ? xs[0] : 1;
  require(node(gain).shape == std::vector<int>{cols} && node(bias).shape == std::vector<int>{cols},
          "layer_norm: gain/bias must be (" + std::to_string(cols) + ")");

  Var out = make(xs, node(x).needs_grad || node(gain).needs_grad || node(bias).needs_grad);
  std::vector<Real> xhat(static_cast<size_t>(rows) * cols);
  std::vector<Real> inv_std(rows);
  {
    const auto& xv = nodes_[x.id].val;
    const auto& gv = nodes_[gain.id].val;
    const auto& bv = nodes_[bias.id].val;
    auto& ov = nodes_[out.id].val;
    for (int r = 0; r < rows; ++r) {
      Real mean = 0.0;
      for (int c = 0; c < cols; ++c) mean += xv[r * cols + c];
      mean /= cols;
      Real var = 0.0;
      for (int c = 0; c < cols; ++c) {
        const Real d = xv[r * cols + c] - mean;
        var += d * d;
      }
      var /= cols;
      inv_std[r] = 1.0 / std::sqrt(var + eps);
      for (int c = 0; c < cols; ++c) {
        xhat[r * cols + c] = (xv[r * cols + c] - mean) * inv_std[r];
        ov[r * cols + c] = gv[c] * xhat[r * cols + c] + bv[c];
      }
    }
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, x, gain, bias, out, rows, cols, xhat, inv_std] {
      const auto& g = nodes_[out.id].grad;
      const auto& gv = nodes_[gain.id].val;
      for (int r = 0; r < rows; ++r) {
        if (nodes_[gain.id].needs_grad)
          for (int c = 0; c < cols; ++c)
            nodes_[gain.id].grad[c] += g[r * cols + c] * xhat[r * cols + c];
        if (nodes_[bias.id].needs_grad)
          for (int c = 0; c < cols; ++c) nodes_[bias.id].grad[c] += g[r * cols + c];
        if (nodes_[x.id].needs_grad) {
          Real mean_gy = 0.0, mean_gyx = 0.0;
          for (int c = 0; c < cols; ++c) {
            const Real gy = g[r * cols + c] * gv[c];
            mean_gy += gy;
            mean_gyx += gy * xhat[r * cols + c];
          }
          mean_gy /= cols;
          mean_gyx /= cols;
          for (int c = 0; c < cols; ++c) {
            const Real gy = g[r * cols + c] * gv[c];
            nodes_[x.id].grad[r * cols + c] +=
                inv_std[r] * (gy - mean_gy - xhat[r * cols + c] * mean_gyx);
          }
        }
      }
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::dropout(Var x, Real p, bool train, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!train || p == 0.0) return x;  // identity, no RNG consumption
  const size_t n = node(x).val.size();
  std::vector<Real> mask(n);
  const Real keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : 0.0;
  Var out = make(node(x).shape, node(x).needs_grad);
  {
    const auto& xv = nodes_[x.id].val;
    auto& ov = nodes_[out.id].val;
    for (size_t i = 0; i < n; ++i) ov[i] = xv[i] * mask[i];
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, x, out, mask] {
      const auto& g = nodes_[out.id].grad;
      auto& gx = nodes_[x.id].grad;
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::cross_entropy(Var logits, int target) {
  require(node(logits).shape.size() == 1, "cross_entropy: rank-1 logits");
  const int targets[1] = {target};
  Var two_d = reshape(logits, {1, node(logits).shape[0]});
  return cross_entropy_rows(two_d, targets);
}

Var Tape::cross_entropy_rows(Var logits, std::span<const int> targets) {
  require(node(logits).shape.size() == 2, "cross_entropy: rank-2 logits");
  const int rows = node(logits).shape[0], cols = node(logits).shape[1];
  require(static_cast<int>(targets.size()) == rows, "cross_entropy: target count mismatch");
  for (int t : targets)
    require(t >= 0 && t < cols, "cross_entropy: target " + std::to_string(t) + " out of range");

  Var out = make({1}, node(logits).needs_grad);
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<Real> probs(static_cast<size_t>(rows) * cols);
  {
    const auto& lv = nodes_[logits.id].val;
    Real loss = 0.0;
    for (int r = 0; r < rows; ++r) {
      softmax_span(&lv[r * cols], &probs[r * cols], cols, nullptr);
      loss -= std::log(std::max(probs[r * cols + tv[r]], 1e-300));
    }
    nodes_[out.id].val[0] = loss / rows;
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, logits, out, rows, cols, tv, probs] {
      const Real g = nodes_[out.id].grad[0] / rows;
      auto& gl = nodes_[logits.id].grad;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          gl[r * cols + c] += g * (probs[r * cols + c] - (c == tv[r] ? 1.0 : 0.0));
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::conv2d(Var input, Var kernel, Var bias, int stride, int pad) {
  const auto& is = node(input).shape;
  const auto& ks = node(kernel).shape;
  require(is.size() == 3 && ks.size() == 4, "conv2d: want (cin,h,w) and (cout,cin,kh,kw)");
  require(is[0] == ks[1], "conv2d: channel mismatch");
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int cin = is[0], h = is[1], w = is[2];
  const int cout = ks[0], kh = ks[2], kw = ks[3];
  require(node(bias).shape == std::vector<int>{cout}, "conv2d: bias must be (cout)");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: output collapses to zero size");

  Var out = make({cout, ho, wo},
                 node(input).needs_grad || node(kernel).needs_grad || node(bias).needs_grad);
  {
    const auto& xv = nodes_[input.id].val;
    const auto& kv = nodes_[kernel.id].val;
    const auto& bv = nodes_[bias.id].val;
    auto& ov = nodes_[out.id].val;
    for (int oc = 0; oc < cout; ++oc)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          Real acc = bv[oc];
          for (int ic = 0; ic < cin; ++ic)
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= w) continue;
                acc += xv[(ic * h + iy) * w + ix] * kv[((oc * cin + ic) * kh + ky) * kw + kx];
              }
            }
          ov[(oc * ho + oy) * wo + ox] = acc;
        }
  }
  if (nodes_[out.id].needs_grad)
    nodes_[out.id].back = [this, input, kernel, bias, out, cin, h, w, cout, kh, kw, ho, wo,
                           stride, pad] {
      const auto& g = nodes_[out.id].grad;
      const auto& xv = nodes_[input.id].val;
      const auto& kv = nodes_[kernel.id].val;
      for (int oc = 0; oc < cout; ++oc)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const Real go = g[(oc * ho + oy) * wo + ox];
            if (go == 0.0) continue;
            if (nodes_[bias.id].needs_grad) nodes_[bias.id].grad[oc] += go;
            for (int ic = 0; ic < cin; ++ic)
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = ox * stride + kx - pad;
                  if (ix < 0 || ix >= w) continue;
                  const int xi = (ic * h + iy) * w + ix;
                  const int ki = ((oc * cin + ic) * kh + ky) * kw + kx;
                  if (nodes_[input.id].needs_grad) nodes_[input.id].grad[xi] += go * kv[ki];
                  if (nodes_[kernel.id].needs_grad) nodes_[kernel.id].grad[ki] += go * xv[xi];
                }
              }
          }
    };
  VLNWB_CHECK_FINITE(out);
  return out;
}

Var Tape::linear(Var x, Var w, Var b) {
  if (node(x).shape.size() == 1) return add(matvec(w, x), b);
  return add_bias(matmul(x, transpose(w)), b);
}

void Tape::backward(Var loss) {
  require(node(loss).val.size() == 1, "backward: loss must be scalar");
  require(node(loss).needs_grad, "backward: loss does not depend on any parameter");
  nodes_[loss.id].grad[0] = 1.0;
  for (int i = loss.id; i >= 0; --i)
    if (nodes_[i].needs_grad && nodes_[i].back) nodes_[i].back();
}

LstmState lstm_cell(Tape& t, Var x, LstmState prev, Var w, Var b) {
  const int hidden = t.shape(prev.h)[0];
  const Var xh = t.concat(std::array<Var, 2>{x, prev.h}, 0);
  const Var gates = t.add(t.matvec(w, xh), b);
  if (t.shape(gates)[0] != 4 * hidden)
    throw std::runtime_error("lstm_cell: weight rows must equal 4 * hidden");
  const Var ig = t.sigmoid(t.slice(gates, 0, 0, hidden));
  const Var fg = t.sigmoid(t.slice(gates, 0, hidden, hidden));
  const Var og = t.sigmoid(t.slice(gates, 0, 2 * hidden, hidden));
  const Var cand = t.tanh_op(t.slice(gates, 0, 3 * hidden, hidden));
  const Var c = t.add(t.mul(fg, prev.c), t.mul(ig, cand));
  const Var h = t.mul(og, t.tanh_op(c));
  return {h, c};
}

Var multi_head_attention(Tape& t, Var q_seq, Var kv_seq, int n_heads,
                         const std::vector<char>* visible, const AttentionParams& p) {
  const int d = t.shape(q_seq)[1];
  if (d % n_heads != 0)
    throw std::runtime_error("attention: model dim " + std::to_string(d) +
                             " not divisible by " + std::to_string(n_heads) + " heads");
  const int dh = d / n_heads;
  const Var q = t.linear(q_seq, p.wq, p.bq);
  const Var k = t.linear(kv_seq, p.wk, p.bk);
  const Var v = t.linear(kv_seq, p.wv, p.bv);
  std::vector<Var> heads;
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));
  for (int hix = 0; hix < n_heads; ++hix) {
    const Var qh = t.slice(q, 1, hix * dh, dh);
    const Var kh = t.slice(k, 1, hix * dh, dh);
    const Var vh = t.slice(v, 1, hix * dh, dh);
    const Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
    const Var probs = t.softmax_rows(scores, visible);
    heads.push_back(t.matmul(probs, vh));
  }
  const Var ctx = t.concat(heads, 1);
  return t.linear(ctx, p.wo, p.bo);
}

}  // namespace vlnwb
