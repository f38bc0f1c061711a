#include "dpars/autodiff.hpp"

#include <cmath>

#include "dpars/error.hpp"
#include "dpars/kernels.hpp"

namespace dpars::ad {

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw ShapeError("autodiff", "invalid variable handle");
  return nodes_[v.id];
}

Var Tape::push(Node n) {
  nodes_.push_back(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::size_t Tape::alloc(std::size_t n) {
  const std::size_t off = values_.size();
  values_.resize(off + n);
  return off;
}

const double* Tape::val(const Node& n) const { return n.external ? n.external : values_.data() + n.offset; }

double* Tape::grad(const Node& n) {
  if (n.param) return n.param->grad.data.data();
  return grads_.data() + n.offset;
}

void Tape::check_finite(const Node& n, const char* op) const {
  const double* v = val(n);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericalError("autodiff", std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

Var Tape::constant(std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) throw ShapeError("autodiff", "constant: size does not match shape");
  Node n{Op::constant};
  n.rows = rows;
  n.cols = cols;
  n.offset = alloc(values.size());
  std::copy(values.begin(), values.end(), values_.begin() + static_cast<std::ptrdiff_t>(n.offset));
  check_finite(n, "constant");
  return push(n);
}

Var Tape::view(std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) throw ShapeError("autodiff", "view: size does not match shape");
  Node n{Op::view};
  n.rows = rows;
  n.cols = cols;
  n.external = values.data();
  check_finite(n, "view");
  return push(n);
}

Var Tape::parameter(Parameter& p) {
  if (p.grad.size() != p.value.size()) throw ShapeError("autodiff", "parameter '" + p.name + "' has no gradient buffer");
  Node n{Op::parameter};
  n.rows = p.value.rows;
  n.cols = p.value.cols;
  n.external = p.value.data.data();
  n.param = &p;
  n.needs_grad = true;
  check_finite(n, "parameter");
  return push(n);
}

Var Tape::matvec(Var w, Var x) {
  const Node& nw = node(w);
  const Node& nx = node(x);
  if (nx.cols != 1 || nw.cols != nx.rows) {
    throw ShapeError("autodiff", "matvec: [" + std::to_string(nw.rows) + "x" + std::to_string(nw.cols) +
                                     "] * [" + std::to_string(nx.rows) + "x" + std::to_string(nx.cols) + "]");
  }
  Node n{Op::matvec};
  n.a = w.id;
  n.b = x.id;
  n.rows = nw.rows;
  n.needs_grad = nw.needs_grad || nx.needs_grad;
  n.offset = alloc(n.rows);
  const Node& w2 = nodes_[w.id];
  const Node& x2 = nodes_[x.id];
  kernels::matvec(val(w2), w2.rows, w2.cols, val(x2), values_.data() + n.offset);
  check_finite(n, "matvec");
  return push(n);
}

Var Tape::add(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) throw ShapeError("autodiff", "add: shape mismatch");
  Node n{Op::add};
  n.a = a.id;
  n.b = b.id;
  n.rows = na.rows;
  n.cols = na.cols;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.offset = alloc(n.rows * n.cols);
  kernels::add(val(nodes_[a.id]), val(nodes_[b.id]), n.rows * n.cols, values_.data() + n.offset);
  check_finite(n, "add");
  return push(n);
}

Var Tape::concat(Var a, Var b) {
  const Var parts[2] = {a, b};
  return concat(parts);
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("autodiff", "concat: no inputs");
  Node n{Op::concat};
  n.list_begin = links_.size();
  n.list_size = parts.size();
  std::size_t total = 0;
  for (const Var p : parts) {
    const Node& np = node(p);
    if (np.cols != 1) throw ShapeError("autodiff", "concat: inputs must be vectors");
    total += np.rows;
    n.needs_grad = n.needs_grad || np.needs_grad;
    links_.push_back(p.id);
  }
  n.rows = total;
  n.offset = alloc(total);
  double* out = values_.data() + n.offset;
  for (const Var p : parts) {
    const Node& np = nodes_[p.id];
    out = std::copy(val(np), val(np) + np.rows, out);
  }
  return push(n);
}

Var Tape::scale(double c, Var x) {
  const Node& nx = node(x);
  Node n{Op::scale};
  n.a = x.id;
  n.scalar = c;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.needs_grad = nx.needs_grad;
  n.offset = alloc(n.rows * n.cols);
  const double* in = val(nodes_[x.id]);
  double* out = values_.data() + n.offset;
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) out[i] = c * in[i];
  check_finite(n, "scale");
  return push(n);
}

Var Tape::tanh(Var x) {
  const Node& nx = node(x);
  Node n{Op::tanh};
  n.a = x.id;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.needs_grad = nx.needs_grad;
  n.offset = alloc(n.rows * n.cols);
  kernels::tanh(val(nodes_[x.id]), n.rows * n.cols, values_.data() + n.offset);
  check_finite(n, "tanh");
  return push(n);
}

Var Tape::softmax(Var x) {
  const Node& nx = node(x);
  if (nx.cols != 1 || nx.rows == 0) throw ShapeError("autodiff", "softmax: input must be a non-empty vector");
  Node n{Op::softmax};
  n.a = x.id;
  n.rows = nx.rows;
  n.needs_grad = nx.needs_grad;
  n.offset = alloc(n.rows);
  const Node& nx2 = nodes_[x.id];
  for (std::size_t i = 0; i < nx2.rows; ++i) {
    if (!std::isfinite(val(nx2)[i])) throw NumericalError("autodiff", "non-finite input to op 'softmax'");
  }
  kernels::softmax(val(nx2), n.rows, values_.data() + n.offset);
  check_finite(n, "softmax");
  return push(n);
}

Var Tape::weighted_sum(Var weights, std::span<const Var> vectors) {
  const Node& nw = node(weights);
  if (vectors.empty() || nw.cols != 1 || nw.rows != vectors.size()) {
    throw ShapeError("autodiff", "weighted_sum: need one weight per vector");
  }
  Node n{Op::weighted_sum};
  n.a = weights.id;
  n.list_begin = links_.size();
  n.list_size = vectors.size();
  n.needs_grad = nw.needs_grad;
  const std::size_t dim = node(vectors[0]).rows;
  for (const Var v : vectors) {
    const Node& nv = node(v);
    if (nv.cols != 1 || nv.rows != dim) throw ShapeError("autodiff", "weighted_sum: vector shapes differ");
    n.needs_grad = n.needs_grad || nv.needs_grad;
    links_.push_back(v.id);
  }
  n.rows = dim;
  n.offset = alloc(dim);
  scratch_ptrs_.clear();
  for (const Var v : vectors) scratch_ptrs_.push_back(val(nodes_[v.id]));
  kernels::weighted_sum(val(nodes_[weights.id]), vectors.size(), scratch_ptrs_.data(), dim,
                        values_.data() + n.offset);
  check_finite(n, "weighted_sum");
  return push(n);
}

Var Tape::l1_loss(Var pred, Var target) {
  const Node& np = node(pred);
  const Node& nt = node(target);
  if (np.rows != nt.rows || np.cols != nt.cols) throw ShapeError("autodiff", "l1_loss: shape mismatch");
  Node n{Op::l1};
  n.a = pred.id;
  n.b = target.id;
  n.rows = 1;
  n.needs_grad = np.needs_grad || nt.needs_grad;
  n.offset = alloc(1);
  values_[n.offset] = kernels::l1(val(nodes_[pred.id]), val(nodes_[target.id]), np.rows * np.cols);
  check_finite(n, "l1_loss");
  return push(n);
}

Var Tape::entropy(Var p) {
  const Node& np = node(p);
  if (np.cols != 1) throw ShapeError("autodiff", "entropy: input must be a vector");
  const double* pv = val(np);
  double sum = 0.0;
  for (std::size_t i = 0; i < np.rows; ++i) {
    if (pv[i] < 0.0) throw NumericalError("autodiff", "entropy: negative probability");
    sum += pv[i];
  }
  if (std::abs(sum - 1.0) > 1e-8) throw NumericalError("autodiff", "entropy: probabilities do not sum to 1");
  Node n{Op::entropy};
  n.a = p.id;
  n.rows = 1;
  n.needs_grad = np.needs_grad;
  n.offset = alloc(1);
  values_[n.offset] = kernels::entropy(val(nodes_[p.id]), nodes_[p.id].rows);
  check_finite(n, "entropy");
  return push(n);
}

void Tape::backward(Var root, double seed) {
  if (nodes_.empty()) throw Error("autodiff", "backward called before any forward computation");
  if (backward_done_) throw Error("autodiff", "backward already ran on this tape; reset() first");
  const Node& nr = node(root);
  if (nr.rows * nr.cols != 1) throw ShapeError("autodiff", "backward root must be a scalar");
  backward_done_ = true;
  if (!nr.needs_grad) return;

  grads_.assign(values_.size(), 0.0);
  grad(nodes_[root.id])[0] = seed;

  for (std::size_t idx = root.id + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (!n.needs_grad) continue;
    const std::size_t size = n.rows * n.cols;
    switch (n.op) {
      case Op::constant:
      case Op::view:
      case Op::parameter:
        break;
      case Op::matvec: {
        Node& w = nodes_[n.a];
        Node& x = nodes_[n.b];
        const double* g = grad(n);
        const double* wv = val(w);
        const double* xv = val(x);
        const std::size_t m = w.rows;
        const std::size_t k = w.cols;
        if (w.needs_grad) {
          double* gw = grad(w);
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            double* row = gw + i * k;
            for (std::size_t j = 0; j < k; ++j) row[j] += gi * xv[j];
          }
        }
        if (x.needs_grad) {
          double* gx = grad(x);
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            const double* row = wv + i * k;
            for (std::size_t j = 0; j < k; ++j) gx[j] += row[j] * gi;
          }
        }
        break;
      }
      case Op::add: {
        const double* g = grad(n);
        for (const auto input : {n.a, n.b}) {
          Node& in = nodes_[input];
          if (!in.needs_grad) continue;
          double* gi = grad(in);
          for (std::size_t i = 0; i < size; ++i) gi[i] += g[i];
        }
        break;
      }
      case Op::concat: {
        const double* g = grad(n);
        for (std::size_t l = 0; l < n.list_size; ++l) {
          Node& in = nodes_[links_[n.list_begin + l]];
          if (in.needs_grad) {
            double* gi = grad(in);
            for (std::size_t i = 0; i < in.rows; ++i) gi[i] += g[i];
          }
          g += in.rows;
        }
        break;
      }
      case Op::scale: {
        Node& in = nodes_[n.a];
        const double* g = grad(n);
        double* gi = grad(in);
        for (std::size_t i = 0; i < size; ++i) gi[i] += n.scalar * g[i];
        break;
      }
      case Op::tanh: {
        Node& in = nodes_[n.a];
        const double* g = grad(n);
        const double* y = val(n);
        double* gi = grad(in);
        for (std::size_t i = 0; i < size; ++i) gi[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::softmax: {
        Node& in = nodes_[n.a];
        const double* g = grad(n);
        const double* y = val(n);
        double dot = 0.0;
        for (std::size_t i = 0; i < size; ++i) dot += y[i] * g[i];
        double* gi = grad(in);
        for (std::size_t i = 0; i < size; ++i) gi[i] += y[i] * (g[i] - dot);
        break;
      }
      case Op::weighted_sum: {
        Node& w = nodes_[n.a];
        const double* g = grad(n);
        const double* wv = val(w);
        double* gw = w.needs_grad ? grad(w) : nullptr;
        for (std::size_t j = 0; j < n.list_size; ++j) {
          Node& v = nodes_[links_[n.list_begin + j]];
          const double* vv = val(v);
          if (gw) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n.rows; ++i) acc += g[i] * vv[i];
            gw[j] += acc;
          }
          if (v.needs_grad) {
            double* gv = grad(v);
            for (std::size_t i = 0; i < n.rows; ++i) gv[i] += wv[j] * g[i];
          }
        }
        break;
      }
      case Op::l1: {
        Node& p = nodes_[n.a];
        Node& t = nodes_[n.b];
        const double g = grad(n)[0];
        const double* pv = val(p);
        const double* tv = val(t);
        const std::size_t m = p.rows * p.cols;
        for (std::size_t i = 0; i < m; ++i) {
          const double d = pv[i] - tv[i];
          const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          if (p.needs_grad) grad(p)[i] += g * s;
          if (t.needs_grad) grad(t)[i] -= g * s;
        }
        break;
      }
      case Op::entropy: {
        Node& p = nodes_[n.a];
        const double g = grad(n)[0];
        const double* pv = val(p);
        double* gp = grad(p);
        for (std::size_t i = 0; i < p.rows; ++i) {
          if (pv[i] > 0.0) gp[i] -= g * (std::log(pv[i]) + 1.0);
        }
        break;
      }
    }
  }
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = node(v);
  return {val(n), n.rows * n.cols};
}

double Tape::scalar(Var v) const {
  const Node& n = node(v);
  if (n.rows * n.cols != 1) throw ShapeError("autodiff", "scalar(): node is not a scalar");
  return val(n)[0];
}

std::size_t Tape::rows(Var v) const { return node(v).rows; }
std::size_t Tape::size(Var v) const { return node(v).rows * node(v).cols; }

void Tape::reset() {
  nodes_.clear();
  values_.clear();
  links_.clear();
  backward_done_ = false;
}

}  // namespace dpars::ad
