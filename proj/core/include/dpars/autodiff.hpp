#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dpars::ad {

/// Rank <= 2 tensor, row-major. Vectors are [n x 1].
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// A learnable array with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// Reverse-mode tape over a closed set of ops. Values live in one arena that
/// is reused across reset() calls, so steady-state training does not
/// allocate. Any op producing NaN/Inf throws NumericalError naming the op.
class Tape {
 public:
  /// Copies `values` onto the tape; no gradient flows into constants.
  Var constant(std::span<const double> values, std::size_t rows, std::size_t cols = 1);
  /// References external memory that must outlive the tape's use of it.
  Var view(std::span<const double> values, std::size_t rows, std::size_t cols = 1);
  /// Leaf whose gradient is accumulated into `p.grad` by backward().
  Var parameter(Parameter& p);

  Var matvec(Var w, Var x);
  Var add(Var a, Var b);
  Var concat(Var a, Var b);
  Var concat(std::span<const Var> parts);
  Var scale(double c, Var x);
  Var tanh(Var x);
  Var softmax(Var x);
  Var weighted_sum(Var weights, std::span<const Var> vectors);
  Var l1_loss(Var pred, Var target);
  Var entropy(Var p);

  /// Accumulates d(seed * root)/d(param) into every reachable Parameter.
  /// Throws if the root is not scalar, if nothing was recorded, or if
  /// backward already ran since the last reset().
  void backward(Var root, double seed = 1.0);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t rows(Var v) const;
  std::size_t size(Var v) const;

  void reset();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    constant, view, parameter, matvec, add, concat, scale, tanh, softmax, weighted_sum, l1, entropy
  };

  struct Node {
    Op op;
    bool needs_grad = false;
    std::uint32_t a = UINT32_MAX;
    std::uint32_t b = UINT32_MAX;
    std::size_t offset = 0;  // into values_/grads_ (unused for external nodes)
    std::size_t rows = 0;
    std::size_t cols = 1;
    std::size_t list_begin = 0;  // into links_
    std::size_t list_size = 0;
    double scalar = 0.0;
    const double* external = nullptr;
    Parameter* param = nullptr;
  };

  const Node& node(Var v) const;
  Var push(Node n);
  std::size_t alloc(std::size_t n);
  const double* val(const Node& n) const;
  double* grad(const Node& n);
  void check_finite(const Node& n, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> links_;
  std::vector<const double*> scratch_ptrs_;
  bool backward_done_ = false;
};

}  // namespace dpars::ad
