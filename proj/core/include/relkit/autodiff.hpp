#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "relkit/tensor.hpp"

namespace relkit::numerics {

// Handle into a Tape. Cheap to copy; only valid for the tape that made it.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape. Values are computed eagerly; each op
// records a closure that scatters its output gradient to its parents.
// Node creation order is a topological order, so backward is a single
// reverse sweep. One backward per tape unless zero_grad() is called in
// between; gradients accumulate across backward calls after a reset only
// through fresh seeds, never stale ones.
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor v, bool trainable = false);
  Var constant(Tensor v) { return leaf(std::move(v), false); }

  const Tensor& val(Var x) const { return node(x).val; }
  // Gradient accumulated for x; zeros if backward never reached it.
  const Tensor& grad(Var x);
  // True once backward has deposited a contribution into x.
  bool has_grad(Var x) const { return node(x).touched; }

  // Elementwise and affine ----------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var cmul(Var a, const Tensor& c);   // multiply by a constant tensor
  Var cadd(Var a, const Tensor& c);   // add a constant tensor
  Var add_row_bias(Var m, Var bias);  // [n x d] + [d] per row
  Var sum_of(std::span<const Var> xs);

  // Matrix ---------------------------------------------------------------
  Var matmul(Var a, Var b);     // [m x k] * [k x n]
  Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T
  Var slice_cols(Var a, int64_t c0, int64_t c1);
  Var concat_cols(std::span<const Var> xs);   // same rows, widths add
  Var stack_rows(std::span<const Var> xs);    // rows of equal width
  Var take_rows(Var a, std::vector<int64_t> rows);

  // Table lookups ---------------------------------------------------------
  Var embedding_rows(Var table, std::vector<int64_t> ids);
  // One output row per bag: mean of the table rows named by the bag,
  // zeros for an empty bag. Gradients scatter-accumulate.
  Var mean_pool_bag(Var table, std::vector<std::vector<int64_t>> bags);

  // Nonlinear --------------------------------------------------------------
  Var tanh_(Var a);
  Var gelu(Var a);
  Var exp_(Var a);
  Var pow_(Var a, double e);  // elementwise x^e, x >= 0
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias, double eps);
  Var l2_normalize_rows(Var a);
  // Seeded inverted dropout; p = 0 is the identity (returns a itself).
  Var dropout(Var a, double p, uint64_t seed);

  // Reductions and selection ------------------------------------------------
  Var sum(Var a);
  Var mean_all(Var a);
  Var select(Var a, int64_t flat_index);  // scalar pick

  // Reverse sweep from a scalar root. Throws UsageError on a non-scalar
  // root or on a second call without zero_grad().
  void backward(Var loss);
  void zero_grad();

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool wants = false;    // gradient flows into this node
    bool touched = false;  // grad buffer holds a contribution
    std::function<void(Tape&, const Node&)> back;
  };

  Node& node(Var x) {
    if (!x.valid() || static_cast<size_t>(x.id) >= nodes_.size())
      throw UsageError("tape: var does not belong to this tape");
    return nodes_[static_cast<size_t>(x.id)];
  }
  const Node& node(Var x) const {
    if (!x.valid() || static_cast<size_t>(x.id) >= nodes_.size())
      throw UsageError("tape: var does not belong to this tape");
    return nodes_[static_cast<size_t>(x.id)];
  }

  Var push(Tensor val, bool wants, std::function<void(Tape&, const Node&)> back);
  bool wants(Var x) const { return node(x).wants; }
  // Gradient buffer of a node if gradients flow into it, else nullptr.
  Tensor* gptr(int32_t id);

  std::vector<Node> nodes_;
  bool backward_used_ = false;
};

// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / 2h.
// Used by tests as the independent check on every differentiable op.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

}  // namespace relkit::numerics
