#pragma once

// Reverse-mode automatic differentiation over batched matrices.
//
// Every node holds an N x C matrix (rows are batch items). Parameters enter the tape as
// leaves bound to blocks of a ParamStore; backward() accumulates their gradients into a
// flat vector laid out exactly like the store. The tape is append-only, so node order is a
// topological order and backward is one reverse sweep.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skinrf/params.hpp"

namespace skinrf::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  // `record` = false builds values only (inference); backward is then rejected.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value, const char* op = "constant");
  // Leaf bound to a parameter block. Frozen blocks (or non-recording tapes) give constants.
  Var parameter(const ParamStore& store, BlockId block);

  // Gradient callback: receives the node's output gradient and must call
  // accumulate() for each input that requires a gradient.
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;
  Var custom(Matrix value, std::vector<Var> inputs, Backward backward, const char* op);

  // Adds `g` into the gradient of `v` (no-op when v does not require a gradient).
  void accumulate(Var v, const Matrix& g);
  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    if (!needs(v)) return;
    grad_ref(v.id) += g;
  }

  // Reverse sweep from a 1x1 node. Gradients for trainable parameter leaves are added into
  // `param_grad` (sized like the ParamStore). Callable once per tape.
  void backward(Var loss, std::span<double> param_grad);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Hash of every branch decision taken so far (ReLU signs, closest-face choices, ...).
  // Two evaluations with equal signatures lie in the same smooth piece.
  std::uint64_t branch_signature() const { return signature_; }
  void mix_signature(std::uint64_t word);
  void enable_branch_tracking(bool on) { track_branches_ = on; }
  bool tracking_branches() const { return track_branches_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    const char* op = "";
    Backward backward;
    std::ptrdiff_t param_offset = -1;
  };

  Var push(Node node);
  Matrix& grad_ref(int id);

  std::vector<Node> nodes_;
  bool record_;
  bool backward_done_ = false;
  bool track_branches_ = false;
  std::uint64_t signature_ = 1469598103934665603ull;
};

// Elementwise arithmetic on equal shapes.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator*(Var a, double s);
inline Var operator*(double s, Var a) { return a * s; }
Var operator+(Var a, double s);
inline Var operator-(Var a, double s) { return a + (-s); }
Var operator-(Var a);

// Broadcasts: a (N x C) with a 1 x C row / an N x 1 column.
Var add_row(Var a, Var row);
Var mul_col(Var a, Var col);

// x * w^T (+ b): x is N x in, w is out x in, b is 1 x out.
Var matmul_nt(Var x, Var w);
Var linear(Var x, Var w, Var b);

Var gather_rows(Var table, std::vector<int> rows);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

Var relu(Var a);  // subgradient 0 at 0
Var softplus(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var sin(Var a);
Var cos(Var a);
Var sqrt(Var a);
Var square(Var a);
Var reciprocal(Var a);
Var abs(Var a);            // subgradient 0 at 0
Var maximum(Var a, Var b); // ties route the gradient to a

Var sum(Var a);         // -> 1 x 1
Var row_sum(Var a);     // -> N x 1
Var row_norm(Var a);    // L2 norm per row -> N x 1, zero gradient at a zero row

// Central finite differences of a scalar function of the parameter vector.
struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crosses a branch even at the smallest step
  std::size_t worst_index = 0;
};

using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

// dLoss/dθ for every parameter. Throws NumericError naming the node on non-finite values.
std::vector<double> grad(const LossBuilder& loss_builder, const ParamStore& params);
double evaluate(const LossBuilder& loss_builder, const ParamStore& params);

// Compares grad() against central differences with step `h` on `indices` (all when empty).
// A coordinate whose ±h evaluations take different branches than the base point is retried
// with h/10 down to `min_step`, then skipped. Relative error is |a - b| / max(|a|, |b|, floor)
// with floor = max(abs_floor, scale_floor * max_i |a_i|), so coordinates whose gradient is
// negligible next to the largest one are judged against that scale rather than against
// finite-difference round-off.
GradientCheck check_gradient(const LossBuilder& loss_builder, const ParamStore& params,
                             std::span<const std::size_t> indices = {}, double h = 1e-4, double min_step = 1e-7,
                             double abs_floor = 1e-8, double scale_floor = 1e-4);

}  // namespace skinrf::ad
