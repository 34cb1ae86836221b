#include "skinrf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skinrf/error.hpp"

namespace skinrf::ad {

const Matrix& Var::value() const { return tape->value(*this); }
bool Var::requires_grad() const { return tape->needs(*this); }

void Tape::mix_signature(std::uint64_t word) {
  signature_ ^= word;
  signature_ *= 1099511628211ull;
}

Var Tape::push(Node node) {
  const int id = static_cast<int>(nodes_.size());
  if (!node.value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by '") + node.op + "' at node #" + std::to_string(id));
  }
  nodes_.push_back(std::move(node));
  return Var{this, id};
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var Tape::constant(Matrix value, const char* op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  return push(std::move(n));
}

Var Tape::parameter(const ParamStore& store, BlockId block) {
  const ParamBlock& b = store.block(block);
  Node n;
  n.value = store.matrix(block);
  n.op = "parameter";
  n.requires_grad = record_ && b.trainable;
  n.param_offset = static_cast<std::ptrdiff_t>(b.offset);
  return push(std::move(n));
}

Var Tape::custom(Matrix value, std::vector<Var> inputs, Backward backward, const char* op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  bool any = false;
  for (const Var& v : inputs) any = any || needs(v);
  n.requires_grad = record_ && any;
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::accumulate(Var v, const Matrix& g) {
  if (!needs(v)) return;
  grad_ref(v.id) += g;
}

void Tape::backward(Var loss, std::span<double> param_grad) {
  if (!record_) throw UsageError("backward on a non-recording tape");
  if (backward_done_) throw UsageError("backward already ran on this tape; rebuild the forward pass first");
  if (value(loss).rows() != 1 || value(loss).cols() != 1) throw UsageError("backward needs a 1x1 loss node");
  backward_done_ = true;
  if (!needs(loss)) return;
  grad_ref(loss.id)(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param_offset >= 0) {
      const auto off = static_cast<std::size_t>(n.param_offset);
      const auto count = static_cast<std::size_t>(n.value.size());
      if (off + count > param_grad.size()) throw UsageError("parameter gradient buffer too small");
      Eigen::Map<Matrix>(param_grad.data() + off, n.value.rows(), n.value.cols()) += n.grad;
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
    n.grad.resize(0, 0);
  }
}

namespace {

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw UsageError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

// Packs a boolean mask into signature words.
template <typename Mask>
void mix_mask(Tape& t, const Mask& mask) {
  if (!t.tracking_branches()) return;
  std::uint64_t word = 0;
  int bit = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask.data()[i]) word |= (1ull << bit);
    if (++bit == 64) {
      t.mix_signature(word);
      word = 0;
      bit = 0;
    }
  }
  t.mix_signature(word ^ static_cast<std::uint64_t>(mask.size()));
}

template <typename F, typename DF>
Var unary(Var a, const char* op, F f, DF df) {
  Tape& t = *a.tape;
  Matrix out = a.value().unaryExpr(f);
  return t.custom(std::move(out), {a},
                  [a, df](Tape& tp, const Matrix& g) {
                    const Matrix& x = tp.value(a);
                    tp.accumulate(a, g.cwiseProduct(x.unaryExpr(df)));
                  },
                  op);
}

double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var operator+(Var a, Var b) {
  check_same_shape(a, b, "add");
  return a.tape->custom(a.value() + b.value(), {a, b},
                        [a, b](Tape& t, const Matrix& g) {
                          t.accumulate(a, g);
                          t.accumulate(b, g);
                        },
                        "add");
}

Var operator-(Var a, Var b) {
  check_same_shape(a, b, "sub");
  return a.tape->custom(a.value() - b.value(), {a, b},
                        [a, b](Tape& t, const Matrix& g) {
                          t.accumulate(a, g);
                          t.accumulate(b, -g);
                        },
                        "sub");
}

Var operator*(Var a, Var b) {
  check_same_shape(a, b, "mul");
  return a.tape->custom(a.value().cwiseProduct(b.value()), {a, b},
                        [a, b](Tape& t, const Matrix& g) {
                          t.accumulate(a, g.cwiseProduct(t.value(b)));
                          t.accumulate(b, g.cwiseProduct(t.value(a)));
                        },
                        "mul");
}

Var operator*(Var a, double s) {
  return a.tape->custom(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); }, "scale");
}

Var operator+(Var a, double s) {
  return a.tape->custom((a.value().array() + s).matrix(), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); },
                        "add_scalar");
}

Var operator-(Var a) { return a * -1.0; }

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw UsageError("add_row: row must be 1 x cols(a)");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape->custom(std::move(out), {a, row},
                        [a, row](Tape& t, const Matrix& g) {
                          t.accumulate(a, g);
                          t.accumulate(row, g.colwise().sum());
                        },
                        "add_row");
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw UsageError("mul_col: column must be rows(a) x 1");
  Matrix out = (a.value().array().colwise() * col.value().col(0).array()).matrix();
  return a.tape->custom(std::move(out), {a, col},
                        [a, col](Tape& t, const Matrix& g) {
                          if (t.needs(a)) t.accumulate(a, (g.array().colwise() * t.value(col).col(0).array()).matrix());
                          if (t.needs(col)) t.accumulate(col, g.cwiseProduct(t.value(a)).rowwise().sum());
                        },
                        "mul_col");
}

Var matmul_nt(Var x, Var w) {
  if (x.cols() != w.cols()) throw UsageError("matmul_nt: inner dimensions differ");
  Matrix out(x.rows(), w.rows());
  out.noalias() = x.value() * w.value().transpose();
  return x.tape->custom(std::move(out), {x, w},
                        [x, w](Tape& t, const Matrix& g) {
                          if (t.needs(x)) {
                            Matrix gx(g.rows(), t.value(w).cols());
                            gx.noalias() = g * t.value(w);
                            t.accumulate(x, gx);
                          }
                          if (t.needs(w)) {
                            Matrix gw(g.cols(), t.value(x).cols());
                            gw.noalias() = g.transpose() * t.value(x);
                            t.accumulate(w, gw);
                          }
                        },
                        "matmul");
}

Var linear(Var x, Var w, Var b) {
  if (x.cols() != w.cols()) throw UsageError("linear: input width does not match weight");
  if (b.rows() != 1 || b.cols() != w.rows()) throw UsageError("linear: bias must be 1 x out");
  Matrix out(x.rows(), w.rows());
  out.noalias() = x.value() * w.value().transpose();
  out.rowwise() += b.value().row(0);
  return x.tape->custom(std::move(out), {x, w, b},
                        [x, w, b](Tape& t, const Matrix& g) {
                          if (t.needs(x)) {
                            Matrix gx(g.rows(), t.value(w).cols());
                            gx.noalias() = g * t.value(w);
                            t.accumulate(x, gx);
                          }
                          if (t.needs(w)) {
                            Matrix gw(g.cols(), t.value(x).cols());
                            gw.noalias() = g.transpose() * t.value(x);
                            t.accumulate(w, gw);
                          }
                          if (t.needs(b)) t.accumulate(b, g.colwise().sum());
                        },
                        "linear");
}

Var gather_rows(Var table, std::vector<int> rows) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tv.rows()) throw UsageError("gather_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(rows[i]);
  }
  return table.tape->custom(std::move(out), {table},
                            [table, rows = std::move(rows)](Tape& t, const Matrix& g) {
                              const Matrix& tv2 = t.value(table);
                              Matrix gt = Matrix::Zero(tv2.rows(), tv2.cols());
                              for (std::size_t i = 0; i < rows.size(); ++i) gt.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                              t.accumulate(table, gt);
                            },
                            "gather_rows");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const Eigen::Index n = parts[0].rows();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.rows() != n) throw UsageError("concat_cols: row counts differ");
    total += p.cols();
  }
  Matrix out(n, total);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->custom(std::move(out), inputs,
                               [inputs](Tape& t, const Matrix& g) {
                                 Eigen::Index col = 0;
                                 for (const Var& p : inputs) {
                                   const Eigen::Index w = t.value(p).cols();
                                   if (t.needs(p)) t.accumulate(p, Matrix(g.middleCols(col, w)));
                                   col += w;
                                 }
                               },
                               "concat_cols");
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw UsageError("slice_cols: range out of bounds");
  return a.tape->custom(a.value().middleCols(start, count), {a},
                        [a, start, count](Tape& t, const Matrix& g) {
                          Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
                          full.middleCols(start, count) = g;
                          t.accumulate(a, full);
                        },
                        "slice_cols");
}

Var relu(Var a) {
  Tape& t = *a.tape;
  if (t.tracking_branches()) mix_mask(t, (a.value().array() > 0.0).eval());
  return t.custom(a.value().cwiseMax(0.0), {a},
                  [a](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, (tp.value(a).array() > 0.0).select(g, 0.0).matrix());
                  },
                  "relu");
}

Var softplus(Var a) {
  return unary(a, "softplus", [](double x) { return softplus_value(x); }, [](double x) { return sigmoid_value(x); });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid_value(x); });
  const int id = static_cast<int>(t.size());
  return t.custom(std::move(out), {a},
                  [a, id](Tape& tp, const Matrix& g) {
                    const Matrix& s = tp.value(Var{&tp, id});
                    tp.accumulate(a, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
                  },
                  "sigmoid");
}

Var exp(Var a) {
  Tape& t = *a.tape;
  const int id = static_cast<int>(t.size());
  return t.custom(a.value().array().exp().matrix(), {a},
                  [a, id](Tape& tp, const Matrix& g) { tp.accumulate(a, g.cwiseProduct(tp.value(Var{&tp, id}))); }, "exp");
}

Var log(Var a) {
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var sin(Var a) {
  return unary(a, "sin", [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Var cos(Var a) {
  return unary(a, "cos", [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

Var sqrt(Var a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

Var square(Var a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var reciprocal(Var a) {
  return unary(a, "reciprocal", [](double x) { return 1.0 / x; }, [](double x) { return -1.0 / (x * x); });
}

Var abs(Var a) {
  Tape& t = *a.tape;
  if (t.tracking_branches()) {
    mix_mask(t, (a.value().array() > 0.0).eval());
    mix_mask(t, (a.value().array() < 0.0).eval());
  }
  return unary(a, "abs", [](double x) { return std::abs(x); },
               [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var maximum(Var a, Var b) {
  check_same_shape(a, b, "maximum");
  Tape& t = *a.tape;
  if (t.tracking_branches()) mix_mask(t, (a.value().array() >= b.value().array()).eval());
  return t.custom(a.value().cwiseMax(b.value()), {a, b},
                  [a, b](Tape& tp, const Matrix& g) {
                    const auto pick_a = (tp.value(a).array() >= tp.value(b).array()).eval();
                    tp.accumulate(a, pick_a.select(g, 0.0).matrix());
                    tp.accumulate(b, pick_a.select(0.0, g).matrix());
                  },
                  "maximum");
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->custom(std::move(out), {a},
                        [a](Tape& t, const Matrix& g) {
                          t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
                        },
                        "sum");
}

Var row_sum(Var a) {
  return a.tape->custom(a.value().rowwise().sum(), {a},
                        [a](Tape& t, const Matrix& g) {
                          Matrix full(t.value(a).rows(), t.value(a).cols());
                          full.colwise() = g.col(0);
                          t.accumulate(a, full);
                        },
                        "row_sum");
}

Var row_norm(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value().rowwise().norm();
  if (t.tracking_branches()) mix_mask(t, (out.array() > 0.0).eval());
  const int id = static_cast<int>(t.size());
  return t.custom(std::move(out), {a},
                  [a, id](Tape& tp, const Matrix& g) {
                    const Matrix& x = tp.value(a);
                    const Matrix& n = tp.value(Var{&tp, id});
                    Matrix gx(x.rows(), x.cols());
                    for (Eigen::Index r = 0; r < x.rows(); ++r) {
                      const double nr = n(r, 0);
                      gx.row(r) = nr > 0.0 ? Eigen::RowVectorXd(x.row(r) * (g(r, 0) / nr))
                                           : Eigen::RowVectorXd::Zero(x.cols());
                    }
                    tp.accumulate(a, gx);
                  },
                  "row_norm");
}

std::vector<double> grad(const LossBuilder& loss_builder, const ParamStore& params) {
  Tape tape(true);
  const Var loss = loss_builder(tape, params);
  std::vector<double> g(params.size(), 0.0);
  tape.backward(loss, g);
  return g;
}

double evaluate(const LossBuilder& loss_builder, const ParamStore& params) {
  Tape tape(false);
  return loss_builder(tape, params).scalar();
}

GradientCheck check_gradient(const LossBuilder& loss_builder, const ParamStore& params,
                             std::span<const std::size_t> indices, double h, double min_step, double abs_floor,
                             double scale_floor) {
  auto eval = [&](const ParamStore& p, std::uint64_t& sig) {
    Tape tape(false);
    tape.enable_branch_tracking(true);
    const double v = loss_builder(tape, p).scalar();
    sig = tape.branch_signature();
    return v;
  };
  std::uint64_t base_sig = 0;
  eval(params, base_sig);
  const std::vector<double> analytic = grad(loss_builder, params);

  double largest = 0.0;
  for (const double a : analytic) largest = std::max(largest, std::abs(a));
  const double floor = std::max(abs_floor, scale_floor * largest);

  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(params.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  GradientCheck result;
  ParamStore probe = params;
  for (const std::size_t i : indices) {
    const double orig = probe.values()[i];
    double step = h;
    bool done = false;
    double fd = 0.0;
    while (step >= min_step * (1.0 - 1e-12)) {
      std::uint64_t sp = 0, sm = 0;
      probe.values()[i] = orig + step;
      const double fp = eval(probe, sp);
      probe.values()[i] = orig - step;
      const double fm = eval(probe, sm);
      probe.values()[i] = orig;
      if (sp == base_sig && sm == base_sig) {
        fd = (fp - fm) / (2.0 * step);
        done = true;
        break;
      }
      step /= 10.0;
    }
    if (!done) {
      ++result.skipped;
      continue;
    }
    ++result.checked;
    const double a = analytic[i];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace skinrf::ad
