#include <doctest.h>

#include <functional>

#include "generators.hpp"
#include "skinrf/autodiff.hpp"
#include "skinrf/error.hpp"

using namespace skinrf;
using ad::Var;

namespace {

// Two 4x3 blocks "a" and "b" plus a 1x3 row, a 4x1 column and a 5x3 weight matrix.
ParamStore random_store(std::uint64_t seed, double lo = -1.5, double hi = 1.5) {
  ParamStore s;
  s.add("a", 4, 3);
  s.add("b", 4, 3);
  s.add("row", 1, 3);
  s.add("col", 4, 1);
  s.add("w", 5, 3);
  s.add("bias", 1, 5);
  testgen::Gen g(seed);
  for (double& v : s.values()) {
    // Keep values away from zero so kinks at 0 stay outside finite-difference steps.
    double x = g.uniform(lo, hi);
    if (std::abs(x) < 0.05) x = x < 0 ? -0.05 : 0.05;
    v = x;
  }
  return s;
}


Var p(ad::Tape& t, const ParamStore& s, const char* name) { return t.parameter(s, s.require(name)); }

// Weighted sum with fixed pseudo-random weights so every output entry reaches the loss.
Var reduce(ad::Tape& t, Var v) {
  ad::Matrix weights(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = 0.3 + 0.17 * double(i % 7);
  return ad::sum(v * t.constant(weights));
}

void expect_gradient(const char* name, const std::function<Var(ad::Tape&, const ParamStore&)>& op,
                     const ParamStore& store) {
  INFO(name);
  const ad::LossBuilder loss = [&](ad::Tape& t, const ParamStore& s) { return reduce(t, op(t, s)); };
  const ad::GradientCheck r = ad::check_gradient(loss, store);
  CHECK(r.checked > 0);
  CHECK(r.max_relative_error < 1e-6);
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("every operation matches central differences") {
    const ParamStore s = random_store(1);
    const ParamStore pos = random_store(2, 0.2, 2.0);
    using ad::Tape;
    expect_gradient("add", [](Tape& t, const ParamStore& s) { return p(t, s, "a") + p(t, s, "b"); }, s);
    expect_gradient("sub", [](Tape& t, const ParamStore& s) { return p(t, s, "a") - p(t, s, "b"); }, s);
    expect_gradient("mul", [](Tape& t, const ParamStore& s) { return p(t, s, "a") * p(t, s, "b"); }, s);
    expect_gradient("scale", [](Tape& t, const ParamStore& s) { return 2.5 * p(t, s, "a") + 1.0; }, s);
    expect_gradient("neg", [](Tape& t, const ParamStore& s) { return -p(t, s, "a"); }, s);
    expect_gradient("add_row", [](Tape& t, const ParamStore& s) { return ad::add_row(p(t, s, "a"), p(t, s, "row")); }, s);
    expect_gradient("mul_col", [](Tape& t, const ParamStore& s) { return ad::mul_col(p(t, s, "a"), p(t, s, "col")); }, s);
    expect_gradient("matmul_nt", [](Tape& t, const ParamStore& s) { return ad::matmul_nt(p(t, s, "a"), p(t, s, "w")); }, s);
    expect_gradient("linear",
                    [](Tape& t, const ParamStore& s) { return ad::linear(p(t, s, "a"), p(t, s, "w"), p(t, s, "bias")); }, s);
    expect_gradient("gather_rows",
                    [](Tape& t, const ParamStore& s) { return ad::gather_rows(p(t, s, "w"), {4, 0, 0, 2, 4}); }, s);
    expect_gradient("concat_cols", [](Tape& t, const ParamStore& s) {
      const Var parts[] = {p(t, s, "a"), p(t, s, "col"), p(t, s, "b")};
      return ad::concat_cols(parts);
    }, s);
    expect_gradient("slice_cols", [](Tape& t, const ParamStore& s) { return ad::slice_cols(p(t, s, "w"), 1, 2); }, s);
    expect_gradient("relu", [](Tape& t, const ParamStore& s) { return ad::relu(p(t, s, "a")); }, s);
    expect_gradient("softplus", [](Tape& t, const ParamStore& s) { return ad::softplus(p(t, s, "a")); }, s);
    expect_gradient("sigmoid", [](Tape& t, const ParamStore& s) { return ad::sigmoid(p(t, s, "a")); }, s);
    expect_gradient("exp", [](Tape& t, const ParamStore& s) { return ad::exp(p(t, s, "a")); }, s);
    expect_gradient("sin", [](Tape& t, const ParamStore& s) { return ad::sin(p(t, s, "a")); }, s);
    expect_gradient("cos", [](Tape& t, const ParamStore& s) { return ad::cos(p(t, s, "a")); }, s);
    expect_gradient("square", [](Tape& t, const ParamStore& s) { return ad::square(p(t, s, "a")); }, s);
    expect_gradient("abs", [](Tape& t, const ParamStore& s) { return ad::abs(p(t, s, "a")); }, s);
    expect_gradient("maximum", [](Tape& t, const ParamStore& s) { return ad::maximum(p(t, s, "a"), p(t, s, "b")); }, s);
    expect_gradient("row_sum", [](Tape& t, const ParamStore& s) { return ad::row_sum(p(t, s, "a")); }, s);
    expect_gradient("row_norm", [](Tape& t, const ParamStore& s) { return ad::row_norm(p(t, s, "a")); }, s);
    expect_gradient("log", [](Tape& t, const ParamStore& s) { return ad::log(p(t, s, "a")); }, pos);
    expect_gradient("sqrt", [](Tape& t, const ParamStore& s) { return ad::sqrt(p(t, s, "a")); }, pos);
    expect_gradient("reciprocal", [](Tape& t, const ParamStore& s) { return ad::reciprocal(p(t, s, "a")); }, pos);
    expect_gradient("composite", [](Tape& t, const ParamStore& s) {
      const Var h = ad::softplus(ad::linear(p(t, s, "a"), p(t, s, "w"), p(t, s, "bias")));
      return ad::mul_col(ad::sigmoid(h), ad::row_norm(p(t, s, "b"))) + ad::square(h);
    }, s);
  }

  TEST_CASE("least squares gradient equals its closed form") {
    // L = sum((X w^T + b - Y)^2); dL/dw = 2 R^T X, dL/db = 2 * column sums of R.
    ParamStore s;
    const BlockId w = s.add("w", 2, 3);
    const BlockId b = s.add("b", 1, 2);
    testgen::Gen g(3);
    for (double& v : s.values()) v = g.normal();
    ad::Matrix x(6, 3), y(6, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g.normal();
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = g.normal();
    const auto grads = ad::grad(
        [&](ad::Tape& t, const ParamStore& ps) {
          return ad::sum(ad::square(ad::linear(t.constant(x), t.parameter(ps, w), t.parameter(ps, b)) - t.constant(y)));
        },
        s);
    const ad::Matrix r = (x * s.matrix(w).transpose()).rowwise() + s.matrix(b).row(0) - y;
    const ad::Matrix dw = 2.0 * r.transpose() * x;
    const ad::Matrix db = 2.0 * r.colwise().sum();
    const Eigen::Map<const ad::Matrix> gw(grads.data() + s.block(w).offset, 2, 3);
    const Eigen::Map<const ad::Matrix> gb(grads.data() + s.block(b).offset, 1, 2);
    CHECK((gw - dw).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((gb - db).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("reused parameters accumulate and frozen blocks receive nothing") {
    ParamStore s;
    const BlockId a = s.add("a", 1, 1);
    const BlockId f = s.add("frozen", 1, 1);
    s.values()[0] = 3.0;
    s.values()[1] = 2.0;
    s.set_trainable(f, false);
    const auto g = ad::grad(
        [&](ad::Tape& t, const ParamStore& ps) {
          const Var x = t.parameter(ps, a);
          return ad::sum(x * x * t.parameter(ps, f) + x);
        },
        s);
    CHECK(g[0] == doctest::Approx(2.0 * 2.0 * 3.0 + 1.0));
    CHECK(g[1] == 0.0);
  }

  TEST_CASE("subgradient conventions at kinks") {
    ParamStore s;
    const BlockId a = s.add("a", 1, 3);
    s.matrix(a) << 0.0, -1.0, 2.0;
    const auto relu_g = ad::grad([&](ad::Tape& t, const ParamStore& ps) { return ad::sum(ad::relu(t.parameter(ps, a))); }, s);
    CHECK(relu_g == std::vector<double>{0.0, 0.0, 1.0});
    const auto abs_g = ad::grad([&](ad::Tape& t, const ParamStore& ps) { return ad::sum(ad::abs(t.parameter(ps, a))); }, s);
    CHECK(abs_g == std::vector<double>{0.0, -1.0, 1.0});
    s.matrix(a).setZero();
    const auto norm_g = ad::grad([&](ad::Tape& t, const ParamStore& ps) { return ad::sum(ad::row_norm(t.parameter(ps, a))); }, s);
    CHECK(norm_g == std::vector<double>{0.0, 0.0, 0.0});
    ParamStore two;
    const BlockId x = two.add("x", 1, 1);
    const BlockId y = two.add("y", 1, 1);
    two.values()[0] = two.values()[1] = 1.5;
    const auto max_g = ad::grad(
        [&](ad::Tape& t, const ParamStore& ps) { return ad::sum(ad::maximum(t.parameter(ps, x), t.parameter(ps, y))); }, two);
    CHECK(max_g == std::vector<double>{1.0, 0.0});
  }

  TEST_CASE("non-finite values raise NumericError naming the operation") {
    ParamStore s;
    const BlockId a = s.add("a", 1, 1);
    s.values()[0] = -1.0;
    try {
      ad::evaluate([&](ad::Tape& t, const ParamStore& ps) { return ad::sum(ad::log(t.parameter(ps, a))); }, s);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("log") != std::string::npos);
    }
    s.values()[0] = 1000.0;
    CHECK_THROWS_AS(ad::evaluate([&](ad::Tape& t, const ParamStore& ps) { return ad::sum(ad::exp(t.parameter(ps, a))); }, s),
                    NumericError);
  }

  TEST_CASE("tape misuse is rejected") {
    ParamStore s;
    const BlockId a = s.add("a", 2, 2);
    std::vector<double> g(s.size());
    ad::Tape t;
    const Var x = t.parameter(s, a);
    CHECK_THROWS_AS(t.backward(x, g), UsageError);
    CHECK_THROWS_AS(x + t.constant(ad::Matrix::Zero(3, 2)), UsageError);
    CHECK_THROWS_AS(ad::gather_rows(x, {2}), UsageError);
    CHECK_THROWS_AS(ad::slice_cols(x, 1, 2), UsageError);
    const Var l = ad::sum(x);
    t.backward(l, g);
    CHECK_THROWS_AS(t.backward(l, g), UsageError);
    ad::Tape inference(false);
    const Var y = inference.parameter(s, a);
    CHECK_FALSE(y.requires_grad());
    CHECK_THROWS_AS(inference.backward(ad::sum(y), g), UsageError);
  }

  TEST_CASE("branch signatures separate relu sign patterns") {
    ParamStore s;
    const BlockId a = s.add("a", 1, 2);
    auto signature = [&](double u, double v) {
      s.matrix(a) << u, v;
      ad::Tape t;
      t.enable_branch_tracking(true);
      ad::relu(t.parameter(s, a));
      return t.branch_signature();
    };
    CHECK(signature(1.0, -1.0) == signature(2.0, -0.5));
    CHECK(signature(1.0, -1.0) != signature(-1.0, -1.0));
  }

  TEST_CASE("gradient check reports a wrong custom derivative") {
    ParamStore s;
    const BlockId a = s.add("a", 1, 3);
    s.matrix(a) << 0.4, -0.7, 1.1;
    const ad::LossBuilder wrong = [&](ad::Tape& t, const ParamStore& ps) {
      const Var x = t.parameter(ps, a);
      const ad::Matrix value = x.value().array().cube().matrix();
      // Deliberately off by a factor: d/dx x^3 is 3x^2, not 2x^2.
      const Var y = t.custom(value, {x}, [x](ad::Tape& tape, const ad::Matrix& g) {
        tape.accumulate(x, (g.array() * 2.0 * x.value().array().square()).matrix());
      }, "cube");
      return ad::sum(y);
    };
    CHECK(ad::check_gradient(wrong, s).max_relative_error > 0.1);
  }
}
