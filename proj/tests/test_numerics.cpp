#include <doctest.h>

#include <cmath>
#include <functional>

#include "textloc/adam.hpp"
#include "textloc/gradcheck.hpp"
#include "textloc/rng.hpp"
#include "textloc/tape.hpp"

using namespace textloc;
using namespace textloc::ad;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

// Gradient check for a scalar-valued tape program with one free input.
void check_op(const std::function<Var(Tape&, Var)>& build, const Tensor& x,
              double tol = 1e-4) {
  Tape tape;
  Var xv = tape.leaf(x);
  Var loss = build(tape, xv);
  tape.backward(loss);
  const Tensor analytic = tape.grad(xv);
  auto f = [&](const Tensor& probe) {
    Tape t2;
    Var pv = t2.leaf(probe);
    return t2.val(build(t2, pv)).item();
  };
  const auto res = finite_diff_check(f, x, analytic, tol);
  CAPTURE(res.max_rel_err);
  CAPTURE(res.worst_index);
  CHECK(res.pass);
}

}  // namespace

TEST_CASE("relu matches its definition") {
  Tape t;
  Var x = t.leaf(Tensor::vec({-1.0, 0.0, 2.0}));
  Var y = t.relu(x);
  CHECK(t.val(y).v == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("linear with identity weights and zero bias is identity") {
  Tape t;
  Var x = t.leaf(Tensor::vec({0.3, -0.7, 1.5}));
  Tensor w({3, 3});
  for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  Var wv = t.leaf(w);
  Var bv = t.leaf(Tensor({3}, 0.0));
  Var y = t.linear(x, wv, bv);
  CHECK(t.val(y).v == t.val(x).v);
}

TEST_CASE("log_sum_exp of [0,0] is ln 2") {
  Tape t;
  Var x = t.leaf(Tensor::vec({0.0, 0.0}));
  Var y = t.logsumexp_all(x);
  CHECK(t.val(y).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("shape mismatch raises a structured error naming the op") {
  Tape t;
  Var a = t.leaf(Tensor({2, 3}));
  Var b = t.leaf(Tensor({3, 3}));
  CHECK_THROWS_WITH_AS(t.add(a, b),
                       "add: incompatible shapes [2,3] and [3,3]", Error);
}

TEST_CASE("backward: d(x*x)/dx = 2x") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(3.0));
  Var y = t.mul(x, x);
  t.backward(y);
  CHECK(t.grad(x).item() == doctest::Approx(6.0));
}

TEST_CASE("backward: unreachable parameter gets zero gradient") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(3.0));
  Var p = t.leaf(Tensor::vec({1.0, 2.0}));
  Var y = t.mul(x, x);
  t.backward(y);
  CHECK(t.grad(p).v == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward: inactive relu blocks the gradient") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(1.0));
  Var y = t.relu(t.neg(x));
  t.backward(y);
  CHECK(t.grad(x).item() == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape t;
  Var x = t.leaf(Tensor::vec({1.0, 2.0}));
  CHECK_THROWS_AS(t.backward(x), Error);
}

TEST_CASE("max_rows routes gradient only to argmax, conserving mass") {
  Tape t;
  Tensor m = Tensor::matrix(3, 2, {1.0, 5.0, 4.0, 2.0, 3.0, 0.0});
  Var mv = t.leaf(m);
  Var pooled = t.max_rows(mv);
  Var loss = t.dot(pooled, t.leaf(Tensor::vec({2.0, 7.0})));
  t.backward(loss);
  const Tensor& g = t.grad(mv);
  // column 0 argmax = row 1 (value 4), column 1 argmax = row 0 (value 5)
  CHECK(g.at(1, 0) == doctest::Approx(2.0));
  CHECK(g.at(0, 1) == doctest::Approx(7.0));
  double total = 0.0;
  int nonzero = 0;
  for (double x : g.v) {
    total += x;
    if (x != 0.0) ++nonzero;
  }
  CHECK(nonzero == 2);
  CHECK(total == doctest::Approx(9.0));
}

TEST_CASE("every primitive gradient matches central differences on 100 seeds") {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(77, "numerics-props") + static_cast<std::uint64_t>(seed));
    const Tensor a = random_tensor({4, 3}, rng);
    const Tensor b = random_tensor({3, 5}, rng);
    const Tensor c = random_tensor({4, 3}, rng);
    const Tensor w = random_tensor({5}, rng);
    const Tensor sm_w = random_tensor({12}, rng);
    const Tensor row3 = random_tensor({3}, rng);
    const Tensor col4 = random_tensor({4}, rng);
    const Tensor mat42 = random_tensor({4, 2}, rng);
    const Tensor mat23 = random_tensor({2, 3}, rng);
    const Tensor q23 = random_tensor({2, 3}, rng);

    check_op([&](Tape& t, Var x) { return t.sum(t.relu(x)); }, a);
    check_op([&](Tape& t, Var x) { return t.mean(t.mul(x, t.leaf(c))); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.matmul(x, t.leaf(b))); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.matmul(t.leaf(a), x)); }, b);
    check_op([&](Tape& t, Var x) { return t.mean(t.transpose(x)); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.max_rows(x)); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.mean_rows(x)); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.logsumexp_rows(x)); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.logsumexp_cols(x)); }, a);
    check_op([&](Tape& t, Var x) { return t.logsumexp_all(x); }, a);
    check_op([&](Tape& t, Var x) {
      return t.dot(t.reshape(t.softmax_rows(x), {12}), t.leaf(sm_w));
    }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.exp(t.scale(x, 0.5))); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.log(t.add_scalar(t.relu(x), 0.5))); }, a);
    check_op([&](Tape& t, Var x) { return t.mse(x, t.leaf(c)); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.pairwise_sqdist(x, t.leaf(b))); },
             random_tensor({2, 5}, rng));
    check_op([&](Tape& t, Var x) { return t.sum(t.l2normalize_rows(x)); },
             random_tensor({3, 4}, rng, 0.2, 1.0));
    check_op([&](Tape& t, Var x) { return t.sum(t.add_rowvec(x, t.leaf(row3))); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.add_colvec(x, t.leaf(col4))); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.repeat_row(x, 3)); }, w);
    check_op([&](Tape& t, Var x) { return t.sum(t.gather_rows(x, {2, 0, 2})); }, a);
    check_op([&](Tape& t, Var x) {
      return t.sum(t.gather_elems(x, {{0, 1}, {3, 2}, {0, 1}}));
    }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.slice_cols(x, 1, 2)); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.concat_cols(x, t.leaf(mat42))); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.concat_rows(x, t.leaf(mat23))); }, a);
    check_op([&](Tape& t, Var x) { return t.sum(t.attention(t.leaf(q23), x, x)); }, a);
  }
}

TEST_CASE("quadratic form gradient check passes below 1e-6") {
  Rng rng(12345);
  const Tensor x = random_tensor({6}, rng);
  const Tensor q = random_tensor({6, 6}, rng);
  auto build = [&](Tape& t, Var xv) {
    Var qx = t.reshape(t.matmul(t.reshape(xv, {1, 6}), t.leaf(q)), {6});
    return t.dot(xv, qx);
  };
  Tape t;
  Var xv = t.leaf(x);
  Var loss = build(t, xv);
  t.backward(loss);
  auto f = [&](const Tensor& probe) {
    Tape t2;
    Var pv = t2.leaf(probe);
    return t2.val(build(t2, pv)).item();
  };
  const auto res = finite_diff_check(f, x, t.grad(xv), 1e-6);
  CAPTURE(res.max_rel_err);
  CHECK(res.pass);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  Rng rng(9);
  ParamStore params;
  params.add("p", random_tensor({3, 2}, rng));
  const Tensor before = params.at("p");
  AdamState state;
  GradMap grads;
  grads.emplace("p", Tensor({3, 2}, 0.0));
  for (int i = 0; i < 5; ++i) adam_step(params, grads, state, 0.01);
  CHECK(params.at("p") == before);
  CHECK(state.step == 5);
}

TEST_CASE("adam first step with unit gradient moves by about -lr") {
  ParamStore params;
  params.add("p", Tensor::scalar(0.0));
  AdamState state;
  GradMap grads;
  grads.emplace("p", Tensor::scalar(1.0));
  adam_step(params, grads, state, 0.001);
  CHECK(params.at("p").item() == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam update magnitude approaches lr under a constant gradient") {
  ParamStore params;
  params.add("p", Tensor::scalar(0.0));
  AdamState state;
  GradMap grads;
  grads.emplace("p", Tensor::scalar(0.37));
  double prev = 0.0;
  double last_delta = 0.0;
  for (int i = 0; i < 10000; ++i) {
    adam_step(params, grads, state, 0.001);
    last_delta = params.at("p").item() - prev;
    prev = params.at("p").item();
  }
  CHECK(std::fabs(last_delta) == doctest::Approx(0.001).epsilon(1e-3));
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  ParamStore params;
  params.add("weights", Tensor::scalar(0.0));
  AdamState state;
  GradMap grads;
  grads.emplace("weights", Tensor::scalar(std::nan("")));
  try {
    adam_step(params, grads, state, 0.001);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("weights") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip preserves names, shapes and bytes") {
  Rng rng(4242);
  ParamStore params;
  params.add("a.w", random_tensor({4, 3}, rng));
  params.add("a.b", random_tensor({3}, rng));
  params.add("z", Tensor::scalar(1.25));
  const std::string path = "test_checkpoint.bin";
  save_checkpoint(params, path);
  ParamStore loaded = load_checkpoint(path);
  REQUIRE(loaded.names() == params.names());
  for (const auto& n : params.names()) CHECK(loaded.at(n) == params.at(n));
  std::remove(path.c_str());
}

TEST_CASE("bound params collect gradients by name") {
  ParamStore params;
  params.add("w", Tensor::vec({2.0, 3.0}));
  params.add("unused", Tensor::scalar(5.0));
  Tape t;
  BoundParams bound(t, params);
  Var w = bound("w");
  Var loss = t.dot(w, w);
  t.backward(loss);
  GradMap g = bound.grads();
  REQUIRE(g.count("w") == 1);
  CHECK(g.at("w").v == std::vector<double>{4.0, 6.0});
  CHECK(g.count("unused") == 0);
}
