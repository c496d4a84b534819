#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "fd.hpp"
#include "fw/ops.hpp"
#include "fw/random.hpp"
#include "fw/tape.hpp"
#include "fw/tensor.hpp"

using namespace fw;
using fwtest::fd_check;
using fwtest::wrt;

namespace {

// Values bounded away from zero so products never make near-zero gradients
// and piecewise-linear ops are never sampled at their kinks.
Tensor rand_tensor(Shape s, RandomStream& rs) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double sign = rs.uniform() < 0.5 ? -1.0 : 1.0;
    t[i] = sign * rs.uniform(0.1, 1.0);
  }
  return t;
}

Tensor coeffs_for(std::size_t n, RandomStream& rs) {
  Tensor c(Shape{n});
  for (std::size_t i = 0; i < n; ++i) c[i] = rs.uniform(0.5, 1.5);
  return c;
}

// Fixed-coefficient scalar reduction. Each output element gets a distinct
// upstream gradient, so a transposed or misrouted backward rule cannot
// cancel out the way it could under a plain sum.
Tensor pin(const Tensor& out, const Tensor& coeffs) {
  return sum(mul(flatten(out), coeffs));
}

}  // namespace

TEST_CASE("arithmetic primitives match finite differences") {
  RandomStream rs(101);
  Tensor a = rand_tensor({3, 4}, rs);
  Tensor b = rand_tensor({3, 4}, rs);
  Tensor s = Tensor::scalar(0.7);
  a.set_requires_grad();
  b.set_requires_grad();
  s.set_requires_grad();
  Tensor c = coeffs_for(12, rs);

  auto rep = fd_check([&] { return pin(add(a, b), c); }, wrt({{"a", a}, {"b", b}}));
  CHECK(rep.max_rel_err < 1e-6);
  rep = fd_check([&] { return pin(sub(a, b), c); }, wrt({{"a", a}, {"b", b}}));
  CHECK(rep.max_rel_err < 1e-6);
  rep = fd_check([&] { return pin(mul(a, b), c); }, wrt({{"a", a}, {"b", b}}));
  CHECK(rep.max_rel_err < 1e-5);
  rep = fd_check([&] { return pin(scalar_mul(a, -2.5), c); }, wrt({{"a", a}}));
  CHECK(rep.max_rel_err < 1e-6);
  rep = fd_check([&] { return pin(scale(a, s), c); }, wrt({{"a", a}, {"s", s}}));
  CHECK(rep.max_rel_err < 1e-5);

  CHECK_THROWS_AS(add(a, Tensor(Shape{4, 3})), ShapeError);
  CHECK_THROWS_AS(mul(a, Tensor(Shape{12})), ShapeError);
  CHECK_THROWS_AS(scale(a, Tensor(Shape{2})), ContractError);
}

TEST_CASE("structural ops route gradients exactly") {
  RandomStream rs(102);
  Tensor a = rand_tensor({3, 4}, rs);
  a.set_requires_grad();
  Tensor c = coeffs_for(12, rs);

  Tensor tr = transpose(Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK(tr.shape() == Shape{3, 2});
  CHECK(tr.at2(0, 1) == 4.0);
  CHECK(tr.at2(2, 0) == 3.0);

  auto rep = fd_check([&] { return pin(transpose(a), c); }, wrt({{"a", a}}));
  CHECK(rep.max_rel_err < 1e-6);
  rep = fd_check([&] { return pin(reshape(a, {4, 3}), c); }, wrt({{"a", a}}));
  CHECK(rep.max_rel_err < 1e-6);
  rep = fd_check([&] { return pin(flatten(a), c); }, wrt({{"a", a}}));
  CHECK(rep.max_rel_err < 1e-6);

  Tensor u = rand_tensor({3}, rs);
  Tensor v = rand_tensor({5}, rs);
  u.set_requires_grad();
  v.set_requires_grad();
  Tensor c8 = coeffs_for(8, rs);
  rep = fd_check([&] { return pin(concat({u, v}), c8); }, wrt({{"u", u}, {"v", v}}));
  CHECK(rep.max_rel_err < 1e-6);

  CHECK_THROWS_AS(transpose(u), ShapeError);
  CHECK_THROWS_AS(reshape(a, {5, 5}), ShapeError);
  CHECK_THROWS_AS(concat({}), ContractError);
  CHECK_THROWS_AS(concat({a}), ShapeError);
}

TEST_CASE("reductions match finite differences") {
  RandomStream rs(103);
  Tensor a = rand_tensor({4, 3}, rs);
  a.set_requires_grad();

  auto rep = fd_check([&] { return sum(a); }, wrt({{"a", a}}));
  CHECK(rep.max_rel_err < 1e-6);
  rep = fd_check([&] { return mean(a); }, wrt({{"a", a}}));
  CHECK(rep.max_rel_err < 1e-6);
  CHECK(sum(a)[0] == doctest::Approx(12.0 * mean(a)[0]).epsilon(1e-12));
}

TEST_CASE("linear algebra ops match finite differences") {
  RandomStream rs(104);
  Tensor m1 = rand_tensor({3, 4}, rs);
  Tensor m2 = rand_tensor({4, 2}, rs);
  Tensor x = rand_tensor({4}, rs);
  Tensor u = rand_tensor({3}, rs);
  Tensor v = rand_tensor({5}, rs);
  for (const Tensor& t : {m1, m2, x, u, v}) t.set_requires_grad();

  Tensor mm = matmul(Tensor(Shape{2, 2}, {1, 2, 3, 4}), Tensor(Shape{2, 2}, {5, 6, 7, 8}));
  CHECK(mm.at2(0, 0) == 19.0);
  CHECK(mm.at2(0, 1) == 22.0);
  CHECK(mm.at2(1, 0) == 43.0);
  CHECK(mm.at2(1, 1) == 50.0);

  Tensor c6 = coeffs_for(6, rs);
  auto rep = fd_check([&] { return pin(matmul(m1, m2), c6); },
                      wrt({{"m1", m1}, {"m2", m2}}));
  CHECK(rep.max_rel_err < 1e-6);

  Tensor c3 = coeffs_for(3, rs);
  rep = fd_check([&] { return pin(matvec(m1, x), c3); }, wrt({{"m1", m1}, {"x", x}}));
  CHECK(rep.max_rel_err < 1e-6);

  Tensor c15 = coeffs_for(15, rs);
  rep = fd_check([&] { return pin(outer(u, v), c15); }, wrt({{"u", u}, {"v", v}}));
  CHECK(rep.max_rel_err < 1e-5);

  CHECK_THROWS_AS(matmul(m1, m1), ShapeError);
  CHECK_THROWS_AS(matvec(m1, u), ShapeError);
  CHECK_THROWS_AS(outer(m1, u), ShapeError);
}

TEST_CASE("dense layer matches finite differences, single and batched") {
  RandomStream rs(105);
  Tensor w = rand_tensor({4, 3}, rs);
  Tensor b = rand_tensor({3}, rs);
  Tensor x = rand_tensor({4}, rs);
  Tensor xb = rand_tensor({2, 4}, rs);
  for (const Tensor& t : {w, b, x, xb}) t.set_requires_grad();

  Tensor c3 = coeffs_for(3, rs);
  auto rep = fd_check([&] { return pin(dense(x, w), c3); }, wrt({{"w", w}, {"x", x}}));
  CHECK(rep.max_rel_err < 1e-6);
  rep = fd_check([&] { return pin(dense(x, w, b), c3); },
                 wrt({{"w", w}, {"b", b}, {"x", x}}));
  CHECK(rep.max_rel_err < 1e-6);

  Tensor c6 = coeffs_for(6, rs);
  rep = fd_check([&] { return pin(dense(xb, w, b), c6); },
                 wrt({{"w", w}, {"b", b}, {"xb", xb}}));
  CHECK(rep.max_rel_err < 1e-6);

  CHECK_THROWS_AS(dense(x, b), ShapeError);
  CHECK_THROWS_AS(dense(b, w), ShapeError);
  CHECK_THROWS_AS(dense(x, w, Tensor(Shape{4})), ShapeError);
}

TEST_CASE("leaky relu values, gradient, and local derivative") {
  Tensor x = Tensor::vec({-2.0, -0.5, 0.5, 2.0});
  x.set_requires_grad();

  Tensor y = leaky_relu(x, 0.2);
  CHECK(y[0] == doctest::Approx(-0.4).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(y[2] == 0.5);
  CHECK(y[3] == 2.0);

  Tensor p = leaky_relu_prime(x, 0.2);
  CHECK(p[0] == 0.2);
  CHECK(p[1] == 0.2);
  CHECK(p[2] == 1.0);
  CHECK(p[3] == 1.0);

  // zero input takes the linear branch
  CHECK(leaky_relu(Tensor::vec({0.0}), 0.2)[0] == 0.0);
  CHECK(leaky_relu_prime(Tensor::vec({0.0}), 0.2)[0] == 1.0);

  RandomStream rs(106);
  Tensor c4 = coeffs_for(4, rs);
  auto rep = fd_check([&] { return pin(leaky_relu(x, 0.2), c4); }, wrt({{"x", x}}));
  CHECK(rep.max_rel_err < 1e-5);

  // The local-derivative op is piecewise constant, so it must contribute no
  // gradient of its own: d/dx [prime(x) * x] comes out as just prime(x).
  x.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(mul(leaky_relu_prime(x, 0.2), x));
    backward(tape, loss);
  }
  const double* g = x.grad();
  REQUIRE(g != nullptr);
  CHECK(g[0] == 0.2);
  CHECK(g[1] == 0.2);
  CHECK(g[2] == 1.0);
  CHECK(g[3] == 1.0);

  CHECK_THROWS_AS(leaky_relu(x, 0.0), ContractError);
  CHECK_THROWS_AS(leaky_relu(x, 1.0), ContractError);
  CHECK_THROWS_AS(leaky_relu_prime(x, -0.5), ContractError);
}

TEST_CASE("conv2d hand-computed cases") {
  // identity kernel: 1 in the center, zero elsewhere; pad 1 keeps the shape
  Tensor img(Shape{1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<double>(i + 1);
  Tensor ident(Shape{1, 1, 3, 3});
  ident[4] = 1.0;
  Tensor out = conv2d(img, ident, Tensor(), 1);
  REQUIRE(out.shape() == Shape{1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) CHECK(out[i] == img[i]);

  // all-ones kernel over an all-ones 4x4 input, no padding: every 3x3
  // window sums to 9
  Tensor ones_img = Tensor::full(Shape{1, 4, 4}, 1.0);
  Tensor ones_k = Tensor::full(Shape{1, 1, 3, 3}, 1.0);
  Tensor out2 = conv2d(ones_img, ones_k, Tensor(), 0);
  REQUIRE(out2.shape() == Shape{1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(out2[i] == 9.0);

  // bias adds per output channel
  Tensor bias = Tensor::vec({0.5});
  Tensor out3 = conv2d(ones_img, ones_k, bias, 0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out3[i] == 9.5);

  CHECK_THROWS_AS(conv2d(Tensor(Shape{4, 4}), ident, Tensor(), 0), ShapeError);
  CHECK_THROWS_AS(conv2d(img, Tensor(Shape{1, 2, 3, 3}), Tensor(), 0), ShapeError);
  CHECK_THROWS_AS(conv2d(img, ident, Tensor(), 2), ContractError);
  CHECK_THROWS_AS(conv2d(Tensor(Shape{1, 2, 2}), ident, Tensor(), 0), ShapeError);
}

TEST_CASE("conv2d matches finite differences") {
  RandomStream rs(107);
  Tensor x = rand_tensor({2, 5, 5}, rs);
  Tensor w = rand_tensor({3, 2, 3, 3}, rs);
  Tensor b = rand_tensor({3}, rs);
  for (const Tensor& t : {x, w, b}) t.set_requires_grad();

  Tensor c27 = coeffs_for(27, rs);  // 3 channels x 3x3 output at pad 0
  auto rep = fd_check([&] { return pin(conv2d(x, w, b, 0), c27); },
                      wrt({{"x", x}, {"w", w}, {"b", b}}));
  CHECK(rep.max_rel_err < 1e-5);

  Tensor c75 = coeffs_for(75, rs);  // pad 1 keeps 5x5
  rep = fd_check([&] { return pin(conv2d(x, w, b, 1), c75); },
                 wrt({{"x", x}, {"w", w}, {"b", b}}));
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("maxpool2x2 values, odd edges, ties, gradient") {
  Tensor x(Shape{1, 4, 4}, {1, 2, 5, 4,    //
                            3, 0, 1, 2,    //
                            7, 6, 0, 1,    //
                            5, 8, 3, 9});
  Tensor y = maxpool2x2(x);
  REQUIRE(y.shape() == Shape{1, 2, 2});
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 5.0);
  CHECK(y[2] == 8.0);
  CHECK(y[3] == 9.0);

  // odd edges keep a partial window
  Tensor o(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor yo = maxpool2x2(o);
  REQUIRE(yo.shape() == Shape{1, 2, 2});
  CHECK(yo[0] == 5.0);
  CHECK(yo[1] == 6.0);
  CHECK(yo[2] == 8.0);
  CHECK(yo[3] == 9.0);

  // ties route the gradient to the first element in row-major order
  Tensor t = Tensor::full(Shape{1, 2, 2}, 5.0);
  t.set_requires_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(maxpool2x2(t));
    backward(tape, loss);
  }
  const double* g = t.grad();
  REQUIRE(g != nullptr);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);

  RandomStream rs(108);
  Tensor xr = rand_tensor({2, 4, 4}, rs);
  xr.set_requires_grad();
  Tensor c8 = coeffs_for(8, rs);
  auto rep = fd_check([&] { return pin(maxpool2x2(xr), c8); }, wrt({{"xr", xr}}));
  CHECK(rep.max_rel_err < 1e-5);

  CHECK_THROWS_AS(maxpool2x2(Tensor(Shape{4, 4})), ShapeError);
}

TEST_CASE("softmax is normalized, stable, and differentiable") {
  Tensor logits = Tensor::vec({0.3, -0.7, 1.2, 0.1});
  Tensor p = softmax(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) total += p[i];
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> pv = softmax_values({0.3, -0.7, 1.2, 0.1});
  for (std::size_t i = 0; i < 4; ++i) CHECK(pv[i] == doctest::Approx(p[i]).epsilon(1e-15));

  // extreme logits must not overflow
  Tensor big = softmax(Tensor::vec({1000.0, 0.0}));
  CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big[1] < 1e-300);
  CHECK(std::isfinite(big[1]));

  logits.set_requires_grad();
  RandomStream rs(109);
  Tensor c4 = coeffs_for(4, rs);
  auto rep = fd_check([&] { return pin(softmax(logits), c4); }, wrt({{"logits", logits}}));
  CHECK(rep.max_rel_err < 1e-5);

  CHECK_THROWS_AS(softmax(Tensor(Shape{2, 2})), ShapeError);
}

TEST_CASE("softmax cross entropy values and gradient identity") {
  // uniform logits over 5 classes: loss is exactly ln 5
  Tensor uni = Tensor::full(Shape{5}, 0.37);
  CHECK(softmax_cross_entropy(uni, 3)[0] == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  // a huge correct logit drives the loss to zero without overflow
  Tensor sure = Tensor::vec({1000.0, 0.0});
  double l = softmax_cross_entropy(sure, 0)[0];
  CHECK(std::isfinite(l));
  CHECK(l >= 0.0);
  CHECK(l < 1e-9);
  // and the wrong target costs about the logit gap
  CHECK(softmax_cross_entropy(sure, 1)[0] == doctest::Approx(1000.0).epsilon(1e-9));

  // analytic gradient is softmax(logits) - onehot(target), to 1e-12
  Tensor logits = Tensor::vec({0.3, -0.7, 1.2});
  logits.set_requires_grad();
  logits.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = softmax_cross_entropy(logits, 2);
    backward(tape, loss);
  }
  std::vector<double> p = softmax_values({0.3, -0.7, 1.2});
  const double* g = logits.grad();
  REQUIRE(g != nullptr);
  CHECK(std::fabs(g[0] - p[0]) < 1e-12);
  CHECK(std::fabs(g[1] - p[1]) < 1e-12);
  CHECK(std::fabs(g[2] - (p[2] - 1.0)) < 1e-12);

  auto rep = fd_check([&] { return softmax_cross_entropy(logits, 1); },
                      wrt({{"logits", logits}}));
  CHECK(rep.max_rel_err < 1e-5);

  CHECK_THROWS_AS(softmax_cross_entropy(logits, 3), IndexError);
}

TEST_CASE("tape records only inside a scope") {
  Tensor a = Tensor::vec({1.0, 2.0});
  Tensor b = Tensor::vec({3.0, 4.0});
  a.set_requires_grad();
  b.set_requires_grad();

  CHECK(Tape::active() == nullptr);
  Tensor c = add(a, b);
  CHECK(c.node_id() == -1);  // nothing recorded
  CHECK(c[0] == 4.0);

  Tape outer_tape;
  {
    TapeScope outer_scope(outer_tape);
    CHECK(Tape::active() == &outer_tape);
    Tensor d = add(a, b);
    CHECK(d.node_id() >= 0);
    CHECK(outer_tape.node_count() == 1);

    Tape inner_tape;
    {
      TapeScope inner_scope(inner_tape);
      CHECK(Tape::active() == &inner_tape);
      add(a, b);
      CHECK(inner_tape.node_count() == 1);
      CHECK(outer_tape.node_count() == 1);
    }
    CHECK(Tape::active() == &outer_tape);
  }
  CHECK(Tape::active() == nullptr);
}

TEST_CASE("backward accumulates into leaves and is repeatable") {
  Tensor x = Tensor::vec({0.5, -1.5, 2.0});
  x.set_requires_grad();
  x.zero_grad();

  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(mul(x, x));
  }
  backward(tape, loss);
  std::vector<double> once(x.grad(), x.grad() + 3);
  CHECK(once[0] == 1.0);  // 2x
  CHECK(once[1] == -3.0);
  CHECK(once[2] == 4.0);

  backward(tape, loss);  // leaf grads accumulate exactly
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0 * once[i]);

  x.zero_grad();
  backward(tape, loss);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == once[i]);
}

TEST_CASE("diamond-shaped reuse sums gradient contributions") {
  Tensor x = Tensor::vec({0.7, -0.3});
  x.set_requires_grad();
  x.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = mul(x, x);
    Tensor z = add(y, y);
    backward(tape, sum(z));
  }
  CHECK(x.grad()[0] == doctest::Approx(4.0 * 0.7).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(4.0 * -0.3).epsilon(1e-12));

  auto rep = fd_check([&] { Tensor y = mul(x, x); return sum(add(y, y)); },
                      wrt({{"x", x}}));
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("detach stops gradient flow") {
  Tensor a = Tensor::vec({1.5, -2.0});
  Tensor b = Tensor::vec({3.0, 4.0});
  a.set_requires_grad();
  b.set_requires_grad();
  a.zero_grad();
  b.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(mul(a, detach(b)));
    backward(tape, loss);
  }
  REQUIRE(a.grad() != nullptr);
  CHECK(a.grad()[0] == 3.0);
  CHECK(a.grad()[1] == 4.0);
  CHECK(b.grad() == nullptr);  // never touched

  // detaching a tape-produced value cuts the path back to its inputs
  a.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = detach(mul(a, a));
    Tensor loss = sum(mul(a, y));  // only the direct factor contributes
    backward(tape, loss);
  }
  CHECK(a.grad()[0] == doctest::Approx(1.5 * 1.5).epsilon(1e-12));
  CHECK(a.grad()[1] == doctest::Approx(-2.0 * -2.0).epsilon(1e-12));
}

TEST_CASE("backward rejects bad roots") {
  Tensor a = Tensor::vec({1.0, 2.0});
  a.set_requires_grad();
  Tape tape;
  Tensor vec_out, scalar_out;
  {
    TapeScope scope(tape);
    vec_out = mul(a, a);
    scalar_out = sum(vec_out);
  }
  CHECK_THROWS_AS(backward(tape, vec_out), ContractError);    // not scalar
  CHECK_THROWS_AS(backward(tape, Tensor::scalar(1.0)), ContractError);  // not on tape
  CHECK_THROWS_AS(backward(tape, Tensor()), ContractError);   // undefined

  Tape other;
  CHECK_THROWS_AS(backward(other, scalar_out), ContractError);  // wrong tape
}

TEST_CASE("composite network matches finite differences end to end") {
  RandomStream rs(110);
  Tensor x = rand_tensor({6}, rs);
  Tensor w1 = rand_tensor({6, 8}, rs);
  Tensor b1 = rand_tensor({8}, rs);
  Tensor w2 = rand_tensor({8, 4}, rs);
  Tensor b2 = rand_tensor({4}, rs);
  for (const Tensor& t : {x, w1, b1, w2, b2}) t.set_requires_grad();

  auto loss_fn = [&] {
    Tensor h = leaky_relu(dense(x, w1, b1), 0.2);
    Tensor logits = dense(h, w2, b2);
    return softmax_cross_entropy(logits, 2);
  };
  auto rep = fd_check(loss_fn, wrt({{"x", x}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}}));
  CHECK(rep.checked == 6 + 48 + 8 + 32 + 4);
  INFO(rep.worst);
  CHECK(rep.max_rel_err < 1e-4);
}
