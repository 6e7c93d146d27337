#include <doctest.h>

#include "gradcheck.hpp"
#include "idrestore/autograd.hpp"
#include "idrestore/parameters.hpp"

using namespace idr;
using namespace idr::nn;

namespace {

Var rand_param(std::vector<int> shape, std::uint64_t seed, double stddev = 1.0) {
  Rng rng(seed);
  return parameter(random_tensor(std::move(shape), stddev, rng));
}

void expect_gradients(const std::function<Var()>& f, std::vector<Var> params) {
  Rng rng(99);
  const auto r = test::gradient_check(f, std::move(params), 30, rng);
  CHECK(r.failed == 0);
  CHECK(r.worst_relative < 1e-5);
}

}  // namespace

TEST_CASE("elementwise ops") {
  Var a = rand_param({2, 3}, 1), b = rand_param({2, 3}, 2), t = constant(Tensor({2, 3}, 0.3));
  expect_gradients([&] { return l2_distance(add(gelu(a), scale(sub(a, b), 0.7)), t); }, {a, b});
}

TEST_CASE("linear and concatenation") {
  Var x = rand_param({3, 4}, 3), w = rand_param({4, 5}, 4), bias = rand_param({5}, 5), y = rand_param({2, 5}, 6);
  Var t = constant(Tensor({6, 5}, 0.1));
  expect_gradients(
      [&] {
        const Var rows[] = {linear(x, w, bias), y, slice_rows(linear(x, w, bias), 1, 2)};
        return l2_distance(concat_rows(rows), t);
      },
      {x, w, bias, y});
  Var c1 = rand_param({2, 3}, 7), c2 = rand_param({2, 2}, 8);
  Var t2 = constant(Tensor({2, 5}, -0.2));
  expect_gradients(
      [&] {
        const Var cols[] = {c1, gelu(c2)};
        return l2_distance(concat_cols(cols), t2);
      },
      {c1, c2});
}

TEST_CASE("convolution with channel bias") {
  Var x = rand_param({2, 5, 6}, 9), w = rand_param({3, 2, 3, 3}, 10, 0.3), b = rand_param({3}, 11);
  Var cb = rand_param({1, 3}, 12);
  Var t = constant(Tensor({3, 5, 6}, 0.05));
  expect_gradients([&] { return l2_distance(add_channel_bias(conv2d(x, w, b), cb), t); }, {x, w, b, cb});
}

TEST_CASE("cross attention") {
  Var h = rand_param({4, 3, 3}, 13), tok = rand_param({5, 6}, 14);
  Var wq = rand_param({4, 2}, 15), wk = rand_param({6, 2}, 16), wv = rand_param({6, 4}, 17);
  Var t = constant(Tensor({4, 3, 3}, 0.2));
  expect_gradients([&] { return l2_distance(cross_attention(h, tok, wq, wk, wv), t); }, {h, tok, wq, wk, wv});
}

TEST_CASE("sum of scalars and reuse of a node") {
  Var a = rand_param({3}, 18);
  Var z = constant(Tensor({3}));
  expect_gradients(
      [&] {
        const Var parts[] = {l2_distance(a, z), l2_distance(scale(a, 2.0), z)};
        return sum_scalars(parts);
      },
      {a});
}

TEST_CASE("shape mismatches throw") {
  Var a = constant(Tensor({2, 3})), b = constant(Tensor({3, 2}));
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(linear(a, constant(Tensor({2, 2})), Var{}), std::invalid_argument);
  CHECK_THROWS_AS(slice_rows(a, 1, 5), std::invalid_argument);
}

TEST_CASE("no-grad guard and frozen parameters record no gradient") {
  Var p = rand_param({2}, 19);
  {
    NoGradGuard guard;
    Var y = l2_distance(p, constant(Tensor({2})));
    backward(y);
  }
  CHECK(p.grad().size() == 0);
  p.set_requires_grad(false);
  backward(l2_distance(p, constant(Tensor({2}))));
  CHECK(p.grad().size() == 0);
}
