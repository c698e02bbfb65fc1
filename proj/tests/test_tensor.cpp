#include <cmath>
#include <random>

#include "bam/nn.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bam;

TEST_CASE("shape bookkeeping") {
  const Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(shape_numel(t.shape()) == t.numel());
  CHECK(shape_str(t.shape()) == "(2, 3, 4)");
  CHECK_THROWS_AS(Tensor::from_vector({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("square has derivative 2x") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = mul(x, x);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("grad buffers match value shapes after backward") {
  std::mt19937_64 rng(1);
  Tensor a = testing::random_tensor({3, 4}, rng);
  Tensor b = testing::random_tensor({4, 2}, rng);
  Tensor loss = sum(tanh(matmul(a, b)));
  loss.backward();
  CHECK(a.grad().size() == a.numel());
  CHECK(b.grad().size() == b.numel());
}

TEST_CASE("backward needs a scalar") {
  Tensor a = Tensor::full({2}, 1.0, true);
  CHECK_THROWS_AS(scale(a, 2.0).backward(), ShapeError);
}

TEST_CASE("stop_gradient blocks its input") {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y = Tensor::scalar(5.0, true);
  Tensor loss = mul(stop_gradient(y), x);
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(5.0));
  CHECK((!y.has_grad() || y.grad()[0] == 0.0));
  CHECK(loss.item() == doctest::Approx(10.0));
}

TEST_CASE("stop_gradient keeps the marker in the graph") {
  Tensor y = Tensor::scalar(1.0, true);
  Tensor s = stop_gradient(y);
  CHECK(s.op() == "stop_gradient");
  CHECK(s.node()->blocks_gradient);
  CHECK(s.node()->parents.size() == 1);
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x = Tensor::scalar(1.0, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("diamond graphs accumulate both paths") {
  Tensor x = Tensor::scalar(1.5, true);
  Tensor y = add(mul(x, x), scale(x, 3.0));  // 2x + 3
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("detach drops history") {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor d = mul(x, x).detach();
  CHECK_FALSE(d.requires_grad());
  CHECK(d.item() == 4.0);
}
