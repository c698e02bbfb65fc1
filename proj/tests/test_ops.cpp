#include <cmath>
#include <random>

#include "bam/ops.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bam;

TEST_CASE("matmul hand cases") {
  const Tensor a = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
  const Tensor eye = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
  CHECK(matmul(a, eye).to_vector() == std::vector<double>{1, 2, 3, 4});
  const Tensor r = Tensor::from_vector({1, 2}, {1, 2});
  const Tensor c = Tensor::from_vector({2, 1}, {3, 4});
  CHECK(matmul(r, c).to_vector() == std::vector<double>{11});
  CHECK_THROWS_AS(matmul(r, r), ShapeError);
}

TEST_CASE("matmul gradient against central differences") {
  std::mt19937_64 rng(3);
  Tensor a = testing::random_tensor({3, 4}, rng);
  const Tensor b = testing::random_tensor({4, 2}, rng, -1, 1, false);
  sum(matmul(a, b)).backward();
  const std::vector<double> analytic(a.grad().begin(), a.grad().end());
  NoGradGuard guard;
  const double err =
      testing::finite_difference_error([&] { return sum(matmul(a, b)).item(); }, a, analytic);
  CHECK(err <= 1e-4);
}

TEST_CASE("elementwise and broadcasting") {
  const Tensor a = Tensor::from_vector({3}, {1, 2, 3});
  const Tensor m = Tensor::from_vector({3}, {0, 1, 0});
  CHECK(mul(a, m).to_vector() == std::vector<double>{0, 2, 0});
  CHECK(add(Tensor::from_vector({2}, {1, 2}), Tensor::from_vector({2}, {3, 4})).to_vector() ==
        std::vector<double>{4, 6});
  const Tensor big = Tensor::zeros({4, 4, 3});
  const Tensor mask = Tensor::zeros({4, 4, 1});
  CHECK(mul(big, mask).shape() == Shape{4, 4, 3});
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("broadcast gradient sums over expanded axes") {
  Tensor a = Tensor::full({2, 3}, 1.0, true);
  Tensor b = Tensor::full({3}, 2.0, true);
  sum(mul(a, b)).backward();
  for (double g : b.grad()) CHECK(g == doctest::Approx(2.0));
  for (double g : a.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("activation zero cases") {
  const Tensor z = Tensor::scalar(0.0);
  CHECK(tanh(z).item() == 0.0);
  CHECK(sigmoid(z).item() == 0.5);
  CHECK(selu(z).item() == 0.0);
  CHECK(softmax(Tensor::from_vector({2}, {0, 0}), 0).to_vector() ==
        std::vector<double>{0.5, 0.5});
}

TEST_CASE("selu at plus and minus one") {
  // lambda * x and lambda * alpha * (e^x - 1) with the published constants.
  const double lambda = 1.0507009873554805;
  const double alpha = 1.6732632423543772;
  const Tensor x = Tensor::from_vector({2}, {1.0, -1.0});
  const auto y = selu(x).to_vector();
  CHECK(y[0] == doctest::Approx(lambda));
  CHECK(y[1] == doctest::Approx(lambda * alpha * (std::exp(-1.0) - 1.0)));
  CHECK(y[0] == doctest::Approx(1.0507).epsilon(1e-4));
  CHECK(y[1] == doctest::Approx(-1.1113).epsilon(1e-4));
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(5);
  const Tensor a = testing::random_tensor({4, 6}, rng, -5, 5, false);
  const Tensor s = softmax(a, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
      CHECK(s.at({r, c}) >= 0.0);
      total += s.at({r, c});
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(softmax(a, 2), ShapeError);
}

TEST_CASE("masked softmax with all-ones mask equals softmax") {
  std::mt19937_64 rng(6);
  const Tensor a = testing::random_tensor({3, 5}, rng, -3, 3, false);
  const Tensor ones = Tensor::full({3, 5}, 1.0);
  CHECK(testing::max_abs_diff(masked_softmax(a, 1, ones).data(), softmax(a, 1).data()) == 0.0);
}

TEST_CASE("masked softmax zeroes masked entries and rejects empty rows") {
  const Tensor a = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor m = Tensor::from_vector({2, 3}, {1, 0, 1, 0, 1, 0});
  const Tensor s = masked_softmax(a, 1, m);
  CHECK(s.at({0, 1}) == 0.0);
  CHECK(s.at({1, 1}) == 1.0);
  CHECK(s.at({0, 0}) + s.at({0, 2}) == doctest::Approx(1.0));
  const Tensor empty = Tensor::from_vector({2, 3}, {1, 0, 1, 0, 0, 0});
  CHECK_THROWS(masked_softmax(a, 1, empty));
}

TEST_CASE("batch norm training statistics") {
  std::mt19937_64 rng(7);
  const Tensor x = testing::random_tensor({16, 3}, rng, -4, 9, false);
  std::vector<double> mean(3, 0.0), var(3, 1.0);
  const Tensor g = Tensor::full({3}, 1.0);
  const Tensor b = Tensor::zeros({3});
  const Tensor y = batch_norm(x, g, b, 1, {mean, var, 0.1, 1e-5}, true);
  for (std::size_t f = 0; f < 3; ++f) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < 16; ++r) m += y.at({r, f});
    m /= 16;
    for (std::size_t r = 0; r < 16; ++r) v += (y.at({r, f}) - m) * (y.at({r, f}) - m);
    v /= 16;
    CHECK(std::abs(m) <= 1e-10);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
  // Running moments moved away from their initial values.
  CHECK(mean[0] != 0.0);
}

TEST_CASE("batch norm constant column and eval mode") {
  const Tensor x = Tensor::from_vector({3, 2}, {5, 1, 5, 2, 5, 3});
  std::vector<double> mean(2, 0.0), var(2, 1.0);
  const Tensor g = Tensor::full({2}, 1.0);
  const Tensor b = Tensor::zeros({2});
  const Tensor y = batch_norm(x, g, b, 1, {mean, var, 0.1, 1e-5}, true);
  for (std::size_t r = 0; r < 3; ++r) CHECK(y.at({r, 0}) == 0.0);

  std::vector<double> fm = {1.0, -2.0}, fv = {4.0, 0.25};
  const Tensor before_mean = Tensor::from_vector({2}, fm);
  const Tensor e = batch_norm(x, g, b, 1, {fm, fv, 0.1, 0.0}, false);
  CHECK(e.at({0, 0}) == doctest::Approx((5.0 - 1.0) / 2.0));
  CHECK(e.at({2, 1}) == doctest::Approx((3.0 + 2.0) / 0.5));
  CHECK(fm == before_mean.to_vector());
  std::vector<double> short_mean(3), short_var(3);
  CHECK_THROWS(batch_norm(x, g, b, 1, {short_mean, short_var, 0.1, 1e-5}, true));
}

TEST_CASE("conv1d hand case and length rule") {
  const Tensor x = Tensor::from_vector({1, 1, 5}, {1, 2, 3, 4, 5});
  const Tensor w = Tensor::from_vector({1, 1, 2}, {1, -1});
  const Tensor b = Tensor::from_vector({1}, {0.5});
  CHECK(conv1d(x, w, b, 1, 0, 0).to_vector() == std::vector<double>{-0.5, -0.5, -0.5, -0.5});
  CHECK(conv1d(x, w, b, 2, 1, 0).to_vector() == std::vector<double>{-0.5, -0.5, -0.5});
  CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 1, 1}), w, b, 1, 0, 0), ShapeError);
}

TEST_CASE("reductions") {
  const Tensor a = Tensor::from_vector({2, 3}, {1, 5, 3, 4, 2, 6});
  CHECK(sum(a).item() == 21);
  CHECK(mean(a).item() == 3.5);
  CHECK(sum_axis(a, 0).to_vector() == std::vector<double>{5, 7, 9});
  CHECK(mean_axis(a, 1).to_vector() == std::vector<double>{3, 4});
  CHECK(max_axis(a, 1).to_vector() == std::vector<double>{5, 6});
  CHECK(max_axis(a, 1, true).shape() == Shape{2, 1});
}

TEST_CASE("cross entropy and bce") {
  const Tensor uniform = Tensor::zeros({3, 2});
  const std::vector<int> t = {0, 1, 1};
  const std::vector<double> w = {1, 1, 1};
  CHECK(cross_entropy(uniform, t, w).item() == doctest::Approx(std::log(2.0)));
  const std::vector<double> none = {0, 0, 0};
  CHECK(cross_entropy(uniform, t, none).item() == 0.0);
  const Tensor logits = Tensor::from_vector({2}, {0.0, 2.0});
  const std::vector<double> bt = {1, 0};
  const std::vector<double> bw = {1, 1};
  const double expected = 0.5 * (std::log(2.0) + std::log1p(std::exp(2.0)));
  CHECK(bce_with_logits(logits, bt, bw).item() == doctest::Approx(expected));
}

TEST_CASE("op registry lists each op once") {
  const auto ops = differentiable_ops();
  std::vector<std::string_view> sorted(ops.begin(), ops.end());
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(std::find(sorted.begin(), sorted.end(), "masked_softmax") != sorted.end());
}
