#include <random>

#include "bam/attention.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bam;

namespace {

void make_identity(Linear& l) {
  const std::size_t d = l.in_features();
  auto w = l.weight.mutable_data();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) w[i * d + j] = i == j ? 1.0 : 0.0;
  for (auto& b : l.bias.mutable_data()) b = 0.0;
}

Tensor identity_mask(std::size_t t) {
  std::vector<double> v(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) v[i * t + i] = 1.0;
  return Tensor::from_vector({t, t}, v);
}

}  // namespace

TEST_CASE("pairwise scores are elementwise products") {
  const Tensor f = Tensor::from_vector({1, 2, 2}, {1, 2, 3, 4});
  const Tensor s = pairwise_scores(f);
  REQUIRE(s.shape() == Shape{1, 2, 2, 2});
  CHECK(s.to_vector() == std::vector<double>{1, 4, 3, 8, 3, 8, 9, 16});
  CHECK_THROWS_AS(pairwise_scores(Tensor::zeros({2, 2})), ShapeError);
}

TEST_CASE("zero attention weights give a zero map and uniform weights") {
  Rng rng(1);
  std::mt19937_64 data(2);
  Linear phi(3, 3, rng);
  const Tensor w_a = Tensor::zeros({3, 2});
  const Tensor f = testing::random_tensor({1, 4, 3}, data, -1, 1, false);
  const Tensor a = attention_map(pairwise_scores(f), phi, w_a);
  REQUIRE(a.shape() == Shape{1, 4, 4, 2});
  for (double v : a.data()) CHECK(v == 0.0);
  const Aggregation agg = aggregate(a, f, Tensor());
  for (double v : agg.weights.data()) CHECK(v == doctest::Approx(0.25));
  CHECK(agg.features.shape() == Shape{1, 2, 4, 3});
}

TEST_CASE("identity mask keeps each frame to itself") {
  std::mt19937_64 data(3);
  const Tensor a = testing::random_tensor({2, 5, 5, 1}, data, -3, 3, false);
  const Tensor f = testing::random_tensor({2, 5, 4}, data, -1, 1, false);
  for (MaskMode mode : {MaskMode::kExclude, MaskMode::kMultiplyPostSoftmaxRenorm}) {
    const Aggregation agg = aggregate(a, f, identity_mask(5), mode);
    CHECK(testing::max_abs_diff(agg.features.data(), f.data()) <= 1e-15);
  }
}

TEST_CASE("all-ones mask equals unmasked attention") {
  std::mt19937_64 data(4);
  const Tensor a = testing::random_tensor({1, 6, 6, 2}, data, -3, 3, false);
  const Tensor f = testing::random_tensor({1, 6, 3}, data, -1, 1, false);
  const Tensor ones = Tensor::full({6, 6}, 1.0);
  const Aggregation plain = aggregate(a, f, Tensor());
  for (MaskMode mode : {MaskMode::kExclude, MaskMode::kMultiplyPostSoftmaxRenorm,
                        MaskMode::kMultiplyPreSoftmax}) {
    const Aggregation masked = aggregate(a, f, ones, mode);
    CHECK(testing::max_abs_diff(masked.weights.data(), plain.weights.data()) <= 1e-15);
  }
}

TEST_CASE("renormalized and excluded masking agree") {
  std::mt19937_64 data(5);
  const Tensor a = testing::random_tensor({2, 5, 5, 1}, data, -3, 3, false);
  const Tensor f = testing::random_tensor({2, 5, 3}, data, -1, 1, false);
  std::vector<double> m(50, 1.0);
  for (std::size_t i : {1u, 7u, 13u, 22u, 30u, 41u}) m[i] = 0.0;
  const Tensor mask = Tensor::from_vector({2, 5, 5}, m);
  const auto ex = aggregate(a, f, mask, MaskMode::kExclude);
  const auto rn = aggregate(a, f, mask, MaskMode::kMultiplyPostSoftmaxRenorm);
  CHECK(testing::max_abs_diff(ex.weights.data(), rn.weights.data()) <= 1e-12);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (m[b * 25 + i * 5 + j] == 0.0) CHECK(ex.weights.at({b, i, j, 0}) == 0.0);
}

TEST_CASE("pre-softmax multiplication keeps masked keys in the support") {
  const Tensor a = Tensor::zeros({1, 2, 2, 1});
  const Tensor f = Tensor::from_vector({1, 2, 1}, {1, 3});
  const auto pre = aggregate(a, f, identity_mask(2), MaskMode::kMultiplyPreSoftmax);
  CHECK(pre.weights.at({0, 0, 1, 0}) == doctest::Approx(0.5));
}

TEST_CASE("mask shape mismatch is rejected") {
  const Tensor a = Tensor::zeros({1, 3, 3, 1});
  const Tensor f = Tensor::zeros({1, 3, 2});
  CHECK_THROWS_AS(aggregate(a, f, Tensor::full({2, 2}, 1.0)), ShapeError);
  CHECK_THROWS(mask_mode_from_string("bogus"));
  CHECK(mask_mode_from_string(to_string(MaskMode::kMultiplyPreSoftmax)) ==
        MaskMode::kMultiplyPreSoftmax);
}

TEST_CASE("frame attention block with identity maps gives selu of twice the frames") {
  Rng rng(6);
  std::mt19937_64 data(7);
  FrameAttentionBlock fab(3, 1, rng);
  make_identity(fab.phi_a);
  make_identity(fab.phi_g);
  fab.bn.eps = 0.0;
  const Tensor f = testing::random_tensor({1, 4, 3}, data, -1, 1, false);
  const FabOutput out = fab(f, identity_mask(4), false);
  const Tensor expected = selu(scale(f, 2.0));
  CHECK(testing::max_abs_diff(out.output.data(), expected.data()) <= 1e-12);
}

TEST_CASE("frame attention is permutation equivariant") {
  Rng rng(8);
  std::mt19937_64 data(9);
  FrameAttentionBlock fab(4, 2, rng);
  const Tensor f = testing::random_tensor({1, 5, 4}, data, -1, 1, false);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<double> pv;
  for (std::size_t p : perm)
    for (std::size_t d = 0; d < 4; ++d) pv.push_back(f.at({0, p, d}));
  const Tensor g = Tensor::from_vector({1, 5, 4}, pv);
  const Tensor y = fab(f, Tensor(), false).output;
  const Tensor z = fab(g, Tensor(), false).output;
  double worst = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t d = 0; d < 4; ++d)
      worst = std::max(worst, std::abs(z.at({0, i, d}) - y.at({0, perm[i], d})));
  CHECK(worst <= 1e-12);
}

TEST_CASE("frame attention output shapes") {
  Rng rng(10);
  FrameAttentionBlock fab(6, 3, rng);
  const FabOutput out = fab(Tensor::zeros({2, 7, 6}), Tensor(), true);
  CHECK(out.aggregated.shape() == Shape{2, 3, 7, 6});
  CHECK(out.weights.shape() == Shape{2, 7, 7, 3});
  CHECK(out.output.shape() == Shape{2, 7, 6});
  CHECK(fab.heads() == 3);
}
