#include <cmath>
#include <random>

#include "bam/metrics.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bam;

using oracles::brute_force_eer;

TEST_CASE("eer hand cases") {
  const std::vector<std::uint8_t> l = {0, 0, 1, 1};
  CHECK(compute_eer(std::vector<double>{0.1, 0.2, 0.8, 0.9}, l).eer == 0.0);
  CHECK(compute_eer(std::vector<double>{0.9, 0.8, 0.2, 0.1}, l).eer == 1.0);
  CHECK(compute_eer(std::vector<double>{0.5, 0.5, 0.5, 0.5}, l).eer == 0.5);
  CHECK(compute_eer(std::vector<double>{0.2, 0.4, 0.6, 0.8}, std::vector<std::uint8_t>{0, 1, 0, 1})
            .eer == 0.5);
  CHECK_THROWS(compute_eer(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}));
  CHECK_THROWS(compute_eer(std::vector<double>{0.1, NAN}, std::vector<std::uint8_t>{0, 1}));
}

TEST_CASE("eer matches brute force on random sets") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    const bool coarse = trial % 3 == 0;  // forces ties
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = rng() % 2;
      s[i] = coarse ? static_cast<double>(rng() % 5) : std::normal_distribution<double>(
                                                             l[i] ? 0.7 : 0.0, 1.0)(rng);
    }
    l[0] = 0;
    l[1] = 1;
    const double fast = compute_eer(s, l).eer;
    REQUIRE(std::abs(fast - brute_force_eer(s, l)) <= 1e-12);
  }
}

TEST_CASE("eer is invariant under monotone transforms") {
  std::mt19937_64 rng(8);
  std::vector<double> s(200), t(200);
  std::vector<std::uint8_t> l(200);
  for (std::size_t i = 0; i < s.size(); ++i) {
    l[i] = i % 3 == 0;
    s[i] = std::normal_distribution<double>(l[i] ? 1.0 : 0.0, 1.0)(rng);
    t[i] = 1.0 / (1.0 + std::exp(-3.0 * s[i])) + 2.0;
  }
  CHECK(compute_eer(s, l).eer == compute_eer(t, l).eer);
}

TEST_CASE("precision recall f1") {
  const std::vector<double> s = {0.9, 0.8, 0.3, 0.6, 0.1};
  const std::vector<std::uint8_t> l = {1, 1, 1, 0, 0};
  const PrfResult r = compute_prf(s, l, 0.5);
  CHECK(r.tp == 2);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.tn == 1);
  CHECK(r.precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  const PrfResult r2 = compute_prf(std::vector<double>{0.9, 0.8, 0.7, 0.1},
                                   std::vector<std::uint8_t>{1, 1, 0, 0}, 0.5);
  CHECK(r2.precision == doctest::Approx(2.0 / 3.0));
  CHECK(r2.recall == 1.0);
  CHECK(r2.f1 == doctest::Approx(0.8));
  const PrfResult none = compute_prf(std::vector<double>{0.1}, std::vector<std::uint8_t>{0}, 0.5);
  CHECK(none.f1 == 0.0);
  CHECK(none.precision == 0.0);
}

TEST_CASE("perfect scores give eer 0 and f1 1") {
  const std::vector<std::uint8_t> l = {0, 1, 1, 0, 1};
  std::vector<double> s(l.begin(), l.end());
  CHECK(compute_eer(s, l).eer == 0.0);
  CHECK(compute_prf(s, l, 0.5).f1 == 1.0);
}

TEST_CASE("pooling order does not change the eer") {
  ScoredFrames a, b;
  const std::vector<double> s1 = {0.2, 0.7, 0.4}, s2 = {0.9, 0.1};
  const std::vector<std::uint8_t> l1 = {0, 1, 0}, l2 = {1, 0};
  a.append(s1, l1, "x");
  a.append(s2, l2, "y");
  b.append(s2, l2, "y");
  b.append(s1, l1, "x");
  CHECK(compute_eer(a).eer == compute_eer(b).eer);
  CHECK(compute_eer_per_utterance(a) == compute_eer_per_utterance(b));
}

TEST_CASE("single-class report has nan eer but real f1") {
  ScoredFrames f;
  const std::vector<double> s = {0.1, 0.2};
  const std::vector<std::uint8_t> l = {0, 0};
  f.append(s, l);
  const EvalReport r = make_report(f, "boundary", 160, 0.5);
  CHECK(std::isnan(r.eer));
  CHECK(report_csv_row(r) == "160,boundary,nan,0.000000,0.000000,0.000000,0.500000,2");
  CHECK(report_csv_header() == "resolution_ms,task,eer,f1,precision,recall,threshold,frames");
}
