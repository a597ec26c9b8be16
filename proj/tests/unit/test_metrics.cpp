#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hetrisk/error.hpp"
#include "hetrisk/glm.hpp"
#include "hetrisk/metrics.hpp"
#include "oracles/oracles.hpp"

using namespace hetrisk;

namespace {

struct Sample {
  std::vector<double> p;
  std::vector<int> y;
};

/// Predictions on a coarse grid so ties are common.
Sample random_sample(std::mt19937_64& rng, std::size_t n, bool coarse) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    double p = u(rng);
    if (coarse) p = std::round(p * 8.0) / 8.0;
    s.p.push_back(p);
    s.y.push_back(u(rng) < 0.2 + 0.6 * p ? 1 : 0);
  }
  s.y[0] = 1;
  s.y[1] = 0;
  return s;
}

}  // namespace

TEST_CASE("auc examples") {
  const std::vector<double> p = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y = {0, 0, 1, 1};
  CHECK(auc(p, y) == 0.75);
  const std::vector<double> flat(6, 0.3);
  const std::vector<int> y6 = {0, 1, 0, 1, 1, 0};
  CHECK(auc(flat, y6) == 0.5);
  CHECK_THROWS_AS(auc(p, std::vector<int>{1, 1, 1, 1}), DataError);
  CHECK_THROWS_AS(auc(p, std::vector<int>{0, 1, 2, 1}), DataError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 1.5}, std::vector<int>{0, 1}), DataError);
}

TEST_CASE("rank AUC equals the pairwise oracle exactly") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_sample(rng, 2 + rng() % 499, trial % 2 == 0);
    CHECK(auc(s.p, s.y) == oracle::pairwise_auc(s.p, s.y));
  }
}

TEST_CASE("auc invariances") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_sample(rng, 300, trial % 2 == 1);
    const double a = auc(s.p, s.y);
    std::vector<double> t(s.p.size());
    std::transform(s.p.begin(), s.p.end(), t.begin(), [](double v) { return std::pow(v, 3.0) * 0.5; });
    CHECK(auc(t, s.y) == a);
    std::vector<double> r(s.p.size());
    std::transform(s.p.begin(), s.p.end(), r.begin(), [](double v) { return 1.0 - v; });
    CHECK(auc(r, s.y) == doctest::Approx(1.0 - a).epsilon(1e-14));
  }
}

TEST_CASE("DeLong variance matches the quadratic placement oracle") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_sample(rng, 50 + rng() % 300, trial % 2 == 0);
    const auto ci = auc_ci(s.p, s.y);
    const double ref = oracle::naive_delong_variance(s.p, s.y);
    CHECK(ci.std_error * ci.std_error == doctest::Approx(ref).epsilon(1e-10));
    CHECK(ci.lo <= ci.auc);
    CHECK(ci.auc <= ci.hi);
    CHECK(ci.lo >= 0.0);
    CHECK(ci.hi <= 1.0);
  }
}

TEST_CASE("perfect separation clips and degenerate variance collapses") {
  const std::vector<double> p = {0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  const auto ci = auc_ci(p, y);
  CHECK(ci.auc == 1.0);
  CHECK(ci.hi == 1.0);
  CHECK(ci.lo == 1.0);
  CHECK(ci.warning.has_value());
  CHECK_THROWS_AS(auc_ci(std::vector<double>{0.1, 0.2, 0.3}, std::vector<int>{0, 1, 1}), DataError);
}

TEST_CASE("DeLong interval covers 0.5 under label permutation about 95% of the time") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 400;
  std::vector<double> p(n);
  for (auto& v : p) v = u(rng);
  std::vector<int> y(n, 0);
  std::fill(y.begin(), y.begin() + 120, 1);
  int covered = 0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    std::shuffle(y.begin(), y.end(), rng);
    const auto ci = auc_ci(p, y);
    covered += ci.lo <= 0.5 && 0.5 <= ci.hi ? 1 : 0;
  }
  const double rate = static_cast<double>(covered) / reps;
  CHECK(rate >= 0.93);
  CHECK(rate <= 0.97);
}

TEST_CASE("cil examples and identity") {
  const std::vector<double> half(10, 0.5);
  const std::vector<int> y = {1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  CHECK(cil(half, y).value == 0.0);

  // 1000 records, mean prediction 0.291 and 320 events
  std::vector<double> p(1000, 0.291);
  std::vector<int> o(1000, 0);
  std::fill(o.begin(), o.begin() + 320, 1);
  const auto c = cil(p, o);
  CHECK(c.value == doctest::Approx(-0.029).epsilon(1e-12));
  CHECK(std::round(c.value * 1000.0) / 10.0 == -2.9);
  CHECK(c.lo < c.value);
  CHECK(c.hi > c.value);

  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto s = random_sample(rng, 200, false);
    const double mp = std::accumulate(s.p.begin(), s.p.end(), 0.0) / 200.0;
    const double prev = std::accumulate(s.y.begin(), s.y.end(), 0.0) / 200.0;
    CHECK(cil(s.p, s.y).value == doctest::Approx(mp - prev).epsilon(1e-12));
    std::vector<double> d(200);
    for (int i = 0; i < 200; ++i) d[i] = s.p[i] - s.y[i];
    double m = std::accumulate(d.begin(), d.end(), 0.0) / 200.0;
    double ss = 0.0;
    for (double v : d) ss += (v - m) * (v - m);
    const double half_width = 1.959963984540054 * std::sqrt(ss / 199.0) / std::sqrt(200.0);
    CHECK(cil(s.p, s.y).hi - cil(s.p, s.y).value == doctest::Approx(half_width).epsilon(1e-10));
  }
  CHECK_THROWS_AS(cil(std::vector<double>{0.2}, std::vector<int>{1}), DataError);
}

TEST_CASE("decile bins") {
  std::vector<double> p(23, 0.4);
  std::vector<int> y(23, 0);
  for (int i = 0; i < 23; i += 3) y[i] = 1;
  const auto bins = calibration_deciles(p, y);
  REQUIRE(bins.size() == 10);
  std::size_t total = 0;
  for (std::size_t b = 0; b < 10; ++b) {
    total += bins[b].n;
    CHECK(bins[b].n == (b < 3 ? 3u : 2u));
    CHECK(bins[b].mean_predicted == doctest::Approx(0.4));
  }
  CHECK(total == 23);
  // stable tie order: the first bin holds records 0, 1, 2
  CHECK(bins[0].observed == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(calibration_deciles(std::vector<double>(9, 0.1), std::vector<int>(9, 0)), DataError);
}

TEST_CASE("well calibrated predictions land inside their bin intervals") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0.0, 1.2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(5000);
  std::vector<int> y(5000);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = sigmoid(-1.0 + z(rng));
    y[i] = u(rng) < p[i] ? 1 : 0;
  }
  const auto bins = calibration_deciles(p, y);
  int inside = 0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    inside += bins[b].ci_low <= bins[b].mean_predicted && bins[b].mean_predicted <= bins[b].ci_high;
    if (b > 0) CHECK(bins[b].mean_predicted >= bins[b - 1].mean_predicted);
  }
  CHECK(inside >= 8);
}

TEST_CASE("wilson interval") {
  const auto w = wilson_interval(0, 20);
  CHECK(w.lo == 0.0);
  CHECK(w.hi == doctest::Approx(0.161).epsilon(0.01));
  const auto h = wilson_interval(10, 20);
  CHECK(h.lo + h.hi == doctest::Approx(1.0));
}
