#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sdr/estimators.hpp"
#include "sdr/theory.hpp"

using namespace sdr;

namespace {

TheoryInputs view(const oracle::RandomWorld& w) { return TheoryInputs{w.p, w.p_hat, w.e, w.e_hat}; }

std::vector<double> delta_of(const oracle::RandomWorld& w) {
  std::vector<double> d;
  for (std::size_t k = 0; k < w.e.size(); ++k) d.push_back(w.e[k] - w.e_hat[k]);
  return d;
}

// Formula rewritten from the statement with O(n^2) leave-one-out sums.
double tail_oracle(const std::vector<double>& p, const std::vector<double>& ph,
                   const std::vector<double>& d, double eta) {
  const std::size_t n = p.size();
  double dmin = d[0], dmax = d[0];
  for (double x : d) {
    dmin = std::min(dmin, x);
    dmax = std::max(dmax, x);
  }
  const double L = std::log(4.0 / eta);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0, q = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != k) {
        s += p[j] / ph[j];
        q += 1.0 / (ph[j] * ph[j]);
      }
    const double eps = std::sqrt(L / 2.0 * q);
    double br = 1.0 + ph[k] * (s - eps);
    if (br <= 0.0) br = 1.0;
    total += ((dmax - d[k]) * (dmax - d[k]) + (d[k] - dmin) * (d[k] - dmin)) / (br * br);
  }
  return std::sqrt(0.5 * L * total);
}

double sdr_bias_oracle(const std::vector<double>& p, const std::vector<double>& ph,
                       const std::vector<double>& d) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    num += d[k] * p[k] / ph[k];
    den += p[k] / ph[k];
  }
  double s = 0.0;
  for (double x : d) s += x - num / den;
  return std::fabs(s / static_cast<double>(d.size()));
}

double sdr_var_oracle(const std::vector<double>& p, const std::vector<double>& ph,
                      const std::vector<double>& d) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    num += d[k] * p[k] / ph[k];
    den += p[k] / ph[k];
  }
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = d[k] - num / den;
    s += p[k] * (1 - p[k]) * h * h / (ph[k] * ph[k]);
  }
  return s / (den * den);
}

}  // namespace

TEST_SUITE("theory") {

TEST_CASE("exact expectation: two-term enumeration by hand") {
  const std::vector<double> p{0.4}, ph{0.5}, e{2.0}, eh{0.0};
  CHECK(exact_expectation(TheoryInputs{p, ph, e, eh}, EstimatorKind::Ips) == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("exact expectation: ips is unbiased at the true propensities") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto w = oracle::random_world(10, s);
    w.p_hat = w.p;
    CHECK(exact_expectation(view(w), EstimatorKind::Ips) == doctest::Approx(ideal_loss(w.e)).epsilon(1e-13));
  }
}

TEST_CASE("exact moments match the brute-force oracle for every kernel") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto w = oracle::random_world(9, 100 + s);
    const auto in = view(w);
    auto chk = [&](EstimatorKind kind, const oracle::EstimatorFn& f) {
      const auto lib = exact_moments(in, kind);
      const auto ref = oracle::enumerate_two_pass(w.p, f);
      CHECK(lib.mean == doctest::Approx(ref.mean).epsilon(1e-12));
      CHECK(lib.variance == doctest::Approx(ref.variance).epsilon(1e-11));
    };
    chk(EstimatorKind::Ips, [&](const std::vector<int>& o) { return oracle::ips(o, w.p_hat, w.e); });
    chk(EstimatorKind::Dr, [&](const std::vector<int>& o) { return oracle::dr(o, w.p_hat, w.e, w.e_hat); });
    chk(EstimatorKind::Sdr, [&](const std::vector<int>& o) { return oracle::snips(o, w.p_hat, w.e, w.e_hat); });
    chk(EstimatorKind::SdrConstrained,
        [&](const std::vector<int>& o) { return oracle::sdr_constrained(o, w.p_hat, w.e, w.e_hat); });
  }
}

TEST_CASE("exact enumeration is capped") {
  const auto w = oracle::random_world(kMaxEnumerationPairs + 1, 1);
  CHECK_THROWS_AS(exact_moments(view(w), EstimatorKind::Ips), std::length_error);
}

TEST_CASE("ips/dr bias and variance are exact on a 9-pair world") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto w = oracle::random_world(9, 200 + s);
    const auto d = delta_of(w);
    const double ideal = oracle::mean(w.e);
    const auto ips = oracle::enumerate_two_pass(w.p, [&](const std::vector<int>& o) { return oracle::ips(o, w.p_hat, w.e); });
    const auto dr =
        oracle::enumerate_two_pass(w.p, [&](const std::vector<int>& o) { return oracle::dr(o, w.p_hat, w.e, w.e_hat); });
    CHECK(std::fabs(ips_dr_bias(w.p, w.p_hat, w.e) - std::fabs(ips.mean - ideal)) <= 1e-12);
    CHECK(std::fabs(ips_dr_bias(w.p, w.p_hat, d) - std::fabs(dr.mean - ideal)) <= 1e-12);
    CHECK(std::fabs(ips_dr_variance(w.p, w.p_hat, w.e) - ips.variance) <= 1e-12);
    CHECK(std::fabs(ips_dr_variance(w.p, w.p_hat, d) - dr.variance) <= 1e-12);
  }
}

TEST_CASE("ips/dr formulas: degenerate cases and blow-up") {
  auto w = oracle::random_world(8, 3);
  CHECK(ips_dr_bias(w.p, w.p, w.e) == doctest::Approx(0.0).scale(1e-15));
  const std::vector<double> zero(8, 0.0);
  CHECK(ips_dr_bias(w.p, w.p_hat, zero) == 0.0);
  CHECK(ips_dr_tail_bound(w.p_hat, zero, 0.1) == 0.0);
  const std::vector<double> ones(8, 1.0);
  CHECK(ips_dr_variance(ones, w.p_hat, w.e) == 0.0);
  double prev_var = 0.0, prev_tail = 0.0, prev_bias = 0.0;
  for (double ph : {1e-2, 1e-4, 1e-6}) {
    w.p_hat[0] = ph;
    const double v = ips_dr_variance(w.p, w.p_hat, w.e);
    const double t = ips_dr_tail_bound(w.p_hat, w.e, 0.1);
    const double b = ips_dr_bias(w.p, w.p_hat, w.e);
    CHECK(v > prev_var);
    CHECK(t > prev_tail);
    CHECK(b > prev_bias);
    prev_var = v;
    prev_tail = t;
    prev_bias = b;
  }
  CHECK(prev_var > 1e6);
}

TEST_CASE("sdr dominant terms: independent rewrite and degenerate cases") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto w = oracle::random_world(14, 300 + s);
    const auto d = delta_of(w);
    CHECK(sdr_bias_dominant(w.p, w.p_hat, d) == doctest::Approx(sdr_bias_oracle(w.p, w.p_hat, d)).epsilon(1e-12).scale(1e-14));
    CHECK(sdr_variance_dominant(w.p, w.p_hat, d) == doctest::Approx(sdr_var_oracle(w.p, w.p_hat, d)).epsilon(1e-12));
    CHECK(sdr_tail_bound(w.p, w.p_hat, d, 0.1).value == doctest::Approx(tail_oracle(w.p, w.p_hat, d, 0.1)).epsilon(1e-12));
  }
  const auto w = oracle::random_world(10, 9);
  const std::vector<double> c(10, 0.7), ones(10, 1.0);
  CHECK(std::fabs(sdr_bias_dominant(w.p, w.p_hat, c)) <= 1e-14);
  CHECK(std::fabs(sdr_variance_dominant(w.p, w.p_hat, c)) <= 1e-14);
  CHECK(sdr_tail_bound(w.p, w.p_hat, c, 0.1).value == 0.0);
  CHECK(std::fabs(sdr_bias_dominant(w.p, w.p, delta_of(w))) <= 1e-14);
  CHECK(sdr_variance_dominant(ones, w.p_hat, delta_of(w)) == 0.0);
}

TEST_CASE("sdr tail bound shrinks with |D| and flags clamped brackets") {
  double prev = 1e300;
  for (std::size_t n : {16, 64, 256}) {
    const auto w = oracle::random_world(n, 1);
    const double b = sdr_tail_bound(w.p, w.p_hat, delta_of(w), 0.1).value;
    CHECK(b < prev);
    prev = b;
  }
  // Two pairs, true propensities far below the estimates: the bracket goes nonpositive.
  const std::vector<double> p{0.05, 0.05}, ph{0.5, 0.5}, d{0.0, 1.0};
  const auto tb = sdr_tail_bound(p, ph, d, 0.1);
  CHECK(tb.clamped_pairs > 0);
  CHECK(tb.min_bracket <= 0.0);
  CHECK(std::isfinite(tb.value));
}

TEST_CASE("sdr stays finite as p_hat collapses") {
  auto w = oracle::random_world(12, 4);
  for (double ph : {1e-2, 1e-6, 1e-12}) {
    w.p_hat[0] = ph;
    const auto d = delta_of(w);
    double dmax = 0.0, lo = d[0], hi = d[0];
    for (double x : d) {
      dmax = std::max(dmax, std::fabs(x));
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    CHECK(sdr_bias_dominant(w.p, w.p_hat, d) <= dmax);
    CHECK(std::isfinite(sdr_variance_dominant(w.p, w.p_hat, d)));
    CHECK(std::isfinite(sdr_tail_bound(w.p, w.p_hat, d, 0.1).value));
  }
}

TEST_CASE("sdr at the true propensities: bias times |D| stays bounded") {
  // Plain self-normalized estimator, p_hat = p. Enumeration for 8 and 16;
  // 24 is past the cap, so the oracle there is a long seeded MC run.
  std::vector<double> scaled;
  for (std::size_t n : {8, 16}) {
    auto w = oracle::random_world(n, 55);
    w.p_hat = w.p;
    const double ex = oracle::enumerate(w.p, [&](const std::vector<int>& o) {
                        return oracle::snips(o, w.p_hat, w.e, w.e_hat);
                      }).mean;
    scaled.push_back(std::fabs(ex - oracle::mean(w.e)) * static_cast<double>(n));
  }
  {
    auto w = oracle::random_world(24, 55);
    w.p_hat = w.p;
    Rng rng(24, 1);
    std::vector<int> o(24);
    double s = 0.0;
    const std::size_t reps = 2'000'000;
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t k = 0; k < 24; ++k) o[k] = rng.bernoulli(w.p[k]);
      s += oracle::snips(o, w.p_hat, w.e, w.e_hat);
    }
    scaled.push_back(std::fabs(s / reps - oracle::mean(w.e)) * 24.0);
  }
  CHECK(scaled[1] <= 2.0 * scaled[0] + 1e-3);
  CHECK(scaled[2] <= 2.0 * scaled[0] + 0.02);
}

TEST_CASE("monte carlo report: agreement with enumeration, determinism, worker independence") {
  const auto w = oracle::random_world(9, 17);
  MonteCarloOptions opt;
  opt.replicates = 1'000'000;
  opt.seed = 5;
  opt.workers = 1;
  const auto rep = monte_carlo_report(view(w), EstimatorKind::Sdr, opt);
  CHECK(rep.mode == "exact-enumeration");
  const double ref = oracle::enumerate(w.p, [&](const std::vector<int>& o) {
                       return oracle::sdr_constrained(o, w.p_hat, w.e, w.e_hat);
                     }).mean;
  CHECK(rep.expectation == doctest::Approx(ref).epsilon(1e-12));
  CHECK(std::fabs(rep.mc_mean - ref) <= 3.0 * rep.mc_bias_standard_error);
  CHECK(rep.tail_exceedance_rate >= 0.0);
  CHECK(rep.tail_exceedance_rate <= 1.0);

  MonteCarloOptions small = opt;
  small.replicates = 20000;
  const auto a = monte_carlo_report(view(w), EstimatorKind::Ips, small);
  const auto b = monte_carlo_report(view(w), EstimatorKind::Ips, small);
  CHECK(to_json(a) == to_json(b));
  small.workers = 3;
  const auto c = monte_carlo_report(view(w), EstimatorKind::Ips, small);
  CHECK(a.mc_mean == c.mc_mean);
  CHECK(a.mc_variance == c.mc_variance);
  CHECK(a.tail_exceedances == c.tail_exceedances);

  // IPS at p_hat = p: MC bias within 3 standard errors of 0.
  auto t = w;
  t.p_hat = t.p;
  const auto u = monte_carlo_report(view(t), EstimatorKind::Ips, small);
  CHECK(u.mc_bias <= 3.0 * u.mc_bias_standard_error);

  small.replicates = 10;
  CHECK_THROWS_AS(monte_carlo_report(view(w), EstimatorKind::Ips, small), std::invalid_argument);
}

TEST_CASE("monte carlo mode above the enumeration cap") {
  const auto w = oracle::random_world(30, 2);
  MonteCarloOptions opt;
  opt.replicates = 5000;
  opt.reference_replicates = 200000;
  const auto rep = monte_carlo_report(view(w), EstimatorKind::Dr, opt);
  CHECK(rep.mode == "monte-carlo");
  CHECK(rep.tail_exceedance_rate <= 0.1);
}

TEST_CASE("generalization bound: degenerate and symmetric hypothesis lists") {
  const auto w = oracle::random_world(12, 8);
  const std::vector<std::uint8_t> o{1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1};
  const std::vector<Hypothesis> one{{w.e, w.e_hat}};
  const auto b1 = generalization_bound(one, w.p, w.p_hat, o, 0.1);
  const auto d = delta_of(w);
  const double sdr = estimate_sdr_constrained(EstimatorInputs{o, w.p_hat, w.e, w.e_hat}).value;
  CHECK(b1[0] == doctest::Approx(sdr + sdr_bias_dominant(w.p, w.p_hat, d) +
                                 sdr_tail_bound(w.p, w.p_hat, d, 0.1).value)
                     .epsilon(1e-13));

  const std::vector<Hypothesis> two{{w.e, w.e_hat}, {w.e, w.e_hat}};
  const auto b2 = generalization_bound(two, w.p, w.p_hat, o, 0.1);
  CHECK(b2[0] == b2[1]);
  CHECK(b2[0] > b1[0]);  // log(4|H|/eta) grows with |H|
  CHECK_THROWS_AS(generalization_bound({}, w.p, w.p_hat, o, 0.1), std::invalid_argument);
}

TEST_CASE("generalization coverage on a 12-pair world") {
  TheoryWorldConfig c;
  c.seed = 3;
  const auto world = make_theory_world(c);
  std::vector<Hypothesis> hyps;
  for (std::uint64_t h = 0; h < 4; ++h) {
    TheoryWorldConfig hc = c;
    hc.seed = 100 + h;
    const auto hw = make_theory_world(hc);
    hyps.push_back({hw.e, hw.e_hat});
  }
  const double cov = generalization_coverage(hyps, world.p, world.p_hat, 0.1, 10000, 7);
  CHECK(cov >= 0.9);
  CHECK(cov <= 1.0);
}

TEST_CASE("theory world construction") {
  TheoryWorldConfig c;
  c.floor = 1e-6;
  const auto w = make_theory_world(c);
  REQUIRE(w.p.size() == 12);
  for (std::size_t k = 0; k < 12; ++k) {
    CHECK(w.p[k] >= c.p_min);
    CHECK(w.p[k] <= c.p_max);
    CHECK(w.p_hat[k] > 0.0);
    if (k % c.misspecified_every == 0) CHECK(w.p_hat[k] == 1e-6);
  }
  const auto again = make_theory_world(c);
  CHECK(w.p == again.p);
  CHECK(w.e_hat == again.e_hat);
}

}  // TEST_SUITE
