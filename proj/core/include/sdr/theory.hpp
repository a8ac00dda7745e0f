#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdr/estimators.hpp"

namespace sdr {

// Deviation: formulas are written in delta = e - e_hat and assume the
// stabilization constraint holds. Error: the constraint is not assumed and
// delta is replaced by e throughout (the inexact-constraint variants).
enum class TheoryMode { Deviation, Error };

std::string_view theory_mode_name(TheoryMode mode);

// Full-information oracle setting over D: true propensities, learned
// propensities, prediction errors and imputed errors for every pair.
struct TheoryInputs {
  std::span<const double> p;
  std::span<const double> p_hat;
  std::span<const double> e;
  std::span<const double> e_hat;

  std::size_t size() const { return p.size(); }
  void validate() const;
};

inline constexpr std::size_t kMaxEnumerationPairs = 20;

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

// Exact moments of an estimator under independent o ~ Bernoulli(p) by
// summing over all 2^|D| indicator vectors. Throws std::length_error when
// |D| exceeds kMaxEnumerationPairs.
Moments exact_moments(const TheoryInputs& in, EstimatorKind kind);
double exact_expectation(const TheoryInputs& in, EstimatorKind kind);

// The estimator SDR formulas refer to in a given mode.
EstimatorKind sdr_kind(TheoryMode mode);

// delta = e - e_hat (Deviation) or e (Error).
std::vector<double> deviations(const TheoryInputs& in, TheoryMode mode);

// | |D|^-1 sum (delta - sum(delta p / p_hat) / sum(p / p_hat)) |
double sdr_bias_dominant(std::span<const double> p, std::span<const double> p_hat,
                         std::span<const double> delta);
// sum p(1-p) h^2 / p_hat^2 / (sum p / p_hat)^2 with h = delta - weighted mean.
double sdr_variance_dominant(std::span<const double> p, std::span<const double> p_hat,
                             std::span<const double> delta);

// Exact bias |D|^-1 |sum (p_hat - p) x / p_hat| with x = e for IPS and
// x = delta for DR.
double ips_dr_bias(std::span<const double> p, std::span<const double> p_hat,
                   std::span<const double> x);
// Exact variance |D|^-2 sum p (1 - p) x^2 / p_hat^2.
double ips_dr_variance(std::span<const double> p, std::span<const double> p_hat,
                       std::span<const double> x);

struct TailBound {
  double value = 0.0;
  // Pairs whose bracket 1 + p_hat (S_-k - eps') came out nonpositive; their
  // squared denominator is floored at 1.
  std::size_t clamped_pairs = 0;
  double min_bracket = 0.0;
};

// McDiarmid/Hoeffding tail bound on |SDR - E[SDR]| at confidence 1 - eta.
TailBound sdr_tail_bound(std::span<const double> p, std::span<const double> p_hat,
                         std::span<const double> delta, double eta);
// sqrt(log(2/eta) / (2 |D|^2) sum (x / p_hat)^2).
double ips_dr_tail_bound(std::span<const double> p_hat, std::span<const double> x, double eta);

// Sum inside the SDR tail bound's square root (without the log factor).
double sdr_tail_sum(std::span<const double> p, std::span<const double> p_hat,
                    std::span<const double> delta, double eta, TailBound* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Generalization bound over a finite hypothesis list.

struct Hypothesis {
  std::vector<double> e;      // prediction errors over D
  std::vector<double> e_hat;  // imputed errors over D
};

struct GeneralizationTerms {
  std::vector<double> bias_term;  // per hypothesis
  double variance_term = 0.0;     // shared, driven by the maximizing hypothesis
  std::size_t maximizing_hypothesis = 0;
};

GeneralizationTerms generalization_terms(const std::vector<Hypothesis>& hypotheses,
                                         std::span<const double> p,
                                         std::span<const double> p_hat, double eta,
                                         TheoryMode mode = TheoryMode::Deviation);

// Per-hypothesis upper bound on the true risk for one realized indicator
// vector: SDR value + bias term + variance term.
std::vector<double> generalization_bound(const std::vector<Hypothesis>& hypotheses,
                                         std::span<const double> p,
                                         std::span<const double> p_hat,
                                         std::span<const std::uint8_t> o, double eta,
                                         TheoryMode mode = TheoryMode::Deviation);

// Fraction of `replicates` indicator draws on which every hypothesis' true
// risk is at or below its bound.
double generalization_coverage(const std::vector<Hypothesis>& hypotheses,
                               std::span<const double> p, std::span<const double> p_hat,
                               double eta, std::size_t replicates, std::uint64_t seed,
                               TheoryMode mode = TheoryMode::Deviation, unsigned workers = 0);

// ---------------------------------------------------------------------------
// Seeded oracle worlds for the theory sweep.

struct TheoryWorldConfig {
  std::size_t size = 12;
  std::uint64_t seed = 1;
  // Every `misspecified_every`-th pair gets p_hat = floor; the rest carry a
  // multiplicative error in [1 - p_hat_noise, 1 + p_hat_noise].
  double floor = 1e-1;
  std::size_t misspecified_every = 3;
  double p_hat_noise = 0.3;
  double p_min = 0.2;
  double p_max = 0.9;
  double imputation_noise = 0.3;
};

struct TheoryWorld {
  std::vector<double> p, p_hat, e, e_hat;
  TheoryInputs inputs() const { return TheoryInputs{p, p_hat, e, e_hat}; }
};

// p ~ U[p_min, p_max], e ~ U[0.05, 1.5], e_hat = e + N(0, imputation_noise^2).
TheoryWorld make_theory_world(const TheoryWorldConfig& config);

// ---------------------------------------------------------------------------
// Monte Carlo reports.

struct TheoryReport {
  std::string estimator;
  std::string mode;         // "exact-enumeration" or "monte-carlo"
  std::string theory_mode;  // "deviation" or "error"
  std::size_t sample_size = 0;
  std::size_t replicates = 0;
  double eta = 0.1;
  std::uint64_t seed = 0;

  double ideal_loss = 0.0;
  double expectation = 0.0;  // exact when mode is exact-enumeration
  double empirical_bias = 0.0;
  double empirical_variance = 0.0;
  double mc_mean = 0.0;
  double mc_bias = 0.0;
  double mc_bias_standard_error = 0.0;
  double mc_variance = 0.0;

  double formula_bias_dominant = 0.0;
  double formula_variance_dominant = 0.0;
  double tail_bound_value = 0.0;
  std::size_t tail_exceedances = 0;
  double tail_exceedance_rate = 0.0;
  std::size_t bracket_clamped_pairs = 0;
  double min_bracket = 0.0;
};

struct MonteCarloOptions {
  std::size_t replicates = 100000;
  double eta = 0.1;
  std::uint64_t seed = 1;
  TheoryMode mode = TheoryMode::Deviation;
  // Replicates for the E[est] reference when |D| is too large to enumerate.
  std::size_t reference_replicates = 10'000'000;
  // Zero means "use SDR_WORKERS or 1".
  unsigned workers = 0;
};

// Supported estimators: ips, dr, sdr (sdr follows options.mode).
TheoryReport monte_carlo_report(const TheoryInputs& in, EstimatorKind kind,
                                const MonteCarloOptions& options);

// Worker count from the SDR_WORKERS environment variable (default 1).
unsigned default_workers();

std::string to_json(const TheoryReport& report);

}  // namespace sdr
