#include "sdr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "sdr/numeric.hpp"
#include "sdr/parallel.hpp"
#include "sdr/rng.hpp"

namespace sdr {

namespace {

constexpr std::size_t kChunkReplicates = 4096;

void require_same_length(std::size_t n, std::initializer_list<std::size_t> others) {
  for (std::size_t m : others)
    if (m != n) throw std::invalid_argument("theory inputs must have equal lengths");
}

// Leave-one-out sums sum_{k != j} x_k, computed from compensated prefix and
// suffix sums to avoid cancelling a huge excluded term.
std::vector<double> leave_one_out(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0), suffix(n + 1, 0.0);
  CompensatedSum s;
  for (std::size_t k = 0; k < n; ++k) {
    prefix[k] = s.value();
    s.add(x[k]);
  }
  CompensatedSum t;
  for (std::size_t k = n; k-- > 0;) {
    suffix[k] = t.value();
    t.add(x[k]);
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = prefix[k] + suffix[k];
  return out;
}

EstimatorInputs inputs_for(const TheoryInputs& in, std::span<const std::uint8_t> o) {
  return EstimatorInputs{o, in.p_hat, in.e, in.e_hat, in.p};
}

struct ChunkStats {
  CompensatedSum sum;
  CompensatedSum sum_sq;
  std::size_t count = 0;
  std::size_t exceed = 0;
};

}  // namespace

std::string_view theory_mode_name(TheoryMode mode) {
  return mode == TheoryMode::Deviation ? "deviation" : "error";
}

void TheoryInputs::validate() const {
  require_same_length(p.size(), {p_hat.size(), e.size(), e_hat.size()});
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(p[k] >= 0.0 && p[k] <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
    if (!(p_hat[k] > 0.0) || !std::isfinite(p_hat[k]))
      throw std::invalid_argument("p_hat must be positive and finite");
    if (!std::isfinite(e[k]) || !std::isfinite(e_hat[k]))
      throw std::invalid_argument("errors must be finite");
  }
}

Moments exact_moments(const TheoryInputs& in, EstimatorKind kind) {
  in.validate();
  const std::size_t n = in.size();
  if (n > kMaxEnumerationPairs)
    throw std::length_error("exact enumeration is capped at |D| <= " +
                            std::to_string(kMaxEnumerationPairs) + " pairs, got " +
                            std::to_string(n));
  const std::size_t configs = std::size_t{1} << n;
  std::vector<double> value(configs), prob(configs);
  std::vector<std::uint8_t> o(n);
  for (std::size_t mask = 0; mask < configs; ++mask) {
    double pr = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      o[k] = (mask >> k) & 1u;
      pr *= o[k] ? in.p[k] : 1.0 - in.p[k];
    }
    prob[mask] = pr;
    value[mask] = pr > 0.0 ? estimate(kind, inputs_for(in, o)).value : 0.0;
  }
  CompensatedSum mean;
  for (std::size_t m = 0; m < configs; ++m) mean.add(prob[m] * value[m]);
  const double mu = mean.value();
  CompensatedSum var;
  for (std::size_t m = 0; m < configs; ++m) {
    const double d = value[m] - mu;
    var.add(prob[m] * d * d);
  }
  return {mu, var.value()};
}

double exact_expectation(const TheoryInputs& in, EstimatorKind kind) {
  return exact_moments(in, kind).mean;
}

EstimatorKind sdr_kind(TheoryMode mode) {
  return mode == TheoryMode::Deviation ? EstimatorKind::SdrConstrained : EstimatorKind::Sdr;
}

std::vector<double> deviations(const TheoryInputs& in, TheoryMode mode) {
  std::vector<double> d(in.size());
  for (std::size_t k = 0; k < in.size(); ++k)
    d[k] = mode == TheoryMode::Deviation ? in.e[k] - in.e_hat[k] : in.e[k];
  return d;
}

namespace {

// sum(delta p / p_hat) / sum(p / p_hat)
double weighted_mean(std::span<const double> p, std::span<const double> p_hat,
                     std::span<const double> delta) {
  CompensatedSum num, den;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double w = p[k] / p_hat[k];
    num.add(w * delta[k]);
    den.add(w);
  }
  if (den.value() == 0.0) throw std::domain_error("all true propensities are zero");
  return num.value() / den.value();
}

}  // namespace

double sdr_bias_dominant(std::span<const double> p, std::span<const double> p_hat,
                         std::span<const double> delta) {
  require_same_length(p.size(), {p_hat.size(), delta.size()});
  if (p.empty()) return 0.0;
  const double wm = weighted_mean(p, p_hat, delta);
  CompensatedSum s;
  for (double d : delta) s.add(d - wm);
  return std::fabs(s.value() / static_cast<double>(p.size()));
}

double sdr_variance_dominant(std::span<const double> p, std::span<const double> p_hat,
                             std::span<const double> delta) {
  require_same_length(p.size(), {p_hat.size(), delta.size()});
  if (p.empty()) return 0.0;
  const double wm = weighted_mean(p, p_hat, delta);
  CompensatedSum num, den;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = delta[k] - wm;
    num.add(p[k] * (1.0 - p[k]) * h * h / (p_hat[k] * p_hat[k]));
    den.add(p[k] / p_hat[k]);
  }
  return num.value() / (den.value() * den.value());
}

double ips_dr_bias(std::span<const double> p, std::span<const double> p_hat,
                   std::span<const double> x) {
  require_same_length(p.size(), {p_hat.size(), x.size()});
  if (p.empty()) return 0.0;
  CompensatedSum s;
  for (std::size_t k = 0; k < p.size(); ++k) s.add((p_hat[k] - p[k]) * x[k] / p_hat[k]);
  return std::fabs(s.value()) / static_cast<double>(p.size());
}

double ips_dr_variance(std::span<const double> p, std::span<const double> p_hat,
                       std::span<const double> x) {
  require_same_length(p.size(), {p_hat.size(), x.size()});
  if (p.empty()) return 0.0;
  CompensatedSum s;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double r = x[k] / p_hat[k];
    s.add(p[k] * (1.0 - p[k]) * r * r);
  }
  const double n = static_cast<double>(p.size());
  return s.value() / (n * n);
}

double sdr_tail_sum(std::span<const double> p, std::span<const double> p_hat,
                    std::span<const double> delta, double eta, TailBound* diagnostics) {
  require_same_length(p.size(), {p_hat.size(), delta.size()});
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
  const std::size_t n = p.size();
  if (n == 0) return 0.0;
  const auto [lo, hi] = std::minmax_element(delta.begin(), delta.end());
  const double d_min = *lo, d_max = *hi;

  std::vector<double> ratio(n), inv_sq(n);
  for (std::size_t k = 0; k < n; ++k) {
    ratio[k] = p[k] / p_hat[k];
    inv_sq[k] = 1.0 / (p_hat[k] * p_hat[k]);
  }
  const auto ratio_loo = leave_one_out(ratio);
  const auto inv_sq_loo = leave_one_out(inv_sq);
  const double log_term = std::log(4.0 / eta);

  CompensatedSum total;
  std::size_t clamped = 0;
  double min_bracket = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double eps = std::sqrt(log_term / 2.0 * inv_sq_loo[k]);
    double bracket = 1.0 + p_hat[k] * (ratio_loo[k] - eps);
    min_bracket = std::min(min_bracket, bracket);
    if (!(bracket > 0.0)) {
      bracket = 1.0;
      ++clamped;
    }
    const double a = d_max - delta[k];
    const double b = delta[k] - d_min;
    total.add((a * a + b * b) / (bracket * bracket));
  }
  if (diagnostics) {
    diagnostics->clamped_pairs = clamped;
    diagnostics->min_bracket = min_bracket;
  }
  return total.value();
}

TailBound sdr_tail_bound(std::span<const double> p, std::span<const double> p_hat,
                         std::span<const double> delta, double eta) {
  TailBound out;
  const double sum = sdr_tail_sum(p, p_hat, delta, eta, &out);
  out.value = std::sqrt(0.5 * std::log(4.0 / eta) * sum);
  return out;
}

double ips_dr_tail_bound(std::span<const double> p_hat, std::span<const double> x, double eta) {
  require_same_length(p_hat.size(), {x.size()});
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
  if (p_hat.empty()) return 0.0;
  CompensatedSum s;
  for (std::size_t k = 0; k < p_hat.size(); ++k) {
    const double r = x[k] / p_hat[k];
    s.add(r * r);
  }
  const double n = static_cast<double>(p_hat.size());
  return std::sqrt(std::log(2.0 / eta) / (2.0 * n * n) * s.value());
}

GeneralizationTerms generalization_terms(const std::vector<Hypothesis>& hypotheses,
                                         std::span<const double> p,
                                         std::span<const double> p_hat, double eta,
                                         TheoryMode mode) {
  if (hypotheses.empty()) throw std::invalid_argument("hypothesis list is empty");
  GeneralizationTerms out;
  double worst = -1.0;
  for (std::size_t h = 0; h < hypotheses.size(); ++h) {
    const auto& hyp = hypotheses[h];
    const TheoryInputs in{p, p_hat, hyp.e, hyp.e_hat};
    in.validate();
    const auto delta = deviations(in, mode);
    out.bias_term.push_back(sdr_bias_dominant(p, p_hat, delta));
    const double s = sdr_tail_sum(p, p_hat, delta, eta);
    if (s > worst) {
      worst = s;
      out.maximizing_hypothesis = h;
    }
  }
  const double log_term = std::log(4.0 * static_cast<double>(hypotheses.size()) / eta);
  out.variance_term = std::sqrt(0.5 * log_term * worst);
  return out;
}

namespace {

std::vector<double> bounds_from_terms(const GeneralizationTerms& terms,
                                      const std::vector<Hypothesis>& hypotheses,
                                      std::span<const double> p, std::span<const double> p_hat,
                                      std::span<const std::uint8_t> o, TheoryMode mode) {
  std::vector<double> out(hypotheses.size());
  for (std::size_t h = 0; h < hypotheses.size(); ++h) {
    const EstimatorInputs ein{o, p_hat, hypotheses[h].e, hypotheses[h].e_hat, p};
    const double sdr = estimate(sdr_kind(mode), ein).value;
    out[h] = sdr + terms.bias_term[h] + terms.variance_term;
  }
  return out;
}

}  // namespace

std::vector<double> generalization_bound(const std::vector<Hypothesis>& hypotheses,
                                         std::span<const double> p,
                                         std::span<const double> p_hat,
                                         std::span<const std::uint8_t> o, double eta,
                                         TheoryMode mode) {
  const auto terms = generalization_terms(hypotheses, p, p_hat, eta, mode);
  if (o.size() != p.size()) throw std::invalid_argument("indicator length differs from D");
  return bounds_from_terms(terms, hypotheses, p, p_hat, o, mode);
}

double generalization_coverage(const std::vector<Hypothesis>& hypotheses,
                               std::span<const double> p, std::span<const double> p_hat,
                               double eta, std::size_t replicates, std::uint64_t seed,
                               TheoryMode mode, unsigned workers) {
  if (replicates == 0) throw std::invalid_argument("replicates must be positive");
  const auto terms = generalization_terms(hypotheses, p, p_hat, eta, mode);
  std::vector<double> risk;
  for (const auto& h : hypotheses) risk.push_back(ideal_loss(h.e));
  const std::size_t chunks = (replicates + kChunkReplicates - 1) / kChunkReplicates;
  const auto covered = parallel_chunks(
      chunks, workers ? workers : default_workers(), [&](std::size_t c) -> std::size_t {
        Rng rng(seed, 0x6e6e0000ULL + c);
        const std::size_t begin = c * kChunkReplicates;
        const std::size_t end = std::min(replicates, begin + kChunkReplicates);
        std::vector<std::uint8_t> o(p.size());
        std::size_t ok = 0;
        for (std::size_t r = begin; r < end; ++r) {
          for (std::size_t k = 0; k < p.size(); ++k) o[k] = rng.bernoulli(p[k]);
          const auto b = bounds_from_terms(terms, hypotheses, p, p_hat, o, mode);
          bool all = true;
          for (std::size_t h = 0; h < b.size(); ++h) all = all && risk[h] <= b[h];
          ok += all ? 1 : 0;
        }
        return ok;
      });
  std::size_t total = 0;
  for (auto c : covered) total += c;
  return static_cast<double>(total) / static_cast<double>(replicates);
}

unsigned default_workers() {
  if (const char* env = std::getenv("SDR_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

namespace {

// MC draws of one estimator; exceedance is counted against `center` with
// threshold `bound` (negative bound disables counting).
ChunkStats simulate(const TheoryInputs& in, EstimatorKind kind, std::size_t replicates,
                    std::uint64_t seed, unsigned workers, double center, double bound) {
  const std::size_t chunks = (replicates + kChunkReplicates - 1) / kChunkReplicates;
  auto parts = parallel_chunks(chunks, workers, [&](std::size_t c) {
    Rng rng(seed, c);
    ChunkStats st;
    const std::size_t begin = c * kChunkReplicates;
    const std::size_t end = std::min(replicates, begin + kChunkReplicates);
    std::vector<std::uint8_t> o(in.size());
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t k = 0; k < in.size(); ++k) o[k] = rng.bernoulli(in.p[k]);
      const double v = estimate(kind, inputs_for(in, o)).value;
      st.sum.add(v);
      st.sum_sq.add(v * v);
      ++st.count;
      if (bound >= 0.0 && std::fabs(v - center) > bound) ++st.exceed;
    }
    return st;
  });
  ChunkStats total;
  for (const auto& part : parts) {
    total.sum.add(part.sum.value());
    total.sum_sq.add(part.sum_sq.value());
    total.count += part.count;
    total.exceed += part.exceed;
  }
  return total;
}

}  // namespace

TheoryReport monte_carlo_report(const TheoryInputs& in, EstimatorKind kind,
                                const MonteCarloOptions& options) {
  in.validate();
  if (options.replicates < 1000) throw std::invalid_argument("monte_carlo_report needs R >= 1000");
  const unsigned workers = options.workers ? options.workers : default_workers();
  const auto delta = deviations(in, options.mode);
  std::vector<double> dr_delta(in.size());
  for (std::size_t k = 0; k < in.size(); ++k) dr_delta[k] = in.e[k] - in.e_hat[k];

  TheoryReport rep;
  rep.sample_size = in.size();
  rep.replicates = options.replicates;
  rep.eta = options.eta;
  rep.seed = options.seed;
  rep.theory_mode = std::string(theory_mode_name(options.mode));
  rep.ideal_loss = ideal_loss(in.e);

  EstimatorKind simulated = kind;
  switch (kind) {
    case EstimatorKind::Ips:
      rep.formula_bias_dominant = ips_dr_bias(in.p, in.p_hat, in.e);
      rep.formula_variance_dominant = ips_dr_variance(in.p, in.p_hat, in.e);
      rep.tail_bound_value = ips_dr_tail_bound(in.p_hat, in.e, options.eta);
      break;
    case EstimatorKind::Dr:
      rep.formula_bias_dominant = ips_dr_bias(in.p, in.p_hat, dr_delta);
      rep.formula_variance_dominant = ips_dr_variance(in.p, in.p_hat, dr_delta);
      rep.tail_bound_value = ips_dr_tail_bound(in.p_hat, dr_delta, options.eta);
      break;
    case EstimatorKind::Sdr:
    case EstimatorKind::SdrConstrained: {
      simulated = sdr_kind(options.mode);
      rep.formula_bias_dominant = sdr_bias_dominant(in.p, in.p_hat, delta);
      rep.formula_variance_dominant = sdr_variance_dominant(in.p, in.p_hat, delta);
      const auto tb = sdr_tail_bound(in.p, in.p_hat, delta, options.eta);
      rep.tail_bound_value = tb.value;
      rep.bracket_clamped_pairs = tb.clamped_pairs;
      rep.min_bracket = tb.min_bracket;
      break;
    }
    default:
      throw std::invalid_argument("no closed-form terms for estimator " +
                                  std::string(estimator_name(kind)));
  }
  rep.estimator = kind == EstimatorKind::Ips ? "ips" : kind == EstimatorKind::Dr ? "dr" : "sdr";

  if (in.size() <= kMaxEnumerationPairs) {
    const auto m = exact_moments(in, simulated);
    rep.mode = "exact-enumeration";
    rep.expectation = m.mean;
    rep.empirical_variance = m.variance;
  } else {
    rep.mode = "monte-carlo";
    const auto ref = simulate(in, simulated, options.reference_replicates,
                              options.seed ^ 0x7e7e7e7eULL, workers, 0.0, -1.0);
    rep.expectation = ref.sum.value() / static_cast<double>(ref.count);
  }

  const auto st = simulate(in, simulated, options.replicates, options.seed, workers,
                           rep.expectation, rep.tail_bound_value);
  const double r = static_cast<double>(st.count);
  rep.mc_mean = st.sum.value() / r;
  rep.mc_variance = std::max(0.0, (st.sum_sq.value() - r * rep.mc_mean * rep.mc_mean) / (r - 1.0));
  rep.mc_bias = std::fabs(rep.mc_mean - rep.ideal_loss);
  rep.mc_bias_standard_error = std::sqrt(rep.mc_variance / r);
  if (rep.mode == "monte-carlo") rep.empirical_variance = rep.mc_variance;
  rep.empirical_bias = std::fabs(rep.expectation - rep.ideal_loss);
  rep.tail_exceedances = st.exceed;
  rep.tail_exceedance_rate = static_cast<double>(st.exceed) / r;
  return rep;
}

TheoryWorld make_theory_world(const TheoryWorldConfig& c) {
  if (c.size < 1) throw std::invalid_argument("theory world needs at least one pair");
  if (!(c.floor > 0.0 && c.floor <= 1.0)) throw std::invalid_argument("floor must lie in (0, 1]");
  if (!(c.p_min > 0.0 && c.p_min <= c.p_max && c.p_max <= 1.0))
    throw std::invalid_argument("need 0 < p_min <= p_max <= 1");
  Rng rng(c.seed, 0x7e0);
  TheoryWorld w;
  for (std::size_t k = 0; k < c.size; ++k) {
    const double p = rng.uniform(c.p_min, c.p_max);
    const double scale = rng.uniform(1.0 - c.p_hat_noise, 1.0 + c.p_hat_noise);
    const double e = rng.uniform(0.05, 1.5);
    const double e_hat = e + c.imputation_noise * rng.normal();
    const bool floored = c.misspecified_every > 0 && k % c.misspecified_every == 0;
    w.p.push_back(p);
    w.p_hat.push_back(floored ? c.floor : std::clamp(p * scale, 1e-12, 1.0));
    w.e.push_back(e);
    w.e_hat.push_back(e_hat);
  }
  return w;
}

std::string to_json(const TheoryReport& r) {
  nlohmann::ordered_json j;
  j["estimator"] = r.estimator;
  j["mode"] = r.mode;
  j["theory_mode"] = r.theory_mode;
  j["sample_size"] = r.sample_size;
  j["replicates"] = r.replicates;
  j["eta"] = r.eta;
  j["seed"] = r.seed;
  j["ideal_loss"] = r.ideal_loss;
  j["expectation"] = r.expectation;
  j["empirical_bias"] = r.empirical_bias;
  j["empirical_variance"] = r.empirical_variance;
  j["mc_mean"] = r.mc_mean;
  j["mc_bias"] = r.mc_bias;
  j["mc_bias_standard_error"] = r.mc_bias_standard_error;
  j["mc_variance"] = r.mc_variance;
  j["formula_bias_dominant"] = r.formula_bias_dominant;
  j["formula_variance_dominant"] = r.formula_variance_dominant;
  j["tail_bound_value"] = r.tail_bound_value;
  j["tail_exceedances"] = r.tail_exceedances;
  j["tail_exceedance_rate"] = r.tail_exceedance_rate;
  j["bracket_clamped_pairs"] = r.bracket_clamped_pairs;
  j["min_bracket"] = r.min_bracket;
  return j.dump(2);
}

}  // namespace sdr
