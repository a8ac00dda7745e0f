#include "sdr/estimators.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sdr/numeric.hpp"

namespace sdr {

namespace {

struct WeightedSums {
  double weighted_error = 0.0;  // sum o e / p_hat
  double weight = 0.0;          // sum o / p_hat
};

WeightedSums weighted_sums(const EstimatorInputs& in) {
  CompensatedSum num, den;
  for (std::size_t k = 0; k < in.size(); ++k) {
    if (!in.o[k]) continue;
    const double w = 1.0 / in.p_hat[k];
    num.add(w * in.e[k]);
    den.add(w);
  }
  return {num.value(), den.value()};
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return compensated_sum(v) / static_cast<double>(v.size());
}

}  // namespace

void EstimatorInputs::validate() const {
  const std::size_t n = o.size();
  if (p_hat.size() != n || e.size() != n || e_hat.size() != n)
    throw std::invalid_argument("estimator inputs must have equal lengths");
  if (!p_true.empty() && p_true.size() != n)
    throw std::invalid_argument("p_true length differs from o");
  for (std::size_t k = 0; k < n; ++k) {
    if (!(p_hat[k] > 0.0) || !std::isfinite(p_hat[k]))
      throw std::invalid_argument("p_hat must be positive and finite at index " +
                                  std::to_string(k));
    if (!std::isfinite(e_hat[k]))
      throw std::invalid_argument("e_hat not finite at index " + std::to_string(k));
    if (o[k] && !std::isfinite(e[k]))
      throw std::invalid_argument("e not finite at observed index " + std::to_string(k));
  }
}

std::string_view estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Eib: return "eib";
    case EstimatorKind::Ips: return "ips";
    case EstimatorKind::Snips: return "snips";
    case EstimatorKind::Dr: return "dr";
    case EstimatorKind::Sdr: return "sdr";
    case EstimatorKind::SdrConstrained: return "sdr-constrained";
  }
  return "unknown";
}

std::optional<EstimatorKind> parse_estimator(std::string_view name) {
  for (auto k : {EstimatorKind::Eib, EstimatorKind::Ips, EstimatorKind::Snips, EstimatorKind::Dr,
                 EstimatorKind::Sdr, EstimatorKind::SdrConstrained})
    if (estimator_name(k) == name) return k;
  return std::nullopt;
}

double ideal_loss(std::span<const double> e) { return mean_of(e); }

double imputed_mean(std::span<const double> e_hat) { return mean_of(e_hat); }

EstimateValue estimate_eib(const EstimatorInputs& in) {
  CompensatedSum s;
  for (std::size_t k = 0; k < in.size(); ++k) s.add(in.o[k] ? in.e[k] : in.e_hat[k]);
  const auto sums = weighted_sums(in);
  return {in.size() ? s.value() / static_cast<double>(in.size()) : 0.0, sums.weight, false};
}

EstimateValue estimate_ips(const EstimatorInputs& in) {
  const auto sums = weighted_sums(in);
  const double n = static_cast<double>(in.size());
  return {in.size() ? sums.weighted_error / n : 0.0, sums.weight, false};
}

EstimateValue estimate_snips(const EstimatorInputs& in) {
  const auto sums = weighted_sums(in);
  if (sums.weight == 0.0) return {imputed_mean(in.e_hat), 0.0, true};
  return {sums.weighted_error / sums.weight, sums.weight, false};
}

EstimateValue estimate_dr(const EstimatorInputs& in) {
  CompensatedSum s, w;
  for (std::size_t k = 0; k < in.size(); ++k) {
    s.add(in.e_hat[k]);
    if (in.o[k]) {
      s.add((in.e[k] - in.e_hat[k]) / in.p_hat[k]);
      w.add(1.0 / in.p_hat[k]);
    }
  }
  return {in.size() ? s.value() / static_cast<double>(in.size()) : 0.0, w.value(), false};
}

EstimateValue estimate_sdr(const EstimatorInputs& in) { return estimate_snips(in); }

EstimateValue estimate_sdr_constrained(const EstimatorInputs& in) {
  const double e_bar = imputed_mean(in.e_hat);
  CompensatedSum num, den;
  for (std::size_t k = 0; k < in.size(); ++k) {
    if (!in.o[k]) continue;
    const double w = 1.0 / in.p_hat[k];
    num.add(w * (in.e[k] - in.e_hat[k]));
    den.add(w);
  }
  if (den.value() == 0.0) return {e_bar, 0.0, true};
  return {num.value() / den.value() + e_bar, den.value(), false};
}

EstimateValue estimate(EstimatorKind kind, const EstimatorInputs& in) {
  switch (kind) {
    case EstimatorKind::Eib: return estimate_eib(in);
    case EstimatorKind::Ips: return estimate_ips(in);
    case EstimatorKind::Snips: return estimate_snips(in);
    case EstimatorKind::Dr: return estimate_dr(in);
    case EstimatorKind::Sdr: return estimate_sdr(in);
    case EstimatorKind::SdrConstrained: return estimate_sdr_constrained(in);
  }
  throw std::invalid_argument("unknown estimator kind");
}

double constraint_residual(const EstimatorInputs& in) {
  if (in.size() == 0) return 0.0;
  const double e_bar = imputed_mean(in.e_hat);
  CompensatedSum s;
  for (std::size_t k = 0; k < in.size(); ++k)
    if (in.o[k]) s.add((in.e_hat[k] - e_bar) / in.p_hat[k]);
  return s.value() / static_cast<double>(in.size());
}

double sdr_violation_identity_check(const EstimatorInputs& in) {
  for (std::size_t k = 0; k < in.size(); ++k)
    if (in.e[k] != in.e_hat[k])
      throw std::invalid_argument("identity requires e_hat == e on D (index " +
                                  std::to_string(k) + ")");
  const auto sums = weighted_sums(in);
  if (sums.weight == 0.0) throw std::domain_error("no observed weight: identity undefined");
  const double n = static_cast<double>(in.size());
  const double lambda = constraint_residual(in);
  const double predicted = ideal_loss(in.e) + lambda / (sums.weight / n);
  return std::fabs(estimate_sdr(in).value - predicted);
}

}  // namespace sdr
