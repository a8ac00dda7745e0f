#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace sdr {

// Aligned vectors over D. `e` is only read where o = 1, so callers may leave
// unobserved entries at any finite value. `p_true` is optional and only used
// by oracle code.
struct EstimatorInputs {
  std::span<const std::uint8_t> o;
  std::span<const double> p_hat;
  std::span<const double> e;
  std::span<const double> e_hat;
  std::span<const double> p_true = {};

  std::size_t size() const { return o.size(); }
  // Throws std::invalid_argument on length mismatch, p_hat <= 0 or non-finite
  // values.
  void validate() const;
};

struct EstimateValue {
  double value = 0.0;
  double effective_weight_sum = 0.0;  // sum of o / p_hat
  bool degenerate = false;            // self-normalized estimator with zero weight
};

enum class EstimatorKind { Eib, Ips, Snips, Dr, Sdr, SdrConstrained };

std::string_view estimator_name(EstimatorKind kind);
std::optional<EstimatorKind> parse_estimator(std::string_view name);

double ideal_loss(std::span<const double> e);

// Mean of the imputed errors over D.
double imputed_mean(std::span<const double> e_hat);

EstimateValue estimate_eib(const EstimatorInputs& in);
EstimateValue estimate_ips(const EstimatorInputs& in);
EstimateValue estimate_snips(const EstimatorInputs& in);
EstimateValue estimate_dr(const EstimatorInputs& in);

// Self-normalized sum(o e / p_hat) / sum(o / p_hat). Identical in form to
// SNIPS; the difference lies in how p_hat was learned. Falls back to
// mean(e_hat) when no pair carries weight.
EstimateValue estimate_sdr(const EstimatorInputs& in);

// sum(o (e - e_hat) / p_hat) / sum(o / p_hat) + mean(e_hat): the value SDR
// takes whenever the stabilization constraint holds on the sample. The
// theory oracles enumerate this form when the constraint is assumed.
EstimateValue estimate_sdr_constrained(const EstimatorInputs& in);

EstimateValue estimate(EstimatorKind kind, const EstimatorInputs& in);

// |D|^-1 sum (o / p_hat) (e_hat - mean(e_hat)); zero iff the stabilization
// constraint holds exactly on this sample.
double constraint_residual(const EstimatorInputs& in);

// With e_hat = e on D and residual lambda, the SDR value satisfies
//   E_SDR = mean(e_hat) + lambda / (|D|^-1 sum o / p_hat).
// Returns the absolute gap between both sides (zero up to rounding).
// Throws std::invalid_argument if e_hat != e on an observed pair and
// std::domain_error on a zero weight sum.
double sdr_violation_identity_check(const EstimatorInputs& in);

}  // namespace sdr
