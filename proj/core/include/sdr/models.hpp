#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sdr/data.hpp"

namespace sdr {

// Floor applied to every propensity a trainable model emits.
inline constexpr double kPropensityFloor = 1e-6;

enum class Link { Identity, Sigmoid };

// score(u, i) = link(<P_u, Q_i> + b_u + b_i + b_0). Parameters live in one
// flat vector laid out as [P (users x dim) | Q (items x dim) | b_user | b_item
// | b_0] so optimizers and checkpoints treat the model as a single tensor.
class FactorModel {
 public:
  FactorModel() = default;
  FactorModel(std::size_t num_users, std::size_t num_items, std::size_t dim, Link link);

  // Embeddings uniform in [-scale, scale], biases zero.
  static FactorModel random(std::size_t num_users, std::size_t num_items, std::size_t dim,
                            Link link, std::uint64_t seed, double scale = 0.01);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t dim() const { return dim_; }
  Link link() const { return link_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  std::span<const double> user_embedding(std::uint32_t u) const;
  std::span<const double> item_embedding(std::uint32_t i) const;
  double user_bias(std::uint32_t u) const { return params_[user_bias_offset() + u]; }
  double item_bias(std::uint32_t i) const { return params_[item_bias_offset() + i]; }
  double global_bias() const { return params_.back(); }

  // Pre-link score.
  double logit(std::uint32_t u, std::uint32_t i) const;
  double score(std::uint32_t u, std::uint32_t i) const;
  std::vector<double> score(std::span<const UserItem> pairs) const;

  // grad += scale * d logit(u, i) / d params.
  void add_logit_gradient(std::uint32_t u, std::uint32_t i, double scale,
                          std::span<double> grad) const;

  double squared_norm() const;

 private:
  std::size_t item_offset() const { return num_users_ * dim_; }
  std::size_t user_bias_offset() const { return (num_users_ + num_items_) * dim_; }
  std::size_t item_bias_offset() const { return user_bias_offset() + num_users_; }

  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::size_t dim_ = 0;
  Link link_ = Link::Sigmoid;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------

// P(o=1 | r) = P(r | o=1) P(o=1) / P(r) with additively smoothed histograms
// (count + alpha) / (total + alpha V) over the rating values 1..V. P(r) comes
// from a MAR sample.
class NaiveBayesPropensity {
 public:
  NaiveBayesPropensity() = default;
  NaiveBayesPropensity(std::vector<double> observed_counts, std::vector<double> mar_counts,
                       double marginal_observation_rate, double laplace_alpha = 0.0);

  // Histograms from the observed ratings and a MAR sample; the marginal rate
  // is |O| / |D|.
  static NaiveBayesPropensity fit(const InteractionSet& set, std::span<const Rating> mar_sample,
                                  int num_values = 5, double laplace_alpha = 0.0);

  int num_values() const { return static_cast<int>(observed_counts_.size()); }
  double laplace_alpha() const { return alpha_; }
  void set_laplace_alpha(double alpha);
  double marginal_observation_rate() const { return marginal_rate_; }
  const std::vector<double>& observed_counts() const { return observed_counts_; }
  const std::vector<double>& mar_counts() const { return mar_counts_; }

  // Propensity of a rating value in 1..V, in [kPropensityFloor, 1].
  double propensity(double rating) const;
  // d propensity / d alpha (zero where a clip is active).
  double propensity_derivative(double rating) const;

  // Propensity of a pair whose rating is unknown: the MAR-weighted mixture
  // sum_r P(r) propensity(r).
  double unobserved_propensity() const;
  double unobserved_propensity_derivative() const;

 private:
  double raw(int value_index, double* derivative) const;
  int index_of(double rating) const;

  std::vector<double> observed_counts_;
  std::vector<double> mar_counts_;
  double observed_total_ = 0.0;
  double mar_total_ = 0.0;
  double marginal_rate_ = 0.0;
  double alpha_ = 0.0;
};

double nb_propensity(const NaiveBayesPropensity& model, double rating);

// Per-pair features built from frozen factor-model embeddings:
// [P_u | Q_i | P_u * Q_i | b_u | b_i].
class FeatureTable {
 public:
  FeatureTable() = default;
  static FeatureTable from_embeddings(const FactorModel& model);

  std::size_t dim() const { return 3 * embed_dim_ + 2; }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  void row(std::uint32_t u, std::uint32_t i, std::span<double> out) const;
  std::vector<double> row(std::uint32_t u, std::uint32_t i) const;

 private:
  std::size_t num_users_ = 0, num_items_ = 0, embed_dim_ = 0;
  std::vector<double> user_, item_, user_bias_, item_bias_;
};

// pi = sigmoid(<w, x_{u,i}> + c), trainable head over fixed features.
class LogisticPropensity {
 public:
  LogisticPropensity() = default;
  explicit LogisticPropensity(FeatureTable features);

  const FeatureTable& features() const { return features_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  double logit(std::uint32_t u, std::uint32_t i) const;
  // In [kPropensityFloor, 1 - kPropensityFloor].
  double propensity(std::uint32_t u, std::uint32_t i) const;
  // grad += scale * d propensity / d params (zero where the clip is active).
  void add_propensity_gradient(std::uint32_t u, std::uint32_t i, double scale,
                               std::span<double> grad) const;

 private:
  FeatureTable features_;
  std::vector<double> params_;  // weights then bias
};

// What a propensity model may look at for one pair of D.
struct PairContext {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  bool observed = false;
  double rating = 0.0;  // meaningful only when observed
};

enum class PropensityKind { NaiveBayes, Logistic };

class PropensityModel {
 public:
  PropensityModel() = default;
  PropensityModel(NaiveBayesPropensity nb) : impl_(std::move(nb)) {}
  PropensityModel(LogisticPropensity lr) : impl_(std::move(lr)) {}

  PropensityKind kind() const {
    return std::holds_alternative<NaiveBayesPropensity>(impl_) ? PropensityKind::NaiveBayes
                                                               : PropensityKind::Logistic;
  }
  const NaiveBayesPropensity* naive_bayes() const { return std::get_if<NaiveBayesPropensity>(&impl_); }
  const LogisticPropensity* logistic() const { return std::get_if<LogisticPropensity>(&impl_); }

  double propensity(const PairContext& pair) const;
  void add_propensity_gradient(const PairContext& pair, double scale,
                               std::span<double> grad) const;

  std::size_t num_params() const;
  std::vector<double> params() const;
  void set_params(std::span<const double> values);
  double squared_norm() const;

 private:
  std::variant<NaiveBayesPropensity, LogisticPropensity> impl_;
};

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t num_params, AdamConfig config);

  // params -= lr * m_hat / (sqrt(v_hat) + eps). Throws std::invalid_argument
  // on shape mismatch.
  void step(std::span<double> params, std::span<const double> grads);

  std::uint64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  std::uint64_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints: structured-text dump of every tensor plus the config hash.

struct Checkpoint {
  int version = 1;
  std::string config_hash;
  std::map<std::string, FactorModel> factor_models;
  std::string propensity_kind;          // "naive-bayes", "logistic" or empty
  std::vector<double> propensity_params;

  // Throws std::runtime_error when the model is missing or its dimensions
  // differ from the expected ones.
  const FactorModel& model(const std::string& name, std::size_t num_users,
                           std::size_t num_items) const;
};

void save_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(std::istream& in);

}  // namespace sdr
