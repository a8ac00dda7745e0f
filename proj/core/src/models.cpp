#include "sdr/models.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "sdr/numeric.hpp"
#include "sdr/rng.hpp"

namespace sdr {

FactorModel::FactorModel(std::size_t num_users, std::size_t num_items, std::size_t dim, Link link)
    : num_users_(num_users),
      num_items_(num_items),
      dim_(dim),
      link_(link),
      params_((num_users + num_items) * dim + num_users + num_items + 1, 0.0) {}

FactorModel FactorModel::random(std::size_t num_users, std::size_t num_items, std::size_t dim,
                                Link link, std::uint64_t seed, double scale) {
  FactorModel m(num_users, num_items, dim, link);
  Rng rng(seed, 0xfac7);
  const std::size_t embeddings = (num_users + num_items) * dim;
  for (std::size_t k = 0; k < embeddings; ++k) m.params_[k] = rng.uniform(-scale, scale);
  return m;
}

std::span<const double> FactorModel::user_embedding(std::uint32_t u) const {
  return std::span<const double>(params_).subspan(static_cast<std::size_t>(u) * dim_, dim_);
}

std::span<const double> FactorModel::item_embedding(std::uint32_t i) const {
  return std::span<const double>(params_).subspan(item_offset() + static_cast<std::size_t>(i) * dim_,
                                                  dim_);
}

double FactorModel::logit(std::uint32_t u, std::uint32_t i) const {
  const double* pu = params_.data() + static_cast<std::size_t>(u) * dim_;
  const double* qi = params_.data() + item_offset() + static_cast<std::size_t>(i) * dim_;
  double s = 0.0;
  for (std::size_t d = 0; d < dim_; ++d) s += pu[d] * qi[d];
  return s + user_bias(u) + item_bias(i) + global_bias();
}

double FactorModel::score(std::uint32_t u, std::uint32_t i) const {
  const double z = logit(u, i);
  return link_ == Link::Sigmoid ? sigmoid(z) : z;
}

std::vector<double> FactorModel::score(std::span<const UserItem> pairs) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.user >= num_users_ || p.item >= num_items_)
      throw std::out_of_range("pair index outside the model's dimensions");
    out.push_back(score(p.user, p.item));
  }
  return out;
}

void FactorModel::add_logit_gradient(std::uint32_t u, std::uint32_t i, double scale,
                                     std::span<double> grad) const {
  const std::size_t pu = static_cast<std::size_t>(u) * dim_;
  const std::size_t qi = item_offset() + static_cast<std::size_t>(i) * dim_;
  for (std::size_t d = 0; d < dim_; ++d) {
    grad[pu + d] += scale * params_[qi + d];
    grad[qi + d] += scale * params_[pu + d];
  }
  grad[user_bias_offset() + u] += scale;
  grad[item_bias_offset() + i] += scale;
  grad.back() += scale;
}

double FactorModel::squared_norm() const {
  CompensatedSum s;
  for (double x : params_) s.add(x * x);
  return s.value();
}

// ---------------------------------------------------------------------------

NaiveBayesPropensity::NaiveBayesPropensity(std::vector<double> observed_counts,
                                           std::vector<double> mar_counts,
                                           double marginal_observation_rate, double laplace_alpha)
    : observed_counts_(std::move(observed_counts)),
      mar_counts_(std::move(mar_counts)),
      marginal_rate_(marginal_observation_rate) {
  if (observed_counts_.empty() || observed_counts_.size() != mar_counts_.size())
    throw std::invalid_argument("histograms must be nonempty and share the value set");
  for (double c : observed_counts_) {
    if (c < 0.0) throw std::invalid_argument("negative histogram count");
    observed_total_ += c;
  }
  for (double c : mar_counts_) {
    if (c < 0.0) throw std::invalid_argument("negative histogram count");
    mar_total_ += c;
  }
  if (!(marginal_rate_ > 0.0 && marginal_rate_ <= 1.0))
    throw std::invalid_argument("marginal observation rate must lie in (0, 1]");
  set_laplace_alpha(laplace_alpha);
}

NaiveBayesPropensity NaiveBayesPropensity::fit(const InteractionSet& set,
                                               std::span<const Rating> mar_sample,
                                               int num_values, double laplace_alpha) {
  std::vector<double> obs(num_values, 0.0), mar(num_values, 0.0);
  auto bucket = [&](double v) {
    const long idx = std::lround(v) - 1;
    if (idx < 0 || idx >= num_values)
      throw std::invalid_argument("rating " + std::to_string(v) + " outside 1.." +
                                  std::to_string(num_values));
    return static_cast<std::size_t>(idx);
  };
  for (const auto& r : set.observed) obs[bucket(r.value)] += 1.0;
  for (const auto& r : mar_sample) mar[bucket(r.value)] += 1.0;
  const double rate =
      static_cast<double>(set.observed.size()) / static_cast<double>(set.num_pairs());
  return NaiveBayesPropensity(std::move(obs), std::move(mar), rate, laplace_alpha);
}

void NaiveBayesPropensity::set_laplace_alpha(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("laplace alpha must be finite and >= 0");
  if (alpha == 0.0 && (observed_total_ == 0.0 || mar_total_ == 0.0))
    throw std::domain_error("empty histogram with zero smoothing: probabilities undefined");
  alpha_ = alpha;
}

int NaiveBayesPropensity::index_of(double rating) const {
  const long idx = std::lround(rating) - 1;
  if (idx < 0 || idx >= num_values())
    throw std::invalid_argument("rating " + std::to_string(rating) + " outside the value set");
  return static_cast<int>(idx);
}

double NaiveBayesPropensity::raw(int k, double* derivative) const {
  const double V = static_cast<double>(num_values());
  const double n1 = observed_total_ + alpha_ * V;
  const double nm = mar_total_ + alpha_ * V;
  const double p1 = (observed_counts_[k] + alpha_) / n1;
  const double pm = (mar_counts_[k] + alpha_) / nm;
  const double dp1 = (observed_total_ - V * observed_counts_[k]) / (n1 * n1);
  const double dpm = (mar_total_ - V * mar_counts_[k]) / (nm * nm);
  double value;
  double d = 0.0;
  if (pm <= 0.0) {
    value = p1 > 0.0 ? 1.0 : kPropensityFloor;
  } else {
    value = marginal_rate_ * p1 / pm;
    d = marginal_rate_ * (dp1 * pm - p1 * dpm) / (pm * pm);
    if (value >= 1.0) {
      value = 1.0;
      d = 0.0;
    } else if (value < kPropensityFloor) {
      value = kPropensityFloor;
      d = 0.0;
    }
  }
  if (derivative) *derivative = d;
  return value;
}

double NaiveBayesPropensity::propensity(double rating) const { return raw(index_of(rating), nullptr); }

double NaiveBayesPropensity::propensity_derivative(double rating) const {
  double d = 0.0;
  raw(index_of(rating), &d);
  return d;
}

double NaiveBayesPropensity::unobserved_propensity() const {
  const double V = static_cast<double>(num_values());
  const double nm = mar_total_ + alpha_ * V;
  double s = 0.0;
  for (int k = 0; k < num_values(); ++k) s += (mar_counts_[k] + alpha_) / nm * raw(k, nullptr);
  return std::clamp(s, kPropensityFloor, 1.0);
}

double NaiveBayesPropensity::unobserved_propensity_derivative() const {
  const double V = static_cast<double>(num_values());
  const double nm = mar_total_ + alpha_ * V;
  double s = 0.0;
  for (int k = 0; k < num_values(); ++k) {
    double d = 0.0;
    const double pi = raw(k, &d);
    const double pm = (mar_counts_[k] + alpha_) / nm;
    const double dpm = (mar_total_ - V * mar_counts_[k]) / (nm * nm);
    s += dpm * pi + pm * d;
  }
  return s;
}

double nb_propensity(const NaiveBayesPropensity& model, double rating) {
  return model.propensity(rating);
}

// ---------------------------------------------------------------------------

FeatureTable FeatureTable::from_embeddings(const FactorModel& model) {
  FeatureTable t;
  t.num_users_ = model.num_users();
  t.num_items_ = model.num_items();
  t.embed_dim_ = model.dim();
  for (std::uint32_t u = 0; u < t.num_users_; ++u) {
    const auto e = model.user_embedding(u);
    t.user_.insert(t.user_.end(), e.begin(), e.end());
    t.user_bias_.push_back(model.user_bias(u));
  }
  for (std::uint32_t i = 0; i < t.num_items_; ++i) {
    const auto e = model.item_embedding(i);
    t.item_.insert(t.item_.end(), e.begin(), e.end());
    t.item_bias_.push_back(model.item_bias(i));
  }
  return t;
}

void FeatureTable::row(std::uint32_t u, std::uint32_t i, std::span<double> out) const {
  const std::size_t k = embed_dim_;
  const double* pu = user_.data() + static_cast<std::size_t>(u) * k;
  const double* qi = item_.data() + static_cast<std::size_t>(i) * k;
  for (std::size_t d = 0; d < k; ++d) {
    out[d] = pu[d];
    out[k + d] = qi[d];
    out[2 * k + d] = pu[d] * qi[d];
  }
  out[3 * k] = user_bias_[u];
  out[3 * k + 1] = item_bias_[i];
}

std::vector<double> FeatureTable::row(std::uint32_t u, std::uint32_t i) const {
  std::vector<double> out(dim());
  row(u, i, out);
  return out;
}

LogisticPropensity::LogisticPropensity(FeatureTable features)
    : features_(std::move(features)), params_(features_.dim() + 1, 0.0) {}

double LogisticPropensity::logit(std::uint32_t u, std::uint32_t i) const {
  const std::size_t k = features_.dim();
  double x[512];
  std::vector<double> heap;
  std::span<double> row(x, k <= 512 ? k : 0);
  if (k > 512) {
    heap.resize(k);
    row = heap;
  }
  features_.row(u, i, row);
  double z = params_[k];
  for (std::size_t d = 0; d < k; ++d) z += params_[d] * row[d];
  return z;
}

double LogisticPropensity::propensity(std::uint32_t u, std::uint32_t i) const {
  return std::clamp(sigmoid(logit(u, i)), kPropensityFloor, 1.0 - kPropensityFloor);
}

void LogisticPropensity::add_propensity_gradient(std::uint32_t u, std::uint32_t i, double scale,
                                                 std::span<double> grad) const {
  const double pi = sigmoid(logit(u, i));
  if (pi <= kPropensityFloor || pi >= 1.0 - kPropensityFloor) return;
  const double g = scale * pi * (1.0 - pi);
  const auto row = features_.row(u, i);
  for (std::size_t d = 0; d < row.size(); ++d) grad[d] += g * row[d];
  grad[row.size()] += g;
}

double PropensityModel::propensity(const PairContext& pair) const {
  if (const auto* nb = naive_bayes())
    return pair.observed ? nb->propensity(pair.rating) : nb->unobserved_propensity();
  return logistic()->propensity(pair.user, pair.item);
}

void PropensityModel::add_propensity_gradient(const PairContext& pair, double scale,
                                              std::span<double> grad) const {
  if (const auto* nb = naive_bayes()) {
    grad[0] += scale * (pair.observed ? nb->propensity_derivative(pair.rating)
                                      : nb->unobserved_propensity_derivative());
    return;
  }
  logistic()->add_propensity_gradient(pair.user, pair.item, scale, grad);
}

std::size_t PropensityModel::num_params() const {
  if (naive_bayes()) return 1;
  return logistic()->params().size();
}

std::vector<double> PropensityModel::params() const {
  if (const auto* nb = naive_bayes()) return {nb->laplace_alpha()};
  const auto p = logistic()->params();
  return {p.begin(), p.end()};
}

void PropensityModel::set_params(std::span<const double> values) {
  if (values.size() != num_params()) throw std::invalid_argument("propensity parameter count");
  if (auto* nb = std::get_if<NaiveBayesPropensity>(&impl_)) {
    // Projection onto alpha >= 0.
    nb->set_laplace_alpha(std::max(0.0, values[0]));
    return;
  }
  auto p = std::get<LogisticPropensity>(impl_).params();
  std::copy(values.begin(), values.end(), p.begin());
}

double PropensityModel::squared_norm() const {
  double s = 0.0;
  for (double x : params()) s += x * x;
  return s;
}

// ---------------------------------------------------------------------------

AdamState::AdamState(std::size_t num_params, AdamConfig config)
    : config_(config), m_(num_params, 0.0), v_(num_params, 0.0) {}

void AdamState::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adam: parameter/gradient shape mismatch");
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = b1 * m_[k] + (1.0 - b1) * grads[k];
    v_[k] = b2 * v_[k] + (1.0 - b2) * grads[k] * grads[k];
    const double m_hat = m_[k] / c1;
    const double v_hat = v_[k] / c2;
    params[k] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

// ---------------------------------------------------------------------------

const FactorModel& Checkpoint::model(const std::string& name, std::size_t num_users,
                                     std::size_t num_items) const {
  const auto it = factor_models.find(name);
  if (it == factor_models.end()) throw std::runtime_error("checkpoint has no model '" + name + "'");
  if (it->second.num_users() != num_users || it->second.num_items() != num_items)
    throw std::runtime_error("checkpoint model '" + name + "' is " +
                             std::to_string(it->second.num_users()) + "x" +
                             std::to_string(it->second.num_items()) + ", dataset is " +
                             std::to_string(num_users) + "x" + std::to_string(num_items));
  return it->second;
}

void save_checkpoint(std::ostream& out, const Checkpoint& cp) {
  nlohmann::ordered_json j;
  j["format"] = "sdr-checkpoint";
  j["version"] = cp.version;
  j["config_hash"] = cp.config_hash;
  auto& models = j["factor_models"];
  models = nlohmann::ordered_json::object();
  for (const auto& [name, m] : cp.factor_models) {
    nlohmann::ordered_json e;
    e["num_users"] = m.num_users();
    e["num_items"] = m.num_items();
    e["dim"] = m.dim();
    e["link"] = m.link() == Link::Sigmoid ? "sigmoid" : "identity";
    e["params"] = std::vector<double>(m.params().begin(), m.params().end());
    models[name] = std::move(e);
  }
  j["propensity_kind"] = cp.propensity_kind;
  j["propensity_params"] = cp.propensity_params;
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "sdr-checkpoint") throw std::runtime_error("not an sdr checkpoint");
  Checkpoint cp;
  cp.version = j.at("version").get<int>();
  if (cp.version != 1)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(cp.version));
  cp.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& [name, e] : j.at("factor_models").items()) {
    const auto link = e.at("link").get<std::string>() == "sigmoid" ? Link::Sigmoid : Link::Identity;
    FactorModel m(e.at("num_users").get<std::size_t>(), e.at("num_items").get<std::size_t>(),
                  e.at("dim").get<std::size_t>(), link);
    const auto params = e.at("params").get<std::vector<double>>();
    if (params.size() != m.num_params())
      throw std::runtime_error("checkpoint model '" + name + "' has " +
                               std::to_string(params.size()) + " parameters, expected " +
                               std::to_string(m.num_params()));
    std::copy(params.begin(), params.end(), m.params().begin());
    cp.factor_models.emplace(name, std::move(m));
  }
  cp.propensity_kind = j.value("propensity_kind", "");
  cp.propensity_params = j.value("propensity_params", std::vector<double>{});
  return cp;
}

}  // namespace sdr
