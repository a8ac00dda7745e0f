#include "sdr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

namespace sdr {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& name) {
  KeyValueConfig c;
  c.name_ = name;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected 'key = value'", lineno);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError(name + ":" + std::to_string(lineno) + ": empty key", lineno);
    c.values_[key] = value;
    c.lines_[key] = lineno;
  }
  return c;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse(in, path.string());
}

void KeyValueConfig::set(const std::string& key, std::string value) {
  values_[key] = std::move(value);
  lines_[key] = 0;
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KeyValueConfig::fail(const std::string& key, const std::string& why) const {
  const auto it = lines_.find(key);
  const std::size_t line = it == lines_.end() ? 0 : it->second;
  std::string where = name_.empty() ? std::string("config") : name_;
  if (line) where += ":" + std::to_string(line);
  throw ParseError(where + ": key '" + key + "': " + why, line);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  double out = 0.0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size())
    fail(key, "expected a number, got '" + *v + "'");
  return out;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size())
    fail(key, "expected a nonnegative integer, got '" + *v + "'");
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  fail(key, "expected true or false, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                std::vector<double> fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    double x = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
      fail(key, "expected comma separated numbers, got '" + *v + "'");
    out.push_back(x);
  }
  if (out.empty()) fail(key, "empty list");
  return out;
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

TrainConfig train_config_from(const KeyValueConfig& c, TrainConfig d) {
  d.seed = c.get_uint("seed", d.seed);
  d.embedding_dim = c.get_uint("embedding_dim", d.embedding_dim);
  d.init_scale = c.get_double("init_scale", d.init_scale);
  d.eta = c.get_double("eta", d.eta);
  d.lambda_e = c.get_double("lambda_e", d.lambda_e);
  d.lambda_stable = c.get_double("lambda_stable", d.lambda_stable);
  d.lambda_sdr = c.get_double("lambda_sdr", d.lambda_sdr);
  d.lr_prediction = c.get_double("lr_prediction", d.lr_prediction);
  d.lr_imputation = c.get_double("lr_imputation", d.lr_imputation);
  d.lr_propensity = c.get_double("lr_propensity", d.lr_propensity);
  d.batch_observed = c.get_uint("batch_observed", d.batch_observed);
  d.batch_all = c.get_uint("batch_all", d.batch_all);
  d.imputation_steps = c.get_uint("imputation_steps", d.imputation_steps);
  d.propensity_steps = c.get_uint("propensity_steps", d.propensity_steps);
  d.prediction_steps = c.get_uint("prediction_steps", d.prediction_steps);
  d.max_cycles = c.get_uint("max_cycles", d.max_cycles);
  d.patience = c.get_uint("patience", d.patience);
  if (c.has("propensity_kind")) {
    const auto v = c.get_string("propensity_kind", "");
    const auto k = parse_propensity_kind(v);
    if (!k) throw ParseError("propensity_kind must be naive-bayes or logistic, got '" + v + "'");
    d.propensity_kind = *k;
  }
  if (c.has("imputation_kind")) {
    const auto v = c.get_string("imputation_kind", "");
    const auto k = parse_imputation_kind(v);
    if (!k) throw ParseError("imputation_kind must be dr or mrdr, got '" + v + "'");
    d.imputation_kind = *k;
  }
  d.pretrain_epochs = c.get_uint("pretrain_epochs", d.pretrain_epochs);
  d.lr_pretrain = c.get_double("lr_pretrain", d.lr_pretrain);
  d.lambda_pretrain = c.get_double("lambda_pretrain", d.lambda_pretrain);
  d.propensity_pretrain_steps = c.get_uint("propensity_pretrain_steps", d.propensity_pretrain_steps);
  d.nb_initial_alpha = c.get_double("nb_initial_alpha", d.nb_initial_alpha);
  d.warm_start = c.get_bool("warm_start", d.warm_start);
  d.validation_fraction = c.get_double("validation_fraction", d.validation_fraction);
  d.mar_sample_fraction = c.get_double("mar_sample_fraction", d.mar_sample_fraction);
  d.validate();
  return d;
}

WorldConfig world_config_from(const KeyValueConfig& c, WorldConfig d) {
  d.seed = c.get_uint("world.seed", d.seed);
  d.num_users = c.get_uint("world.num_users", d.num_users);
  d.num_items = c.get_uint("world.num_items", d.num_items);
  d.latent_dim = c.get_uint("world.latent_dim", d.latent_dim);
  d.propensity_slope = c.get_double("world.propensity_slope", d.propensity_slope);
  d.propensity_offset = c.get_double("world.propensity_offset", d.propensity_offset);
  d.propensity_floor = c.get_double("world.propensity_floor", d.propensity_floor);
  d.rating_noise = c.get_double("world.rating_noise", d.rating_noise);
  d.threshold = c.get_double("world.threshold", d.threshold);
  return d;
}

std::string serialize(const TrainConfig& c) {
  std::ostringstream o;
  auto kv = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto num = [&](const char* k, double v) { kv(k, format_double(v)); };
  auto cnt = [&](const char* k, std::uint64_t v) { kv(k, std::to_string(v)); };
  cnt("seed", c.seed);
  cnt("embedding_dim", c.embedding_dim);
  num("init_scale", c.init_scale);
  num("eta", c.eta);
  num("lambda_e", c.lambda_e);
  num("lambda_stable", c.lambda_stable);
  num("lambda_sdr", c.lambda_sdr);
  num("lr_prediction", c.lr_prediction);
  num("lr_imputation", c.lr_imputation);
  num("lr_propensity", c.lr_propensity);
  cnt("batch_observed", c.batch_observed);
  cnt("batch_all", c.batch_all);
  cnt("imputation_steps", c.imputation_steps);
  cnt("propensity_steps", c.propensity_steps);
  cnt("prediction_steps", c.prediction_steps);
  cnt("max_cycles", c.max_cycles);
  cnt("patience", c.patience);
  kv("propensity_kind", std::string(propensity_kind_name(c.propensity_kind)));
  kv("imputation_kind", std::string(imputation_kind_name(c.imputation_kind)));
  cnt("pretrain_epochs", c.pretrain_epochs);
  num("lr_pretrain", c.lr_pretrain);
  num("lambda_pretrain", c.lambda_pretrain);
  cnt("propensity_pretrain_steps", c.propensity_pretrain_steps);
  num("nb_initial_alpha", c.nb_initial_alpha);
  kv("warm_start", c.warm_start ? "true" : "false");
  num("validation_fraction", c.validation_fraction);
  num("mar_sample_fraction", c.mar_sample_fraction);
  return o.str();
}

std::string serialize(const WorldConfig& c) {
  std::ostringstream o;
  o << "world.seed = " << c.seed << '\n'
    << "world.num_users = " << c.num_users << '\n'
    << "world.num_items = " << c.num_items << '\n'
    << "world.latent_dim = " << c.latent_dim << '\n'
    << "world.propensity_slope = " << format_double(c.propensity_slope) << '\n'
    << "world.propensity_offset = " << format_double(c.propensity_offset) << '\n'
    << "world.propensity_floor = " << format_double(c.propensity_floor) << '\n'
    << "world.rating_noise = " << format_double(c.rating_noise) << '\n'
    << "world.threshold = " << format_double(c.threshold) << '\n';
  return o.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace sdr
