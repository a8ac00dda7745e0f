#include "sdr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sdr/rng.hpp"

namespace sdr {

namespace {

std::string located(const std::string& what, std::size_t line, std::size_t column) {
  std::ostringstream os;
  os << what;
  if (line > 0) {
    os << " (line " << line;
    if (column > 0) os << ", column " << column;
    os << ")";
  }
  return os.str();
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

bool pair_less(const Rating& a, const Rating& b) {
  return a.user != b.user ? a.user < b.user : a.item < b.item;
}

bool parse_int(std::string_view token, long long& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

InteractionSet build_set(std::size_t users, std::size_t items, double threshold,
                         std::vector<Rating> observed, std::vector<Rating> test) {
  InteractionSet set;
  set.num_users = users;
  set.num_items = items;
  set.threshold = threshold;
  std::sort(observed.begin(), observed.end(), pair_less);
  std::sort(test.begin(), test.end(), pair_less);
  set.observed = std::move(observed);
  set.mar_test = std::move(test);
  return set;
}

}  // namespace

ParseError::ParseError(const std::string& what, std::size_t line, std::size_t column)
    : std::runtime_error(located(what, line, column)), line_(line), column_(column) {}

std::vector<std::uint8_t> InteractionSet::indicator() const {
  std::vector<std::uint8_t> o(num_pairs(), 0);
  for (const auto& r : observed) o[pair_index(r)] = 1;
  return o;
}

void InteractionSet::validate(bool require_disjoint) const {
  auto check_split = [&](const std::vector<Rating>& split, const char* name) {
    for (std::size_t k = 0; k < split.size(); ++k) {
      const Rating& r = split[k];
      if (r.user >= num_users || r.item >= num_items)
        throw std::invalid_argument(std::string(name) + ": pair index out of range");
      if (r.label != binarize(r.value, threshold))
        throw std::invalid_argument(std::string(name) + ": label disagrees with threshold");
      if (k > 0 && !pair_less(split[k - 1], r))
        throw std::invalid_argument(std::string(name) + ": pairs unsorted or duplicated");
    }
  };
  check_split(observed, "observed");
  check_split(mar_test, "mar_test");
  if (require_disjoint) {
    const auto o = indicator();
    for (const auto& r : mar_test)
      if (o[pair_index(r)]) throw std::invalid_argument("mar_test overlaps observed pairs");
  }
}

InteractionSet rebinarize(const InteractionSet& set, double threshold) {
  InteractionSet out = set;
  out.threshold = threshold;
  for (auto& r : out.observed) r.label = binarize(r.value, threshold);
  for (auto& r : out.mar_test) r.label = binarize(r.value, threshold);
  return out;
}

std::vector<std::vector<int>> parse_ascii_matrix(std::istream& in, const std::string& name) {
  std::vector<std::vector<int>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<int> row;
    std::string token;
    while (ls >> token) {
      long long v = 0;
      if (!parse_int(token, v))
        throw ParseError(name + ": non-integer cell '" + token + "'", line_no, row.size() + 1);
      if (v < 0 || v > 5)
        throw ParseError(name + ": cell value " + token + " outside 0..5", line_no,
                         row.size() + 1);
      row.push_back(static_cast<int>(v));
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(name + ": row has " + std::to_string(row.size()) + " columns, expected " +
                           std::to_string(rows.front().size()),
                       line_no, row.size());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(name + ": empty file");
  return rows;
}

InteractionSet ascii_matrices_to_set(const std::vector<std::vector<int>>& train,
                                     const std::vector<std::vector<int>>& test,
                                     double threshold) {
  if (train.empty()) throw ParseError("train matrix is empty");
  const std::size_t users = train.size();
  const std::size_t items = train.front().size();
  if (!test.empty() && (test.size() != users || test.front().size() != items))
    throw ParseError("dimension mismatch: train is " + std::to_string(users) + "x" +
                     std::to_string(items) + ", test is " + std::to_string(test.size()) + "x" +
                     std::to_string(test.front().size()));
  auto collect = [&](const std::vector<std::vector<int>>& m) {
    std::vector<Rating> out;
    for (std::size_t u = 0; u < m.size(); ++u)
      for (std::size_t i = 0; i < m[u].size(); ++i)
        if (m[u][i] > 0)
          out.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i),
                         static_cast<double>(m[u][i]), binarize(m[u][i], threshold)});
    return out;
  };
  return build_set(users, items, threshold, collect(train), collect(test));
}

InteractionSet load_ascii_matrix_dataset(const std::filesystem::path& train_path,
                                         const std::filesystem::path& test_path,
                                         double threshold) {
  auto train_in = open_or_throw(train_path);
  const auto train = parse_ascii_matrix(train_in, train_path.filename().string());
  std::vector<std::vector<int>> test;
  if (!test_path.empty()) {
    auto test_in = open_or_throw(test_path);
    test = parse_ascii_matrix(test_in, test_path.filename().string());
  }
  return ascii_matrices_to_set(train, test, threshold);
}

void write_ascii_matrix(std::ostream& out, std::size_t num_users, std::size_t num_items,
                        const std::vector<Rating>& ratings) {
  std::vector<int> cells(num_users * num_items, 0);
  for (const auto& r : ratings)
    cells[static_cast<std::size_t>(r.user) * num_items + r.item] =
        static_cast<int>(std::lround(r.value));
  for (std::size_t u = 0; u < num_users; ++u) {
    for (std::size_t i = 0; i < num_items; ++i) {
      if (i > 0) out << ' ';
      out << cells[u * num_items + i];
    }
    out << '\n';
  }
}

std::vector<Rating> parse_triples(std::istream& in, const std::string& name, double threshold,
                                  bool one_based) {
  std::vector<Rating> out;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string tok[3];
    long long v[3] = {0, 0, 0};
    for (int k = 0; k < 3; ++k) {
      if (!(ls >> tok[k]) || !parse_int(tok[k], v[k]))
        throw ParseError(name + ": expected 'user item rating'", line_no, k + 1);
    }
    std::string extra;
    if (ls >> extra) throw ParseError(name + ": trailing token '" + extra + "'", line_no, 4);
    const long long base = one_based ? 1 : 0;
    if (v[0] < base || v[1] < base)
      throw ParseError(name + ": index below " + std::to_string(base), line_no);
    if (v[2] <= 0) throw ParseError(name + ": rating must be positive", line_no, 3);
    const auto user = static_cast<std::uint32_t>(v[0] - base);
    const auto item = static_cast<std::uint32_t>(v[1] - base);
    auto [it, inserted] = seen.emplace(std::make_pair(user, item), line_no);
    if (!inserted)
      throw ParseError(name + ": duplicate pair (" + tok[0] + ", " + tok[1] +
                           ") first seen on line " + std::to_string(it->second),
                       line_no);
    out.push_back({user, item, static_cast<double>(v[2]), binarize(static_cast<double>(v[2]), threshold)});
  }
  return out;
}

InteractionSet load_triple_dataset(const std::filesystem::path& train_path, double threshold,
                                   const TripleOptions& options) {
  return load_triple_dataset(train_path, {}, threshold, options);
}

InteractionSet load_triple_dataset(const std::filesystem::path& train_path,
                                   const std::filesystem::path& test_path, double threshold,
                                   const TripleOptions& options) {
  auto in = open_or_throw(train_path);
  auto train = parse_triples(in, train_path.filename().string(), threshold, options.one_based);
  std::vector<Rating> test;
  if (!test_path.empty()) {
    auto tin = open_or_throw(test_path);
    test = parse_triples(tin, test_path.filename().string(), threshold, options.one_based);
  }
  std::size_t users = options.num_users;
  std::size_t items = options.num_items;
  for (const auto* split : {&train, &test}) {
    for (const auto& r : *split) {
      if (options.num_users == 0) users = std::max<std::size_t>(users, r.user + 1);
      if (options.num_items == 0) items = std::max<std::size_t>(items, r.item + 1);
      if (r.user >= users || r.item >= items)
        throw ParseError("pair (" + std::to_string(r.user) + ", " + std::to_string(r.item) +
                         ") outside the declared dimensions");
    }
  }
  auto set = build_set(users, items, threshold, std::move(train), std::move(test));
  set.validate();
  return set;
}

SyntheticWorld generate_synthetic_world(const WorldConfig& config) {
  if (config.num_users < 1 || config.num_items < 1)
    throw std::invalid_argument("synthetic world needs at least one user and one item");
  if (config.latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (!(config.propensity_floor >= 0.0 && config.propensity_floor < 1.0))
    throw std::invalid_argument("propensity_floor must lie in [0, 1)");

  SyntheticWorld w;
  w.num_users = config.num_users;
  w.num_items = config.num_items;
  w.latent_dim = config.latent_dim;
  w.threshold = config.threshold;
  w.generator_seed = config.seed;
  w.propensity_floor = config.propensity_floor;

  Rng rng(config.seed, 0);
  const std::size_t k = config.latent_dim;
  w.user_factors.resize(w.num_users * k);
  w.item_factors.resize(w.num_items * k);
  for (auto& x : w.user_factors) x = rng.normal();
  for (auto& x : w.item_factors) x = rng.normal();

  const std::size_t n = w.num_pairs();
  std::vector<double> score(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (std::size_t u = 0; u < w.num_users; ++u) {
    for (std::size_t i = 0; i < w.num_items; ++i) {
      double dot = 0.0;
      for (std::size_t d = 0; d < k; ++d) dot += w.user_factors[u * k + d] * w.item_factors[i * k + d];
      score[u * w.num_items + i] = dot * scale + config.rating_noise * rng.normal();
    }
  }
  // Standardize over D so the rating histogram does not depend on k.
  const double mean = std::accumulate(score.begin(), score.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double s : score) var += (s - mean) * (s - mean);
  const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n)) : 1.0;

  w.true_rating.resize(n);
  w.true_label.resize(n);
  w.true_propensity.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double z = sd > 0.0 ? (score[p] - mean) / sd : 0.0;
    const double r = std::clamp(std::round(3.0 + 1.2 * z), 1.0, 5.0);
    w.true_rating[p] = r;
    w.true_label[p] = binarize(r, config.threshold);
    double prop = 1.0 / (1.0 + std::exp(-config.propensity_slope * (r - config.propensity_offset)));
    if (config.propensity_floor > 0.0) prop = std::max(prop, config.propensity_floor);
    w.true_propensity[p] = std::clamp(prop, std::numeric_limits<double>::min(), 1.0);
  }
  return w;
}

std::vector<std::uint8_t> sample_indicators(std::span<const double> propensity,
                                            std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, 0x9e3779b97f4a7c15ULL ^ stream);
  std::vector<std::uint8_t> o(propensity.size());
  for (std::size_t p = 0; p < propensity.size(); ++p) o[p] = rng.bernoulli(propensity[p]) ? 1 : 0;
  return o;
}

std::vector<std::uint8_t> sample_indicators(const SyntheticWorld& world, std::uint64_t stream) {
  return sample_indicators(world.true_propensity, world.generator_seed, stream);
}

InteractionSet observe_world(const SyntheticWorld& world, std::span<const std::uint8_t> indicators,
                             std::size_t mar_per_user, std::uint64_t stream) {
  if (indicators.size() != world.num_pairs())
    throw std::invalid_argument("indicator vector does not span D");
  std::vector<Rating> observed;
  std::vector<Rating> test;
  Rng rng(world.generator_seed, 0xa5a5a5a5ULL ^ stream);
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t u = 0; u < world.num_users; ++u) {
    candidates.clear();
    for (std::uint32_t i = 0; i < world.num_items; ++i) {
      const std::size_t p = static_cast<std::size_t>(u) * world.num_items + i;
      if (indicators[p])
        observed.push_back({u, i, world.true_rating[p], world.true_label[p]});
      else
        candidates.push_back(i);
    }
    rng.shuffle(std::span<std::uint32_t>(candidates));
    const std::size_t take = std::min(mar_per_user, candidates.size());
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t p = static_cast<std::size_t>(u) * world.num_items + candidates[k];
      test.push_back({u, candidates[k], world.true_rating[p], world.true_label[p]});
    }
  }
  return build_set(world.num_users, world.num_items, world.threshold, std::move(observed),
                   std::move(test));
}

}  // namespace sdr
