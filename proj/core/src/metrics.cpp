#include "sdr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "sdr/numeric.hpp"

namespace sdr {

double mse(std::span<const double> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("mse: predictions and labels differ in length");
  if (predictions.empty()) throw std::invalid_argument("mse: empty input");
  CompensatedSum s;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double d = predictions[k] - labels[k];
    s.add(d * d);
  }
  return s.value() / static_cast<double>(predictions.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney: sum of positive ranks with midranks for ties.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi < order.size() && scores[order[hi]] == scores[order[lo]]) ++hi;
    const double midrank = 0.5 * static_cast<double>(lo + 1 + hi);
    for (std::size_t t = lo; t < hi; ++t)
      if (labels[order[t]] == 1) {
        rank_sum += midrank;
        ++positives;
      }
    lo = hi;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) return 0.5;
  const double np = static_cast<double>(positives);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

double ndcg_at_k(std::span<const double> scores, std::span<const int> relevance,
                 std::span<const std::uint32_t> group, int k) {
  if (scores.size() != relevance.size() || scores.size() != group.size())
    throw std::invalid_argument("ndcg: inputs differ in length");
  if (k < 1) throw std::invalid_argument("ndcg: k must be >= 1");
  std::map<std::uint32_t, std::vector<std::size_t>> by_user;
  for (std::size_t t = 0; t < group.size(); ++t) by_user[group[t]].push_back(t);

  CompensatedSum total;
  std::size_t users = 0;
  for (auto& [user, idx] : by_user) {
    std::size_t positives = 0;
    for (std::size_t t : idx) positives += relevance[t] > 0 ? 1 : 0;
    if (positives == 0) continue;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const std::size_t depth = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t r = 0; r < depth; ++r) {
      const double discount = 1.0 / std::log2(static_cast<double>(r) + 2.0);
      if (relevance[idx[r]] > 0) dcg += discount;
      if (r < positives) idcg += discount;
    }
    total.add(dcg / idcg);
    ++users;
  }
  return users == 0 ? 0.0 : total.value() / static_cast<double>(users);
}

MetricReport evaluate_scores(std::span<const double> scores, std::span<const Rating> test,
                             std::span<const int> ks) {
  if (scores.size() != test.size())
    throw std::invalid_argument("evaluate: one score per test point required");
  static constexpr int kDefaultKs[] = {5, 10};
  if (ks.empty()) ks = kDefaultKs;
  std::vector<int> labels(test.size());
  std::vector<std::uint32_t> users(test.size());
  for (std::size_t t = 0; t < test.size(); ++t) {
    labels[t] = test[t].label;
    users[t] = test[t].user;
  }
  MetricReport r;
  r.num_test_points = test.size();
  r.mse = mse(scores, labels);
  r.auc = auc(scores, labels);
  for (int k : ks) r.ndcg_at[k] = ndcg_at_k(scores, labels, users, k);
  return r;
}

std::string to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["mse"] = report.mse;
  j["auc"] = report.auc;
  for (const auto& [k, v] : report.ndcg_at) j["ndcg@" + std::to_string(k)] = v;
  j["num_test_points"] = report.num_test_points;
  return j.dump(2);
}

}  // namespace sdr
