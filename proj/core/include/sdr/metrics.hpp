#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdr/data.hpp"

namespace sdr {

struct MetricReport {
  double mse = 0.0;
  double auc = 0.5;
  std::map<int, double> ndcg_at;  // k -> NDCG@k
  std::size_t num_test_points = 0;
};

// Mean of (prediction - label)^2. Throws std::invalid_argument on length
// mismatch or empty input.
double mse(std::span<const double> predictions, std::span<const int> labels);

// Probability that a random positive outranks a random negative, ties
// counted one half. Returns 0.5 when either class is empty.
double auc(std::span<const double> scores, std::span<const int> labels);

// Mean over users of DCG@k / IDCG@k with binary gain and log2(rank + 1)
// discount. `group` assigns each point to a user; users without a positive
// are skipped. Ties in score keep input order. Returns 0 when no user
// qualifies.
double ndcg_at_k(std::span<const double> scores, std::span<const int> relevance,
                 std::span<const std::uint32_t> group, int k);

// Scores are sigmoid outputs; labels the binarized test ratings.
MetricReport evaluate_scores(std::span<const double> scores, std::span<const Rating> test,
                             std::span<const int> ks = std::span<const int>());

std::string to_json(const MetricReport& report);

}  // namespace sdr
