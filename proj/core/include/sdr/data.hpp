#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdr {

// Raised for malformed input files. `line` and `column` are 1-based; zero
// means the location does not apply.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

inline constexpr double kDefaultThreshold = 4.0;

inline int binarize(double rating, double threshold) { return rating >= threshold ? 1 : 0; }

struct UserItem {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
};

struct Rating {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;
  int label = 0;
};

// Observed (MNAR) ratings over the user x item grid D plus an optional
// missing-at-random test split. Every vector over D uses user-major order:
// pair index = user * num_items + item.
struct InteractionSet {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  double threshold = kDefaultThreshold;
  std::vector<Rating> observed;  // sorted by pair index
  std::vector<Rating> mar_test;  // sorted by pair index

  std::size_t num_pairs() const { return num_users * num_items; }
  std::size_t pair_index(std::uint32_t user, std::uint32_t item) const {
    return static_cast<std::size_t>(user) * num_items + item;
  }
  std::size_t pair_index(const Rating& r) const { return pair_index(r.user, r.item); }

  // o_{u,i} over D.
  std::vector<std::uint8_t> indicator() const;

  // Checks index ranges, label/threshold agreement, ordering and duplicates.
  // mar_test is required to be disjoint from observed only when
  // `require_disjoint` is set; file loaders keep both matrices as written.
  void validate(bool require_disjoint = false) const;
};

// Re-derives every label from `threshold`.
InteractionSet rebinarize(const InteractionSet& set, double threshold);

// Whitespace separated integer matrix, one row per user, 0 = missing.
std::vector<std::vector<int>> parse_ascii_matrix(std::istream& in, const std::string& name);

InteractionSet load_ascii_matrix_dataset(const std::filesystem::path& train_path,
                                         const std::filesystem::path& test_path,
                                         double threshold = kDefaultThreshold);
InteractionSet ascii_matrices_to_set(const std::vector<std::vector<int>>& train,
                                     const std::vector<std::vector<int>>& test, double threshold);

void write_ascii_matrix(std::ostream& out, std::size_t num_users, std::size_t num_items,
                        const std::vector<Rating>& ratings);

struct TripleOptions {
  bool one_based = true;
  // Zero means "infer from the largest index seen".
  std::size_t num_users = 0;
  std::size_t num_items = 0;
};

// "user item rating" per line. Blank lines and lines starting with '#' are
// skipped.
std::vector<Rating> parse_triples(std::istream& in, const std::string& name, double threshold,
                                  bool one_based);

InteractionSet load_triple_dataset(const std::filesystem::path& train_path,
                                   double threshold = kDefaultThreshold,
                                   const TripleOptions& options = {});
InteractionSet load_triple_dataset(const std::filesystem::path& train_path,
                                   const std::filesystem::path& test_path, double threshold,
                                   const TripleOptions& options = {});

// ---------------------------------------------------------------------------
// Synthetic MNAR worlds with known ground truth.

struct WorldConfig {
  std::uint64_t seed = 7;
  std::size_t num_users = 30;
  std::size_t num_items = 30;
  std::size_t latent_dim = 4;
  // Propensity = sigmoid(slope * (rating - offset)), floor-clipped.
  double propensity_slope = 1.0;
  double propensity_offset = 4.5;
  double propensity_floor = 0.0;
  double rating_noise = 0.3;
  double threshold = kDefaultThreshold;
};

struct SyntheticWorld {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t latent_dim = 0;
  double threshold = kDefaultThreshold;
  std::uint64_t generator_seed = 0;
  double propensity_floor = 0.0;
  std::vector<double> true_rating;      // r_{u,i}(1) on the 1..5 scale, over D
  std::vector<int> true_label;          // binarized true_rating
  std::vector<double> true_propensity;  // p_{u,i} in (0, 1]
  std::vector<double> user_factors;     // num_users x latent_dim
  std::vector<double> item_factors;     // num_items x latent_dim

  std::size_t num_pairs() const { return num_users * num_items; }
};

SyntheticWorld generate_synthetic_world(const WorldConfig& config);

// o_{u,i} ~ Bernoulli(p_{u,i}) independently; stream ids give independent,
// reproducible draws.
std::vector<std::uint8_t> sample_indicators(const SyntheticWorld& world, std::uint64_t stream);
std::vector<std::uint8_t> sample_indicators(std::span<const double> propensity,
                                            std::uint64_t seed, std::uint64_t stream);

// Training view of a world: observed ratings where o = 1 and a MAR test split
// of `mar_per_user` uniformly drawn unobserved items per user.
InteractionSet observe_world(const SyntheticWorld& world, std::span<const std::uint8_t> indicators,
                             std::size_t mar_per_user, std::uint64_t stream);

}  // namespace sdr
