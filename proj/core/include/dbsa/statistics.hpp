#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dbsa/matrix.hpp"

namespace dbsa {

enum class DistanceMetric { cosine_distance, l1, l2 };

enum class EffectMode { embedding_energy, sim1d_mean, sim1d_emd, sim1d_energy };

std::string_view to_string(DistanceMetric metric) noexcept;
std::string_view to_string(EffectMode mode) noexcept;
/// Accepts the canonical names plus the short aliases "cosine", "mean", "emd", "energy".
DistanceMetric parse_metric(std::string_view name);
EffectMode parse_mode(std::string_view name);

bool is_sim1d(EffectMode mode) noexcept;

/// Default permutation count for a mode: 500 for embedding energy, 1000 for
/// the one-dimensional similarity modes.
std::size_t default_permutations(EffectMode mode) noexcept;

/// Distance between two equal-length vectors. Cosine distance of a zero
/// vector throws DegenerateVectorError (row index 0).
double distance(std::span<const double> u, std::span<const double> v, DistanceMetric metric);

/// n x m matrix of distances between rows of x and rows of y.
Matrix pairwise_distances(const Matrix& x, const Matrix& y, DistanceMetric metric);

/// Energy distance 2A - B - C with A, B, C the mean cross, within-x and
/// within-y distances. Diagonal self-pairs are included in B and C.
double energy_distance(const Matrix& x, const Matrix& y, DistanceMetric metric);

struct PermutationOptions {
  std::size_t permutations = 500;
  std::uint64_t seed = 0;
  /// (count + 1) / (permutations + 1) instead of count / permutations.
  bool add_one_smoothing = false;
};

struct TestResult {
  double effect_size = 0.0;
  double p_value = 1.0;
  EffectMode mode = EffectMode::embedding_energy;
  DistanceMetric metric = DistanceMetric::cosine_distance;
  std::size_t permutations = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const TestResult&, const TestResult&) = default;
};

/// Permutation test of the energy distance between the row sets x and y.
///
/// Rows of each input are put into lexicographic order before pooling so the
/// result does not depend on input row order. Permutation `k` shuffles the
/// pooled rows with a stream seeded by derive_seed(seed, k), splits at
/// x.rows() and recomputes E. The p-value is the fraction of permuted values
/// that are >= the observed one; values within 1e-10 of the mean pooled
/// distance count as ties.
TestResult permutation_test_energy(const Matrix& x, const Matrix& y, DistanceMetric metric,
                                   const PermutationOptions& options);

/// Pairwise similarities within x (p0, unordered pairs, no self pairs) and
/// between x and y (p1, all n*m pairs). Similarity is 1 - d for cosine and
/// -d for l1/l2.
struct SimilarityDistributions {
  std::vector<double> p0;
  std::vector<double> p1;
};

SimilarityDistributions build_similarity_distributions(const Matrix& x, const Matrix& y,
                                                       DistanceMetric metric);

double mean_difference(std::span<const double> a, std::span<const double> b);
/// One-dimensional Earth Mover's (Wasserstein-1) distance between samples.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);
/// One-dimensional energy distance, sqrt(2 * integral of (F_a - F_b)^2).
double energy_distance_1d(std::span<const double> a, std::span<const double> b);

/// Two-sample permutation test on similarity samples. `mode` must be one of
/// the sim1d modes. Returns |statistic| as the effect size.
TestResult sim1d_test(std::span<const double> p0, std::span<const double> p1, EffectMode mode,
                      const PermutationOptions& options);

/// Spearman rank correlation with average ranks for ties.
double spearman_rank(std::span<const double> x, std::span<const double> y);

/// Average (fractional) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

/// Upper tail of the chi-square distribution with 2k degrees of freedom.
double chi_square_sf_even(double x, std::size_t k);

/// Fisher's method for combining independent p-values.
double fisher_combine(std::span<const double> p_values);

}  // namespace dbsa
