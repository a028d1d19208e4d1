#include "dbsa/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dbsa/error.hpp"
#include "dbsa/random.hpp"

namespace dbsa {

namespace {

constexpr double kTieTolerance = 1e-10;

void check_same_dimension(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw ConsistencyError("dimension mismatch: " + std::to_string(x.cols()) + " vs " +
                           std::to_string(y.cols()));
  }
}

void check_nonzero_rows(const Matrix& m, const char* name) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) {
      throw DegenerateVectorError(name, r);
    }
  }
}

// Lexicographic row order; ties keep their original relative order.
std::vector<std::size_t> canonical_row_order(const Matrix& m) {
  std::vector<std::size_t> order(m.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&m](std::size_t a, std::size_t b) {
    const auto ra = m.row(a);
    const auto rb = m.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  return order;
}

// Energy distance of the split (idx[0..n), idx[n..)) read from the pooled
// distance matrix.
double split_energy(const Matrix& d, std::span<const std::size_t> idx, std::size_t n) {
  const std::size_t total = idx.size();
  const std::size_t m = total - n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t ia = idx[a];
    for (std::size_t b = 0; b < n; ++b) sxx += d(ia, idx[b]);
    for (std::size_t b = n; b < total; ++b) sxy += d(ia, idx[b]);
  }
  for (std::size_t a = n; a < total; ++a) {
    const std::size_t ia = idx[a];
    for (std::size_t b = n; b < total; ++b) syy += d(ia, idx[b]);
  }
  const auto dn = static_cast<double>(n);
  const auto dm = static_cast<double>(m);
  return 2.0 * (sxy / (dn * dm)) - sxx / (dn * dn) - syy / (dm * dm);
}

double p_value_from_count(std::size_t count, std::size_t permutations, bool add_one) {
  if (add_one) {
    return static_cast<double>(count + 1) / static_cast<double>(permutations + 1);
  }
  return static_cast<double>(count) / static_cast<double>(permutations);
}

// Evaluates F_a - F_b at each merged breakpoint and integrates `f` of it.
template <typename F>
double cdf_integral(std::span<const double> a, std::span<const double> b, F&& f) {
  // a and b must be sorted.
  std::vector<double> all;
  all.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(all));
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    const double x = all[i];
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    const double diff = static_cast<double>(ia) / na - static_cast<double>(ib) / nb;
    acc += f(diff) * (all[i + 1] - x);
  }
  return acc;
}

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double emd_sorted(std::span<const double> a, std::span<const double> b) {
  return cdf_integral(a, b, [](double d) { return std::abs(d); });
}

double energy_sorted(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(2.0 * cdf_integral(a, b, [](double d) { return d * d; }));
}

}  // namespace

std::string_view to_string(DistanceMetric metric) noexcept {
  switch (metric) {
    case DistanceMetric::cosine_distance:
      return "cosine_distance";
    case DistanceMetric::l1:
      return "l1";
    case DistanceMetric::l2:
      return "l2";
  }
  return "unknown";
}

std::string_view to_string(EffectMode mode) noexcept {
  switch (mode) {
    case EffectMode::embedding_energy:
      return "embedding_energy";
    case EffectMode::sim1d_mean:
      return "sim1d_mean";
    case EffectMode::sim1d_emd:
      return "sim1d_emd";
    case EffectMode::sim1d_energy:
      return "sim1d_energy";
  }
  return "unknown";
}

DistanceMetric parse_metric(std::string_view name) {
  if (name == "cosine_distance" || name == "cosine") return DistanceMetric::cosine_distance;
  if (name == "l1" || name == "L1") return DistanceMetric::l1;
  if (name == "l2" || name == "L2") return DistanceMetric::l2;
  throw ArgumentError("unknown distance metric '" + std::string(name) + "'");
}

EffectMode parse_mode(std::string_view name) {
  if (name == "embedding_energy") return EffectMode::embedding_energy;
  if (name == "sim1d_mean" || name == "mean") return EffectMode::sim1d_mean;
  if (name == "sim1d_emd" || name == "emd" || name == "EMD") return EffectMode::sim1d_emd;
  if (name == "sim1d_energy" || name == "energy") return EffectMode::sim1d_energy;
  throw ArgumentError("unknown effect mode '" + std::string(name) + "'");
}

bool is_sim1d(EffectMode mode) noexcept { return mode != EffectMode::embedding_energy; }

std::size_t default_permutations(EffectMode mode) noexcept { return is_sim1d(mode) ? 1000 : 500; }

double distance(std::span<const double> u, std::span<const double> v, DistanceMetric metric) {
  if (u.size() != v.size()) {
    throw ConsistencyError("dimension mismatch: " + std::to_string(u.size()) + " vs " +
                           std::to_string(v.size()));
  }
  switch (metric) {
    case DistanceMetric::l1: {
      double s = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(u[i] - v[i]);
      return s;
    }
    case DistanceMetric::l2: {
      double s = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        s += d * d;
      }
      return std::sqrt(s);
    }
    case DistanceMetric::cosine_distance: {
      double dot = 0.0;
      double nu = 0.0;
      double nv = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
      }
      if (nu == 0.0 || nv == 0.0) throw DegenerateVectorError("vector pair", 0);
      // sqrt(nu * nv) is exact for u == v, which keeps self-distance at 0.
      const double d = 1.0 - dot / std::sqrt(nu * nv);
      return std::clamp(d, 0.0, 2.0);
    }
  }
  return 0.0;
}

Matrix pairwise_distances(const Matrix& x, const Matrix& y, DistanceMetric metric) {
  check_same_dimension(x, y);
  if (metric == DistanceMetric::cosine_distance) {
    check_nonzero_rows(x, "X");
    check_nonzero_rows(y, "Y");
  }
  Matrix out(x.rows(), y.rows());
  for (std::size_t a = 0; a < x.rows(); ++a) {
    for (std::size_t b = 0; b < y.rows(); ++b) out(a, b) = distance(x.row(a), y.row(b), metric);
  }
  return out;
}

double energy_distance(const Matrix& x, const Matrix& y, DistanceMetric metric) {
  if (x.empty() || y.empty()) throw ArgumentError("energy distance needs nonempty sample sets");
  const Matrix dxy = pairwise_distances(x, y, metric);
  const Matrix dxx = pairwise_distances(x, x, metric);
  const Matrix dyy = pairwise_distances(y, y, metric);
  const auto sum = [](const Matrix& m) {
    return std::accumulate(m.data().begin(), m.data().end(), 0.0);
  };
  const auto n = static_cast<double>(x.rows());
  const auto m = static_cast<double>(y.rows());
  return 2.0 * (sum(dxy) / (n * m)) - sum(dxx) / (n * n) - sum(dyy) / (m * m);
}

TestResult permutation_test_energy(const Matrix& x, const Matrix& y, DistanceMetric metric,
                                   const PermutationOptions& options) {
  if (options.permutations < 1) throw ArgumentError("permutations must be >= 1");
  if (x.empty() || y.empty()) throw ArgumentError("permutation test needs nonempty sample sets");
  check_same_dimension(x, y);
  if (metric == DistanceMetric::cosine_distance) {
    check_nonzero_rows(x, "X");
    check_nonzero_rows(y, "Y");
  }

  const auto x_order = canonical_row_order(x);
  const auto y_order = canonical_row_order(y);
  const Matrix pooled = Matrix::vstack(x.select_rows(x_order), y.select_rows(y_order));
  const std::size_t total = pooled.rows();
  const std::size_t n = x.rows();

  Matrix d(total, total, 0.0);
  double abs_sum = 0.0;
  for (std::size_t a = 0; a < total; ++a) {
    for (std::size_t b = a + 1; b < total; ++b) {
      const double v = distance(pooled.row(a), pooled.row(b), metric);
      d(a, b) = v;
      d(b, a) = v;
      abs_sum += 2.0 * std::abs(v);
    }
  }
  const double scale = total > 1 ? abs_sum / static_cast<double>(total * (total - 1)) : 0.0;
  const double tolerance = kTieTolerance * scale;

  std::vector<std::size_t> identity(total);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  const double observed = split_energy(d, identity, n);

  std::size_t at_least = 0;
  std::vector<std::size_t> idx(total);
  for (std::size_t k = 0; k < options.permutations; ++k) {
    std::copy(identity.begin(), identity.end(), idx.begin());
    SplitMix64 rng(derive_seed(options.seed, k));
    shuffle(std::span<std::size_t>(idx), rng);
    if (split_energy(d, idx, n) >= observed - tolerance) ++at_least;
  }

  TestResult result;
  result.effect_size = observed;
  result.p_value = p_value_from_count(at_least, options.permutations, options.add_one_smoothing);
  result.mode = EffectMode::embedding_energy;
  result.metric = metric;
  result.permutations = options.permutations;
  result.seed = options.seed;
  return result;
}

SimilarityDistributions build_similarity_distributions(const Matrix& x, const Matrix& y,
                                                       DistanceMetric metric) {
  check_same_dimension(x, y);
  if (metric == DistanceMetric::cosine_distance) {
    check_nonzero_rows(x, "X");
    check_nonzero_rows(y, "Y");
  }
  const auto similarity = [metric](double d) {
    return metric == DistanceMetric::cosine_distance ? 1.0 - d : -d;
  };
  SimilarityDistributions out;
  out.p0.reserve(x.rows() * (x.rows() - (x.rows() > 0 ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
      out.p0.push_back(similarity(distance(x.row(i), x.row(j), metric)));
    }
  }
  out.p1.reserve(x.rows() * y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < y.rows(); ++j) {
      out.p1.push_back(similarity(distance(x.row(i), y.row(j), metric)));
    }
  }
  return out;
}

double mean_difference(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("mean difference needs nonempty samples");
  return std::abs(mean_of(a) - mean_of(b));
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("Wasserstein distance needs nonempty samples");
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  return emd_sorted(sa, sb);
}

double energy_distance_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("energy distance needs nonempty samples");
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  return energy_sorted(sa, sb);
}

TestResult sim1d_test(std::span<const double> p0, std::span<const double> p1, EffectMode mode,
                      const PermutationOptions& options) {
  if (!is_sim1d(mode)) throw ArgumentError("sim1d_test requires a sim1d mode");
  if (p0.empty() || p1.empty()) throw ArgumentError("sim1d_test needs nonempty p0 and p1");
  if (options.permutations < 1) throw ArgumentError("permutations must be >= 1");

  std::vector<double> pool = sorted_copy(p0);
  const std::size_t n0 = pool.size();
  {
    const auto s1 = sorted_copy(p1);
    pool.insert(pool.end(), s1.begin(), s1.end());
  }

  // Both halves sorted on entry.
  const auto statistic = [mode](std::span<const double> a, std::span<const double> b) {
    switch (mode) {
      case EffectMode::sim1d_mean:
        return std::abs(mean_of(a) - mean_of(b));
      case EffectMode::sim1d_emd:
        return emd_sorted(a, b);
      default:
        return energy_sorted(a, b);
    }
  };
  const std::span<const double> whole(pool);
  const double observed = statistic(whole.first(n0), whole.subspan(n0));

  double max_abs = 0.0;
  for (double v : pool) max_abs = std::max(max_abs, std::abs(v));
  const double tolerance = kTieTolerance * max_abs;

  std::size_t at_least = 0;
  std::vector<double> work(pool.size());
  for (std::size_t k = 0; k < options.permutations; ++k) {
    std::copy(pool.begin(), pool.end(), work.begin());
    SplitMix64 rng(derive_seed(options.seed, k));
    shuffle(std::span<double>(work), rng);
    const auto mid = work.begin() + static_cast<std::ptrdiff_t>(n0);
    if (mode != EffectMode::sim1d_mean) {
      std::sort(work.begin(), mid);
      std::sort(mid, work.end());
    }
    const std::span<const double> w(work);
    if (statistic(w.first(n0), w.subspan(n0)) >= observed - tolerance) ++at_least;
  }

  TestResult result;
  result.effect_size = observed;
  result.p_value = p_value_from_count(at_least, options.permutations, options.add_one_smoothing);
  result.mode = mode;
  result.permutations = options.permutations;
  result.seed = options.seed;
  return result;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("spearman_rank needs equal-length inputs");
  if (x.size() < 2) throw ArgumentError("spearman_rank needs at least 2 observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean_of(rx);
  const double my = mean_of(ry);
  double num = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    num += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx == 0.0 || vy == 0.0) {
    throw UndefinedCorrelationError("rank correlation is undefined for a constant input");
  }
  return std::clamp(num / std::sqrt(vx * vy), -1.0, 1.0);
}

double chi_square_sf_even(double x, std::size_t k) {
  if (k == 0) throw ArgumentError("chi-square needs at least 2 degrees of freedom");
  if (x <= 0.0) return 1.0;
  const double half = x / 2.0;
  const double log_half = std::log(half);
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const auto dj = static_cast<double>(j);
    sum += std::exp(-half + dj * log_half - std::lgamma(dj + 1.0));
  }
  return std::min(sum, 1.0);
}

double fisher_combine(std::span<const double> p_values) {
  if (p_values.empty()) return 1.0;
  double stat = 0.0;
  for (double p : p_values) {
    if (p <= 0.0) return 0.0;
    stat += -2.0 * std::log(std::min(p, 1.0));
  }
  return chi_square_sf_even(stat, p_values.size());
}

}  // namespace dbsa
