#pragma once

// Monte Carlo reductions, log-log rate fits and the two-sample
// Kolmogorov-Smirnov statistic. All reductions are deterministic given the
// input order.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdelab/errors.hpp"

namespace spdelab {

/// Pairwise (cascade) summation; the split points depend only on the length.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean(std::span<const double> v) {
  detail::require(!v.empty(), "mean: empty sample");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> v) {
  detail::require(v.size() >= 2, "variance: need at least two values");
  const double mu = mean(v);
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mu) * (v[i] - mu);
  return pairwise_sum(sq) / static_cast<double>(v.size() - 1);
}

/// A labelled set of finite Monte Carlo outputs.
struct SampleSet {
  std::vector<double> values;
  std::string label;
  std::string provenance;

  explicit SampleSet(std::vector<double> v, std::string lbl = {}, std::string prov = {})
      : values(std::move(v)), label(std::move(lbl)), provenance(std::move(prov)) {
    detail::require(values.size() >= 2, "SampleSet: need at least two values");
    for (double x : values) detail::require(std::isfinite(x), "SampleSet: non-finite value");
  }
};

struct KsResult {
  double statistic = 0.0;  // D = sup |F_a - F_b|
  double threshold = 0.0;  // c(alpha) sqrt((n_a + n_b)/(n_a n_b))
};

/// c(alpha) of the asymptotic two-sample test, sqrt(-ln(alpha/2)/2).
inline double ks_coefficient(double alpha) { return std::sqrt(-0.5 * std::log(alpha / 2.0)); }

inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha = 0.05) {
  detail::require(!a.empty() && !b.empty(), "ks_two_sample: both samples must be nonempty");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {d, ks_coefficient(alpha) * std::sqrt((na + nb) / (na * nb))};
}

inline KsResult ks_two_sample(const SampleSet& a, const SampleSet& b, double alpha = 0.05) {
  return ks_two_sample(std::span<const double>(a.values), std::span<const double>(b.values), alpha);
}

struct MomentEstimate {
  int order = 1;
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Raw moments E[x^k] with batch-means standard errors (16 contiguous batches).
inline std::vector<MomentEstimate> moment_summary(std::span<const double> v, std::vector<int> orders = {1, 2, 4}) {
  detail::require(!v.empty(), "moment_summary: empty sample");
  const std::size_t n = v.size();
  const std::size_t batches = std::min<std::size_t>(16, n);
  std::vector<MomentEstimate> out;
  std::vector<double> powered(n);
  for (int k : orders) {
    for (std::size_t i = 0; i < n; ++i) powered[i] = std::pow(v[i], k);
    MomentEstimate est;
    est.order = k;
    est.value = mean(powered);
    if (batches >= 2) {
      std::vector<double> bm(batches);
      for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t lo = n * b / batches, hi = n * (b + 1) / batches;
        bm[b] = mean(std::span<const double>(powered).subspan(lo, hi - lo));
      }
      est.stderr_ = std::sqrt(variance(bm) / static_cast<double>(batches));
    }
    out.push_back(est);
  }
  return out;
}

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;      // RMS residual in log2 units
  double slope_stderr = 0.0;  // OLS standard error of the slope
  std::vector<double> point_stderr;  // per-point standard errors in log2 units
};

/// Least-squares fit of log2(ys) = slope log2(xs) + intercept.
inline RateFit fit_rate(std::span<const double> xs, std::span<const double> ys,
                        std::span<const double> ys_stderr = {}) {
  detail::require(xs.size() == ys.size() && xs.size() >= 2, "fit_rate: need >= 2 matching points");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    detail::require(xs[i] > 0.0, "fit_rate: abscissae must be positive");
    detail::require(ys[i] > 0.0 && std::isfinite(ys[i]), "fit_rate: error values must be positive");
    if (i > 0) detail::require(xs[i] > xs[i - 1], "fit_rate: abscissae must be strictly increasing");
  }
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log2(xs[i]);
    ly[i] = std::log2(ys[i]);
  }
  const double mx = mean(lx), my = mean(ly);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / static_cast<double>(n));
  fit.slope_stderr = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
  if (!ys_stderr.empty()) {
    detail::require(ys_stderr.size() == n, "fit_rate: stderr count mismatch");
    for (std::size_t i = 0; i < n; ++i) fit.point_stderr.push_back(ys_stderr[i] / (ys[i] * std::log(2.0)));
  }
  return fit;
}

/// One value per line, full round-trip precision.
inline void write_sample_file(const std::string& path, std::span<const double> v) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open sample file for writing: " + path);
  out << std::setprecision(17);
  for (double x : v) out << x << '\n';
}

inline std::vector<double> read_sample_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sample file: " + path);
  std::vector<double> v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    v.push_back(std::stod(line));
  }
  return v;
}

}  // namespace spdelab
