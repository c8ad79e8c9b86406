#pragma once

// Q-Wiener noise with a diagonal covariance in the sine basis. Brownian
// increments come from a counter-based generator keyed by
// (seed, stream, role, mode, step), so any increment can be produced on
// demand, independently of evaluation order and worker count.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "spdelab/spectral_core.hpp"

namespace spdelab {

// Philox4x32-10 (Salmon et al., SC'11).
namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter round(const Counter& c, const Key& k) {
  constexpr std::uint64_t M0 = 0xD2511F53u;
  constexpr std::uint64_t M1 = 0xCD9E8D57u;
  const std::uint64_t p0 = M0 * c[0];
  const std::uint64_t p1 = M1 * c[2];
  return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
          static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
}

inline Counter generate(Counter c, Key k) {
  constexpr std::uint32_t W0 = 0x9E3779B9u;
  constexpr std::uint32_t W1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    c = round(c, k);
    k[0] += W0;
    k[1] += W1;
  }
  return c;
}

}  // namespace philox

/// Which Brownian family a stream of increments belongs to: the driving
/// noise W, an auxiliary process W~_l (l >= 1), or the single combined
/// auxiliary field used by the covariance-factored limit simulator.
struct NoiseRole {
  std::uint32_t code = 0;

  static constexpr NoiseRole driving() { return {0}; }
  static NoiseRole auxiliary(Index l) {
    detail::require(l >= 1 && l < 0x7FFFFFFF, "auxiliary role index must be >= 1");
    return {static_cast<std::uint32_t>(l)};
  }
  static constexpr NoiseRole auxiliary_combined() { return {0xFFFFFFFFu}; }

  friend bool operator==(NoiseRole, NoiseRole) = default;
};

/// Covariance eigenvalues q_i of the driving noise, i = 1..K_noise retained.
class QSpec {
 public:
  enum class Kind { exponential, polynomial, explicit_list };

  static QSpec exponential(double rate, Index noise_modes) {
    if (!(rate > 0.0)) throw InvalidSpec("QSpec: exponential rate must be > 0");
    QSpec q(Kind::exponential, noise_modes);
    q.rate_ = rate;
    q.fill();
    return q;
  }

  static QSpec polynomial(double rho, double scale, Index noise_modes) {
    if (!(rho > 0.0)) throw InvalidSpec("QSpec: polynomial exponent must be > 0");
    if (!(scale > 0.0)) throw InvalidSpec("QSpec: polynomial scale must be > 0");
    QSpec q(Kind::polynomial, noise_modes);
    q.rho_ = rho;
    q.scale_ = scale;
    q.fill();
    return q;
  }

  static QSpec explicit_list(std::vector<double> values) {
    QSpec q(Kind::explicit_list, static_cast<Index>(values.size()));
    q.list_ = std::move(values);
    q.fill();
    return q;
  }

  Kind kind() const { return kind_; }
  double rate() const { return rate_; }
  double rho() const { return rho_; }
  double scale() const { return scale_; }
  Index noise_modes() const { return noise_modes_; }
  const std::vector<double>& list() const { return list_; }

  /// q_i for 1-based i; explicit lists are zero past their end.
  double eigenvalue(Index i) const {
    switch (kind_) {
      case Kind::exponential:
        return std::exp(-rate_ * static_cast<double>(i));
      case Kind::polynomial:
        return scale_ * std::pow(static_cast<double>(i), -rho_);
      case Kind::explicit_list:
        return i <= static_cast<Index>(list_.size()) ? list_[static_cast<std::size_t>(i - 1)] : 0.0;
    }
    return 0.0;
  }

  /// sqrt(q_i), i = 1..K_noise (entry 0 is mode 1).
  const Vector& sqrt_q() const { return sqrt_q_; }

 private:
  QSpec(Kind kind, Index noise_modes) : kind_(kind), noise_modes_(noise_modes) {
    if (noise_modes < 1) throw InvalidSpec("QSpec: K_noise must be >= 1");
  }

  void fill() {
    sqrt_q_.resize(noise_modes_);
    for (Index i = 1; i <= noise_modes_; ++i) {
      const double q = eigenvalue(i);
      if (!(q > 0.0) || !std::isfinite(q))
        throw InvalidSpec("QSpec: q_" + std::to_string(i) + " must be positive and finite");
      sqrt_q_[i - 1] = std::sqrt(q);
    }
  }

  Kind kind_;
  Index noise_modes_;
  double rate_ = 0.0;
  double rho_ = 0.0;
  double scale_ = 0.0;
  std::vector<double> list_;
  Vector sqrt_q_;
};

/// Seeded Brownian increments on a uniform fine grid of m_fine steps over
/// [0, T]. Each increment is N(0, T/m_fine) rounded to the lattice
/// 2^-40 Z, so partial sums are exact in double precision and any
/// aggregation order yields identical coarse increments.
class NoisePath {
 public:
  static constexpr double kQuantum = 0x1p-40;

  NoisePath(std::uint64_t seed, std::uint64_t stream, Index m_fine, double T)
      : seed_(seed), stream_(stream), m_fine_(m_fine), T_(T) {
    detail::require(m_fine >= 1, "NoisePath: m_fine must be >= 1");
    detail::require(m_fine < (Index{1} << 33), "NoisePath: m_fine too large");
    detail::require(stream <= 0xFFFFFFFFu, "NoisePath: stream id must fit in 32 bits");
    detail::require(T > 0.0 && std::isfinite(T), "NoisePath: T must be positive");
    scale_ = std::sqrt(T / static_cast<double>(m_fine)) / kQuantum;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  Index m_fine() const { return m_fine_; }
  double horizon() const { return T_; }
  double fine_dt() const { return T_ / static_cast<double>(m_fine_); }

  /// Standard normal pair for fine steps (2p, 2p+1).
  std::pair<double, double> normal_pair(NoiseRole role, Index mode, Index pair) const {
    const philox::Counter ctr{static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(mode),
                              role.code, static_cast<std::uint32_t>(stream_)};
    const philox::Key key{static_cast<std::uint32_t>(seed_),
                          static_cast<std::uint32_t>(seed_ >> 32)};
    const auto r = philox::generate(ctr, key);
    const std::uint64_t a = (std::uint64_t{r[0]} << 32) | r[1];
    const std::uint64_t b = (std::uint64_t{r[2]} << 32) | r[3];
    const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1p-53;
    const double u2 = (static_cast<double>(b >> 11) + 0.5) * 0x1p-53;
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  /// Increment of the scalar Brownian motion (role, mode) over fine step n.
  double increment(NoiseRole role, Index mode, Index n) const {
    check_step_range(n, n + 1);
    const auto [z0, z1] = normal_pair(role, mode, n >> 1);
    return quantize((n & 1) ? z1 : z0);
  }

  /// Sum of fine increments over [n0, n1), accumulated left to right.
  double increment_sum(NoiseRole role, Index mode, Index n0, Index n1) const {
    check_step_range(n0, n1);
    double acc = 0.0;
    Index n = n0;
    if (n < n1 && (n & 1)) {
      acc += quantize(normal_pair(role, mode, n >> 1).second);
      ++n;
    }
    for (; n + 1 < n1; n += 2) {
      const auto [z0, z1] = normal_pair(role, mode, n >> 1);
      acc += quantize(z0);
      acc += quantize(z1);
    }
    if (n < n1) acc += quantize(normal_pair(role, mode, n >> 1).first);
    return acc;
  }

  /// Fine increments for modes 1..modes over steps [n0, n1), one column per step.
  Matrix increment_block(NoiseRole role, Index modes, Index n0, Index n1) const {
    check_step_range(n0, n1);
    Matrix out(modes, n1 - n0);
    for (Index i = 0; i < modes; ++i) {
      Index n = n0;
      if (n < n1 && (n & 1)) {
        out(i, 0) = quantize(normal_pair(role, i + 1, n >> 1).second);
        ++n;
      }
      for (; n + 1 < n1; n += 2) {
        const auto [z0, z1] = normal_pair(role, i + 1, n >> 1);
        out(i, n - n0) = quantize(z0);
        out(i, n + 1 - n0) = quantize(z1);
      }
      if (n < n1) out(i, n - n0) = quantize(normal_pair(role, i + 1, n >> 1).first);
    }
    return out;
  }

  /// Per-mode increment sums over [n0, n1) for modes 1..modes.
  Vector mode_sums(NoiseRole role, Index modes, Index n0, Index n1) const {
    Vector out(modes);
    for (Index i = 0; i < modes; ++i) out[i] = increment_sum(role, i + 1, n0, n1);
    return out;
  }

 private:
  void check_step_range(Index n0, Index n1) const {
    if (n0 < 0 || n1 < n0 || n1 > m_fine_)
      throw InvalidInput("NoisePath: step range [" + std::to_string(n0) + ", " +
                         std::to_string(n1) + ") outside [0, " + std::to_string(m_fine_) + ")");
  }

  double quantize(double z) const { return std::nearbyint(z * scale_) * kQuantum; }

  std::uint64_t seed_;
  std::uint64_t stream_;
  Index m_fine_;
  double T_;
  double scale_;
};

/// Coarse-grid view of a NoisePath: coarse step k covers fine steps
/// [k r, (k+1) r). Views of views always aggregate fine increments directly.
class CoarseView {
 public:
  CoarseView(NoisePath path, Index steps) : path_(std::move(path)), steps_(steps) {
    detail::require(steps >= 1 && path_.m_fine() % steps == 0,
                    "couple_to_coarse: m_coarse=" + std::to_string(steps) +
                        " must divide m_fine=" + std::to_string(path_.m_fine()));
    ratio_ = path_.m_fine() / steps;
  }

  const NoisePath& path() const { return path_; }
  Index steps() const { return steps_; }
  Index ratio() const { return ratio_; }
  double dt() const { return path_.horizon() / static_cast<double>(steps_); }

  double increment(NoiseRole role, Index mode, Index k) const {
    detail::require(k >= 0 && k < steps_, "CoarseView: step out of range");
    return path_.increment_sum(role, mode, k * ratio_, (k + 1) * ratio_);
  }

  Vector mode_increments(NoiseRole role, Index modes, Index k) const {
    detail::require(k >= 0 && k < steps_, "CoarseView: step out of range");
    return path_.mode_sums(role, modes, k * ratio_, (k + 1) * ratio_);
  }

 private:
  NoisePath path_;
  Index steps_;
  Index ratio_ = 1;
};

inline CoarseView couple_to_coarse(const NoisePath& path, Index m_coarse) {
  return CoarseView(path, m_coarse);
}

inline CoarseView couple_to_coarse(const CoarseView& view, Index m_coarse) {
  detail::require(m_coarse >= 1 && view.steps() % m_coarse == 0,
                  "couple_to_coarse: m_coarse must divide the view's step count");
  return CoarseView(view.path(), m_coarse);
}

/// Increment of the Q-Wiener process over fine steps [n0, n1) as a K-mode
/// field: sum_{i <= K_noise} sqrt(q_i) (beta_i(t_{n1}) - beta_i(t_{n0})) e_i.
inline SpectralField wiener_increment(const NoisePath& path, const QSpec& q, Index K,
                                      NoiseRole role, Index n0, Index n1) {
  detail::require(q.noise_modes() <= K, "wiener_increment: K_noise must not exceed K");
  if (n0 < 0 || n1 < n0 || n1 > path.m_fine())
    throw InvalidInput("wiener_increment: step range out of bounds");
  Vector c = Vector::Zero(K);
  c.head(q.noise_modes()) = q.sqrt_q().cwiseProduct(path.mode_sums(role, q.noise_modes(), n0, n1));
  return SpectralField(std::move(c));
}

// ---------------------------------------------------------------------------
// Condition checker for the stochastic heat equation setting.

/// User-declared scalar bounds on the Nemytskii coefficients.
struct NemytskiiBounds {
  double sup_df = 0.0;    // sup |df/dy|
  double sup_d2f = 0.0;   // sup |d2f/dy2|
  double int_f0_sq = 0.0; // int |f(x,0)|^2 dx
  double sup_g0 = 0.0;    // sup |g(x,0)|
  double sup_dg = 0.0;    // sup |dg/dy|
  double sup_d2g = 0.0;   // sup |d2g/dy2|
  double sup_dgdx = 0.0;  // sup |dg/dx|
};

enum class ConditionStatus { pass, partial, fail };

inline const char* to_string(ConditionStatus s) {
  switch (s) {
    case ConditionStatus::pass: return "PASS";
    case ConditionStatus::partial: return "PARTIAL";
    case ConditionStatus::fail: return "FAIL";
  }
  return "?";
}

struct ConditionEntry {
  std::string name;
  ConditionStatus status;
  std::string detail;
};

/// A series value reported as partial sum over the retained modes plus a
/// bound on the remaining tail; infinite when the series diverges.
struct SeriesEstimate {
  double partial = 0.0;
  double tail = 0.0;
  bool finite = true;
  double total() const { return finite ? partial + tail : std::numeric_limits<double>::infinity(); }
};

struct ConditionReport {
  SeriesEstimate trace;
  SeriesEstimate c1_weighted;  // sum q_i ||e_i||_{C^1}^2
  double gamma_upper = 0.0;    // admissible gamma-range is (0, gamma_upper)
  std::vector<ConditionEntry> conditions;

  ConditionStatus overall() const {
    ConditionStatus worst = ConditionStatus::pass;
    for (const auto& c : conditions) {
      if (c.status == ConditionStatus::fail) return ConditionStatus::fail;
      if (c.status == ConditionStatus::partial) worst = ConditionStatus::partial;
    }
    return worst;
  }
};

/// ||e_n||_{C^1} = sqrt(2)(1 + n pi) on (0,1).
inline double sine_mode_c1_norm(Index n) {
  return std::numbers::sqrt2 * (1.0 + std::numbers::pi * static_cast<double>(n));
}

inline ConditionReport check_conditions(const QSpec& q, const NemytskiiBounds& b) {
  ConditionReport rep;
  const Index K = q.noise_modes();
  const double dK = static_cast<double>(K);
  for (Index i = 1; i <= K; ++i) {
    const double qi = q.eigenvalue(i);
    if (!(qi > 0.0)) throw InvalidSpec("check_conditions: nonpositive q_" + std::to_string(i));
    const double c1 = sine_mode_c1_norm(i);
    rep.trace.partial += qi;
    rep.c1_weighted.partial += qi * c1 * c1;
  }

  std::string gamma_note;
  switch (q.kind()) {
    case QSpec::Kind::exponential: {
      const double c = q.rate();
      rep.trace.tail = std::exp(-c * (dK + 1.0)) / (1.0 - std::exp(-c));
      // Geometric decay: sum the C^1-weighted tail until it stops changing.
      double tail = 0.0;
      for (Index i = K + 1;; ++i) {
        const double c1 = sine_mode_c1_norm(i);
        const double term = q.eigenvalue(i) * c1 * c1;
        tail += term;
        if (term <= 1e-17 * (rep.c1_weighted.partial + tail) || term == 0.0) break;
      }
      rep.c1_weighted.tail = tail;
      rep.gamma_upper = 1.0;
      gamma_note = "exponential decay: sum q_i^(1-gamma) converges for every gamma in (0,1)";
      break;
    }
    case QSpec::Kind::polynomial: {
      const double rho = q.rho();
      const double s = q.scale();
      if (rho > 1.0) {
        rep.trace.tail = s * std::pow(dK, 1.0 - rho) / (rho - 1.0);
      } else {
        rep.trace.finite = false;
      }
      if (rho > 3.0) {
        const double a = 1.0 + std::numbers::pi;
        rep.c1_weighted.tail = 2.0 * s * a * a * std::pow(dK, 3.0 - rho) / (rho - 3.0);
      } else {
        rep.c1_weighted.finite = false;
      }
      rep.gamma_upper = rho > 1.0 ? 1.0 - 1.0 / rho : 0.0;
      gamma_note = "polynomial decay i^-" + std::to_string(rho) +
                   ": sum q_i^(1-gamma) converges only for gamma < 1 - 1/rho";
      break;
    }
    case QSpec::Kind::explicit_list:
      rep.gamma_upper = 1.0;
      gamma_note = "finite explicit list: all sums are finite";
      break;
  }

  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  const bool f_ok = finite_nonneg(b.sup_df) && finite_nonneg(b.sup_d2f) && finite_nonneg(b.int_f0_sq);
  const bool g_ok = finite_nonneg(b.sup_g0) && finite_nonneg(b.sup_dg) &&
                    finite_nonneg(b.sup_d2g) && finite_nonneg(b.sup_dgdx);
  rep.conditions.push_back({"f-regularity", f_ok ? ConditionStatus::pass : ConditionStatus::fail,
                            "bounded first/second y-derivatives and square-integrable f(.,0)"});
  rep.conditions.push_back({"g-regularity", g_ok ? ConditionStatus::pass : ConditionStatus::fail,
                            "bounded g(.,0), dg/dy, d2g/dy2, dg/dx"});
  rep.conditions.push_back({"noise-trace", rep.trace.finite ? ConditionStatus::pass : ConditionStatus::fail,
                            "sum q_i < infinity"});
  rep.conditions.push_back({"noise-c1-weighted",
                            rep.c1_weighted.finite ? ConditionStatus::pass : ConditionStatus::fail,
                            "sum q_i ||e_i||_{C^1}^2 < infinity"});
  ConditionStatus gs = ConditionStatus::pass;
  if (rep.gamma_upper <= 0.0)
    gs = ConditionStatus::fail;
  else if (rep.gamma_upper < 1.0)
    gs = ConditionStatus::partial;
  rep.conditions.push_back({"noise-gamma-range", gs, gamma_note});
  return rep;
}

}  // namespace spdelab
