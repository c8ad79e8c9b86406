#pragma once

// Discrete sine transform pair between K sine modes and values on the
// uniform interior grid xi_j = j/(G+1), and the pseudospectral Nemytskii
// operators built on it. With G = K the pair is exactly invertible; the
// de-aliased variant uses G = 2K+1 nodes and truncates back to K modes.

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>

#include "spdelab/spectral_core.hpp"

namespace spdelab {

/// Grid values of a function; values[j] sits at node (j+1)/(G+1).
struct PhysicalField {
  Vector values;
  Index size() const { return values.size(); }
};

class CollocationPlan {
 public:
  explicit CollocationPlan(Index K, bool dealias = false)
      : modes_(K), nodes_(dealias ? 2 * K + 1 : K) {
    detail::require(K >= 1, "CollocationPlan: K must be >= 1");
    const double h = 1.0 / static_cast<double>(nodes_ + 1);
    synthesis_.resize(nodes_, modes_);
    analysis_.resize(modes_, nodes_);
    for (Index j = 0; j < nodes_; ++j) {
      for (Index i = 0; i < modes_; ++i) {
        // Reduce (i+1)(j+1) modulo 2(G+1) so the sine argument stays in [0, 2 pi).
        const auto period = 2 * (nodes_ + 1);
        const auto k = ((i + 1) * (j + 1)) % period;
        const double s = std::sin(std::numbers::pi * static_cast<double>(k) * h);
        synthesis_(j, i) = std::numbers::sqrt2 * s;
        analysis_(i, j) = std::numbers::sqrt2 * h * s;
      }
    }
  }

  Index modes() const { return modes_; }
  Index nodes() const { return nodes_; }
  bool dealiased() const { return nodes_ != modes_; }
  double node(Index j) const { return static_cast<double>(j + 1) / static_cast<double>(nodes_ + 1); }

  const Matrix& synthesis() const { return synthesis_; }
  const Matrix& analysis() const { return analysis_; }

  Vector synthesize(const Vector& coeffs) const {
    detail::require(coeffs.size() == modes_, "synthesize: coefficient count mismatch");
    return synthesis_ * coeffs;
  }
  Vector analyze(const Vector& values) const {
    detail::require(values.size() == nodes_, "analyze: node count mismatch");
    return analysis_ * values;
  }

 private:
  Index modes_;
  Index nodes_;
  Matrix synthesis_;
  Matrix analysis_;
};

using NemytskiiMap = std::function<double(double xi, double y)>;

/// Pointwise coefficient maps f, g and their y-derivatives.
struct NemytskiiCoeffs {
  NemytskiiMap f;
  NemytskiiMap df_dy;
  NemytskiiMap g;
  NemytskiiMap dg_dy;
};

inline PhysicalField to_physical(const CollocationPlan& plan, const SpectralField& x) {
  return PhysicalField{plan.synthesize(x.coeffs())};
}

inline PhysicalField to_physical(const SpectralField& x) {
  return to_physical(CollocationPlan(x.size()), x);
}

inline SpectralField to_spectral(const CollocationPlan& plan, const PhysicalField& v) {
  return SpectralField(plan.analyze(v.values));
}

inline SpectralField to_spectral(const PhysicalField& v) {
  return to_spectral(CollocationPlan(v.size()), v);
}

namespace detail {

inline double checked(double value, const char* what, Index j) {
  if (!std::isfinite(value))
    throw EvaluationError(std::string(what) + " returned a non-finite value",
                          static_cast<std::size_t>(j));
  return value;
}

}  // namespace detail

/// F(x) = P_K f(., x(.)).
inline SpectralField apply_F(const CollocationPlan& plan, const NemytskiiCoeffs& nem,
                             const SpectralField& x) {
  Vector v = plan.synthesize(x.coeffs());
  for (Index j = 0; j < v.size(); ++j) v[j] = detail::checked(nem.f(plan.node(j), v[j]), "f", j);
  return SpectralField(plan.analyze(v));
}

/// G(x)u = P_K [g(., x(.)) u(.)].
inline SpectralField apply_G(const CollocationPlan& plan, const NemytskiiCoeffs& nem,
                             const SpectralField& x, const SpectralField& u) {
  detail::require(x.size() == u.size(), "apply_G: x and u must share K");
  const Vector xv = plan.synthesize(x.coeffs());
  Vector uv = plan.synthesize(u.coeffs());
  for (Index j = 0; j < uv.size(); ++j)
    uv[j] *= detail::checked(nem.g(plan.node(j), xv[j]), "g", j);
  return SpectralField(plan.analyze(uv));
}

/// DF(x)u = P_K [df/dy(., x(.)) u(.)].
inline SpectralField apply_DF(const CollocationPlan& plan, const NemytskiiCoeffs& nem,
                              const SpectralField& x, const SpectralField& u) {
  detail::require(x.size() == u.size(), "apply_DF: x and u must share K");
  const Vector xv = plan.synthesize(x.coeffs());
  Vector uv = plan.synthesize(u.coeffs());
  for (Index j = 0; j < uv.size(); ++j)
    uv[j] *= detail::checked(nem.df_dy(plan.node(j), xv[j]), "df_dy", j);
  return SpectralField(plan.analyze(uv));
}

/// (DG(x)u) w = P_K [dg/dy(., x(.)) u(.) w(.)].
inline SpectralField apply_DG(const CollocationPlan& plan, const NemytskiiCoeffs& nem,
                              const SpectralField& x, const SpectralField& u,
                              const SpectralField& w) {
  detail::require(x.size() == u.size() && x.size() == w.size(), "apply_DG: fields must share K");
  const Vector xv = plan.synthesize(x.coeffs());
  const Vector wv = plan.synthesize(w.coeffs());
  Vector uv = plan.synthesize(u.coeffs());
  for (Index j = 0; j < uv.size(); ++j)
    uv[j] *= detail::checked(nem.dg_dy(plan.node(j), xv[j]), "dg_dy", j) * wv[j];
  return SpectralField(plan.analyze(uv));
}

}  // namespace spdelab
