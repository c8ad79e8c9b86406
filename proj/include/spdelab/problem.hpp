#pragma once

#include <cmath>
#include <memory>
#include <utility>

#include "spdelab/collocation.hpp"
#include "spdelab/stochastics.hpp"

namespace spdelab {

/// One instance of dX = (AX + F(X)) dt + G(X) dW on (0,1) with Dirichlet
/// boundary conditions, truncated to K sine modes.
class ProblemSpec {
 public:
  ProblemSpec(Index K, double T, SpectralField x0, NemytskiiCoeffs nem, QSpec qspec,
              AnalysisParams analysis = {}, bool dealias = false)
      : K_(K), T_(T), x0_(std::move(x0)), nem_(std::move(nem)), qspec_(std::move(qspec)),
        analysis_(analysis) {
    if (K < 1) throw InvalidSpec("problem: K must be >= 1");
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidSpec("problem: T must be positive");
    if (x0_.size() != K) throw InvalidSpec("problem: initial datum must have K modes");
    if (!x0_.all_finite()) throw InvalidSpec("problem: initial datum must be finite");
    if (!nem_.f || !nem_.df_dy || !nem_.g || !nem_.dg_dy)
      throw InvalidSpec("problem: all four Nemytskii maps are required");
    if (qspec_.noise_modes() > K) throw InvalidSpec("problem: K_noise must not exceed K");
    analysis_.validate();
    plan_ = std::make_shared<const CollocationPlan>(K, dealias);
  }

  Index K() const { return K_; }
  double horizon() const { return T_; }
  const SpectralField& x0() const { return x0_; }
  const NemytskiiCoeffs& nemytskii() const { return nem_; }
  const QSpec& qspec() const { return qspec_; }
  const AnalysisParams& analysis() const { return analysis_; }
  const CollocationPlan& plan() const { return *plan_; }

  /// Same instance with different Nemytskii maps (used for paired comparisons).
  ProblemSpec with_nemytskii(NemytskiiCoeffs nem) const {
    ProblemSpec p = *this;
    if (!nem.f || !nem.df_dy || !nem.g || !nem.dg_dy)
      throw InvalidSpec("problem: all four Nemytskii maps are required");
    p.nem_ = std::move(nem);
    return p;
  }

 private:
  Index K_;
  double T_;
  SpectralField x0_;
  NemytskiiCoeffs nem_;
  QSpec qspec_;
  AnalysisParams analysis_;
  std::shared_ptr<const CollocationPlan> plan_;
};

}  // namespace spdelab
