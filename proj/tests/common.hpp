#pragma once

#include "spdelab/catalog.hpp"
#include "spdelab/problem.hpp"

namespace testing_support {

using namespace spdelab;

inline SpectralField smooth_x0(Index K) {
  Vector c = Vector::Zero(K);
  c[0] = 1.0;
  if (K > 1) c[1] = 0.2;
  return SpectralField(c);
}

/// sin drift, affine(0.5, 1) diffusion, exponential q with rate 0.1.
inline ProblemSpec default_problem(Index K, double T = 1.0, const std::string& drift = "sin",
                                   const std::string& diffusion = "affine", const ParamMap& gp = {}) {
  return ProblemSpec(K, T, smooth_x0(K), combine(make_drift(drift), make_diffusion(diffusion, gp)),
                     QSpec::exponential(0.1, K));
}

inline NemytskiiCoeffs zero_coeffs() {
  auto z = [](double, double) { return 0.0; };
  return {z, z, z, z};
}

}  // namespace testing_support
