#pragma once

// Built-in drift and diffusion terms with their derivatives and declared
// bounds for the condition checker.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "spdelab/collocation.hpp"
#include "spdelab/stochastics.hpp"

namespace spdelab {

struct DriftTerm {
  std::string name;
  std::string formula;
  NemytskiiMap f;
  NemytskiiMap df_dy;
  double sup_df = 0.0;
  double sup_d2f = 0.0;
  double int_f0_sq = 0.0;  // integral of f(x,0)^2 over (0,1)
};

struct DiffusionTerm {
  std::string name;
  std::string formula;
  std::vector<std::string> params;
  NemytskiiMap g;
  NemytskiiMap dg_dy;
  double sup_g0 = 0.0;
  double sup_dg = 0.0;
  double sup_d2g = 0.0;
  double sup_dgdx = 0.0;
  bool dg_vanishes = false;  // g independent of y
};

using ParamMap = std::map<std::string, double>;

namespace detail {

inline double param(const ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

}  // namespace detail

inline std::vector<std::string> drift_names() { return {"zero", "sin", "rational"}; }
inline std::vector<std::string> diffusion_names() { return {"constant", "affine", "tanh"}; }

inline DriftTerm make_drift(const std::string& name) {
  DriftTerm d;
  d.name = name;
  if (name == "zero") {
    d.formula = "f(x,y) = 0";
    d.f = [](double, double) { return 0.0; };
    d.df_dy = [](double, double) { return 0.0; };
  } else if (name == "sin") {
    d.formula = "f(x,y) = sin(y)";
    d.f = [](double, double y) { return std::sin(y); };
    d.df_dy = [](double, double y) { return std::cos(y); };
    d.sup_df = 1.0;
    d.sup_d2f = 1.0;
  } else if (name == "rational") {
    d.formula = "f(x,y) = y/(1+y^2)";
    d.f = [](double, double y) { return y / (1.0 + y * y); };
    d.df_dy = [](double, double y) {
      const double s = 1.0 + y * y;
      return (1.0 - y * y) / (s * s);
    };
    d.sup_df = 1.0;
    d.sup_d2f = 1.5;  // max of |2y(y^2-3)|/(1+y^2)^3 is about 1.457
  } else {
    throw InvalidSpec("unknown drift '" + name + "'");
  }
  return d;
}

/// constant: g = a2; affine: g = a1 y + a2; tanh: g = tanh(y) + c.
inline DiffusionTerm make_diffusion(const std::string& name, const ParamMap& p = {}) {
  DiffusionTerm d;
  d.name = name;
  if (name == "constant") {
    const double a2 = detail::param(p, "a2", 1.0);
    d.formula = "g(x,y) = a2";
    d.params = {"a2"};
    d.g = [a2](double, double) { return a2; };
    d.dg_dy = [](double, double) { return 0.0; };
    d.sup_g0 = std::abs(a2);
    d.dg_vanishes = true;
  } else if (name == "affine") {
    const double a1 = detail::param(p, "a1", 0.5);
    const double a2 = detail::param(p, "a2", 1.0);
    d.formula = "g(x,y) = a1*y + a2";
    d.params = {"a1", "a2"};
    d.g = [a1, a2](double, double y) { return a1 * y + a2; };
    d.dg_dy = [a1](double, double) { return a1; };
    d.sup_g0 = std::abs(a2);
    d.sup_dg = std::abs(a1);
    d.dg_vanishes = a1 == 0.0;
  } else if (name == "tanh") {
    const double c = detail::param(p, "c", 1.0);
    d.formula = "g(x,y) = tanh(y) + c";
    d.params = {"c"};
    d.g = [c](double, double y) { return std::tanh(y) + c; };
    d.dg_dy = [](double, double y) {
      const double t = std::tanh(y);
      return 1.0 - t * t;
    };
    d.sup_g0 = std::abs(c);
    d.sup_dg = 1.0;
    d.sup_d2g = 4.0 / (3.0 * std::sqrt(3.0));
  } else {
    throw InvalidSpec("unknown diffusion '" + name + "'");
  }
  for (const auto& [key, value] : p) {
    bool known = false;
    for (const auto& k : d.params) known = known || k == key;
    if (!known) throw InvalidSpec("diffusion '" + name + "' has no parameter '" + key + "'");
    if (!std::isfinite(value)) throw InvalidSpec("diffusion parameter '" + key + "' must be finite");
  }
  return d;
}

inline NemytskiiCoeffs combine(const DriftTerm& f, const DiffusionTerm& g) {
  return {f.f, f.df_dy, g.g, g.dg_dy};
}

inline NemytskiiBounds declared_bounds(const DriftTerm& f, const DiffusionTerm& g) {
  NemytskiiBounds b;
  b.sup_df = f.sup_df;
  b.sup_d2f = f.sup_d2f;
  b.int_f0_sq = f.int_f0_sq;
  b.sup_g0 = g.sup_g0;
  b.sup_dg = g.sup_dg;
  b.sup_d2g = g.sup_d2g;
  b.sup_dgdx = g.sup_dgdx;
  return b;
}

}  // namespace spdelab
