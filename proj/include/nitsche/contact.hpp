#pragma once

#include "nitsche/fespace.hpp"

#include <functional>

namespace nitsche {

enum class FrictionLaw { Tresca, Coulomb };

struct Friction {
  FrictionLaw law = FrictionLaw::Tresca;
  double s = 0.0;  // Tresca threshold, used when s_field is empty
  double mu = 0.0; // Coulomb coefficient
  std::function<double(const Vec2&)> s_field; // optional piecewise-constant Tresca data
  // Coulomb only: linearise the threshold -mu [P^n]_- as well instead of freezing it at u_prev.
  bool linearize_threshold = false;

  double tresca_threshold(const Vec2& face_midpoint) const;
  void validate() const;
};

inline double proj_neg(double x) { return x < 0.0 ? x : 0.0; }
double proj_ball(double x, double radius);
Vec2 proj_ball(const Vec2& x, double radius);

// Displacement and gradient traces at a contact point.
struct TracePoint {
  Vec2 u = Vec2::Zero();
  Mat2 grad = Mat2::Zero();
  Vec2 n = Vec2::UnitY();
  Vec2 t = -Vec2::UnitX();
  double gamma = 0.0;
  double s = 0.0; // Tresca threshold on the face
};

struct ContactState {
  double sigma_n = 0.0, sigma_t = 0.0;
  double u_n = 0.0, u_t = 0.0;
  double p_n = 0.0, p_t = 0.0;   // Nitsche quantities sigma - gamma u
  double threshold = 0.0;        // friction bound S_h
  double pn_neg = 0.0;           // [P^n]_{R^-}
  double pt_proj = 0.0;          // [P^t]_{S_h}
  bool normal_active = false;    // P^n < 0
  bool stick = false;            // |P^t| <= S_h
};

ContactState contact_state(const TracePoint& x, const Material& m, const Friction& fr);

// Linearisations around u_prev evaluated at w.
double p_lin_n(const TracePoint& w, const TracePoint& u_prev, const Material& m);
double p_lin_t(const TracePoint& w, const TracePoint& u_prev, const Material& m,
               const Friction& fr);

} // namespace nitsche
