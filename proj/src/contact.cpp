#include "nitsche/contact.hpp"

#include <algorithm>

namespace nitsche {

double Friction::tresca_threshold(const Vec2& face_midpoint) const {
  const double v = s_field ? s_field(face_midpoint) : s;
  if (!(v >= 0.0))
    throw Error("friction: Tresca threshold must be non-negative");
  return v;
}

void Friction::validate() const {
  if (law == FrictionLaw::Tresca && !s_field && !(s >= 0.0))
    throw Error("friction: Tresca threshold must be non-negative");
  if (law == FrictionLaw::Coulomb && !(mu >= 0.0))
    throw Error("friction: Coulomb coefficient must be non-negative");
}

double proj_ball(double x, double radius) {
  if (!(radius >= 0.0))
    throw Error("proj_ball: negative radius");
  return std::clamp(x, -radius, radius);
}

Vec2 proj_ball(const Vec2& x, double radius) {
  if (!(radius >= 0.0))
    throw Error("proj_ball: negative radius");
  const double n = x.norm();
  return n <= radius ? x : Vec2(x * (radius / n));
}

ContactState contact_state(const TracePoint& x, const Material& m, const Friction& fr) {
  ContactState c;
  const Vec2 sn = stress_from_gradient(x.grad, m) * x.n;
  c.sigma_n = sn.dot(x.n);
  c.sigma_t = sn.dot(x.t);
  c.u_n = x.u.dot(x.n);
  c.u_t = x.u.dot(x.t);
  c.p_n = c.sigma_n - x.gamma * c.u_n;
  c.p_t = c.sigma_t - x.gamma * c.u_t;
  c.pn_neg = proj_neg(c.p_n);
  c.normal_active = c.p_n < 0.0;
  c.threshold = fr.law == FrictionLaw::Tresca ? x.s : -fr.mu * c.pn_neg;
  c.stick = std::abs(c.p_t) <= c.threshold;
  c.pt_proj = std::clamp(c.p_t, -c.threshold, c.threshold);
  return c;
}

double p_lin_n(const TracePoint& w, const TracePoint& u_prev, const Material& m) {
  const Vec2 sp = stress_from_gradient(u_prev.grad, m) * u_prev.n;
  const double pn_prev = sp.dot(u_prev.n) - u_prev.gamma * u_prev.u.dot(u_prev.n);
  if (!(pn_prev < 0.0))
    return 0.0;
  const Vec2 sw = stress_from_gradient(w.grad, m) * w.n;
  return sw.dot(w.n) - w.gamma * w.u.dot(w.n);
}

double p_lin_t(const TracePoint& w, const TracePoint& u_prev, const Material& m,
               const Friction& fr) {
  const ContactState prev = contact_state(u_prev, m, fr);
  const Vec2 sw = stress_from_gradient(w.grad, m) * w.n;
  if (!prev.stick) {
    if (fr.law == FrictionLaw::Coulomb && fr.linearize_threshold && prev.normal_active) {
      const double pn_w = sw.dot(w.n) - w.gamma * w.u.dot(w.n);
      return (prev.p_t > 0.0 ? -fr.mu : fr.mu) * pn_w;
    }
    return prev.pt_proj;
  }
  const double pt_w = sw.dot(w.t) - w.gamma * w.u.dot(w.t);
  return prev.pt_proj + (pt_w - prev.p_t);
}

} // namespace nitsche
