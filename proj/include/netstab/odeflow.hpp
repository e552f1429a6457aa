#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "netstab/dalgebra.hpp"
#include "netstab/gcnet.hpp"

namespace netstab::ode {

/// Planar quadcopter constants (Parrot Bebop data set).
struct QuadParams {
  double m = 0.38905;   // kg
  double g = 9.81;      // m/s^2
  double c1 = 9.1;      // max thrust, N
  double c2 = 35.0;     // max pitch rate, rad/s
  double drag = 0.5;    // linear drag coefficient

  /// Thrust fraction that cancels gravity at hover.
  double hover_thrust() const { return m * g / c1; }
};

template <class S>
struct ControlT {
  S u1;
  S u2;
};

/// State ordering is [y, vy, z, vz, theta] throughout.
inline constexpr int kStateDim = 5;

/// Planar quadcopter dynamics over any scalar with sin/cos.
template <class S>
std::vector<S> quad_rhs(const std::vector<S>& x, const ControlT<S>& u, const QuadParams& p) {
  using std::cos;
  using std::sin;
  if (x.size() != kStateDim) throw std::invalid_argument("quad_rhs: state dimension must be 5");
  const S& vy = x[1];
  const S& vz = x[3];
  const S& th = x[4];
  std::vector<S> dx;
  dx.reserve(kStateDim);
  dx.push_back(vy);
  dx.push_back(u.u1 * (p.c1 / p.m) * sin(th) - vy * p.drag);
  dx.push_back(vz);
  dx.push_back(u.u1 * (p.c1 / p.m) * cos(th) - vz * p.drag - p.g);
  dx.push_back(u.u2 * p.c2);
  return dx;
}

/// Quadcopter under network feedback, evaluated over the same scalar.
template <class S>
std::vector<S> closed_loop_rhs(const std::vector<S>& x, const gcnet::NetSpec& net,
                               const QuadParams& p) {
  std::vector<S> u = gcnet::forward(net, x);
  return quad_rhs(x, ControlT<S>{std::move(u[0]), std::move(u[1])}, p);
}

struct IntegratorConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-10;
  double h_init = 1e-3;
  double h_min = 1e-12;
  double h_max = 1.0;
  long max_steps = 1'000'000;

  static IntegratorConfig oracle() { return {}; }
  static IntegratorConfig map_propagation() {
    IntegratorConfig c;
    c.rel_tol = 1e-8;
    c.abs_tol = 1e-8;
    return c;
  }
};

enum class IntStatus { Success, StepUnderflow, MaxSteps, NonFinite };

inline const char* to_string(IntStatus s) {
  switch (s) {
    case IntStatus::Success: return "success";
    case IntStatus::StepUnderflow: return "step underflow";
    case IntStatus::MaxSteps: return "max steps exceeded";
    case IntStatus::NonFinite: return "non-finite state";
  }
  return "?";
}

template <class S>
struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<S>> states;
  std::vector<double> step_errors;  // normalized local error of each accepted step
  IntStatus status = IntStatus::Success;
  double t_reached = 0.0;

  bool ok() const { return status == IntStatus::Success; }
  const std::vector<S>& back() const { return states.back(); }
};

namespace detail {

// classical Fehlberg 4(5) tableau, 6 stages
inline constexpr double kC[6] = {0.0, 1.0 / 4, 3.0 / 8, 12.0 / 13, 1.0, 1.0 / 2};
inline constexpr double kA[6][5] = {
    {},
    {1.0 / 4},
    {3.0 / 32, 9.0 / 32},
    {1932.0 / 2197, -7200.0 / 2197, 7296.0 / 2197},
    {439.0 / 216, -8.0, 3680.0 / 513, -845.0 / 4104},
    {-8.0 / 27, 2.0, -3544.0 / 2565, 1859.0 / 4104, -11.0 / 40}};
inline constexpr double kB5[6] = {16.0 / 135, 0.0, 6656.0 / 12825, 28561.0 / 56430, -9.0 / 50, 2.0 / 55};
inline constexpr double kB4[6] = {25.0 / 216, 0.0, 1408.0 / 2565, 2197.0 / 4104, -1.0 / 5, 0.0};

template <class S>
double max_nominal_norm(const std::vector<S>& x) {
  using netstab::da::nominal;
  double m = 0.0;
  for (const S& c : x) m = std::max(m, std::abs(nominal(c)));
  return m;
}

template <class S>
bool all_finite(const std::vector<S>& x) {
  using netstab::da::nominal;
  for (const S& c : x)
    if (!std::isfinite(nominal(c))) return false;
  return true;
}

}  // namespace detail

/// Adaptive RKF4(5) over an autonomous right-hand side. The error estimate
/// is the 4th/5th-order difference measured on the constant parts and the
/// step advances the 5th-order solution. All accepted grid points are kept.
template <class S, class RHS>
Trajectory<S> integrate(RHS&& rhs, const std::vector<S>& x0, double t0, double t1,
                        const IntegratorConfig& cfg) {
  using netstab::da::nominal;
  if (!(cfg.rel_tol > 0) || !(cfg.abs_tol > 0))
    throw std::invalid_argument("integrate: tolerances must be positive");
  if (!(cfg.h_min > 0) || cfg.h_min > cfg.h_init || cfg.h_init > cfg.h_max)
    throw std::invalid_argument("integrate: need 0 < h_min <= h_init <= h_max");
  if (t1 < t0) throw std::invalid_argument("integrate: t1 < t0");

  Trajectory<S> out;
  out.times.push_back(t0);
  out.states.push_back(x0);

  std::vector<S> x = x0;
  double t = t0;
  double h = std::min(cfg.h_init, t1 - t0);
  const std::size_t dim = x0.size();

  std::vector<std::vector<S>> k(6);
  long steps = 0;
  while (t < t1) {
    if (++steps > cfg.max_steps) {
      out.status = IntStatus::MaxSteps;
      out.t_reached = t;
      return out;
    }
    if (h > t1 - t) h = t1 - t;

    k[0] = rhs(x);
    for (int s = 1; s < 6; ++s) {
      std::vector<S> xs = x;
      for (int j = 0; j < s; ++j) {
        const double w = detail::kA[s][j] * h;
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < dim; ++c) xs[c] += k[j][c] * w;
      }
      k[s] = rhs(xs);
    }

    std::vector<S> xnew = x;
    for (int s = 0; s < 6; ++s) {
      const double w = detail::kB5[s] * h;
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < dim; ++c) xnew[c] += k[s][c] * w;
    }

    double err = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      double e = 0.0;
      for (int s = 0; s < 6; ++s) e += (detail::kB5[s] - detail::kB4[s]) * nominal(k[s][c]);
      err = std::max(err, std::abs(e) * h);
    }
    const double scale =
        cfg.abs_tol +
        cfg.rel_tol * std::max(detail::max_nominal_norm(x), detail::max_nominal_norm(xnew));

    if (!detail::all_finite(xnew) || !std::isfinite(err)) {
      out.status = IntStatus::NonFinite;
      out.t_reached = t;
      return out;
    }

    if (err <= scale) {
      t += h;
      x = std::move(xnew);
      out.times.push_back(t);
      out.states.push_back(x);
      out.step_errors.push_back(err / scale);
    }

    const double ratio = err > 0.0 ? scale / err : 10.0;
    double factor = 0.9 * std::pow(ratio, 0.2);
    factor = std::clamp(factor, 0.2, 5.0);
    h = std::min(h * factor, cfg.h_max);
    if (h < cfg.h_min && t < t1) {
      out.status = IntStatus::StepUnderflow;
      out.t_reached = t;
      return out;
    }
  }
  out.t_reached = t;
  return out;
}

/// Integrates through the given ascending sample times, returning the state
/// at each of them (endpoints hit exactly).
template <class S, class RHS>
Trajectory<S> integrate_at(RHS&& rhs, const std::vector<S>& x0, double t0,
                           std::span<const double> times, const IntegratorConfig& cfg) {
  Trajectory<S> out;
  std::vector<S> x = x0;
  double t = t0;
  for (double target : times) {
    if (target < t) throw std::invalid_argument("integrate_at: times must ascend from t0");
    if (target > t) {
      auto seg = integrate(rhs, x, t, target, cfg);
      if (!seg.ok()) {
        out.status = seg.status;
        out.t_reached = seg.t_reached;
        return out;
      }
      x = seg.states.back();
      t = target;
    }
    out.times.push_back(target);
    out.states.push_back(x);
  }
  out.t_reached = t;
  return out;
}

namespace detail {

/// Dense cubic Hermite lookup over the accepted steps of a running
/// integration; history before t0 is frozen at x0.
class History {
 public:
  History(std::vector<double> x0, double t0) : t0_(t0) {
    ts_.push_back(t0);
    xs_.push_back(std::move(x0));
    fs_.emplace_back();  // filled in once the first derivative is known
  }

  void set_first_derivative(std::vector<double> f) { fs_[0] = std::move(f); }

  void append(double t, std::vector<double> x, std::vector<double> f) {
    ts_.push_back(t);
    xs_.push_back(std::move(x));
    fs_.push_back(std::move(f));
  }

  std::vector<double> at(double t) const {
    if (t <= t0_) return xs_.front();
    auto it = std::upper_bound(ts_.begin(), ts_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - ts_.begin());
    if (hi >= ts_.size()) hi = ts_.size() - 1;
    const std::size_t lo = hi - 1;
    const double dt = ts_[hi] - ts_[lo];
    if (dt <= 0.0) return xs_[hi];
    const double s = (t - ts_[lo]) / dt;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    const std::size_t dim = xs_[lo].size();
    std::vector<double> out(dim);
    for (std::size_t c = 0; c < dim; ++c)
      out[c] = h00 * xs_[lo][c] + h10 * dt * fs_[lo][c] + h01 * xs_[hi][c] + h11 * dt * fs_[hi][c];
    return out;
  }

 private:
  double t0_;
  std::vector<double> ts_;
  std::vector<std::vector<double>> xs_;
  std::vector<std::vector<double>> fs_;
};

}  // namespace detail

/// Integrates x' = rhs(x(t), x(t - tau)) with constant pre-history x0.
/// Steps are capped at tau so delayed lookups always land in completed
/// history, interpolated with cubic Hermite polynomials. The sink is
/// invoked as sink(t, x, x_delayed) at every accepted point.
template <class RHS2, class Sink>
Trajectory<double> integrate_delayed(RHS2&& rhs, const std::vector<double>& x0, double tau,
                                     double t1, const IntegratorConfig& cfg, Sink&& sink) {
  if (tau < 0) throw std::invalid_argument("integrate_delayed: tau must be >= 0");
  if (tau == 0.0) {
    auto wrapped = [&rhs](const std::vector<double>& x) { return rhs(x, x); };
    auto traj = integrate(wrapped, x0, 0.0, t1, cfg);
    for (std::size_t i = 0; i < traj.times.size(); ++i)
      sink(traj.times[i], traj.states[i], traj.states[i]);
    return traj;
  }

  IntegratorConfig c = cfg;
  c.h_max = std::min(cfg.h_max, tau);
  c.h_init = std::min(cfg.h_init, c.h_max);
  c.h_min = std::min(cfg.h_min, c.h_init);

  detail::History hist(x0, 0.0);
  hist.set_first_derivative(rhs(x0, x0));

  Trajectory<double> out;
  out.times.push_back(0.0);
  out.states.push_back(x0);
  sink(0.0, x0, x0);

  std::vector<double> x = x0;
  double t = 0.0;
  double h = std::min(c.h_init, t1);
  const std::size_t dim = x0.size();
  std::vector<std::vector<double>> k(6);
  long steps = 0;

  auto eval = [&](double tq, const std::vector<double>& xq) {
    return rhs(xq, hist.at(tq - tau));
  };

  while (t < t1) {
    if (++steps > c.max_steps) {
      out.status = IntStatus::MaxSteps;
      out.t_reached = t;
      return out;
    }
    if (h > t1 - t) h = t1 - t;

    k[0] = eval(t, x);
    for (int s = 1; s < 6; ++s) {
      std::vector<double> xs = x;
      for (int j = 0; j < s; ++j) {
        const double w = detail::kA[s][j] * h;
        if (w == 0.0) continue;
        for (std::size_t cc = 0; cc < dim; ++cc) xs[cc] += k[j][cc] * w;
      }
      k[s] = eval(t + detail::kC[s] * h, xs);
    }

    std::vector<double> xnew = x;
    for (int s = 0; s < 6; ++s) {
      const double w = detail::kB5[s] * h;
      if (w == 0.0) continue;
      for (std::size_t cc = 0; cc < dim; ++cc) xnew[cc] += k[s][cc] * w;
    }

    double err = 0.0;
    for (std::size_t cc = 0; cc < dim; ++cc) {
      double e = 0.0;
      for (int s = 0; s < 6; ++s) e += (detail::kB5[s] - detail::kB4[s]) * k[s][cc];
      err = std::max(err, std::abs(e) * h);
    }
    const double scale =
        c.abs_tol + c.rel_tol * std::max(detail::max_nominal_norm(x), detail::max_nominal_norm(xnew));

    if (!detail::all_finite(xnew) || !std::isfinite(err)) {
      out.status = IntStatus::NonFinite;
      out.t_reached = t;
      return out;
    }

    if (err <= scale) {
      t += h;
      x = xnew;
      const auto xdel = hist.at(t - tau);
      hist.append(t, x, rhs(x, xdel));
      out.times.push_back(t);
      out.states.push_back(x);
      out.step_errors.push_back(err / scale);
      sink(t, x, xdel);
    }

    const double ratio = err > 0.0 ? scale / err : 10.0;
    double factor = 0.9 * std::pow(ratio, 0.2);
    factor = std::clamp(factor, 0.2, 5.0);
    h = std::min(h * factor, c.h_max);
    if (h < c.h_min && t < t1) {
      out.status = IntStatus::StepUnderflow;
      out.t_reached = t;
      return out;
    }
  }
  out.t_reached = t;
  return out;
}

template <class RHS2>
Trajectory<double> integrate_delayed(RHS2&& rhs, const std::vector<double>& x0, double tau,
                                     double t1, const IntegratorConfig& cfg) {
  auto nosink = [](double, const std::vector<double>&, const std::vector<double>&) {};
  return integrate_delayed(std::forward<RHS2>(rhs), x0, tau, t1, cfg, nosink);
}

/// Closed-loop quadcopter with the control computed from the state delayed
/// by tau seconds.
template <class Sink>
Trajectory<double> simulate_delayed(const gcnet::NetSpec& net, const QuadParams& p,
                                    const std::vector<double>& x0, double tau, double t1,
                                    const IntegratorConfig& cfg, Sink&& sink) {
  auto rhs = [&](const std::vector<double>& x, const std::vector<double>& xdel) {
    std::vector<double> u = gcnet::forward(net, xdel);
    return quad_rhs(x, ControlT<double>{u[0], u[1]}, p);
  };
  return integrate_delayed(rhs, x0, tau, t1, cfg, std::forward<Sink>(sink));
}

inline Trajectory<double> simulate_delayed(const gcnet::NetSpec& net, const QuadParams& p,
                                           const std::vector<double>& x0, double tau, double t1,
                                           const IntegratorConfig& cfg) {
  auto nosink = [](double, const std::vector<double>&, const std::vector<double>&) {};
  return simulate_delayed(net, p, x0, tau, t1, cfg, nosink);
}

}  // namespace netstab::ode
