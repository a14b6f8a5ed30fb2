#pragma once

#include <functional>

#include "cmctube/common.hpp"

namespace cmctube {

// Adaptive Dormand-Prince 5(4). Small systems, tight tolerances.
struct OdeOptions {
  double rtol = 1e-12;
  double atol = 1e-12;
  double h_init = 1e-2;
  double h_max = 0.25;
  int max_steps = 200000;
};

using OdeRhs = std::function<void(double, const VectorXd&, VectorXd&)>;

inline void ode_integrate(const OdeRhs& f, double t0, double t1, VectorXd& y,
                          const OdeOptions& opt = {}) {
  static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                      a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                      a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                      a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                      e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  if (t0 == t1) return;
  const double dir = (t1 > t0) ? 1.0 : -1.0;
  double t = t0;
  double h = dir * std::min(opt.h_init, std::abs(t1 - t0));
  const int n = int(y.size());
  VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), ynew(n);
  f(t, y, k1);
  for (int step = 0; step < opt.max_steps; ++step) {
    if (dir * (t + h - t1) > 0) h = t1 - t;
    yt = y + h * a21 * k1;
    f(t + c2 * h, yt, k2);
    yt = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, yt, k3);
    yt = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, yt, k4);
    yt = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, yt, k5);
    yt = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, yt, k6);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t + h, ynew, k7);
    VectorXd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double sc = 0;
    for (int i = 0; i < n; ++i) {
      double s = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
      sc = std::max(sc, std::abs(err(i)) / s);
    }
    if (sc <= 1.0) {
      t += h;
      y = ynew;
      k1 = k7;
      if (dir * (t - t1) >= 0) return;
    }
    double fac = (sc > 0) ? 0.9 * std::pow(sc, -0.2) : 5.0;
    fac = std::min(5.0, std::max(0.2, fac));
    h *= fac;
    if (std::abs(h) > opt.h_max) h = dir * opt.h_max;
    if (std::abs(h) < 1e-15 * std::abs(t1 - t0))
      fail(ErrorCode::NoConvergence, "ode step size underflow");
  }
  fail(ErrorCode::NoConvergence, "ode exceeded max steps");
}

}  // namespace cmctube
