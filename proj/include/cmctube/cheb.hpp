#pragma once

#include <map>
#include <vector>

#include "cmctube/common.hpp"

namespace cmctube {

// --- Chebyshev-Lobatto collocation on [a,b], ascending node order ----------

inline VectorXd cheb_T_at(double xi, int kmax) {
  VectorXd T(kmax + 1);
  T(0) = 1;
  if (kmax >= 1) T(1) = xi;
  for (int k = 2; k <= kmax; ++k) T(k) = 2 * xi * T(k - 1) - T(k - 2);
  return T;
}

struct ChebGrid {
  int N = 0;          // number of nodes
  double a = 0, b = 1;
  VectorXd x;         // ascending, x(0)=a, x(N-1)=b
  VectorXd w;         // Clenshaw-Curtis quadrature weights
  MatrixXd D, D2;     // differentiation matrices on node values
  MatrixXd vand;      // vand(j,k) = T_k(xi_j)
  MatrixXd vand_inv;  // values -> Chebyshev coefficients
};

inline ChebGrid make_cheb_grid(int N, double a, double b) {
  ChebGrid g;
  g.N = N;
  g.a = a;
  g.b = b;
  const int n = N - 1;
  g.x.resize(N);
  VectorXd xi(N), bary(N);
  for (int j = 0; j < N; ++j) {
    xi(j) = -std::cos(kPi * j / n);
    g.x(j) = a + (b - a) * 0.5 * (1.0 + xi(j));
    bary(j) = ((j % 2) ? 1.0 : -1.0) * ((j == 0 || j == n) ? 0.5 : 1.0);
  }
  g.x(0) = a;
  g.x(N - 1) = b;

  g.D.setZero(N, N);
  for (int i = 0; i < N; ++i) {
    double rowsum = 0;
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      g.D(i, j) = (bary(j) / bary(i)) / (g.x(i) - g.x(j));
      rowsum += g.D(i, j);
    }
    g.D(i, i) = -rowsum;
  }
  g.D2 = g.D * g.D;

  g.vand.resize(N, N);
  for (int j = 0; j < N; ++j) g.vand.row(j) = cheb_T_at(xi(j), n).transpose();
  // exact DCT-I inverse: a_k = (2 / (n c_k)) sum_i f_i cos(i k pi / n) / c_i
  // with c_0 = c_n = 2; node j here corresponds to standard index n - j
  g.vand_inv.resize(N, N);
  for (int k = 0; k < N; ++k)
    for (int j = 0; j < N; ++j) {
      int i = n - j;
      double ck = (k == 0 || k == n) ? 2.0 : 1.0;
      double ci = (i == 0 || i == n) ? 2.0 : 1.0;
      g.vand_inv(k, j) = 2.0 / (n * ck * ci) * std::cos(double(i) * k * kPi / n);
    }

  // weights integrate T_k exactly: sum_j w_j T_k(xi_j) = m_k on [-1,1]
  VectorXd m(N);
  for (int k = 0; k < N; ++k) m(k) = (k % 2 == 1) ? 0.0 : 2.0 / (1.0 - k * k);
  g.w = g.vand.transpose().fullPivLu().solve(m) * (0.5 * (b - a));
  return g;
}

// Chebyshev series on [a,b] with coefficient-space differentiation.
struct ChebSeries {
  double a = 0, b = 1;
  VectorXd c;

  static ChebSeries fit(const ChebGrid& g, const VectorXd& values) {
    ChebSeries s;
    s.a = g.a;
    s.b = g.b;
    s.c = g.vand_inv * values;
    return s;
  }

  ChebSeries derivative() const {
    ChebSeries d;
    d.a = a;
    d.b = b;
    int n = int(c.size());
    d.c.setZero(n);
    if (n >= 2) {
      VectorXd bb = VectorXd::Zero(n + 2);
      for (int k = n - 2; k >= 0; --k) bb(k) = bb(k + 2) + 2 * (k + 1) * c(k + 1);
      bb(0) *= 0.5;
      d.c = bb.head(n) * (2.0 / (b - a));
    }
    return d;
  }

  double eval(double t) const {
    double xi = 2 * (t - a) / (b - a) - 1;
    // Clenshaw
    double b1 = 0, b2 = 0;
    for (int k = int(c.size()) - 1; k >= 1; --k) {
      double tmp = 2 * xi * b1 - b2 + c(k);
      b2 = b1;
      b1 = tmp;
    }
    return xi * b1 - b2 + c(0);
  }
};

// --- Gauss-Legendre ---------------------------------------------------------

inline void gauss_legendre(int n, double a, double b, VectorXd& x, VectorXd& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = t;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (t * p1 - p0) / (t * t - 1);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    double p0 = 1, p1 = t;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (t * p1 - p0) / (t * t - 1);
    x(n - 1 - i) = a + (b - a) * 0.5 * (1 + t);
    w(n - 1 - i) = (b - a) / ((1 - t * t) * dp * dp);
  }
}

// --- periodic uniform grid with trigonometric differentiation --------------

struct FourierGrid {
  int N = 0;
  double L = 1;
  VectorXd x;        // nodes j*L/N
  double h = 0;      // quadrature weight per node (exact for trig polys)
  MatrixXd F;        // orthonormal real trig basis sampled at nodes
  VectorXd omega;    // frequency of each basis column (rad per unit length)
  MatrixXd D, D2;    // differentiation on node values
  MatrixXd P;        // F * h * F^T == identity on the resolved space

  // value vector -> modal coefficients
  VectorXd to_modal(const VectorXd& v) const { return h * (F.transpose() * v); }
};

inline FourierGrid make_fourier_grid(int N, double L) {
  FourierGrid g;
  g.N = N;
  g.L = L;
  g.h = L / N;
  g.x.resize(N);
  for (int j = 0; j < N; ++j) g.x(j) = L * j / N;
  g.F.resize(N, N);
  g.omega.resize(N);
  int col = 0;
  g.F.col(col).setConstant(1.0 / std::sqrt(L));
  g.omega(col++) = 0;
  int lmax = (N % 2 == 0) ? N / 2 - 1 : (N - 1) / 2;
  for (int l = 1; l <= lmax; ++l) {
    double om = 2 * kPi * l / L;
    for (int j = 0; j < N; ++j) {
      g.F(j, col) = std::sqrt(2.0 / L) * std::cos(om * g.x(j));
      g.F(j, col + 1) = std::sqrt(2.0 / L) * std::sin(om * g.x(j));
    }
    g.omega(col) = om;
    g.omega(col + 1) = om;
    col += 2;
  }
  if (N % 2 == 0) {
    double om = kPi * N / L;
    for (int j = 0; j < N; ++j)
      g.F(j, col) = std::sqrt(1.0 / L) * std::cos(om * g.x(j));
    g.omega(col++) = om;
  }
  // first derivative: rotate (cos,sin) pairs; Nyquist mode mapped to zero
  MatrixXd L1 = MatrixXd::Zero(N, N), L2 = MatrixXd::Zero(N, N);
  col = 1;
  for (int l = 1; l <= lmax; ++l) {
    double om = 2 * kPi * l / L;
    L1(col, col + 1) = om;
    L1(col + 1, col) = -om;
    L2(col, col) = -om * om;
    L2(col + 1, col + 1) = -om * om;
    col += 2;
  }
  if (N % 2 == 0) L2(col, col) = -std::pow(kPi * N / L, 2);
  MatrixXd Ft = g.h * g.F.transpose();
  g.D = g.F * (L1 * Ft);
  g.D2 = g.F * (L2 * Ft);
  g.P = g.F * Ft;
  return g;
}

// trig interpolation of periodic samples at arbitrary points
inline double fourier_eval(const FourierGrid& g, const VectorXd& values,
                           double t) {
  VectorXd m = g.to_modal(values);
  double r = m(0) / std::sqrt(g.L);
  int col = 1;
  int lmax = (g.N % 2 == 0) ? g.N / 2 - 1 : (g.N - 1) / 2;
  for (int l = 1; l <= lmax; ++l) {
    double om = 2 * kPi * l / g.L;
    r += std::sqrt(2.0 / g.L) * (m(col) * std::cos(om * t) + m(col + 1) * std::sin(om * t));
    col += 2;
  }
  if (g.N % 2 == 0) r += std::sqrt(1.0 / g.L) * m(col) * std::cos(kPi * g.N / g.L * t);
  return r;
}

}  // namespace cmctube
