#pragma once

#include <functional>
#include <memory>

#include "cmctube/cheb.hpp"
#include "cmctube/jet.hpp"
#include "cmctube/ode.hpp"

namespace cmctube {

// ---------------------------------------------------------------------------
// Charts of the supporting hypersurface. A chart maps m parameters to a point
// of the boundary in R^{m+1}; evaluation is through jets so that every
// derivative up to 4th order is analytic.
// ---------------------------------------------------------------------------

class Chart {
 public:
  virtual ~Chart() = default;
  virtual int param_dim() const = 0;    // m
  virtual int ambient_dim() const = 0;  // m + 1
  // ambient coordinates as jets in the chart parameters
  virtual JetVec jet(const VectorXd& u) const = 0;
  // any direction with positive inner product with the inward normal at X(u)
  virtual VectorXd inward_reference(const VectorXd& X) const = 0;
  virtual bool flat() const { return false; }
};

class FlatChart : public Chart {
 public:
  explicit FlatChart(int m) : m_(m) {}
  int param_dim() const override { return m_; }
  int ambient_dim() const override { return m_ + 1; }
  JetVec jet(const VectorXd& u) const override {
    JetVec X(m_ + 1, Jet(m_));
    for (int a = 0; a < m_; ++a) X[a] = Jet::variable(m_, u(a), a);
    return X;
  }
  VectorXd inward_reference(const VectorXd& X) const override {
    VectorXd r = VectorXd::Zero(m_ + 1);
    r(m_) = 1.0;
    return r;
  }
  bool flat() const override { return true; }

 private:
  int m_;
};

// round sphere of radius rho in R^{m+1}, nested polar parametrization
class SphereChart : public Chart {
 public:
  SphereChart(int m, double rho) : m_(m), rho_(rho) {}
  int param_dim() const override { return m_; }
  int ambient_dim() const override { return m_ + 1; }
  JetVec jet(const VectorXd& u) const override {
    std::vector<Jet> ang(m_);
    for (int a = 0; a < m_; ++a) ang[a] = Jet::variable(m_, u(a), a);
    JetVec X(m_ + 1, Jet(m_));
    // (cos u1 C, sin u1 C, sin u2 C', ...) with C the product of higher cosines
    Jet c = Jet::constant(m_, rho_);
    for (int a = m_ - 1; a >= 1; --a) {
      X[a + 1] = sin(ang[a]) * c;
      c = c * cos(ang[a]);
    }
    X[0] = cos(ang[0]) * c;
    X[1] = sin(ang[0]) * c;
    return X;
  }
  VectorXd inward_reference(const VectorXd& X) const override { return -X; }

 private:
  int m_;
  double rho_;
};

// triaxial ellipsoid in R^3
class EllipsoidChart : public Chart {
 public:
  EllipsoidChart(double a, double b, double c) : a_(a), b_(b), c_(c) {}
  int param_dim() const override { return 2; }
  int ambient_dim() const override { return 3; }
  JetVec jet(const VectorXd& u) const override {
    Jet phi = Jet::variable(2, u(0), 0);
    Jet lam = Jet::variable(2, u(1), 1);
    JetVec X(3, Jet(2));
    X[0] = cos(phi) * cos(lam) * a_;
    X[1] = sin(phi) * cos(lam) * b_;
    X[2] = sin(lam) * c_;
    return X;
  }
  VectorXd inward_reference(const VectorXd& X) const override { return -X; }
  double a() const { return a_; }
  double b() const { return b_; }
  double c() const { return c_; }

 private:
  double a_, b_, c_;
};

// level set F = 0 turned into a graph chart over the tangent plane of a base
// point; the graph height is solved order by order in jet space
class ImplicitSurface {
 public:
  virtual ~ImplicitSurface() = default;
  virtual Jet eval(const JetVec& xyz) const = 0;
  virtual VectorXd interior_point() const = 0;
};

class ImplicitChart : public Chart {
 public:
  ImplicitChart(std::shared_ptr<const ImplicitSurface> f, const VectorXd& p0)
      : f_(std::move(f)), p0_(p0) {
    const int d = int(p0.size());
    m_ = d - 1;
    // gradient at p0 by jets in d ambient variables is not available (jets
    // carry at most 3 vars); use the m+1 <= 4 case via finite differences of
    // the 1-var jet along axes.
    VectorXd grad(d);
    for (int i = 0; i < d; ++i) {
      JetVec x(d, Jet(1));
      for (int j = 0; j < d; ++j)
        x[j] = (j == i) ? Jet::variable(1, p0(j), 0) : Jet::constant(1, p0(j));
      grad(i) = f_->eval(x).partial(1);
    }
    nu_ = grad.normalized();
    // orthonormal tangent frame of the level set at p0
    Eigen::FullPivLU<MatrixXd> lu(nu_.transpose());
    MatrixXd ker = lu.kernel();
    Eigen::HouseholderQR<MatrixXd> qr(ker);
    MatrixXd Q = qr.householderQ();
    T_ = Q.leftCols(m_);
  }
  int param_dim() const override { return m_; }
  int ambient_dim() const override { return m_ + 1; }
  JetVec jet(const VectorXd& u) const override {
    const int d = m_ + 1;
    // solve F(p0 + T u + g nu) = 0 for the jet g
    // Newton in jet space: each sweep fixes one more order
    double g0 = 0.0;
    for (int it = 0; it < 60; ++it) {
      // scalar Newton for the zeroth coefficient, derivative along nu
      JetVec xn(d, Jet(1));
      for (int j = 0; j < d; ++j) {
        double base = p0_(j) + g0 * nu_(j);
        for (int a = 0; a < m_; ++a) base += T_(j, a) * u(a);
        xn[j] = Jet::constant(1, base) + Jet::variable(1, 0.0, 0) * nu_(j);
      }
      Jet Fj = f_->eval(xn);
      double step = Fj.value() / Fj.partial(1);
      g0 -= step;
      if (std::abs(step) < 1e-15) break;
    }
    auto make_point = [&](const Jet& gj) {
      JetVec x(d, Jet(m_));
      for (int j = 0; j < d; ++j) {
        Jet xj = Jet::constant(m_, p0_(j)) + gj * nu_(j);
        for (int a = 0; a < m_; ++a)
          xj = xj + Jet::variable(m_, u(a), a) * T_(j, a);
        x[j] = xj;
      }
      return x;
    };
    Jet g = Jet::constant(m_, g0);
    double dFdg;
    {
      JetVec xn(d, Jet(1));
      for (int j = 0; j < d; ++j) {
        double base = p0_(j) + g0 * nu_(j);
        for (int a = 0; a < m_; ++a) base += T_(j, a) * u(a);
        xn[j] = Jet::constant(1, base) + Jet::variable(1, 0.0, 0) * nu_(j);
      }
      dFdg = f_->eval(xn).partial(1);
    }
    for (int sweep = 0; sweep <= Jet::kOrder + 1; ++sweep) {
      Jet Fj = f_->eval(make_point(g));
      g = g - Fj * (1.0 / dFdg);
    }
    return make_point(g);
  }
  VectorXd inward_reference(const VectorXd& X) const override {
    return f_->interior_point() - X;
  }

 private:
  std::shared_ptr<const ImplicitSurface> f_;
  VectorXd p0_, nu_;
  MatrixXd T_;
  int m_;
};

// ---------------------------------------------------------------------------
// extrinsic/intrinsic data of the boundary at one chart point
// ---------------------------------------------------------------------------

struct PointGeometry {
  int m = 2;                       // boundary dimension
  VectorXd X;                      // ambient point
  MatrixXd Xd;                     // (m+1) x m tangent vectors
  std::vector<MatrixXd> Xdd;       // Xdd[a] col b = d^2 X / du^a du^b
  MatrixXd g, ginv;                // induced metric, chart basis
  VectorXd V;                      // inward unit normal
  MatrixXd dV;                     // (m+1) x m, dV/du^alpha
  std::vector<MatrixXd> d2V;       // d2V[a] col b = d^2 V / du^a du^b
  MatrixXd shape_inward;           // h w.r.t. inward normal, sphere -> +g/rho
  // Christoffel symbols and derivatives: Gamma[c][a][b], dGamma[d][c][a][b],
  // d2Gamma[d][e][c][a][b] with small fixed bounds (m <= 3)
  double Gamma[3][3][3] = {};
  double dGamma[3][3][3][3] = {};
  double d2Gamma[3][3][3][3][3] = {};
  double R4[3][3][3][3] = {};      // <R(e_a,e_b) e_c, e_d>, chart basis
};

namespace detail {

// inverse of a symmetric jet matrix by Neumann series, to full jet order
inline void jet_mat_inverse(const std::vector<std::vector<Jet>>& G, int m,
                            std::vector<std::vector<Jet>>& Ginv) {
  const int nv = G[0][0].nvars();
  MatrixXd G0(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) G0(i, j) = G[i][j].value();
  MatrixXd G0i = G0.inverse();
  // N = G - G0 (no constant term); Ginv = (I + sum_p (-G0i N)^p) G0i
  std::vector<std::vector<Jet>> M(m, std::vector<Jet>(m, Jet(nv)));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      Jet nij(nv);
      for (int k = 0; k < m; ++k) {
        Jet Nkj = G[k][j];
        Nkj.coeffs()(0) -= G0(k, j);
        nij = nij + Nkj * (-G0i(i, k));
      }
      M[i][j] = nij;  // (-G0i N)
    }
  std::vector<std::vector<Jet>> term = M, acc(m, std::vector<Jet>(m, Jet(nv)));
  for (int i = 0; i < m; ++i) acc[i][i] = Jet::constant(nv, 1.0);
  for (int p = 1; p <= Jet::kOrder; ++p) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) acc[i][j] = acc[i][j] + term[i][j];
    if (p < Jet::kOrder) {
      std::vector<std::vector<Jet>> nt(m, std::vector<Jet>(m, Jet(nv)));
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          Jet s(nv);
          for (int k = 0; k < m; ++k) s = s + term[i][k] * M[k][j];
          nt[i][j] = s;
        }
      term = nt;
    }
  }
  Ginv.assign(m, std::vector<Jet>(m, Jet(nv)));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      Jet s(nv);
      for (int k = 0; k < m; ++k) s = s + acc[i][k] * G0i(k, j);
      Ginv[i][j] = s;
    }
}

// generalized cross product: the vector orthogonal to m columns in R^{m+1}
inline JetVec jet_cross(const std::vector<JetVec>& cols, int nv) {
  const int d = int(cols[0].size());
  JetVec W(d, Jet(nv));
  if (d == 3) {
    const JetVec &A = cols[0], &B = cols[1];
    W[0] = A[1] * B[2] - A[2] * B[1];
    W[1] = A[2] * B[0] - A[0] * B[2];
    W[2] = A[0] * B[1] - A[1] * B[0];
  } else if (d == 4) {
    // cofactor expansion of det[e; A; B; C]
    const JetVec &A = cols[0], &B = cols[1], &C = cols[2];
    auto det3 = [&](int i, int j, int k) {
      return A[i] * (B[j] * C[k] - B[k] * C[j]) -
             A[j] * (B[i] * C[k] - B[k] * C[i]) +
             A[k] * (B[i] * C[j] - B[j] * C[i]);
    };
    W[0] = det3(1, 2, 3);
    W[1] = -det3(0, 2, 3);
    W[2] = det3(0, 1, 3);
    W[3] = -det3(0, 1, 2);
  } else if (d == 2) {
    const JetVec& A = cols[0];
    W[0] = -A[1];
    W[1] = A[0];
  }
  return W;
}

}  // namespace detail

inline PointGeometry point_geometry(const Chart& B, const VectorXd& u) {
  PointGeometry P;
  const int m = B.param_dim();
  const int d = m + 1;
  P.m = m;
  JetVec X = B.jet(u);
  const int nv = m;

  P.X.resize(d);
  for (int i = 0; i < d; ++i) P.X(i) = X[i].value();
  std::vector<JetVec> T(m, JetVec(d, Jet(nv)));
  for (int a = 0; a < m; ++a)
    for (int i = 0; i < d; ++i) T[a][i] = X[i].deriv(a);
  P.Xd.resize(d, m);
  for (int a = 0; a < m; ++a)
    for (int i = 0; i < d; ++i) P.Xd(i, a) = T[a][i].value();
  P.Xdd.assign(m, MatrixXd(d, m));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int i = 0; i < d; ++i) P.Xdd[a](i, b) = T[a][i].deriv(b).value();

  // metric jets
  std::vector<std::vector<Jet>> g(m, std::vector<Jet>(m, Jet(nv)));
  for (int a = 0; a < m; ++a)
    for (int b = a; b < m; ++b) {
      g[a][b] = dot(T[a], T[b]);
      g[b][a] = g[a][b];
    }
  P.g.resize(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) P.g(a, b) = g[a][b].value();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P.g);
  if (es.eigenvalues().minCoeff() <= 1e-14)
    fail(ErrorCode::SingularChart, "induced metric not positive definite");
  P.ginv = P.g.inverse();

  std::vector<std::vector<Jet>> ginv;
  detail::jet_mat_inverse(g, m, ginv);

  // Christoffels as jets (order drops by one per derivative of g)
  std::vector<std::vector<std::vector<Jet>>> dg(
      m, std::vector<std::vector<Jet>>(m, std::vector<Jet>(m, Jet(nv))));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c) dg[c][a][b] = g[a][b].deriv(c);
  std::vector<std::vector<std::vector<Jet>>> Gam(
      m, std::vector<std::vector<Jet>>(m, std::vector<Jet>(m, Jet(nv))));
  for (int c = 0; c < m; ++c)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        Jet s(nv);
        for (int dd = 0; dd < m; ++dd)
          s = s + ginv[c][dd] * (dg[a][dd][b] + dg[b][dd][a] - dg[dd][a][b]);
        Gam[c][a][b] = s * 0.5;
      }
  for (int c = 0; c < m; ++c)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        P.Gamma[c][a][b] = Gam[c][a][b].value();
        for (int e = 0; e < m; ++e) {
          Jet de = Gam[c][a][b].deriv(e);
          P.dGamma[e][c][a][b] = de.value();
          for (int f = 0; f < m; ++f) P.d2Gamma[e][f][c][a][b] = de.deriv(f).value();
        }
      }

  // curvature tensor R(e_a, e_b) e_c = R^s_{cab} e_s from the Christoffels
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c)
        for (int dd = 0; dd < m; ++dd) {
          double s = 0;
          for (int e = 0; e < m; ++e) {
            double Re = P.dGamma[a][e][b][c] - P.dGamma[b][e][a][c];
            for (int f = 0; f < m; ++f)
              Re += P.Gamma[e][a][f] * P.Gamma[f][b][c] -
                    P.Gamma[e][b][f] * P.Gamma[f][a][c];
            s += Re * P.g(e, dd);
          }
          P.R4[a][b][c][dd] = s;
        }

  // inward unit normal and its first two derivatives
  JetVec W = detail::jet_cross(T, nv);
  Jet nrm = sqrt(dot(W, W));
  JetVec Vj(d, Jet(nv));
  for (int i = 0; i < d; ++i) Vj[i] = W[i] / nrm;
  VectorXd Vval(d);
  for (int i = 0; i < d; ++i) Vval(i) = Vj[i].value();
  double sign = (Vval.dot(B.inward_reference(P.X)) >= 0) ? 1.0 : -1.0;
  P.V = sign * Vval;
  P.dV.resize(d, m);
  P.d2V.assign(m, MatrixXd(d, m));
  for (int a = 0; a < m; ++a) {
    for (int i = 0; i < d; ++i) {
      Jet da = Vj[i].deriv(a);
      P.dV(i, a) = sign * da.value();
      for (int b = 0; b < m; ++b) P.d2V[a](i, b) = sign * da.deriv(b).value();
    }
  }
  // classical second fundamental form (inward normal): h(a,b) = -<dV_a, X_b>
  P.shape_inward.resize(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      P.shape_inward(a, b) = -P.dV.col(a).dot(P.Xd.col(b));
  P.shape_inward = 0.5 * (P.shape_inward + P.shape_inward.transpose()).eval();
  return P;
}

// ---------------------------------------------------------------------------
// closed submanifolds of the boundary (k = 1 discretization)
// ---------------------------------------------------------------------------

struct SubmanifoldK {
  std::shared_ptr<const Chart> B;
  int m = 2;                // boundary dimension
  int n = 1;                // codimension in the boundary
  double length = 0;
  FourierGrid grid;         // arc-length grid, period = length
  MatrixXd u;               // N x m chart coordinates (continuous lift)
  VectorXd drift;           // secular slope of u(s) over one period
  MatrixXd Et;              // N x m unit tangent, chart coefficients
  std::vector<MatrixXd> En; // n entries of N x m normal frame coefficients
  std::vector<PointGeometry> pg;
  MatrixXd kappa;           // N x n mean curvature vector in the E_i frame
  double minimality = 0;    // sup norm of the mean curvature vector
  bool minimal = false;
  VectorXd jacobi_curv;     // N, sum_a <R(E_a,E_1)E_a, E_1> for n = 1
  MatrixXd h_frame;         // N x (k+n)^2 boundary shape in the adapted frame
  std::vector<MatrixXd> R_frame;  // per node, (k+n)^4 flattened

  int N() const { return grid.N; }
  int frame_dim() const { return 1 + n; }
  double h_at(int node, int alpha, int beta) const {
    return h_frame(node, alpha * frame_dim() + beta);
  }
  double R_at(int node, int a, int b, int c, int d) const {
    int fd = frame_dim();
    return R_frame[node](a * fd + b, c * fd + d);
  }
};

namespace detail {

inline VectorXd chart_vec(const PointGeometry& P, const VectorXd& coeff) {
  return P.Xd * coeff;
}

// curvature vector of a unit-speed curve, chart components
inline VectorXd curve_acc(const PointGeometry& P, const VectorXd& du,
                          const VectorXd& ddu) {
  const int m = P.m;
  VectorXd acc = ddu;
  for (int c = 0; c < m; ++c)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) acc(c) += P.Gamma[c][a][b] * du(a) * du(b);
  return acc;
}

}  // namespace detail

// Build the adapted data (frames, extrinsic tensors, minimality) for a closed
// curve given by a continuous chart-coordinate lift tau in [0,1) -> u.
inline SubmanifoldK build_submanifold(std::shared_ptr<const Chart> B,
                                      const std::function<VectorXd(double)>& lift,
                                      int N, double tol_min = 1e-8) {
  SubmanifoldK K;
  K.B = B;
  K.m = B->param_dim();
  K.n = K.m - 1;

  // arc-length reparametrization: sample speed on a fine grid
  const int M = std::max(4 * N, 256);
  FourierGrid fine = make_fourier_grid(M, 1.0);
  MatrixXd uf(M, K.m);
  for (int j = 0; j < M; ++j) uf.row(j) = lift(fine.x(j)).transpose();
  VectorXd dr(K.m);
  dr = (lift(1.0) - lift(0.0));  // winding over one period
  MatrixXd up(M, K.m);  // periodic part
  for (int j = 0; j < M; ++j)
    up.row(j) = uf.row(j) - fine.x(j) * dr.transpose();
  MatrixXd dud(M, K.m);
  for (int a = 0; a < K.m; ++a)
    dud.col(a) = fine.D * up.col(a) + VectorXd::Constant(M, dr(a));
  VectorXd speed(M);
  for (int j = 0; j < M; ++j) {
    PointGeometry P = point_geometry(*B, uf.row(j).transpose());
    VectorXd du = dud.row(j).transpose();
    speed(j) = std::sqrt(du.dot(P.g * du));
  }
  K.length = speed.mean();
  // s(tau) by modal integration of speed
  VectorXd mo = fine.to_modal(speed);
  auto s_of_tau = [&](double tau) {
    double r = mo(0) / std::sqrt(fine.L) * tau;
    int col = 1;
    int lmax = (M % 2 == 0) ? M / 2 - 1 : (M - 1) / 2;
    for (int l = 1; l <= lmax; ++l) {
      double om = 2 * kPi * l;
      r += std::sqrt(2.0) * (mo(col) * std::sin(om * tau) / om +
                             mo(col + 1) * (1 - std::cos(om * tau)) / om);
      col += 2;
    }
    return r;
  };

  K.grid = make_fourier_grid(N, K.length);
  K.u.resize(N, K.m);
  for (int i = 0; i < N; ++i) {
    double starget = K.length * i / N;
    double tau = double(i) / N;
    for (int it = 0; it < 80; ++it) {
      double g = s_of_tau(tau) - starget;
      double dg = fourier_eval(fine, speed, tau);
      double step = g / dg;
      tau -= step;
      if (std::abs(step) < 1e-15) break;
    }
    VectorXd upx(K.m);
    for (int a = 0; a < K.m; ++a) upx(a) = fourier_eval(fine, up.col(a), tau) + tau * dr(a);
    K.u.row(i) = upx.transpose();
  }
  K.drift = dr / K.length;

  // node geometry and frame
  K.pg.resize(N);
  MatrixXd uper(N, K.m);
  for (int i = 0; i < N; ++i) {
    K.pg[i] = point_geometry(*B, K.u.row(i).transpose());
    uper.row(i) = K.u.row(i) - K.grid.x(i) * K.drift.transpose();
  }
  MatrixXd du(N, K.m), ddu(N, K.m);
  for (int a = 0; a < K.m; ++a) {
    du.col(a) = K.grid.D * uper.col(a) + VectorXd::Constant(N, K.drift(a));
    ddu.col(a) = K.grid.D2 * uper.col(a);
  }
  K.Et.resize(N, K.m);
  K.En.assign(K.n, MatrixXd(N, K.m));
  for (int i = 0; i < N; ++i) {
    const PointGeometry& P = K.pg[i];
    VectorXd t = du.row(i).transpose();
    double sp = std::sqrt(t.dot(P.g * t));
    t /= sp;
    K.Et.row(i) = t.transpose();
    // orthonormal completion of the tangent within the boundary
    MatrixXd base(K.m, K.n);
    if (K.m == 2) {
      base.col(0) = VectorXd::Unit(2, (std::abs(t(0)) > std::abs(t(1))) ? 1 : 0);
    } else {
      int c = 0;
      VectorXd at = t.cwiseAbs();
      int skip;
      at.maxCoeff(&skip);
      for (int a = 0; a < K.m; ++a)
        if (a != skip) base.col(c++) = VectorXd::Unit(K.m, a);
    }
    std::vector<VectorXd> frame{t};
    for (int c = 0; c < K.n; ++c) {
      VectorXd v = base.col(c);
      for (const auto& f : frame) v -= f * f.dot(P.g * v);
      v /= std::sqrt(v.dot(P.g * v));
      frame.push_back(v);
      K.En[c].row(i) = v.transpose();
    }
    // consistent orientation: ambient frame (tangent frame..., V) positively
    // oriented; flip the last normal if needed
    MatrixXd A(K.m + 1, K.m + 1);
    for (int c = 0; c <= K.n; ++c) A.col(c) = P.Xd * frame[c];
    A.col(K.m) = P.V;
    if (A.determinant() < 0) K.En[K.n - 1].row(i) *= -1.0;
  }
  // fix sign continuity of normals along the curve (m = 2 needs nothing more;
  // general case: align with previous node)
  for (int c = 0; c < K.n; ++c)
    for (int i = 1; i < N; ++i) {
      VectorXd prev = K.En[c].row(i - 1).transpose();
      VectorXd cur = K.En[c].row(i).transpose();
      if ((K.pg[i].Xd * cur).dot(K.pg[i - 1].Xd * prev) < 0) K.En[c].row(i) *= -1.0;
    }

  // mean curvature vector (frame components) and sectional term for n = 1
  K.kappa.resize(N, K.n);
  K.jacobi_curv.resize(N);
  K.h_frame.resize(N, (1 + K.n) * (1 + K.n));
  K.R_frame.assign(N, MatrixXd((1 + K.n) * (1 + K.n), (1 + K.n) * (1 + K.n)));
  for (int i = 0; i < N; ++i) {
    const PointGeometry& P = K.pg[i];
    VectorXd t = K.Et.row(i).transpose();
    VectorXd acc = detail::curve_acc(P, du.row(i).transpose(), ddu.row(i).transpose());
    // remove the tangential (reparametrization) component
    double sp2 = du.row(i) * P.g * du.row(i).transpose();
    acc /= sp2;  // curvature vector of the unit-speed curve
    VectorXd tt = du.row(i).transpose() / std::sqrt(sp2);
    acc -= tt * (tt.dot(P.g * acc));
    for (int c = 0; c < K.n; ++c) {
      VectorXd e = K.En[c].row(i).transpose();
      K.kappa(i, c) = e.dot(P.g * acc);
    }
    // frame tensors
    std::vector<VectorXd> fr{t};
    for (int c = 0; c < K.n; ++c) fr.push_back(K.En[c].row(i).transpose());
    int fd = 1 + K.n;
    for (int a = 0; a < fd; ++a)
      for (int b = 0; b < fd; ++b) {
        double hval = 0;
        for (int al = 0; al < K.m; ++al)
          for (int be = 0; be < K.m; ++be)
            hval += fr[a](al) * fr[b](be) * P.shape_inward(al, be);
        K.h_frame(i, a * fd + b) = hval;
        for (int c = 0; c < fd; ++c)
          for (int dd2 = 0; dd2 < fd; ++dd2) {
            double r = 0;
            for (int p = 0; p < K.m; ++p)
              for (int q = 0; q < K.m; ++q)
                for (int rr = 0; rr < K.m; ++rr)
                  for (int ss = 0; ss < K.m; ++ss)
                    r += fr[a](p) * fr[b](q) * fr[c](rr) * fr[dd2](ss) *
                         P.R4[p][q][rr][ss];
            K.R_frame[i](a * fd + b, c * fd + dd2) = r;
          }
      }
    // sum_a <R(E_a, E_1) E_a, E_1>, frame index 0 is tangential
    K.jacobi_curv(i) = K.R_at(i, 0, 1, 0, 1);
  }
  K.minimality = sup_norm(VectorXd(K.kappa.rowwise().norm()));
  K.minimal = K.minimality < tol_min;
  return K;
}

inline double minimality_residual(const SubmanifoldK& K) { return K.minimality; }

// ---------------------------------------------------------------------------
// closed geodesic finder: curve shortening followed by a Gauss-Newton polish
// of the geodesic equation in a spectral representation
// ---------------------------------------------------------------------------

struct GeodesicOptions {
  int nodes = 96;
  double tol = 1e-8;       // minimality target (sup norm)
  int max_newton = 60;
  int max_shortening = 400;
  double shortening_dt = 5e-3;
};

inline SubmanifoldK find_closed_geodesic(std::shared_ptr<const Chart> B,
                                         const std::function<VectorXd(double)>& loop0,
                                         const GeodesicOptions& opt = {}) {
  const int m = B->param_dim();
  const int N = opt.nodes;
  FourierGrid grid = make_fourier_grid(N, 1.0);
  VectorXd dr = loop0(1.0) - loop0(0.0);
  MatrixXd uper(N, m);
  for (int j = 0; j < N; ++j)
    uper.row(j) = (loop0(grid.x(j)) - grid.x(j) * dr).transpose();

  auto residual = [&](const MatrixXd& uperiodic) {
    MatrixXd du(N, m), ddu(N, m), res(N, m);
    for (int a = 0; a < m; ++a) {
      du.col(a) = grid.D * uperiodic.col(a) + VectorXd::Constant(N, dr(a));
      ddu.col(a) = grid.D2 * uperiodic.col(a);
    }
    for (int j = 0; j < N; ++j) {
      VectorXd uj = uperiodic.row(j).transpose() + grid.x(j) * dr;
      PointGeometry P = point_geometry(*B, uj);
      res.row(j) =
          detail::curve_acc(P, du.row(j).transpose(), ddu.row(j).transpose())
              .transpose();
    }
    return res;
  };

  // curve shortening: flow along the (chart) geodesic-curvature direction,
  // semi-implicit in the second-derivative part
  {
    const double dt = opt.shortening_dt;
    Eigen::PartialPivLU<MatrixXd> lu(MatrixXd::Identity(N, N) - dt * grid.D2);
    for (int it = 0; it < opt.max_shortening; ++it) {
      MatrixXd res = residual(uper);
      if (sup_norm(res) < 0.5) break;
      for (int a = 0; a < m; ++a) {
        VectorXd nonlinear = res.col(a) - grid.D2 * uper.col(a);
        uper.col(a) = lu.solve(uper.col(a) + dt * nonlinear);
        uper.col(a) = grid.P * uper.col(a);
      }
    }
  }

  // Newton with a phase-fixing row; the Jacobian is spectral in the
  // differentiation part and pointwise in the Christoffel part
  const int nun = N * m;
  MatrixXd res = residual(uper);
  double prev = sup_norm(res);
  bool converged = false;
  for (int it = 0; it < opt.max_newton; ++it) {
    if (prev < 1e-13) { converged = true; break; }
    MatrixXd J = MatrixXd::Zero(nun + 1, nun);
    VectorXd r(nun + 1);
    for (int j = 0; j < N; ++j)
      for (int a = 0; a < m; ++a) r(j * m + a) = res(j, a);
    MatrixXd du(N, m);
    for (int a = 0; a < m; ++a)
      du.col(a) = grid.D * uper.col(a) + VectorXd::Constant(N, dr(a));
    for (int i = 0; i < N; ++i) {
      VectorXd ui = uper.row(i).transpose() + grid.x(i) * dr;
      PointGeometry P = point_geometry(*B, ui);
      VectorXd dui = du.row(i).transpose();
      for (int c = 0; c < m; ++c) {
        for (int j = 0; j < N; ++j)
          for (int a = 0; a < m; ++a) {
            double val = (a == c) ? grid.D2(i, j) : 0.0;
            double gterm = 0;
            for (int b = 0; b < m; ++b) gterm += P.Gamma[c][a][b] * dui(b);
            val += 2 * gterm * grid.D(i, j);
            if (i == j) {
              double dg = 0;
              for (int p = 0; p < m; ++p)
                for (int q = 0; q < m; ++q) dg += P.dGamma[a][c][p][q] * dui(p) * dui(q);
              val += dg;
            }
            J(i * m + c, j * m + a) += val;
          }
      }
    }
    // phase fix: no motion of node 0 along the curve direction
    J.row(nun).setZero();
    VectorXd d0(m);
    for (int a = 0; a < m; ++a) d0(a) = (grid.D * uper.col(a))(0) + dr(a);
    for (int a = 0; a < m; ++a) J(nun, 0 * m + a) = d0(a);
    r(nun) = 0;
    // geodesics come in families (phase, ambient symmetries); a thresholded
    // SVD keeps the step out of the null directions
    Eigen::BDCSVD<MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-7);
    VectorXd step = svd.solve(-r);
    double lambda = 1.0;
    for (int ls = 0; ls < 12; ++ls) {
      MatrixXd utry = uper;
      for (int j = 0; j < N; ++j)
        for (int a = 0; a < m; ++a) utry(j, a) += lambda * step(j * m + a);
      MatrixXd rt = residual(utry);
      if (sup_norm(rt) < prev || prev < 1e-12) {
        uper = utry;
        res = rt;
        prev = sup_norm(rt);
        break;
      }
      lambda *= 0.5;
      if (ls == 11) fail(ErrorCode::NoConvergence, "geodesic line search stalled");
    }
    if (prev < 1e-13) { converged = true; break; }
  }
  if (!converged && prev > 1e-10)
    fail(ErrorCode::NoConvergence, "geodesic refinement stalled, residual " +
                                       fmt(prev));

  auto lift = [&](double tau) {
    VectorXd u(m);
    for (int a = 0; a < m; ++a)
      u(a) = fourier_eval(grid, uper.col(a), tau) + tau * dr(a);
    return u;
  };
  SubmanifoldK K = build_submanifold(B, lift, opt.nodes, opt.tol);
  if (!K.minimal)
    fail(ErrorCode::NotMinimal,
         "residual " + fmt(K.minimality) + " above tolerance " + fmt(opt.tol));
  return K;
}

}  // namespace cmctube
