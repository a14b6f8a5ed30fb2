#pragma once

#include "cmctube/geometry.hpp"

namespace cmctube {

// Everything the tube kernel needs at one point of a normal ray: the chart
// coordinates with their derivatives in (ybar, t), and the ambient chart data
// at that point.
struct RaySample {
  VectorXd u, u_t, u_tt;   // chart coords of the ray and t-derivatives
  VectorXd u_y, u_yt;      // d/dybar family derivatives
  VectorXd u_yy;
  VectorXd X, V;           // ambient point and inward normal
  MatrixXd dX, dV;         // (m+1) x m chart derivatives
  std::vector<MatrixXd> d2X, d2V;  // [a] col b layout
};

// One Fermi normal ray (k = 1, n = 1): the geodesic through a node of K in
// the unit normal direction, with first and second variational fields in the
// arc-length position along K, all cached as Chebyshev series in the normal
// parameter t.
class FermiRay {
 public:
  double a = 0, b = 0;
  int m = 2;

  void build(const SubmanifoldK& K, int node, double tmax, int nfit = 33);
  RaySample eval(double t) const;

 private:
  ChebGrid fit_;
  // coefficient matrices, rows = Chebyshev coefficients
  MatrixXd c_, J_, H_;
  MatrixXd X_, dX_, d2X_, V_, dV_, d2V_;
  MatrixXd cder_;  // coefficient derivative for the t-range

  VectorXd eval_row(const MatrixXd& coef, const VectorXd& T) const {
    return coef.transpose() * T;
  }
};

namespace detail {

// rhs of the geodesic + first/second variational system
inline void ray_rhs(const Chart& B, const VectorXd& y, VectorXd& dy) {
  const int m = B.param_dim();
  VectorXd c = y.segment(0, m), cd = y.segment(m, m);
  VectorXd Jv = y.segment(2 * m, m), Jd = y.segment(3 * m, m);
  VectorXd Hv = y.segment(4 * m, m), Hd = y.segment(5 * m, m);
  PointGeometry P = point_geometry(B, c);
  dy.resize(6 * m);
  dy.segment(0, m) = cd;
  dy.segment(2 * m, m) = Jd;
  dy.segment(4 * m, m) = Hd;
  for (int g = 0; g < m; ++g) {
    double acc = 0, jacc = 0, hacc = 0;
    for (int al = 0; al < m; ++al)
      for (int be = 0; be < m; ++be) {
        acc -= P.Gamma[g][al][be] * cd(al) * cd(be);
        jacc -= 2 * P.Gamma[g][al][be] * Jd(al) * cd(be);
        hacc -= 2 * P.Gamma[g][al][be] * (Hd(al) * cd(be) + Jd(al) * Jd(be));
        for (int de = 0; de < m; ++de) {
          jacc -= P.dGamma[de][g][al][be] * Jv(de) * cd(al) * cd(be);
          hacc -= P.dGamma[de][g][al][be] *
                  (Hv(de) * cd(al) * cd(be) + 4 * Jv(de) * Jd(al) * cd(be));
          for (int ep = 0; ep < m; ++ep)
            hacc -= P.d2Gamma[de][ep][g][al][be] * Jv(de) * Jv(ep) * cd(al) * cd(be);
        }
      }
    dy(m + g) = acc;
    dy(3 * m + g) = jacc;
    dy(5 * m + g) = hacc;
  }
}

}  // namespace detail

inline void FermiRay::build(const SubmanifoldK& K, int node, double tmax, int nfit) {
  const Chart& B = *K.B;
  m = B.param_dim();
  a = -tmax;
  b = tmax;
  fit_ = make_cheb_grid(nfit, a, b);
  const int N = K.N();

  // spectral arc-length derivatives of the node data (drift-corrected for the
  // chart coordinates)
  MatrixXd uper(N, m);
  for (int i = 0; i < N; ++i)
    uper.row(i) = K.u.row(i) - K.grid.x(i) * K.drift.transpose();
  MatrixXd du(N, m), ddu(N, m), dE(N, m), ddE(N, m);
  for (int q = 0; q < m; ++q) {
    du.col(q) = K.grid.D * uper.col(q) + VectorXd::Constant(N, K.drift(q));
    ddu.col(q) = K.grid.D2 * uper.col(q);
    dE.col(q) = K.grid.D * K.En[0].col(q);
    ddE.col(q) = K.grid.D2 * K.En[0].col(q);
  }

  VectorXd y0(6 * m);
  y0.segment(0, m) = K.u.row(node).transpose();
  y0.segment(m, m) = K.En[0].row(node).transpose();
  y0.segment(2 * m, m) = du.row(node).transpose();
  y0.segment(3 * m, m) = dE.row(node).transpose();
  y0.segment(4 * m, m) = ddu.row(node).transpose();
  y0.segment(5 * m, m) = ddE.row(node).transpose();

  OdeRhs rhs = [&B](double, const VectorXd& y, VectorXd& dy) {
    detail::ray_rhs(B, y, dy);
  };
  OdeOptions opt;
  opt.rtol = 1e-12;
  opt.atol = 1e-13;
  opt.h_max = 0.1;

  // visit the fit nodes outward from t = 0 in both directions
  MatrixXd samples(nfit, 6 * m);
  int center = -1;
  for (int i = 0; i < nfit; ++i)
    if (std::abs(fit_.x(i)) < 1e-14) center = i;
  require(center >= 0, ErrorCode::BadConfig, "ray fit grid must contain t = 0");
  samples.row(center) = y0.transpose();
  VectorXd y = y0;
  for (int i = center + 1; i < nfit; ++i) {
    ode_integrate(rhs, fit_.x(i - 1), fit_.x(i), y, opt);
    samples.row(i) = y.transpose();
  }
  y = y0;
  for (int i = center - 1; i >= 0; --i) {
    ode_integrate(rhs, fit_.x(i + 1), fit_.x(i), y, opt);
    samples.row(i) = y.transpose();
  }

  // chart data at the sample points
  const int d = m + 1;
  MatrixXd Xs(nfit, d), dXs(nfit, d * m), d2Xs(nfit, d * m * m);
  MatrixXd Vs(nfit, d), dVs(nfit, d * m), d2Vs(nfit, d * m * m);
  for (int i = 0; i < nfit; ++i) {
    PointGeometry P = point_geometry(B, samples.row(i).segment(0, m).transpose());
    Xs.row(i) = P.X.transpose();
    Vs.row(i) = P.V.transpose();
    for (int al = 0; al < m; ++al) {
      dXs.row(i).segment(al * d, d) = P.Xd.col(al).transpose();
      dVs.row(i).segment(al * d, d) = P.dV.col(al).transpose();
      for (int be = 0; be < m; ++be) {
        d2Xs.row(i).segment((al * m + be) * d, d) = P.Xdd[al].col(be).transpose();
        d2Vs.row(i).segment((al * m + be) * d, d) = P.d2V[al].col(be).transpose();
      }
    }
  }

  // Chebyshev coefficients of everything
  auto fit_cols = [&](const MatrixXd& vals) { return MatrixXd(fit_.vand_inv * vals); };
  MatrixXd call(nfit, m), Jall(nfit, m), Hall(nfit, m);
  for (int i = 0; i < nfit; ++i) {
    call.row(i) = samples.row(i).segment(0, m);
    Jall.row(i) = samples.row(i).segment(2 * m, m);
    Hall.row(i) = samples.row(i).segment(4 * m, m);
  }
  c_ = fit_cols(call);
  J_ = fit_cols(Jall);
  H_ = fit_cols(Hall);
  X_ = fit_cols(Xs);
  dX_ = fit_cols(dXs);
  d2X_ = fit_cols(d2Xs);
  V_ = fit_cols(Vs);
  dV_ = fit_cols(dVs);
  d2V_ = fit_cols(d2Vs);

  // coefficient-space derivative for this range
  const int Nf = nfit;
  cder_ = MatrixXd::Zero(Nf, Nf);
  for (int col = 0; col < Nf; ++col) {
    VectorXd cc = VectorXd::Zero(Nf);
    cc(col) = 1.0;
    VectorXd bb = VectorXd::Zero(Nf + 2);
    for (int k = Nf - 2; k >= 0; --k) bb(k) = bb(k + 2) + 2 * (k + 1) * cc(k + 1);
    bb(0) *= 0.5;
    cder_.col(col) = bb.head(Nf) * (2.0 / (b - a));
  }
}

inline RaySample FermiRay::eval(double t) const {
  require(t >= a - 1e-12 && t <= b + 1e-12, ErrorCode::OutOfChart,
          "ray parameter outside cached range");
  const int d = m + 1;
  const int Nf = fit_.N;
  double xi = 2 * (t - a) / (b - a) - 1;
  VectorXd T = cheb_T_at(xi, Nf - 1);
  VectorXd Td = cder_.transpose() * T;   // T^t * cder == derivative sampling
  VectorXd Tdd = cder_.transpose() * Td;

  RaySample s;
  s.u = c_.transpose() * T;
  s.u_t = c_.transpose() * Td;
  s.u_tt = c_.transpose() * Tdd;
  s.u_y = J_.transpose() * T;
  s.u_yt = J_.transpose() * Td;
  s.u_yy = H_.transpose() * T;
  s.X = X_.transpose() * T;
  s.V = V_.transpose() * T;
  VectorXd dx = dX_.transpose() * T, dv = dV_.transpose() * T;
  VectorXd d2x = d2X_.transpose() * T, d2v = d2V_.transpose() * T;
  s.dX.resize(d, m);
  s.dV.resize(d, m);
  s.d2X.assign(m, MatrixXd(d, m));
  s.d2V.assign(m, MatrixXd(d, m));
  for (int al = 0; al < m; ++al) {
    s.dX.col(al) = dx.segment(al * d, d);
    s.dV.col(al) = dv.segment(al * d, d);
    for (int be = 0; be < m; ++be) {
      s.d2X[al].col(be) = d2x.segment((al * m + be) * d, d);
      s.d2V[al].col(be) = d2v.segment((al * m + be) * d, d);
    }
  }
  return s;
}

// One ray per node of K, reusable across scales: the rays only depend on the
// cached parameter range.
struct RayField {
  const SubmanifoldK* K = nullptr;
  double tmax = 0;
  std::vector<FermiRay> rays;
};

inline std::shared_ptr<RayField> build_ray_field(const SubmanifoldK& K,
                                                 double tmax) {
  require(K.n == 1, ErrorCode::BadConfig, "fermi rays are built for n = 1");
  auto F = std::make_shared<RayField>();
  F->K = &K;
  F->tmax = tmax;
  F->rays.resize(K.N());
  for (int i = 0; i < K.N(); ++i) F->rays[i].build(K, i, tmax);
  return F;
}

// Fermi coordinate data at one scale.
struct FermiChart {
  const SubmanifoldK* K = nullptr;
  double eps = 0;
  std::shared_ptr<RayField> field;
  const FermiRay& ray(int node) const { return field->rays[node]; }
};

inline FermiChart build_fermi_chart(const SubmanifoldK& K, double eps,
                                    std::shared_ptr<RayField> field = nullptr,
                                    double reach = 1.6) {
  FermiChart F;
  F.K = &K;
  F.eps = eps;
  F.field = field && field->tmax >= eps * reach - 1e-12
                ? field
                : build_ray_field(K, std::max(1e-3, eps * reach));

  // focal-radius guard: the scaled map F(y, x, x3) must stay an immersion
  // over the tube range |(x, x3)| <= 1.2
  for (int i = 0; i < K.N(); i += std::max(1, K.N() / 24)) {
    for (double xf : {-1.15, -0.6, 0.0, 0.6, 1.15}) {
      for (double x3 : {0.0, 0.55, 1.15}) {
        RaySample s = F.ray(i).eval(eps * xf);
        MatrixXd Jac(K.m + 1, K.m + 1);
        // columns: d/dy, d/dx, d/dx3 of (1/eps) X(u) + x3 V(u)
        VectorXd colY = s.dX * s.u_y + eps * x3 * (s.dV * s.u_y);
        VectorXd colX = s.dX * s.u_t + eps * x3 * (s.dV * s.u_t);
        Jac.col(0) = colY;
        Jac.col(1) = colX;
        Jac.col(2) = s.V;
        if (Jac.determinant() < 0.05)
          fail(ErrorCode::FocalRadiusExceeded,
               "tube map degenerates near node " + std::to_string(i));
      }
    }
  }
  return F;
}

// ---------------------------------------------------------------------------
// metric expansion diagnostics
// ---------------------------------------------------------------------------

// exact pullback metric of the scaled boundary map at (y-node, x)
inline MatrixXd fermi_metric(const FermiChart& F, int node, double x) {
  RaySample s = F.ray(node).eval(F.eps * x);
  MatrixXd g(2, 2);
  VectorXd Xa = s.dX * s.u_y;  // d/dy
  VectorXd Xi = s.dX * s.u_t;  // d/dx
  g(0, 0) = Xa.dot(Xa);
  g(0, 1) = g(1, 0) = Xa.dot(Xi);
  g(1, 1) = Xi.dot(Xi);
  return g;
}

struct MetricExpansionRow {
  std::string entry;
  double advertised;   // residual order in eps
  double slope;        // fitted
  std::vector<double> residual;
};

// Compare the exact pullback metric against the second-order model
//   g_ab = delta - 2 eps Gamma_a^b(E_i) x^i + eps^2 [R_sabl + GG] x^s x^l
//   g_aj = O(eps^2), g_ij = delta + (eps^2/3) R_istj x^s x^t
// over a sweep of eps (n = 1 reduces i,j to a single normal direction).
inline std::vector<MetricExpansionRow> metric_expansion_check(
    const SubmanifoldK& K, const std::vector<double>& eps_list,
    double slope_slack = 0.25) {
  std::vector<double> res_ab, res_aj, res_ij;
  std::vector<double> xs{-0.9, -0.45, 0.3, 0.75};
  double emax = *std::max_element(eps_list.begin(), eps_list.end());
  auto field = build_ray_field(K, 1.2 * emax);
  for (double eps : eps_list) {
    FermiChart F = build_fermi_chart(K, eps, field, 1.2);
    double rab = 0, raj = 0, rij = 0;
    for (int node : {0, K.N() / 3, (2 * K.N()) / 3}) {
      double Gam = K.kappa(node, 0);  // Gamma_1^1(E_1)
      double Rterm = K.R_at(node, 0, 1, 0, 1);   // <R(E_t,E_1)E_t,E_1>
      double GG = Gam * Gam;
      for (double x : xs) {
        MatrixXd g = fermi_metric(F, node, x);
        double pred_ab = 1.0 - 2 * eps * Gam * x + eps * eps * (Rterm + GG) * x * x;
        rab = std::max(rab, std::abs(g(0, 0) - pred_ab));
        raj = std::max(raj, std::abs(g(0, 1)));
        rij = std::max(rij, std::abs(g(1, 1) - 1.0));
      }
    }
    res_ab.push_back(rab);
    res_aj.push_back(raj);
    res_ij.push_back(rij);
  }
  std::vector<MetricExpansionRow> rows;
  // residuals below the ray integration noise are treated as identically zero
  const double floor = 1e-9;
  rows.push_back({"g_ab", 3.0, fitted_slope(eps_list, res_ab, floor), res_ab});
  rows.push_back({"g_aj", 2.0, fitted_slope(eps_list, res_aj, floor), res_aj});
  rows.push_back({"g_ij", 3.0, fitted_slope(eps_list, res_ij, floor), res_ij});
  for (auto& r : rows) {
    if (std::isnan(r.slope)) continue;  // identically zero residuals
    if (r.slope < r.advertised - slope_slack)
      fail(ErrorCode::OrderMismatch,
           r.entry + " residual slope " + fmt(r.slope) + " below advertised " +
               fmt(r.advertised));
  }
  return rows;
}

}  // namespace cmctube
