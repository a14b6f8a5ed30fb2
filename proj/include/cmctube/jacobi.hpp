#pragma once

#include "cmctube/tube.hpp"

namespace cmctube {

// ---------------------------------------------------------------------------
// stability operator of K inside the boundary (n = 1 discretization)
// ---------------------------------------------------------------------------

struct JacobiAssembly {
  const SubmanifoldK* K = nullptr;
  MatrixXd op;    // acts on nodal values of the normal component
  double mass;    // uniform arc-length weight
  VectorXd eigenvalues;
  MatrixXd eigenvectors;
};

inline JacobiAssembly assemble_jacobi(const SubmanifoldK& K,
                                      bool require_minimal = true) {
  if (require_minimal)
    require(K.minimal, ErrorCode::NotMinimal,
            "stability operator assembled about a non-minimal submanifold");
  JacobiAssembly A;
  A.K = &K;
  A.mass = K.grid.h;
  const int N = K.N();
  // J phi = phi'' - <R(E_t, E_1) E_t, E_1> phi + Gamma^2 phi
  VectorXd pot(N);
  for (int i = 0; i < N; ++i)
    pot(i) = -K.jacobi_curv(i) + K.kappa(i, 0) * K.kappa(i, 0);
  A.op = K.grid.D2 + MatrixXd(pot.asDiagonal());
  MatrixXd sym = 0.5 * (A.op + A.op.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  A.eigenvalues = es.eigenvalues();
  A.eigenvectors = es.eigenvectors();
  return A;
}

inline VectorXd jacobi_apply(const JacobiAssembly& A, const VectorXd& phi) {
  return A.op * phi;
}

struct Nondegeneracy {
  double min_abs = 0;
  double spectral_radius = 0;
  bool degenerate = false;
};

inline Nondegeneracy nondegeneracy(const JacobiAssembly& A,
                                   double tol_rel = 1e-6) {
  Nondegeneracy out;
  out.spectral_radius = A.eigenvalues.cwiseAbs().maxCoeff();
  out.min_abs = A.eigenvalues.cwiseAbs().minCoeff();
  out.degenerate = out.min_abs < tol_rel * out.spectral_radius;
  return out;
}

// ---------------------------------------------------------------------------
// second variation of the capillary energy on a mesh
// ---------------------------------------------------------------------------

// gradient squared of a scalar field on the mesh in the induced metric
inline MatrixXd mesh_grad_sq(const SurfaceMesh& M, const MatrixXd& om) {
  MatrixXd ot = M.Dth * om;
  MatrixXd oy = om * M.Dy.transpose();
  MatrixXd out(M.Nth, M.Ny);
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int i = 0; i < M.Nth; ++i) {
      const Eigen::Matrix2d& g = M.at(i, iy).g;
      if (g.determinant() < 1e-13) {  // degenerate pole rows carry no measure
        out(i, iy) = 0;
        continue;
      }
      Eigen::Matrix2d gi = g.inverse();
      Eigen::Vector2d d(oy(i, iy), ot(i, iy));
      out(i, iy) = d.dot(gi * d);
    }
  return out;
}

// E''(0) = int |grad w|^2 - (|Pi|^2 + Ric(N,N)) w^2 dA - oint q w^2 ds for a
// volume-preserving normal variation w; the ambient is flat so Ric = 0.
inline double capillary_second_variation(const SurfaceMesh& M, double gamma,
                                         const MatrixXd& om,
                                         double tol_capillary = 1e-6) {
  // precondition: constant curvature and contact angle
  double h0 = M.node[0].mH;
  for (const auto& nd : M.node)
    require(std::abs(nd.mH - h0) < tol_capillary, ErrorCode::NotCapillary,
            "mean curvature is not constant");
  // mean-zero variation
  double mean = 0, area = 0;
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int i = 0; i < M.Nth; ++i) {
      double dA = M.wth(i) * M.wy(iy) * std::sqrt(M.at(i, iy).g.determinant());
      mean += om(i, iy) * dA;
      area += dA;
    }
  require(std::abs(mean) < 1e-6 * std::sqrt(area) * (1 + sup_norm(om)),
          ErrorCode::NotAdmissible, "variation is not volume preserving");

  MatrixXd gsq = mesh_grad_sq(M, om);
  double interior = 0;
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int i = 0; i < M.Nth; ++i) {
      const NodeGeo& nd = M.at(i, iy);
      double det = nd.g.determinant();
      if (det < 1e-13) continue;
      double dA = M.wth(i) * M.wy(iy) * std::sqrt(det);
      Eigen::Matrix2d sh = nd.g.inverse() * nd.II;
      double pi2 = (sh * sh).trace();
      interior += (gsq(i, iy) - pi2 * om(i, iy) * om(i, iy)) * dA;
    }

  double boundary = 0;
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int b = (M.theta0_is_boundary ? 0 : 1); b < 2; ++b) {
      int i = (b == 0) ? 0 : M.Nth - 1;
      const NodeGeo& nd = M.at(i, iy);
      // conormal in the surface pointing out of it
      Vector3d tb = nd.Ty.normalized();
      Vector3d ups = nd.Tth - nd.Tth.dot(tb) * tb;
      ups.normalize();
      if (b == 0) ups = -ups;
      // Pi_Sigma(ups, ups) with the exterior surface normal: second form of
      // the mesh against -N (the expansions use the core-pointing normal)
      Eigen::Vector2d uc;  // ups in the (y, theta) tangent basis
      {
        Eigen::Matrix2d T;
        T << nd.Ty.dot(nd.Ty), nd.Ty.dot(nd.Tth), nd.Ty.dot(nd.Tth),
            nd.Tth.dot(nd.Tth);
        Eigen::Vector2d rhs(nd.Ty.dot(ups), nd.Tth.dot(ups));
        uc = T.ldlt().solve(rhs);
      }
      double PiS = -(uc.dot(nd.II * uc));  // against the exterior normal
      // support shape form along the wetted conormal; flat support: zero
      double Pisupp = 0.0;
      double q = Pisupp / std::sin(gamma) -
                 (std::cos(gamma) / std::sin(gamma)) * PiS;
      double ds = M.wy(iy) * nd.Ty.norm();
      boundary += q * om(i, iy) * om(i, iy) * ds;
    }
  return interior - boundary;
}

// ---------------------------------------------------------------------------
// linearized curvature under transverse fields
// ---------------------------------------------------------------------------

// curvature field of a displaced node sheet, by spectral differentiation of
// the positions (orientation taken from the reference mesh normals)
inline MatrixXd sheet_mH(const SurfaceMesh& M, const MatrixXd& pos) {
  MatrixXd Px(M.Nth, M.Ny), Py(M.Nth, M.Ny), Pz(M.Nth, M.Ny);
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int i = 0; i < M.Nth; ++i) {
      Px(i, iy) = pos(0, iy * M.Nth + i);
      Py(i, iy) = pos(1, iy * M.Nth + i);
      Pz(i, iy) = pos(2, iy * M.Nth + i);
    }
  auto dth = [&](const MatrixXd& A) { return MatrixXd(M.Dth * A); };
  auto dy = [&](const MatrixXd& A) { return MatrixXd(A * M.Dy.transpose()); };
  MatrixXd Xt = dth(Px), Yt = dth(Py), Zt = dth(Pz);
  MatrixXd Xy = dy(Px), Yy = dy(Py), Zy = dy(Pz);
  MatrixXd Xtt = dth(Xt), Ytt = dth(Yt), Ztt = dth(Zt);
  MatrixXd Xyy = dy(Xy), Yyy = dy(Yy), Zyy = dy(Zy);
  MatrixXd Xty = dy(Xt), Yty = dy(Yt), Zty = dy(Zt);
  MatrixXd H(M.Nth, M.Ny);
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int i = 0; i < M.Nth; ++i) {
      Vector3d Tth(Xt(i, iy), Yt(i, iy), Zt(i, iy));
      Vector3d Ty(Xy(i, iy), Yy(i, iy), Zy(i, iy));
      Vector3d Ptt(Xtt(i, iy), Ytt(i, iy), Ztt(i, iy));
      Vector3d Pyy(Xyy(i, iy), Yyy(i, iy), Zyy(i, iy));
      Vector3d Pty(Xty(i, iy), Yty(i, iy), Zty(i, iy));
      Vector3d N = Ty.cross(Tth).normalized();
      if (N.dot(M.at(i, iy).N) < 0) N = -N;
      Eigen::Matrix2d g, II;
      g << Ty.dot(Ty), Ty.dot(Tth), Ty.dot(Tth), Tth.dot(Tth);
      II << Pyy.dot(N), Pty.dot(N), Pty.dot(N), Ptt.dot(N);
      H(i, iy) = (g.inverse() * II).trace();
    }
  return H;
}

// residual of the identity linking the linearized curvature along a
// transverse field with the one along the normal
inline double transverse_link_check(const SurfaceMesh& M,
                                    const std::vector<Vector3d>& Nhat,
                                    const MatrixXd& omhat) {
  const int NN = M.Nth * M.Ny;
  require(int(Nhat.size()) == NN, ErrorCode::BadConfig, "field size mismatch");
  MatrixXd pos = M.positions();
  const double fd = 1e-5;

  auto flow_mH = [&](const std::vector<Vector3d>& dir, const MatrixXd& amp,
                     double t) {
    MatrixXd p = pos;
    for (int c = 0; c < NN; ++c)
      p.col(c) += t * amp(c % M.Nth, c / M.Nth) * dir[c];
    return sheet_mH(M, p);
  };

  // left side: variation along Nhat
  MatrixXd lhs =
      (flow_mH(Nhat, omhat, fd) - flow_mH(Nhat, omhat, -fd)) / (2 * fd);

  // right side: variation along N with amplitude <N, Nhat> omhat, plus the
  // tangential transport of the curvature field
  std::vector<Vector3d> Nfield(NN);
  MatrixXd amp(M.Nth, M.Ny), mh(M.Nth, M.Ny);
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int i = 0; i < M.Nth; ++i) {
      const NodeGeo& nd = M.at(i, iy);
      Nfield[iy * M.Nth + i] = nd.N;
      amp(i, iy) = nd.N.dot(Nhat[iy * M.Nth + i]) * omhat(i, iy);
      mh(i, iy) = nd.mH;
    }
  MatrixXd rhs = (flow_mH(Nfield, amp, fd) - flow_mH(Nfield, amp, -fd)) / (2 * fd);
  // gradient term: <Nhat^T, grad mH> omhat
  MatrixXd mt = M.Dth * mh, my = mh * M.Dy.transpose();
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int i = 0; i < M.Nth; ++i) {
      const NodeGeo& nd = M.at(i, iy);
      Eigen::Matrix2d gi = nd.g.inverse();
      Eigen::Vector2d dmh(my(i, iy), mt(i, iy));
      Eigen::Vector2d co = gi * dmh;
      Vector3d grad = co(0) * nd.Ty + co(1) * nd.Tth;
      Vector3d Nh = Nhat[iy * M.Nth + i];
      Vector3d NhT = Nh - Nh.dot(nd.N) * nd.N;
      rhs(i, iy) += NhT.dot(grad) * omhat(i, iy);
    }

  // compare away from the boundary rows where one-sided differentiation of
  // the displaced sheet loses accuracy
  double worst = 0;
  for (int iy = 0; iy < M.Ny; ++iy)
    for (int i = 2; i < M.Nth - 2; ++i)
      worst = std::max(worst, std::abs(lhs(i, iy) - rhs(i, iy)));
  return worst;
}

}  // namespace cmctube
