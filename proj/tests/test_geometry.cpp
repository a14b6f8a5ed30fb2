#include <catch2/catch_amalgamated.hpp>

#include "cmctube/geometry.hpp"

using namespace cmctube;

namespace {

VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

struct SphereLevelSet : ImplicitSurface {
  double rho;
  explicit SphereLevelSet(double r) : rho(r) {}
  Jet eval(const JetVec& x) const override {
    Jet s(x[0].nvars());
    for (const auto& xi : x) s = s + xi * xi;
    return s - rho * rho;
  }
  VectorXd interior_point() const override { return VectorXd::Zero(3); }
};

}  // namespace

TEST_CASE("flat fixture has trivial extrinsic data") {
  FlatChart B(2);
  PointGeometry P = point_geometry(B, vec2(0.4, -1.2));
  CHECK((P.g - MatrixXd::Identity(2, 2)).norm() < 1e-14);
  CHECK(P.shape_inward.norm() < 1e-14);
  CHECK(P.V(2) == Catch::Approx(1.0));
  double rmax = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) rmax = std::max(rmax, std::abs(P.R4[a][b][c][d]));
  CHECK(rmax < 1e-14);
}

TEST_CASE("unit sphere: shape identity, sectional curvature one") {
  auto B = std::make_shared<SphereChart>(2, 1.0);
  PointGeometry P = point_geometry(*B, vec2(0.3, 0.5));
  // classical inward convention: h = g on the unit sphere
  CHECK((P.shape_inward - P.g).norm() < 1e-12);
  // sectional curvature from R4 in an orthonormalized basis
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P.g);
  MatrixXd C = es.operatorInverseSqrt();
  double num = 0;
  // K(X,Y) = <R(X,Y)Y, X> for orthonormal X,Y
  double r = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d)
          r += C(0, a) * C(1, b) * C(1, c) * C(0, d) * P.R4[a][b][c][d];
  CHECK(r == Catch::Approx(1.0).epsilon(1e-10));
  (void)num;
  // inward normal points to the center
  CHECK(P.V.dot(P.X) == Catch::Approx(-1.0).epsilon(1e-12));
  // gauss equation: R(X,Y,Z,W) = h(X,W)h(Y,Z) - h(X,Z)h(Y,W)
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) {
          double gauss = P.shape_inward(a, d) * P.shape_inward(b, c) -
                         P.shape_inward(a, c) * P.shape_inward(b, d);
          CHECK(P.R4[a][b][c][d] == Catch::Approx(gauss).margin(1e-11));
        }
}

TEST_CASE("ellipsoid principal curvatures at a vertex") {
  EllipsoidChart B(1.0, 1.2, 1.5);
  PointGeometry P = point_geometry(B, vec2(0.0, 0.0));  // point (a, 0, 0)
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(P.shape_inward, P.g);
  VectorXd pc = ges.eigenvalues();
  std::sort(pc.data(), pc.data() + pc.size());
  CHECK(pc(0) == Catch::Approx(1.0 / (1.5 * 1.5)).epsilon(1e-12));
  CHECK(pc(1) == Catch::Approx(1.0 / (1.2 * 1.2)).epsilon(1e-12));
}

TEST_CASE("curvature tensor algebraic symmetries on the ellipsoid") {
  EllipsoidChart B(1.0, 1.2, 1.5);
  PointGeometry P = point_geometry(B, vec2(0.7, 0.4));
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) {
          CHECK(P.R4[a][b][c][d] == Catch::Approx(-P.R4[b][a][c][d]).margin(1e-11));
          CHECK(P.R4[a][b][c][d] == Catch::Approx(P.R4[c][d][a][b]).margin(1e-11));
        }
}

TEST_CASE("implicit chart matches the analytic sphere") {
  auto f = std::make_shared<SphereLevelSet>(1.0);
  VectorXd p0(3);
  p0 << 0.0, 0.0, 1.0;
  ImplicitChart B(f, p0);
  PointGeometry P = point_geometry(B, vec2(0.1, -0.2));
  CHECK(P.X.norm() == Catch::Approx(1.0).epsilon(1e-12));
  CHECK((P.shape_inward - P.g).norm() < 1e-9);
}

TEST_CASE("sphere equator is a closed geodesic of length 2 pi") {
  auto B = std::make_shared<SphereChart>(2, 1.0);
  auto loop0 = [](double tau) {
    VectorXd u(2);
    u << 2 * kPi * tau, 0.12 * std::sin(4 * kPi * tau);
    return u;
  };
  SubmanifoldK K = find_closed_geodesic(B, loop0, {.nodes = 64});
  CHECK(K.minimal);
  CHECK(K.minimality < 1e-8);
  CHECK(K.length == Catch::Approx(2 * kPi).margin(1e-8));
  // frame orthonormality at a few nodes
  for (int i : {0, 10, 31}) {
    const PointGeometry& P = K.pg[i];
    VectorXd t = K.Et.row(i).transpose(), e = K.En[0].row(i).transpose();
    CHECK(t.dot(P.g * t) == Catch::Approx(1.0).margin(1e-10));
    CHECK(e.dot(P.g * e) == Catch::Approx(1.0).margin(1e-10));
    CHECK(t.dot(P.g * e) == Catch::Approx(0.0).margin(1e-10));
  }
  // sectional curvature term entering the stability operator
  CHECK(K.jacobi_curv(5) == Catch::Approx(-1.0).margin(1e-9));
}

TEST_CASE("equator finder is a fixed point") {
  auto B = std::make_shared<SphereChart>(2, 1.0);
  auto loop0 = [](double tau) {
    VectorXd u(2);
    u << 2 * kPi * tau, 0.1 * std::sin(2 * kPi * tau);
    return u;
  };
  SubmanifoldK K = find_closed_geodesic(B, loop0, {.nodes = 48});
  auto lift = [&](double tau) {
    VectorXd u(2);
    double s = tau * K.length;
    for (int a = 0; a < 2; ++a) {
      VectorXd per = K.u.col(a) - K.drift(a) * K.grid.x;
      u(a) = fourier_eval(K.grid, per, s) + K.drift(a) * s;
    }
    return u;
  };
  SubmanifoldK K2 = find_closed_geodesic(B, lift, {.nodes = 48});
  CHECK((K2.u - K.u).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ellipsoid principal section is a geodesic") {
  auto B = std::make_shared<EllipsoidChart>(1.0, 1.2, 1.5);
  auto loop0 = [](double tau) {
    VectorXd u(2);
    u << 2 * kPi * tau, 0.05 * std::sin(2 * kPi * tau);
    return u;
  };
  SubmanifoldK K = find_closed_geodesic(B, loop0, {.nodes = 64});
  CHECK(K.minimality < 1e-8);
  // the section stays in the z = 0 plane
  CHECK(K.u.col(1).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("latitude circle has geodesic curvature tan(latitude)") {
  auto B = std::make_shared<SphereChart>(2, 1.0);
  double lat = kPi / 4;
  auto lift = [lat](double tau) {
    VectorXd u(2);
    u << 2 * kPi * tau, lat;
    return u;
  };
  SubmanifoldK K = build_submanifold(B, lift, 48);
  CHECK(!K.minimal);
  CHECK(minimality_residual(K) == Catch::Approx(std::tan(lat)).epsilon(1e-9));
}

TEST_CASE("flat fixture: no closed geodesics") {
  auto B = std::make_shared<FlatChart>(2);
  auto loop0 = [](double tau) {
    VectorXd u(2);
    u << std::cos(2 * kPi * tau), std::sin(2 * kPi * tau);
    return u;
  };
  bool threw = false;
  try {
    find_closed_geodesic(B, loop0, {.nodes = 32, .max_newton = 12});
  } catch (const Error& e) {
    threw = true;
    CHECK((e.code() == ErrorCode::NoConvergence || e.code() == ErrorCode::NotMinimal));
  }
  CHECK(threw);
}

TEST_CASE("straight line on the flat fixture is minimal") {
  auto B = std::make_shared<FlatChart>(2);
  double L = 2 * kPi;
  auto lift = [L](double tau) {
    VectorXd u(2);
    u << L * tau, 0.0;
    return u;
  };
  SubmanifoldK K = build_submanifold(B, lift, 32);
  CHECK(K.minimal);
  CHECK(K.length == Catch::Approx(L).margin(1e-12));
  CHECK(K.jacobi_curv.cwiseAbs().maxCoeff() < 1e-12);
}
