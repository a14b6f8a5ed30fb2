#include <catch2/catch_amalgamated.hpp>

#include "cmctube/fermi.hpp"

using namespace cmctube;

namespace {

SubmanifoldK straight_K(int N = 32, double L = 2 * kPi) {
  auto B = std::make_shared<FlatChart>(2);
  return build_submanifold(B, [L](double tau) {
    VectorXd u(2);
    u << L * tau, 0.0;
    return u;
  }, N);
}

SubmanifoldK equator_K(int N = 48) {
  auto B = std::make_shared<SphereChart>(2, 1.0);
  return build_submanifold(B, [](double tau) {
    VectorXd u(2);
    u << 2 * kPi * tau, 0.0;
    return u;
  }, N);
}

SubmanifoldK ellipse_K(int N = 48) {
  auto B = std::make_shared<EllipsoidChart>(1.0, 1.2, 1.5);
  auto loop0 = [](double tau) {
    VectorXd u(2);
    u << 2 * kPi * tau, 0.02 * std::sin(2 * kPi * tau);
    return u;
  };
  return find_closed_geodesic(B, loop0, {.nodes = N});
}

}  // namespace

TEST_CASE("flat rays are straight lines") {
  SubmanifoldK K = straight_K();
  FermiChart F = build_fermi_chart(K, 0.1);
  RaySample s = F.ray(5).eval(0.07);
  CHECK(s.u(0) == Catch::Approx(K.u(5, 0)).margin(1e-12));
  CHECK(s.u(1) == Catch::Approx(0.07).margin(1e-12));
  CHECK(s.u_t(1) == Catch::Approx(1.0).margin(1e-11));
  CHECK(s.u_tt.norm() < 1e-9);
  CHECK(s.u_y(0) == Catch::Approx(1.0).margin(1e-11));
  CHECK(s.u_yy.norm() < 1e-9);
  MatrixXd g = fermi_metric(F, 5, 0.7);
  CHECK((g - MatrixXd::Identity(2, 2)).norm() < 1e-10);
}

TEST_CASE("sphere equator rays reproduce the closed-form metric") {
  SubmanifoldK K = equator_K();
  double eps = 0.1;
  FermiChart F = build_fermi_chart(K, eps);
  for (double x : {-0.8, 0.3, 0.9}) {
    MatrixXd g = fermi_metric(F, 7, x);
    // meridian distance eps*x from the equator: g_yy = cos^2(eps x)
    CHECK(g(0, 0) == Catch::Approx(std::pow(std::cos(eps * x), 2)).margin(1e-10));
    CHECK(std::abs(g(0, 1)) < 1e-10);
    CHECK(g(1, 1) == Catch::Approx(1.0).margin(1e-10));
  }
  // center values: orthonormal pushforwards
  RaySample s0 = F.ray(3).eval(0.0);
  VectorXd Xa = s0.dX * s0.u_y, Xi = s0.dX * s0.u_t;
  CHECK(Xa.norm() == Catch::Approx(1.0).margin(1e-10));
  CHECK(Xi.norm() == Catch::Approx(1.0).margin(1e-10));
  CHECK(std::abs(Xa.dot(Xi)) < 1e-10);
  CHECK(std::abs(Xa.dot(s0.V)) < 1e-10);
}

TEST_CASE("normal-field pairing reproduces the scaled shape form") {
  SubmanifoldK K = equator_K();
  double eps = 0.05;
  FermiChart F = build_fermi_chart(K, eps);
  RaySample s = F.ray(11).eval(eps * 0.4);
  // d/dx of V^eps paired with X_i equals eps * h(E_1, E_1) in the inward
  // convention of the expansions (sphere: -eps with the classical sign +1)
  VectorXd dVdx = eps * (s.dV * s.u_t);
  VectorXd Xi = s.dX * s.u_t;
  PointGeometry P = point_geometry(*K.B, s.u);
  double h_cl = s.u_t.dot(P.shape_inward * s.u_t) / s.u_t.dot(P.g * s.u_t);
  CHECK(dVdx.dot(Xi) == Catch::Approx(-eps * h_cl).margin(1e-10));
  CHECK(h_cl == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("metric expansion orders on fixtures") {
  SECTION("flat: all residuals vanish") {
    SubmanifoldK K = straight_K();
    auto rows = metric_expansion_check(K, {0.1, 0.05, 0.025});
    for (const auto& r : rows)
      for (double v : r.residual) CHECK(std::abs(v) < 1e-9);
  }
  SECTION("sphere equator") {
    SubmanifoldK K = equator_K();
    auto rows = metric_expansion_check(K, {0.1, 0.05, 0.025});
    // even symmetry pushes the g_ab tail one extra order
    CHECK(rows[0].slope >= 3.0 - 0.25);
    for (double v : rows[1].residual) CHECK(std::abs(v) < 1e-9);
  }
  SECTION("ellipsoid geodesic") {
    SubmanifoldK K = ellipse_K();
    auto rows = metric_expansion_check(K, {0.1, 0.05, 0.025});
    CHECK(rows[0].slope >= 3.0 - 0.25);
  }
}

TEST_CASE("linear metric coefficient on a non-geodesic curve") {
  // latitude circle: Gamma_1^1(E_1) = tan(lat), so the y-metric must carry
  // the -2 eps Gamma x linear term
  auto B = std::make_shared<SphereChart>(2, 1.0);
  double lat = kPi / 6;
  SubmanifoldK K = build_submanifold(B, [lat](double tau) {
    VectorXd u(2);
    u << 2 * kPi * tau, lat;
    return u;
  }, 48);
  double eps = 0.01;
  FermiChart F = build_fermi_chart(K, eps);
  double h = 0.05;
  MatrixXd gp = fermi_metric(F, 5, h), gm = fermi_metric(F, 5, -h);
  double lin = (gp(0, 0) - gm(0, 0)) / (2 * h);
  double Gam = K.kappa(5, 0);
  CHECK(std::abs(Gam) == Catch::Approx(std::tan(lat)).margin(1e-9));
  CHECK(lin == Catch::Approx(-2 * eps * Gam).margin(5e-5 * eps));
}

TEST_CASE("focal radius guard on the ellipsoid") {
  SubmanifoldK K = ellipse_K();
  CHECK_THROWS_AS(build_fermi_chart(K, 0.9), Error);
  CHECK_NOTHROW(build_fermi_chart(K, 0.1));
}
