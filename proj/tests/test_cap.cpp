#include <catch2/catch_amalgamated.hpp>

#include "cmctube/cap.hpp"

using namespace cmctube;

TEST_CASE("cap grid invariants, n = 1") {
  CapGrid G = build_cap(1, kPi / 2, 64);
  CHECK(G.r == Catch::Approx(1.0).epsilon(1e-14));
  for (int i = 0; i < G.N(); ++i) {
    CHECK(G.mu(i) == Catch::Approx(2.0 / (1.0 + G.z(i, 0) * G.z(i, 0))).margin(1e-13));
    CHECK(G.p.row(i).norm() == Catch::Approx(1.0).margin(1e-14));
  }
  // boundary nodes map to (+-1, 0)
  CHECK(G.p(0, 0) == Catch::Approx(-1.0).margin(1e-14));
  CHECK(std::abs(G.p(0, 1)) < 1e-14);
  CHECK(G.p(G.N() - 1, 0) == Catch::Approx(1.0).margin(1e-14));
  // quadrature of 1 equals the cap area (pi for the half circle)
  CHECK(G.wcap.sum() == Catch::Approx(kPi).margin(1e-13));
  // <p_z, p_z> = mu^2
  for (int i : {3, 17, 40}) {
    VectorXd zi = G.z.row(i).transpose();
    MatrixXd dp = cap_dp(zi);
    CHECK(dp.col(0).squaredNorm() == Catch::Approx(std::pow(cap_mu(zi), 2)).margin(1e-12));
  }
}

TEST_CASE("cap radius formula") {
  CapGrid G = build_cap(1, kPi / 3, 32);
  CHECK(G.r * G.r == Catch::Approx(1.0 / 3.0).epsilon(1e-13));
  CHECK(G.r == Catch::Approx(0.57735026918962573).epsilon(1e-12));
  CHECK(G.wcap.sum() == Catch::Approx(2 * kPi / 3).margin(1e-13));
  CHECK_THROWS_AS(build_cap(1, 3.5, 32), Error);
  CHECK_THROWS_AS(build_cap(1, 0.0, 32), Error);
}

TEST_CASE("cap grid invariants, n = 2") {
  CapGrid G = build_cap(2, kPi / 2, 12);
  // center field values via the closed forms
  VectorXd z0 = VectorXd::Zero(2);
  VectorXd p0 = cap_p(z0);
  CHECK(p0(2) == Catch::Approx(1.0));
  CHECK(cap_mu(z0) == Catch::Approx(2.0));
  CHECK(G.wcap.sum() == Catch::Approx(2 * kPi).margin(1e-10));
  for (int i : {0, 5, 100}) {
    CHECK(G.p.row(i).norm() == Catch::Approx(1.0).margin(1e-13));
    VectorXd zi = G.z.row(i).transpose();
    MatrixXd dp = cap_dp(zi);
    double mu2 = std::pow(cap_mu(zi), 2);
    CHECK(dp.col(0).dot(dp.col(1)) == Catch::Approx(0.0).margin(1e-12));
    CHECK(dp.col(0).squaredNorm() == Catch::Approx(mu2).margin(1e-12));
  }
  // boundary nodes carry Theta^{n+1} = 0 by construction of the radius
  for (int j = 0; j < G.bnodes_z.rows(); ++j) {
    VectorXd pb = cap_p(G.bnodes_z.row(j).transpose());
    CHECK(pb(2) - std::cos(G.gamma) == Catch::Approx(0.0).margin(1e-13));
  }
}

TEST_CASE("neumann cap spectrum, n = 1 at 256 nodes") {
  CapGrid G = build_cap(1, kPi / 2, 256);
  CapLaplacian L = cap_laplacian(G);
  VectorXd ev = L.neumann_eigenvalues(12);
  for (int k = 0; k < 12; ++k) CHECK(std::abs(ev(k) - k * k) < 1e-8);
  // eigenfunction residuals through the coefficient-space operator
  for (int k : {0, 1, 2, 5, 9}) {
    VectorXd phi = G.modal_phi.col(k);
    VectorXd res = L.apply(phi) + double(k * k) * phi;
    CHECK(sup_norm(res) < 3e-8);
  }
  // kernel of (Laplace + n): exactly the k = 1 cosine mode
  VectorXd gap = (G.modal_lam.array() - 1.0).abs();
  CHECK(gap(1) == 0.0);
  double next = 1e9;
  for (int k = 0; k < G.N(); ++k)
    if (k != 1) next = std::min(next, gap(k));
  CHECK(next > 0.5);
}

TEST_CASE("neumann cap spectrum, n = 2") {
  CapGrid G = build_cap(2, kPi / 2, 14);
  CapLaplacian L = cap_laplacian(G);
  VectorXd ev = L.neumann_eigenvalues(4);
  CHECK(std::abs(ev(0)) < 1e-8);
  CHECK(ev(1) == Catch::Approx(2.0).margin(2e-5));
  CHECK(ev(2) == Catch::Approx(2.0).margin(2e-5));
  CHECK(ev(3) == Catch::Approx(6.0).margin(2e-4));
}

TEST_CASE("laplacian identity on the coordinate fields") {
  CapGrid G = build_cap(1, kPi / 2, 256);
  CapLaplacian L = cap_laplacian(G);
  for (int c = 0; c < 2; ++c) {
    VectorXd res = L.apply(G.p.col(c)) + G.p.col(c);
    CHECK(sup_norm(res) < 1e-8);
  }
  CapGrid G3 = build_cap(1, kPi / 3, 64);
  CapLaplacian L3 = cap_laplacian(G3);
  for (int c = 0; c < 2; ++c) {
    VectorXd res = L3.apply(G3.p.col(c)) + G3.p.col(c);
    CHECK(sup_norm(res) < 1e-9);
  }
}

TEST_CASE("laplacian identity, n = 2") {
  CapGrid G = build_cap(2, kPi / 2, 14);
  // conformal identity with analytic derivative fields: exact
  for (int i : {3, 50, 200, 500}) {
    VectorXd z = G.z.row(i).transpose();
    std::vector<MatrixXd> d2;
    cap_d2p(z, d2);
    double mu = cap_mu(z);
    VectorXd p = cap_p(z);
    for (int k = 0; k < 3; ++k) {
      double lapS = (d2[k](0, 0) + d2[k](1, 1)) / (mu * mu);
      CHECK(std::abs(lapS + 2 * p(k)) < 1e-12);
    }
  }
  // discrete route: rational fields through the polynomial fit lose accuracy
  // near the rim, so the residual is judged in the cap L2 norm.
  CapLaplacian L = cap_laplacian(G);
  for (int c = 0; c < 3; ++c) {
    VectorXd res = L.apply(G.p.col(c)) + 2.0 * G.p.col(c);
    double l2 = std::sqrt(G.wcap.dot(res.cwiseProduct(res)));
    CHECK(l2 < 5e-2);
  }
}

TEST_CASE("galerkin pair is symmetric and annihilates constants") {
  CapGrid G = build_cap(1, kPi / 3, 48);
  CHECK((G.S - G.S.transpose()).norm() < 1e-12);
  CHECK((G.M - G.M.transpose()).norm() < 1e-12);
  CHECK(sup_norm(VectorXd(G.S * VectorXd::Ones(G.N()))) < 1e-11);
  // self-adjointness in the mass inner product for random fields
  VectorXd u(G.N()), v(G.N());
  for (int i = 0; i < G.N(); ++i) {
    u(i) = std::sin(3.1 * G.theta(i)) + 0.2 * G.theta(i) * G.theta(i);
    v(i) = std::cos(1.7 * G.theta(i));
  }
  double a = u.dot(G.S * v), b = v.dot(G.S * u);
  CHECK(a == Catch::Approx(b).margin(1e-11 * std::abs(a) + 1e-13));
}

TEST_CASE("kernel basis and robin condition") {
  CapGrid G = build_cap(1, kPi / 2, 64);
  KernelBasisReport R = kernel_basis(G);
  CHECK(R.interior_residual < 1e-9);
  CHECK(R.robin_residual < 1e-10);
  CHECK(R.control_residual > 0.5);  // negative control violates the condition

  CapGrid G3 = build_cap(1, kPi / 3, 64);
  KernelBasisReport R3 = kernel_basis(G3);
  CHECK(R3.interior_residual < 1e-9);
  CHECK(R3.robin_residual < 1e-8);
  CHECK(R3.control_residual > 0.1);

  CapGrid G2 = build_cap(2, kPi / 2, 12);
  KernelBasisReport R2 = kernel_basis(G2);
  CHECK(R2.fields.cols() == 2);
  CHECK(R2.robin_residual < 1e-10);
  CHECK(R2.control_residual > 0.5);
}

TEST_CASE("projector idempotence") {
  CapGrid G = build_cap(1, kPi / 3, 48);
  VectorXd v(G.N());
  for (int i = 0; i < G.N(); ++i) v(i) = std::exp(std::sin(2 * G.theta(i)));
  VectorXd pv = G.project_kernel(v);
  VectorXd ppv = G.project_kernel(pv);
  CHECK((pv - ppv).cwiseAbs().maxCoeff() < 1e-13);
  VectorXd orth = v - pv;
  CHECK(std::abs(G.wcap.dot(orth.cwiseProduct(G.kernel.col(0)))) < 1e-12);
}

TEST_CASE("projected solver: zero data") {
  CapGrid G = build_cap(1, kPi / 2, 48);
  VectorXd u = fredholm_solve(G, VectorXd::Zero(G.N()), VectorXd::Zero(2));
  CHECK(sup_norm(u) < 1e-12);
}

TEST_CASE("projected solver: resonant closed form") {
  CapGrid G = build_cap(1, kPi / 2, 64);
  VectorXd f(G.N());
  for (int i = 0; i < G.N(); ++i) f(i) = std::sin(G.theta(i));
  VectorXd u = fredholm_solve(G, f, VectorXd::Zero(2));
  for (int i = 0; i < G.N(); ++i) {
    double th = G.theta(i);
    double exact = -(th / 2) * std::cos(th) + 0.5 * std::sin(th) + (kPi / 4) * std::cos(th);
    CHECK(u(i) == Catch::Approx(exact).margin(1e-8));
  }
}

TEST_CASE("projected solver: incompatible data refused") {
  CapGrid G = build_cap(1, kPi / 2, 48);
  VectorXd f(G.N());
  for (int i = 0; i < G.N(); ++i) f(i) = std::cos(G.theta(i));
  CHECK_THROWS_AS(fredholm_solve(G, f, VectorXd::Zero(2)), Error);
}

TEST_CASE("projected solver is a right inverse on random compatible data") {
  for (double gamma : {kPi / 2, kPi / 3}) {
    CapGrid G = build_cap(1, gamma, 64);
    CapLaplacian L = cap_laplacian(G);
    VectorXd f(G.N());
    for (int i = 0; i < G.N(); ++i)
      f(i) = std::sin(2.3 * G.theta(i) + 0.4) + 0.3 * std::cos(5 * G.theta(i));
    VectorXd g(2);
    g << 0.21, -0.13;
    // enforce compatibility by removing the kernel component of the data
    double I = G.wcap.dot(f.cwiseProduct(G.kernel.col(0)));
    for (int b = 0; b < 2; ++b) I -= g(b) * G.kernel(G.boundary[b], 0);
    f -= (I / G.rho_n()) * G.kernel.col(0);
    VectorXd u = fredholm_solve(G, f, g);
    // interior residual
    VectorXd res = L.apply(u) + u - f;
    for (int i = 4; i < G.N() - 4; ++i) CHECK(std::abs(res(i)) < 2e-7);
    // boundary residual of the oblique condition
    double cotg = std::cos(gamma) / std::sin(gamma);
    VectorXd du = G.D1 * u;
    double r0 = -du(0) - cotg * u(0) - g(0);
    double r1 = du(G.N() - 1) - cotg * u(G.N() - 1) - g(1);
    CHECK(std::abs(r0) < 1e-7);
    CHECK(std::abs(r1) < 1e-7);
    // zero kernel projection
    CHECK(std::abs(G.wcap.dot(u.cwiseProduct(G.kernel.col(0)))) < 1e-10);
  }
}

TEST_CASE("cap area closed forms") {
  CHECK(cap_area(1, kPi / 2) == Catch::Approx(kPi));
  CHECK(cap_area(2, kPi / 2) == Catch::Approx(2 * kPi));
  CHECK(cap_area(3, kPi / 2) == Catch::Approx(kPi * kPi).margin(1e-10));
  CapGrid G3 = build_cap(3, kPi / 2, 8);
  CHECK(G3.wcap.sum() == Catch::Approx(kPi * kPi).margin(1e-6));
}
