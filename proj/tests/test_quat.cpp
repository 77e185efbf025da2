#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "bowforge/quat.hpp"

using namespace bowforge;
using quat::complexd;
using quat::I;
using Eigen::Matrix2cd;
using Eigen::MatrixXcd;
using Eigen::Vector2cd;
using Eigen::Vector3d;

namespace {
std::mt19937_64 rng(20240701u);

Vector3d random_vec3(double scale = 1.0) {
  std::normal_distribution<double> g;
  return scale * Vector3d(g(rng), g(rng), g(rng));
}

MatrixXcd random_matrix(int r, int c) {
  std::normal_distribution<double> g;
  MatrixXcd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = complexd(g(rng), g(rng));
  return m;
}
}  // namespace

TEST_CASE("quaternion relations and anti-hermiticity") {
  for (int i = 1; i <= 3; ++i) {
    for (int j = 1; j <= 3; ++j) {
      Matrix2cd prod = quat::e(i) * quat::e(j);
      Matrix2cd expect = Matrix2cd::Zero();
      if (i == j) {
        expect = -Matrix2cd::Identity();
      } else {
        int k = 6 - i - j;
        int sign = ((i == 1 && j == 2) || (i == 2 && j == 3) || (i == 3 && j == 1)) ? 1 : -1;
        expect = double(sign) * quat::e(k);
      }
      REQUIRE((prod - expect).norm() < 1e-14);
    }
    REQUIRE((quat::e(i).adjoint() + quat::e(i)).norm() < 1e-14);
  }
  REQUIRE((quat::eps() * quat::eps() + Matrix2cd::Identity()).norm() < 1e-14);
  Vector2cd v(complexd(0.3, -1.1), complexd(0.7, 0.2));
  REQUIRE((quat::Jact(quat::Jact(v)) + v).norm() < 1e-14);
}

TEST_CASE("su2 irreps: algebra, Casimir, twisted eigenvalues") {
  // m = 1 is the zero representation
  auto triv = quat::su2_irrep(1);
  REQUIRE(triv.rho1.norm() == 0.0);

  for (int m = 2; m <= 8; ++m) {
    auto r = quat::su2_irrep(m);
    const MatrixXcd* rho[3] = {&r.rho1, &r.rho2, &r.rho3};
    for (int j = 0; j < 3; ++j) {
      int a = (j + 1) % 3, b = (j + 2) % 3;
      MatrixXcd comm = (*rho[j]) * (*rho[a]) - (*rho[a]) * (*rho[j]);
      REQUIRE((comm - 2.0 * (*rho[b])).norm() < 1e-12);
      REQUIRE((rho[j]->adjoint() + *rho[j]).norm() < 1e-12);
    }
    MatrixXcd cas = r.rho1 * r.rho1 + r.rho2 * r.rho2 + r.rho3 * r.rho3;
    REQUIRE((cas - double(1 - m * m) * MatrixXcd::Identity(m, m)).norm() < 1e-12);

    // sum_j e_j (x) rho_j has eigenvalue (1 - m) with multiplicity m + 1
    // and (1 + m) with multiplicity m - 1
    MatrixXcd op = MatrixXcd::Zero(2 * m, 2 * m);
    for (int j = 1; j <= 3; ++j)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          if (quat::e(j)(a, b) != 0.0)
            op.block(a * m, b * m, m, m) += quat::e(j)(a, b) * (*rho[size_t(j - 1)]);
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(op);
    int lo = 0, hi = 0;
    for (int i = 0; i < 2 * m; ++i) {
      if (std::abs(es.eigenvalues()(i) - double(1 - m)) < 1e-10) ++lo;
      if (std::abs(es.eigenvalues()(i) - double(1 + m)) < 1e-10) ++hi;
    }
    REQUIRE(lo == m + 1);
    REQUIRE(hi == m - 1);
  }
  REQUIRE_THROWS_AS(quat::su2_irrep(0), std::invalid_argument);
}

TEST_CASE("m = 3 twisted eigenvalues from direct diagonalization") {
  auto r = quat::su2_irrep(3);
  MatrixXcd op = MatrixXcd::Zero(6, 6);
  const MatrixXcd* rho[3] = {&r.rho1, &r.rho2, &r.rho3};
  for (int j = 1; j <= 3; ++j)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        if (quat::e(j)(a, b) != 0.0)
          op.block(a * 3, b * 3, 3, 3) += quat::e(j)(a, b) * (*rho[size_t(j - 1)]);
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(op);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < 4; ++i) REQUIRE(ev(i) == Catch::Approx(-2.0).margin(1e-12));
  for (int i = 4; i < 6; ++i) REQUIRE(ev(i) == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("charge conjugation") {
  // scalar block formula
  MatrixXcd beta(2, 1);
  beta << 1, 0;
  MatrixXcd bc = quat::charge_conjugate(beta);
  REQUIRE(std::abs(bc(0, 0)) < 1e-15);
  REQUIRE(std::abs(bc(1, 0) - complexd(1, 0)) < 1e-15);

  REQUIRE(quat::charge_conjugate(MatrixXcd::Zero(4, 3)).norm() == 0.0);

  for (int trial = 0; trial < 10; ++trial) {
    int nb = 1 + int(rng() % 3), na = 1 + int(rng() % 3);
    MatrixXcd b = random_matrix(2 * nb, na);
    // involution up to sign
    REQUIRE((quat::charge_conjugate(quat::charge_conjugate(b)) + b).norm() < 1e-12);
    // isometry
    REQUIRE(quat::charge_conjugate(b).norm() == Catch::Approx(b.norm()).epsilon(1e-12));
    // two code paths agree
    REQUIRE((quat::charge_conjugate(b) - quat::charge_conjugate_via_eps(b)).norm() < 1e-13);
  }
}

TEST_CASE("imaginary part via partial trace") {
  int n = 3;
  quat::QuaternionEnd q;
  q.m0 = random_matrix(n, n);
  q.m1 = random_matrix(n, n);
  q.m2 = random_matrix(n, n);
  q.m3 = random_matrix(n, n);

  // round trip
  auto back = quat::QuaternionEnd::decompose(q.assemble());
  REQUIRE((back.m0 - q.m0).norm() < 1e-12);
  REQUIRE((back.m1 - q.m1).norm() < 1e-12);
  REQUIRE((back.m2 - q.m2).norm() < 1e-12);
  REQUIRE((back.m3 - q.m3).norm() < 1e-12);

  // 1 (x) I has no imaginary part; e_1 (x) X is already imaginary
  quat::QuaternionEnd unit;
  unit.m0 = MatrixXcd::Identity(n, n);
  unit.m1 = unit.m2 = unit.m3 = MatrixXcd::Zero(n, n);
  REQUIRE(quat::im_part(unit).assemble().norm() == 0.0);

  quat::QuaternionEnd e1x;
  e1x.m0 = MatrixXcd::Zero(n, n);
  e1x.m1 = random_matrix(n, n);
  e1x.m2 = e1x.m3 = MatrixXcd::Zero(n, n);
  REQUIRE((quat::im_part(e1x).assemble() - e1x.assemble()).norm() < 1e-12);

  // brute-force partial trace oracle: Im M = M - (1/2) 1 (x) tr_S M
  MatrixXcd M = q.assemble();
  MatrixXcd trS = M.block(0, 0, n, n) + M.block(n, n, n, n);
  MatrixXcd brute = M;
  brute.block(0, 0, n, n) -= 0.5 * trS;
  brute.block(n, n, n, n) -= 0.5 * trS;
  REQUIRE((quat::im_part(q).assemble() - brute).norm() < 1e-12);
}

TEST_CASE("spin projectors") {
  auto P = quat::projectors(Vector3d(0, 0, 1));
  Matrix2cd diag_plus = Matrix2cd::Zero(), diag_minus = Matrix2cd::Zero();
  diag_plus(0, 0) = 1;
  diag_minus(1, 1) = 1;
  REQUIRE((P.plus - diag_plus).norm() < 1e-14);
  REQUIRE((P.minus - diag_minus).norm() < 1e-14);

  // scale invariance
  auto P2 = quat::projectors(Vector3d(0, 0, 2));
  REQUIRE((P.plus - P2.plus).norm() < 1e-14);

  for (int trial = 0; trial < 20; ++trial) {
    Vector3d t = random_vec3();
    if (t.norm() < 1e-3) continue;
    auto Pr = quat::projectors(t);
    REQUIRE((Pr.plus + Pr.minus - Matrix2cd::Identity()).norm() < 1e-14);
    REQUIRE((Pr.plus * Pr.minus).norm() < 1e-14);
    REQUIRE((Pr.plus * Pr.plus - Pr.plus).norm() < 1e-12);
    // eigen-equation i tslash P+ = |t| P+
    Matrix2cd its = I * quat::tslash(t);
    REQUIRE((its * Pr.plus - t.norm() * Pr.plus).norm() < 1e-12 * t.norm());
  }
  REQUIRE_THROWS_AS(quat::projectors(Vector3d::Zero()), std::domain_error);
}

TEST_CASE("fiber spinors") {
  auto fs = quat::spinor_from_vector(Vector3d(0, 0, 1), 0.0);
  REQUIRE(std::abs(fs.b.squaredNorm() - 2.0) < 1e-14);
  REQUIRE_FALSE(fs.degenerate);

  for (int trial = 0; trial < 30; ++trial) {
    Vector3d r = random_vec3(2.0);
    if (r.norm() < 1e-6) continue;
    auto f = quat::spinor_from_vector(r, 0.3 * trial);
    // b b^dagger = |r| I + i tslash(r)
    Matrix2cd expect = r.norm() * Matrix2cd::Identity() + I * quat::tslash(r);
    REQUIRE((f.b * f.b.adjoint() - expect).norm() < 1e-12 * (1 + r.norm()));
    // round trip through -Im(i b b^dagger)
    REQUIRE((quat::vector_from_spinor(f.b) - r).norm() < 1e-12 * (1 + r.norm()));
    REQUIRE(std::abs(f.b.squaredNorm() - 2 * r.norm()) < 1e-12 * (1 + r.norm()));
  }

  // U(1) fiber action
  Vector3d r(0.4, -0.2, 0.9);
  auto f0 = quat::spinor_from_vector(r, 0.0);
  auto f1 = quat::spinor_from_vector(r, 0.7);
  REQUIRE((f1.b - std::exp(I * 0.7) * f0.b).norm() < 1e-13);

  auto dz = quat::spinor_from_vector(Vector3d::Zero());
  REQUIRE(dz.degenerate);
  REQUIRE(dz.b.norm() == 0.0);
}
