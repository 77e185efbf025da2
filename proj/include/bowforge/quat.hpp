#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <stdexcept>

namespace bowforge::quat {

using complexd = std::complex<double>;
using Eigen::Matrix2cd;
using Eigen::MatrixXcd;
using Eigen::Vector2cd;
using Eigen::Vector3d;

constexpr complexd I{0.0, 1.0};

/// Unit imaginary quaternions acting on the spinor space S = C^2,
/// realized as e_j = -i sigma_j.  Satisfies e_i e_j = -delta_ij + eps_ijk e_k
/// and e_j^dagger = -e_j.
inline const Matrix2cd& e(int j) {
  static const std::array<Matrix2cd, 3> basis = [] {
    std::array<Matrix2cd, 3> b;
    b[0] << 0, -I, -I, 0;
    b[1] << 0, -1, 1, 0;
    b[2] << -I, 0, 0, I;
    return b;
  }();
  return basis.at(static_cast<size_t>(j - 1));
}

/// Pauli matrices sigma_j = i e_j (Hermitian).
inline Matrix2cd sigma(int j) { return I * e(j); }

/// The complex-linear isomorphism eps: S -> S*, (v1,v2) |-> (-v2, v1),
/// as the matrix [[0,-1],[1,0]].  eps^2 = -1.
inline const Matrix2cd& eps() {
  static const Matrix2cd m = [] {
    Matrix2cd x;
    x << 0, -1, 1, 0;
    return x;
  }();
  return m;
}

/// Antilinear J-action v |-> (-conj(v2), conj(v1)); J^2 = -1.
inline Vector2cd Jact(const Vector2cd& v) {
  return Vector2cd(-std::conj(v(1)), std::conj(v(0)));
}

/// t-slash = sum_j e_j t_j.  i*tslash is Hermitian with eigenvalues +-|t|.
inline Matrix2cd tslash(const Vector3d& t) {
  return t(0) * e(1) + t(1) * e(2) + t(2) * e(3);
}

/// An m-dimensional irreducible su(2) representation in the weight basis:
/// anti-Hermitian rho_j with [rho_i, rho_j] = 2 rho_k (cyclic) and
/// sum_j rho_j^2 = (1 - m^2) I.  i*rho_3 is diagonal with weights
/// m-1, m-3, ..., 1-m.
struct Su2Irrep {
  int m = 0;
  MatrixXcd rho1, rho2, rho3;
};

inline Su2Irrep su2_irrep(int m) {
  if (m < 1) throw std::invalid_argument("su2_irrep: dimension must be >= 1");
  MatrixXcd rp = MatrixXcd::Zero(m, m), rm = MatrixXcd::Zero(m, m);
  Eigen::VectorXcd w(m);
  for (int j = 0; j < m; ++j) w(j) = double(m - 1 - 2 * j);
  // unitary raising/lowering: rho_+ e_j = sqrt(j(m-j)) e_{j-1}, rho_- = rho_+^dagger
  for (int j = 1; j < m; ++j) {
    double c = std::sqrt(double(j) * double(m - j));
    rp(j - 1, j) = c;
    rm(j, j - 1) = c;
  }
  Su2Irrep out;
  out.m = m;
  out.rho1 = rp - rm;
  out.rho2 = -I * (rp + rm);
  out.rho3 = -I * w.asDiagonal().toDenseMatrix();
  return out;
}

/// Decomposition M = 1 (x) m0 + sum_j e_j (x) m_j of an endomorphism of
/// S (x) V, stored by its four N x N components.
struct QuaternionEnd {
  MatrixXcd m0, m1, m2, m3;

  Eigen::Index dim() const { return m0.rows(); }

  /// The 2N x 2N matrix on S (x) V.
  MatrixXcd assemble() const {
    auto n = dim();
    MatrixXcd M = MatrixXcd::Zero(2 * n, 2 * n);
    const MatrixXcd* comp[4] = {&m0, &m1, &m2, &m3};
    Matrix2cd id2 = Matrix2cd::Identity();
    for (int q = 0; q < 4; ++q) {
      const Matrix2cd& s = q == 0 ? id2 : e(q);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          if (s(a, b) != 0.0) M.block(a * n, b * n, n, n) += s(a, b) * (*comp[q]);
    }
    return M;
  }

  /// Inverse of assemble(): m0 = tr_S(M)/2, m_j = -tr_S((e_j (x) 1) M)/2.
  static QuaternionEnd decompose(const MatrixXcd& M) {
    if (M.rows() != M.cols() || M.rows() % 2 != 0)
      throw std::invalid_argument("decompose: matrix must be square of even size");
    auto n = M.rows() / 2;
    auto blk = [&](int a, int b) { return M.block(a * n, b * n, n, n); };
    QuaternionEnd q;
    q.m0 = 0.5 * (blk(0, 0) + blk(1, 1));
    // tr_S((e_j (x) 1) M) = sum_ab e_j(b,a) M_ab
    auto ptr = [&](const Matrix2cd& s) {
      MatrixXcd r = MatrixXcd::Zero(n, n);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          if (s(b, a) != 0.0) r += s(b, a) * blk(a, b);
      return r;
    };
    q.m1 = -0.5 * ptr(e(1));
    q.m2 = -0.5 * ptr(e(2));
    q.m3 = -0.5 * ptr(e(3));
    return q;
  }
};

/// Im M = M - (1/2) 1_S (x) tr_S M; kills the m0 component.
inline QuaternionEnd im_part(const QuaternionEnd& M) {
  QuaternionEnd out = M;
  out.m0.setZero();
  return out;
}

inline MatrixXcd im_part_matrix(const MatrixXcd& M) {
  QuaternionEnd q = QuaternionEnd::decompose(M);
  return im_part(q).assemble();
}

/// Charge conjugation of beta = (beta1; beta2): A -> S (x) B, written in the
/// stacked block form on S = C^2.  Returns beta^c = (-beta2^*; beta1^*):
/// B -> S (x) A.  Applying it twice gives -beta.
inline MatrixXcd charge_conjugate(const MatrixXcd& beta) {
  if (beta.rows() % 2 != 0) throw std::invalid_argument("charge_conjugate: odd row count");
  auto nb = beta.rows() / 2;
  MatrixXcd b1 = beta.topRows(nb), b2 = beta.bottomRows(nb);
  MatrixXcd out(2 * beta.cols(), nb);
  out.topRows(beta.cols()) = -b2.adjoint();
  out.bottomRows(beta.cols()) = b1.adjoint();
  return out;
}

/// Same map assembled from its definition: eps extends to S (x) B, giving
/// eps(beta) in Hom(A (x) S, B); the Hermitian adjoint of that is beta^c.
/// Kept as an independent code path for consistency tests.
inline MatrixXcd charge_conjugate_via_eps(const MatrixXcd& beta) {
  auto nb = beta.rows() / 2;
  auto na = beta.cols();
  // eps(beta) in Hom(S (x) A, B) with S-major stacking: columns (a, s) -> eps picks
  // eps(v (x) w) pairing: eps(beta) = (-beta2, beta1) as an nb x 2na block row.
  MatrixXcd epsbeta(nb, 2 * na);
  epsbeta.leftCols(na) = -beta.bottomRows(nb);
  epsbeta.rightCols(na) = beta.topRows(nb);
  return epsbeta.adjoint();  // Hom(B, S (x) A)
}

/// Orthogonal eigen-projectors of i*tslash(t): P_pm = (|t| +- i tslash)/(2|t|).
struct SpinProjectors {
  Matrix2cd plus, minus;
};

inline SpinProjectors projectors(const Vector3d& t) {
  double r = t.norm();
  if (r <= 0.0) throw std::domain_error("projectors: |t| = 0 is singular");
  Matrix2cd its = I * tslash(t);
  SpinProjectors P;
  P.plus = (r * Matrix2cd::Identity() + its) / (2 * r);
  P.minus = (r * Matrix2cd::Identity() - its) / (2 * r);
  return P;
}

/// A spinor b with b b^dagger = |r| + i tslash(r), so that -Im(i b b^dagger)
/// reproduces r and b^dagger b = 2|r|.  The phase parametrizes the circle
/// fiber of b |-> r.  Returns the zero spinor (degenerate fiber) at r = 0.
struct FiberSpinor {
  Vector2cd b;
  bool degenerate = false;
};

inline FiberSpinor spinor_from_vector(const Vector3d& r, double phase = 0.0) {
  FiberSpinor out;
  double n = r.norm();
  if (n == 0.0) {
    out.b.setZero();
    out.degenerate = true;
    return out;
  }
  // unit eigenvector of sigma.r with eigenvalue +|r|, scaled to |b|^2 = 2|r|
  Vector2cd v;
  if (n + r(2) > 1e-14 * n) {
    v << n + r(2), complexd(r(0), r(1));
  } else {
    v << complexd(r(0), -r(1)), n - r(2);
  }
  v.normalize();
  out.b = std::sqrt(2.0 * n) * std::exp(I * phase) * v;
  return out;
}

/// -Im(i b b^dagger) as a 3-vector; inverse of spinor_from_vector up to phase.
inline Vector3d vector_from_spinor(const Vector2cd& b) {
  Matrix2cd bb = b * b.adjoint();
  Vector3d r;
  for (int j = 1; j <= 3; ++j) {
    // Im(i bb) = sum_j c_j e_j with c_j = -tr(e_j * i * bb)/2; we return -c.
    r(j - 1) = 0.5 * std::real((e(j) * (I * bb)).trace());
  }
  return r;
}

}  // namespace bowforge::quat
