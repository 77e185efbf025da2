#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "bowforge/nahm.hpp"
#include "bowforge/quat.hpp"

namespace bowforge::dirac {

using Eigen::Matrix2cd;
using Eigen::MatrixXcd;
using Eigen::Vector2cd;
using Eigen::Vector3d;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using complexd = std::complex<double>;

/// A point of the small-representation level set: base point t with the edge
/// spinors b_sigma satisfying -Im(i b b^dagger) = t - nu_sigma.  tau is
/// bookkeeping for the fiber coordinate; kernel computations use the
/// tau-independent section (all tau-dependence is the e*-fiber charge).
struct TwistPoint {
  Vector3d t;
  std::vector<Vector2cd> b;
  double tau = 0.0;
};

inline TwistPoint make_twist_point(const std::vector<Vector3d>& nu, const Vector3d& t,
                                   const std::vector<double>& phases = {}) {
  TwistPoint pt;
  pt.t = t;
  for (size_t s = 0; s < nu.size(); ++s) {
    double ph = s < phases.size() ? phases[s] : 0.0;
    auto fs = quat::spinor_from_vector(t - nu[s], ph);
    if (fs.degenerate)
      throw DegenerateConfiguration("twist point coincides with NUT " + std::to_string(s));
    pt.b.push_back(fs.b);
  }
  return pt;
}

/// Closed-form transfer matrix exp(-vslash * ds) of (d/ds + i T) x = 0 for a
/// rank-1 constant block, vslash = sum_j sigma_j (T_j - t_j).
inline Matrix2cd transfer_matrix(const Vector3d& T, const Vector3d& t, double ds) {
  Vector3d v = T - t;
  double n = v.norm();
  if (n == 0.0) return Matrix2cd::Identity();
  Matrix2cd vs = quat::I * quat::tslash(v);  // Hermitian
  return std::cosh(n * ds) * Matrix2cd::Identity() - (std::sinh(n * ds) / n) * vs;
}

/// 4th-order integration of the transfer matrix across a sampled rank-1 block,
/// with step-doubling control.
inline Matrix2cd transfer_matrix_sampled(const NahmBlock& blk, double s0, double s1,
                                         const Vector3d& t, double tol = 1e-10) {
  auto rhs = [&](double s, const Matrix2cd& U) -> Matrix2cd {
    Vector3d T = blk.tvec(s);
    Matrix2cd vs = quat::I * quat::tslash(Vector3d(T - t));
    return -vs * U;
  };
  auto rk4 = [&](double a, double b, int steps) {
    Matrix2cd U = Matrix2cd::Identity();
    double h = (b - a) / steps;
    for (int i = 0; i < steps; ++i) {
      double s = a + i * h;
      Matrix2cd k1 = rhs(s, U);
      Matrix2cd k2 = rhs(s + h / 2, U + (h / 2) * k1);
      Matrix2cd k3 = rhs(s + h / 2, U + (h / 2) * k2);
      Matrix2cd k4 = rhs(s + h, U + h * k3);
      U += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return U;
  };
  int steps = 16;
  Matrix2cd coarse = rk4(s0, s1, steps);
  for (int it = 0; it < 12; ++it) {
    Matrix2cd fine = rk4(s0, s1, steps * 2);
    if ((fine - coarse).norm() < tol * std::max(1.0, fine.norm())) return fine;
    coarse = fine;
    steps *= 2;
  }
  return coarse;
}

struct NonGenericPoint : std::runtime_error {
  VectorXd spectrum;
  NonGenericPoint(const std::string& msg, VectorXd spec)
      : std::runtime_error(msg), spectrum(std::move(spec)) {}
};

/// The finite-dimensional matching system Delta : X (+) N (+) W -> Y^v whose
/// kernel equals Ker D^dagger_{t,b}.  Valid for constant blocks of rank <= 1;
/// X bases are stored in the stable one-sided-exponential form
/// x(s) = exp(rate * (s - anchor)) u with |x| <= 1 on the subinterval.
struct MatchingSystem {
  struct XElem {
    int subint = -1;
    double rate = 0.0;
    double anchor = 0.0;
    Vector2cd u;
    Vector2cd val_a, val_b;  // endpoint values
  };
  struct NuCol {
    int sigma = -1;
    bool plus = true;  // nu^+ in E_{p+} (x) e*_{p-} vs nu^- in E_{p-} (x) e*_{p+}
  };

  MatrixXcd Delta;
  std::vector<XElem> xelems;
  std::vector<NuCol> nucols;
  std::vector<int> wcols;  // lambda indices

  BowSolution sol;
  TwistPoint pt;
  std::vector<Subinterval> subs;

  int n_x() const { return int(xelems.size()); }
  int n_nu() const { return int(nucols.size()); }
  int n_w() const { return int(wcols.size()); }
  int ncols() const { return n_x() + n_nu() + n_w(); }
  int nu_col(int k) const { return n_x() + k; }
  int w_col(int k) const { return n_x() + n_nu() + k; }

  Vector2cd x_eval(int xindex, double s_param) const {
    const auto& e = xelems[size_t(xindex)];
    return std::exp(e.rate * (s_param - e.anchor)) * e.u;
  }
};

namespace detail {

inline Vector2cd conj_spinor(const Vector2cd& b) {
  return Vector2cd(-std::conj(b(1)), std::conj(b(0)));
}

/// Eigenvectors u_pm of vslash = sigma . v with eigenvalues +-|v|.
inline std::pair<Vector2cd, Vector2cd> vslash_eigvecs(const Vector3d& v) {
  auto fsp = quat::spinor_from_vector(v);
  Vector2cd up = fsp.b.normalized();
  Vector2cd um(-std::conj(up(1)), std::conj(up(0)));  // orthogonal complement
  return {up, um};
}

}  // namespace detail

/// Pure dimension bookkeeping of the matching system; valid for any ranks.
/// index() must equal |Lambda| (Thm. on the kernel dimension).
struct DeltaDims {
  int x = 0, n = 0, w = 0, y = 0;
  int index() const { return x + n + w - y; }
};

inline DeltaDims delta_dimensions(const BowRepresentation& rep) {
  DeltaDims d;
  auto subs = subintervals(rep);
  auto marks = detail::marked_points(rep);
  for (auto& s : subs) d.x += 2 * s.rank;
  for (size_t mi = 0; mi < marks.size(); ++mi) {
    auto [rl, rr] = ranks_at_marker(rep, int(mi));
    if (marks[mi].kind == MarkedPoint::P) {
      d.n += rl + rr;
      d.y += 2 * (rl + rr);
    } else {
      const auto& lam = rep.lambdas[size_t(marks[mi].index_in_kind)];
      if (lam.cls == LambdaClass::Zero) {
        d.w += 1;
        d.y += 2 * rl;  // full fiber, rl == rr
      } else {
        d.y += rl + rr - 1;
      }
    }
  }
  return d;
}

inline MatchingSystem assemble_delta(const BowSolution& sol, const TwistPoint& pt) {
  for (const auto& blk : sol.blocks) {
    if (blk.rank > 1 || (blk.rank == 1 && blk.repr != NahmBlock::Repr::Constant))
      throw std::invalid_argument(
          "assemble_delta: only constant blocks of rank <= 1 are supported");
  }
  MatchingSystem sys;
  sys.sol = sol;
  sys.pt = pt;
  sys.subs = subintervals(sol.rep);
  auto marks = detail::marked_points(sol.rep);

  // X columns: two one-sided exponential modes per rank-1 subinterval
  std::vector<std::pair<int, int>> xrange(sys.subs.size(), {0, 0});
  for (size_t i = 0; i < sys.subs.size(); ++i) {
    const auto& sub = sys.subs[i];
    int lo = int(sys.xelems.size());
    if (sub.rank == 1) {
      Vector3d v = sol.blocks[i].T - pt.t;
      double n = v.norm();
      MatchingSystem::XElem e1, e2;
      e1.subint = e2.subint = int(i);
      if (n == 0.0) {
        e1.rate = e2.rate = 0.0;
        e1.anchor = e2.anchor = sub.a;
        e1.u = Vector2cd(1, 0);
        e2.u = Vector2cd(0, 1);
      } else {
        auto [up, um] = detail::vslash_eigvecs(v);
        e1.rate = -n;  // decaying from the left end
        e1.anchor = sub.a;
        e1.u = up;
        e2.rate = +n;  // decaying from the right end
        e2.anchor = sub.b;
        e2.u = um;
      }
      for (auto* e : {&e1, &e2}) {
        e->val_a = std::exp(e->rate * (sub.a - e->anchor)) * e->u;
        e->val_b = std::exp(e->rate * (sub.b - e->anchor)) * e->u;
        sys.xelems.push_back(*e);
      }
    }
    xrange[i] = {lo, int(sys.xelems.size())};
  }

  // nu columns
  for (size_t mi = 0; mi < marks.size(); ++mi) {
    if (marks[mi].kind != MarkedPoint::P) continue;
    auto [rl, rr] = ranks_at_marker(sol.rep, int(mi));
    int sigma = marks[mi].index_in_kind;
    if (rr == 1) sys.nucols.push_back({sigma, true});   // nu^+ in E_{p+} (x) e*_{p-}
    if (rl == 1) sys.nucols.push_back({sigma, false});  // nu^- in E_{p-} (x) e*_{p+}
  }
  // w columns
  for (size_t li = 0; li < sol.rep.lambdas.size(); ++li)
    if (sol.rep.lambdas[li].cls == LambdaClass::Zero) sys.wcols.push_back(int(li));

  // rows
  int nrows = 0;
  std::vector<std::tuple<int, char>> rowplan;  // marker index, kind: '0' lambda0, '-', '+'
  for (size_t mi = 0; mi < marks.size(); ++mi) {
    auto [rl, rr] = ranks_at_marker(sol.rep, int(mi));
    if (marks[mi].kind == MarkedPoint::Lambda) {
      const auto& lam = sol.rep.lambdas[size_t(marks[mi].index_in_kind)];
      if (lam.cls == LambdaClass::Zero) {
        rowplan.emplace_back(int(mi), '0');
        nrows += 2;
      }
      // |Delta R| = 1 rank jumps carry no matching rows
    } else {
      if (rl == 1) { rowplan.emplace_back(int(mi), '-'); nrows += 2; }
      if (rr == 1) { rowplan.emplace_back(int(mi), '+'); nrows += 2; }
    }
  }

  sys.Delta = MatrixXcd::Zero(nrows, sys.ncols());
  auto sub_left_of = [&](int marker) {
    for (size_t i = 0; i < sys.subs.size(); ++i)
      if (sys.subs[i].right_marker == marker) return int(i);
    return -1;
  };
  auto sub_right_of = [&](int marker) {
    for (size_t i = 0; i < sys.subs.size(); ++i)
      if (sys.subs[i].left_marker == marker) return int(i);
    return -1;
  };
  auto nu_col_index = [&](int sigma, bool plus) {
    for (size_t k = 0; k < sys.nucols.size(); ++k)
      if (sys.nucols[k].sigma == sigma && sys.nucols[k].plus == plus) return sys.nu_col(int(k));
    return -1;
  };

  int row = 0;
  for (auto& [mi, kind] : rowplan) {
    int li = sub_left_of(mi), ri = sub_right_of(mi);
    if (kind == '0') {
      int lam_idx = marks[size_t(mi)].index_in_kind;
      const FundamentalDatum* f = sol.fundamental_at(lam_idx);
      Vector2cd Q = f ? Vector2cd(f->Q) : Vector2cd::Zero();
      int wc = -1;
      for (size_t k = 0; k < sys.wcols.size(); ++k)
        if (sys.wcols[k] == lam_idx) wc = sys.w_col(int(k));
      for (int r = 0; r < 2; ++r) {
        for (int c = xrange[size_t(ri)].first; c < xrange[size_t(ri)].second; ++c)
          sys.Delta(row + r, c) += sys.xelems[size_t(c)].val_a(r);
        for (int c = xrange[size_t(li)].first; c < xrange[size_t(li)].second; ++c)
          sys.Delta(row + r, c) -= sys.xelems[size_t(c)].val_b(r);
        sys.Delta(row + r, wc) -= Q(r);
      }
      row += 2;
    } else {
      int sigma = marks[size_t(mi)].index_in_kind;
      const Vector2cd b = pt.b[size_t(sigma)];
      const Vector2cd bc = detail::conj_spinor(b);
      Vector2cd B = Vector2cd::Zero(), Bc = Vector2cd::Zero();
      if (sol.bf[size_t(sigma)].B.size()) {
        B = Vector2cd(sol.bf[size_t(sigma)].B);
        Bc = detail::conj_spinor(B);
      }
      int cp = nu_col_index(sigma, true), cm = nu_col_index(sigma, false);
      if (kind == '-') {
        // <y, B nu+ + b^c nu- - x(p-)> = 0
        for (int r = 0; r < 2; ++r) {
          if (cp >= 0) sys.Delta(row + r, cp) += B(r);
          if (cm >= 0) sys.Delta(row + r, cm) += bc(r);
          for (int c = xrange[size_t(li)].first; c < xrange[size_t(li)].second; ++c)
            sys.Delta(row + r, c) -= sys.xelems[size_t(c)].val_b(r);
        }
      } else {
        // <y, x(p+) - b nu+ - B^c nu-> = 0
        for (int r = 0; r < 2; ++r) {
          for (int c = xrange[size_t(ri)].first; c < xrange[size_t(ri)].second; ++c)
            sys.Delta(row + r, c) += sys.xelems[size_t(c)].val_a(r);
          if (cp >= 0) sys.Delta(row + r, cp) -= b(r);
          if (cm >= 0) sys.Delta(row + r, cm) -= Bc(r);
        }
      }
      row += 2;
    }
  }
  return sys;
}

/// Piecewise-affine weight in the componentwise L2 pairing: a continuous-part
/// coefficient pair (alpha, beta) per panel (weight = alpha + beta * s_param)
/// and point masses on the w and nu components.
struct SectionWeight {
  std::function<std::pair<double, double>(int subint, double lo, double hi)> cont =
      [](int, double, double) { return std::pair<double, double>(1.0, 0.0); };
  std::function<double(int lambda_index)> mass_w = [](int) { return 1.0; };
  std::function<double(int sigma, bool plus)> mass_nu = [](int, bool) { return 1.0; };
};

namespace detail {

inline double phi0(double z) {
  return std::abs(z) > 1e-4 ? std::expm1(z) / z : 1.0 + z / 2 + z * z / 6 + z * z * z / 24;
}
inline double phi_t(double z) {
  // (e^z (z-1) + 1)/z^2
  if (std::abs(z) > 1e-4) return (std::exp(z) * (z - 1.0) + 1.0) / (z * z);
  return 0.5 + z / 3 + z * z / 8 + z * z * z / 30;
}

/// Int_a^b e^{r1 (s-a1)} e^{r2 (s-a2)} (alpha + beta s) ds, stable for the
/// one-sided-decaying mode products that arise here (the exponent is <= 0 on
/// [a, b]).
inline double mode_integral(double r1, double a1, double r2, double a2, double a, double b,
                            double alpha, double beta) {
  double r = r1 + r2;
  double g_a = r1 * (a - a1) + r2 * (a - a2);
  double L = b - a;
  double c0 = alpha + beta * a;
  double J = c0 * L * phi0(r * L) + beta * L * L * phi_t(r * L);
  return std::exp(g_a) * J;
}

}  // namespace detail

/// Weighted L2 inner product of two coefficient vectors over the matching
/// system columns: Lebesgue measure on each subinterval plus unit Dirac
/// masses on the w and nu components (scaled by the weight).
inline complexd weighted_inner(const MatchingSystem& sys, const VectorXcd& c1, const VectorXcd& c2,
                               const SectionWeight& w) {
  complexd acc = 0;
  // continuous part: group x-elements by subinterval
  for (size_t i = 0; i < sys.subs.size(); ++i) {
    const auto& sub = sys.subs[i];
    if (sub.rank == 0) continue;
    std::vector<int> cols;
    for (int c = 0; c < sys.n_x(); ++c)
      if (sys.xelems[size_t(c)].subint == int(i)) cols.push_back(c);
    // panels: wrap subintervals split at s_param = 0 (the base point)
    std::vector<std::pair<double, double>> panels;
    if (sub.wraps && sub.a < 0.0 && sub.b > 0.0) {
      panels.push_back({sub.a, 0.0});
      panels.push_back({0.0, sub.b});
    } else {
      panels.push_back({sub.a, sub.b});
    }
    for (auto& [lo, hi] : panels) {
      auto [alpha, beta] = w.cont(int(i), lo, hi);
      for (int ci : cols)
        for (int cj : cols) {
          if (c1(ci) == 0.0 || c2(cj) == 0.0) continue;
          const auto& ei = sys.xelems[size_t(ci)];
          const auto& ej = sys.xelems[size_t(cj)];
          complexd uu = ei.u.dot(ej.u);  // Eigen dot: conjugates the first argument
          if (uu == 0.0) continue;
          double I = detail::mode_integral(ei.rate, ei.anchor, ej.rate, ej.anchor, lo, hi,
                                           alpha, beta);
          acc += std::conj(c1(ci)) * c2(cj) * uu * I;
        }
    }
  }
  for (size_t k = 0; k < sys.nucols.size(); ++k) {
    int c = sys.nu_col(int(k));
    acc += std::conj(c1(c)) * c2(c) * w.mass_nu(sys.nucols[k].sigma, sys.nucols[k].plus);
  }
  for (size_t k = 0; k < sys.wcols.size(); ++k) {
    int c = sys.w_col(int(k));
    acc += std::conj(c1(c)) * c2(c) * w.mass_w(sys.wcols[k]);
  }
  return acc;
}

inline MatrixXcd weighted_gram(const MatchingSystem& sys, const MatrixXcd& C1, const MatrixXcd& C2,
                               const SectionWeight& w) {
  MatrixXcd G(C1.cols(), C2.cols());
  for (Eigen::Index i = 0; i < C1.cols(); ++i)
    for (Eigen::Index j = 0; j < C2.cols(); ++j)
      G(i, j) = weighted_inner(sys, C1.col(i), C2.col(j), w);
  return G;
}

/// Orthonormal basis of Ker Delta in the L2 inner product, with the singular
/// spectrum (structural zeros from the column excess included).  Fails with
/// NonGenericPoint if the dimension is not |Lambda| or the spectral gap is
/// below min_gap.
struct KernelBasis {
  std::shared_ptr<const MatchingSystem> sys;
  MatrixXcd C;       // ncols x dim, orthonormal w.r.t. the L2 Gram
  VectorXd sigma;    // ascending, length ncols
  double gap = 0.0;  // sigma[dim] / sigma[dim-1]

  int dim() const { return int(C.cols()); }
};

inline KernelBasis kernel(const MatchingSystem& sys, double rank_tol = 1e-8,
                          double min_gap = 1e3) {
  const int n = sys.ncols(), m = int(sys.Delta.rows());
  MatrixXcd V;
  VectorXd sv;
  if (m > 0) {
    Eigen::JacobiSVD<MatrixXcd> svd(sys.Delta, Eigen::ComputeFullV);
    sv = svd.singularValues();
    V = svd.matrixV();
  } else {
    sv = VectorXd();
    V = MatrixXcd::Identity(n, n);
  }
  VectorXd sigma = VectorXd::Zero(n);
  for (int i = 0; i < std::min(m, n); ++i) sigma(n - 1 - i) = sv(i);  // ascending w/ zeros first
  double smax = sv.size() ? sv(0) : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rank_tol * smax) ++rank;
  int dim = n - rank;

  int nlam = int(sys.sol.rep.lambdas.size());
  double gap = std::numeric_limits<double>::infinity();
  if (dim < n) {
    double kept = sigma(dim);
    double dropped = dim > 0 ? sigma(dim - 1) : 0.0;
    gap = dropped > 0 ? kept / dropped : std::numeric_limits<double>::infinity();
  }
  if (dim != nlam || gap < min_gap) {
    throw NonGenericPoint("kernel dimension " + std::to_string(dim) + " != |Lambda| = " +
                              std::to_string(nlam) + " (or gap too small); WAF failure or "
                              "degenerate base point",
                          sigma);
  }

  KernelBasis kb;
  kb.sys = std::make_shared<MatchingSystem>(sys);
  kb.sigma = sigma;
  kb.gap = gap;
  // right-singular vectors for the smallest singular values span the kernel
  MatrixXcd C = V.rightCols(dim);
  // L2-orthonormalize (Loewdin)
  SectionWeight unit;
  MatrixXcd G = weighted_gram(sys, C, C, unit);
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(G);
  MatrixXcd Gmh = es.operatorInverseSqrt();
  kb.C = C * Gmh;
  return kb;
}

/// Principal angles (radians, ascending) between the column spans of two
/// bases that are orthonormal w.r.t. the inner product encoded by `overlap`
/// = <A_i, B_j>.
inline VectorXd principal_angles_from_overlap(const MatrixXcd& overlap) {
  Eigen::JacobiSVD<MatrixXcd> svd(overlap);
  VectorXd cosines = svd.singularValues();
  VectorXd angles(cosines.size());
  for (int i = 0; i < cosines.size(); ++i)
    angles(i) = std::acos(std::min(1.0, std::max(-1.0, cosines(i))));
  std::sort(angles.data(), angles.data() + angles.size(), std::greater<double>());
  return angles;
}

// ---------------------------------------------------------------------------
// Grid backend: sparse first-order upwind discretization of the twisted
// Dirac operator with exact jump rows at marked points.
// ---------------------------------------------------------------------------

struct GridDirac {
  Eigen::SparseMatrix<complexd> A;    // weighted: W_out^(1/2) A0 W_in^(-1/2)
  Eigen::SparseMatrix<complexd> A0;   // raw operator matrix
  VectorXd win;                       // input L2 weights (diagonal)
  double h = 0.0;
  // unknown layout
  struct SubLayout {
    int col0 = -1;  // first column (2 per node); -1 for rank-0 subintervals
    int nodes = 0;
    double a = 0, b = 0;
  };
  std::vector<SubLayout> subs;
  std::vector<MatchingSystem::NuCol> nucols;
  std::vector<int> wcols;
  int nu_col0 = 0, w_col0 = 0, ncols = 0;

  int nu_col(int k) const { return nu_col0 + k; }
  int w_col(int k) const { return w_col0 + k; }
};

inline GridDirac assemble_grid(const BowSolution& sol, const TwistPoint& pt, double h) {
  for (const auto& blk : sol.blocks)
    if (blk.rank > 1)
      throw std::invalid_argument("assemble_grid: rank <= 1 only");
  GridDirac gd;
  gd.h = h;
  auto subs = subintervals(sol.rep);
  auto marks = detail::marked_points(sol.rep);

  int col = 0;
  for (size_t i = 0; i < subs.size(); ++i) {
    GridDirac::SubLayout sl;
    sl.a = subs[i].a;
    sl.b = subs[i].b;
    if (subs[i].rank == 1) {
      sl.nodes = std::max(2, int(std::ceil((sl.b - sl.a) / h)) + 1);
      sl.col0 = col;
      col += 2 * sl.nodes;
    }
    gd.subs.push_back(sl);
  }
  gd.nu_col0 = col;
  for (size_t mi = 0; mi < marks.size(); ++mi) {
    if (marks[mi].kind != MarkedPoint::P) continue;
    auto [rl, rr] = ranks_at_marker(sol.rep, int(mi));
    int sigma = marks[mi].index_in_kind;
    if (rr == 1) gd.nucols.push_back({sigma, true});
    if (rl == 1) gd.nucols.push_back({sigma, false});
  }
  col += int(gd.nucols.size());
  gd.w_col0 = col;
  for (size_t li = 0; li < sol.rep.lambdas.size(); ++li)
    if (sol.rep.lambdas[li].cls == LambdaClass::Zero) gd.wcols.push_back(int(li));
  col += int(gd.wcols.size());
  gd.ncols = col;

  std::vector<Eigen::Triplet<complexd>> trip;
  std::vector<double> wout;
  int row = 0;

  // transport rows: upwind per eigenmode of vslash, matched to the decay direction
  for (size_t i = 0; i < subs.size(); ++i) {
    const auto& sl = gd.subs[i];
    if (sl.col0 < 0) continue;
    Vector3d v = sol.blocks[i].T - pt.t;
    double n = v.norm();
    Matrix2cd vs = n > 0 ? Matrix2cd(quat::I * quat::tslash(v)) : Matrix2cd::Zero();
    Matrix2cd Pp = n > 0 ? Matrix2cd(0.5 * (Matrix2cd::Identity() + vs / n))
                         : Matrix2cd(Matrix2cd::Identity());
    Matrix2cd Pm = Matrix2cd::Identity() - Pp;
    double hh = (sl.b - sl.a) / (sl.nodes - 1);
    for (int nno = 0; nno + 1 < sl.nodes; ++nno) {
      // rows: (x_{n+1} - x_n)/hh + |v| Pp x_n - |v| Pm x_{n+1} = 0
      Matrix2cd Mn = -Matrix2cd::Identity() / hh + n * Pp;
      Matrix2cd Mn1 = Matrix2cd::Identity() / hh - n * Pm;
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          if (Mn(r, c) != 0.0) trip.emplace_back(row + r, sl.col0 + 2 * nno + c, Mn(r, c));
          if (Mn1(r, c) != 0.0) trip.emplace_back(row + r, sl.col0 + 2 * (nno + 1) + c, Mn1(r, c));
        }
      wout.push_back(hh);
      wout.push_back(hh);
      row += 2;
    }
  }

  auto sub_left_of = [&](int marker) {
    for (size_t i = 0; i < subs.size(); ++i)
      if (subs[i].right_marker == marker) return int(i);
    return -1;
  };
  auto sub_right_of = [&](int marker) {
    for (size_t i = 0; i < subs.size(); ++i)
      if (subs[i].left_marker == marker) return int(i);
    return -1;
  };
  auto nu_col_index = [&](int sigma, bool plus) {
    for (size_t k = 0; k < gd.nucols.size(); ++k)
      if (gd.nucols[k].sigma == sigma && gd.nucols[k].plus == plus) return gd.nu_col(int(k));
    return -1;
  };

  // jump / boundary rows
  for (size_t mi = 0; mi < marks.size(); ++mi) {
    int li = sub_left_of(int(mi)), ri = sub_right_of(int(mi));
    const auto& L = gd.subs[size_t(li)];
    const auto& R = gd.subs[size_t(ri)];
    int last_left = L.col0 >= 0 ? L.col0 + 2 * (L.nodes - 1) : -1;
    int first_right = R.col0;
    if (marks[mi].kind == MarkedPoint::Lambda) {
      int lam_idx = marks[mi].index_in_kind;
      if (sol.rep.lambdas[size_t(lam_idx)].cls != LambdaClass::Zero) continue;
      const FundamentalDatum* f = sol.fundamental_at(lam_idx);
      Vector2cd Q = f ? Vector2cd(f->Q) : Vector2cd::Zero();
      int wc = -1;
      for (size_t k = 0; k < gd.wcols.size(); ++k)
        if (gd.wcols[k] == lam_idx) wc = gd.w_col(int(k));
      for (int r = 0; r < 2; ++r) {
        trip.emplace_back(row + r, first_right + r, complexd(1));
        trip.emplace_back(row + r, last_left + r, complexd(-1));
        if (Q(r) != 0.0) trip.emplace_back(row + r, wc, -Q(r));
        wout.push_back(1.0);
      }
      row += 2;
    } else {
      int sigma = marks[mi].index_in_kind;
      Vector2cd b = pt.b[size_t(sigma)];
      Vector2cd bc = detail::conj_spinor(b);
      Vector2cd B = Vector2cd::Zero(), Bc = Vector2cd::Zero();
      if (sol.bf[size_t(sigma)].B.size()) {
        B = Vector2cd(sol.bf[size_t(sigma)].B);
        Bc = detail::conj_spinor(B);
      }
      int cp = nu_col_index(sigma, true), cm = nu_col_index(sigma, false);
      if (last_left >= 0) {
        // x(p-) = B nu+ + b^c nu-
        for (int r = 0; r < 2; ++r) {
          trip.emplace_back(row + r, last_left + r, complexd(1));
          if (cp >= 0 && B(r) != 0.0) trip.emplace_back(row + r, cp, -B(r));
          if (cm >= 0 && bc(r) != 0.0) trip.emplace_back(row + r, cm, -bc(r));
          wout.push_back(1.0);
        }
        row += 2;
      }
      if (first_right >= 0) {
        // x(p+) = b nu+ + B^c nu-
        for (int r = 0; r < 2; ++r) {
          trip.emplace_back(row + r, first_right + r, complexd(1));
          if (cp >= 0 && b(r) != 0.0) trip.emplace_back(row + r, cp, -b(r));
          if (cm >= 0 && Bc(r) != 0.0) trip.emplace_back(row + r, cm, -Bc(r));
          wout.push_back(1.0);
        }
        row += 2;
      }
    }
  }

  gd.A0.resize(row, gd.ncols);
  gd.A0.setFromTriplets(trip.begin(), trip.end());

  // L2 weights: trapezoid on nodes, unit masses on nu and w
  gd.win = VectorXd::Ones(gd.ncols);
  for (const auto& sl : gd.subs) {
    if (sl.col0 < 0) continue;
    double hh = (sl.b - sl.a) / (sl.nodes - 1);
    for (int nno = 0; nno < sl.nodes; ++nno) {
      double wgt = (nno == 0 || nno == sl.nodes - 1) ? hh / 2 : hh;
      gd.win(sl.col0 + 2 * nno) = wgt;
      gd.win(sl.col0 + 2 * nno + 1) = wgt;
    }
  }
  // weighted operator
  std::vector<Eigen::Triplet<complexd>> wt;
  for (int k = 0; k < gd.A0.outerSize(); ++k)
    for (Eigen::SparseMatrix<complexd>::InnerIterator it(gd.A0, k); it; ++it) {
      double wr = std::sqrt(wout[size_t(it.row())]);
      double wc = 1.0 / std::sqrt(gd.win(it.col()));
      wt.emplace_back(int(it.row()), int(it.col()), it.value() * wr * wc);
    }
  gd.A.resize(row, gd.ncols);
  gd.A.setFromTriplets(wt.begin(), wt.end());
  return gd;
}

/// Smallest singular pairs of the weighted grid operator by blocked inverse
/// iteration on A^H A (deterministic, seeded).
struct GridSpectrum {
  VectorXd sigma;   // ascending, nev values
  MatrixXcd vecs;   // raw-coordinate vectors (win^(-1/2) applied), L2-orthonormal
};

inline GridSpectrum grid_smallest_singular(const GridDirac& gd, int nev, std::uint64_t seed = 0,
                                           int iters = 60) {
  using SpMat = Eigen::SparseMatrix<complexd>;
  SpMat AtA = (gd.A.adjoint() * gd.A).pruned();
  // scale estimate for the regularization shift
  double scale = 0;
  for (int k = 0; k < AtA.outerSize(); ++k)
    for (SpMat::InnerIterator it(AtA, k); it; ++it)
      if (it.row() == it.col()) scale = std::max(scale, std::abs(it.value()));
  double shift = std::max(scale, 1.0) * 1e-14;
  SpMat M = AtA;
  for (int i = 0; i < M.rows(); ++i) M.coeffRef(i, i) += shift;
  Eigen::SimplicialLDLT<SpMat> ldlt(M);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("grid_smallest_singular: factorization failed");

  int n = int(gd.A.cols());
  int blk = std::min(n, nev + 2);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss;
  MatrixXcd X(n, blk);
  for (int j = 0; j < blk; ++j)
    for (int i = 0; i < n; ++i) X(i, j) = complexd(gauss(rng), gauss(rng));
  Eigen::HouseholderQR<MatrixXcd> qr0(X);
  X = qr0.householderQ() * MatrixXcd::Identity(n, blk);
  for (int it = 0; it < iters; ++it) {
    X = ldlt.solve(X);
    Eigen::HouseholderQR<MatrixXcd> qr(X);
    X = qr.householderQ() * MatrixXcd::Identity(n, blk);
  }
  // Rayleigh-Ritz on A^H A
  MatrixXcd AX = gd.A * X;
  MatrixXcd R = AX.adjoint() * AX;
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(R);
  GridSpectrum out;
  out.sigma = VectorXd(nev);
  MatrixXcd V = X * es.eigenvectors();
  out.vecs = MatrixXcd(n, nev);
  for (int j = 0; j < nev; ++j) {
    out.sigma(j) = std::sqrt(std::max(0.0, es.eigenvalues()(j)));
    out.vecs.col(j) = V.col(j);
  }
  // undo the input weighting: raw = win^(-1/2) * weighted
  for (int i = 0; i < n; ++i) out.vecs.row(i) /= std::sqrt(gd.win(i));
  return out;
}

/// Kernel of the grid operator, with the same acceptance rules as kernel().
struct GridKernel {
  MatrixXcd vecs;  // raw coordinates, L2(win)-orthonormal
  VectorXd sigma;  // ascending smallest singular values (nev of them)
  double gap = 0.0;
};

inline GridKernel grid_kernel(const BowSolution& sol, const TwistPoint& pt, double h,
                              std::uint64_t seed = 0, double min_gap = 10.0) {
  GridDirac gd = assemble_grid(sol, pt, h);
  int nlam = int(sol.rep.lambdas.size());
  GridSpectrum sp = grid_smallest_singular(gd, nlam + 2, seed);
  double kept = sp.sigma(nlam);
  double dropped = nlam > 0 ? sp.sigma(nlam - 1) : 0.0;
  double gap = dropped > 0 ? kept / dropped : std::numeric_limits<double>::infinity();
  if (gap < min_gap)
    throw NonGenericPoint("grid kernel ambiguous: spectral gap " + std::to_string(gap) +
                              " < " + std::to_string(min_gap) + "; refine the mesh",
                          sp.sigma);
  GridKernel out;
  out.vecs = sp.vecs.leftCols(nlam);
  out.sigma = sp.sigma;
  out.gap = gap;
  // re-orthonormalize in the win inner product
  MatrixXcd G = out.vecs.adjoint() * gd.win.asDiagonal() * out.vecs;
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(G);
  out.vecs = out.vecs * es.operatorInverseSqrt();
  return out;
}

/// Samples a matching-system kernel element on the grid layout (continuous
/// nodes + nu + w slots) so the two backends can be compared directly.
inline MatrixXcd sample_kernel_on_grid(const KernelBasis& kb, const GridDirac& gd) {
  const auto& sys = *kb.sys;
  MatrixXcd out = MatrixXcd::Zero(gd.ncols, kb.dim());
  for (int col = 0; col < kb.dim(); ++col) {
    for (size_t i = 0; i < gd.subs.size(); ++i) {
      const auto& sl = gd.subs[i];
      if (sl.col0 < 0) continue;
      double hh = (sl.b - sl.a) / (sl.nodes - 1);
      for (int nno = 0; nno < sl.nodes; ++nno) {
        double s = sl.a + nno * hh;
        Vector2cd val = Vector2cd::Zero();
        for (int c = 0; c < sys.n_x(); ++c)
          if (sys.xelems[size_t(c)].subint == int(i)) val += kb.C(c, col) * sys.x_eval(c, s);
        out(sl.col0 + 2 * nno, col) = val(0);
        out(sl.col0 + 2 * nno + 1, col) = val(1);
      }
    }
    for (size_t k = 0; k < gd.nucols.size(); ++k)
      for (size_t k2 = 0; k2 < sys.nucols.size(); ++k2)
        if (gd.nucols[k].sigma == sys.nucols[k2].sigma && gd.nucols[k].plus == sys.nucols[k2].plus)
          out(gd.nu_col(int(k)), col) = kb.C(sys.nu_col(int(k2)), col);
    for (size_t k = 0; k < gd.wcols.size(); ++k)
      for (size_t k2 = 0; k2 < sys.wcols.size(); ++k2)
        if (gd.wcols[k] == sys.wcols[k2]) out(gd.w_col(int(k)), col) = kb.C(sys.w_col(int(k2)), col);
  }
  return out;
}

/// Principal angles between the matching-system and grid kernels in the
/// discrete L2 inner product.
inline VectorXd backend_principal_angles(const KernelBasis& kb, const GridDirac& gd,
                                         const GridKernel& gk) {
  MatrixXcd S = sample_kernel_on_grid(kb, gd);
  MatrixXcd G = S.adjoint() * gd.win.asDiagonal() * S;
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(G);
  S = S * es.operatorInverseSqrt();
  MatrixXcd overlap = S.adjoint() * gd.win.asDiagonal() * gk.vecs;
  return principal_angles_from_overlap(overlap);
}

/// Table of the smallest nonzero singular value of the twisted Dirac operator
/// against |t| along a ray, plus the Green's-operator norm 1/sigma^2.
struct SpectralRow {
  double tnorm = 0;
  double sigma_min = 0;   // sigma_{|Lambda|+1}: smallest nonzero
  double green_norm = 0;  // 1 / sigma_min^2
  int kernel_dim = 0;
  double sigma_kernel_max = 0;  // largest of the |Lambda| kernel values (consistency)
};

inline std::vector<SpectralRow> spectral_gap(const BowSolution& sol,
                                             const std::vector<Vector3d>& nu,
                                             const Vector3d& direction,
                                             const std::vector<double>& tnorms, double h0,
                                             std::uint64_t seed = 0) {
  std::vector<SpectralRow> rows;
  int nlam = int(sol.rep.lambdas.size());
  for (double tn : tnorms) {
    TwistPoint pt = make_twist_point(nu, tn * direction.normalized());
    double h = std::min(h0, 0.1 / std::max(1.0, tn));
    GridDirac gd = assemble_grid(sol, pt, h);
    GridSpectrum sp = grid_smallest_singular(gd, nlam + 2, seed);
    SpectralRow r;
    r.tnorm = tn;
    r.sigma_min = sp.sigma(nlam);
    r.green_norm = 1.0 / (r.sigma_min * r.sigma_min);
    r.sigma_kernel_max = nlam > 0 ? sp.sigma(nlam - 1) : 0.0;
    int dim = 0;
    for (int i = 0; i < sp.sigma.size(); ++i)
      if (sp.sigma(i) <= 1e-6 * sp.sigma(sp.sigma.size() - 1)) ++dim;
    r.kernel_dim = dim;
    rows.push_back(r);
  }
  return rows;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
}

/// Frobenius-expanded Y basis at an exact pole block of dimension m >= 2 on
/// (0, eps]: the m-1 solutions of (d/ds - iT) y = 0 growing like s^{(m+1)/2},
/// integrated outward by RK4 from a small seed point.  Exercised only on the
/// pole model.
inline std::vector<std::pair<std::vector<double>, MatrixXcd>> frobenius_y_basis(
    int m, const Vector3d& t, double s0, double eps, int nsteps = 4000) {
  auto irrep = quat::su2_irrep(m);
  int dim = 2 * m;
  MatrixXcd C = MatrixXcd::Zero(dim, dim);
  for (int j = 1; j <= 3; ++j) {
    const MatrixXcd& rho = j == 1 ? irrep.rho1 : j == 2 ? irrep.rho2 : irrep.rho3;
    // kron(e_j, rho_j)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        if (quat::e(j)(a, b) != 0.0) C.block(a * m, b * m, m, m) += quat::e(j)(a, b) * rho;
  }
  // eigenspace of C = sum e_j (x) rho_j with eigenvalue (1 + m); C is Hermitian
  // (product of two anti-Hermitian factors summed over j)
  Eigen::ComplexEigenSolver<MatrixXcd> ces(C);
  std::vector<int> idx;
  for (int i = 0; i < dim; ++i)
    if (std::abs(ces.eigenvalues()(i).real() - double(1 + m)) < 1e-9) idx.push_back(i);
  // i T = C/(2s) - i tslash (x) 1
  MatrixXcd tsl = MatrixXcd::Zero(dim, dim);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      complexd z = quat::tslash(t)(a, b);
      if (z != 0.0)
        tsl.block(a * m, b * m, m, m) += z * MatrixXcd::Identity(m, m);
    }
  auto rhs = [&](double s, const MatrixXcd& Y) -> MatrixXcd {
    return (C / (2 * s) - quat::I * tsl) * Y;
  };
  MatrixXcd Y(dim, int(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k)
    Y.col(int(k)) = std::pow(s0, 0.5 * (1 + m)) * ces.eigenvectors().col(idx[size_t(k)]);
  std::vector<std::pair<std::vector<double>, MatrixXcd>> out;
  // geometric steps away from the pole
  double s = s0;
  double ratio = std::pow(eps / s0, 1.0 / nsteps);
  std::vector<double> svals{s};
  std::vector<MatrixXcd> samples{Y};
  for (int i = 0; i < nsteps; ++i) {
    double h = s * (ratio - 1.0);
    MatrixXcd k1 = rhs(s, Y);
    MatrixXcd k2 = rhs(s + h / 2, Y + (h / 2) * k1);
    MatrixXcd k3 = rhs(s + h / 2, Y + (h / 2) * k2);
    MatrixXcd k4 = rhs(s + h, Y + h * k3);
    Y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    s *= ratio;
    svals.push_back(s);
    samples.push_back(Y);
  }
  // package: one (grid, samples-at-grid) table per basis element
  for (size_t k = 0; k < idx.size(); ++k) {
    MatrixXcd tab(dim, int(svals.size()));
    for (size_t i = 0; i < svals.size(); ++i) tab.col(int(i)) = samples[i].col(int(k));
    out.emplace_back(svals, tab);
  }
  return out;
}

}  // namespace bowforge::dirac
