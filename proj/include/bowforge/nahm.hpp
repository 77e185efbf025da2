#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bowforge/bow.hpp"
#include "bowforge/quat.hpp"

namespace bowforge {

using Eigen::Matrix2cd;
using Eigen::MatrixXcd;
using Eigen::Vector2cd;
using Eigen::Vector3d;
using Eigen::VectorXcd;

/// Nahm quadruplet data over one elementary subinterval, in the gauge
/// T_0 = 0.  CONSTANT blocks carry rank <= 1; SAMPLED blocks hold Hermitian
/// samples on a grid; POLE_MODEL is the exact solution T_j = -i rho_j / (2 s)
/// (plus an optional commuting shift), used as the local model at rank jumps.
struct NahmBlock {
  enum class Repr { Constant, Sampled, PoleModel };
  enum class Side { Left, Right };

  struct PoleDescriptor {
    int m = 0;
    quat::Su2Irrep irrep;
    Side side = Side::Left;
  };

  int subinterval = -1;
  int rank = 0;
  Repr repr = Repr::Constant;

  Vector3d T = Vector3d::Zero();  // Constant, rank 1

  std::vector<double> nodes;  // Sampled
  std::vector<std::array<MatrixXcd, 3>> samples;

  quat::Su2Irrep pole_irrep;  // PoleModel
  double pole_pos = 0.0;
  Vector3d pole_shift = Vector3d::Zero();

  std::optional<PoleDescriptor> pole_left, pole_right;

  MatrixXcd component(int j, double s) const {
    switch (repr) {
      case Repr::Constant: {
        if (rank == 0) return MatrixXcd(0, 0);
        return T(j - 1) * MatrixXcd::Identity(rank, rank);
      }
      case Repr::PoleModel: {
        const MatrixXcd& rho = j == 1 ? pole_irrep.rho1 : j == 2 ? pole_irrep.rho2 : pole_irrep.rho3;
        MatrixXcd out = (-quat::I / (2.0 * (s - pole_pos))) * rho;
        out += pole_shift(j - 1) * MatrixXcd::Identity(rank, rank);
        return out;
      }
      case Repr::Sampled: {
        if (nodes.empty()) return MatrixXcd(0, 0);
        auto it = std::lower_bound(nodes.begin(), nodes.end(), s);
        if (it == nodes.begin()) return samples.front()[size_t(j - 1)];
        if (it == nodes.end()) return samples.back()[size_t(j - 1)];
        size_t hi = size_t(it - nodes.begin()), lo = hi - 1;
        double f = (s - nodes[lo]) / (nodes[hi] - nodes[lo]);
        return (1 - f) * samples[lo][size_t(j - 1)] + f * samples[hi][size_t(j - 1)];
      }
    }
    return MatrixXcd(0, 0);
  }

  /// T-vector of a rank-1 block.
  Vector3d tvec(double s) const {
    Vector3d v;
    for (int j = 1; j <= 3; ++j) {
      MatrixXcd c = component(j, s);
      v(j - 1) = c.size() ? std::real(c(0, 0)) : 0.0;
    }
    return v;
  }
};

struct BifundamentalDatum {
  int sigma = -1;
  MatrixXcd B;  // stacked (B1; B2), size 2 R(p-) x R(p+); empty when a side has rank 0
};

struct FundamentalDatum {
  int lambda_index = -1;  // index into rep.lambdas
  VectorXcd Q;            // stacked (Q1; Q2), size 2 R_lambda (dim W = 1)
};

struct BowSolution {
  BowRepresentation rep;
  std::vector<NahmBlock> blocks;       // one per subinterval
  std::vector<BifundamentalDatum> bf;  // one per p-point
  std::vector<FundamentalDatum> fund;  // one per Lambda^0 point, in lambda order
  std::vector<Vector3d> nu;            // level, one per p-point
  bool gauge_normal_form = true;       // T_0 == 0, t_0 == 0

  const FundamentalDatum* fundamental_at(int lambda_index) const {
    for (auto& f : fund)
      if (f.lambda_index == lambda_index) return &f;
    return nullptr;
  }
};

/// Residual report of the moment-map equations: interior Nahm residual per
/// block, T-jump residual at each Lambda^0 point, and the two end conditions
/// at each p-point.  Norms are Frobenius for matrices, max over samples for
/// fields.
struct MomentMapReport {
  std::vector<double> interior;  // per subinterval
  std::vector<double> lambda_jump;
  std::vector<double> p_minus, p_plus;
  double max_residual() const {
    double m = 0;
    for (auto& v : {interior, lambda_jump, p_minus, p_plus})
      for (double x : v) m = std::max(m, x);
    return m;
  }
};

namespace detail {

/// Im(i X X^dagger) as three Hermitian components on the E factor.
inline std::array<MatrixXcd, 3> im_i_outer(const MatrixXcd& X) {
  if (X.rows() == 0) return {MatrixXcd(0, 0), MatrixXcd(0, 0), MatrixXcd(0, 0)};
  MatrixXcd M = quat::I * (X * X.adjoint());
  quat::QuaternionEnd q = quat::QuaternionEnd::decompose(M);
  return {q.m1, q.m2, q.m3};
}

inline double fro(const MatrixXcd& m) { return m.size() ? m.norm() : 0.0; }

}  // namespace detail

inline MomentMapReport verify_moment_map(const BowSolution& sol) {
  MomentMapReport rp;
  auto subs = subintervals(sol.rep);
  auto marks = detail::marked_points(sol.rep);

  // interior: || i dT1/ds - [T2, T3] || and cyclic, at interior sample points
  for (const auto& blk : sol.blocks) {
    double res = 0;
    const auto& sub = subs[size_t(blk.subinterval)];
    if (blk.rank <= 1 && blk.repr == NahmBlock::Repr::Constant) {
      res = 0;  // scalars commute and are constant
    } else {
      int nsamp = blk.repr == NahmBlock::Repr::Sampled ? int(blk.nodes.size()) : 9;
      double pad = 0.05 * (sub.b - sub.a);
      for (int i = 0; i < nsamp; ++i) {
        double s = blk.repr == NahmBlock::Repr::Sampled
                       ? blk.nodes[size_t(i)]
                       : sub.a + pad + (sub.b - sub.a - 2 * pad) * i / double(nsamp - 1);
        double h = 1e-5 * (sub.b - sub.a);
        if (blk.repr == NahmBlock::Repr::Sampled) {
          if (i == 0 || i + 1 == nsamp) continue;
          h = 0.5 * std::min(s - blk.nodes[size_t(i - 1)], blk.nodes[size_t(i + 1)] - s);
        }
        for (int j = 1; j <= 3; ++j) {
          int a = j % 3 + 1, b = a % 3 + 1;  // cyclic (j, a, b)
          MatrixXcd dT;
          if (blk.repr == NahmBlock::Repr::PoleModel) {
            // exact derivative of the pole profile
            const MatrixXcd& rho = j == 1 ? blk.pole_irrep.rho1
                                 : j == 2 ? blk.pole_irrep.rho2
                                          : blk.pole_irrep.rho3;
            dT = (quat::I / (2.0 * (s - blk.pole_pos) * (s - blk.pole_pos))) * rho;
          } else {
            dT = (blk.component(j, s + h) - blk.component(j, s - h)) / (2 * h);
          }
          MatrixXcd lhs = quat::I * dT;
          MatrixXcd rhs = blk.component(a, s) * blk.component(b, s) -
                          blk.component(b, s) * blk.component(a, s);
          res = std::max(res, detail::fro(lhs - rhs));
        }
      }
    }
    rp.interior.push_back(res);
  }

  // helper: blocks adjacent to marker index
  auto block_left_of = [&](int marker) -> const NahmBlock* {
    for (size_t i = 0; i < subs.size(); ++i)
      if (subs[i].right_marker == marker) return &sol.blocks[i];
    return nullptr;
  };
  auto block_right_of = [&](int marker) -> const NahmBlock* {
    for (size_t i = 0; i < subs.size(); ++i)
      if (subs[i].left_marker == marker) return &sol.blocks[i];
    return nullptr;
  };

  for (size_t mi = 0; mi < marks.size(); ++mi) {
    const auto& mk = marks[mi];
    double pos = mk.pos.value();
    if (mk.kind == MarkedPoint::Lambda) {
      const auto& lam = sol.rep.lambdas[size_t(mk.index_in_kind)];
      if (lam.cls != LambdaClass::Zero) continue;
      const NahmBlock* L = block_left_of(int(mi));
      const NahmBlock* R = block_right_of(int(mi));
      const FundamentalDatum* f = sol.fundamental_at(mk.index_in_kind);
      std::array<MatrixXcd, 3> imq =
          f ? detail::im_i_outer(f->Q)
            : std::array<MatrixXcd, 3>{MatrixXcd::Zero(L->rank, L->rank),
                                       MatrixXcd::Zero(L->rank, L->rank),
                                       MatrixXcd::Zero(L->rank, L->rank)};
      double res = 0;
      for (int j = 1; j <= 3; ++j)
        res = std::max(res, detail::fro(R->component(j, pos) - L->component(j, pos) -
                                        imq[size_t(j - 1)]));
      rp.lambda_jump.push_back(res);
    } else {
      int sigma = mk.index_in_kind;
      const NahmBlock* L = block_left_of(int(mi));
      const NahmBlock* R = block_right_of(int(mi));
      const MatrixXcd& B = sol.bf[size_t(sigma)].B;
      const Vector3d& nu = sol.nu[size_t(sigma)];
      double rm = 0, rpn = 0;
      if (L->rank > 0) {
        auto imb = detail::im_i_outer(B.rows() ? B : MatrixXcd::Zero(2 * L->rank, 0));
        for (int j = 1; j <= 3; ++j) {
          MatrixXcd target = -(B.rows() ? imb[size_t(j - 1)]
                                        : MatrixXcd::Zero(L->rank, L->rank));
          rm = std::max(rm, detail::fro(L->component(j, pos) -
                                        nu(j - 1) * MatrixXcd::Identity(L->rank, L->rank) -
                                        target));
        }
      }
      if (R->rank > 0) {
        MatrixXcd Bc = B.size() ? quat::charge_conjugate(B) : MatrixXcd::Zero(2 * R->rank, 0);
        auto imb = detail::im_i_outer(Bc);
        for (int j = 1; j <= 3; ++j) {
          MatrixXcd target = Bc.size() ? imb[size_t(j - 1)] : MatrixXcd::Zero(R->rank, R->rank);
          rpn = std::max(rpn, detail::fro(R->component(j, pos) -
                                          nu(j - 1) * MatrixXcd::Identity(R->rank, R->rank) -
                                          target));
        }
      }
      rp.p_minus.push_back(rm);
      rp.p_plus.push_back(rpn);
    }
  }
  return rp;
}

/// Parameters for the exact max-rank-1 constructor: the reference T value,
/// the T-jump at each Lambda^0 point (Im i Q Q^dagger; must close up around
/// the circle), and free phases for the Q and B spinors.
struct AbelianSolutionParams {
  Vector3d t_ref = Vector3d::Zero();
  std::map<int, Vector3d> jumps;  // lambda index -> jump vector (Lambda^0 only)
  std::map<int, double> phase_q;  // lambda index -> phase
  std::map<int, double> phase_b;  // p index -> phase
};

struct DegenerateConfiguration : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Builds a moment-map solution for a representation with every rank <= 1:
/// T is propagated counterclockwise from the first rank-positive subinterval,
/// picking up the prescribed jump at each Lambda^0 point; Q and B spinors are
/// produced by spinor_from_vector so all residuals vanish identically.
inline BowSolution abelian_bow_solution(const BowRepresentation& rep,
                                        const std::vector<Vector3d>& nu,
                                        const AbelianSolutionParams& params) {
  for (int r : rep.ranks)
    if (r > 1) throw std::invalid_argument("abelian_bow_solution: requires max rank 1");
  auto vr = validate(rep);
  if (!vr.ok()) throw std::invalid_argument("abelian_bow_solution: invalid rep:\n" + vr.str());
  if (nu.size() != rep.bow.p.size())
    throw std::invalid_argument("abelian_bow_solution: need one nu per p-point");

  auto subs = subintervals(rep);
  auto marks = detail::marked_points(rep);
  size_t nsub = subs.size();

  BowSolution sol;
  sol.rep = rep;
  sol.nu = nu;
  sol.blocks.resize(nsub);

  // propagate T around the circle, starting from the first rank-1 subinterval
  std::vector<std::optional<Vector3d>> tval(nsub);
  int start = -1;
  for (size_t i = 0; i < nsub; ++i)
    if (subs[i].rank == 1) { start = int(i); break; }
  if (start >= 0) {
    tval[size_t(start)] = params.t_ref;
    // walk forward in circle order (subinterval i's right marker joins subinterval i+1 mod n,
    // since subintervals are ordered by left endpoint with 0 the wrap)
    for (size_t step = 0; step < nsub; ++step) {
      size_t i = (size_t(start) + step) % nsub;
      size_t nxt = (i + 1) % nsub;
      if (subs[nxt].rank == 0) continue;
      if (subs[i].rank == 1 && tval[i]) {
        Vector3d next = *tval[i];
        int marker = subs[i].right_marker;
        if (marks[size_t(marker)].kind == MarkedPoint::Lambda) {
          int li = marks[size_t(marker)].index_in_kind;
          if (rep.lambdas[size_t(li)].cls == LambdaClass::Zero) {
            auto it = params.jumps.find(li);
            if (it != params.jumps.end()) next += it->second;
          }
        }
        if (tval[nxt] && (*tval[nxt] - next).norm() > 1e-12)
          throw DegenerateConfiguration(
              "abelian_bow_solution: jump data does not close up around the circle");
        tval[nxt] = next;
      } else if (!tval[nxt]) {
        tval[nxt] = params.t_ref;  // start of a new support component
      }
    }
  }
  for (size_t i = 0; i < nsub; ++i) {
    NahmBlock blk;
    blk.subinterval = int(i);
    blk.rank = subs[i].rank;
    blk.repr = NahmBlock::Repr::Constant;
    if (blk.rank == 1) blk.T = tval[i].value_or(params.t_ref);
    sol.blocks[i] = blk;
  }

  // fundamental data at Lambda^0 points: Im i Q Q^dagger = T(l+) - T(l-)
  for (size_t mi = 0; mi < marks.size(); ++mi) {
    if (marks[mi].kind != MarkedPoint::Lambda) continue;
    int li = marks[mi].index_in_kind;
    if (rep.lambdas[size_t(li)].cls != LambdaClass::Zero) continue;
    const NahmBlock *L = nullptr, *R = nullptr;
    for (size_t i = 0; i < nsub; ++i) {
      if (subs[i].right_marker == int(mi)) L = &sol.blocks[i];
      if (subs[i].left_marker == int(mi)) R = &sol.blocks[i];
    }
    Vector3d jump = R->T - L->T;
    double phase = 0;
    if (auto it = params.phase_q.find(li); it != params.phase_q.end()) phase = it->second;
    auto fs = quat::spinor_from_vector(-jump, phase);
    FundamentalDatum f;
    f.lambda_index = li;
    f.Q = fs.b;
    sol.fund.push_back(f);
  }

  // bifundamental data: -Im i B B^dagger = T(p-) - nu_sigma, with T continuous
  // across a p-point joining two rank-1 sides
  sol.bf.resize(rep.bow.p.size());
  for (size_t mi = 0; mi < marks.size(); ++mi) {
    if (marks[mi].kind != MarkedPoint::P) continue;
    int sigma = marks[mi].index_in_kind;
    const NahmBlock *L = nullptr, *R = nullptr;
    for (size_t i = 0; i < nsub; ++i) {
      if (subs[i].right_marker == int(mi)) L = &sol.blocks[i];
      if (subs[i].left_marker == int(mi)) R = &sol.blocks[i];
    }
    sol.bf[size_t(sigma)].sigma = sigma;
    if (L->rank == 0 || R->rank == 0) continue;  // empty bifundamental
    if ((L->T - R->T).norm() > 1e-12)
      throw DegenerateConfiguration("abelian_bow_solution: T must be continuous at p-point " +
                                    std::to_string(sigma));
    Vector3d r = L->T - nu[size_t(sigma)];
    if (r.norm() == 0.0)
      throw DegenerateConfiguration("abelian_bow_solution: T(p) = nu at p-point " +
                                    std::to_string(sigma) + "; B fiber degenerates");
    double phase = 0;
    if (auto it = params.phase_b.find(sigma); it != params.phase_b.end()) phase = it->second;
    sol.bf[size_t(sigma)].B = quat::spinor_from_vector(r, phase).b;
  }
  return sol;
}

/// Exact pole block T_j(s) = -i rho_j / (2 s) on (0, eps]; the m = 1 case is
/// the zero block.
inline NahmBlock pole_model(int m, double eps = 1.0) {
  NahmBlock blk;
  blk.rank = m;
  blk.repr = NahmBlock::Repr::PoleModel;
  blk.pole_irrep = quat::su2_irrep(m);
  blk.pole_pos = 0.0;
  blk.nodes = {1e-6 * eps, eps};
  blk.pole_left = NahmBlock::PoleDescriptor{m, blk.pole_irrep, NahmBlock::Side::Left};
  return blk;
}

/// sup over the range of the operator norm of the subtracted field
/// b_j(s) = T_j(s) + i rho_j / (2 (s - lambda)); finite for admissible data.
inline double subleading_check(const NahmBlock& blk, const quat::Su2Irrep& irrep, double pole_pos,
                               double s_lo, double s_hi, int nsamp = 200) {
  double sup = 0;
  for (int i = 0; i < nsamp; ++i) {
    // geometric spacing toward the pole
    double f = double(i) / double(nsamp - 1);
    double s = pole_pos + (s_lo - pole_pos) * std::pow((s_hi - pole_pos) / (s_lo - pole_pos), f);
    for (int j = 1; j <= 3; ++j) {
      const MatrixXcd& rho = j == 1 ? irrep.rho1 : j == 2 ? irrep.rho2 : irrep.rho3;
      MatrixXcd bhat = blk.component(j, s);
      bhat.topLeftCorner(irrep.m, irrep.m) += (quat::I / (2.0 * (s - pole_pos))) * rho;
      Eigen::JacobiSVD<MatrixXcd> svd(bhat);
      sup = std::max(sup, bhat.size() ? svd.singularValues()(0) : 0.0);
    }
  }
  return sup;
}

/// Conjugates a solution by a piecewise-constant gauge transformation (one
/// unitary per subinterval; must agree across Lambda^0 points).  Preserves
/// every moment-map residual norm.
inline BowSolution apply_gauge(const BowSolution& sol, const std::vector<MatrixXcd>& g) {
  BowSolution out = sol;
  auto subs = subintervals(sol.rep);
  auto marks = detail::marked_points(sol.rep);
  for (size_t i = 0; i < out.blocks.size(); ++i) {
    auto& blk = out.blocks[i];
    if (blk.rank == 0) continue;
    const MatrixXcd& gi = g[i];
    if (blk.repr == NahmBlock::Repr::Sampled) {
      for (auto& s : blk.samples)
        for (auto& m : s) m = gi.adjoint() * m * gi;
    }
    // rank-1 constant and pole blocks: scalar T or equivariant profile, unchanged
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
  for (size_t mi = 0; mi < marks.size(); ++mi) {
    if (marks[mi].kind == MarkedPoint::P) {
      int sigma = marks[mi].index_in_kind;
      auto& B = out.bf[size_t(sigma)].B;
      if (!B.size()) continue;
      const MatrixXcd& gm = g[size_t(sub_left_of(int(mi)))];
      const MatrixXcd& gp = g[size_t(sub_right_of(int(mi)))];
      MatrixXcd gm2 = MatrixXcd::Zero(2 * gm.rows(), 2 * gm.cols());
      gm2.topLeftCorner(gm.rows(), gm.cols()) = gm.adjoint();
      gm2.bottomRightCorner(gm.rows(), gm.cols()) = gm.adjoint();
      B = gm2 * B * gp;
    } else {
      int li = marks[mi].index_in_kind;
      for (auto& f : out.fund) {
        if (f.lambda_index != li) continue;
        const MatrixXcd& gl = g[size_t(sub_left_of(int(mi)))];
        MatrixXcd gl2 = MatrixXcd::Zero(2 * gl.rows(), 2 * gl.cols());
        gl2.topLeftCorner(gl.rows(), gl.cols()) = gl.adjoint();
        gl2.bottomRightCorner(gl.rows(), gl.cols()) = gl.adjoint();
        f.Q = gl2 * f.Q;
      }
    }
  }
  return out;
}

}  // namespace bowforge
