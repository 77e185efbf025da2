#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "bowforge/rational.hpp"

namespace bowforge {

enum class LambdaClass { Plus, Minus, Zero };

inline const char* to_string(LambdaClass c) {
  switch (c) {
    case LambdaClass::Plus: return "plus";
    case LambdaClass::Minus: return "minus";
    default: return "zero";
  }
}

/// Marked circle of perimeter ell with k distinct p-points in (0, ell).
struct BowDiagram {
  Rational ell;
  std::vector<Rational> p;  // sorted, 0 < p_1 < ... < p_k < ell
};

struct LambdaPoint {
  Rational s;
  LambdaClass cls;  // must agree with the rank function; checked by validate()
};

/// A bow representation: lambda-points plus a locally constant rank function.
/// ranks[i] is the rank on the i-th elementary subinterval, where subinterval 0
/// is the one containing the base point s = 0 and the rest follow in circle
/// order of their left endpoints.
struct BowRepresentation {
  BowDiagram bow;
  std::vector<LambdaPoint> lambdas;  // sorted by position
  std::vector<int> ranks;
  std::vector<int> w_dims;  // per Lambda^0 point, always 1 here
};

struct MarkedPoint {
  Rational pos;
  enum Kind { P, Lambda } kind;
  int index_in_kind;  // sigma for p-points, i for lambda-points
};

/// Elementary subinterval between consecutive marked points.  The wrapping
/// subinterval (index 0) is parametrized by [a, b] with a < 0 < b, where
/// parameter s < 0 corresponds to circle coordinate s + ell.
struct Subinterval {
  double a = 0, b = 0;
  bool wraps = false;
  int rank = 0;
  int left_marker = -1, right_marker = -1;  // indices into marked points
};

/// Derived counting data of Thm. Asymp and the Chern bookkeeping:
/// m_lambda = |Delta R|, l_s = #{p : 0 <= p < s}, r_p = #{lambda : p < lambda},
/// m_hat = Delta R + l_lambda.
struct DerivedCounts {
  std::vector<int> m_lambda;
  std::vector<int> m_hat;
  std::vector<int> l_lambda;
  std::vector<int> delta_R_lambda;
  std::vector<int> l_p;
  std::vector<int> r_p;
  std::vector<int> delta_R_p;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string str() const {
    std::string s;
    for (auto& v : violations) s += v + "\n";
    return s;
  }
};

namespace detail {

inline std::vector<MarkedPoint> marked_points(const BowRepresentation& rep) {
  std::vector<MarkedPoint> m;
  for (size_t i = 0; i < rep.bow.p.size(); ++i)
    m.push_back({rep.bow.p[i], MarkedPoint::P, int(i)});
  for (size_t i = 0; i < rep.lambdas.size(); ++i)
    m.push_back({rep.lambdas[i].s, MarkedPoint::Lambda, int(i)});
  std::sort(m.begin(), m.end(), [](const MarkedPoint& x, const MarkedPoint& y) {
    return x.pos < y.pos;
  });
  return m;
}

}  // namespace detail

/// Subintervals in the rank-array order: index 0 wraps through s = 0.
inline std::vector<Subinterval> subintervals(const BowRepresentation& rep) {
  auto m = detail::marked_points(rep);
  std::vector<Subinterval> out;
  if (m.empty()) return out;
  const double ell = rep.bow.ell.value();
  int n = int(m.size());
  // wrap subinterval: from the last marked point (shifted below 0) to the first
  Subinterval w;
  w.a = m.back().pos.value() - ell;
  w.b = m.front().pos.value();
  w.wraps = true;
  w.left_marker = n - 1;
  w.right_marker = 0;
  out.push_back(w);
  for (int i = 0; i + 1 < n; ++i) {
    Subinterval s;
    s.a = m[i].pos.value();
    s.b = m[i + 1].pos.value();
    s.left_marker = i;
    s.right_marker = i + 1;
    out.push_back(s);
  }
  for (size_t i = 0; i < out.size() && i < rep.ranks.size(); ++i) out[i].rank = rep.ranks[i];
  return out;
}

/// Rank just left/right of a marked point (by marked-point index).
inline std::pair<int, int> ranks_at_marker(const BowRepresentation& rep, int marker) {
  auto subs = subintervals(rep);
  int left = -1, right = -1;
  for (size_t i = 0; i < subs.size(); ++i) {
    if (subs[i].right_marker == marker) left = subs[i].rank;
    if (subs[i].left_marker == marker) right = subs[i].rank;
  }
  return {left, right};
}

inline ValidationReport validate(const BowRepresentation& rep) {
  ValidationReport rp;
  const auto& bow = rep.bow;
  if (!(Rational(0) < bow.ell)) rp.violations.push_back("circle length must be positive");
  if (bow.p.empty()) rp.violations.push_back("need at least one p-point");
  for (size_t i = 0; i < bow.p.size(); ++i) {
    if (!(Rational(0) < bow.p[i] && bow.p[i] < bow.ell))
      rp.violations.push_back("p-point " + bow.p[i].str() + " outside (0, ell)");
    if (i > 0 && !(bow.p[i - 1] < bow.p[i]))
      rp.violations.push_back("p-points not strictly increasing at index " + std::to_string(i));
  }
  for (size_t i = 0; i < rep.lambdas.size(); ++i) {
    const auto& lam = rep.lambdas[i];
    if (!(Rational(0) < lam.s && lam.s < bow.ell))
      rp.violations.push_back("lambda-point " + lam.s.str() + " outside (0, ell)");
    if (i > 0 && !(rep.lambdas[i - 1].s < lam.s))
      rp.violations.push_back("lambda-points not strictly increasing at index " + std::to_string(i));
    for (auto& p : bow.p)
      if (p == lam.s)
        rp.violations.push_back("lambda-point coincides with p-point at " + p.str());
  }
  if (!rp.violations.empty()) return rp;

  auto m = detail::marked_points(rep);
  size_t nsub = m.size();
  if (rep.ranks.size() != nsub) {
    rp.violations.push_back("rank array has " + std::to_string(rep.ranks.size()) +
                            " entries; expected " + std::to_string(nsub));
    return rp;
  }
  for (int r : rep.ranks)
    if (r < 0) rp.violations.push_back("negative rank");

  // minimum separation between consecutive marked points (circle-wise)
  Rational dmin = bow.ell / Rational(1000);
  for (size_t i = 0; i < nsub; ++i) {
    Rational gap = i + 1 < nsub ? m[i + 1].pos - m[i].pos : m[0].pos + bow.ell - m[i].pos;
    if (gap < dmin)
      rp.violations.push_back("marked points closer than ell/1000 near s = " + m[i].pos.str());
  }

  // classification consistency and total rank change
  int total_change = 0;
  size_t nzero = 0;
  for (size_t i = 0; i < nsub; ++i) {
    auto [rl, rr] = ranks_at_marker(rep, int(i));
    int d = rr - rl;
    total_change += d;
    if (m[i].kind == MarkedPoint::Lambda) {
      const auto& lam = rep.lambdas[size_t(m[i].index_in_kind)];
      LambdaClass expect = d > 0 ? LambdaClass::Plus : d < 0 ? LambdaClass::Minus : LambdaClass::Zero;
      if (lam.cls != expect)
        rp.violations.push_back("lambda at " + lam.s.str() + " tagged " + to_string(lam.cls) +
                                " but rank change is " + std::to_string(d));
      if (lam.cls == LambdaClass::Zero) {
        ++nzero;
        if (rl < 1)
          rp.violations.push_back("Lambda^0 point at " + lam.s.str() + " has rank 0 fiber");
      }
    }
  }
  if (total_change != 0)
    rp.violations.push_back("total rank change around the circle is " +
                            std::to_string(total_change) + ", must be 0");
  if (!rep.w_dims.empty()) {
    if (rep.w_dims.size() != nzero)
      rp.violations.push_back("w_dims size does not match the number of Lambda^0 points");
    for (int d : rep.w_dims)
      if (d != 1) rp.violations.push_back("only dim W = 1 is supported");
  }
  return rp;
}

inline DerivedCounts derived_counts(const BowRepresentation& rep) {
  DerivedCounts dc;
  for (const auto& lam : rep.lambdas) {
    int l = 0;
    for (auto& p : rep.bow.p)
      if (p < lam.s) ++l;
    dc.l_lambda.push_back(l);
  }
  auto m = detail::marked_points(rep);
  std::vector<int> dR_l(rep.lambdas.size(), 0), dR_p(rep.bow.p.size(), 0);
  for (size_t i = 0; i < m.size(); ++i) {
    auto [rl, rr] = ranks_at_marker(rep, int(i));
    if (m[i].kind == MarkedPoint::Lambda)
      dR_l[size_t(m[i].index_in_kind)] = rr - rl;
    else
      dR_p[size_t(m[i].index_in_kind)] = rr - rl;
  }
  dc.delta_R_lambda = dR_l;
  dc.delta_R_p = dR_p;
  for (size_t i = 0; i < rep.lambdas.size(); ++i) {
    dc.m_lambda.push_back(std::abs(dR_l[i]));
    dc.m_hat.push_back(dR_l[i] + dc.l_lambda[i]);
  }
  for (size_t s = 0; s < rep.bow.p.size(); ++s) {
    int l = 0, r = 0;
    for (size_t q = 0; q < rep.bow.p.size(); ++q)
      if (rep.bow.p[q] < rep.bow.p[s]) ++l;
    for (const auto& lam : rep.lambdas)
      if (rep.bow.p[s] < lam.s) ++r;
    dc.l_p.push_back(l);
    dc.r_p.push_back(r);
  }
  return dc;
}

/// Rank at the base point s = 0 (the R_0 of the index formula).
inline int rank_at_zero(const BowRepresentation& rep) {
  return rep.ranks.empty() ? 0 : rep.ranks[0];
}

/// Rotates the base point: new coordinate s' = s - shift (mod ell).  Marked
/// points keep their cyclic order; ranks are re-anchored so index 0 is again
/// the subinterval containing the new base point.  m_hat - l_lambda = Delta R
/// is invariant under this relabeling.
inline BowRepresentation rotate_base_point(const BowRepresentation& rep, const Rational& shift) {
  BowRepresentation out = rep;
  auto wrap = [&](Rational s) {
    Rational r = s - shift;
    while (!(Rational(0) < r)) r = r + rep.bow.ell;
    while (!(r < rep.bow.ell)) r = r - rep.bow.ell;
    return r;
  };
  struct Tagged {
    Rational pos;
    bool is_p;
    size_t idx;
  };
  std::vector<Tagged> pts;
  for (size_t i = 0; i < rep.bow.p.size(); ++i) pts.push_back({wrap(rep.bow.p[i]), true, i});
  for (size_t i = 0; i < rep.lambdas.size(); ++i) pts.push_back({wrap(rep.lambdas[i].s), false, i});
  std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.pos < b.pos; });

  // ranks in old order, starting from the old subinterval 0
  auto old_m = detail::marked_points(rep);
  // map: subinterval right after old marked point j has old rank index...
  // Rebuild by pairing each new subinterval with the rank left of its right marker.
  out.bow.p.clear();
  out.lambdas.clear();
  std::vector<int> new_ranks(pts.size(), 0);
  for (size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].is_p)
      out.bow.p.push_back(pts[i].pos);
    else
      out.lambdas.push_back({pts[i].pos, rep.lambdas[pts[i].idx].cls});
  }
  // rank on the subinterval whose RIGHT marker is pts[i]: equals the old rank
  // just left of the same physical marked point.
  for (size_t i = 0; i < pts.size(); ++i) {
    Rational orig = pts[i].is_p ? rep.bow.p[pts[i].idx] : rep.lambdas[pts[i].idx].s;
    int old_marker = -1;
    for (size_t j = 0; j < old_m.size(); ++j)
      if (old_m[j].pos == orig) old_marker = int(j);
    auto [rl, rr] = ranks_at_marker(rep, old_marker);
    (void)rr;
    new_ranks[i] = rl;  // subinterval ending at this marker
  }
  // new subinterval i (0 = wrap ending at pts[0]) has right marker pts[i]
  out.ranks = new_ranks;
  out.w_dims = rep.w_dims;
  return out;
}

}  // namespace bowforge
