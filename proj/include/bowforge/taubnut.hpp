#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include "bowforge/quat.hpp"

namespace bowforge::tn {

using Eigen::Matrix2cd;
using Eigen::Matrix3d;
using Eigen::Matrix4d;
using Eigen::MatrixXcd;
using Eigen::Vector3d;
using complexd = std::complex<double>;

/// Multi-Taub-NUT data: circle length ell, NUT positions nu_sigma, and the
/// p-point positions of the small representation (p_sigma pairs with
/// nu_sigma).  The fiber coordinate tau has period 2*pi.
struct TaubNutConfig {
  double ell = 1.0;
  std::vector<Vector3d> nuts;
  std::vector<double> p_pos;  // increasing, in (0, ell); may be empty if unused

  int k() const { return int(nuts.size()); }
  double min_nut_separation() const {
    double d = std::numeric_limits<double>::infinity();
    for (size_t a = 0; a < nuts.size(); ++a)
      for (size_t b = a + 1; b < nuts.size(); ++b) d = std::min(d, (nuts[a] - nuts[b]).norm());
    return d;
  }
  void validate() const {
    if (ell <= 0) throw std::invalid_argument("taubnut: ell must be positive");
    if (nuts.size() > 1 && min_nut_separation() <= 0)
      throw std::invalid_argument("taubnut: NUT positions must be pairwise distinct");
    if (!p_pos.empty() && p_pos.size() != nuts.size())
      throw std::invalid_argument("taubnut: p_pos size must match NUT count");
  }
};

enum class Patch { North, South };

/// A point of TN_k in Gibbons-Hawking coordinates, with the Wu-Yang patch
/// used for each NUT's monopole one-form.
struct BasePoint {
  Vector3d t;
  double tau = 0.0;
  std::vector<Patch> patch;  // empty = auto per NUT (North if z-offset >= 0)

  Patch patch_for(const TaubNutConfig& cfg, int sigma) const {
    if (!patch.empty()) return patch[size_t(sigma)];
    return (t - cfg.nuts[size_t(sigma)]).z() >= 0 ? Patch::North : Patch::South;
  }
};

inline double potential(const TaubNutConfig& cfg, const Vector3d& t) {
  double v = cfg.ell;
  for (const auto& nu : cfg.nuts) {
    double r = (t - nu).norm();
    if (r == 0.0) throw std::domain_error("potential: point at a NUT");
    v += 0.5 / r;
  }
  return v;
}

inline Vector3d potential_grad(const TaubNutConfig& cfg, const Vector3d& t) {
  Vector3d g = Vector3d::Zero();
  for (const auto& nu : cfg.nuts) {
    Vector3d d = t - nu;
    g += -0.5 * d / std::pow(d.norm(), 3);
  }
  return g;
}

/// Wu-Yang monopole one-form for the harmonic function 1/(2|t-nu|), as its
/// three dt-components.  North patch: -(1 - cos th)/2 dphi, regular away from
/// the negative axis; South: +(1 + cos th)/2 dphi.  dEta = *_3 d(1/2r).
inline Vector3d eta_sigma(const TaubNutConfig& cfg, int sigma, const BasePoint& pt) {
  Vector3d d = pt.t - cfg.nuts[size_t(sigma)];
  double r = d.norm();
  double rho2 = d.x() * d.x() + d.y() * d.y();
  Patch patch = pt.patch_for(cfg, sigma);
  if (rho2 <= 1e-28 * r * r) {
    bool on_bad_axis = (patch == Patch::North && d.z() < 0) || (patch == Patch::South && d.z() > 0);
    if (on_bad_axis) throw std::domain_error("eta: on excluded patch axis; use the other patch");
    return Vector3d::Zero();
  }
  double f = patch == Patch::North ? -0.5 * (1.0 - d.z() / r) : 0.5 * (1.0 + d.z() / r);
  // dphi = (-y dx + x dy)/(x^2+y^2)
  return f * Vector3d(-d.y() / rho2, d.x() / rho2, 0.0);
}

inline Vector3d eta(const TaubNutConfig& cfg, const BasePoint& pt) {
  Vector3d s = Vector3d::Zero();
  for (int sigma = 0; sigma < cfg.k(); ++sigma) s += eta_sigma(cfg, sigma, pt);
  return s;
}

/// Gibbons-Hawking metric V dt^2 + (dtau + eta)^2 / V as a 4x4 matrix in
/// coordinates (t1, t2, t3, tau).  det g = V^2.
inline Matrix4d metric(const TaubNutConfig& cfg, const BasePoint& pt) {
  double V = potential(cfg, pt.t);
  Vector3d et = eta(cfg, pt);
  Matrix4d g = Matrix4d::Zero();
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) g(j, k) = et(j) * et(k) / V;
    g(j, j) += V;
    g(j, 3) = g(3, j) = et(j) / V;
  }
  g(3, 3) = 1.0 / V;
  return g;
}

/// V_l(v) = v + sum_{p_sigma < v} 1/(2 r_sigma)  (Eq. for the partial quotient).
inline double v_partial(const TaubNutConfig& cfg, double v, const Vector3d& t) {
  double out = v;
  for (int sigma = 0; sigma < cfg.k(); ++sigma)
    if (cfg.p_pos[size_t(sigma)] < v) out += 0.5 / (t - cfg.nuts[size_t(sigma)]).norm();
  return out;
}

/// Connection components of a U(1) connection written as d + i a with a the
/// real one-form a_tau (dtau + ..) + a_vec . dt.
struct U1Connection {
  double a_tau = 0.0;
  Vector3d a_vec = Vector3d::Zero();
};

/// Tautological line-bundle connection a_v = V_l(v) (dtau+eta)/V - sum_{p<v} eta_sigma.
inline U1Connection taut_connection(const TaubNutConfig& cfg, double v, const BasePoint& pt) {
  double V = potential(cfg, pt.t);
  double vl = v_partial(cfg, v, pt.t);
  U1Connection a;
  a.a_tau = vl / V;
  a.a_vec = (vl / V) * eta(cfg, pt);
  for (int sigma = 0; sigma < cfg.k(); ++sigma)
    if (cfg.p_pos[size_t(sigma)] < v) a.a_vec -= eta_sigma(cfg, sigma, pt);
  return a;
}

/// Closed-form U(1) instanton d_a = pi* d_omega - i (H/V) (dtau + eta) with
/// H = lambda + sum_sigma v_sigma / (2 r_sigma).
struct AbelianInstanton {
  double lambda = 0.0;
  std::vector<int> v;
};

inline double abelian_H(const TaubNutConfig& cfg, const AbelianInstanton& inst, const Vector3d& t) {
  double h = inst.lambda;
  for (int sigma = 0; sigma < cfg.k(); ++sigma)
    h += 0.5 * inst.v[size_t(sigma)] / (t - cfg.nuts[size_t(sigma)]).norm();
  return h;
}

inline Vector3d abelian_H_grad(const TaubNutConfig& cfg, const AbelianInstanton& inst,
                               const Vector3d& t) {
  Vector3d g = Vector3d::Zero();
  for (int sigma = 0; sigma < cfg.k(); ++sigma) {
    Vector3d d = t - cfg.nuts[size_t(sigma)];
    g += -0.5 * inst.v[size_t(sigma)] * d / std::pow(d.norm(), 3);
  }
  return g;
}

inline U1Connection abelian_connection(const TaubNutConfig& cfg, const AbelianInstanton& inst,
                                       const BasePoint& pt) {
  double V = potential(cfg, pt.t);
  double H = abelian_H(cfg, inst, pt.t);
  U1Connection a;
  a.a_tau = -H / V;
  a.a_vec = -(H / V) * eta(cfg, pt);
  for (int sigma = 0; sigma < cfg.k(); ++sigma)
    a.a_vec += double(inst.v[size_t(sigma)]) * eta_sigma(cfg, sigma, pt);
  return a;
}

/// Curvature components (real form F_r with F = i F_r) in (t, tau) coordinates.
struct U1Curvature {
  Vector3d F_jtau;           // F_r(d/dt_j, d/dtau)
  Vector3d F_jk_cyclic;     // component ordering: (F_23, F_31, F_12)
};

/// Exact curvature of the abelian instanton from closed-form derivatives.
inline U1Curvature abelian_curvature(const TaubNutConfig& cfg, const AbelianInstanton& inst,
                                     const BasePoint& pt) {
  double V = potential(cfg, pt.t);
  double H = abelian_H(cfg, inst, pt.t);
  Vector3d dV = potential_grad(cfg, pt.t);
  Vector3d dH = abelian_H_grad(cfg, inst, pt.t);
  Vector3d dHoV = (dH - (H / V) * dV) / V;
  Vector3d et = eta(cfg, pt);
  U1Curvature F;
  F.F_jtau = -dHoV;
  // F_jk = eps_jkl d_l H - (d_j(H/V) eta_k - d_k(H/V) eta_j) - (H/V) eps_jkl d_l V
  Vector3d curl_part = dH - (H / V) * dV;  // coefficient of eps_jkl (index l)
  auto jk = [&](int j, int k, int l) {
    return curl_part(l) - (dHoV(j) * et(k) - dHoV(k) * et(j));
  };
  F.F_jk_cyclic = Vector3d(jk(1, 2, 0), jk(2, 0, 1), jk(0, 1, 2));
  return F;
}

/// Orthonormal-frame components of a 2-form given its coordinate components,
/// in the frame E^j = V^(1/2) dt^j, E^4 = V^(-1/2)(dtau + eta).  For matrices
/// use the templated overload below.
template <class Mat>
struct FrameCurvature {
  std::array<Mat, 3> G_jk;  // (G_23, G_31, G_12)
  std::array<Mat, 3> G_j4;  // (G_14, G_24, G_34)
};

template <class Mat>
FrameCurvature<Mat> frame_components(const TaubNutConfig& cfg, const BasePoint& pt,
                                     const std::array<Mat, 3>& F_jtau,
                                     const std::array<Mat, 3>& F_jk_cyclic) {
  double V = potential(cfg, pt.t);
  Vector3d et = eta(cfg, pt);
  FrameCurvature<Mat> out;
  // cyclic index sets: (j,k) with l completing the cycle
  const int J[3] = {1, 2, 0}, K[3] = {2, 0, 1};
  for (int l = 0; l < 3; ++l) {
    int j = J[l], k = K[l];
    out.G_jk[size_t(l)] = (F_jk_cyclic[size_t(l)] - F_jtau[size_t(j)] * et(k) +
                           F_jtau[size_t(k)] * et(j)) /
                          V;
  }
  out.G_j4 = F_jtau;
  return out;
}

namespace detail {
inline double sqnorm(double x) { return x * x; }
inline double sqnorm(const MatrixXcd& m) { return m.squaredNorm(); }
inline double sqnorm(const Matrix2cd& m) { return m.squaredNorm(); }
}  // namespace detail

/// ||F + *F|| / ||F|| with the Hodge star of the stated orientation
/// (volume form V dt1^dt2^dt3^dtau).  Zero for anti-self-dual curvature.
template <class Mat>
double asd_residual(const FrameCurvature<Mat>& G) {
  double num = 0, den = 0;
  for (int l = 0; l < 3; ++l) {
    Mat plus = G.G_jk[size_t(l)] + G.G_j4[size_t(l)];
    num += 2.0 * detail::sqnorm(plus);
    den += detail::sqnorm(G.G_jk[size_t(l)]) + detail::sqnorm(G.G_j4[size_t(l)]);
  }
  return den == 0 ? 0.0 : std::sqrt(num / den);
}

inline double abelian_asd_residual(const TaubNutConfig& cfg, const AbelianInstanton& inst,
                                   const BasePoint& pt) {
  U1Curvature F = abelian_curvature(cfg, inst, pt);
  std::array<double, 3> fj = {F.F_jtau(0), F.F_jtau(1), F.F_jtau(2)};
  std::array<double, 3> fc = {F.F_jk_cyclic(0), F.F_jk_cyclic(1), F.F_jk_cyclic(2)};
  return asd_residual(frame_components<double>(cfg, pt, fj, fc));
}

/// Gauss-Legendre nodes/weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(size_t(n), 0.0);
  w.assign(size_t(n), 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = 0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2 * j + 1) * z * p1 - j * p2) / (j + 1);
      }
      pp = n * (z * p0 - p1) / (z * z - 1);
      double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[size_t(i)] = -z;
    x[size_t(n - 1 - i)] = z;
    w[size_t(i)] = w[size_t(n - 1 - i)] = 2.0 / ((1 - z * z) * pp * pp);
  }
}

/// (i/2pi) Int_{C_sigma} F for the abelian instanton by 2-d quadrature over
/// the cigar (Gauss-Legendre in the compactified ray parameter, trapezoid in
/// the fiber angle), with the tail beyond u_max added in closed form.
/// Equals lambda/ell - v_sigma.
inline double cigar_ch1(const TaubNutConfig& cfg, const AbelianInstanton& inst, int sigma,
                        const Vector3d& direction, int u_nodes = 200, int tau_nodes = 64,
                        double u_max = 1e3) {
  Vector3d n = direction.normalized();
  const Vector3d nu = cfg.nuts[size_t(sigma)];
  double dmin = cfg.nuts.size() > 1 ? cfg.min_nut_separation() : 1.0;
  for (int rho = 0; rho < cfg.k(); ++rho) {
    if (rho == sigma) continue;
    Vector3d d = cfg.nuts[size_t(rho)] - nu;
    double along = d.dot(n);
    if (along > 0 && (d - along * n).norm() < 1e-3 * dmin)
      throw std::domain_error("cigar_ch1: ray passes near another NUT; pick another direction");
  }
  // substitution u = tan(theta): Gauss nodes in theta on [0, atan(u_max)]
  std::vector<double> gx, gw;
  gauss_legendre(u_nodes, gx, gw);
  double theta_max = std::atan(u_max);
  std::vector<double> contrib(size_t(u_nodes), 0.0);
  for (int i = 0; i < u_nodes; ++i) {
    double theta = 0.5 * theta_max * (gx[size_t(i)] + 1.0);
    double u = std::tan(theta);
    double jac = 0.5 * theta_max * (1.0 + u * u);
    BasePoint pt;
    pt.t = nu + u * n;
    U1Curvature F = abelian_curvature(cfg, inst, pt);
    double f_utau = n.dot(F.F_jtau);
    // trapezoid over the fiber circle; integrand is tau-independent
    double tau_sum = 0;
    for (int m = 0; m < tau_nodes; ++m) tau_sum += f_utau;
    tau_sum *= 2.0 * M_PI / tau_nodes;
    contrib[size_t(i)] = gw[size_t(i)] * jac * tau_sum;
  }
  double integral = 0;
  for (double c : contrib) integral += c;
  // (i/2pi) * i * integral(F_r) = -(1/2pi) integral
  double value = -integral / (2.0 * M_PI);
  // tail beyond u_max, added from the closed form of H/V
  BasePoint far;
  far.t = nu + u_max * n;
  value += inst.lambda / cfg.ell - abelian_H(cfg, inst, far.t) / potential(cfg, far.t);
  return value;
}

/// Second Chern character of the abelian instanton.  Closed form
/// -(lambda/ell)^2 k/2 + (lambda/ell) sum v - sum v^2 / 2; optionally
/// cross-checked by the boundary reduction (sphere at infinity minus small
/// NUT spheres) evaluated by quadrature.
inline double ch2_abelian_formula(const TaubNutConfig& cfg, const AbelianInstanton& inst) {
  double lol = inst.lambda / cfg.ell;
  double sv = 0, sv2 = 0;
  for (int vv : inst.v) {
    sv += vv;
    sv2 += double(vv) * vv;
  }
  return -0.5 * lol * lol * cfg.k() + lol * sv - 0.5 * sv2;
}

inline double ch2_abelian_quadrature(const TaubNutConfig& cfg, const AbelianInstanton& inst,
                                     double R = 2000.0, int nodes = 96) {
  // ch2 = (1/8pi^2) * 2pi * [ S(infinity) - sum_sigma S(nut_sigma) ],
  // S(sphere) = Int ((H/V)^2 dV/dn - 2 (H/V) dH/dn) dA.
  double r_min = 1e-3 * (cfg.nuts.size() > 1 ? cfg.min_nut_separation() : 1.0);
  std::vector<double> cx, cw;
  gauss_legendre(nodes, cx, cw);
  int nphi = 2 * nodes;
  auto sphere_term = [&](const Vector3d& center, double radius) {
    double acc = 0;
    for (int i = 0; i < nodes; ++i) {
      double cth = cx[size_t(i)];
      double sth = std::sqrt(std::max(0.0, 1.0 - cth * cth));
      for (int m = 0; m < nphi; ++m) {
        double phi = 2.0 * M_PI * m / nphi;
        Vector3d nrm(sth * std::cos(phi), sth * std::sin(phi), cth);
        Vector3d t = center + radius * nrm;
        double V = potential(cfg, t), H = abelian_H(cfg, inst, t);
        double dVdn = potential_grad(cfg, t).dot(nrm);
        double dHdn = abelian_H_grad(cfg, inst, t).dot(nrm);
        double f = (H / V) * (H / V) * dVdn - 2.0 * (H / V) * dHdn;
        acc += cw[size_t(i)] * (2.0 * M_PI / nphi) * f * radius * radius;
      }
    }
    return acc;
  };
  Vector3d centroid = Vector3d::Zero();
  for (auto& nu : cfg.nuts) centroid += nu / double(cfg.k());
  double total = sphere_term(centroid, R);
  for (auto& nu : cfg.nuts) total -= sphere_term(nu, r_min);
  return total / (4.0 * M_PI);
}

/// Chern data of the tautological bundle e_s over the compactification:
/// ch1[C_sigma] = 1 if p_sigma < s else 0, ch2 = -#{p_sigma < s}/2.
struct CharFe {
  std::vector<int> ch1;
  double ch2 = 0;
};

inline CharFe charfe(const TaubNutConfig& cfg, double s) {
  CharFe out;
  int l = 0;
  for (double p : cfg.p_pos) {
    bool left = p < s;
    out.ch1.push_back(left ? 1 : 0);
    if (left) ++l;
  }
  out.ch2 = -0.5 * l;
  return out;
}

/// Intersection numbers of the compactified two-cycles (Sec. on topology).
struct TopologyTable {
  int k = 0;
  int c_dot_c(int s, int r) const { return s == r ? -1 : 0; }
  int c_dot_inf() const { return -1; }
  int inf_dot_inf() const { return -k; }
};

}  // namespace bowforge::tn
