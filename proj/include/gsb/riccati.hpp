#pragma once

#include "gsb/spd.hpp"

#include <cmath>
#include <utility>

namespace gsb {

struct RiccatiSpec {
  SpdMatrix varpi;
  explicit RiccatiSpec(SpdMatrix w) : varpi(std::move(w)) {}
  Index dim() const { return varpi.dim(); }
};

struct RiccatiFixedPoints {
  SpdMatrix r;  // fixed point of Ricc
  SpdMatrix u;  // r + varpi, fixed point of Ricc^-
};

struct FloquetData {
  SpdMatrix u_inf;
  Mat g_n;
  Mat g_limit;
  double psi = 0;
  double phi = 0;
};

struct FloquetResult {
  Mat e_product;  // (I+u_{n-1})^-1 ... (I+u_0)^-1
  Mat e_floquet;  // (I+u_inf)^-n (I + (u0-u_inf) G_n)^-1
  double agreement = 0;
  double correction_cond = 1;  // condition number of I + (u0-u_inf) G_n
  double bound = 0;            // psi (1+lambda_min(u_inf))^-n
  FloquetData data;
};

struct ContractionBound {
  double psi = 0;
  double phi = 0;
  double rate = 0;  // (1+lambda_min(u_inf))^-2
};

struct Envelopes {
  Mat lower;
  Mat upper;
};

// (I + (varpi+v)^-1)^-1 = I - (I + varpi + v)^-1
inline SpdMatrix ricc_map(const RiccatiSpec& s, const Mat& v) {
  require_same_dim(v.rows(), s.dim(), "ricc_map");
  require_psd(v, "ricc_map v");
  const Index d = s.dim();
  Mat i = Mat::Identity(d, d);
  Mat a = i + s.varpi.mat() + sym(v);
  return SpdMatrix(i - a.llt().solve(i));
}

// varpi + (I+u)^-1 u = varpi + I - (I+u)^-1
inline SpdMatrix ricc_minus(const RiccatiSpec& s, const Mat& u) {
  require_same_dim(u.rows(), s.dim(), "ricc_minus");
  require_psd(u, "ricc_minus u");
  const Index d = s.dim();
  Mat i = Mat::Identity(d, d);
  return SpdMatrix(s.varpi.mat() + i - (i + sym(u)).llt().solve(i));
}

inline Mat ricc_iterate(const RiccatiSpec& s, const Mat& v0, int n) {
  if (n < 0) throw input_error("ricc_iterate: n must be nonnegative");
  Mat v = v0;
  for (int k = 0; k < n; ++k) v = ricc_map(s, v).mat();
  return v;
}

// computed in the eigenbasis of varpi; r = 2w / (w + sqrt(w^2 + 4w)) avoids cancellation
inline RiccatiFixedPoints fixed_points(const RiccatiSpec& s) {
  auto rf = [](double w) { return 2.0 * w / (w + std::sqrt(w * w + 4.0 * w)); };
  SpdMatrix r(s.varpi.apply(rf));
  SpdMatrix u(s.varpi.apply([&](double w) { return rf(w) + w; }));
  return {r, u};
}

inline FloquetData floquet_data(const RiccatiSpec& s, int n) {
  RiccatiFixedPoints fp = fixed_points(s);
  const SpdMatrix& u = fp.u;
  Mat g_n = u.apply([n](double x) {
    double q = 1.0 / (1.0 + x), acc = 0.0, p = q;
    for (int k = 0; k < n; ++k, p *= q * q) acc += p;
    return acc;
  });
  Mat g = u.apply([](double x) {
    double q = 1.0 / (1.0 + x);
    return q / (1.0 - q * q);
  });
  double psi = (1.0 + 1.0 / u.lambda_min()) * (1.0 + u.lambda_max());
  // |u_n^-1| <= |varpi^-1| in the v-difference decomposition
  double lw = s.varpi.lambda_min();
  double phi = psi / (lw * (1.0 + lw));
  return {u, g_n, g, psi, phi};
}

inline FloquetResult floquet_semigroup(const RiccatiSpec& s, const Mat& u0, int n) {
  if (n < 0) throw input_error("floquet_semigroup: n must be nonnegative");
  require_same_dim(u0.rows(), s.dim(), "floquet_semigroup");
  require_psd(u0, "floquet_semigroup u0");
  const Index d = s.dim();
  Mat i = Mat::Identity(d, d);
  FloquetResult out;
  out.data = floquet_data(s, n);

  Mat e = i;
  Mat u = sym(u0);
  for (int k = 0; k < n; ++k) {
    e = (i + u).llt().solve(e);
    u = ricc_minus(s, u).mat();
  }
  out.e_product = e;

  const SpdMatrix& ui = out.data.u_inf;
  Mat pw = ui.apply([n](double x) { return std::pow(1.0 + x, -n); });
  Mat corr = i + (sym(u0) - ui.mat()) * out.data.g_n;
  Eigen::PartialPivLU<Mat> lu(corr);
  Eigen::JacobiSVD<Mat> svd(corr);
  const Vec& sv = svd.singularValues();
  out.correction_cond = sv(d - 1) > 0 ? sv(0) / sv(d - 1) : INFINITY;
  out.e_floquet = pw * lu.solve(i);
  out.agreement = op_norm(out.e_product - out.e_floquet);
  out.bound = out.data.psi * std::pow(1.0 + ui.lambda_min(), -n);
  return out;
}

inline ContractionBound contraction_bound(const RiccatiSpec& s) {
  FloquetData fd = floquet_data(s, 0);
  double q = 1.0 + fd.u_inf.lambda_min();
  return {fd.psi, fd.phi, 1.0 / (q * q)};
}

// n-th iterate of the scalar map v -> (1 + (w+v)^-1)^-1
inline double closed_form_1d(double varpi, double v0, int n) {
  if (!(varpi > 0.0) || !std::isfinite(varpi)) throw input_error("closed_form_1d: varpi must be positive");
  if (!(v0 >= 0.0) || !std::isfinite(v0)) throw input_error("closed_form_1d: v0 must be nonnegative");
  if (n < 0) throw input_error("closed_form_1d: n must be nonnegative");
  double r = 2.0 * varpi / (varpi + std::sqrt(varpi * varpi + 4.0 * varpi));
  double rho = 1.0 / ((1.0 + r + varpi) * (1.0 + r + varpi));
  double rn = std::pow(rho, n);
  double c = varpi + 2.0 * r;
  return r + (v0 - r) * c * rn / ((v0 + varpi + r) * (1.0 - rn) + c * rn);
}

// lower bound holds for n >= 1, the sharper upper bound from n >= 2 (v_1 <= I only)
inline Envelopes monotone_envelopes(const RiccatiSpec& s, int n) {
  if (n < 1) throw input_error("monotone_envelopes: n must be >= 1");
  Mat lower = s.varpi.apply([](double w) { return w / (1.0 + w); });
  Mat upper = n == 1 ? Mat(Mat::Identity(s.dim(), s.dim()))
                     : s.varpi.apply([](double w) { return 1.0 - 1.0 / (2.0 + w); });
  return {lower, upper};
}

}  // namespace gsb
