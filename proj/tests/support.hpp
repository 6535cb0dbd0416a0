#pragma once

#include "gsb/gsb.hpp"

#include <cstdint>

namespace gsb::testing {

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Mat scalar(double x) { return Mat::Constant(1, 1, x); }

inline Mat random_orthogonal(Rng& rng, Index d) {
  Mat g(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  return qr.householderQ() * Mat::Identity(d, d);
}

// eigenvalues log-uniform in [lo, hi]
inline SpdMatrix random_spd(Rng& rng, Index d, double lo = 0.2, double hi = 5.0) {
  Mat q = random_orthogonal(rng, d);
  Vec l(d);
  for (Index i = 0; i < d; ++i) l(i) = std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
  return SpdMatrix(q * l.asDiagonal() * q.transpose());
}

inline Mat random_sym(Rng& rng, Index d, double scale) {
  Mat g(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  return scale * sym(g);
}

// singular values in [0.5, 2]
inline Mat random_gain(Rng& rng, Index d) {
  Mat u = random_orthogonal(rng, d), v = random_orthogonal(rng, d);
  Vec s(d);
  for (Index i = 0; i < d; ++i) s(i) = 0.5 + 1.5 * rng.uniform();
  return u * s.asDiagonal() * v.transpose();
}

inline KernelParams random_kernel(Rng& rng, Index d) {
  return {rng.normal_vec(d), random_gain(rng, d), random_spd(rng, d, 0.3, 3.0)};
}

inline BridgeProblem random_problem(Rng& rng, Index d) {
  GaussianDist eta(rng.normal_vec(d), random_spd(rng, d));
  GaussianDist mu(rng.normal_vec(d), random_spd(rng, d));
  return {eta, mu, random_kernel(rng, d)};
}

inline KernelParams scalar_kernel(double a, double b, double t) {
  return {vec({a}), scalar(b), SpdMatrix(scalar(t))};
}

inline BridgeProblem scalar_problem(double m, double s, double mb, double sb, double a, double b, double t) {
  return {GaussianDist(vec({m}), SpdMatrix(scalar(s))), GaussianDist(vec({mb}), SpdMatrix(scalar(sb))),
          scalar_kernel(a, b, t)};
}

// law of (X, Y) under nu_{m,sigma} x K_theta
inline GaussianDist joint(const Vec& m, const SpdMatrix& s, const KernelParams& th) {
  const Index d = m.size();
  Vec mean(2 * d);
  mean << m, th.alpha() + th.beta() * m;
  Mat c(2 * d, 2 * d);
  c << s.mat(), s.mat() * th.beta().transpose(), th.beta() * s.mat(),
      th.beta() * s.mat() * th.beta().transpose() + th.tau().mat();
  return {mean, SpdMatrix(c)};
}

inline Vec stack(const Vec& x, const Vec& y) {
  Vec z(x.size() + y.size());
  z << x, y;
  return z;
}

// independent Sinkhorn: alternate the conjugate map until the kernel stops moving
inline KernelParams bayes_fixed_point(const BridgeProblem& p, int max_iter = 20000) {
  KernelParams th = p.theta();
  for (int k = 0; k < max_iter; ++k) {
    KernelParams next = bayes_map(p.mu().mean(), p.mu().cov(), bayes_map(p.eta().mean(), p.eta().cov(), th));
    double step = (next.beta() - th.beta()).norm() + (next.tau().mat() - th.tau().mat()).norm() +
                  (next.alpha() - th.alpha()).norm();
    th = next;
    if (step < 1e-15) break;
  }
  return th;
}

// m = m_bar = 0, unit variances, theta = (0, 1, 1)
inline BridgeProblem c1() { return scalar_problem(0, 1, 0, 1, 0, 1, 1); }
// m = 1, m_bar = 3
inline BridgeProblem c2() { return scalar_problem(1, 1, 3, 1, 0, 1, 1); }

// 2-D experiment: nearly degenerate source covariance, source mean drawn from N(0, 10 I)
inline constexpr std::uint64_t kNearSingularSeed = 2024;

inline BridgeProblem near_singular_problem(std::uint64_t seed = kNearSingularSeed) {
  Rng rng(seed);
  Vec m = std::sqrt(10.0) * rng.normal_vec(2);
  Mat s(2, 2);
  s << 10, 9.99, 9.99, 10;
  return {GaussianDist(m, SpdMatrix(s)), GaussianDist(Vec::Zero(2), SpdMatrix::identity(2)),
          KernelParams(Vec::Zero(2), Mat::Identity(2, 2), SpdMatrix::identity(2))};
}

}  // namespace gsb::testing
