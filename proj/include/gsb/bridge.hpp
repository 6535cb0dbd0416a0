#pragma once

#include "gsb/gaussian.hpp"
#include "gsb/riccati.hpp"

#include <algorithm>
#include <optional>
#include <utility>

namespace gsb {

class BridgeProblem {
 public:
  BridgeProblem(GaussianDist eta, GaussianDist mu, KernelParams theta)
      : eta_(std::move(eta)), mu_(std::move(mu)), theta_(std::move(theta)) {
    require_same_dim(eta_.dim(), mu_.dim(), "BridgeProblem");
    require_same_dim(eta_.dim(), theta_.dim(), "BridgeProblem");
  }
  const GaussianDist& eta() const { return eta_; }
  const GaussianDist& mu() const { return mu_; }
  const KernelParams& theta() const { return theta_; }
  Index dim() const { return eta_.dim(); }
  BridgeProblem with_theta(KernelParams th) const { return {eta_, mu_, std::move(th)}; }
  // m0 = alpha + beta m
  Vec m0() const { return theta_.alpha() + theta_.beta() * eta_.mean(); }

 private:
  GaussianDist eta_;
  GaussianDist mu_;
  KernelParams theta_;
};

struct BridgeConstants {
  Mat chi;    // tau^-1 beta
  Mat gamma;  // sigma_bar^1/2 chi sigma^1/2
  SpdMatrix varpi;
  Mat gamma_bar;
  SpdMatrix varpi_bar;
};

struct BridgeSolution {
  KernelParams params;       // (iota, kappa, varsigma)
  SpdMatrix r;
  KernelParams dual_params;  // backward bridge kernel
  SpdMatrix r_bar;
};

// f(x) = value + gradient'(x - base) + 1/2 (x - base)' hessian (x - base)
struct QuadraticPotential {
  Vec base;
  double value = 0;
  Vec gradient;
  SymMatrix hessian;

  Index dim() const { return base.size(); }

  double operator()(const Vec& x) const {
    Vec z = x - base;
    return value + gradient.dot(z) + 0.5 * z.dot(hessian.mat() * z);
  }

  QuadraticPotential rebased(const Vec& b) const {
    Vec dz = b - base;
    return {b, (*this)(b), gradient + hessian.mat() * dz, hessian};
  }

  double expectation(const GaussianDist& g) const {
    return (*this)(g.mean()) + 0.5 * (hessian.mat() * g.cov().mat()).trace();
  }

  QuadraticPotential operator+(const QuadraticPotential& o) const {
    QuadraticPotential b = o.rebased(base);
    return {base, value + b.value, gradient + b.gradient, SymMatrix(hessian.mat() + b.hessian.mat())};
  }
  QuadraticPotential operator-() const { return {base, -value, -gradient, SymMatrix(-hessian.mat())}; }
  QuadraticPotential operator-(const QuadraticPotential& o) const { return *this + (-o); }

  static QuadraticPotential zero(const Vec& base) {
    const Index d = base.size();
    return {base, 0.0, Vec::Zero(d), SymMatrix(Mat::Zero(d, d))};
  }
  static QuadraticPotential log_density(const GaussianDist& g, const Vec& base) {
    Mat p = g.cov().inverse();
    return {base, g.log_density(base), -p * (base - g.mean()), SymMatrix(-p)};
  }
};

// inf over x of f; empty when f is unbounded below
inline std::optional<double> quadratic_infimum(const QuadraticPotential& f, double rel_tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Mat> es(f.hessian.mat());
  const Vec& l = es.eigenvalues();
  const Mat& v = es.eigenvectors();
  double scale = std::max(1.0, l.cwiseAbs().maxCoeff());
  Vec g = v.transpose() * f.gradient;
  double gscale = std::max(1.0, f.gradient.norm());
  double out = f.value;
  for (Index i = 0; i < l.size(); ++i) {
    if (l(i) > rel_tol * scale) {
      out -= 0.5 * g(i) * g(i) / l(i);
    } else if (l(i) < -rel_tol * scale || std::abs(g(i)) > 1e-8 * gscale) {
      return std::nullopt;
    }
  }
  return out;
}

struct LimitPotentials {
  QuadraticPotential U;
  QuadraticPotential V;
};

struct IntegratedCosts {
  QuadraticPotential c_eta;  // in y
  QuadraticPotential c_mu;   // in x
  std::optional<QuadraticPotential> logQ;  // log Q(exp c_eta), in x; empty when the integral diverges
  std::optional<QuadraticPotential> logR;  // log R(exp c_mu), in y
};

struct CommutationReport {
  double bayes_vs_dual_alpha = 0, bayes_vs_dual_beta = 0, bayes_vs_dual_tau = 0;
  double loop_alpha = 0, loop_beta = 0, loop_tau = 0;
  double connect_r = 0, connect_r_bar = 0, connect_scaled = 0, commut = 0;
  double max() const {
    return std::max({bayes_vs_dual_alpha, bayes_vs_dual_beta, bayes_vs_dual_tau, loop_alpha, loop_beta,
                     loop_tau, connect_r, connect_r_bar, connect_scaled, commut});
  }
};

inline BridgeConstants bridge_constants(const BridgeProblem& p) {
  const Mat& beta = p.theta().beta();
  Mat chi = p.theta().tau().mat().llt().solve(beta);
  Mat gamma = p.mu().cov().sqrt().mat() * chi * p.eta().cov().sqrt().mat();
  SpdMatrix gg(gamma * gamma.transpose());
  SpdMatrix gtg(gamma.transpose() * gamma);
  return {chi, gamma, gg.inv(), gamma.transpose(), gtg.inv()};
}

namespace detail {

struct HalfBridge {
  KernelParams params;
  SpdMatrix r;
};

// bridge from src to tgt for a reference kernel with tau^-1 beta = chi
inline HalfBridge bridge_from_chi(const GaussianDist& src, const GaussianDist& tgt, const Mat& chi) {
  SpdMatrix th = tgt.cov().sqrt();
  Mat gamma = th.mat() * chi * src.cov().sqrt().mat();
  SpdMatrix varpi = SpdMatrix(gamma * gamma.transpose()).inv();
  RiccatiFixedPoints fp = fixed_points(RiccatiSpec(varpi));
  SpdMatrix varsigma(th.mat() * fp.r.mat() * th.mat());
  Mat kappa = varsigma.mat() * chi;
  Vec iota = tgt.mean() - kappa * src.mean();
  return {KernelParams(iota, kappa, varsigma), fp.r};
}

inline double rel_diff(const Mat& a, const Mat& b) { return op_norm(a - b) / std::max(1.0, op_norm(b)); }
inline double rel_diff(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace detail

inline BridgeSolution schrodinger_bridge(const BridgeProblem& p) {
  Mat chi = p.theta().tau().mat().llt().solve(p.theta().beta());
  detail::HalfBridge fwd = detail::bridge_from_chi(p.eta(), p.mu(), chi);
  detail::HalfBridge bwd = detail::bridge_from_chi(p.mu(), p.eta(), chi.transpose());
  return {fwd.params, fwd.r, bwd.params, bwd.r};
}

// bridge from mu to eta with backward reference theta1 (the dual map)
inline KernelParams dual_bridge(const BridgeProblem& p, const KernelParams& theta1) {
  Mat chi1 = theta1.tau().mat().llt().solve(theta1.beta());
  return detail::bridge_from_chi(p.mu(), p.eta(), chi1).params;
}

inline CommutationReport verify_commutation(const BridgeProblem& p) {
  using detail::rel_diff;
  const Vec& m = p.eta().mean();
  const Vec& mb = p.mu().mean();
  const SpdMatrix& s = p.eta().cov();
  const SpdMatrix& sb = p.mu().cov();
  CommutationReport out;
  BridgeSolution sol = schrodinger_bridge(p);
  BridgeConstants c = bridge_constants(p);

  KernelParams lhs = bayes_map(m, s, sol.params);
  KernelParams rhs = dual_bridge(p, bayes_map(m, s, p.theta()));
  out.bayes_vs_dual_alpha = rel_diff(lhs.alpha(), rhs.alpha());
  out.bayes_vs_dual_beta = rel_diff(lhs.beta(), rhs.beta());
  out.bayes_vs_dual_tau = rel_diff(lhs.tau().mat(), rhs.tau().mat());

  KernelParams loop = bayes_map(mb, sb, lhs);
  out.loop_alpha = rel_diff(loop.alpha(), sol.params.alpha());
  out.loop_beta = rel_diff(loop.beta(), sol.params.beta());
  out.loop_tau = rel_diff(loop.tau().mat(), sol.params.tau().mat());

  const Index d = p.dim();
  Mat i = Mat::Identity(d, d);
  const Mat& g = c.gamma;
  out.connect_r = rel_diff(sol.r.inverse(), i + g * sol.r_bar.mat() * g.transpose());
  out.connect_r_bar = rel_diff(sol.r_bar.inverse(), i + g.transpose() * sol.r.mat() * g);
  out.connect_scaled = rel_diff(sol.params.tau().inverse(),
                                sb.inverse() + c.chi * sol.dual_params.tau().mat() * c.chi.transpose());
  out.commut = rel_diff(Mat(g.transpose() * sol.r.mat()), Mat(sol.r_bar.mat() * g.transpose()));
  return out;
}

// U(m) := -log g_sigma(0) carries the 2 pi constant, V(m_bar) the remainder
inline LimitPotentials limit_potentials(const BridgeProblem& p, const BridgeSolution& sol) {
  const Vec& m = p.eta().mean();
  const Vec& mb = p.mu().mean();
  const KernelParams& th = p.theta();
  Mat ti = th.tau().inverse();
  Vec m0 = p.m0();
  const Index d = p.dim();

  Vec gv = ti * (m0 - mb);
  Mat hv = sol.params.tau().inverse() - ti;
  double v0 = 0.5 * (sol.params.tau().logdet() - th.tau().logdet()) - 0.5 * (m0 - mb).dot(ti * (m0 - mb));

  Vec gu = th.beta().transpose() * ti * (mb - m0);
  Mat hu = sol.dual_params.tau().inverse() - th.beta().transpose() * ti * th.beta();
  double u0 = 0.5 * (d * kLog2Pi + p.eta().cov().logdet());
  return {{m, u0, gu, SymMatrix(hu)}, {mb, v0, gv, SymMatrix(hv)}};
}

namespace detail {

// f(x, y) = c + l'z - 1/2 z'Pz with z = (x, y)
struct JointQuadratic {
  double c;
  Vec l;
  Mat p;

  JointQuadratic operator+(const JointQuadratic& o) const { return {c + o.c, l + o.l, p + o.p}; }

  // log of a Gaussian density on one block (block 0 = x, 1 = y)
  static JointQuadratic log_density(const GaussianDist& g, int block) {
    const Index d = g.dim();
    Mat pr = g.cov().inverse();
    JointQuadratic q{0.0, Vec::Zero(2 * d), Mat::Zero(2 * d, 2 * d)};
    q.c = -0.5 * g.mean().dot(pr * g.mean()) - 0.5 * (d * kLog2Pi + g.cov().logdet());
    q.l.segment(block * d, d) = pr * g.mean();
    q.p.block(block * d, block * d, d, d) = pr;
    return q;
  }

  // log g_tau(y - alpha - beta x)
  static JointQuadratic log_q(const KernelParams& th) {
    const Index d = th.dim();
    Mat b(d, 2 * d);
    b << -th.beta(), Mat::Identity(d, d);
    Mat ti = th.tau().inverse();
    return {-0.5 * th.alpha().dot(ti * th.alpha()) - 0.5 * (d * kLog2Pi + th.tau().logdet()),
            b.transpose() * ti * th.alpha(), b.transpose() * ti * b};
  }

  // a single-block quadratic c + l'w - 1/2 w'Pw lifted into the joint space
  static JointQuadratic lift(const QuadraticPotential& f, int block) {
    const Index d = f.dim();
    const Mat& h = f.hessian.mat();
    JointQuadratic q{0.0, Vec::Zero(2 * d), Mat::Zero(2 * d, 2 * d)};
    q.c = f.value - f.gradient.dot(f.base) + 0.5 * f.base.dot(h * f.base);
    q.l.segment(block * d, d) = f.gradient - h * f.base;
    q.p.block(block * d, block * d, d, d) = -h;
    return q;
  }

  // log of the integral over block `out`; empty when the integral diverges
  std::optional<QuadraticPotential> integrate(int out, const Vec& base) const {
    const Index d = l.size() / 2;
    const int keep = 1 - out;
    Mat poo = sym(p.block(out * d, out * d, d, d));
    Mat pko = p.block(keep * d, out * d, d, d);
    Mat pkk = p.block(keep * d, keep * d, d, d);
    Vec lo = l.segment(out * d, d), lk = l.segment(keep * d, d);
    Eigen::SelfAdjointEigenSolver<Mat> es(poo, Eigen::EigenvaluesOnly);
    double emax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(es.eigenvalues()(0) > kSpdRelFloor * std::max(emax, 1e-300))) return std::nullopt;
    Eigen::LLT<Mat> llt(poo);
    Vec pl = llt.solve(lo);
    Mat pp = llt.solve(pko.transpose());
    double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    QuadraticPotential at0{Vec::Zero(d), c + 0.5 * lo.dot(pl) + 0.5 * d * kLog2Pi - 0.5 * logdet,
                           lk - pko * pl, SymMatrix(-pkk + pko * pp)};
    return at0.rebased(base);
  }
};

}  // namespace detail

inline IntegratedCosts integrated_costs(const BridgeProblem& p) {
  using detail::JointQuadratic;
  const KernelParams& th = p.theta();
  const Vec& m = p.eta().mean();
  const Vec& mb = p.mu().mean();
  const Index d = p.dim();
  Mat ti = th.tau().inverse();
  Vec m0 = p.m0();
  double k = 0.5 * (d * kLog2Pi + th.tau().logdet());
  Mat sbeta = th.beta() * p.eta().cov().mat() * th.beta().transpose();

  QuadraticPotential c_eta{mb, 0.5 * (mb - m0).dot(ti * (mb - m0)) + 0.5 * (ti * sbeta).trace() + k,
                           ti * (mb - m0), SymMatrix(ti)};
  Vec res = mb - th.alpha() - th.beta() * m;
  QuadraticPotential c_mu{m, 0.5 * res.dot(ti * res) + 0.5 * (ti * p.mu().cov().mat()).trace() + k,
                          -th.beta().transpose() * ti * res, SymMatrix(th.beta().transpose() * ti * th.beta())};

  JointQuadratic lq = JointQuadratic::log_q(th);
  auto logQ = (JointQuadratic::log_density(p.mu(), 1) + lq + JointQuadratic::lift(c_eta, 1)).integrate(1, m);
  auto logR = (JointQuadratic::log_density(p.eta(), 0) + lq + JointQuadratic::lift(c_mu, 0)).integrate(0, mb);
  return {c_eta, c_mu, logQ, logR};
}

// theta(t) = (alpha, beta, t I) over fixed marginals
class RegularizedFamily {
 public:
  RegularizedFamily(GaussianDist eta, GaussianDist mu, Vec alpha, Mat beta)
      : eta_(std::move(eta)), mu_(std::move(mu)), alpha_(std::move(alpha)), beta_(std::move(beta)) {
    require_same_dim(eta_.dim(), mu_.dim(), "RegularizedFamily");
    require_same_dim(alpha_.size(), eta_.dim(), "RegularizedFamily");
    KernelParams probe(alpha_, beta_, SpdMatrix::identity(eta_.dim()));  // validates beta
  }
  const GaussianDist& eta() const { return eta_; }
  const GaussianDist& mu() const { return mu_; }
  const Vec& alpha() const { return alpha_; }
  const Mat& beta() const { return beta_; }
  Index dim() const { return eta_.dim(); }

  KernelParams theta(double t) const {
    if (!(t > 0.0) || !std::isfinite(t)) throw input_error("regularization parameter t must be positive");
    return {alpha_, beta_, SpdMatrix(t * Mat::Identity(dim(), dim()))};
  }
  BridgeProblem problem(double t) const { return {eta_, mu_, theta(t)}; }
  SpdMatrix sigma_beta() const { return congruence(beta_, eta_.cov()); }
  // sigma_bar^-1/2 sigma_beta^-1 sigma_bar^-1/2
  SpdMatrix omega() const {
    Mat w = mu_.cov().inv_sqrt();
    return SpdMatrix(w * sigma_beta().inverse() * w);
  }
  // sigma_beta^-1 # sigma_bar
  SpdMatrix monge_sharp() const { return geometric_mean(sigma_beta().inv(), mu_.cov()); }
  Mat monge_coefficient() const { return monge_sharp().mat() * beta_; }
  Vec monge_map(const Vec& x) const { return mu_.mean() + monge_coefficient() * (x - eta_.mean()); }

 private:
  GaussianDist eta_;
  GaussianDist mu_;
  Vec alpha_;
  Mat beta_;
};

struct RegularizationReport {
  double t = 0;
  BridgeSolution bridge;
  Mat monge_coefficient;
  double gap_kappa = 0;           // |kappa - (s_b^-1 # s_bar) beta|
  double gap_varsigma_over_t = 0; // |varsigma/t - s_b^-1 # s_bar|
  double gap_r_over_t = 0;        // |r/t - omega^1/2|
  double gap_varsigma_sigma_bar = 0;
  double kappa_norm = 0;
};

inline RegularizationReport regularized_asymptotics(const RegularizedFamily& f, double t) {
  BridgeSolution sol = schrodinger_bridge(f.problem(t));
  SpdMatrix sharp = f.monge_sharp();
  Mat coef = sharp.mat() * f.beta();
  RegularizationReport out{t, sol, coef};
  out.gap_kappa = op_norm(sol.params.beta() - coef);
  out.gap_varsigma_over_t = op_norm(sol.params.tau().mat() / t - sharp.mat());
  out.gap_r_over_t = op_norm(sol.r.mat() / t - f.omega().sqrt().mat());
  out.gap_varsigma_sigma_bar = op_norm(sol.params.tau().mat() - f.mu().cov().mat());
  out.kappa_norm = op_norm(sol.params.beta());
  return out;
}

struct EntropicW2Report {
  double t = 0;
  double tH = 0;
  double half_w2sq = 0;
  double gap = 0;          // |tH - half_w2sq|
  double decomposition = 0;  // closed form of tH - half_w2sq
  double decomposition_residual = 0;
};

inline EntropicW2Report entropic_cost_vs_w2(const RegularizedFamily& f, double t) {
  BridgeProblem p = f.problem(t);
  BridgeSolution sol = schrodinger_bridge(p);
  const Index d = f.dim();
  EntropicW2Report out;
  out.t = t;
  out.tH = t * entropic_cost(sol.params, p.theta(), f.eta(), f.mu());
  GaussianDist pushed(p.m0(), f.sigma_beta());
  double w2 = gaussian_w2(f.mu(), pushed);
  out.half_w2sq = 0.5 * w2 * w2;
  out.gap = std::abs(out.tH - out.half_w2sq);
  SpdMatrix sb = f.sigma_beta();
  Mat sharp = geometric_mean(f.mu().cov(), sb.inv()).mat();
  double logdet_r_t = sol.r.logdet() - d * std::log(t);
  out.decomposition = ((sharp - sol.params.tau().mat() / t) * sb.mat()).trace() +
                      0.5 * t * (d * kLog2Pi - logdet_r_t);
  out.decomposition_residual = std::abs(out.tH - out.half_w2sq - out.decomposition);
  return out;
}

}  // namespace gsb
