#pragma once

#include "gsb/spd.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <numbers>
#include <utility>

namespace gsb {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
inline constexpr double kBetaRelFloor = 1e-10;

class GaussianDist {
 public:
  GaussianDist(Vec mean, SpdMatrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    require_same_dim(mean_.size(), cov_.dim(), "GaussianDist");
    if (!mean_.allFinite()) throw input_error("GaussianDist: non-finite mean");
  }

  const Vec& mean() const { return mean_; }
  const SpdMatrix& cov() const { return cov_; }
  Index dim() const { return mean_.size(); }

  double log_density(const Vec& x) const {
    Vec z = cov_.inv_sqrt() * (x - mean_);
    return -0.5 * z.squaredNorm() - 0.5 * (dim() * kLog2Pi + cov_.logdet());
  }
  // = mu(V) for V = -log density
  double entropy() const { return 0.5 * dim() + 0.5 * (dim() * kLog2Pi + cov_.logdet()); }

 private:
  Vec mean_;
  SpdMatrix cov_;
};

// alpha, beta, tau without the invertibility requirement; tau may be singular
class RelaxedKernelParams {
 public:
  RelaxedKernelParams(Vec alpha, Mat beta, Mat tau)
      : alpha_(std::move(alpha)), beta_(std::move(beta)), tau_(sym(tau)) {
    const Index d = alpha_.size();
    if (beta_.rows() != d || beta_.cols() != d || tau_.rows() != d || tau_.cols() != d)
      throw input_error("RelaxedKernelParams: dimension mismatch");
    if (!alpha_.allFinite() || !beta_.allFinite()) throw input_error("RelaxedKernelParams: non-finite entries");
    require_psd(tau_, "RelaxedKernelParams tau");
  }
  const Vec& alpha() const { return alpha_; }
  const Mat& beta() const { return beta_; }
  const Mat& tau() const { return tau_; }
  Index dim() const { return alpha_.size(); }

 private:
  Vec alpha_;
  Mat beta_;
  Mat tau_;
};

class KernelParams {
 public:
  KernelParams(Vec alpha, Mat beta, SpdMatrix tau)
      : alpha_(std::move(alpha)), beta_(std::move(beta)), tau_(std::move(tau)) {
    const Index d = alpha_.size();
    if (beta_.rows() != d || beta_.cols() != d || tau_.dim() != d)
      throw input_error("KernelParams: dimension mismatch");
    if (!alpha_.allFinite() || !beta_.allFinite()) throw input_error("KernelParams: non-finite entries");
    Eigen::JacobiSVD<Mat> svd(beta_);
    const Vec& s = svd.singularValues();
    double smax = s(0), smin = s(d - 1);
    if (!(smax > 0.0) || smin < kBetaRelFloor * smax)
      throw input_error("KernelParams: beta is singular (smallest/largest singular value = " +
                        std::to_string(smax > 0 ? smin / smax : 0.0) + ")");
    beta_cond_ = smax / smin;
  }

  const Vec& alpha() const { return alpha_; }
  const Mat& beta() const { return beta_; }
  const SpdMatrix& tau() const { return tau_; }
  double beta_condition() const { return beta_cond_; }
  Index dim() const { return alpha_.size(); }

  // log g_tau(y - alpha - beta x)
  double log_q(const Vec& x, const Vec& y) const {
    Vec z = tau_.inv_sqrt() * (y - alpha_ - beta_ * x);
    return -0.5 * z.squaredNorm() - 0.5 * (dim() * kLog2Pi + tau_.logdet());
  }

  RelaxedKernelParams relaxed() const { return {alpha_, beta_, tau_.mat()}; }

 private:
  Vec alpha_;
  Mat beta_;
  SpdMatrix tau_;
  double beta_cond_ = 1.0;
};

struct PushforwardMoments {
  Vec a;
  SpdMatrix b;
};

inline PushforwardMoments pushforward(const Vec& m, const SpdMatrix& sigma, const KernelParams& th) {
  require_same_dim(m.size(), th.dim(), "pushforward");
  require_same_dim(sigma.dim(), th.dim(), "pushforward");
  return {th.alpha() + th.beta() * m, SpdMatrix(th.beta() * sigma.mat() * th.beta().transpose() + th.tau().mat())};
}

inline PushforwardMoments pushforward(const GaussianDist& g, const KernelParams& th) {
  return pushforward(g.mean(), g.cov(), th);
}

// conjugate (Kalman) update: the backward kernel of nu_{m,sigma} x K_theta
inline KernelParams bayes_map(const Vec& m, const SpdMatrix& sigma, const KernelParams& th) {
  PushforwardMoments h = pushforward(m, sigma, th);
  Mat kappa = h.b.mat().llt().solve(th.beta() * sigma.mat()).transpose();
  Vec iota = m - kappa * h.a;
  Mat ti_b = th.tau().mat().llt().solve(th.beta());
  SpdMatrix prec(sigma.inverse() + th.beta().transpose() * ti_b);
  SpdMatrix varsigma = prec.inv();
  double res = op_norm(kappa * h.b.mat() * kappa.transpose() + varsigma.mat() - sigma.mat());
  if (!(res <= 1e-9 * std::max(1.0, sigma.lambda_max())))
    throw numerical_error("bayes_map: marginal identity violated, residual " + std::to_string(res));
  return {iota, kappa, varsigma};
}

inline double gaussian_kl(const GaussianDist& g1, const GaussianDist& g2) {
  require_same_dim(g1.dim(), g2.dim(), "gaussian_kl");
  Vec z = g2.cov().inv_sqrt() * (g1.mean() - g2.mean());
  return 0.5 * (burg_divergence(g1.cov(), g2.cov()) + z.squaredNorm());
}

inline double gaussian_w2(const GaussianDist& g1, const GaussianDist& g2) {
  require_same_dim(g1.dim(), g2.dim(), "gaussian_w2");
  return std::sqrt(bures_wasserstein_sq(g1.cov(), g2.cov()) + (g1.mean() - g2.mean()).squaredNorm());
}

// Ent(P_{theta1} | P_{theta0}) with P_theta = nu_{m,sigma} x K_theta
inline double kernel_rel_entropy(const KernelParams& t1, const KernelParams& t0, const Vec& m,
                                 const SpdMatrix& sigma) {
  require_same_dim(t1.dim(), t0.dim(), "kernel_rel_entropy");
  require_same_dim(m.size(), t0.dim(), "kernel_rel_entropy");
  Mat w = t0.tau().inv_sqrt();
  Vec dm = (t1.alpha() + t1.beta() * m) - (t0.alpha() + t0.beta() * m);
  Mat db = (t1.beta() - t0.beta()) * sigma.sqrt().mat();
  return 0.5 * burg_divergence(t1.tau(), t0.tau()) + 0.5 * (w * dm).squaredNorm() +
         0.5 * (w * db).squaredNorm();
}

// H = Ent(P_{theta1}|P_theta) + mu(V), V = -log density of mu
inline double entropic_cost(const KernelParams& t1, const KernelParams& th, const GaussianDist& eta,
                            const GaussianDist& mu) {
  return kernel_rel_entropy(t1, th, eta.mean(), eta.cov()) + mu.entropy();
}

inline KernelParams theta_from_joint(const Vec& mean_x, const Vec& mean_y, const Mat& cov_xx,
                                     const Mat& cov_xy, const Mat& cov_yy) {
  const Index d = mean_x.size();
  require_same_dim(mean_y.size(), d, "theta_from_joint");
  if (cov_xx.rows() != d || cov_xy.rows() != d || cov_xy.cols() != d || cov_yy.rows() != d)
    throw input_error("theta_from_joint: block shapes do not match the means");
  Mat joint(2 * d, 2 * d);
  joint << cov_xx, cov_xy, cov_xy.transpose(), cov_yy;
  SpdMatrix j(joint);  // throws when the joint covariance is not SPD
  SpdMatrix sxx(cov_xx);
  Mat beta = sxx.inverse() * cov_xy;
  beta.transposeInPlace();  // Sigma_yx Sigma_xx^-1
  Eigen::JacobiSVD<Mat> svd(beta);
  if (!(svd.singularValues()(0) > 0.0) ||
      svd.singularValues()(d - 1) < kBetaRelFloor * svd.singularValues()(0))
    throw input_error("theta_from_joint: regression gain beta is singular (cross-covariance is degenerate)");
  SpdMatrix tau(cov_yy - beta * cov_xy);
  return {mean_y - beta * mean_x, beta, tau};
}

namespace detail {

// adaptive Gauss-Kronrod (7-15) for a matrix-valued integrand on [a, b]
template <class F>
struct GK15 {
  F f;
  double abs_tol;
  int max_depth;
  int evals = 0;

  Mat rule(double a, double b, double& err) {
    static constexpr std::array<double, 8> xk = {
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
    static constexpr std::array<double, 8> wk = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    static constexpr std::array<double, 4> wg = {
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    Mat fc = f(c);
    ++evals;
    Mat k = wk[7] * fc, g = wg[3] * fc;
    for (int i = 0; i < 7; ++i) {
      Mat f1 = f(c - h * xk[i]), f2 = f(c + h * xk[i]);
      evals += 2;
      k += wk[i] * (f1 + f2);
      if (i % 2 == 1) g += wg[i / 2] * (f1 + f2);
    }
    err = h * (k - g).norm();
    return h * k;
  }

  Mat run(double a, double b, double tol, int depth) {
    double err = 0;
    Mat v = rule(a, b, err);
    if (err <= tol) return v;
    if (depth >= max_depth) throw numerical_error("ou_params: quadrature did not converge");
    double c = 0.5 * (a + b);
    return run(a, c, 0.5 * tol, depth + 1) + run(c, b, 0.5 * tol, depth + 1);
  }
};

}  // namespace detail

// theta[t] for dX = (A X + b) dt + Sigma^{1/2} dW
inline KernelParams ou_params(const Mat& A, const Vec& b, const SpdMatrix& Sigma, double t,
                              double rel_tol = 1e-9) {
  const Index d = b.size();
  if (!(t > 0.0) || !std::isfinite(t)) throw input_error("ou_params: horizon t must be positive");
  if (A.rows() != d || A.cols() != d || Sigma.dim() != d) throw input_error("ou_params: dimension mismatch");
  if (!A.allFinite() || !b.allFinite()) throw input_error("ou_params: non-finite coefficients");
  // stacked integrand [e^{sA} b | e^{sA} Sigma e^{sA'}]
  auto f = [&](double s) {
    Mat e = (s * A).exp();
    Mat out(d, d + 1);
    out.col(0) = e * b;
    out.rightCols(d) = e * Sigma.mat() * e.transpose();
    return out;
  };
  double est_err = 0;
  auto quad = detail::GK15<decltype(f)>{f, 0.0, 40};
  Mat first = quad.rule(0.0, t, est_err);
  double tol = rel_tol * std::max(first.norm(), 1e-300);
  Mat integ = quad.run(0.0, t, tol, 0);
  Mat beta = (t * A).exp();
  return {integ.col(0), beta, SpdMatrix(integ.rightCols(d))};
}

}  // namespace gsb
