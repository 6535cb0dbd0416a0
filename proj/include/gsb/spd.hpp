#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gsb {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// bad user input (shape, finiteness, definiteness)
struct input_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// a computation left its valid domain
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// spd cutoff: lambda_min must exceed this times lambda_max
inline constexpr double kSpdRelFloor = 1e-12;

inline std::string dump(const Mat& a) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Index i = 0; i < a.rows(); ++i) {
    os << (i ? ", [" : "[");
    for (Index j = 0; j < a.cols(); ++j) os << (j ? ", " : "") << a(i, j);
    os << "]";
  }
  os << "]";
  return os.str();
}

inline Mat sym(const Mat& a) { return 0.5 * (a + a.transpose()); }

inline double op_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

inline double fro_norm(const Mat& a) { return a.norm(); }

class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Mat& a) {
    if (a.rows() == 0 || a.rows() != a.cols())
      throw input_error("SymMatrix: expected a non-empty square matrix, got " +
                        std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    if (!a.allFinite()) throw input_error("SymMatrix: non-finite entries");
    a_ = sym(a);
  }

  const Mat& mat() const { return a_; }
  Index dim() const { return a_.rows(); }

 private:
  Mat a_;
};

class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(const Mat& a) : SpdMatrix(SymMatrix(a)) {}
  explicit SpdMatrix(const SymMatrix& s) : base_(s) {
    Eigen::SelfAdjointEigenSolver<Mat> es(s.mat());
    if (es.info() != Eigen::Success) throw numerical_error("SpdMatrix: eigensolver failed");
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
    const double lo = evals_(0), hi = evals_(evals_.size() - 1);
    if (!(hi > 0.0) || !(lo > kSpdRelFloor * hi)) {
      std::ostringstream os;
      os.precision(6);
      os << "not SPD: lambda_min=" << lo << " lambda_max=" << hi << " matrix=" << dump(s.mat());
      throw input_error(os.str());
    }
  }

  static SpdMatrix identity(Index d) { return SpdMatrix(Mat::Identity(d, d)); }
  static SpdMatrix diagonal(const Vec& v) { return SpdMatrix(Mat(v.asDiagonal())); }
  static SpdMatrix scalar(double s) { return SpdMatrix(Mat::Constant(1, 1, s)); }

  const Mat& mat() const { return base_.mat(); }
  const SymMatrix& base() const { return base_; }
  Index dim() const { return base_.dim(); }
  double lambda_min() const { return evals_(0); }
  double lambda_max() const { return evals_(evals_.size() - 1); }
  double cond() const { return lambda_max() / lambda_min(); }
  const Vec& eigenvalues() const { return evals_; }
  const Mat& eigenvectors() const { return evecs_; }

  // V f(L) V'
  template <class F>
  Mat apply(F f) const {
    Vec w = evals_.unaryExpr(f);
    return sym(evecs_ * w.asDiagonal() * evecs_.transpose());
  }

  SpdMatrix sqrt() const {
    return SpdMatrix(apply([](double x) { return std::sqrt(x); }));
  }
  Mat inv_sqrt() const {
    return apply([](double x) { return 1.0 / std::sqrt(x); });
  }
  Mat inverse() const {
    return apply([](double x) { return 1.0 / x; });
  }
  SpdMatrix inv() const { return SpdMatrix(inverse()); }
  SpdMatrix pow(double p) const {
    return SpdMatrix(apply([p](double x) { return std::pow(x, p); }));
  }
  double logdet() const { return evals_.array().log().sum(); }
  double trace() const { return mat().trace(); }

 private:
  SymMatrix base_;
  Vec evals_;
  Mat evecs_;
};

inline SpdMatrix congruence(const Mat& a, const SpdMatrix& s) {
  return SpdMatrix(a * s.mat() * a.transpose());
}

inline SpdMatrix sqrt_spd(const SpdMatrix& a) { return a.sqrt(); }

inline void require_same_dim(Index a, Index b, const char* what) {
  if (a != b)
    throw input_error(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
}

// u # v, outer factor picked as the better conditioned argument
inline SpdMatrix geometric_mean(const SpdMatrix& u, const SpdMatrix& v) {
  require_same_dim(u.dim(), v.dim(), "geometric_mean");
  const SpdMatrix& outer = v.cond() <= u.cond() ? v : u;
  const SpdMatrix& inner = v.cond() <= u.cond() ? u : v;
  Mat oh = outer.sqrt().mat();
  Mat oi = outer.inv_sqrt();
  SpdMatrix mid(oi * inner.mat() * oi);
  return SpdMatrix(oh * mid.sqrt().mat() * oh);
}

inline double bures_wasserstein_sq(const SpdMatrix& u, const SpdMatrix& v) {
  require_same_dim(u.dim(), v.dim(), "bures_wasserstein");
  Mat vh = v.sqrt().mat();
  SpdMatrix mid(vh * u.mat() * vh);
  double cross = mid.sqrt().trace();
  return std::max(0.0, u.trace() + v.trace() - 2.0 * cross);
}

inline double bures_wasserstein(const SpdMatrix& u, const SpdMatrix& v) {
  return std::sqrt(bures_wasserstein_sq(u, v));
}

// Tr(s1 s2^-1 - I) - log det(s1 s2^-1), via eigenvalues of s2^-1/2 s1 s2^-1/2
inline double burg_divergence(const SpdMatrix& s1, const SpdMatrix& s2) {
  require_same_dim(s1.dim(), s2.dim(), "burg_divergence");
  Mat w = s2.inv_sqrt();
  Eigen::SelfAdjointEigenSolver<Mat> es(sym(w * s1.mat() * w), Eigen::EigenvaluesOnly);
  double out = 0.0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    double l = es.eigenvalues()(i);
    out += (l - 1.0) - std::log(l);
  }
  return std::max(0.0, out);
}

struct SpectralReport {
  double lambda_min = 0;
  double lambda_max = 0;
  std::optional<double> logdet;
  double frobenius = 0;
  double spectral_norm = 0;
  double residual = 0;  // max |a v - l v| over the two extreme pairs
};

inline SpectralReport spectral_report(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a.mat());
  if (es.info() != Eigen::Success) throw numerical_error("spectral_report: eigensolver failed");
  const Vec& l = es.eigenvalues();
  const Mat& v = es.eigenvectors();
  const Index d = l.size();
  SpectralReport r;
  r.lambda_min = l(0);
  r.lambda_max = l(d - 1);
  r.frobenius = a.mat().norm();
  r.spectral_norm = std::max(std::abs(l(0)), std::abs(l(d - 1)));
  if (r.lambda_max > 0 && r.lambda_min > kSpdRelFloor * r.lambda_max)
    r.logdet = l.array().log().sum();
  r.residual = std::max((a.mat() * v.col(0) - l(0) * v.col(0)).norm(),
                        (a.mat() * v.col(d - 1) - l(d - 1) * v.col(d - 1)).norm());
  return r;
}

inline double lambda_min_sym(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// a <= b in Loewner order, up to tol (absolute, on lambda_min(b - a))
inline bool loewner_leq(const Mat& a, const Mat& b, double tol = 1e-12) {
  return lambda_min_sym(b - a) >= -tol;
}

inline void require_psd(const Mat& a, const char* what, double rel_tol = 1e-12) {
  if (a.rows() != a.cols() || !a.allFinite())
    throw input_error(std::string(what) + ": expected a finite square matrix");
  double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (lambda_min_sym(a) < -rel_tol * scale)
    throw input_error(std::string(what) + ": matrix is not positive semi-definite " + dump(a));
}

}  // namespace gsb
