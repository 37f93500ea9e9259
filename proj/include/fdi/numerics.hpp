#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fdi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when an iterative numerical routine fails to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Multivariate normal N(mean, cov). Construct through make() to validate.
struct GaussianSpec {
  Vec mean;
  Mat cov;

  /// Checks symmetry (1e-10 relative) and PSD (eigenvalues >= -1e-10 * ||cov||).
  static GaussianSpec make(Vec mean, Mat cov);
  Eigen::Index dim() const { return mean.size(); }
};

/// Axis-aligned box; entries may be +/- infinity.
struct Rect {
  Vec lower;
  Vec upper;

  static Rect make(Vec lower, Vec upper);
  Eigen::Index dim() const { return lower.size(); }
};

/// A reproducible normal/uniform source identified by (seed, stream id).
/// Streams with distinct ids are statistically independent; copies share no state.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Deterministic derived stream, e.g. one per rollout or per (state, action).
  RngStream child(std::uint64_t tag) const;

  double normal();
  double uniform();
  Vec standard_normal(Eigen::Index d);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Monte-Carlo or quadrature estimate with its standard error (0 when exact).
struct ProbEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

double std_normal_cdf(double x);

/// P(X <= x, Y <= y) for standard bivariate normal with correlation rho.
double bivariate_normal_cdf(double x, double y, double rho);

struct RectProbOptions {
  std::uint64_t seed = 0x5eed;
  int lattice_points = 4096;
  int shifts = 16;
};

/// P(lower <= X <= upper). d <= 2 is deterministic (std_error = 0); d >= 3 uses a
/// randomized-lattice separation-of-variables estimator.
ProbEstimate mvn_rect_prob(const GaussianSpec& g, const Rect& r, const RectProbOptions& opts = {});

/// Monte-Carlo estimate of P(X^T W X >= threshold), X ~ g.
ProbEstimate gchi2_tail_prob(const GaussianSpec& g, const Mat& weight, double threshold,
                             RngStream& stream, long samples);

struct DareOptions {
  long max_iterations = 1'000'000;
  double tolerance = 1e-14;
};

/// Stabilizing solution of P = APA' + Q - APC'(CPC' + R)^-1 CPA' by fixed-point
/// iteration from P0 = Q.
Mat solve_dare(const Mat& A, const Mat& C, const Mat& Q, const Mat& R, const DareOptions& opts = {});

/// Riccati map f(P), exposed for residual checks.
Mat riccati_map(const Mat& P, const Mat& A, const Mat& C, const Mat& Q, const Mat& R);

/// Precomputed symmetric square-root factor of a PSD covariance.
class GaussianSampler {
 public:
  GaussianSampler() = default;
  explicit GaussianSampler(const GaussianSpec& g);

  Vec sample(RngStream& stream) const;
  Eigen::Index dim() const { return mean_.size(); }

 private:
  Vec mean_;
  Mat factor_;
  bool degenerate_ = true;
};

Vec sample_gaussian(const GaussianSpec& g, RngStream& stream);

/// Symmetric PSD check used by all covariance-taking constructors.
bool is_symmetric_psd(const Mat& m, double tol = 1e-10);
bool is_symmetric_pd(const Mat& m);

}  // namespace fdi
