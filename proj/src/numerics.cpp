#include "fdi/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

namespace fdi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 6.283185307179586;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double inv_normal_cdf(double p) {
  p = std::clamp(p, 1e-300, 1.0 - 1e-16);
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

// Upper-orthant probability P(X > h, Y > k) for a standard bivariate normal
// (Drezner-Wesolowsky / Genz Gauss-Legendre scheme, ~1e-15 absolute accuracy).
double bvnd(double h, double k, double r) {
  static constexpr std::array<std::array<double, 10>, 3> w = {{
      {0.1713244923791705, 0.3607615730481384, 0.4679139345726904},
      {0.04717533638651177, 0.1069393259953183, 0.1600783285433464, 0.2031674267230659,
       0.2334925365383547, 0.2491470458134029},
      {0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
       0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
       0.1491729864726037, 0.1527533871307259},
  }};
  static constexpr std::array<std::array<double, 10>, 3> x = {{
      {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970},
      {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050, -0.5873179542866171,
       -0.3678314989981802, -0.1252334085114692},
      {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
       -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154196,
       -0.2277858511416451, -0.07652652113349733},
  }};

  int ng = 2;
  int lg = 10;
  if (std::abs(r) < 0.3) {
    ng = 0;
    lg = 3;
  } else if (std::abs(r) < 0.75) {
    ng = 1;
    lg = 6;
  }

  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (int i = 0; i < lg; ++i) {
      double sn = std::sin(asr * (x[ng][i] + 1.0) / 2.0);
      bvn += w[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (-x[ng][i] + 1.0) / 2.0);
      bvn += w[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * kTwoPi) + std_normal_cdf(-h) * std_normal_cdf(-k);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * std_normal_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (int i = 0; i < lg; ++i) {
      double xs = (a * (x[ng][i] + 1.0)) * (a * (x[ng][i] + 1.0));
      double rs = std::sqrt(1.0 - xs);
      bvn += a * w[ng][i] *
             (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs -
              std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
      xs = as * (-x[ng][i] + 1.0) * (-x[ng][i] + 1.0) / 4.0;
      rs = std::sqrt(1.0 - xs);
      bvn += a * w[ng][i] * std::exp(-(bs / xs + hk) / 2.0) *
             (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) bvn += std_normal_cdf(-std::max(h, k));
  if (r < 0.0) bvn = -bvn + std::max(0.0, std_normal_cdf(-h) - std_normal_cdf(-k));
  return bvn;
}

// Lower-triangular factor of a PSD matrix; zero pivots produce zero columns.
Mat semidefinite_cholesky(const Mat& s) {
  const Eigen::Index d = s.rows();
  Mat c = Mat::Zero(d, d);
  const double scale = std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < d; ++j) {
    double pivot = s(j, j) - c.row(j).head(j).squaredNorm();
    if (pivot <= 1e-12 * scale) continue;
    c(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < d; ++i) {
      c(i, j) = (s(i, j) - c.row(i).head(j).dot(c.row(j).head(j))) / c(j, j);
    }
  }
  return c;
}

double interval_prob(double lo, double hi) {
  if (hi <= lo) return 0.0;
  // Use the upper tail when both bounds are positive to avoid cancellation.
  if (lo > 0.0) return std_normal_cdf(-lo) - std_normal_cdf(-hi);
  return std_normal_cdf(hi) - std_normal_cdf(lo);
}

ProbEstimate rect_prob_1d(const GaussianSpec& g, const Rect& r) {
  const double sd = std::sqrt(std::max(0.0, g.cov(0, 0)));
  const double mu = g.mean(0);
  if (sd == 0.0) return {(r.lower(0) <= mu && mu <= r.upper(0)) ? 1.0 : 0.0, 0.0};
  return {interval_prob((r.lower(0) - mu) / sd, (r.upper(0) - mu) / sd), 0.0};
}

ProbEstimate rect_prob_2d(const GaussianSpec& g, const Rect& r) {
  const double s0 = std::sqrt(std::max(0.0, g.cov(0, 0)));
  const double s1 = std::sqrt(std::max(0.0, g.cov(1, 1)));
  if (s0 == 0.0 || s1 == 0.0) {
    // A degenerate coordinate is a point mass: the box factorizes.
    auto marginal = [&](Eigen::Index i, double sd) {
      const double mu = g.mean(i);
      if (sd == 0.0) return (r.lower(i) <= mu && mu <= r.upper(i)) ? 1.0 : 0.0;
      return interval_prob((r.lower(i) - mu) / sd, (r.upper(i) - mu) / sd);
    };
    return {marginal(0, s0) * marginal(1, s1), 0.0};
  }
  const double rho = std::clamp(g.cov(0, 1) / (s0 * s1), -1.0, 1.0);
  const double l0 = (r.lower(0) - g.mean(0)) / s0;
  const double u0 = (r.upper(0) - g.mean(0)) / s0;
  const double l1 = (r.lower(1) - g.mean(1)) / s1;
  const double u1 = (r.upper(1) - g.mean(1)) / s1;
  if (u0 <= l0 || u1 <= l1) return {0.0, 0.0};
  const double p = bivariate_normal_cdf(u0, u1, rho) - bivariate_normal_cdf(l0, u1, rho) -
                   bivariate_normal_cdf(u0, l1, rho) + bivariate_normal_cdf(l0, l1, rho);
  return {std::clamp(p, 0.0, 1.0), 0.0};
}

constexpr std::array<int, 8> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19};

ProbEstimate rect_prob_lattice(const GaussianSpec& g, const Rect& r, const RectProbOptions& opts) {
  const Eigen::Index d = g.dim();
  if (d > static_cast<Eigen::Index>(kPrimes.size())) {
    throw std::invalid_argument("mvn_rect_prob: dimension above 8 is not supported");
  }
  const Mat c = semidefinite_cholesky(g.cov);
  const Vec a = r.lower - g.mean;
  const Vec b = r.upper - g.mean;

  Vec z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = std::sqrt(static_cast<double>(kPrimes[i]));

  RngStream stream(opts.seed, static_cast<std::uint64_t>(d));
  std::vector<double> shift_means;
  shift_means.reserve(opts.shifts);
  Vec y(d);
  for (int s = 0; s < opts.shifts; ++s) {
    Vec shift(d);
    for (Eigen::Index i = 0; i < d; ++i) shift(i) = stream.uniform();
    double acc = 0.0;
    for (int k = 1; k <= opts.lattice_points; ++k) {
      double f = 1.0;
      for (Eigen::Index i = 0; i < d && f > 0.0; ++i) {
        const double partial = c.row(i).head(i).dot(y.head(i));
        double lo = 0.0;
        double hi = 0.0;
        if (c(i, i) == 0.0) {
          const bool inside = a(i) <= partial && partial <= b(i);
          f *= inside ? 1.0 : 0.0;
          y(i) = 0.0;
          continue;
        }
        lo = std_normal_cdf((a(i) - partial) / c(i, i));
        hi = std_normal_cdf((b(i) - partial) / c(i, i));
        f *= std::max(0.0, hi - lo);
        double frac = k * z(i) + shift(i);
        frac -= std::floor(frac);
        const double wv = std::abs(2.0 * frac - 1.0);
        y(i) = inv_normal_cdf(lo + wv * (hi - lo));
      }
      acc += f;
    }
    shift_means.push_back(acc / opts.lattice_points);
  }
  double mean = 0.0;
  for (double v : shift_means) mean += v;
  mean /= static_cast<double>(shift_means.size());
  double var = 0.0;
  for (double v : shift_means) var += (v - mean) * (v - mean);
  var /= static_cast<double>(shift_means.size() - 1);
  return {std::clamp(mean, 0.0, 1.0), std::sqrt(var / static_cast<double>(shift_means.size()))};
}

}  // namespace

bool is_symmetric_psd(const Mat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  if (!m.allFinite()) return false;
  const double norm = std::max(m.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * norm) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * norm;
}

bool is_symmetric_pd(const Mat& m) {
  if (!is_symmetric_psd(m)) return false;
  Eigen::LLT<Mat> llt(0.5 * (m + m.transpose()));
  return llt.info() == Eigen::Success;
}

GaussianSpec GaussianSpec::make(Vec mean, Mat cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("GaussianSpec: covariance shape does not match mean");
  }
  if (!is_symmetric_psd(cov)) {
    throw std::invalid_argument("GaussianSpec: covariance is not symmetric positive semidefinite");
  }
  return GaussianSpec{std::move(mean), std::move(cov)};
}

Rect Rect::make(Vec lower, Vec upper) {
  if (lower.size() != upper.size()) throw std::invalid_argument("Rect: bound sizes differ");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) {
      throw std::invalid_argument("Rect: lower bound exceeds upper bound");
    }
  }
  return Rect{std::move(lower), std::move(upper)};
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(splitmix64(seed ^ splitmix64(stream_id))) {}

RngStream RngStream::child(std::uint64_t tag) const {
  return RngStream(seed_, splitmix64(stream_id_ * 0x100000001b3ULL + splitmix64(tag)));
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform() { return uniform_(engine_); }

Vec RngStream::standard_normal(Eigen::Index d) {
  Vec z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = normal();
  return z;
}

double std_normal_cdf(double x) {
  if (std::isnan(x)) return x;
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double bivariate_normal_cdf(double x, double y, double rho) {
  if (x == -kInf || y == -kInf) return 0.0;
  if (x == kInf) return std_normal_cdf(y);
  if (y == kInf) return std_normal_cdf(x);
  if (rho >= 1.0) return std_normal_cdf(std::min(x, y));
  if (rho <= -1.0) return std::max(0.0, std_normal_cdf(x) - std_normal_cdf(-y));
  return std::clamp(bvnd(-x, -y, rho), 0.0, 1.0);
}

ProbEstimate mvn_rect_prob(const GaussianSpec& g, const Rect& r, const RectProbOptions& opts) {
  if (g.dim() != r.dim()) throw std::invalid_argument("mvn_rect_prob: dimension mismatch");
  if (!is_symmetric_psd(g.cov)) throw std::invalid_argument("mvn_rect_prob: covariance is not PSD");
  switch (g.dim()) {
    case 0:
      return {1.0, 0.0};
    case 1:
      return rect_prob_1d(g, r);
    case 2:
      return rect_prob_2d(g, r);
    default:
      return rect_prob_lattice(g, r, opts);
  }
}

ProbEstimate gchi2_tail_prob(const GaussianSpec& g, const Mat& weight, double threshold,
                             RngStream& stream, long samples) {
  if (weight.rows() != g.dim() || weight.cols() != g.dim()) {
    throw std::invalid_argument("gchi2_tail_prob: weight shape does not match distribution");
  }
  if (!is_symmetric_pd(weight)) throw std::invalid_argument("gchi2_tail_prob: weight is not positive definite");
  if (samples <= 0) throw std::invalid_argument("gchi2_tail_prob: sample count must be positive");
  if (threshold == kInf) return {0.0, 0.0};

  const GaussianSampler sampler(g);
  long hits = 0;
  for (long s = 0; s < samples; ++s) {
    const Vec xs = sampler.sample(stream);
    if (xs.dot(weight * xs) >= threshold) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(samples))};
}

Mat riccati_map(const Mat& P, const Mat& A, const Mat& C, const Mat& Q, const Mat& R) {
  const Mat S = C * P * C.transpose() + R;
  const Mat APC = A * P * C.transpose();
  Mat next = A * P * A.transpose() + Q - APC * S.ldlt().solve(APC.transpose());
  return 0.5 * (next + next.transpose());
}

Mat solve_dare(const Mat& A, const Mat& C, const Mat& Q, const Mat& R, const DareOptions& opts) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || C.cols() != n || Q.rows() != n || Q.cols() != n || R.rows() != C.rows() ||
      R.cols() != C.rows()) {
    throw std::invalid_argument("solve_dare: inconsistent matrix dimensions");
  }
  if (!is_symmetric_psd(Q)) throw std::invalid_argument("solve_dare: Q is not PSD");
  if (!is_symmetric_pd(R)) throw std::invalid_argument("solve_dare: R is not positive definite");

  Mat P = 0.5 * (Q + Q.transpose());
  double delta = kInf;
  for (long it = 0; it < opts.max_iterations; ++it) {
    Mat next = riccati_map(P, A, C, Q, R);
    if (!next.allFinite()) break;
    delta = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (delta <= opts.tolerance * std::max(1.0, P.cwiseAbs().rowwise().sum().maxCoeff())) return P;
  }
  std::ostringstream msg;
  msg << "solve_dare: fixed-point iteration did not converge within " << opts.max_iterations
      << " iterations (last update " << delta << "); check that (A, C) is detectable";
  throw ConvergenceError(msg.str());
}

GaussianSampler::GaussianSampler(const GaussianSpec& g) : mean_(g.mean) {
  if (!is_symmetric_psd(g.cov)) throw std::invalid_argument("GaussianSampler: covariance is not PSD");
  const Eigen::Index d = g.dim();
  factor_ = Mat::Zero(d, d);
  if (d == 0 || g.cov.cwiseAbs().maxCoeff() == 0.0) return;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (g.cov + g.cov.transpose()));
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  degenerate_ = false;
}

Vec GaussianSampler::sample(RngStream& stream) const {
  Vec z = stream.standard_normal(mean_.size());
  if (degenerate_) return mean_;
  return mean_ + factor_ * z;
}

Vec sample_gaussian(const GaussianSpec& g, RngStream& stream) { return GaussianSampler(g).sample(stream); }

}  // namespace fdi
