#include "fdi/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "fdi/io.hpp"
#include "fdi/parallel.hpp"

namespace fdi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Standardized bound beyond which Gaussian tail mass (< 1e-19) is dropped.
constexpr double kTailCut = 9.0;

// Closed-form kernel for n = m = 1. X1 = C w + v is the residual noise,
// X2 = W_K w - K v the error innovation.
struct ScalarKernel {
  double s1 = 0.0;
  double s2 = 0.0;
  double rho = 0.0;
  double half_width = 0.0;  // sqrt(eta * P_r)
  double CA = 0.0;
  double AK = 0.0;
  double K = 0.0;

  explicit ScalarKernel(const AttackMdp& mdp) {
    const Mat cov = residual_error_covariance(*mdp.model, *mdp.ss);
    s1 = std::sqrt(std::max(0.0, cov(0, 0)));
    s2 = std::sqrt(std::max(0.0, cov(1, 1)));
    rho = (s1 > 0.0 && s2 > 0.0) ? std::clamp(cov(0, 1) / (s1 * s2), -1.0, 1.0) : 0.0;
    half_width = std::sqrt(mdp.eta * mdp.ss->P_r(0, 0));
    CA = (mdp.model->C() * mdp.model->A())(0, 0);
    AK = mdp.ss->A_K(0, 0);
    K = mdp.ss->K(0, 0);
  }

  // Standardized no-detect interval for X1.
  std::pair<double, double> silent_interval(double e, double a) const {
    const double y1 = CA * e + a;
    if (half_width == kInf) return {-kInf, kInf};
    return {(-half_width - y1) / s1, (half_width - y1) / s1};
  }

  static double detect_prob(double l, double u) {
    if (l == -kInf && u == kInf) return 0.0;
    return std_normal_cdf(l) + std_normal_cdf(-u);
  }

  // P(X2 <= z).
  double error_cdf(double z) const {
    if (s2 == 0.0) return z >= 0.0 ? 1.0 : 0.0;
    const double zs = z / s2;
    if (zs < -kTailCut) return 0.0;
    if (zs > kTailCut) return 1.0;
    return std_normal_cdf(zs);
  }

  // P(X1 in [l, u], X2 <= z) with silent = P(X1 in [l, u]).
  double silent_cdf(double l, double u, double silent, double z) const {
    if (silent == 0.0) return 0.0;
    if (s2 == 0.0) return z >= 0.0 ? silent : 0.0;
    const double zs = z / s2;
    if (zs < -kTailCut) return 0.0;
    if (zs > kTailCut) return silent;
    return std::max(0.0, bivariate_normal_cdf(u, zs, rho) - bivariate_normal_cdf(l, zs, rho));
  }
};

TransitionRow scalar_row(const AttackMdp& mdp, const ScalarKernel& kern, const Grid& grid, double e, double a) {
  const long n = grid.size();
  const double delta = assumed_delta(mdp.delta_rule, Vec::Constant(1, a))(0);
  const double shift_silent = kern.AK * e - kern.K * a;
  const double shift_detect = kern.AK * e - kern.K * (a - delta);
  const auto [l, u] = kern.silent_interval(e, a);
  const double detection = ScalarKernel::detect_prob(l, u);
  const double silent = (l == -kInf && u == kInf) ? 1.0 : std::max(0.0, std_normal_cdf(u) - std_normal_cdf(l));

  auto joint_silent = [&](double b) { return kern.silent_cdf(l, u, silent, b - shift_silent); };
  auto joint_detect = [&](double b) {
    const double z = b - shift_detect;
    return std::max(0.0, kern.error_cdf(z) - kern.silent_cdf(l, u, silent, z));
  };

  TransitionRow row;
  row.detection = detection;
  row.probs.assign(static_cast<std::size_t>(n), 0.0);
  row.detected.assign(static_cast<std::size_t>(n), 0.0);
  const double lo = grid.lo()(0);
  const double step = grid.step()(0);
  double prev_silent = 0.0;
  double prev_detect = 0.0;
  for (long j = 0; j < n; ++j) {
    double cur_silent = silent;
    double cur_detect = detection;
    if (j + 1 < n) {
      const double boundary = lo + (static_cast<double>(j) + 0.5) * step;
      cur_silent = joint_silent(boundary);
      cur_detect = joint_detect(boundary);
    }
    const double detected = std::max(0.0, cur_detect - prev_detect);
    row.detected[static_cast<std::size_t>(j)] = detected;
    row.probs[static_cast<std::size_t>(j)] = std::max(0.0, cur_silent - prev_silent) + detected;
    prev_silent = cur_silent;
    prev_detect = cur_detect;
  }
  const double outer_lo = lo - 0.5 * step;
  const double outer_hi = grid.hi()(0) + 0.5 * step;
  row.in_bounds = (joint_silent(outer_hi) - joint_silent(outer_lo)) + (joint_detect(outer_hi) - joint_detect(outer_lo));
  return row;
}

struct NoiseSamplers {
  GaussianSampler w;
  GaussianSampler v;
};

TransitionRow sampled_row(const AttackMdp& mdp, const Grid& grid, const Vec& e, const Vec& a,
                          const SamplingOptions& opts, std::uint64_t tag) {
  const SystemModel& model = *mdp.model;
  const SteadyState& ss = *mdp.ss;
  const Vec delta = assumed_delta(mdp.delta_rule, a);
  const Vec y1 = model.C() * model.A() * e + a;
  const Vec base = ss.A_K * e;
  RngStream stream = RngStream(opts.seed, 0).child(tag);

  TransitionRow row;
  row.probs.assign(static_cast<std::size_t>(grid.size()), 0.0);
  row.detected.assign(static_cast<std::size_t>(grid.size()), 0.0);
  long detected = 0;
  long inside = 0;
  const Vec outer_lo = grid.lo() - 0.5 * grid.step();
  const Vec outer_hi = grid.hi() + 0.5 * grid.step();
  for (long s = 0; s < opts.samples; ++s) {
    const Vec w = model.process_noise().sample(stream);
    const Vec v = model.measurement_noise().sample(stream);
    const Vec r = y1 + model.C() * w + v;
    const bool alarm = r.dot(ss.P_r_inv * r) > mdp.eta;
    Vec next = base + ss.W_K * w - ss.K * v - ss.K * a;
    if (alarm) {
      next += ss.K * delta;
      ++detected;
    }
    if ((next.array() > outer_lo.array()).all() && (next.array() <= outer_hi.array()).all()) ++inside;
    const auto cell = static_cast<std::size_t>(grid.nearest(next));
    row.probs[cell] += 1.0;
    if (alarm) row.detected[cell] += 1.0;
  }
  const double total = static_cast<double>(opts.samples);
  for (double& p : row.probs) p /= total;
  for (double& p : row.detected) p /= total;
  row.detection = static_cast<double>(detected) / total;
  row.in_bounds = static_cast<double>(inside) / total;
  return row;
}

void normalize(std::span<double> row) {
  double sum = 0.0;
  for (double p : row) sum += p;
  if (sum <= 0.0) throw std::runtime_error("transition row has zero mass");
  for (double& p : row) p = std::clamp(p / sum, 0.0, 1.0);
}

void expect_token(std::istream& in, const std::string& want) {
  std::string tok;
  if (!(in >> tok) || tok != want) throw ParseError("expected '" + want + "' but found '" + tok + "'");
}

double read_double(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw ParseError("unexpected end of artifact");
  const auto v = try_parse_double(tok);
  if (!v) throw ParseError("not a number: '" + tok + "'");
  return *v;
}

long read_long(std::istream& in) {
  long v = 0;
  if (!(in >> v)) throw ParseError("expected an integer");
  return v;
}

Vec read_vec(std::istream& in, Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = read_double(in);
  return v;
}

void write_vec(std::ostream& out, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v(i));
}

void write_grid(std::ostream& out, const Grid& grid) {
  out << "grid_dim " << grid.dim() << '\n';
  out << "grid_lo";
  write_vec(out, grid.lo());
  out << "\ngrid_hi";
  write_vec(out, grid.hi());
  out << "\ngrid_step";
  write_vec(out, grid.step());
  out << '\n';
}

Grid read_grid(std::istream& in) {
  expect_token(in, "grid_dim");
  const long d = read_long(in);
  expect_token(in, "grid_lo");
  Vec lo = read_vec(in, d);
  expect_token(in, "grid_hi");
  Vec hi = read_vec(in, d);
  expect_token(in, "grid_step");
  Vec step = read_vec(in, d);
  return Grid(std::move(lo), std::move(hi), std::move(step));
}

void write_actions(std::ostream& out, const std::vector<Vec>& actions) {
  out << "actions " << actions.size() << ' ' << (actions.empty() ? 0 : actions.front().size()) << '\n';
  for (const Vec& a : actions) {
    out << 'a';
    write_vec(out, a);
    out << '\n';
  }
}

std::vector<Vec> read_actions(std::istream& in) {
  expect_token(in, "actions");
  const long k = read_long(in);
  const long m = read_long(in);
  std::vector<Vec> actions;
  actions.reserve(static_cast<std::size_t>(k));
  for (long i = 0; i < k; ++i) {
    expect_token(in, "a");
    actions.push_back(read_vec(in, m));
  }
  return actions;
}

constexpr const char* kPolicyMagic = "FDI-POLICY";
constexpr const char* kTransitionMagic = "FDI-TRANSITIONS";
constexpr int kFormatVersion = 1;

}  // namespace

Grid::Grid(Vec lo, Vec hi, Vec step) : lo_(std::move(lo)), hi_(std::move(hi)), step_(std::move(step)) {
  if (lo_.size() == 0 || lo_.size() != hi_.size() || lo_.size() != step_.size()) {
    throw std::invalid_argument("Grid: bounds and step must share a nonzero dimension");
  }
  size_ = 1;
  for (Eigen::Index d = 0; d < lo_.size(); ++d) {
    if (!(step_(d) > 0.0) || !std::isfinite(step_(d))) throw std::invalid_argument("Grid: step must be positive");
    if (!(lo_(d) <= hi_(d)) || !std::isfinite(lo_(d)) || !std::isfinite(hi_(d))) {
      throw std::invalid_argument("Grid: lower bound exceeds upper bound");
    }
    const long count = static_cast<long>(std::floor((hi_(d) - lo_(d)) / step_(d) + 1e-9)) + 1;
    counts_.push_back(count);
    size_ *= count;
  }
}

Vec Grid::point(long index) const {
  Vec p(dim());
  for (Eigen::Index d = dim() - 1; d >= 0; --d) {
    const long c = counts_[static_cast<std::size_t>(d)];
    p(d) = lo_(d) + static_cast<double>(index % c) * step_(d);
    index /= c;
  }
  return p;
}

long Grid::nearest(const Vec& e) const {
  long index = 0;
  for (Eigen::Index d = 0; d < dim(); ++d) {
    const long c = counts_[static_cast<std::size_t>(d)];
    double k = std::ceil((e(d) - lo_(d)) / step_(d) - 0.5);
    k = std::clamp(k, 0.0, static_cast<double>(c - 1));
    index = index * c + static_cast<long>(k);
  }
  return index;
}

Rect Grid::cell(long index) const {
  Rect r = bounded_cell(index);
  for (Eigen::Index d = dim() - 1; d >= 0; --d) {
    const long c = counts_[static_cast<std::size_t>(d)];
    const long k = index % c;
    index /= c;
    if (k == 0) r.lower(d) = -kInf;
    if (k == c - 1) r.upper(d) = kInf;
  }
  return r;
}

Rect Grid::bounded_cell(long index) const {
  const Vec p = point(index);
  return Rect{p - 0.5 * step_, p + 0.5 * step_};
}

bool Grid::operator==(const Grid& other) const {
  return lo_ == other.lo_ && hi_ == other.hi_ && step_ == other.step_;
}

Grid build_grid(const Vec& lo, const Vec& hi, const Vec& step) { return Grid(lo, hi, step); }

std::vector<Vec> build_action_grid(Eigen::Index m, double a_max, int points_per_dim) {
  if (m <= 0) throw std::invalid_argument("build_action_grid: dimension must be positive");
  if (!(a_max > 0.0)) throw std::invalid_argument("build_action_grid: a_max must be positive");
  if (points_per_dim < 1 || points_per_dim % 2 == 0) {
    throw std::invalid_argument("build_action_grid: point count must be odd");
  }
  std::vector<double> axis(static_cast<std::size_t>(points_per_dim));
  const int half = points_per_dim / 2;
  for (int k = 0; k < points_per_dim; ++k) {
    // Symmetric construction keeps +a and -a exact negatives of each other.
    axis[static_cast<std::size_t>(k)] = half == 0 ? 0.0 : a_max * static_cast<double>(k - half) / half;
  }
  std::vector<Vec> out;
  std::vector<int> idx(static_cast<std::size_t>(m), 0);
  while (true) {
    Vec a(m);
    for (Eigen::Index d = 0; d < m; ++d) a(d) = axis[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
    if (a.norm() <= a_max * (1.0 + 1e-12)) out.push_back(a);
    Eigen::Index d = m - 1;
    while (d >= 0 && ++idx[static_cast<std::size_t>(d)] == points_per_dim) {
      idx[static_cast<std::size_t>(d)] = 0;
      --d;
    }
    if (d < 0) break;
  }
  return out;
}

Vec assumed_delta(DeltaRule rule, const Vec& a) {
  return rule == DeltaRule::Perfect ? a : Vec::Zero(a.size());
}

Mat residual_error_covariance(const SystemModel& model, const SteadyState& ss) {
  const Mat& C = model.C();
  const Mat& Q = model.Q();
  const Mat& R = model.R();
  const Eigen::Index m = model.m();
  const Eigen::Index n = model.n();
  Mat cov(m + n, m + n);
  cov.topLeftCorner(m, m) = C * Q * C.transpose() + R;
  cov.topRightCorner(m, n) = C * Q * ss.W_K.transpose() - R * ss.K.transpose();
  cov.bottomLeftCorner(n, m) = cov.topRightCorner(m, n).transpose();
  cov.bottomRightCorner(n, n) = ss.W_K * Q * ss.W_K.transpose() + ss.K * R * ss.K.transpose();
  return 0.5 * (cov + cov.transpose());
}

ProbEstimate detection_prob(const AttackMdp& mdp, const Vec& e, const Vec& a, const SamplingOptions& opts) {
  const SystemModel& model = *mdp.model;
  if (e.size() != model.n() || a.size() != model.m()) throw std::invalid_argument("detection_prob: dimension mismatch");
  if (mdp.eta == kInf) return {0.0, 0.0};
  if (mdp.closed_form() && !opts.force_sampling) {
    const ScalarKernel kern(mdp);
    const auto [l, u] = kern.silent_interval(e(0), a(0));
    return {ScalarKernel::detect_prob(l, u), 0.0};
  }
  const Mat cov = model.C() * model.Q() * model.C().transpose() + model.R();
  const GaussianSpec residual_dist{model.C() * model.A() * e + a, 0.5 * (cov + cov.transpose())};
  RngStream stream(opts.seed, 1);
  return gchi2_tail_prob(residual_dist, mdp.ss->P_r_inv, mdp.eta, stream, opts.samples);
}

ProbEstimate cell_transition_prob(const AttackMdp& mdp, const Vec& e, const Vec& a, const Vec& delta,
                                  const Rect& cell, const SamplingOptions& opts) {
  const SystemModel& model = *mdp.model;
  const SteadyState& ss = *mdp.ss;
  if (e.size() != model.n() || a.size() != model.m() || delta.size() != model.m() || cell.dim() != model.n()) {
    throw std::invalid_argument("cell_transition_prob: dimension mismatch");
  }
  const Vec y1 = model.C() * model.A() * e + a;
  const Vec y2 = ss.A_K * e - ss.K * a;
  const Vec y2_detect = ss.A_K * e - ss.K * (a - delta);

  if (mdp.closed_form() && !opts.force_sampling) {
    const Mat cov = residual_error_covariance(model, ss);
    const GaussianSpec x{Vec::Zero(2), cov};
    const double h = std::sqrt(mdp.eta * ss.P_r(0, 0));
    const double lo1 = -h - y1(0);
    const double hi1 = h - y1(0);
    auto rect = [](double a0, double b0, double a1, double b1) {
      Vec lo(2);
      Vec hi(2);
      lo << a0, a1;
      hi << b0, b1;
      return Rect{lo, hi};
    };
    const double e_lo = cell.lower(0);
    const double e_hi = cell.upper(0);
    double p = 0.0;
    if (h != kInf) {
      p += mvn_rect_prob(x, rect(-kInf, lo1, e_lo - y2_detect(0), e_hi - y2_detect(0))).value;
      p += mvn_rect_prob(x, rect(hi1, kInf, e_lo - y2_detect(0), e_hi - y2_detect(0))).value;
      p += mvn_rect_prob(x, rect(lo1, hi1, e_lo - y2(0), e_hi - y2(0))).value;
    } else {
      p += mvn_rect_prob(x, rect(-kInf, kInf, e_lo - y2(0), e_hi - y2(0))).value;
    }
    return {std::clamp(p, 0.0, 1.0), 0.0};
  }

  RngStream stream(opts.seed, 2);
  long hits = 0;
  for (long s = 0; s < opts.samples; ++s) {
    const Vec w = model.process_noise().sample(stream);
    const Vec v = model.measurement_noise().sample(stream);
    const Vec r = y1 + model.C() * w + v;
    const bool alarm = r.dot(ss.P_r_inv * r) > mdp.eta;
    const Vec next = (alarm ? y2_detect : y2) + ss.W_K * w - ss.K * v;
    if ((next.array() >= cell.lower.array()).all() && (next.array() <= cell.upper.array()).all()) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(opts.samples);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(opts.samples))};
}

TransitionRow transition_row(const AttackMdp& mdp, const Grid& grid, const Vec& e, const Vec& a,
                             const SamplingOptions& opts, std::uint64_t stream_tag) {
  if (e.size() != grid.dim() || e.size() != mdp.model->n() || a.size() != mdp.model->m()) {
    throw std::invalid_argument("transition_row: dimension mismatch");
  }
  if (mdp.closed_form() && !opts.force_sampling) {
    const ScalarKernel kern(mdp);
    return scalar_row(mdp, kern, grid, e(0), a(0));
  }
  return sampled_row(mdp, grid, e, a, opts, stream_tag);
}

TransitionModel::TransitionModel(long states, std::vector<Vec> actions)
    : states_(states),
      actions_(std::move(actions)),
      probs_(static_cast<std::size_t>(states) * actions_.size() * static_cast<std::size_t>(states), 0.0),
      detection_(static_cast<std::size_t>(states) * actions_.size(), 0.0),
      in_bounds_(static_cast<std::size_t>(states) * actions_.size(), 1.0) {}

std::span<const double> TransitionModel::row(long state, long action) const {
  return {probs_.data() + flat(state, action) * static_cast<std::size_t>(states_), static_cast<std::size_t>(states_)};
}

std::span<double> TransitionModel::row(long state, long action) {
  return {probs_.data() + flat(state, action) * static_cast<std::size_t>(states_), static_cast<std::size_t>(states_)};
}

TransitionModel build_transition_model(const AttackMdp& mdp, const Grid& grid, const std::vector<Vec>& actions,
                                       const TransitionOptions& opts) {
  if (grid.size() == 0 || actions.empty()) throw std::invalid_argument("build_transition_model: empty grid or actions");
  TransitionModel tm(grid.size(), actions);
  const long n_actions = static_cast<long>(actions.size());
  parallel_for(grid.size(), opts.workers, [&](long i) {
    const Vec e = grid.point(i);
    for (long k = 0; k < n_actions; ++k) {
      const auto tag = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n_actions) + static_cast<std::uint64_t>(k);
      TransitionRow row = transition_row(mdp, grid, e, actions[static_cast<std::size_t>(k)], opts.sampling, tag);
      auto dest = tm.row(i, k);
      std::copy(row.probs.begin(), row.probs.end(), dest.begin());
      normalize(dest);
      tm.detection(i, k) = row.detection;
      tm.in_bounds_mass(i, k) = row.in_bounds;
    }
  });
  for (long i = 0; i < grid.size(); ++i) {
    for (long k = 0; k < n_actions; ++k) {
      if (tm.in_bounds_mass(i, k) < opts.truncation_warning_mass) ++tm.truncation_warnings;
    }
  }
  return tm;
}

double expected_reward(std::span<const double> row, const Grid& grid) {
  double total = 0.0;
  for (long j = 0; j < grid.size(); ++j) {
    const double p = row[static_cast<std::size_t>(j)];
    if (p != 0.0) total += p * grid.point(j).squaredNorm();
  }
  return total;
}

double expected_reward(const TransitionModel& tm, const Grid& grid, long state, long action) {
  return expected_reward(tm.row(state, action), grid);
}

void TransitionModel::save(std::ostream& out, const std::string& digest) const {
  out << kTransitionMagic << ' ' << kFormatVersion << '\n';
  out << "digest " << digest << '\n';
  out << "states " << states_ << '\n';
  write_actions(out, actions_);
  out << "warnings " << truncation_warnings << '\n';
  for (long i = 0; i < states_; ++i) {
    for (long k = 0; k < action_count(); ++k) {
      out << "row " << i << ' ' << k << ' ' << format_double(detection(i, k)) << ' '
          << format_double(in_bounds_mass(i, k));
      const auto r = row(i, k);
      long nnz = 0;
      for (double p : r) nnz += p != 0.0;
      out << ' ' << nnz;
      for (long j = 0; j < states_; ++j) {
        if (r[static_cast<std::size_t>(j)] != 0.0) out << ' ' << j << ' ' << format_double(r[static_cast<std::size_t>(j)]);
      }
      out << '\n';
    }
  }
}

TransitionModel TransitionModel::load(std::istream& in, std::string* digest) {
  expect_token(in, kTransitionMagic);
  if (read_long(in) != kFormatVersion) throw ParseError("unsupported transition artifact version");
  expect_token(in, "digest");
  std::string dig;
  in >> dig;
  if (digest) *digest = dig;
  expect_token(in, "states");
  const long states = read_long(in);
  TransitionModel tm(states, read_actions(in));
  expect_token(in, "warnings");
  tm.truncation_warnings = read_long(in);
  for (long i = 0; i < states; ++i) {
    for (long k = 0; k < tm.action_count(); ++k) {
      expect_token(in, "row");
      if (read_long(in) != i || read_long(in) != k) throw ParseError("transition rows out of order");
      tm.detection(i, k) = read_double(in);
      tm.in_bounds_mass(i, k) = read_double(in);
      const long nnz = read_long(in);
      auto r = tm.row(i, k);
      for (long q = 0; q < nnz; ++q) {
        const long j = read_long(in);
        if (j < 0 || j >= states) throw ParseError("transition column out of range");
        r[static_cast<std::size_t>(j)] = read_double(in);
      }
    }
  }
  return tm;
}

Policy::Policy(Grid grid, std::vector<Vec> actions, int horizon, double gamma, double a_max)
    : grid_(std::move(grid)),
      actions_(std::move(actions)),
      horizon_(horizon),
      gamma_(gamma),
      a_max_(a_max),
      stage_actions_(static_cast<std::size_t>(horizon) * static_cast<std::size_t>(grid_.size())),
      values_(static_cast<std::size_t>(horizon + 1) * static_cast<std::size_t>(grid_.size()), 0.0) {
  if (horizon < 1) throw std::invalid_argument("Policy: horizon must be >= 1");
}

std::size_t Policy::flat(int stage, long state) const {
  return static_cast<std::size_t>(stage) * static_cast<std::size_t>(grid_.size()) + static_cast<std::size_t>(state);
}

const Vec& Policy::action(int stage, long state) const {
  if (stage < 1 || stage > horizon_) throw std::out_of_range("Policy: stage out of range");
  return stage_actions_[flat(stage - 1, state)];
}

double Policy::value(int stage, long state) const {
  if (stage < 0 || stage > horizon_) throw std::out_of_range("Policy: stage out of range");
  return values_[flat(stage, state)];
}

void Policy::set(int stage, long state, Vec action, double value) {
  if (stage < 1 || stage > horizon_) throw std::out_of_range("Policy: stage out of range");
  stage_actions_[flat(stage - 1, state)] = std::move(action);
  values_[flat(stage, state)] = value;
}

void Policy::save(std::ostream& out, const std::string& digest) const {
  out << kPolicyMagic << ' ' << kFormatVersion << '\n';
  out << "digest " << digest << '\n';
  write_grid(out, grid_);
  write_actions(out, actions_);
  out << "horizon " << horizon_ << '\n';
  out << "gamma " << format_double(gamma_) << '\n';
  out << "a_max " << format_double(a_max_) << '\n';
  for (int s = 1; s <= horizon_; ++s) {
    out << "stage " << s << '\n';
    for (long i = 0; i < grid_.size(); ++i) {
      out << format_double(value(s, i));
      write_vec(out, action(s, i));
      out << '\n';
    }
  }
}

Policy Policy::load(std::istream& in, std::string* digest) {
  expect_token(in, kPolicyMagic);
  if (read_long(in) != kFormatVersion) throw ParseError("unsupported policy artifact version");
  expect_token(in, "digest");
  std::string dig;
  in >> dig;
  if (digest) *digest = dig;
  Grid grid = read_grid(in);
  std::vector<Vec> actions = read_actions(in);
  expect_token(in, "horizon");
  const long horizon = read_long(in);
  expect_token(in, "gamma");
  const double gamma = read_double(in);
  expect_token(in, "a_max");
  const double a_max = read_double(in);
  const Eigen::Index m = actions.empty() ? 0 : actions.front().size();
  Policy policy(std::move(grid), std::move(actions), static_cast<int>(horizon), gamma, a_max);
  for (int s = 1; s <= policy.horizon(); ++s) {
    expect_token(in, "stage");
    if (read_long(in) != s) throw ParseError("policy stages out of order");
    for (long i = 0; i < policy.grid().size(); ++i) {
      const double v = read_double(in);
      policy.set(s, i, read_vec(in, m), v);
    }
  }
  return policy;
}

Policy value_iteration(const TransitionModel& tm, const Grid& grid, int horizon, double gamma, double a_max,
                       const Refinement* refine, SolveStats* stats) {
  if (horizon < 1) throw std::invalid_argument("value_iteration: horizon must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("value_iteration: gamma must lie in (0, 1]");
  if (tm.states() != grid.size()) throw std::invalid_argument("value_iteration: grid does not match transitions");
  if (refine && !refine->mdp.closed_form()) {
    throw std::invalid_argument("value_iteration: action refinement needs the closed-form scalar model");
  }

  const long n = grid.size();
  const long k_actions = tm.action_count();
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (long j = 0; j < n; ++j) norms[static_cast<std::size_t>(j)] = grid.point(j).squaredNorm();

  std::vector<double> reward(static_cast<std::size_t>(n * k_actions));
  for (long i = 0; i < n; ++i) {
    for (long k = 0; k < k_actions; ++k) reward[static_cast<std::size_t>(i * k_actions + k)] = expected_reward(tm, grid, i, k);
  }

  auto backup = [&](std::span<const double> row, const std::vector<double>& prev) {
    double acc = 0.0;
    for (long j = 0; j < n; ++j) {
      const double p = row[static_cast<std::size_t>(j)];
      if (p != 0.0) acc += p * (norms[static_cast<std::size_t>(j)] + gamma * prev[static_cast<std::size_t>(j)]);
    }
    return acc;
  };

  Policy policy(grid, tm.actions(), horizon, gamma, a_max);
  std::vector<double> prev(static_cast<std::size_t>(n), 0.0);
  std::vector<double> cur(static_cast<std::size_t>(n), 0.0);
  for (int s = 1; s <= horizon; ++s) {
    for (long i = 0; i < n; ++i) {
      long best = 0;
      double best_value = -kInf;
      for (long k = 0; k < k_actions; ++k) {
        double q = reward[static_cast<std::size_t>(i * k_actions + k)];
        double future = 0.0;
        const auto row = tm.row(i, k);
        for (long j = 0; j < n; ++j) {
          const double p = row[static_cast<std::size_t>(j)];
          if (p != 0.0) future += p * prev[static_cast<std::size_t>(j)];
        }
        q += gamma * future;
        if (q > best_value) {
          best_value = q;
          best = k;
        }
      }
      Vec best_action = tm.actions()[static_cast<std::size_t>(best)];
      if (refine) {
        const Vec e = grid.point(i);
        double width = refine->initial_width;
        for (int round = 0; round < refine->rounds; ++round) {
          width *= 0.5;
          const Vec incumbent = best_action;
          for (double dir : {-1.0, 1.0}) {
            Vec cand = incumbent;
            cand(0) = std::clamp(incumbent(0) + dir * width, -a_max, a_max);
            const TransitionRow row = transition_row(refine->mdp, grid, e, cand, refine->sampling);
            std::vector<double> probs = row.probs;
            normalize(probs);
            const double q = backup(probs, prev);
            if (q > best_value) {
              best_value = q;
              best_action = cand;
            }
          }
        }
      }
      cur[static_cast<std::size_t>(i)] = best_value;
      policy.set(s, i, std::move(best_action), best_value);
    }
    std::swap(prev, cur);
  }
  if (stats) {
    stats->states = n;
    stats->actions = k_actions;
    stats->sweeps = horizon;
  }
  return policy;
}

Vec policy_lookup(const Policy& policy, int stage_remaining, const Vec& e) {
  if (e.size() != policy.grid().dim()) throw std::invalid_argument("policy_lookup: dimension mismatch");
  return policy.action(stage_remaining, policy.grid().nearest(e));
}

}  // namespace fdi
