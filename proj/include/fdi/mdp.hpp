#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdi/lti.hpp"

namespace fdi {

/// Regular lattice over [lo, hi] per dimension. Flat indices are row-major with
/// the first dimension varying slowest. Each point owns the half-step box around
/// it; boxes of outermost points extend to +/- infinity.
class Grid {
 public:
  Grid() = default;
  Grid(Vec lo, Vec hi, Vec step);

  Eigen::Index dim() const { return lo_.size(); }
  long size() const { return size_; }
  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }
  const Vec& step() const { return step_; }
  long count(Eigen::Index d) const { return counts_[static_cast<std::size_t>(d)]; }

  Vec point(long index) const;
  /// Nearest lattice point; exact midpoints go to the lower index; points
  /// outside the bounds saturate at the boundary.
  long nearest(const Vec& e) const;
  /// Voronoi cell of a point, with outer cells extended to infinity.
  Rect cell(long index) const;
  /// Same cell clipped to the half-step margin around the bounds.
  Rect bounded_cell(long index) const;
  bool operator==(const Grid& other) const;

 private:
  Vec lo_, hi_, step_;
  std::vector<long> counts_;
  long size_ = 0;
};

Grid build_grid(const Vec& lo, const Vec& hi, const Vec& step);

/// Odd-cardinality uniform action grid over [-a_max, a_max] per measurement
/// dimension, restricted to the ball ||a|| <= a_max.
std::vector<Vec> build_action_grid(Eigen::Index m, double a_max, int points_per_dim);

/// Mitigation signal the attacker assumes when planning.
enum class DeltaRule { Perfect, Off };

Vec assumed_delta(DeltaRule rule, const Vec& a);

/// Everything the attacker's MDP needs to know about the defended loop.
struct AttackMdp {
  const SystemModel* model = nullptr;
  const SteadyState* ss = nullptr;
  double eta = 0.0;
  DeltaRule delta_rule = DeltaRule::Perfect;

  /// The closed-form bivariate path applies when n = m = 1.
  bool closed_form() const { return model->is_scalar(); }
};

struct SamplingOptions {
  long samples = 100'000;
  std::uint64_t seed = 0x7a11;
  /// Use joint sampling even when the closed form applies (cross-checks).
  bool force_sampling = false;
};

/// Probability that the chi-square detector fires at the next step given the
/// current error e and injection a.
ProbEstimate detection_prob(const AttackMdp& mdp, const Vec& e, const Vec& a, const SamplingOptions& opts = {});

/// P(e' in cell | e, a), summed over the no-detect and detect branches.
ProbEstimate cell_transition_prob(const AttackMdp& mdp, const Vec& e, const Vec& a, const Vec& delta,
                                  const Rect& cell, const SamplingOptions& opts = {});

/// Joint covariance of (C w + v, W_K w - K v) for the conditional residual and
/// the error innovation.
Mat residual_error_covariance(const SystemModel& model, const SteadyState& ss);

struct TransitionOptions {
  SamplingOptions sampling;
  int workers = 1;
  double truncation_warning_mass = 0.99;
};

/// Per-(state, action) transition rows and detection probabilities. Rows are
/// stored densely, state-major then action-major.
class TransitionModel {
 public:
  TransitionModel() = default;
  TransitionModel(long states, std::vector<Vec> actions);

  long states() const { return states_; }
  long action_count() const { return static_cast<long>(actions_.size()); }
  const std::vector<Vec>& actions() const { return actions_; }

  std::span<const double> row(long state, long action) const;
  std::span<double> row(long state, long action);
  double detection(long state, long action) const { return detection_[flat(state, action)]; }
  double& detection(long state, long action) { return detection_[flat(state, action)]; }
  /// Probability mass that fell inside the grid bounds before boundary folding.
  double in_bounds_mass(long state, long action) const { return in_bounds_[flat(state, action)]; }
  double& in_bounds_mass(long state, long action) { return in_bounds_[flat(state, action)]; }

  /// Rows whose in-bounds mass fell below the warning threshold.
  long truncation_warnings = 0;

  void save(std::ostream& out, const std::string& digest) const;
  static TransitionModel load(std::istream& in, std::string* digest = nullptr);

 private:
  std::size_t flat(long state, long action) const {
    return static_cast<std::size_t>(state) * actions_.size() + static_cast<std::size_t>(action);
  }

  long states_ = 0;
  std::vector<Vec> actions_;
  std::vector<double> probs_;
  std::vector<double> detection_;
  std::vector<double> in_bounds_;
};

/// One transition row for an arbitrary (e, a): probability per grid cell,
/// detection probability, and in-bounds mass.
struct TransitionRow {
  std::vector<double> probs;
  std::vector<double> detected;  // detect-branch share of each cell

  double detection = 0.0;
  double in_bounds = 1.0;
};

TransitionRow transition_row(const AttackMdp& mdp, const Grid& grid, const Vec& e, const Vec& a,
                             const SamplingOptions& opts = {}, std::uint64_t stream_tag = 0);

TransitionModel build_transition_model(const AttackMdp& mdp, const Grid& grid, const std::vector<Vec>& actions,
                                       const TransitionOptions& opts = {});

/// sum_j T(i, a, j) ||xi_j||^2.
double expected_reward(const TransitionModel& tm, const Grid& grid, long state, long action);
double expected_reward(std::span<const double> row, const Grid& grid);

/// Stage-indexed optimal actions and values. Stage s holds the decision with
/// s steps to go; value(0, .) is identically zero.
class Policy {
 public:
  Policy() = default;
  Policy(Grid grid, std::vector<Vec> actions, int horizon, double gamma, double a_max);

  const Grid& grid() const { return grid_; }
  const std::vector<Vec>& actions() const { return actions_; }
  int horizon() const { return horizon_; }
  double gamma() const { return gamma_; }
  double a_max() const { return a_max_; }
  Eigen::Index action_dim() const { return actions_.empty() ? 0 : actions_.front().size(); }

  const Vec& action(int stage, long state) const;
  double value(int stage, long state) const;
  void set(int stage, long state, Vec action, double value);

  void save(std::ostream& out, const std::string& digest) const;
  static Policy load(std::istream& in, std::string* digest = nullptr);

 private:
  std::size_t flat(int stage, long state) const;

  Grid grid_;
  std::vector<Vec> actions_;
  int horizon_ = 0;
  double gamma_ = 1.0;
  double a_max_ = 0.0;
  std::vector<Vec> stage_actions_;  // stages 1..T
  std::vector<double> values_;      // stages 0..T
};

/// Local refinement of the argmax action around the best grid action.
struct Refinement {
  AttackMdp mdp;
  double a_max = 0.0;
  double initial_width = 0.0;
  int rounds = 4;
  SamplingOptions sampling;
};

struct SolveStats {
  long states = 0;
  long actions = 0;
  int sweeps = 0;
};

/// Finite-horizon backward induction from V_0 = 0. Ties go to the smallest
/// action index.
Policy value_iteration(const TransitionModel& tm, const Grid& grid, int horizon, double gamma, double a_max,
                       const Refinement* refine = nullptr, SolveStats* stats = nullptr);

/// Nearest-neighbor action at the given number of stages to go.
Vec policy_lookup(const Policy& policy, int stage_remaining, const Vec& e);

}  // namespace fdi
