#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flowkl/ode.hpp"
#include "flowkl/schedule.hpp"
#include "flowkl/time_grid.hpp"
#include "flowkl/velocity_field.hpp"

namespace flowkl {

/// Absolute allowance for deterministic ODE discretization error when a
/// Monte-Carlo estimate is compared against a closed form or a bound.
inline constexpr double kSolverAllowance = 1e-6;

/// Relative floor of the identity tracking criterion.
inline constexpr double kTrackingRelTol = 0.02;

struct McConfig {
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  TimeGrid grid{21};
  IvpConfig ode{200, Direction::Backward};
  bool common_random_numbers = true;
  std::size_t dim = 2;

  void validate() const;
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Sample mean and its standard error.
Estimate mean_and_stderr(std::span<const double> samples);

/// Per grid point t_k plus whole-path summaries.
struct EstimatorReport {
  std::vector<double> t;
  std::vector<double> kl_hat, kl_se;
  std::vector<double> g_hat, g_se;
  std::vector<double> cum_integral, cum_se;
  std::vector<bool> tracking;
  std::vector<double> eps_t, eps_se;
  std::vector<double> gap_t, gap_se;

  double eps_total = 0.0, eps_total_se = 0.0;
  double score_gap_total = 0.0, score_gap_se = 0.0;
  double kl_terminal = 0.0, kl_terminal_se = 0.0;
  double bound_rhs = 0.0, bound_rhs_se = 0.0;
  double propagated_se = 0.0;
  bool satisfied = false;

  bool all_tracking() const;
};

/// KL(p_t || q_t) with p_t the Gaussian path of `sp` and q_t the law
/// transported by `q` from `base`. The t = base time case is exactly 0.
Estimate kl_mc(const Schedule& sp, const VelocityField& q, double t, const McConfig& cfg,
               const BaseDensity& base = BaseDensity::standard_normal());

/// E_p[(u - v)^T (s_p - s_q)] with u = a(t) x and s_q from backward_score.
Estimate identity_integrand(const Schedule& sp, const VelocityField& q, double t,
                            const McConfig& cfg);

/// kl_hat and the trapezoid of g_hat over the grid, with the tracking flags
/// |kl_hat - cum| <= max(3 combined se, 0.02 max kl_hat).
EstimatorReport identity_curves(const Schedule& sp, const VelocityField& q, const McConfig& cfg);

struct PathEstimate {
  double total = 0.0;
  double total_se = 0.0;
  std::vector<double> per_point;
  std::vector<double> per_point_se;
};

/// eps_t = sqrt(E|u - v|^2) on fresh samples; total = sqrt(trapezoid of eps_t^2).
PathEstimate flow_error(const Schedule& s, const VelocityField& q, const McConfig& cfg);

/// gap_t = E|s_p - s_q|^2 on common random numbers; total = trapezoid.
PathEstimate score_gap(const Schedule& s, const VelocityField& q, const McConfig& cfg);

/// KL(p_1 || q_1) against eps_total sqrt(score_gap_total).
EstimatorReport bound_check(const Schedule& s, const VelocityField& q, const McConfig& cfg);

/// Regularity rates L, K, B_p, M, H, U_p as functions of time.
struct RegularityProfile {
  std::function<double(double)> L, K, B_p, M, H, U_p;

  static RegularityProfile constant(double value);
};

struct BoundConstants {
  double A1 = 0.0;
  double A2 = 0.0;
};

/// A1 = exp(int L + K + B_p M) int (2 L B_p + 2 H),
/// A2 = exp(int L + K + B_p M) sqrt(int U_p^2), by trapezoid on the grid.
BoundConstants bound_constants(const RegularityProfile& r, const TimeGrid& grid);

/// Pinsker: TV <= sqrt(KL / 2).
double tv_from_kl(double kl);

}  // namespace flowkl
