#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flowkl/schedule.hpp"
#include "flowkl/time_grid.hpp"
#include "flowkl/velocity_field.hpp"

namespace flowkl {

inline constexpr std::size_t kDefaultDim = 2;

/// p_t = N(0, sigma^2 I_d) at time t.
struct GaussianPathState {
  double t = 0.0;
  double sigma = 1.0;
  std::size_t dim = kDefaultDim;

  static GaussianPathState at(const Schedule& s, double t, std::size_t dim = kDefaultDim) {
    return {t, s.sigma(t), dim};
  }
};

/// a(t) for the schedule.
double schedule_eval(const Schedule& s, double t);

/// exp(integral of a over [0, t]).
double sigma_p(const Schedule& s, double t);

/// KL(N(0, sp^2 I_d) || N(0, sq^2 I_d)).
double gaussian_kl(double sigma_p, double sigma_q, std::size_t dim);

/// log N(x; 0, sigma^2 I).
double gaussian_log_density(std::span<const double> x, double sigma);

/// -x / sigma^2.
Eigen::VectorXd analytic_score(const GaussianPathState& state, std::span<const double> x);

/// n x d matrix of i.i.d. draws x = sigma_p(t) z; row i depends only on (seed, i).
Eigen::MatrixXd sample_pt(const Schedule& s, double t, std::size_t n, std::uint64_t seed,
                          std::size_t dim = kDefaultDim);

/// The linear field (a(t) + beta) x; its path has scale sigma_p(t) e^(beta t).
LinearField perturbed_field(const Schedule& s, double beta, std::size_t dim = kDefaultDim);

struct IdentityCurves {
  std::vector<double> t;
  std::vector<double> kl;         ///< KL(p_t || q_t) in closed form
  std::vector<double> integrand;  ///< E_p[(u - v)^T (s_p - s_q)] in closed form
  std::vector<double> cum_integral;  ///< trapezoid of the integrand up to t_k
};

/// Both sides of the KL evolution identity for two linear fields, in closed form.
IdentityCurves closed_form_identity_curves(const Schedule& sp, const Schedule& sq,
                                           const TimeGrid& grid, std::size_t dim = kDefaultDim);

/// Bound quantities for q driven by (a(t) + beta) x against p driven by a(t) x.
struct PerturbedBound {
  double eps_total = 0.0;        ///< sqrt(int beta^2 d sigma_p^2)
  double score_gap_total = 0.0;  ///< int d sigma_p^2 (1/sigma_p^2 - 1/sigma_q^2)^2
  double bound_rhs = 0.0;        ///< eps_total sqrt(score_gap_total)
  double kl_terminal = 0.0;      ///< KL(p_1 || q_1)
};

/// E_p |u - v|^2 at t.
double perturbed_flow_error_sq(const Schedule& s, double beta, double t,
                               std::size_t dim = kDefaultDim);
/// E_p |s_p - s_q|^2 at t.
double perturbed_score_gap(const Schedule& s, double beta, double t,
                           std::size_t dim = kDefaultDim);

/// Time integrals by adaptive Simpson quadrature.
PerturbedBound closed_form_perturbed_bound(const Schedule& s, double beta,
                                           std::size_t dim = kDefaultDim);
/// Same quantities with the time integrals taken by trapezoid on `grid`.
PerturbedBound grid_perturbed_bound(const Schedule& s, double beta, const TimeGrid& grid,
                                    std::size_t dim = kDefaultDim);

}  // namespace flowkl
