#include "flowkl/gaussian_paths.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "flowkl/quadrature.hpp"
#include "flowkl/rng.hpp"

namespace flowkl {

double schedule_eval(const Schedule& s, double t) { return s.rate(t); }

double sigma_p(const Schedule& s, double t) { return s.sigma(t); }

double gaussian_kl(double sp, double sq, std::size_t dim) {
  if (!(sp > 0.0) || !(sq > 0.0)) throw std::domain_error("gaussian_kl: scales must be positive");
  const double ratio = sp / sq;
  return static_cast<double>(dim) * (std::log(sq / sp) + 0.5 * ratio * ratio - 0.5);
}

double gaussian_log_density(std::span<const double> x, double sigma) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double d = static_cast<double>(x.size());
  return -0.5 * sq / (sigma * sigma) - d * std::log(sigma) -
         0.5 * d * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd analytic_score(const GaussianPathState& state, std::span<const double> x) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(x.size()));
  const double inv = 1.0 / (state.sigma * state.sigma);
  for (std::size_t i = 0; i < x.size(); ++i) s(static_cast<Eigen::Index>(i)) = -x[i] * inv;
  return s;
}

Eigen::MatrixXd sample_pt(const Schedule& s, double t, std::size_t n, std::uint64_t seed,
                          std::size_t dim) {
  if (n == 0) throw std::invalid_argument("sample_pt: n must be >= 1");
  const double sigma = s.sigma(t);
  const RandomStream stream = RandomStream(seed).split("sample_pt");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<double> z(dim);
  for (std::size_t i = 0; i < n; ++i) {
    stream.normals(i, z);
    for (std::size_t j = 0; j < dim; ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma * z[j];
    }
  }
  return out;
}

LinearField perturbed_field(const Schedule& s, double beta, std::size_t dim) {
  return LinearField(beta == 0.0 ? s : s.shifted(beta), dim);
}

IdentityCurves closed_form_identity_curves(const Schedule& sp, const Schedule& sq,
                                           const TimeGrid& grid, std::size_t dim) {
  IdentityCurves curves;
  const double d = static_cast<double>(dim);
  for (double t : grid.points()) {
    const double sig_p = sp.sigma(t);
    const double sig_q = sq.sigma(t);
    curves.t.push_back(t);
    curves.kl.push_back(gaussian_kl(sig_p, sig_q, dim));
    // E_p[(a_p - a_q) x^T (1/sq^2 - 1/sp^2) x] with E|x|^2 = d sp^2.
    const double g = (sp.rate(t) - sq.rate(t)) *
                     (1.0 / (sig_q * sig_q) - 1.0 / (sig_p * sig_p)) * d * sig_p * sig_p;
    curves.integrand.push_back(g);
  }
  curves.cum_integral = cumulative_trapezoid(curves.integrand, grid);
  return curves;
}

double perturbed_flow_error_sq(const Schedule& s, double beta, double t, std::size_t dim) {
  const double sig = s.sigma(t);
  return beta * beta * static_cast<double>(dim) * sig * sig;
}

double perturbed_score_gap(const Schedule& s, double beta, double t, std::size_t dim) {
  // sigma_q = sigma_p e^(beta t), so 1/sp^2 - 1/sq^2 = (1 - e^(-2 beta t)) / sp^2.
  const double sig = s.sigma(t);
  const double shrink = -std::expm1(-2.0 * beta * t);
  return static_cast<double>(dim) * shrink * shrink / (sig * sig);
}

namespace {

PerturbedBound finish_bound(const Schedule& s, double beta, std::size_t dim, double eps_sq,
                            double gap) {
  PerturbedBound out;
  out.eps_total = std::sqrt(eps_sq);
  out.score_gap_total = gap;
  out.bound_rhs = out.eps_total * std::sqrt(gap);
  out.kl_terminal = gaussian_kl(s.sigma(1.0), s.sigma(1.0) * std::exp(beta), dim);
  return out;
}

}  // namespace

PerturbedBound closed_form_perturbed_bound(const Schedule& s, double beta, std::size_t dim) {
  const double eps_sq = adaptive_simpson(
      [&](double t) { return perturbed_flow_error_sq(s, beta, t, dim); }, 0.0, 1.0, 1e-13);
  const double gap = adaptive_simpson(
      [&](double t) { return perturbed_score_gap(s, beta, t, dim); }, 0.0, 1.0, 1e-13);
  return finish_bound(s, beta, dim, eps_sq, gap);
}

PerturbedBound grid_perturbed_bound(const Schedule& s, double beta, const TimeGrid& grid,
                                    std::size_t dim) {
  std::vector<double> eps_sq, gap;
  for (double t : grid.points()) {
    eps_sq.push_back(perturbed_flow_error_sq(s, beta, t, dim));
    gap.push_back(perturbed_score_gap(s, beta, t, dim));
  }
  return finish_bound(s, beta, dim, trapezoid(eps_sq, grid), trapezoid(gap, grid));
}

}  // namespace flowkl
