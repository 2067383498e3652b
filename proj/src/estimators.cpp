#include "flowkl/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "flowkl/errors.hpp"
#include "flowkl/gaussian_paths.hpp"
#include "flowkl/parallel.hpp"
#include "flowkl/quadrature.hpp"
#include "flowkl/rng.hpp"

namespace flowkl {

void McConfig::validate() const {
  if (n < 2) throw std::invalid_argument("McConfig: n must be >= 2 for standard errors");
  if (dim == 0) throw std::invalid_argument("McConfig: dim must be positive");
}

Estimate mean_and_stderr(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("mean_and_stderr: need at least 2 samples");
  CompensatedSum sum;
  for (double v : samples) sum.add(v);
  const double mean = sum.value() / static_cast<double>(n);
  CompensatedSum sq;
  for (double v : samples) sq.add((v - mean) * (v - mean));
  const double var = sq.value() / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

bool EstimatorReport::all_tracking() const {
  return std::all_of(tracking.begin(), tracking.end(), [](bool b) { return b; });
}

namespace {

// Per-sample quantities at one time from one backward solve each.
struct TimeSamples {
  std::vector<double> log_ratio;  // log p_t - log q_t
  std::vector<double> integrand;  // (u - v)^T (s_p - s_q)
  std::vector<double> gap;        // |s_p - s_q|^2
};

RandomStream draw_stream(const McConfig& cfg, std::uint64_t purpose, std::uint64_t slot) {
  const RandomStream root(cfg.seed);
  if (cfg.common_random_numbers) return root.split("common");
  return root.split(purpose).split(slot);
}

// Samples are processed in fixed-width chunks so results do not depend on
// the number of workers.
constexpr std::size_t kChunk = 64;

template <class Body>
void for_each_chunk(std::size_t n, Body&& body) {
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  for_each_index(chunks, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    body(lo, std::min(kChunk, n - lo));
  });
}

// Column i is sample lo + i of `stream`, scaled to N(0, sigma^2 I).
Eigen::MatrixXd draw_chunk(const RandomStream& stream, std::size_t lo, std::size_t m,
                           std::size_t d, double sigma) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
  std::vector<double> z(d);
  for (std::size_t i = 0; i < m; ++i) {
    stream.normals(lo + i, z);
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = z[j] * sigma;
    }
  }
  return x;
}

TimeSamples sample_time(const Schedule& sp, const VelocityField& q, double t,
                        const RandomStream& stream, const McConfig& cfg, bool with_score,
                        const BaseDensity& base) {
  const std::size_t n = cfg.n;
  const std::size_t d = cfg.dim;
  if (q.dim() != d) throw std::invalid_argument("estimator: field dimension mismatch");
  const double sigma = sp.sigma(t);
  const double a = sp.rate(t);
  const double inv_var = 1.0 / (sigma * sigma);
  TimeSamples out;
  out.log_ratio.resize(n);
  if (with_score) {
    out.integrand.resize(n);
    out.gap.resize(n);
  }
  for_each_chunk(n, [&](std::size_t lo, std::size_t m) {
    const Eigen::MatrixXd x = draw_chunk(stream, lo, m, d, sigma);
    BatchResult r;
    try {
      r = backward_batch(q, x, t, cfg.ode, with_score, base);
    } catch (const NumericError& e) {
      throw NumericError("samples " + std::to_string(lo) + ".." + std::to_string(lo + m - 1) +
                         " at t = " + std::to_string(t) + ": " + e.what());
    }
    Eigen::MatrixXd v;
    if (with_score) q.evaluate_batch(x, t, v);
    for (std::size_t i = 0; i < m; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      const double log_p =
          gaussian_log_density(std::span<const double>(x.col(c).data(), d), sigma);
      out.log_ratio[lo + i] = log_p - r.log_q(c);
      if (!with_score) continue;
      double inner = 0.0, gap = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double ds = -x(jj, c) * inv_var - r.score(jj, c);
        inner += (a * x(jj, c) - v(jj, c)) * ds;
        gap += ds * ds;
      }
      out.integrand[lo + i] = inner;
      out.gap[lo + i] = gap;
    }
  });
  return out;
}

std::uint64_t time_slot(double t) { return std::bit_cast<std::uint64_t>(t); }

// Conservative standard error of sum_k w_k X_k for correlated X_k.
double linear_se(std::span<const double> weights, std::span<const double> se) {
  double s = 0.0;
  for (std::size_t k = 0; k < se.size(); ++k) s += std::abs(weights[k]) * se[k];
  return s;
}

// Fills the score-based columns of `report` over the grid.
void fill_path_columns(const Schedule& sp, const VelocityField& q, const McConfig& cfg,
                       EstimatorReport& report) {
  const TimeGrid& grid = cfg.grid;
  const std::size_t g = grid.count();
  report.t.assign(grid.points().begin(), grid.points().end());
  report.kl_hat.assign(g, 0.0);
  report.kl_se.assign(g, 0.0);
  report.g_hat.assign(g, 0.0);
  report.g_se.assign(g, 0.0);
  report.gap_t.assign(g, 0.0);
  report.gap_se.assign(g, 0.0);
  const BaseDensity base = BaseDensity::standard_normal();
  for (std::size_t k = 0; k < g; ++k) {
    if (grid[k] == 0.0) continue;  // p_0 = q_0
    const RandomStream stream = draw_stream(cfg, stream_tag("path"), k);
    const TimeSamples s = sample_time(sp, q, grid[k], stream, cfg, true, base);
    const Estimate kl = mean_and_stderr(s.log_ratio);
    const Estimate gi = mean_and_stderr(s.integrand);
    const Estimate gap = mean_and_stderr(s.gap);
    report.kl_hat[k] = kl.value;
    report.kl_se[k] = kl.std_error;
    report.g_hat[k] = gi.value;
    report.g_se[k] = gi.std_error;
    report.gap_t[k] = gap.value;
    report.gap_se[k] = gap.std_error;
  }
}

}  // namespace

Estimate kl_mc(const Schedule& sp, const VelocityField& q, double t, const McConfig& cfg,
               const BaseDensity& base) {
  cfg.validate();
  if (t == base.time && base.time == 0.0) return {0.0, 0.0};
  const RandomStream stream = draw_stream(cfg, stream_tag("kl"), time_slot(t));
  const TimeSamples s = sample_time(sp, q, t, stream, cfg, false, base);
  return mean_and_stderr(s.log_ratio);
}

Estimate identity_integrand(const Schedule& sp, const VelocityField& q, double t,
                            const McConfig& cfg) {
  cfg.validate();
  if (t == 0.0) return {0.0, 0.0};
  const RandomStream stream = draw_stream(cfg, stream_tag("integrand"), time_slot(t));
  const TimeSamples s =
      sample_time(sp, q, t, stream, cfg, true, BaseDensity::standard_normal());
  return mean_and_stderr(s.integrand);
}

EstimatorReport identity_curves(const Schedule& sp, const VelocityField& q, const McConfig& cfg) {
  cfg.validate();
  EstimatorReport report;
  fill_path_columns(sp, q, cfg, report);
  const TimeGrid& grid = cfg.grid;
  const std::size_t g = grid.count();
  report.cum_integral = cumulative_trapezoid(report.g_hat, grid);
  report.cum_se.assign(g, 0.0);
  const double h = grid.spacing();
  for (std::size_t k = 1; k < g; ++k) {
    std::vector<double> w(k + 1, h);
    w.front() *= 0.5;
    w.back() *= 0.5;
    report.cum_se[k] = linear_se(w, std::span<const double>(report.g_se.data(), k + 1));
  }
  double max_kl = 0.0;
  for (double v : report.kl_hat) max_kl = std::max(max_kl, std::abs(v));
  const double floor = kTrackingRelTol * max_kl;
  report.tracking.assign(g, true);
  for (std::size_t k = 0; k < g; ++k) {
    const double combined = std::hypot(report.kl_se[k], report.cum_se[k]);
    const double tol = std::max(3.0 * combined, floor) + kSolverAllowance;
    report.tracking[k] = std::abs(report.kl_hat[k] - report.cum_integral[k]) <= tol;
  }
  report.kl_terminal = report.kl_hat.back();
  report.kl_terminal_se = report.kl_se.back();
  return report;
}

PathEstimate flow_error(const Schedule& s, const VelocityField& q, const McConfig& cfg) {
  cfg.validate();
  const TimeGrid& grid = cfg.grid;
  const std::size_t g = grid.count();
  const std::size_t d = cfg.dim;
  PathEstimate out;
  out.per_point.assign(g, 0.0);
  out.per_point_se.assign(g, 0.0);
  std::vector<double> sq_mean(g), sq_se(g);
  const RandomStream root = RandomStream(cfg.seed).split("flow_error");
  for (std::size_t k = 0; k < g; ++k) {
    const double t = grid[k];
    const double sigma = s.sigma(t);
    const double a = s.rate(t);
    const RandomStream stream = root.split(k);
    std::vector<double> err(cfg.n);
    for_each_chunk(cfg.n, [&](std::size_t lo, std::size_t m) {
      const Eigen::MatrixXd x = draw_chunk(stream, lo, m, d, sigma);
      Eigen::MatrixXd v;
      q.evaluate_batch(x, t, v);
      const Eigen::RowVectorXd e = (a * x - v).colwise().squaredNorm();
      for (std::size_t i = 0; i < m; ++i) err[lo + i] = e(static_cast<Eigen::Index>(i));
    });
    const Estimate m = mean_and_stderr(err);
    sq_mean[k] = m.value;
    sq_se[k] = m.std_error;
    out.per_point[k] = std::sqrt(m.value);
    out.per_point_se[k] = m.value > 0.0 ? m.std_error / (2.0 * out.per_point[k]) : 0.0;
  }
  // Independent draws per grid point: variances add.
  const std::vector<double> w = trapezoid_weights(grid);
  const double total_sq = trapezoid(sq_mean, grid);
  double var = 0.0;
  for (std::size_t k = 0; k < g; ++k) var += w[k] * w[k] * sq_se[k] * sq_se[k];
  out.total = std::sqrt(total_sq);
  out.total_se = total_sq > 0.0 ? std::sqrt(var) / (2.0 * out.total) : 0.0;
  return out;
}

PathEstimate score_gap(const Schedule& s, const VelocityField& q, const McConfig& cfg) {
  cfg.validate();
  EstimatorReport report;
  fill_path_columns(s, q, cfg, report);
  PathEstimate out;
  out.per_point = report.gap_t;
  out.per_point_se = report.gap_se;
  out.total = trapezoid(report.gap_t, cfg.grid);
  out.total_se = linear_se(trapezoid_weights(cfg.grid), report.gap_se);
  return out;
}

EstimatorReport bound_check(const Schedule& s, const VelocityField& q, const McConfig& cfg) {
  cfg.validate();
  EstimatorReport report;
  // The path pass gives the score gap at every grid time and, at t = 1, the
  // terminal KL on the same samples.
  fill_path_columns(s, q, cfg, report);
  report.kl_terminal = report.kl_hat.back();
  report.kl_terminal_se = report.kl_se.back();
  report.score_gap_total = trapezoid(report.gap_t, cfg.grid);
  report.score_gap_se = linear_se(trapezoid_weights(cfg.grid), report.gap_se);

  const PathEstimate eps = flow_error(s, q, cfg);
  report.eps_t = eps.per_point;
  report.eps_se = eps.per_point_se;
  report.eps_total = eps.total;
  report.eps_total_se = eps.total_se;

  const double S = std::max(0.0, report.score_gap_total);
  const double root_s = std::sqrt(S);
  report.bound_rhs = report.eps_total * root_s;
  const double d_eps = root_s * report.eps_total_se;
  const double d_gap = S > 0.0 ? report.eps_total * report.score_gap_se / (2.0 * root_s)
                               : report.eps_total * std::sqrt(report.score_gap_se);
  report.bound_rhs_se = std::hypot(d_eps, d_gap);
  report.propagated_se = std::hypot(report.kl_terminal_se, report.bound_rhs_se);
  report.satisfied = report.kl_terminal <=
                     report.bound_rhs + 3.0 * report.propagated_se + kSolverAllowance;
  return report;
}

RegularityProfile RegularityProfile::constant(double value) {
  auto c = [value](double) { return value; };
  return {c, c, c, c, c, c};
}

BoundConstants bound_constants(const RegularityProfile& r, const TimeGrid& grid) {
  const std::size_t g = grid.count();
  std::vector<double> growth(g), drift(g), tail(g);
  for (std::size_t k = 0; k < g; ++k) {
    const double t = grid[k];
    const double L = r.L(t), K = r.K(t), Bp = r.B_p(t), M = r.M(t), H = r.H(t), Up = r.U_p(t);
    for (double v : {L, K, Bp, M, H, Up}) {
      if (!(v >= 0.0)) throw std::domain_error("bound_constants: profile must be nonnegative");
    }
    growth[k] = L + K + Bp * M;
    drift[k] = 2.0 * L * Bp + 2.0 * H;
    tail[k] = Up * Up;
  }
  const double factor = std::exp(trapezoid(growth, grid));
  return {factor * trapezoid(drift, grid), factor * std::sqrt(trapezoid(tail, grid))};
}

double tv_from_kl(double kl) {
  if (!(kl >= 0.0)) throw std::domain_error("tv_from_kl: KL must be nonnegative");
  return std::sqrt(kl / 2.0);
}

}  // namespace flowkl
