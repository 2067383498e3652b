#include "flowkl/ode.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "flowkl/derivatives.hpp"
#include "flowkl/errors.hpp"
#include "flowkl/gaussian_paths.hpp"

namespace flowkl {

namespace {

using Rhs = std::function<void(double, const Eigen::VectorXd&, Eigen::VectorXd&)>;
using BatchRhs = std::function<void(double, const Eigen::MatrixXd&, Eigen::MatrixXd&)>;

// Classical RK4 over a flat state vector (or one state per column); every
// component shares the stages.
template <class State, class F>
void integrate(const F& rhs, State& y, double t_from, double t_to, std::size_t n) {
  const double h = (t_to - t_from) / static_cast<double>(n);
  const double dn = static_cast<double>(n);
  State k1(y.rows(), y.cols()), k2(y.rows(), y.cols()), k3(y.rows(), y.cols()),
      k4(y.rows(), y.cols()), tmp(y.rows(), y.cols());
  for (std::size_t step = 0; step < n; ++step) {
    const double s0 = std::lerp(t_from, t_to, static_cast<double>(step) / dn);
    const double sm = std::lerp(t_from, t_to, (static_cast<double>(step) + 0.5) / dn);
    const double s1 = std::lerp(t_from, t_to, static_cast<double>(step + 1) / dn);
    try {
      rhs(s0, y, k1);
      tmp = y + (0.5 * h) * k1;
      rhs(sm, tmp, k2);
      tmp = y + (0.5 * h) * k2;
      rhs(sm, tmp, k3);
      tmp = y + h * k3;
      rhs(s1, tmp, k4);
    } catch (const NumericError& e) {
      throw NumericError("RK4 step " + std::to_string(step) + ": " + e.what());
    }
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!y.allFinite()) {
      throw NumericError("RK4 state became non-finite at step " + std::to_string(step) +
                         " (s = " + std::to_string(s1) + ")");
    }
  }
}

void check_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error(std::string(what) + ": time " + std::to_string(t) + " outside [0, 1]");
  }
}

std::span<const double> head(const Eigen::VectorXd& y, std::size_t d) {
  return {y.data(), d};
}

}  // namespace

std::size_t step_count(const IvpConfig& cfg, double t_from, double t_to) {
  if (cfg.steps == 0) throw std::invalid_argument("IvpConfig: steps must be >= 1");
  const double span = std::abs(t_to - t_from);
  const auto n = static_cast<std::size_t>(std::ceil(static_cast<double>(cfg.steps) * span - 1e-9));
  if (span == 0.0) return 0;
  return n == 0 ? 1 : n;
}

BaseDensity BaseDensity::standard_normal() {
  BaseDensity base;
  base.time = 0.0;
  base.log_density = [](std::span<const double> x) { return gaussian_log_density(x, 1.0); };
  base.score = [](std::span<const double> x) {
    Eigen::VectorXd s(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) s(static_cast<Eigen::Index>(i)) = -x[i];
    return s;
  };
  return base;
}

Eigen::VectorXd rk4_solve(const VelocityField& f, std::span<const double> x, double t_from,
                          double t_to, const IvpConfig& cfg) {
  check_time(t_from, "rk4_solve");
  check_time(t_to, "rk4_solve");
  if ((t_to > t_from && cfg.direction == Direction::Backward) ||
      (t_to < t_from && cfg.direction == Direction::Forward)) {
    throw std::invalid_argument("rk4_solve: direction does not match the time interval");
  }
  const std::size_t d = x.size();
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(d));
  if (t_from == t_to) return y;
  std::vector<double> out(d);
  const Rhs rhs = [&](double s, const Eigen::VectorXd& state, Eigen::VectorXd& dy) {
    f.evaluate(head(state, d), s, std::span<double>(dy.data(), d));
  };
  integrate(rhs, y, t_from, t_to, step_count(cfg, t_from, t_to));
  return y;
}

LogDensityResult backward_logdensity(const VelocityField& f, std::span<const double> x, double t,
                                     const IvpConfig& cfg, const BaseDensity& base) {
  check_time(t, "backward_logdensity");
  if (t < base.time) throw std::invalid_argument("backward_logdensity: t precedes the base time");
  const std::size_t d = x.size();
  const auto di = static_cast<Eigen::Index>(d);
  LogDensityResult result;
  if (t == base.time) {
    result.x0 = Eigen::Map<const Eigen::VectorXd>(x.data(), di);
    result.log_q = base.log_density(x);
    return result;
  }
  // State (x, ell); d ell/ds = div f so ell at the base time is -int div.
  Eigen::VectorXd y(di + 1);
  y.head(di) = Eigen::Map<const Eigen::VectorXd>(x.data(), di);
  y(di) = 0.0;
  const Rhs rhs = [&](double s, const Eigen::VectorXd& state, Eigen::VectorXd& dy) {
    dy(di) = value_and_divergence(f, head(state, d), s, std::span<double>(dy.data(), d));
  };
  integrate(rhs, y, t, base.time, step_count(cfg, t, base.time));
  result.x0 = y.head(di);
  result.ell = y(di);
  result.log_q = base.log_density(head(y, d)) + result.ell;
  return result;
}

ScoreResult backward_score(const VelocityField& f, std::span<const double> x, double t,
                           const IvpConfig& cfg, const BaseDensity& base) {
  check_time(t, "backward_score");
  if (t < base.time) throw std::invalid_argument("backward_score: t precedes the base time");
  const std::size_t d = x.size();
  const auto di = static_cast<Eigen::Index>(d);
  ScoreResult result;
  if (t == base.time) {
    result.x0 = Eigen::Map<const Eigen::VectorXd>(x.data(), di);
    result.log_q = base.log_density(x);
    result.score = base.score(x);
    result.sensitivity = Eigen::MatrixXd::Identity(di, di);
    return result;
  }
  // Layout: x | J (column-major d x d) | ell | g.
  const Eigen::Index j_off = di;
  const Eigen::Index ell_off = di + di * di;
  const Eigen::Index g_off = ell_off + 1;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(g_off + di);
  y.head(di) = Eigen::Map<const Eigen::VectorXd>(x.data(), di);
  Eigen::Map<Eigen::MatrixXd>(y.data() + j_off, di, di).setIdentity();

  const Rhs rhs = [&](double s, const Eigen::VectorXd& state, Eigen::VectorXd& dy) {
    const FieldJet jet = field_jet(f, head(state, d), s);
    const Eigen::Map<const Eigen::MatrixXd> sens(state.data() + j_off, di, di);
    dy.head(di) = jet.value;
    Eigen::Map<Eigen::MatrixXd>(dy.data() + j_off, di, di).noalias() = jet.jacobian * sens;
    dy(ell_off) = jet.divergence;
    dy.segment(g_off, di).noalias() = sens.transpose() * jet.grad_divergence;
  };
  integrate(rhs, y, t, base.time, step_count(cfg, t, base.time));

  result.x0 = y.head(di);
  result.sensitivity = Eigen::Map<const Eigen::MatrixXd>(y.data() + j_off, di, di);
  result.log_q = base.log_density(head(y, d)) + y(ell_off);
  result.score = result.sensitivity.transpose() * base.score(head(y, d)) + y.segment(g_off, di);
  return result;
}

BatchResult backward_batch(const VelocityField& f, const Eigen::MatrixXd& x, double t,
                           const IvpConfig& cfg, bool with_score, const BaseDensity& base) {
  check_time(t, "backward_batch");
  if (t < base.time) throw std::invalid_argument("backward_batch: t precedes the base time");
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  const auto du = static_cast<std::size_t>(d);
  // Rows: x | J (column-major d x d) | ell | g; the last three only with scores.
  const Eigen::Index j_off = d;
  const Eigen::Index ell_off = with_score ? d + d * d : d;
  const Eigen::Index g_off = ell_off + 1;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(with_score ? g_off + d : ell_off + 1, n);
  y.topRows(d) = x;
  if (with_score) {
    for (Eigen::Index i = 0; i < d; ++i) y.row(j_off + i + d * i).setOnes();
  }

  if (t > base.time) {
    BatchJet jet;
    const BatchRhs rhs = [&](double s, const Eigen::MatrixXd& state, Eigen::MatrixXd& dy) {
      f.batch_jet(state.topRows(d), s, with_score ? 2 : 1, jet);
      dy.topRows(d) = jet.value;
      dy.row(ell_off) = jet.divergence;
      if (!with_score) return;
      for (Eigen::Index col = 0; col < d; ++col) {
        for (Eigen::Index i = 0; i < d; ++i) {
          // (grad v J)(i, col) = sum_k dv_i/dx_k J(k, col)
          auto out = dy.row(j_off + i + d * col);
          out.setZero();
          for (Eigen::Index k = 0; k < d; ++k) {
            out.array() +=
                jet.jacobian.row(i + d * k).array() * state.row(j_off + k + d * col).array();
          }
        }
        auto g = dy.row(g_off + col);
        g.setZero();
        for (Eigen::Index i = 0; i < d; ++i) {
          g.array() += state.row(j_off + i + d * col).array() * jet.grad_divergence.row(i).array();
        }
      }
    };
    integrate(rhs, y, t, base.time, step_count(cfg, t, base.time));
  }

  BatchResult result;
  result.x0 = y.topRows(d);
  result.log_q.resize(n);
  if (with_score) result.score.resize(d, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const std::span<const double> x0(result.x0.col(c).data(), du);
    result.log_q(c) = base.log_density(x0) + y(ell_off, c);
    if (!with_score) continue;
    const Eigen::Map<const Eigen::MatrixXd> sens(y.col(c).data() + j_off, d, d);
    result.score.col(c) = sens.transpose() * base.score(x0) + y.col(c).segment(g_off, d);
  }
  return result;
}

Eigen::VectorXd score_transport_oracle(const VelocityField& f, std::span<const double> x,
                                       double t, const IvpConfig& cfg, const BaseDensity& base) {
  check_time(t, "score_transport_oracle");
  const std::size_t d = x.size();
  const auto di = static_cast<Eigen::Index>(d);
  if (t == base.time) return base.score(x);

  IvpConfig back = cfg;
  back.direction = Direction::Backward;
  const Eigen::VectorXd x0 = rk4_solve(f, x, t, base.time, back);

  Eigen::VectorXd y(2 * di);
  y.head(di) = x0;
  y.tail(di) = base.score(head(x0, d));
  const Rhs rhs = [&](double s, const Eigen::VectorXd& state, Eigen::VectorXd& dy) {
    const FieldJet jet = field_jet(f, head(state, d), s);
    dy.head(di) = jet.value;
    dy.tail(di).noalias() = -jet.jacobian.transpose() * state.tail(di);
    dy.tail(di) -= jet.grad_divergence;
  };
  integrate(rhs, y, base.time, t, step_count(cfg, base.time, t));
  return y.tail(di);
}

}  // namespace flowkl
