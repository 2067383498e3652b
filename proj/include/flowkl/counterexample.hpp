#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "flowkl/estimators.hpp"
#include "flowkl/ode.hpp"
#include "flowkl/velocity_field.hpp"

namespace flowkl {

/// Inputs of the weak-solution construction: p_t = N(0, I) with u = 0, and a
/// tilted path q_t = N(-a(t) b, I) driven by v(x, t) = -delta a(t) b.
struct CounterexampleSpec {
  double M = 1.0;
  double eps = 0.01;
  std::vector<double> b{1.0, 0.0};
  double tau = 0.5;

  std::size_t dim() const { return b.size(); }
  /// Throws std::invalid_argument unless M > eps > 0, 0 < tau < 1 and b != 0.
  void validate() const;
};

/// a(t) = 0 on [0, tau] and eta e^(delta (t - tau)) on (tau, 1].
struct CounterexampleInstance {
  CounterexampleSpec spec;
  double delta = 0.0;
  double J = 0.0;  ///< integral of a^2 over [0, 1]
  double eta = 0.0;
  double b_norm_sq = 0.0;
  bool ill_conditioned = false;  ///< e^(2 delta (1 - tau)) - 1 below 1e-12

  double a(double t) const;
  /// Velocity field -delta a(t) b, taking the right limit of a at tau.
  std::shared_ptr<const VelocityField> v_field() const;
  /// The tilted law N(-eta b, I) right after the jump at tau.
  BaseDensity tilted_base() const;
};

CounterexampleInstance build_counterexample(const CounterexampleSpec& spec);

struct FmLoss {
  double closed_form = 0.0;   ///< delta^2 |b|^2 J
  double quadrature = 0.0;    ///< trapezoid of delta^2 a(t)^2 |b|^2, split at tau
  double mc_estimate = 0.0;   ///< sample mean over x ~ N(0, I) of the time-integrated loss
  double mc_stderr = 0.0;
};

FmLoss counterexample_fm_loss(const CounterexampleInstance& inst);

struct CounterexampleKl {
  double kl_direct = 0.0;         ///< KL(N(0, I) || N(-a(1) b, I)) = a(1)^2 |b|^2 / 2
  double kl_path_integral = 0.0;  ///< delta J |b|^2 = M
};

CounterexampleKl counterexample_kl(const CounterexampleInstance& inst);

struct CounterexampleReport {
  CounterexampleInstance instance;
  FmLoss fm_loss;
  CounterexampleKl kl;
  Estimate kl_mc;
  double kl_mc_z = 0.0;  ///< |kl_mc - kl_direct| / stderr
  bool passed = false;
};

struct CounterexampleCheck {
  std::size_t n = 50000;
  std::uint64_t seed = 0;
  IvpConfig ode{200, Direction::Backward};
};

/// Checks the closed-form identities and the generic Monte-Carlo KL; throws
/// VerificationError naming the first quantity that fails.
CounterexampleReport verify_counterexample(const CounterexampleSpec& spec,
                                           const CounterexampleCheck& check = {});

std::string report_json(const CounterexampleReport& report);

}  // namespace flowkl
