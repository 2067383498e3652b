#include "flowkl/counterexample.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "flowkl/errors.hpp"
#include "flowkl/gaussian_paths.hpp"
#include "flowkl/io.hpp"
#include "flowkl/quadrature.hpp"
#include "flowkl/rng.hpp"

namespace flowkl {

namespace {

constexpr std::size_t kQuadraturePoints = 20001;
constexpr std::size_t kLossProbes = 64;

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::abs(b); }

}  // namespace

void CounterexampleSpec::validate() const {
  if (!(eps > 0.0 && M > eps)) throw std::invalid_argument("counterexample: need M > eps > 0");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("counterexample: need 0 < tau < 1");
  double norm = 0.0;
  for (double v : b) norm += v * v;
  if (b.empty() || !(norm > 0.0)) throw std::invalid_argument("counterexample: b must be nonzero");
}

double CounterexampleInstance::a(double t) const {
  if (t <= spec.tau) return 0.0;
  return eta * std::exp(delta * (t - spec.tau));
}

std::shared_ptr<const VelocityField> CounterexampleInstance::v_field() const {
  // Right-continuous at tau: solves over [tau, 1] evaluate the field at tau itself.
  auto coefficient = [inst = *this](double t) {
    if (t < inst.spec.tau) return 0.0;
    return -inst.delta * inst.eta * std::exp(inst.delta * (t - inst.spec.tau));
  };
  return std::make_shared<TranslationField>(coefficient, spec.b);
}

BaseDensity CounterexampleInstance::tilted_base() const {
  BaseDensity base;
  base.time = spec.tau;
  std::vector<double> mean(spec.b.size());
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = -eta * spec.b[i];
  base.log_density = [mean](std::span<const double> x) {
    std::vector<double> centered(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - mean[i];
    return gaussian_log_density(centered, 1.0);
  };
  base.score = [mean](std::span<const double> x) {
    Eigen::VectorXd s(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) s(static_cast<Eigen::Index>(i)) = mean[i] - x[i];
    return s;
  };
  return base;
}

CounterexampleInstance build_counterexample(const CounterexampleSpec& spec) {
  spec.validate();
  CounterexampleInstance inst;
  inst.spec = spec;
  for (double v : spec.b) inst.b_norm_sq += v * v;
  inst.delta = spec.eps / spec.M;
  inst.J = spec.eps / (inst.delta * inst.delta * inst.b_norm_sq);
  const double growth = std::expm1(2.0 * inst.delta * (1.0 - spec.tau));
  inst.ill_conditioned = growth < 1e-12;
  inst.eta = std::sqrt(2.0 * inst.delta * inst.J / growth);
  return inst;
}

FmLoss counterexample_fm_loss(const CounterexampleInstance& inst) {
  FmLoss out;
  out.closed_form = inst.delta * inst.delta * inst.b_norm_sq * inst.J;

  // u = 0 on the p side, so the loss integrand is |v|^2 = delta^2 a^2 |b|^2,
  // zero before tau and smooth after it.
  const double tau = inst.spec.tau;
  std::vector<double> times(kQuadraturePoints), values(kQuadraturePoints);
  for (std::size_t k = 0; k < kQuadraturePoints; ++k) {
    const double t = std::lerp(tau, 1.0, static_cast<double>(k) / (kQuadraturePoints - 1));
    const double a = inst.eta * std::exp(inst.delta * (t - tau));  // right limit at tau
    times[k] = t;
    values[k] = inst.delta * inst.delta * a * a * inst.b_norm_sq;
  }
  out.quadrature = trapezoid(values, times);

  // Same integral through the field object, averaged over x ~ N(0, I); the
  // midpoint rule never evaluates at the jump.
  const auto field = inst.v_field();
  const std::size_t d = inst.spec.dim();
  const RandomStream stream = RandomStream(0).split("counterexample_loss");
  std::vector<double> per_probe(kLossProbes);
  const std::size_t cells = kQuadraturePoints - 1;
  const double h = (1.0 - tau) / static_cast<double>(cells);
  for (std::size_t i = 0; i < kLossProbes; ++i) {
    std::vector<double> x(d), v(d);
    stream.normals(i, x);
    CompensatedSum acc;
    for (std::size_t k = 0; k < cells; ++k) {
      const double t = tau + (static_cast<double>(k) + 0.5) * h;
      field->evaluate(std::span<const double>(x), t, std::span<double>(v));
      double sq = 0.0;
      for (double c : v) sq += c * c;
      acc.add(h * sq);
    }
    per_probe[i] = acc.value();
  }
  const Estimate e = mean_and_stderr(per_probe);
  out.mc_estimate = e.value;
  out.mc_stderr = e.std_error;
  return out;
}

CounterexampleKl counterexample_kl(const CounterexampleInstance& inst) {
  const double a1 = inst.a(1.0);
  return {0.5 * a1 * a1 * inst.b_norm_sq, inst.delta * inst.J * inst.b_norm_sq};
}

CounterexampleReport verify_counterexample(const CounterexampleSpec& spec,
                                           const CounterexampleCheck& check) {
  CounterexampleReport report;
  report.instance = build_counterexample(spec);
  const auto& inst = report.instance;
  report.fm_loss = counterexample_fm_loss(inst);
  report.kl = counterexample_kl(inst);

  if (!close_rel(report.fm_loss.closed_form, spec.eps, 1e-10)) {
    throw VerificationError("fm_loss", "closed form " + format_double(report.fm_loss.closed_form) +
                                           " != eps " + format_double(spec.eps));
  }
  if (std::abs(report.fm_loss.quadrature - report.fm_loss.closed_form) > 1e-6) {
    throw VerificationError("fm_loss_quadrature", format_double(report.fm_loss.quadrature));
  }
  if (std::abs(report.fm_loss.mc_estimate - report.fm_loss.closed_form) > 1e-6) {
    throw VerificationError("fm_loss_mc", format_double(report.fm_loss.mc_estimate));
  }
  if (!close_rel(report.kl.kl_path_integral, spec.M, 1e-10)) {
    throw VerificationError("kl_path_integral", format_double(report.kl.kl_path_integral) +
                                                    " != M " + format_double(spec.M));
  }
  if (!(report.kl.kl_direct >= spec.M)) {
    throw VerificationError("kl_direct", format_double(report.kl.kl_direct) + " < M");
  }

  // Generic path: p_t = N(0, I) under the zero schedule; q_1 through the ODE
  // log-density, started from the tilted law just after the jump at tau.
  McConfig mc;
  mc.n = check.n;
  mc.seed = check.seed;
  mc.ode = check.ode;
  mc.dim = spec.dim();
  const auto field = inst.v_field();
  report.kl_mc = kl_mc(Schedule::zero(), *field, 1.0, mc, inst.tilted_base());
  const double diff = std::abs(report.kl_mc.value - report.kl.kl_direct);
  report.kl_mc_z = report.kl_mc.std_error > 0.0 ? diff / report.kl_mc.std_error : 0.0;
  if (diff > 3.0 * report.kl_mc.std_error + kSolverAllowance) {
    throw VerificationError("kl_mc", format_double(report.kl_mc.value) + " vs kl_direct " +
                                         format_double(report.kl.kl_direct));
  }
  report.passed = true;
  return report;
}

std::string report_json(const CounterexampleReport& r) {
  nlohmann::json j;
  j["spec"] = {{"M", r.instance.spec.M},
               {"eps", r.instance.spec.eps},
               {"tau", r.instance.spec.tau},
               {"b", r.instance.spec.b}};
  j["delta"] = r.instance.delta;
  j["J"] = r.instance.J;
  j["eta"] = r.instance.eta;
  j["ill_conditioned"] = r.instance.ill_conditioned;
  j["fm_loss"] = r.fm_loss.closed_form;
  j["fm_loss_quadrature"] = r.fm_loss.quadrature;
  j["fm_loss_mc"] = r.fm_loss.mc_estimate;
  j["kl_path_integral"] = r.kl.kl_path_integral;
  j["kl_direct"] = r.kl.kl_direct;
  j["kl_jump"] = r.kl.kl_direct - r.kl.kl_path_integral;
  j["kl_mc"] = r.kl_mc.value;
  j["kl_mc_stderr"] = r.kl_mc.std_error;
  j["passed"] = r.passed;
  return j.dump(2) + "\n";
}

}  // namespace flowkl
