#include "flowkl/derivatives.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "flowkl/errors.hpp"
#include "flowkl/jet_kernel.hpp"

namespace flowkl {

namespace {

void require_finite(double v, const char* what, std::span<const double> x, double t) {
  if (std::isfinite(v)) return;
  std::ostringstream msg;
  msg << what << " is not finite at x = (";
  for (std::size_t i = 0; i < x.size(); ++i) msg << (i ? ", " : "") << x[i];
  msg << "), t = " << t;
  throw NumericError(msg.str());
}

template <class Seed>
void seed(std::span<const double> x, std::span<Seed> out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = Seed(x[i]);
}

}  // namespace

Eigen::MatrixXd jacobian(const VelocityField& f, std::span<const double> x, double t) {
  const std::size_t d = x.size();
  Eigen::MatrixXd jac(d, d);
  std::vector<Dual> in(d), out(d);
  for (std::size_t j = 0; j < d; ++j) {
    seed<Dual>(x, in);
    in[j].tangent = 1.0;
    f.evaluate(std::span<const Dual>(in), t, std::span<Dual>(out));
    for (std::size_t i = 0; i < d; ++i) {
      require_finite(out[i].tangent, "jacobian", x, t);
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = out[i].tangent;
    }
  }
  return jac;
}

double value_and_divergence(const VelocityField& f, std::span<const double> x, double t,
                            std::span<double> value) {
  const std::size_t d = x.size();
  std::vector<Dual> in(d), out(d);
  double div = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    seed<Dual>(x, in);
    in[j].tangent = 1.0;
    f.evaluate(std::span<const Dual>(in), t, std::span<Dual>(out));
    div += out[j].tangent;
    if (j == 0) {
      for (std::size_t i = 0; i < d; ++i) {
        require_finite(out[i].value, "field value", x, t);
        value[i] = out[i].value;
      }
    }
  }
  require_finite(div, "divergence", x, t);
  return div;
}

double divergence(const VelocityField& f, std::span<const double> x, double t) {
  std::vector<double> value(x.size());
  return value_and_divergence(f, x, t, value);
}

FieldJet field_jet(const VelocityField& f, std::span<const double> x, double t) {
  const std::size_t d = x.size();
  const auto di = static_cast<Eigen::Index>(d);
  FieldJet jet;
  jet.value.resize(di);
  jet.jacobian.resize(di, di);
  jet.grad_divergence.resize(di);
  detail::JetScratch scratch(d);
  const auto eval = [&](const std::vector<Dual2>& in, std::vector<Dual2>& out) {
    f.evaluate(std::span<const Dual2>(in), t, std::span<Dual2>(out));
  };
  detail::jet_point(eval, x.data(), d, 2, scratch, jet.value.data(), jet.jacobian.data(),
                    jet.divergence, jet.grad_divergence.data());

  for (Eigen::Index k = 0; k < di; ++k) {
    require_finite(jet.value(k), "field value", x, t);
    require_finite(jet.grad_divergence(k), "grad divergence", x, t);
    for (Eigen::Index j = 0; j < di; ++j) require_finite(jet.jacobian(k, j), "jacobian", x, t);
  }
  return jet;
}

Eigen::VectorXd grad_divergence(const VelocityField& f, std::span<const double> x, double t) {
  return field_jet(f, x, t).grad_divergence;
}

double fd_step(double x) {
  return std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + std::abs(x));
}

Eigen::MatrixXd fd_jacobian(const VelocityField& f, std::span<const double> x, double t) {
  const std::size_t d = x.size();
  Eigen::MatrixXd jac(d, d);
  std::vector<double> probe(x.begin(), x.end()), plus(d), minus(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double h = fd_step(x[j]);
    probe[j] = x[j] + h;
    f.evaluate(std::span<const double>(probe), t, std::span<double>(plus));
    probe[j] = x[j] - h;
    f.evaluate(std::span<const double>(probe), t, std::span<double>(minus));
    probe[j] = x[j];
    for (std::size_t i = 0; i < d; ++i) {
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (plus[i] - minus[i]) / (2.0 * h);
    }
  }
  return jac;
}

Eigen::VectorXd fd_grad_divergence(const VelocityField& f, std::span<const double> x, double t) {
  const std::size_t d = x.size();
  Eigen::VectorXd grad(d);
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t j = 0; j < d; ++j) {
    const double h = fd_step(x[j]);
    probe[j] = x[j] + h;
    const double up = divergence(f, probe, t);
    probe[j] = x[j] - h;
    const double down = divergence(f, probe, t);
    probe[j] = x[j];
    grad(static_cast<Eigen::Index>(j)) = (up - down) / (2.0 * h);
  }
  return grad;
}

void VelocityField::evaluate_batch(const Eigen::MatrixXd& x, double t,
                                   Eigen::MatrixXd& out) const {
  const auto du = static_cast<std::size_t>(x.rows());
  out.resize(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    evaluate(std::span<const double>(x.col(c).data(), du), t,
             std::span<double>(out.col(c).data(), du));
  }
}

void VelocityField::batch_jet(const Eigen::MatrixXd& x, double t, int order,
                              BatchJet& out) const {
  const auto eval = [&](const std::vector<Dual2>& in, std::vector<Dual2>& o) {
    evaluate(std::span<const Dual2>(in), t, std::span<Dual2>(o));
  };
  detail::batch_jet_columns(eval, x, order, out);
}

}  // namespace flowkl
