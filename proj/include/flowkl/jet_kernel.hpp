#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "flowkl/dual.hpp"

namespace flowkl::detail {

/// Reusable buffers for jet_point.
struct JetScratch {
  std::vector<Dual2> in, out;
  std::vector<double> hess_diag;  ///< hess_diag[k * d + i] = d^2 v_k / dx_i^2

  explicit JetScratch(std::size_t d) : in(d), out(d), hess_diag(d * d) {}
};

/// One point's jet from Dual2 probes: d passes along e_i, and for order 2 one
/// more along e_i + e_j per pair i < j, from which the mixed second
/// derivatives follow by polarization.
///
/// `eval(in, out)` evaluates the field on Dual2 spans. `jac` is column-major
/// d x d; `jac` and `grad_div` are written only for order 2.
template <class Eval>
void jet_point(Eval&& eval, const double* x, std::size_t d, int order, JetScratch& s,
               double* value, double* jac, double& div, double* grad_div) {
  div = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) s.in[j] = Dual2(x[j], j == i ? 1.0 : 0.0, 0.0);
    eval(s.in, s.out);
    div += s.out[i].first;
    for (std::size_t k = 0; k < d; ++k) {
      if (i == 0) value[k] = s.out[k].value;
      if (order < 2) continue;
      jac[k + d * i] = s.out[k].first;
      s.hess_diag[k * d + i] = s.out[k].second;
    }
  }
  if (order < 2) return;
  for (std::size_t i = 0; i < d; ++i) grad_div[i] = s.hess_diag[i * d + i];
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        s.in[k] = Dual2(x[k], k == i || k == j ? 1.0 : 0.0, 0.0);
      }
      eval(s.in, s.out);
      // d_i d_j v_i contributes to grad_div_j, d_i d_j v_j to grad_div_i.
      grad_div[j] += 0.5 * (s.out[i].second - s.hess_diag[i * d + i] - s.hess_diag[i * d + j]);
      grad_div[i] += 0.5 * (s.out[j].second - s.hess_diag[j * d + i] - s.hess_diag[j * d + j]);
    }
  }
}

/// jet_point over every column of `x` into the BatchJet layout.
template <class Eval, class Out>
void batch_jet_columns(Eval&& eval, const Eigen::MatrixXd& x, int order, Out& out) {
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  const auto du = static_cast<std::size_t>(d);
  out.value.resize(d, n);
  out.divergence.resize(n);
  if (order >= 2) {
    out.jacobian.resize(d * d, n);
    out.grad_divergence.resize(d, n);
  }
  JetScratch scratch(du);
  std::vector<double> jac(du * du), grad(du);
  for (Eigen::Index c = 0; c < n; ++c) {
    jet_point(eval, x.col(c).data(), du, order, scratch, out.value.col(c).data(), jac.data(),
              out.divergence(c), grad.data());
    if (order < 2) continue;
    for (std::size_t k = 0; k < du * du; ++k) out.jacobian(static_cast<Eigen::Index>(k), c) = jac[k];
    for (std::size_t k = 0; k < du; ++k) out.grad_divergence(static_cast<Eigen::Index>(k), c) = grad[k];
  }
}

}  // namespace flowkl::detail
