#include "flowkl/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace flowkl {

namespace {

constexpr double kPi = std::numbers::pi;

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error("schedule time " + std::to_string(t) + " outside [0, 1]");
  }
}

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                    double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
}

Schedule Schedule::a1() {
  return {ScheduleId::A1, "a1", [](double t) { return std::sin(kPi * t); },
          [](double t) { return (1.0 - std::cos(kPi * t)) / kPi; }};
}

Schedule Schedule::a2() {
  return {ScheduleId::A2, "a2", [](double t) { return 0.3 * std::sin(2.0 * kPi * t) + 0.2; },
          [](double t) { return 0.3 * (1.0 - std::cos(2.0 * kPi * t)) / (2.0 * kPi) + 0.2 * t; }};
}

Schedule Schedule::a3() {
  return {ScheduleId::A3, "a3", [](double t) { return t - 0.5; },
          [](double t) { return 0.5 * t * t - 0.5 * t; }};
}

Schedule Schedule::zero() {
  return {ScheduleId::Custom, "zero", [](double) { return 0.0; }, [](double) { return 0.0; }};
}

Schedule Schedule::from_id(std::string_view id) {
  if (id == "a1") return a1();
  if (id == "a2") return a2();
  if (id == "a3") return a3();
  if (id == "zero") return zero();
  throw std::invalid_argument("unknown schedule id '" + std::string(id) + "'");
}

Schedule Schedule::custom(std::string name, Fn rate) {
  auto integral = [rate](double t) { return adaptive_simpson(rate, 0.0, t, 1e-10); };
  return {ScheduleId::Custom, std::move(name), std::move(rate), std::move(integral)};
}

Schedule Schedule::custom(std::string name, Fn rate, Fn rate_integral) {
  return {ScheduleId::Custom, std::move(name), std::move(rate), std::move(rate_integral)};
}

Schedule Schedule::tabulated(std::string name, std::vector<std::pair<double, double>> table) {
  if (table.size() < 2) throw std::invalid_argument("tabulated schedule needs >= 2 rows");
  std::sort(table.begin(), table.end());
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (!(table[i].first > table[i - 1].first)) {
      throw std::invalid_argument("tabulated schedule: duplicate time " +
                                  std::to_string(table[i].first));
    }
  }
  if (table.front().first > 0.0 || table.back().first < 1.0) {
    throw std::invalid_argument("tabulated schedule must cover [0, 1]");
  }
  auto shared = std::make_shared<const std::vector<std::pair<double, double>>>(std::move(table));
  auto rate = [shared](double t) {
    const auto& rows = *shared;
    auto hi = std::upper_bound(rows.begin(), rows.end(), t,
                               [](double v, const auto& row) { return v < row.first; });
    if (hi == rows.begin()) return rows.front().second;
    if (hi == rows.end()) return rows.back().second;
    auto lo = hi - 1;
    const double w = (t - lo->first) / (hi->first - lo->first);
    return lo->second + w * (hi->second - lo->second);
  };
  return custom(std::move(name), std::move(rate));
}

Schedule Schedule::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open schedule file " + path);
  std::vector<std::pair<double, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double t = 0.0, a = 0.0;
    if (!(fields >> t >> a)) {
      if (rows.empty()) continue;  // header
      throw std::invalid_argument("bad schedule row: " + line);
    }
    rows.emplace_back(t, a);
  }
  return tabulated(path, std::move(rows));
}

Schedule Schedule::shifted(double beta) const {
  Schedule out = *this;
  out.id_ = ScheduleId::Custom;
  std::ostringstream label;
  label << name_ << "+" << beta;
  out.name_ = label.str();
  out.rate_ = [base = rate_, beta](double t) { return base(t) + beta; };
  out.integral_ = [base = integral_, beta](double t) { return base(t) + beta * t; };
  return out;
}

double Schedule::rate(double t) const {
  check_time(t);
  return rate_(t);
}

double Schedule::rate_integral(double t) const {
  check_time(t);
  return integral_(t);
}

double Schedule::sigma(double t) const { return std::exp(rate_integral(t)); }

}  // namespace flowkl
