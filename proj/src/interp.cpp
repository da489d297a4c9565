#include "vstar/interp.hpp"

#include <algorithm>
#include <cmath>

#include "vstar/error.hpp"

namespace vstar {

HermiteTable::HermiteTable(std::vector<double> x, std::vector<double> y, std::vector<double> dy)
    : x_(std::move(x)), y_(std::move(y)), dy_(std::move(dy)) {
  if (x_.size() < 2 || y_.size() != x_.size() || dy_.size() != x_.size())
    throw Error(Errc::invalid_argument, "hermite table needs >= 2 matching samples");
  for (std::size_t i = 1; i < x_.size(); ++i)
    if (!(x_[i] > x_[i - 1])) throw Error(Errc::monotonicity_violation, "abscissae not increasing");
}

std::size_t HermiteTable::locate(double t) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), t);
  std::size_t k = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  return std::min(k, x_.size() - 2);
}

double HermiteTable::operator()(double t) const {
  std::size_t k = locate(t);
  double h = x_[k + 1] - x_[k];
  double u = (t - x_[k]) / h;
  double u2 = u * u, u3 = u2 * u;
  double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
  double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
  return h00 * y_[k] + h10 * h * dy_[k] + h01 * y_[k + 1] + h11 * h * dy_[k + 1];
}

double HermiteTable::deriv(double t) const {
  std::size_t k = locate(t);
  double h = x_[k + 1] - x_[k];
  double u = (t - x_[k]) / h;
  double u2 = u * u;
  double d00 = 6 * u2 - 6 * u, d10 = 3 * u2 - 4 * u + 1;
  double d01 = -6 * u2 + 6 * u, d11 = 3 * u2 - 2 * u;
  return (d00 * y_[k] + d01 * y_[k + 1]) / h + d10 * dy_[k] + d11 * dy_[k + 1];
}

HermiteTable monotone_cubic(std::vector<double> x, std::vector<double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error(Errc::invalid_argument, "monotone cubic needs >= 2 samples");
  std::vector<double> delta(n - 1), m(n);
  for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
  m[0] = delta[0];
  m[n - 1] = delta[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i)
    m[i] = delta[i - 1] * delta[i] <= 0 ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (delta[i] == 0.0) {
      m[i] = m[i + 1] = 0.0;
      continue;
    }
    double a = m[i] / delta[i], b = m[i + 1] / delta[i];
    double s = a * a + b * b;
    if (s > 9.0) {
      double tau = 3.0 / std::sqrt(s);
      m[i] = tau * a * delta[i];
      m[i + 1] = tau * b * delta[i];
    }
  }
  return HermiteTable(std::move(x), std::move(y), std::move(m));
}

}  // namespace vstar
