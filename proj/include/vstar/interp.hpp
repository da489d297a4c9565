#pragma once

#include <cstddef>
#include <vector>

namespace vstar {

// Piecewise cubic Hermite interpolant on strictly increasing abscissae.
// Outside the table the end cubics are extended.
class HermiteTable {
 public:
  HermiteTable() = default;
  HermiteTable(std::vector<double> x, std::vector<double> y, std::vector<double> dy);

  double operator()(double t) const;
  double deriv(double t) const;
  std::size_t size() const { return x_.size(); }
  double front() const { return x_.front(); }
  double back() const { return x_.back(); }
  const std::vector<double>& xs() const { return x_; }
  const std::vector<double>& ys() const { return y_; }
  const std::vector<double>& slopes() const { return dy_; }

 private:
  std::size_t locate(double t) const;
  std::vector<double> x_, y_, dy_;
};

// Fritsch-Carlson slopes; the interpolant is monotone wherever the data are.
HermiteTable monotone_cubic(std::vector<double> x, std::vector<double> y);

}  // namespace vstar
