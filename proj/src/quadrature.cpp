#include "vstar/quadrature.hpp"

#include <algorithm>
#include <boost/math/special_functions/legendre.hpp>

#include "vstar/error.hpp"

namespace vstar {

namespace {

GaussRule make_rule(int n) {
  GaussRule r;
  for (double x : boost::math::legendre_p_zeros<double>(n)) {
    double dp = boost::math::legendre_p_prime(n, x);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes.push_back(x);
    r.weights.push_back(w);
    if (x != 0.0) {
      r.nodes.push_back(-x);
      r.weights.push_back(w);
    }
  }
  std::vector<std::size_t> idx(r.nodes.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return r.nodes[a] < r.nodes[b]; });
  GaussRule s;
  for (auto i : idx) {
    s.nodes.push_back(r.nodes[i]);
    s.weights.push_back(r.weights[i]);
  }
  return s;
}

}  // namespace

const GaussRule& gauss_legendre(int n) {
  static const std::vector<GaussRule> rules = [] {
    std::vector<GaussRule> v(33);
    for (int k = 1; k <= 32; ++k) v[k] = make_rule(k);
    return v;
  }();
  if (n < 1 || n > 32) throw Error(Errc::invalid_argument, "gauss rule order must be in [1, 32]");
  return rules[n];
}

}  // namespace vstar
