#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace vstar {

class StationaryStar;

enum class InnerBoundary {
  core_element,  // element [0, z_min] with phi(0) = phi'(0) = 0
  cutoff,        // phi(z_min) = 0, nothing inside z_min
};

struct GridOptions {
  int n_elements = 128;
  double grading_inner = 1.0;  // beta-map exponent at z_min (1 = uniform)
  double grading_outer = 1.0;  // beta-map exponent at R
  double z_min_frac = 1e-3;
  int quad_points = 8;
  InnerBoundary inner = InnerBoundary::core_element;
};

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// C1 cubic Hermite elements; dof 2i = value at node i, 2i+1 = slope at node i.
struct RadialGrid {
  std::vector<double> nodes;  // includes 0 when inner == core_element
  double z_min = 0.0;
  double radius = 0.0;
  int quad_points = 8;
  InnerBoundary inner = InnerBoundary::core_element;

  std::size_t elements() const { return nodes.size() - 1; }
  std::size_t dofs() const { return 2 * nodes.size(); }
  // number of leading dofs removed by the essential condition
  std::size_t fixed_dofs() const { return inner == InnerBoundary::core_element ? 2 : 1; }
  std::size_t free_dofs() const { return dofs() - fixed_dofs(); }
  std::size_t element_of(double z) const;
  double max_width() const;
};

RadialGrid build_grid(const StationaryStar& star, int n_elements, std::pair<double, double> grading,
                      const GridOptions& opts = {});
RadialGrid build_grid(const StationaryStar& star, const GridOptions& opts);
// plain grid on (0, R] without a star, used by the embedding checks
RadialGrid make_grid(double radius, int n_elements, std::pair<double, double> grading, const GridOptions& opts = {});

// Hermite shape functions on an element of width h at local u in [0,1].
struct Shape {
  double v[4], d[4], dd[4];
};
Shape hermite_shape(double u, double h);

// Function in the full Hermite space.
struct FeFunction {
  const RadialGrid* grid = nullptr;
  Vec coeffs;  // full length
  double value(double z) const;
  double deriv(double z) const;
  double deriv2(double z) const;
};

Vec interpolate(const RadialGrid& grid, const std::function<double(double)>& f,
                const std::function<double(double)>& df);
Vec expand(const RadialGrid& grid, const Vec& free);
Vec restrict_free(const RadialGrid& grid, const Vec& full);

struct QuadraticForms {
  RadialGrid grid;
  double gamma = 0, eps = 0, delta = 0;
  double s = 0;  // recorded only; E(.; s) = E0 + s E1
  // full-space matrices
  SpMat E0_full, E1_full, J_full, G_full, Q_full;
  // essential condition applied
  SpMat E0, E1, J, G;

  SpMat energy(double s_value) const { return E0 + s_value * E1; }
  static double form(const SpMat& A, const Vec& x) { return x.dot(A * x); }
};

QuadraticForms assemble_forms(const StationaryStar& star, const RadialGrid& grid, double s = 0.0);

// Upper triangle as "i j value" lines.
void write_triplets(const SpMat& A, const std::string& path);

struct HardyResult {
  double lhs = 0, rhs = 0, sup_value = 0, sup_bound = 0;
  bool holds = false;
};

// lhs = int u^2 / z^(tau+2), rhs = 4/(1+tau)^2 int u'^2 / z^tau over (0, R],
// plus sup |u| z^(-(tau+1)/2) <= (1+tau)^(-1/2) (int u'^2/z^tau)^(1/2).
HardyResult hardy_verify(const std::function<double(double)>& u, const std::function<double(double)>& du, double tau,
                         const RadialGrid& grid, double tol = 1e-10);

}  // namespace vstar
