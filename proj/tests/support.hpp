#pragma once

#include "gmsfem/experiment.hpp"

#include <Eigen/Dense>
#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace gmsfem::test {

/// Value at (x, y) of the solution of -Lap u = 1 on the unit square with
/// u = 0 on the boundary, from the double sine series over odd m, n.
inline double poisson_series(double x, double y, int terms = 401)
{
  const double pi = std::numbers::pi;
  double sum = 0.0;
  for (int m = 1; m <= terms; m += 2)
    for (int n = 1; n <= terms; n += 2)
      sum += std::sin(m * pi * x) * std::sin(n * pi * y) /
             (static_cast<double>(m) * n * (static_cast<double>(m) * m + static_cast<double>(n) * n));
  return 16.0 / std::pow(pi, 4) * sum;
}

/// Eigenvalues of the pencil (A, S), ascending, in quad precision: Cholesky
/// S = L L^T, then cyclic Jacobi on L^-1 A L^-T. Plain row-major arrays, no
/// library solver involved.
inline Eigen::VectorXd pencil_eigenvalues(const Eigen::MatrixXd& A_in, const Eigen::MatrixXd& S_in)
{
  using Q = __float128;
  const int n = static_cast<int>(A_in.rows());
  auto at = [n](std::vector<Q>& m, int i, int j) -> Q& { return m[static_cast<std::size_t>(i) * n + j]; };
  std::vector<Q> A(n * n), S(n * n), L(n * n, 0), X(n * n), C(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
    {
      at(A, i, j) = A_in(i, j);
      at(S, i, j) = S_in(i, j);
    }
  for (int j = 0; j < n; ++j)
  {
    Q d = at(S, j, j);
    for (int k = 0; k < j; ++k)
      d -= at(L, j, k) * at(L, j, k);
    if (!(d > 0))
      throw std::runtime_error("pencil_eigenvalues: S is not positive definite");
    at(L, j, j) = sqrtq(d);
    for (int i = j + 1; i < n; ++i)
    {
      Q t = at(S, i, j);
      for (int k = 0; k < j; ++k)
        t -= at(L, i, k) * at(L, j, k);
      at(L, i, j) = t / at(L, j, j);
    }
  }
  // X = L^-1 A, then C = L^-1 X^T
  auto forward = [&](std::vector<Q>& out, auto&& rhs) {
    for (int c = 0; c < n; ++c)
      for (int i = 0; i < n; ++i)
      {
        Q t = rhs(i, c);
        for (int k = 0; k < i; ++k)
          t -= at(L, i, k) * at(out, k, c);
        at(out, i, c) = t / at(L, i, i);
      }
  };
  forward(X, [&](int i, int c) { return at(A, i, c); });
  forward(C, [&](int i, int c) { return at(X, c, i); });
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      at(C, i, j) = at(C, j, i) = (at(C, i, j) + at(C, j, i)) / 2;

  const Q tol = 64 * FLT128_EPSILON;
  for (int sweep = 0; sweep < 100; ++sweep)
  {
    bool rotated = false;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q)
      {
        const Q apq = at(C, p, q);
        if (fabsq(apq) <= tol * sqrtq(fabsq(at(C, p, p) * at(C, q, q))))
          continue;
        rotated = true;
        const Q theta = (at(C, q, q) - at(C, p, p)) / (2 * apq);
        const Q t = (theta >= 0 ? 1 : -1) / (fabsq(theta) + sqrtq(theta * theta + 1));
        const Q c = 1 / sqrtq(t * t + 1);
        const Q s = t * c;
        const Q app = at(C, p, p);
        const Q aqq = at(C, q, q);
        for (int k = 0; k < n; ++k)
        {
          const Q x = at(C, p, k);
          const Q y = at(C, q, k);
          at(C, p, k) = at(C, k, p) = c * x - s * y;
          at(C, q, k) = at(C, k, q) = s * x + c * y;
        }
        at(C, p, p) = app - t * apq;
        at(C, q, q) = aqq + t * apq;
        at(C, p, q) = at(C, q, p) = 0;
      }
    if (!rotated)
      break;
  }
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i)
    d[i] = static_cast<double>(at(C, i, i));
  std::sort(d.data(), d.data() + d.size());
  return d;
}

/// Default experiment problem (boxes, field generator) on a given grid.
struct Problem
{
  ExperimentConfig cfg;
  std::shared_ptr<const OfflineData> data;
  AdaptProblem problem;
};

inline Problem make_test_problem(const std::string& field, double contrast, int nc = 10,
                                 int r = 10, std::uint64_t seed = 1)
{
  Problem p;
  p.cfg.field = field;
  p.cfg.contrast = contrast;
  p.cfg.nc = nc;
  p.cfg.r = r;
  p.cfg.seed = seed;
  const GridHierarchy grid = build_grids(nc, r);
  p.data = build_offline(grid, make_field(p.cfg));
  p.problem = make_problem(p.data, source_density(grid, p.cfg), goal_density(grid, p.cfg));
  return p;
}

/// Channel problem at contrast 1e4 on the default grid, built once per binary.
inline const Problem& channel_problem()
{
  static const Problem p = make_test_problem("channel", 1e4);
  return p;
}

} // namespace gmsfem::test
