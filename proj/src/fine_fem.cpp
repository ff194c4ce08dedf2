#include "gmsfem/fine_fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>

namespace gmsfem {

namespace {

void check_size(const GridHierarchy& grid, int n, const char* what)
{
  if (n != grid.nf())
  {
    std::ostringstream msg;
    msg << what << ": field has " << n << " cells per side, grid has "
        << grid.nf();
    throw std::invalid_argument(msg.str());
  }
}

template <typename CellValue>
SparseMatrix assemble_patch(const CellRange& range, const Eigen::Matrix4d& reference,
                            double scale, CellValue cell_value)
{
  const int nx = range.vertices_x();
  const auto n = static_cast<Eigen::Index>(range.num_vertices());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(16 * static_cast<std::size_t>(range.width()) * range.height());
  for (int ly = 0; ly < range.height(); ++ly)
    for (int lx = 0; lx < range.width(); ++lx)
    {
      const double c = scale * cell_value(range.x0 + lx, range.y0 + ly);
      const int base = ly * nx + lx;
      const int dofs[4] = {base, base + 1, base + nx, base + nx + 1};
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          triplets.emplace_back(dofs[a], dofs[b], c * reference(a, b));
    }
  SparseMatrix M(n, n);
  M.setFromTriplets(triplets.begin(), triplets.end());
  M.makeCompressed();
  return M;
}

} // namespace

CoefficientField::CoefficientField(CellField values)
  : cells_(std::move(values))
{
  if (cells_.n <= 0 ||
      cells_.values.size() != static_cast<std::size_t>(cells_.n) * cells_.n)
    throw std::invalid_argument("CoefficientField: inconsistent size");
  for (std::size_t k = 0; k < cells_.values.size(); ++k)
  {
    const double v = cells_.values[k];
    if (!std::isfinite(v) || v <= 0.0)
    {
      std::ostringstream msg;
      msg << "CoefficientField: non-positive or non-finite value " << v
          << " at row " << k / cells_.n << ", col " << k % cells_.n;
      throw std::invalid_argument(msg.str());
    }
  }
}

CoefficientField::CoefficientField(int n, double value)
  : CoefficientField(CellField(n, value))
{}

CoefficientField CoefficientField::scaled(double factor) const
{
  CellField copy = cells_;
  for (auto& v : copy.values)
    v *= factor;
  return CoefficientField(std::move(copy));
}

const Eigen::Matrix4d& q1_reference_stiffness()
{
  static const Eigen::Matrix4d K = [] {
    Eigen::Matrix4d m;
    m << 4, -1, -1, -2,
        -1, 4, -2, -1,
        -1, -2, 4, -1,
        -2, -1, -1, 4;
    return Eigen::Matrix4d(m / 6.0);
  }();
  return K;
}

const Eigen::Matrix4d& q1_reference_mass()
{
  static const Eigen::Matrix4d M = [] {
    Eigen::Matrix4d m;
    m << 4, 2, 2, 1,
         2, 4, 1, 2,
         2, 1, 4, 2,
         1, 2, 2, 4;
    return Eigen::Matrix4d(m / 36.0);
  }();
  return M;
}

SparseMatrix assemble_patch_stiffness(const GridHierarchy& grid,
                                      const CoefficientField& field,
                                      const CellRange& range)
{
  check_size(grid, field.n(), "assemble_stiffness");
  return assemble_patch(range, q1_reference_stiffness(), 1.0,
                        [&](int cx, int cy) { return field(cx, cy); });
}

SparseMatrix assemble_patch_mass(const GridHierarchy& grid,
                                 const CellField& weight,
                                 const CellRange& range)
{
  check_size(grid, weight.n, "assemble_weighted_mass");
  const double h = grid.h();
  return assemble_patch(range, q1_reference_mass(), h * h,
                        [&](int cx, int cy) { return weight(cx, cy); });
}

SparseMatrix assemble_stiffness(const GridHierarchy& grid,
                                const CoefficientField& field)
{
  return assemble_patch_stiffness(grid, field, grid.all_cells());
}

SparseMatrix assemble_weighted_mass(const GridHierarchy& grid,
                                    const CellField& weight)
{
  return assemble_patch_mass(grid, weight, grid.all_cells());
}

SparseMatrix assemble_weighted_mass(const GridHierarchy& grid,
                                    const CoefficientField& weight)
{
  return assemble_weighted_mass(grid, weight.cells());
}

Vector assemble_load(const GridHierarchy& grid, const CellField& density)
{
  check_size(grid, density.n, "assemble_load");
  const int nv = grid.vertices_per_side();
  const double quarter = 0.25 * grid.h() * grid.h();
  Vector b = Vector::Zero(static_cast<Eigen::Index>(grid.num_fine_vertices()));
  for (int cy = 0; cy < grid.nf(); ++cy)
    for (int cx = 0; cx < grid.nf(); ++cx)
    {
      const double d = density(cx, cy);
      if (d == 0.0)
        continue;
      const int base = grid.fine_vertex(cx, cy);
      b[base] += d * quarter;
      b[base + 1] += d * quarter;
      b[base + nv] += d * quarter;
      b[base + nv + 1] += d * quarter;
    }
  return b;
}

SparseMatrix principal_submatrix(const SparseMatrix& A,
                                 std::span<const int> indices)
{
  std::vector<int> position(static_cast<std::size_t>(A.rows()), -1);
  for (std::size_t k = 0; k < indices.size(); ++k)
    position[indices[k]] = static_cast<int>(k);

  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t k = 0; k < indices.size(); ++k)
  {
    const int col = indices[k];
    for (SparseMatrix::InnerIterator it(A, col); it; ++it)
    {
      const int row = position[it.row()];
      if (row >= 0)
        triplets.emplace_back(row, static_cast<int>(k), it.value());
    }
  }
  const auto n = static_cast<Eigen::Index>(indices.size());
  SparseMatrix sub(n, n);
  sub.setFromTriplets(triplets.begin(), triplets.end());
  sub.makeCompressed();
  return sub;
}

DirichletSolver::DirichletSolver(const SparseMatrix& A,
                                 std::span<const int> fixed, double rtol)
  : rtol_(rtol)
{
  std::vector<char> is_fixed(static_cast<std::size_t>(A.rows()), 0);
  for (int f : fixed)
    is_fixed.at(f) = 1;
  for (int v = 0; v < A.rows(); ++v)
    if (!is_fixed[v])
      free_of_.push_back(v);

  reduced_ = principal_submatrix(A, free_of_);
  factor_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>(reduced_);
  if (factor_->info() != Eigen::Success)
    throw SolverError("DirichletSolver: factorization failed", -1.0);
}

Vector DirichletSolver::solve(const Vector& b) const
{
  const auto n = static_cast<Eigen::Index>(free_of_.size());
  Vector rhs(n);
  for (Eigen::Index k = 0; k < n; ++k)
    rhs[k] = b[free_of_[k]];

  Vector u = Vector::Zero(b.size());
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0)
    return u;

  // accept the rounding floor of evaluating A x in double precision
  const SparseMatrix magnitude = reduced_.cwiseAbs();
  auto tolerance = [&](const Vector& x) {
    const double noise =
      2.0 * std::numeric_limits<double>::epsilon() * (magnitude * x.cwiseAbs()).norm();
    return std::max(rtol_ * rhs_norm, noise);
  };

  Vector x = factor_->solve(rhs);
  double residual = (rhs - reduced_ * x).norm();
  for (int step = 0; step < 3 && residual > tolerance(x); ++step)
  {
    x += factor_->solve(Vector(rhs - reduced_ * x));
    residual = (rhs - reduced_ * x).norm();
  }
  if (!(residual <= tolerance(x)))
  {
    char msg[128];
    std::snprintf(msg, sizeof(msg),
                  "DirichletSolver: relative residual %.3e exceeds %.3e",
                  residual / rhs_norm, tolerance(x) / rhs_norm);
    throw SolverError(msg, residual / rhs_norm);
  }

  for (Eigen::Index k = 0; k < n; ++k)
    u[free_of_[k]] = x[k];
  return u;
}

Vector solve_dirichlet(const SparseMatrix& A, const Vector& b,
                       std::span<const int> fixed, double rtol)
{
  return DirichletSolver(A, fixed, rtol).solve(b);
}

SparseMatrix local_operator(const CoarseNeighborhood& neigh,
                            const SparseMatrix& A, LocalKind kind)
{
  return principal_submatrix(A, kind == LocalKind::all
                                    ? neigh.fine_vertices_all
                                    : neigh.fine_vertices_interior);
}

double energy_norm(const SparseMatrix& A, const Vector& v)
{
  const double e = v.dot(A * v);
  return std::sqrt(std::max(e, 0.0));
}

double functional(const GridHierarchy& grid, const CellField& density,
                  const Vector& v)
{
  return assemble_load(grid, density).dot(v);
}

} // namespace gmsfem
