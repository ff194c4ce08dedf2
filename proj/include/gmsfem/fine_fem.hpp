#pragma once

#include "gmsfem/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace gmsfem {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// Per-fine-cell scalar values, row-major over an n x n cell raster with
/// row 0 at y = 0. Used for source densities and goal densities, which may
/// take any sign.
struct CellField
{
  int n = 0;
  std::vector<double> values;

  CellField() = default;
  CellField(int n_, double value)
    : n(n_)
    , values(static_cast<std::size_t>(n_) * n_, value)
  {}

  double operator()(int cx, int cy) const { return values[cy * n + cx]; }
  double& operator()(int cx, int cy) { return values[cy * n + cx]; }
};

/// Strictly positive, finite per-cell coefficient (kappa).
class CoefficientField
{
public:
  CoefficientField() = default;
  explicit CoefficientField(CellField values);
  CoefficientField(int n, double value);

  int n() const { return cells_.n; }
  double operator()(int cx, int cy) const { return cells_(cx, cy); }
  const std::vector<double>& values() const { return cells_.values; }
  const CellField& cells() const { return cells_; }

  CoefficientField scaled(double factor) const;

private:
  CellField cells_;
};

/// Q1 reference element matrices on a square, local vertex order
/// (0,0), (1,0), (0,1), (1,1).
const Eigen::Matrix4d& q1_reference_stiffness();
/// Reference mass for a unit square cell (scale by h^2).
const Eigen::Matrix4d& q1_reference_mass();

/// Stiffness integral of kappa grad(phi_i).grad(phi_j) over the cells of
/// `range`, numbered by the range's local row-major vertex order.
SparseMatrix assemble_patch_stiffness(const GridHierarchy& grid,
                                      const CoefficientField& field,
                                      const CellRange& range);
SparseMatrix assemble_patch_mass(const GridHierarchy& grid,
                                 const CellField& weight,
                                 const CellRange& range);

SparseMatrix assemble_stiffness(const GridHierarchy& grid,
                                const CoefficientField& field);
SparseMatrix assemble_weighted_mass(const GridHierarchy& grid,
                                    const CellField& weight);
SparseMatrix assemble_weighted_mass(const GridHierarchy& grid,
                                    const CoefficientField& weight);

/// b_i = sum over cells of density * integral of phi_i.
Vector assemble_load(const GridHierarchy& grid, const CellField& density);

class SolverError : public std::runtime_error
{
public:
  SolverError(const std::string& what, double residual)
    : std::runtime_error(what)
    , residual_(residual)
  {}
  double residual() const { return residual_; }

private:
  double residual_;
};

/// Symmetric Dirichlet solver: eliminates `fixed` rows/columns, factors the
/// reduced system once and serves any number of right-hand sides.
class DirichletSolver
{
public:
  static constexpr double default_rtol = 1e-10;

  DirichletSolver(const SparseMatrix& A, std::span<const int> fixed,
                  double rtol = default_rtol);

  /// Returns u with u = 0 on fixed dofs and ||(A u - b)_free|| <= rtol ||b_free||,
  /// or below 2 eps |||A| |u||| when that rounding floor is larger.
  Vector solve(const Vector& b) const;

  std::size_t size() const { return free_of_.size(); }

private:
  std::vector<int> free_of_;  // reduced index -> global
  SparseMatrix reduced_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> factor_;
  double rtol_;
};

Vector solve_dirichlet(const SparseMatrix& A, const Vector& b,
                       std::span<const int> fixed,
                       double rtol = DirichletSolver::default_rtol);

enum class LocalKind
{
  all,
  zero_trace
};

/// Principal submatrix of A on the neighborhood's fine vertices (all) or on
/// its interior fine vertices (zero_trace).
SparseMatrix local_operator(const CoarseNeighborhood& neigh,
                            const SparseMatrix& A, LocalKind kind);

/// Principal submatrix of A on the given global indices.
SparseMatrix principal_submatrix(const SparseMatrix& A,
                                 std::span<const int> indices);

double energy_norm(const SparseMatrix& A, const Vector& v);

/// Integral of density * v over the domain.
double functional(const GridHierarchy& grid, const CellField& density,
                  const Vector& v);

} // namespace gmsfem
