#pragma once

#include "gmsfem/ms_space.hpp"

#include <string_view>

namespace gmsfem {

/// Galerkin projection of the fine problem onto an offline space.
struct CoarseSystem
{
  SparseMatrix basis;      // R, fine dofs x coarse dofs
  SparseMatrix stiffness;  // R^T A R
  Vector load;             // R^T b

  Eigen::Index size() const { return stiffness.rows(); }
};

CoarseSystem assemble_coarse(const OfflineSpace& space, const SparseMatrix& A,
                             const Vector& b);

/// Replaces the load of an already assembled system (R^T b).
Vector project_load(const CoarseSystem& system, const Vector& b);

enum class SpaceTag
{
  primal,
  dual,
  dual_enriched
};

std::string_view to_string(SpaceTag tag);

struct CoarseSolution
{
  OfflineSpace space;
  Vector coefficients;
  Vector fine;  // R c
  SpaceTag tag = SpaceTag::primal;

  /// Coefficients c_{i,1..l_i} of neighborhood i.
  Eigen::VectorBlock<const Vector> slice(int i) const
  {
    return coefficients.segment(space.offset(i), space.count(i));
  }
};

/// Dense Cholesky up to this many coarse dofs, sparse Cholesky above.
inline constexpr Eigen::Index dense_coarse_limit = 2000;
/// Backward-error bound ||b - A c|| / (||A|| ||c|| + ||b||) for coarse solves.
inline constexpr double coarse_tolerance = 1e-12;

/// Solves stiffness * c = load; throws SolverError on loss of definiteness.
Vector solve_coarse_system(const CoarseSystem& system, const Vector& load);

CoarseSolution solve_primal(const OfflineSpace& space, const SparseMatrix& A,
                            const Vector& f_load);

/// Dual problem a(v, z) = g(v) in `space` (the primal space, or a widened one
/// for SpaceTag::dual_enriched). `g_load` is assemble_load of the goal density.
CoarseSolution solve_dual(const OfflineSpace& space, const SparseMatrix& A,
                          const Vector& g_load,
                          SpaceTag tag = SpaceTag::dual);

/// P_i: the part of sol spanned by psi_{i,k}, k <= count(i) of its own space.
Vector neighborhood_component(const CoarseSolution& sol, int i);

/// pi P_i: the same part truncated to the first `count` coefficients.
Vector truncate(const CoarseSolution& sol, int i, int count);

} // namespace gmsfem
