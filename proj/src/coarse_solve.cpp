#include "gmsfem/coarse_solve.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

namespace gmsfem {

namespace {

[[noreturn]] void report_indefinite(const SparseMatrix& stiffness)
{
  // look for the most nearly parallel pair of columns in the energy inner product
  const Vector diag = stiffness.diagonal();
  double worst = 0.0;
  Eigen::Index a = -1, b = -1;
  for (Eigen::Index col = 0; col < stiffness.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(stiffness, col); it; ++it)
    {
      if (it.row() >= col)
        continue;
      const double denom = std::sqrt(diag[it.row()] * diag[col]);
      const double cosine = denom > 0.0 ? std::abs(it.value()) / denom : 1.0;
      if (cosine > worst)
      {
        worst = cosine;
        a = it.row();
        b = col;
      }
    }
  std::ostringstream msg;
  msg << "coarse stiffness is not positive definite";
  if (a >= 0)
    msg << "; most nearly dependent columns " << a << " and " << b
        << " (energy cosine " << worst << ")";
  throw SolverError(msg.str(), -1.0);
}

template <typename Solver, typename Matrix>
Vector refined_solve(const Solver& solver, const Matrix& A, double a_norm,
                     const Vector& b)
{
  Vector c = solver.solve(b);
  const double b_norm = b.norm();
  auto backward_error = [&](const Vector& x) {
    const double denom = a_norm * x.norm() + b_norm;
    return denom > 0.0 ? (b - A * x).norm() / denom : 0.0;
  };
  double err = backward_error(c);
  for (int step = 0; step < 3 && err > coarse_tolerance; ++step)
  {
    c += solver.solve(Vector(b - A * c));
    err = backward_error(c);
  }
  if (!(err <= coarse_tolerance))
  {
    std::ostringstream msg;
    msg << "coarse solve: backward error " << err << " exceeds " << coarse_tolerance;
    throw SolverError(msg.str(), err);
  }
  return c;
}

} // namespace

std::string_view to_string(SpaceTag tag)
{
  switch (tag)
  {
    case SpaceTag::primal: return "primal";
    case SpaceTag::dual: return "dual";
    case SpaceTag::dual_enriched: return "dual_enriched";
  }
  return "unknown";
}

CoarseSystem assemble_coarse(const OfflineSpace& space, const SparseMatrix& A,
                             const Vector& b)
{
  CoarseSystem system;
  system.basis = space.basis_matrix();
  const SparseMatrix AR = A * system.basis;
  SparseMatrix Ac = SparseMatrix(system.basis.transpose()) * AR;
  SparseMatrix AcT = Ac.transpose();
  system.stiffness = 0.5 * (Ac + AcT);
  system.stiffness.makeCompressed();
  system.load = project_load(system, b);
  return system;
}

Vector project_load(const CoarseSystem& system, const Vector& b)
{
  return system.basis.transpose() * b;
}

Vector solve_coarse_system(const CoarseSystem& system, const Vector& load)
{
  // symmetric Jacobi scaling; basis energies span the eigenvalue range
  const Vector diag = system.stiffness.diagonal();
  if ((diag.array() <= 0.0).any())
    report_indefinite(system.stiffness);
  const Vector scale = diag.cwiseSqrt().cwiseInverse();
  SparseMatrix scaled = scale.asDiagonal() * system.stiffness * scale.asDiagonal();
  scaled.makeCompressed();
  const Vector scaled_load = scale.cwiseProduct(load);
  const double a_norm = scaled.norm();
  // the scaled matrix has unit diagonal; smaller Cholesky pivots mean the
  // basis is numerically dependent
  const double min_pivot = 1e-7;

  Vector y;
  if (system.size() <= dense_coarse_limit)
  {
    const DenseMatrix dense(scaled);
    Eigen::LLT<DenseMatrix> llt(dense);
    if (llt.info() != Eigen::Success ||
        llt.matrixLLT().diagonal().minCoeff() < min_pivot)
      report_indefinite(system.stiffness);
    y = refined_solve(llt, dense, a_norm, scaled_load);
  }
  else
  {
    Eigen::SimplicialLLT<SparseMatrix> llt(scaled);
    if (llt.info() != Eigen::Success ||
        SparseMatrix(llt.matrixL()).diagonal().minCoeff() < min_pivot)
      report_indefinite(system.stiffness);
    y = refined_solve(llt, scaled, a_norm, scaled_load);
  }
  return scale.cwiseProduct(y);
}

namespace {

CoarseSolution solve_in(const OfflineSpace& space, const SparseMatrix& A,
                        const Vector& load, SpaceTag tag)
{
  const CoarseSystem system = assemble_coarse(space, A, load);
  CoarseSolution sol{space, {}, {}, tag};
  sol.coefficients = solve_coarse_system(system, system.load);
  sol.fine = system.basis * sol.coefficients;
  return sol;
}

} // namespace

CoarseSolution solve_primal(const OfflineSpace& space, const SparseMatrix& A,
                            const Vector& f_load)
{
  return solve_in(space, A, f_load, SpaceTag::primal);
}

CoarseSolution solve_dual(const OfflineSpace& space, const SparseMatrix& A,
                          const Vector& g_load, SpaceTag tag)
{
  // symmetric form: the dual system matrix is the primal one
  return solve_in(space, A, g_load, tag);
}

Vector neighborhood_component(const CoarseSolution& sol, int i)
{
  return sol.space.expand(i, sol.slice(i));
}

Vector truncate(const CoarseSolution& sol, int i, int count)
{
  if (count < 0 || count > sol.space.count(i))
    throw std::invalid_argument("truncate: count " + std::to_string(count) +
                                " outside [0, " +
                                std::to_string(sol.space.count(i)) + "]");
  return sol.space.expand(i, sol.slice(i).head(count));
}

} // namespace gmsfem
