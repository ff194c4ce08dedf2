#pragma once

#include "gmsfem/coarse_solve.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace gmsfem {

enum class Strategy
{
  standard,
  goal_h1,
  goal_dwr
};

std::string_view to_string(Strategy strategy);
std::optional<Strategy> parse_strategy(std::string_view name);

enum class ResidualKind
{
  primal,
  dual
};

/// Fine residual b - A v with the Dirichlet rows zeroed.
Vector global_residual(const SparseMatrix& A, const Vector& b, const Vector& v,
                       std::span<const int> dirichlet);

/// rho_j = R_i(phi_j) for the fine basis functions phi_j vanishing on the
/// neighborhood boundary, in neigh.fine_vertices_interior order.
struct LocalResidual
{
  int vertex_id = -1;
  Vector rho;
  ResidualKind kind = ResidualKind::primal;
};

LocalResidual local_residual(const Vector& residual,
                             const CoarseNeighborhood& neigh,
                             ResidualKind kind = ResidualKind::primal);

LocalResidual local_residual(const SparseMatrix& A, const Vector& b,
                             const Vector& v, const CoarseNeighborhood& neigh,
                             ResidualKind kind = ResidualKind::primal);

enum class NormMode
{
  exact,
  snapshot
};

std::string_view to_string(NormMode mode);
std::optional<NormMode> parse_norm_mode(std::string_view name);

/// Evaluates ||R_i||_{V_i*} = sup |R_i(v)| / ||v||_{V_i}. Exact mode solves
/// the zero-trace problem on the neighborhood's fine grid; snapshot mode
/// solves it in span{chi_i * snapshots}, which lower-bounds the exact value.
/// Factorizations are cached per neighborhood.
class ResidualNorms
{
public:
  explicit ResidualNorms(std::shared_ptr<const OfflineData> data);

  double dual_norm(const LocalResidual& res, NormMode mode = NormMode::exact) const;

  /// Norms for every neighborhood from a global residual vector.
  std::vector<double> all(const Vector& residual, NormMode mode = NormMode::exact) const;

private:
  struct Local
  {
    SparseMatrix stiffness;
    std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> exact;
    DenseMatrix reduced_basis;    // interior rows of chi_i * snapshots
    DenseMatrix reduced_inverse;  // pseudo-inverse of the reduced stiffness
  };
  std::shared_ptr<const OfflineData> data_;
  std::vector<Local> local_;
};

struct IndicatorReport
{
  Strategy strategy = Strategy::standard;
  int iteration = 0;
  std::vector<double> eta_sq;
  /// lambda_{l_i+1}; 0 for saturated neighborhoods.
  std::vector<double> lambda_next;
  std::vector<int> counts;
  std::vector<char> saturated;
  /// DWR only: R^u(P_i - pi P_i) before taking absolute values, and the
  /// global R^u(z_enrich - pi z_enrich).
  std::vector<double> dwr_signed;
  double dwr_global = 0.0;

  double sum() const;
};

/// eta_i^2 = ||R_i^u||^2 / lambda_{l_i+1}.
IndicatorReport eta_standard(const OfflineSpace& space,
                             std::span<const double> primal_norms);

/// eta_i^2 = ||R_i^z|| ||R_i^u|| / lambda_{l_i+1}.
IndicatorReport eta_goal_h1(const OfflineSpace& space,
                            std::span<const double> primal_norms,
                            std::span<const double> dual_norms);

/// eta_i^2 = |R^u(P_i z_enrich - pi P_i z_enrich)|; `primal_residual` is the
/// global fine residual of u_ms.
IndicatorReport eta_dwr(const OfflineSpace& space, const Vector& primal_residual,
                        const CoarseSolution& z_enrich);

} // namespace gmsfem
