#pragma once

#include "gmsfem/fine_fem.hpp"
#include "gmsfem/mesh.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace gmsfem {

using DenseMatrix = Eigen::MatrixXd;

/// Multiscale partition of unity: one global fine function per interior
/// coarse vertex, supported on the closure of its neighborhood.
struct PartitionOfUnity
{
  std::vector<Vector> chi;
};

/// Elementwise kappa-harmonic chi_i with bilinear hat traces on coarse edges.
PartitionOfUnity compute_partition_of_unity(const GridHierarchy& grid,
                                            const CoefficientField& field);

/// kappa_tilde = kappa * sum_i H^2 |grad chi_i|^2, gradients taken at the
/// fine cell midpoints.
CoefficientField compute_kappa_tilde(const GridHierarchy& grid,
                                     const CoefficientField& field,
                                     const PartitionOfUnity& pu);

/// kappa-harmonic extensions of unit boundary data on the neighborhood.
/// Rows follow neigh.fine_vertices_all, column j belongs to
/// neigh.fine_vertices_boundary[j].
DenseMatrix compute_snapshots(const GridHierarchy& grid,
                              const CoefficientField& field,
                              const CoarseNeighborhood& neigh);

/// Largest l such that the first l columns, scaled to unit energy, have a
/// Gram matrix with smallest eigenvalue >= tolerance.
int independent_prefix(const DenseMatrix& basis, const SparseMatrix& local_stiffness,
                       double tolerance = 1e-12);

struct NeighborhoodSpectrum
{
  int vertex_id = -1;
  DenseMatrix snapshots;     // R_snap, local rows
  DenseMatrix stiffness;     // A_off = R^T A_omega R
  DenseMatrix mass;          // S_off = R^T S_omega R
  Vector eigenvalues;        // ascending
  DenseMatrix eigenvectors;  // columns, S_off-orthonormal
  double jitter = 0.0;       // diagonal shift added to S_off, 0 if none

  int size() const { return static_cast<int>(eigenvalues.size()); }
};

/// All eigenpairs of A_off v = lambda S_off v on the snapshot space.
/// `local_stiffness` / `local_mass` are integrals over the neighborhood's
/// cells in the patch-local vertex order.
NeighborhoodSpectrum local_spectral_decomposition(
  const CoarseNeighborhood& neigh, const SparseMatrix& local_stiffness,
  const SparseMatrix& local_mass, const DenseMatrix& snapshots);

/// Everything computed once per coefficient field.
struct OfflineData
{
  OfflineData(GridHierarchy grid_, CoefficientField field_);

  GridHierarchy grid;
  CoefficientField field;
  SparseMatrix stiffness;        // global A
  std::vector<int> dirichlet;    // fine vertices on the outer boundary
  std::vector<CoarseNeighborhood> neighborhoods;
  PartitionOfUnity pu;
  double chi_min = 0.0;          // range of every chi_i; [0, 1] up to solver
  double chi_max = 0.0;          // tolerance when the maximum principle holds
  CoefficientField kappa_tilde;
  std::vector<NeighborhoodSpectrum> spectra;
  /// Candidate multiscale functions chi_i * (R_snap Psi_k), all k, local rows.
  std::vector<DenseMatrix> local_basis;
  /// Length of the leading run of local_basis columns that stays numerically
  /// independent in energy.
  std::vector<int> usable;

  int num_neighborhoods() const { return static_cast<int>(neighborhoods.size()); }
  int max_count(int i) const { return usable[i]; }
};

std::shared_ptr<const OfflineData> build_offline(const GridHierarchy& grid,
                                                 const CoefficientField& field);

/// A selection of the leading l_i eigenfunctions per neighborhood.
/// Coarse dofs are numbered neighborhood-major: (i, k) -> offset(i) + k.
class OfflineSpace
{
public:
  OfflineSpace(std::shared_ptr<const OfflineData> data, std::vector<int> counts);

  const OfflineData& data() const { return *data_; }
  const std::shared_ptr<const OfflineData>& data_ptr() const { return data_; }
  const std::vector<int>& counts() const { return counts_; }
  int count(int i) const { return counts_[i]; }
  int offset(int i) const { return offsets_[i]; }
  int total_dofs() const { return offsets_.back(); }
  int num_neighborhoods() const { return static_cast<int>(counts_.size()); }
  bool saturated(int i) const { return counts_[i] >= data_->max_count(i); }

  /// Global fine representation of psi_{i,k}.
  Vector basis_function(int i, int k) const;
  /// R: fine dofs x coarse dofs.
  SparseMatrix basis_matrix() const;
  /// Fine function sum_{k < count} c_k psi_{i,k} for a coefficient slice.
  Vector expand(int i, const Eigen::Ref<const Vector>& coefficients) const;

private:
  std::shared_ptr<const OfflineData> data_;
  std::vector<int> counts_;
  std::vector<int> offsets_;
};

OfflineSpace build_basis(std::shared_ptr<const OfflineData> data,
                         std::vector<int> counts);

/// Same count l for every neighborhood.
OfflineSpace build_uniform_basis(std::shared_ptr<const OfflineData> data, int count);

struct EnrichResult
{
  OfflineSpace space;
  /// Marked neighborhoods that could not take all s new functions.
  std::vector<int> saturated;
};

EnrichResult enrich(const OfflineSpace& space, std::span<const int> marked, int s);

/// Space with m extra functions in every neighborhood (capped at L_i).
OfflineSpace widen(const OfflineSpace& space, int m);

/// CSV rows (vertex_id,k,lambda) for eigenvalue decay diagnostics.
void write_eigenvalues_csv(const OfflineData& data, std::ostream& out);

} // namespace gmsfem
