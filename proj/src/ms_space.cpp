#include "gmsfem/ms_space.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <numeric>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gmsfem {

namespace {

using MatrixLD = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

/// Solves A_II x_I = -A_IB g for each column g of `boundary_values` and
/// returns the full local vectors (boundary rows carry g).
DenseMatrix harmonic_extension(const SparseMatrix& A,
                               std::span<const int> interior,
                               std::span<const int> boundary,
                               const DenseMatrix& boundary_values)
{
  const auto n = A.rows();
  const auto ni = static_cast<Eigen::Index>(interior.size());
  const auto nb = static_cast<Eigen::Index>(boundary.size());

  std::vector<int> interior_pos(static_cast<std::size_t>(n), -1);
  for (Eigen::Index k = 0; k < ni; ++k)
    interior_pos[interior[k]] = static_cast<int>(k);

  DenseMatrix A_IB = DenseMatrix::Zero(ni, nb);
  for (Eigen::Index j = 0; j < nb; ++j)
    for (SparseMatrix::InnerIterator it(A, boundary[j]); it; ++it)
    {
      const int row = interior_pos[it.row()];
      if (row >= 0)
        A_IB(row, j) = it.value();
    }

  const SparseMatrix A_II = principal_submatrix(A, interior);
  Eigen::SimplicialLDLT<SparseMatrix> solver(A_II);
  if (solver.info() != Eigen::Success)
    throw SolverError("harmonic_extension: singular local system", -1.0);

  const DenseMatrix rhs = -(A_IB * boundary_values);
  const DenseMatrix x_interior = solver.solve(rhs);

  DenseMatrix full = DenseMatrix::Zero(n, boundary_values.cols());
  for (Eigen::Index k = 0; k < ni; ++k)
    full.row(interior[k]) = x_interior.row(k);
  for (Eigen::Index j = 0; j < nb; ++j)
    full.row(boundary[j]) = boundary_values.row(j);
  return full;
}

void split_patch(const CellRange& range, std::vector<int>& interior,
                 std::vector<int>& boundary)
{
  const int nx = range.vertices_x();
  const int ny = range.vertices_y();
  for (int ly = 0; ly < ny; ++ly)
    for (int lx = 0; lx < nx; ++lx)
    {
      const int local = ly * nx + lx;
      if (lx == 0 || ly == 0 || lx == nx - 1 || ly == ny - 1)
        boundary.push_back(local);
      else
        interior.push_back(local);
    }
}

DenseMatrix symmetrized(const DenseMatrix& M)
{
  return 0.5 * (M + M.transpose());
}

/// Cyclic Jacobi on a symmetric matrix. On return `a` is diagonal to working
/// precision and the result holds the accumulated rotations.
MatrixLD jacobi_eigenvectors(MatrixLD& a)
{
  const auto n = a.rows();
  MatrixLD v = MatrixLD::Identity(n, n);
  const long double tol = 4.0L * std::numeric_limits<long double>::epsilon();
  for (int sweep = 0; sweep < 60; ++sweep)
  {
    bool rotated = false;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q)
      {
        const long double apq = a(q, p);
        if (std::abs(apq) <= tol * std::sqrt(std::abs(a(p, p) * a(q, q))))
          continue;
        rotated = true;
        const long double theta = (a(q, q) - a(p, p)) / (2.0L * apq);
        const long double t = (theta >= 0.0L ? 1.0L : -1.0L) /
                              (std::abs(theta) + std::sqrt(theta * theta + 1.0L));
        const long double c = 1.0L / std::sqrt(t * t + 1.0L);
        const long double s = t * c;
        const long double app = a(p, p);
        const long double aqq = a(q, q);
        for (Eigen::Index k = 0; k < n; ++k)
        {
          const long double x = a(k, p);
          const long double y = a(k, q);
          a(k, p) = c * x - s * y;
          a(k, q) = s * x + c * y;
        }
        a.row(p) = a.col(p).transpose();
        a.row(q) = a.col(q).transpose();
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0L;
        for (Eigen::Index k = 0; k < n; ++k)
        {
          const long double x = v(k, p);
          const long double y = v(k, q);
          v(k, p) = c * x - s * y;
          v(k, q) = s * x + c * y;
        }
      }
    if (!rotated)
      return v;
  }
  throw SolverError("jacobi_eigenvectors: no convergence after 60 sweeps", 0.0);
}

} // namespace

PartitionOfUnity compute_partition_of_unity(const GridHierarchy& grid,
                                            const CoefficientField& field)
{
  const int nc = grid.nc();
  const int r = grid.r();
  PartitionOfUnity pu;
  pu.chi.assign(grid.num_interior_coarse_vertices(),
                Vector::Zero(static_cast<Eigen::Index>(grid.num_fine_vertices())));

  for (int ey = 0; ey < nc; ++ey)
    for (int ex = 0; ex < nc; ++ex)
    {
      const CellRange cells = grid.coarse_element_cells(ex, ey);
      std::vector<int> interior, boundary;
      split_patch(cells, interior, boundary);

      // corners (ax, ay) in {0,1}^2 that are interior coarse vertices
      std::vector<std::array<int, 3>> corners;  // ax, ay, vertex id
      for (int ay = 0; ay <= 1; ++ay)
        for (int ax = 0; ax <= 1; ++ax)
        {
          const int I = ex + ax;
          const int J = ey + ay;
          if (I >= 1 && I <= nc - 1 && J >= 1 && J <= nc - 1)
            corners.push_back({ax, ay, grid.interior_vertex_id(I, J)});
        }
      if (corners.empty())
        continue;

      const int nx = cells.vertices_x();
      DenseMatrix traces(static_cast<Eigen::Index>(boundary.size()),
                         static_cast<Eigen::Index>(corners.size()));
      for (std::size_t j = 0; j < boundary.size(); ++j)
      {
        const double sx = static_cast<double>(boundary[j] % nx) / r;
        const double sy = static_cast<double>(boundary[j] / nx) / r;
        for (std::size_t c = 0; c < corners.size(); ++c)
        {
          const double wx = corners[c][0] ? sx : 1.0 - sx;
          const double wy = corners[c][1] ? sy : 1.0 - sy;
          traces(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = wx * wy;
        }
      }

      const SparseMatrix A = assemble_patch_stiffness(grid, field, cells);
      const DenseMatrix local = harmonic_extension(A, interior, boundary, traces);

      for (std::size_t c = 0; c < corners.size(); ++c)
      {
        Vector& chi = pu.chi[corners[c][2]];
        for (int ly = 0; ly <= r; ++ly)
          for (int lx = 0; lx <= r; ++lx)
            chi[grid.range_vertex(cells, lx, ly)] =
              local(ly * nx + lx, static_cast<Eigen::Index>(c));
      }
    }
  return pu;
}

CoefficientField compute_kappa_tilde(const GridHierarchy& grid,
                                     const CoefficientField& field,
                                     const PartitionOfUnity& pu)
{
  const int nc = grid.nc();
  const int r = grid.r();
  const int nv = grid.vertices_per_side();
  const double H = grid.H();
  const double h = grid.h();

  CellField result(grid.nf(), 0.0);
  for (int cy = 0; cy < grid.nf(); ++cy)
    for (int cx = 0; cx < grid.nf(); ++cx)
    {
      const int ex = cx / r;
      const int ey = cy / r;
      const int v00 = grid.fine_vertex(cx, cy);
      double energy = 0.0;
      for (int J = ey; J <= ey + 1; ++J)
        for (int I = ex; I <= ex + 1; ++I)
        {
          if (I < 1 || I > nc - 1 || J < 1 || J > nc - 1)
            continue;
          const Vector& chi = pu.chi[grid.interior_vertex_id(I, J)];
          const double a = chi[v00];
          const double b = chi[v00 + 1];
          const double c = chi[v00 + nv];
          const double d = chi[v00 + nv + 1];
          const double gx = ((b - a) + (d - c)) / (2.0 * h);
          const double gy = ((c - a) + (d - b)) / (2.0 * h);
          energy += gx * gx + gy * gy;
        }
      result(cx, cy) = field(cx, cy) * H * H * energy;
    }
  return CoefficientField(std::move(result));
}

DenseMatrix compute_snapshots(const GridHierarchy& grid,
                              const CoefficientField& field,
                              const CoarseNeighborhood& neigh)
{
  const SparseMatrix A = assemble_patch_stiffness(grid, field, neigh.cells);
  const auto nb = static_cast<Eigen::Index>(neigh.local_boundary.size());
  return harmonic_extension(A, neigh.local_interior, neigh.local_boundary,
                            DenseMatrix::Identity(nb, nb));
}

NeighborhoodSpectrum local_spectral_decomposition(
  const CoarseNeighborhood& neigh, const SparseMatrix& local_stiffness,
  const SparseMatrix& local_mass, const DenseMatrix& snapshots)
{
  NeighborhoodSpectrum spec;
  spec.vertex_id = neigh.vertex_id;
  spec.snapshots = snapshots;
  spec.stiffness = symmetrized(snapshots.transpose() * (local_stiffness * snapshots));
  spec.mass = symmetrized(snapshots.transpose() * (local_mass * snapshots));

  const auto L = spec.mass.rows();
  DenseMatrix mass = spec.mass;
  const double smin =
    Eigen::SelfAdjointEigenSolver<DenseMatrix>(mass, Eigen::EigenvaluesOnly)
      .eigenvalues()(0);
  const double floor = 1e-12 * mass.trace() / static_cast<double>(L);
  if (smin < floor)
  {
    mass.diagonal().array() += floor;
    spec.jitter = floor;
  }

  // long double throughout: at high contrast lambda_max / lambda_2 reaches
  // 1e13 and a double tridiagonal QR loses the small end of the spectrum
  const MatrixLD A = spec.stiffness.cast<long double>();
  const Eigen::LLT<MatrixLD> llt(mass.cast<long double>());
  if (llt.info() != Eigen::Success)
  {
    std::ostringstream msg;
    msg << "local_spectral_decomposition: neighborhood " << neigh.vertex_id
        << " mass matrix not positive definite (smallest eigenvalue " << smin
        << ")";
    throw SolverError(msg.str(), smin);
  }
  const auto lower = llt.matrixL();
  MatrixLD C = lower.solve(lower.solve(A).transpose());
  C = (0.5L * (C + C.transpose())).eval();

  // start from a double eigenbasis and finish with Jacobi rotations
  const Eigen::SelfAdjointEigenSolver<DenseMatrix> start(C.cast<double>());
  const Eigen::HouseholderQR<MatrixLD> qr(start.eigenvectors().cast<long double>());
  const MatrixLD Q = qr.householderQ();
  MatrixLD D = Q.transpose() * C * Q;
  D = (0.5L * (D + D.transpose())).eval();
  MatrixLD V = Q * jacobi_eigenvectors(D);
  const MatrixLD X = lower.transpose().solve(V);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(L));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return D(a, a) < D(b, b); });
  spec.eigenvalues.resize(L);
  spec.eigenvectors.resize(L, L);
  for (Eigen::Index k = 0; k < L; ++k)
  {
    spec.eigenvalues[k] = static_cast<double>(D(order[k], order[k]));
    spec.eigenvectors.col(k) = X.col(order[k]).cast<double>();
  }
  // fix the sign: largest-magnitude entry positive
  for (Eigen::Index k = 0; k < L; ++k)
  {
    Eigen::Index arg = 0;
    spec.eigenvectors.col(k).cwiseAbs().maxCoeff(&arg);
    if (spec.eigenvectors(arg, k) < 0.0)
      spec.eigenvectors.col(k) *= -1.0;
  }
  return spec;
}

int independent_prefix(const DenseMatrix& basis, const SparseMatrix& local_stiffness,
                       double tolerance)
{
  const DenseMatrix energy = symmetrized(basis.transpose() * (local_stiffness * basis));
  const auto n = energy.rows();
  Eigen::Index nonzero = 0;
  while (nonzero < n && energy(nonzero, nonzero) > 0.0)
    ++nonzero;
  const Vector scale = energy.diagonal().head(nonzero).cwiseSqrt().cwiseInverse();
  const DenseMatrix gram =
    scale.asDiagonal() * energy.topLeftCorner(nonzero, nonzero) * scale.asDiagonal();

  // the smallest eigenvalue of a leading block cannot grow with its size
  auto independent = [&](Eigen::Index l) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(gram.topLeftCorner(l, l), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0) >= tolerance;
  };
  Eigen::Index good = 0;
  Eigen::Index bad = nonzero + 1;
  while (bad - good > 1)
  {
    const Eigen::Index mid = (good + bad) / 2;
    (independent(mid) ? good : bad) = mid;
  }
  return static_cast<int>(good);
}

OfflineData::OfflineData(GridHierarchy grid_, CoefficientField field_)
  : grid(grid_)
  , field(std::move(field_))
{
  if (field.n() != grid.nf())
    throw std::invalid_argument("OfflineData: coefficient field has " +
                                std::to_string(field.n()) +
                                " cells per side, grid needs " +
                                std::to_string(grid.nf()));
  stiffness = assemble_stiffness(grid, field);
  dirichlet = grid.boundary_vertices();
  neighborhoods = all_neighborhoods(grid);
  pu = compute_partition_of_unity(grid, field);
  chi_min = chi_max = 0.0;
  for (const Vector& chi : pu.chi)
  {
    chi_min = std::min(chi_min, chi.minCoeff());
    chi_max = std::max(chi_max, chi.maxCoeff());
  }
  kappa_tilde = compute_kappa_tilde(grid, field, pu);

  spectra.reserve(neighborhoods.size());
  local_basis.reserve(neighborhoods.size());
  for (const auto& neigh : neighborhoods)
  {
    const SparseMatrix A = assemble_patch_stiffness(grid, field, neigh.cells);
    const SparseMatrix S = assemble_patch_mass(grid, kappa_tilde.cells(), neigh.cells);
    const DenseMatrix snapshots = compute_snapshots(grid, field, neigh);
    spectra.push_back(local_spectral_decomposition(neigh, A, S, snapshots));

    const Vector& chi = pu.chi[neigh.vertex_id];
    Vector chi_local(static_cast<Eigen::Index>(neigh.fine_vertices_all.size()));
    for (std::size_t p = 0; p < neigh.fine_vertices_all.size(); ++p)
      chi_local[static_cast<Eigen::Index>(p)] = chi[neigh.fine_vertices_all[p]];
    local_basis.push_back(chi_local.asDiagonal() *
                          (snapshots * spectra.back().eigenvectors));
    usable.push_back(independent_prefix(local_basis.back(), A));
  }
}

std::shared_ptr<const OfflineData> build_offline(const GridHierarchy& grid,
                                                 const CoefficientField& field)
{
  return std::make_shared<const OfflineData>(grid, field);
}

OfflineSpace::OfflineSpace(std::shared_ptr<const OfflineData> data,
                           std::vector<int> counts)
  : data_(std::move(data))
  , counts_(std::move(counts))
{
  if (!data_)
    throw std::invalid_argument("OfflineSpace: null offline data");
  if (static_cast<int>(counts_.size()) != data_->num_neighborhoods())
    throw std::invalid_argument("OfflineSpace: expected " +
                                std::to_string(data_->num_neighborhoods()) +
                                " counts, got " + std::to_string(counts_.size()));
  offsets_.assign(counts_.size() + 1, 0);
  for (std::size_t i = 0; i < counts_.size(); ++i)
  {
    if (counts_[i] < 1 || counts_[i] > data_->max_count(static_cast<int>(i)))
      throw std::invalid_argument("OfflineSpace: count " +
                                  std::to_string(counts_[i]) +
                                  " out of range for neighborhood " +
                                  std::to_string(i));
    offsets_[i + 1] = offsets_[i] + counts_[i];
  }
}

Vector OfflineSpace::basis_function(int i, int k) const
{
  const auto& neigh = data_->neighborhoods[i];
  Vector v = Vector::Zero(static_cast<Eigen::Index>(data_->grid.num_fine_vertices()));
  const auto& local = data_->local_basis[i];
  for (std::size_t p = 0; p < neigh.fine_vertices_all.size(); ++p)
    v[neigh.fine_vertices_all[p]] = local(static_cast<Eigen::Index>(p), k);
  return v;
}

SparseMatrix OfflineSpace::basis_matrix() const
{
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < num_neighborhoods(); ++i)
  {
    const auto& neigh = data_->neighborhoods[i];
    const auto& local = data_->local_basis[i];
    for (int k = 0; k < counts_[i]; ++k)
      for (int p : neigh.local_interior)
        triplets.emplace_back(neigh.fine_vertices_all[p], offsets_[i] + k,
                              local(p, k));
  }
  SparseMatrix R(static_cast<Eigen::Index>(data_->grid.num_fine_vertices()),
                 total_dofs());
  R.setFromTriplets(triplets.begin(), triplets.end());
  R.makeCompressed();
  return R;
}

Vector OfflineSpace::expand(int i, const Eigen::Ref<const Vector>& coefficients) const
{
  const auto& neigh = data_->neighborhoods[i];
  const auto& local = data_->local_basis[i];
  const Vector values = local.leftCols(coefficients.size()) * coefficients;
  Vector v = Vector::Zero(static_cast<Eigen::Index>(data_->grid.num_fine_vertices()));
  for (std::size_t p = 0; p < neigh.fine_vertices_all.size(); ++p)
    v[neigh.fine_vertices_all[p]] = values[static_cast<Eigen::Index>(p)];
  return v;
}

OfflineSpace build_basis(std::shared_ptr<const OfflineData> data,
                         std::vector<int> counts)
{
  return OfflineSpace(std::move(data), std::move(counts));
}

OfflineSpace build_uniform_basis(std::shared_ptr<const OfflineData> data, int count)
{
  const int n = data->num_neighborhoods();
  return OfflineSpace(std::move(data), std::vector<int>(n, count));
}

EnrichResult enrich(const OfflineSpace& space, std::span<const int> marked, int s)
{
  if (s < 1)
    throw std::invalid_argument("enrich: s must be >= 1");
  std::vector<int> counts = space.counts();
  std::vector<int> saturated;
  for (int i : marked)
  {
    const int cap = space.data().max_count(i);
    if (counts.at(i) + s > cap)
      saturated.push_back(i);
    counts[i] = std::min(counts[i] + s, cap);
  }
  return {OfflineSpace(space.data_ptr(), std::move(counts)), std::move(saturated)};
}

OfflineSpace widen(const OfflineSpace& space, int m)
{
  if (m < 0)
    throw std::invalid_argument("widen: m must be >= 0");
  std::vector<int> counts = space.counts();
  for (std::size_t i = 0; i < counts.size(); ++i)
    counts[i] = std::min(counts[i] + m, space.data().max_count(static_cast<int>(i)));
  return OfflineSpace(space.data_ptr(), std::move(counts));
}

void write_eigenvalues_csv(const OfflineData& data, std::ostream& out)
{
  out << "vertex_id,k,lambda\n";
  const auto old_precision = out.precision(17);
  for (const auto& spec : data.spectra)
    for (int k = 0; k < spec.size(); ++k)
      out << spec.vertex_id << ',' << k + 1 << ',' << spec.eigenvalues[k] << '\n';
  out.precision(old_precision);
}

} // namespace gmsfem
