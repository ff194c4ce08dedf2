#include "gmsfem/indicators.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gmsfem {

std::string_view to_string(Strategy strategy)
{
  switch (strategy)
  {
    case Strategy::standard: return "standard";
    case Strategy::goal_h1: return "goal_h1";
    case Strategy::goal_dwr: return "goal_dwr";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name)
{
  if (name == "standard") return Strategy::standard;
  if (name == "goal_h1") return Strategy::goal_h1;
  if (name == "goal_dwr") return Strategy::goal_dwr;
  return std::nullopt;
}

std::string_view to_string(NormMode mode)
{
  return mode == NormMode::exact ? "exact" : "snapshot";
}

std::optional<NormMode> parse_norm_mode(std::string_view name)
{
  if (name == "exact") return NormMode::exact;
  if (name == "snapshot") return NormMode::snapshot;
  return std::nullopt;
}

Vector global_residual(const SparseMatrix& A, const Vector& b, const Vector& v,
                       std::span<const int> dirichlet)
{
  Vector r = b - A * v;
  for (int d : dirichlet)
    r[d] = 0.0;
  return r;
}

LocalResidual local_residual(const Vector& residual,
                             const CoarseNeighborhood& neigh, ResidualKind kind)
{
  LocalResidual res;
  res.vertex_id = neigh.vertex_id;
  res.kind = kind;
  res.rho.resize(static_cast<Eigen::Index>(neigh.fine_vertices_interior.size()));
  for (std::size_t k = 0; k < neigh.fine_vertices_interior.size(); ++k)
    res.rho[static_cast<Eigen::Index>(k)] = residual[neigh.fine_vertices_interior[k]];
  return res;
}

LocalResidual local_residual(const SparseMatrix& A, const Vector& b,
                             const Vector& v, const CoarseNeighborhood& neigh,
                             ResidualKind kind)
{
  // interior rows of a neighborhood never touch the Dirichlet boundary
  return local_residual(Vector(b - A * v), neigh, kind);
}

ResidualNorms::ResidualNorms(std::shared_ptr<const OfflineData> data)
  : data_(std::move(data))
{
  local_.resize(data_->neighborhoods.size());
  for (std::size_t i = 0; i < local_.size(); ++i)
  {
    const auto& neigh = data_->neighborhoods[i];
    Local& loc = local_[i];
    loc.stiffness = local_operator(neigh, data_->stiffness, LocalKind::zero_trace);
    loc.exact = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>(loc.stiffness);
    if (loc.exact->info() != Eigen::Success)
      throw SolverError("ResidualNorms: zero-trace operator of neighborhood " +
                          std::to_string(i) + " is not definite",
                        -1.0);

    const DenseMatrix& basis = data_->local_basis[i];
    loc.reduced_basis.resize(static_cast<Eigen::Index>(neigh.local_interior.size()),
                             basis.cols());
    for (std::size_t k = 0; k < neigh.local_interior.size(); ++k)
      loc.reduced_basis.row(static_cast<Eigen::Index>(k)) = basis.row(neigh.local_interior[k]);

    DenseMatrix gram = loc.reduced_basis.transpose() * (loc.stiffness * loc.reduced_basis);
    gram = 0.5 * (gram + gram.transpose());
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(gram);
    const Vector& values = eig.eigenvalues();
    const double cutoff = 1e-12 * values.cwiseAbs().maxCoeff();
    Vector inv = Vector::Zero(values.size());
    for (Eigen::Index k = 0; k < values.size(); ++k)
      if (values[k] > cutoff)
        inv[k] = 1.0 / values[k];
    loc.reduced_inverse = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  }
}

double ResidualNorms::dual_norm(const LocalResidual& res, NormMode mode) const
{
  const Local& loc = local_.at(res.vertex_id);
  if (res.rho.size() != loc.stiffness.rows())
    throw std::invalid_argument("dual_norm: residual size mismatch");
  double value = 0.0;
  if (mode == NormMode::exact)
  {
    const Vector w = loc.exact->solve(res.rho);
    value = res.rho.dot(w);
  }
  else
  {
    const Vector projected = loc.reduced_basis.transpose() * res.rho;
    value = projected.dot(loc.reduced_inverse * projected);
  }
  return std::sqrt(std::max(value, 0.0));
}

std::vector<double> ResidualNorms::all(const Vector& residual, NormMode mode) const
{
  std::vector<double> norms(local_.size());
  for (std::size_t i = 0; i < local_.size(); ++i)
    norms[i] = dual_norm(local_residual(residual, data_->neighborhoods[i]), mode);
  return norms;
}

double IndicatorReport::sum() const
{
  return std::accumulate(eta_sq.begin(), eta_sq.end(), 0.0);
}

namespace {

IndicatorReport weighted_report(Strategy strategy, const OfflineSpace& space,
                                std::span<const double> first,
                                std::span<const double> second)
{
  const int n = space.num_neighborhoods();
  if (static_cast<int>(first.size()) != n || static_cast<int>(second.size()) != n)
    throw std::invalid_argument("indicator: expected one norm per neighborhood");

  IndicatorReport report;
  report.strategy = strategy;
  report.counts = space.counts();
  report.eta_sq.assign(n, 0.0);
  report.lambda_next.assign(n, 0.0);
  report.saturated.assign(n, 0);
  for (int i = 0; i < n; ++i)
  {
    if (space.saturated(i))
    {
      report.saturated[i] = 1;
      continue;
    }
    const double lambda = space.data().spectra[i].eigenvalues[space.count(i)];
    report.lambda_next[i] = lambda;
    // lambda_{l+1} > 0 in exact arithmetic for l >= 1; keep the weight finite
    const double lambda_max = space.data().spectra[i].eigenvalues.tail(1)(0);
    const double weight = std::max(lambda, 1e-14 * lambda_max);
    report.eta_sq[i] = first[i] * second[i] / weight;
  }
  return report;
}

} // namespace

IndicatorReport eta_standard(const OfflineSpace& space,
                             std::span<const double> primal_norms)
{
  return weighted_report(Strategy::standard, space, primal_norms, primal_norms);
}

IndicatorReport eta_goal_h1(const OfflineSpace& space,
                            std::span<const double> primal_norms,
                            std::span<const double> dual_norms)
{
  return weighted_report(Strategy::goal_h1, space, primal_norms, dual_norms);
}

IndicatorReport eta_dwr(const OfflineSpace& space, const Vector& primal_residual,
                        const CoarseSolution& z_enrich)
{
  const int n = space.num_neighborhoods();
  const OfflineSpace& wide = z_enrich.space;
  if (wide.num_neighborhoods() != n || wide.data_ptr() != space.data_ptr())
    throw std::invalid_argument("eta_dwr: enriched space does not extend the primal space");

  bool any_extra = false;
  bool all_saturated = true;
  for (int i = 0; i < n; ++i)
  {
    if (wide.count(i) < space.count(i))
      throw std::invalid_argument("eta_dwr: enriched space is smaller than the primal space");
    any_extra = any_extra || wide.count(i) > space.count(i);
    all_saturated = all_saturated && space.saturated(i);
  }
  if (!any_extra && !all_saturated)
    throw std::invalid_argument("eta_dwr: enriched dual space adds no functions (m = 0)");

  const OfflineData& data = space.data();
  IndicatorReport report;
  report.strategy = Strategy::goal_dwr;
  report.counts = space.counts();
  report.eta_sq.assign(n, 0.0);
  report.lambda_next.assign(n, 0.0);
  report.saturated.assign(n, 0);
  report.dwr_signed.assign(n, 0.0);

  Vector truncated = Vector::Zero(z_enrich.fine.size());
  for (int i = 0; i < n; ++i)
  {
    const int l = space.count(i);
    const int extra = wide.count(i) - l;
    if (space.saturated(i))
      report.saturated[i] = 1;
    else
      report.lambda_next[i] = data.spectra[i].eigenvalues[l];

    truncated += truncate(z_enrich, i, l);
    if (extra == 0)
      continue;

    const auto& neigh = data.neighborhoods[i];
    const Vector local = data.local_basis[i].middleCols(l, extra) *
                         z_enrich.slice(i).segment(l, extra);
    double value = 0.0;
    for (int p : neigh.local_interior)
      value += primal_residual[neigh.fine_vertices_all[p]] * local[p];
    report.dwr_signed[i] = value;
    report.eta_sq[i] = std::abs(value);
  }
  report.dwr_global = primal_residual.dot(z_enrich.fine - truncated);
  return report;
}

} // namespace gmsfem
