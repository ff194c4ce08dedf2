#include "gmsfem/indicators.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace gmsfem;

namespace {

struct State
{
  OfflineSpace space;
  CoarseSolution u;
  CoarseSolution z;
  Vector ru;
  Vector rz;
};

State solve_state(const test::Problem& p, std::vector<int> counts)
{
  const SparseMatrix& A = p.data->stiffness;
  OfflineSpace space = build_basis(p.data, std::move(counts));
  auto u = solve_primal(space, A, p.problem.f_load);
  auto z = solve_dual(space, A, p.problem.g_load);
  Vector ru = global_residual(A, p.problem.f_load, u.fine, p.data->dirichlet);
  Vector rz = global_residual(A, p.problem.g_load, z.fine, p.data->dirichlet);
  return {space, u, z, ru, rz};
}

} // namespace

TEST_CASE("names round trip")
{
  for (auto s : {Strategy::standard, Strategy::goal_h1, Strategy::goal_dwr})
    CHECK(parse_strategy(to_string(s)) == s);
  CHECK_FALSE(parse_strategy("dwr").has_value());
  CHECK(parse_norm_mode("snapshot") == NormMode::snapshot);
  CHECK_FALSE(parse_norm_mode("fast").has_value());
}

TEST_CASE("residuals of the fine reference vanish")
{
  const auto& p = test::channel_problem();
  const ResidualNorms norms(p.data);
  const SparseMatrix& A = p.data->stiffness;
  const double f_norm = energy_norm(A, p.problem.u_reference);
  const double g_norm = energy_norm(A, p.problem.z_reference);
  const Vector ru = global_residual(A, p.problem.f_load, p.problem.u_reference, p.data->dirichlet);
  const Vector rz = global_residual(A, p.problem.g_load, p.problem.z_reference, p.data->dirichlet);
  for (double n : norms.all(ru))
    CHECK(n <= 1e-8 * f_norm);
  for (double n : norms.all(rz))
    CHECK(n <= 1e-8 * g_norm);

  const auto zero = global_residual(A, Vector::Zero(A.rows()), Vector::Zero(A.rows()), p.data->dirichlet);
  for (double n : norms.all(zero, NormMode::snapshot))
    CHECK(n == 0.0);
}

TEST_CASE("dual norm is homogeneous and lower-bounded by the snapshot mode")
{
  const auto& p = test::channel_problem();
  const ResidualNorms norms(p.data);
  const auto st = solve_state(p, std::vector<int>(81, 1));
  for (const auto& neigh : p.data->neighborhoods)
  {
    const LocalResidual res = local_residual(st.ru, neigh);
    const double exact = norms.dual_norm(res, NormMode::exact);
    const double snap = norms.dual_norm(res, NormMode::snapshot);
    CHECK(snap <= exact + 1e-10);
    LocalResidual scaled = res;
    scaled.rho *= -3.0;
    CHECK(norms.dual_norm(scaled) == doctest::Approx(3.0 * exact).epsilon(1e-12));
  }
}

TEST_CASE("exact dual norm against a dense oracle")
{
  const auto& p = test::channel_problem();
  const ResidualNorms norms(p.data);
  const auto st = solve_state(p, std::vector<int>(81, 1));
  for (int i : {4, 40})
  {
    const auto& neigh = p.data->neighborhoods[i];
    const LocalResidual res = local_residual(st.ru, neigh);
    const DenseMatrix Aloc(local_operator(neigh, p.data->stiffness, LocalKind::zero_trace));
    const Vector w = Aloc.ldlt().solve(res.rho);
    CHECK(norms.dual_norm(res) == doctest::Approx(std::sqrt(res.rho.dot(w))).epsilon(1e-8));
  }
}

TEST_CASE("local residual depends only on neighborhood data")
{
  const auto& p = test::channel_problem();
  const auto st = solve_state(p, std::vector<int>(81, 2));
  const auto& grid = p.data->grid;
  for (int i : {0, 36, 80})
  {
    const auto& neigh = p.data->neighborhoods[i];
    const SparseMatrix Ap = assemble_patch_stiffness(grid, p.data->field, neigh.cells);
    Vector u_loc(static_cast<Eigen::Index>(neigh.fine_vertices_all.size()));
    Vector b_loc(u_loc.size());
    for (std::size_t k = 0; k < neigh.fine_vertices_all.size(); ++k)
    {
      u_loc[k] = st.u.fine[neigh.fine_vertices_all[k]];
      b_loc[k] = p.problem.f_load[neigh.fine_vertices_all[k]];
    }
    const Vector r_loc = b_loc - Ap * u_loc;
    const LocalResidual res = local_residual(st.ru, neigh);
    const LocalResidual direct = local_residual(p.data->stiffness, p.problem.f_load, st.u.fine, neigh);
    for (std::size_t k = 0; k < neigh.local_interior.size(); ++k)
    {
      CHECK(res.rho[k] == doctest::Approx(r_loc[neigh.local_interior[k]]).epsilon(1e-10).scale(1e-12));
      CHECK(res.rho[k] == direct.rho[k]);
    }
  }
}

TEST_CASE("standard and goal indicators")
{
  const auto& p = test::channel_problem();
  const ResidualNorms norms(p.data);
  std::vector<int> counts(81, 1);
  counts[20] = p.data->max_count(20);
  counts[21] = 5;
  const auto st = solve_state(p, counts);
  const auto nu = norms.all(st.ru);
  const auto nz = norms.all(st.rz);

  const auto standard = eta_standard(st.space, nu);
  const auto goal = eta_goal_h1(st.space, nu, nz);
  for (int i = 0; i < 81; ++i)
  {
    CHECK(standard.eta_sq[i] >= 0.0);
    CHECK(goal.eta_sq[i] >= 0.0);
    if (i == 20)
    {
      CHECK(standard.saturated[i] == 1);
      CHECK(standard.eta_sq[i] == 0.0);
      CHECK(goal.eta_sq[i] == 0.0);
      continue;
    }
    const double lambda = p.data->spectra[i].eigenvalues[counts[i]];
    CHECK(standard.lambda_next[i] == lambda);
    CHECK(standard.eta_sq[i] == doctest::Approx(nu[i] * nu[i] / lambda).epsilon(1e-14));
    CHECK(goal.eta_sq[i] == doctest::Approx(nu[i] * nz[i] / lambda).epsilon(1e-14));
  }
  // product is symmetric in its two residuals
  const auto swapped = eta_goal_h1(st.space, nz, nu);
  CHECK(swapped.eta_sq == goal.eta_sq);

  // g = f makes the goal indicator the standard one
  const auto same = eta_goal_h1(st.space, nu, nu);
  for (int i = 0; i < 81; ++i)
    CHECK(same.eta_sq[i] == doctest::Approx(standard.eta_sq[i]).epsilon(1e-14));
  CHECK(standard.sum() > 0.0);
}

TEST_CASE("goal indicator with g equal to f through the dual solve")
{
  const auto& p = test::channel_problem();
  const ResidualNorms norms(p.data);
  const SparseMatrix& A = p.data->stiffness;
  const auto space = build_uniform_basis(p.data, 2);
  const auto u = solve_primal(space, A, p.problem.f_load);
  const auto z = solve_dual(space, A, p.problem.f_load);
  const auto nu = norms.all(global_residual(A, p.problem.f_load, u.fine, p.data->dirichlet));
  const auto nz = norms.all(global_residual(A, p.problem.f_load, z.fine, p.data->dirichlet));
  CHECK(eta_goal_h1(space, nu, nz).eta_sq == eta_standard(space, nu).eta_sq);
}

TEST_CASE("DWR indicator")
{
  const auto& p = test::channel_problem();
  const SparseMatrix& A = p.data->stiffness;
  std::vector<int> counts(81, 1);
  counts[30] = p.data->max_count(30) - 1;
  counts[31] = p.data->max_count(31);
  const auto st = solve_state(p, counts);
  const auto wide = widen(st.space, 2);
  const auto z = solve_dual(wide, A, p.problem.g_load, SpaceTag::dual_enriched);
  const auto report = eta_dwr(st.space, st.ru, z);

  double sum = 0.0;
  for (int i = 0; i < 81; ++i)
  {
    const Vector diff = neighborhood_component(z, i) - truncate(z, i, counts[i]);
    CHECK(report.dwr_signed[i] == doctest::Approx(st.ru.dot(diff)).epsilon(1e-10).scale(1e-20));
    CHECK(report.eta_sq[i] == std::abs(report.dwr_signed[i]));
    sum += report.dwr_signed[i];
  }
  CHECK(report.saturated[31] == 1);
  CHECK(report.eta_sq[31] == 0.0);
  CHECK(report.saturated[30] == 0);
  CHECK(std::abs(sum - report.dwr_global) <= 1e-9 * std::abs(report.dwr_global));

  // fine reference residual: nothing to indicate
  const Vector r0 = global_residual(A, p.problem.f_load, p.problem.u_reference, p.data->dirichlet);
  const auto zero = eta_dwr(st.space, r0, z);
  const double scale = std::abs(report.dwr_global);
  for (double e : zero.eta_sq)
    CHECK(e <= 1e-8 * scale);

  // no weight on the added functions
  CoarseSolution flat = z;
  for (int i = 0; i < 81; ++i)
    flat.coefficients.segment(wide.offset(i) + counts[i], wide.count(i) - counts[i]).setZero();
  for (double e : eta_dwr(st.space, st.ru, flat).eta_sq)
    CHECK(e == 0.0);
}

TEST_CASE("DWR rejects an enriched space without extra functions")
{
  const auto& p = test::channel_problem();
  const auto st = solve_state(p, std::vector<int>(81, 2));
  CHECK_THROWS_AS(eta_dwr(st.space, st.ru, st.z), std::invalid_argument);
  const auto smaller = solve_dual(build_uniform_basis(p.data, 1), p.data->stiffness, p.problem.g_load);
  CHECK_THROWS_AS(eta_dwr(st.space, st.ru, smaller), std::invalid_argument);
}
