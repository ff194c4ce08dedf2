#include "gmsfem/adapt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gmsfem {

std::string_view to_string(Marking marking)
{
  return marking == Marking::full_sort ? "full_sort" : "binning";
}

std::optional<Marking> parse_marking(std::string_view name)
{
  if (name == "full_sort") return Marking::full_sort;
  if (name == "binning") return Marking::binning;
  return std::nullopt;
}

void MarkingConfig::validate() const
{
  if (!(theta > 0.0 && theta < 1.0))
    throw std::invalid_argument("MarkingConfig: theta must lie in (0, 1)");
  if (s < 1)
    throw std::invalid_argument("MarkingConfig: s must be >= 1");
  if (max_iterations < 1)
    throw std::invalid_argument("MarkingConfig: max_iterations must be >= 1");
  if (initial_count < 1)
    throw std::invalid_argument("MarkingConfig: initial_count must be >= 1");
  if (m_enrich < 0)
    throw std::invalid_argument("MarkingConfig: m_enrich must be >= 0");
  if (dof_cap < 0 || goal_rtol < 0.0)
    throw std::invalid_argument("MarkingConfig: negative stop criterion");
}

std::vector<int> mark(std::span<const double> eta_sq, double theta, Marking marking)
{
  for (double e : eta_sq)
    if (!std::isfinite(e) || e < 0.0)
      throw std::invalid_argument("mark: indicators must be finite and >= 0");

  const double total = std::accumulate(eta_sq.begin(), eta_sq.end(), 0.0);
  std::vector<int> marked;
  if (total == 0.0)
    return marked;
  const double target = theta * total;
  const int n = static_cast<int>(eta_sq.size());

  if (marking == Marking::full_sort)
  {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return eta_sq[a] > eta_sq[b]; });
    double acc = 0.0;
    for (int i : order)
    {
      marked.push_back(i);
      acc += eta_sq[i];
      if (acc >= target)
        break;
    }
    return marked;
  }

  const double floor = (1.0 - theta) * total / n;
  const double top = *std::max_element(eta_sq.begin(), eta_sq.end());
  // band p holds 2^-(p+1) M <= eta^2 < 2^-p M (band 0 also holds M itself)
  std::vector<std::vector<int>> bands;
  for (int i = 0; i < n; ++i)
  {
    if (eta_sq[i] <= floor)
      continue;
    const int p = std::max(0, static_cast<int>(std::floor(-std::log2(eta_sq[i] / top))));
    int band = p;
    // guard log2 rounding at band edges
    while (band > 0 && eta_sq[i] >= std::ldexp(top, -band))
      --band;
    while (eta_sq[i] < std::ldexp(top, -(band + 1)))
      ++band;
    if (band >= static_cast<int>(bands.size()))
      bands.resize(band + 1);
    bands[band].push_back(i);
  }
  double acc = 0.0;
  for (const auto& band : bands)
    for (int i : band)
    {
      marked.push_back(i);
      acc += eta_sq[i];
      if (acc >= target)
        return marked;
    }
  return marked;
}

std::vector<int> mark(const IndicatorReport& report, const MarkingConfig& cfg)
{
  return mark(report.eta_sq, cfg.theta, cfg.marking);
}

AdaptProblem make_problem(std::shared_ptr<const OfflineData> data,
                          const CellField& source, const CellField& goal)
{
  AdaptProblem problem;
  problem.f_load = assemble_load(data->grid, source);
  problem.g_load = assemble_load(data->grid, goal);
  const DirichletSolver solver(data->stiffness, data->dirichlet);
  problem.u_reference = solver.solve(problem.f_load);
  problem.z_reference = solver.solve(problem.g_load);
  problem.data = std::move(data);
  return problem;
}

namespace {

CoarseSolution solve_system(const OfflineSpace& space, const CoarseSystem& system,
                            const Vector& fine_load, SpaceTag tag)
{
  CoarseSolution sol{space, {}, {}, tag};
  sol.coefficients = solve_coarse_system(system, project_load(system, fine_load));
  sol.fine = system.basis * sol.coefficients;
  return sol;
}

} // namespace

AdaptTrace adapt_loop(const AdaptProblem& problem, Strategy strategy,
                      const MarkingConfig& cfg, const AdaptObserver& observer)
{
  cfg.validate();
  if (strategy == Strategy::goal_dwr && cfg.m_enrich < 1)
    throw std::invalid_argument("adapt_loop: goal_dwr needs m_enrich >= 1");

  const auto& data = problem.data;
  const SparseMatrix& A = data->stiffness;
  const ResidualNorms norms(data);

  AdaptTrace trace;
  trace.strategy = strategy;
  trace.config = cfg;

  std::vector<int> initial(data->num_neighborhoods());
  for (int i = 0; i < data->num_neighborhoods(); ++i)
    initial[i] = std::min(cfg.initial_count, data->max_count(i));
  OfflineSpace space = build_basis(data, initial);

  double initial_goal = -1.0;
  for (int iteration = 1;; ++iteration)
  {
    const auto start = std::chrono::steady_clock::now();
    try
    {
      const CoarseSystem system = assemble_coarse(space, A, problem.f_load);
      const CoarseSolution u = solve_system(space, system, problem.f_load, SpaceTag::primal);
      const Vector residual = global_residual(A, problem.f_load, u.fine, data->dirichlet);

      IndicatorReport report;
      switch (strategy)
      {
        case Strategy::standard:
          report = eta_standard(space, norms.all(residual, cfg.norm_mode));
          break;
        case Strategy::goal_h1:
        {
          const CoarseSolution z = solve_system(space, system, problem.g_load, SpaceTag::dual);
          const Vector dual_residual =
            global_residual(A, problem.g_load, z.fine, data->dirichlet);
          report = eta_goal_h1(space, norms.all(residual, cfg.norm_mode),
                               norms.all(dual_residual, cfg.norm_mode));
          break;
        }
        case Strategy::goal_dwr:
        {
          const OfflineSpace wide = widen(space, cfg.m_enrich);
          const CoarseSolution z =
            solve_dual(wide, A, problem.g_load, SpaceTag::dual_enriched);
          report = eta_dwr(space, residual, z);
          break;
        }
      }
      report.iteration = iteration;
      const std::vector<int> marked = mark(report, cfg);

      const Vector error = problem.u_reference - u.fine;
      TraceRow row;
      row.iteration = iteration;
      row.dofs = space.total_dofs();
      row.energy_error = energy_norm(A, error);
      row.goal_error = std::abs(problem.g_load.dot(error));
      row.sum_eta_sq = report.sum();
      row.marked_count = static_cast<int>(marked.size());
      row.saturated_count = static_cast<int>(
        std::count(report.saturated.begin(), report.saturated.end(), char{1}));
      if (strategy == Strategy::goal_dwr)
      {
        row.dwr_signed_sum =
          std::accumulate(report.dwr_signed.begin(), report.dwr_signed.end(), 0.0);
        row.dwr_global = report.dwr_global;
      }
      row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      trace.rows.push_back(row);
      if (observer)
        observer(report, marked);

      if (initial_goal < 0.0)
        initial_goal = row.goal_error;

      if (marked.empty())
      {
        trace.stop_reason = "no_marked";
        break;
      }
      if (cfg.goal_rtol > 0.0 && row.goal_error <= cfg.goal_rtol * initial_goal)
      {
        trace.stop_reason = "goal_tolerance";
        break;
      }
      if (iteration >= cfg.max_iterations)
      {
        trace.stop_reason = "max_iterations";
        break;
      }
      if (cfg.dof_cap > 0 && space.total_dofs() >= cfg.dof_cap)
      {
        trace.stop_reason = "dof_cap";
        break;
      }
      EnrichResult next = enrich(space, marked, cfg.s);
      if (next.space.total_dofs() == space.total_dofs())
      {
        trace.stop_reason = "saturated";
        break;
      }
      space = std::move(next.space);
    }
    catch (const SolverError& e)
    {
      throw SolverError(std::string(to_string(strategy)) + " iteration " +
                          std::to_string(iteration) + ": " + e.what(),
                        e.residual());
    }
  }
  trace.final_counts = space.counts();
  return trace;
}

} // namespace gmsfem
