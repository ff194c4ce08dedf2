#pragma once

#include "gmsfem/indicators.hpp"

#include <functional>
#include <string>

namespace gmsfem {

enum class Marking
{
  full_sort,
  binning
};

std::string_view to_string(Marking marking);
std::optional<Marking> parse_marking(std::string_view name);

struct MarkingConfig
{
  double theta = 0.5;
  Marking marking = Marking::full_sort;
  int s = 1;                  // functions added per marked neighborhood
  int max_iterations = 30;
  int dof_cap = 0;            // 0: no cap
  double goal_rtol = 0.0;     // stop once goal error <= goal_rtol * initial; 0: off
  int initial_count = 1;      // l_i at the first iteration
  int m_enrich = 2;           // extra functions per neighborhood for the DWR dual
  NormMode norm_mode = NormMode::exact;

  void validate() const;
};

/// Doerfler marking: the smallest set whose eta^2 sum reaches theta * total.
/// full_sort ranks by descending eta^2, ties by ascending vertex id.
/// binning scans dyadic bands [2^-(p+1) M, 2^-p M) of the indicators above
/// (1 - theta) * total / N, ascending vertex id within a band.
/// Returns vertex ids in marking order; empty when every eta^2 is zero.
std::vector<int> mark(std::span<const double> eta_sq, double theta,
                      Marking marking = Marking::full_sort);

std::vector<int> mark(const IndicatorReport& report, const MarkingConfig& cfg);

/// Offline data plus the reference fine solutions used only for reporting
/// errors and for the goal-tolerance stop.
struct AdaptProblem
{
  std::shared_ptr<const OfflineData> data;
  Vector f_load;
  Vector g_load;
  Vector u_reference;
  Vector z_reference;
};

/// Solves the fine reference primal and dual problems once.
AdaptProblem make_problem(std::shared_ptr<const OfflineData> data,
                          const CellField& source, const CellField& goal);

struct TraceRow
{
  int iteration = 0;
  int dofs = 0;
  double energy_error = 0.0;
  double goal_error = 0.0;
  double sum_eta_sq = 0.0;
  int marked_count = 0;
  int saturated_count = 0;
  double dwr_signed_sum = 0.0;  // goal_dwr only
  double dwr_global = 0.0;      // goal_dwr only
  double wall_seconds = 0.0;
};

struct AdaptTrace
{
  Strategy strategy = Strategy::standard;
  MarkingConfig config;
  std::vector<TraceRow> rows;
  std::vector<int> final_counts;
  std::string stop_reason;
};

/// Per-iteration hook (e.g. indicator dumps).
using AdaptObserver = std::function<void(const IndicatorReport&,
                                         const std::vector<int>& marked)>;

AdaptTrace adapt_loop(const AdaptProblem& problem, Strategy strategy,
                      const MarkingConfig& cfg, const AdaptObserver& observer = {});

} // namespace gmsfem
