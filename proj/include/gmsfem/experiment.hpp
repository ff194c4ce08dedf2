#pragma once

#include "gmsfem/adapt.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gmsfem {

enum class FieldKind
{
  channel,
  inclusions
};

std::optional<FieldKind> parse_field_kind(std::string_view name);

/// Seeded high-contrast raster: background 1, features equal to `contrast`.
/// `inclusions` scatters short bars and blocks; `channel` adds to the same
/// inclusions a 4-connected band running from the left edge to the right edge
/// between the lower-left and upper-right corners.
CoefficientField generate_field(FieldKind kind, double contrast, int nf,
                                std::uint64_t seed);

/// Text format: first line nf, then nf rows of nf values, row 0 at y = 0.
CoefficientField read_field(const std::filesystem::path& path);
CoefficientField parse_field(std::istream& in);
void write_field(const CoefficientField& field, const std::filesystem::path& path);
void write_field(const CoefficientField& field, std::ostream& out);

/// Axis-aligned rectangle [x0, x1] x [y0, y1] in unit-square coordinates.
struct Box
{
  double x0 = 0.0;
  double x1 = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;

  double area() const { return (x1 - x0) * (y1 - y0); }
  void validate() const;
};

/// Indicator of the box: 1 on fine cells whose midpoint lies inside.
CellField box_density(const GridHierarchy& grid, const Box& box, double value = 1.0);

struct ExperimentConfig
{
  int nc = 10;
  int r = 10;
  /// "channel", "inclusions" or "file:PATH".
  std::string field = "channel";
  double contrast = 1e4;
  Box inflow{0.1, 0.2, 0.8, 0.9};    // K1, source +1
  Box outflow{0.8, 0.9, 0.1, 0.2};   // K2, source -1
  Box goal{0.8, 0.9, 0.1, 0.2};      // g(v) = integral over this box
  bool goal_average = false;         // divide g by the box area
  std::vector<Strategy> strategies{Strategy::standard, Strategy::goal_h1,
                                   Strategy::goal_dwr};
  MarkingConfig marking;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  bool dump_indicators = false;
  bool dump_eigenvalues = false;

  void validate() const;
};

/// Applies `key = value` lines (blank lines and '#' comments ignored).
void apply_config_text(ExperimentConfig& cfg, std::istream& in);
void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);
/// Applies one setting; keys match the CLI flag names without dashes.
void apply_setting(ExperimentConfig& cfg, const std::string& key,
                   const std::string& value);

CoefficientField make_field(const ExperimentConfig& cfg);
CellField source_density(const GridHierarchy& grid, const ExperimentConfig& cfg);
CellField goal_density(const GridHierarchy& grid, const ExperimentConfig& cfg);

struct ExperimentResult
{
  std::vector<AdaptTrace> traces;
  double offline_seconds = 0.0;
  double chi_min = 0.0;
  double chi_max = 0.0;
};

/// Builds the offline data and fine reference once, runs every requested
/// strategy, and writes trace_<strategy>.csv and comparison.csv into out_dir.
/// A summary table goes to `log`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// Runs without touching the file system.
ExperimentResult run_strategies(const ExperimentConfig& cfg,
                                const AdaptObserver& observer = {});

inline constexpr const char* trace_header =
  "strategy,iteration,dofs,energy_error,goal_error,sum_eta_sq,marked_count,"
  "theta,s,m_enrich,contrast";
inline constexpr const char* comparison_header =
  "strategy,iteration,dofs,energy_error,goal_error,sum_eta_sq,marked_count";

void write_trace_csv(const AdaptTrace& trace, double contrast, std::ostream& out);
void write_comparison_csv(std::span<const AdaptTrace> traces, std::ostream& out);

/// Dofs at which the goal error first drops to `target`, interpolating
/// log10(goal error) linearly in dofs between iterations.
std::optional<double> dofs_to_reach_goal(const AdaptTrace& trace, double target);

/// log10-linear interpolation of the energy error at a dof count inside the
/// trace's range.
double energy_error_at(const AdaptTrace& trace, double dofs);

} // namespace gmsfem
