#include "gmsfem/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gmsfem {

namespace {

std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s)
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value)
{
  std::size_t used = 0;
  double v = 0.0;
  try
  {
    v = std::stod(value, &used);
  }
  catch (const std::exception&)
  {
    used = 0;
  }
  if (used == 0 || used != value.size())
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" +
                                value + "'");
  return v;
}

int parse_int(const std::string& key, const std::string& value)
{
  const double v = parse_double(key, value);
  if (v != std::floor(v))
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" +
                                value + "'");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& value)
{
  if (value == "1" || value == "true" || value == "yes" || value == "on")
    return true;
  if (value == "0" || value == "false" || value == "no" || value == "off")
    return false;
  throw std::invalid_argument("config: '" + key + "' expects a boolean, got '" +
                              value + "'");
}

Box parse_box(const std::string& key, const std::string& value)
{
  std::vector<double> parts;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    parts.push_back(parse_double(key, trim(item)));
  if (parts.size() != 4)
    throw std::invalid_argument("config: '" + key + "' expects x0,x1,y0,y1");
  Box box{parts[0], parts[1], parts[2], parts[3]};
  box.validate();
  return box;
}

} // namespace

std::optional<FieldKind> parse_field_kind(std::string_view name)
{
  if (name == "channel") return FieldKind::channel;
  if (name == "inclusions") return FieldKind::inclusions;
  return std::nullopt;
}

CoefficientField generate_field(FieldKind kind, double contrast, int nf,
                                std::uint64_t seed)
{
  if (nf < 20)
    throw std::invalid_argument("generate_field: nf = " + std::to_string(nf) +
                                " is too small to host the geometry (need >= 20)");
  if (!(contrast >= 1.0) || !std::isfinite(contrast))
    throw std::invalid_argument("generate_field: contrast must be >= 1");

  CellField cells(nf, 1.0);
  if (contrast == 1.0)
    return CoefficientField(std::move(cells));

  // distributions from <random> are implementation-defined; map raw draws by hand
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  // keep inclusions at least 0.1 away from the default source boxes
  const int margin = std::max(1, nf / 10);
  auto cell_of = [nf](double x) { return static_cast<int>(std::floor(x * nf)); };
  const std::array<std::array<int, 4>, 2> keep_out{{
    {cell_of(0.1) - margin, cell_of(0.2) + margin, cell_of(0.8) - margin, cell_of(0.9) + margin},
    {cell_of(0.8) - margin, cell_of(0.9) + margin, cell_of(0.1) - margin, cell_of(0.2) + margin},
  }};
  auto blocked = [&](int x0, int y0, int w, int h) {
    for (const auto& k : keep_out)
      if (x0 < k[1] && x0 + w > k[0] && y0 < k[3] && y0 + h > k[2])
        return true;
    return false;
  };

  const int count = nf * nf / 250;
  const int long_min = std::max(3, nf / 20);
  const int long_max = std::max(long_min, nf / 10);
  const int thick_max = std::max(1, nf / 50);
  const int block_max = std::max(2, nf / 33);
  for (int placed = 0, attempts = 0; placed < count && attempts < 100 * count; ++attempts)
  {
    int w = 0, h = 0;
    switch (rng() % 3)
    {
      case 0: w = pick(long_min, long_max); h = pick(1, thick_max); break;
      case 1: w = pick(1, thick_max); h = pick(long_min, long_max); break;
      default: w = h = pick(2, block_max); break;
    }
    const int x0 = pick(0, nf - w);
    const int y0 = pick(0, nf - h);
    if (blocked(x0, y0, w, h))
      continue;
    for (int cy = y0; cy < y0 + h; ++cy)
      for (int cx = x0; cx < x0 + w; ++cx)
        cells(cx, cy) = contrast;
    ++placed;
  }

  if (kind == FieldKind::channel)
  {
    const double phase = 2.0 * std::numbers::pi * unit();
    const double half_width = 1.5;
    for (int cx = 0; cx < nf; ++cx)
    {
      const double x = (cx + 0.5) / nf;
      const double center =
        nf * (0.1 + 0.8 * x + 0.04 * std::sin(2.0 * std::numbers::pi * x + phase));
      for (int cy = 0; cy < nf; ++cy)
        if (std::abs(cy + 0.5 - center) <= half_width)
          cells(cx, cy) = contrast;
    }
  }
  return CoefficientField(std::move(cells));
}

CoefficientField parse_field(std::istream& in)
{
  int nf = 0;
  if (!(in >> nf) || nf <= 0)
    throw std::invalid_argument("field file: first line must be a positive nf");
  CellField cells(nf, 0.0);
  for (int row = 0; row < nf; ++row)
    for (int col = 0; col < nf; ++col)
    {
      std::string token;
      if (!(in >> token))
        throw std::invalid_argument("field file: missing value at row " +
                                    std::to_string(row) + ", col " + std::to_string(col));
      std::size_t used = 0;
      double v = 0.0;
      try
      {
        v = std::stod(token, &used);
      }
      catch (const std::exception&)
      {
        used = 0;
      }
      if (used != token.size() || used == 0)
        throw std::invalid_argument("field file: bad value '" + token + "' at row " +
                                    std::to_string(row) + ", col " + std::to_string(col));
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument("field file: non-positive value " + token +
                                    " at row " + std::to_string(row) + ", col " +
                                    std::to_string(col));
      cells(col, row) = v;
    }
  std::string extra;
  if (in >> extra)
    throw std::invalid_argument("field file: trailing data after " +
                                std::to_string(nf) + " rows");
  return CoefficientField(std::move(cells));
}

CoefficientField read_field(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open field file " + path.string());
  return parse_field(in);
}

void write_field(const CoefficientField& field, std::ostream& out)
{
  const int nf = field.n();
  out << nf << '\n';
  for (int row = 0; row < nf; ++row)
  {
    for (int col = 0; col < nf; ++col)
    {
      if (col)
        out << ' ';
      out << format_double(field(col, row));
    }
    out << '\n';
  }
}

void write_field(const CoefficientField& field, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write field file " + path.string());
  write_field(field, out);
}

void Box::validate() const
{
  if (!(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0))
    throw std::invalid_argument("box [" + format_double(x0) + ", " + format_double(x1) +
                                "] x [" + format_double(y0) + ", " + format_double(y1) +
                                "] is not a non-empty box inside the unit square");
}

CellField box_density(const GridHierarchy& grid, const Box& box, double value)
{
  CellField density(grid.nf(), 0.0);
  const double h = grid.h();
  for (int cy = 0; cy < grid.nf(); ++cy)
    for (int cx = 0; cx < grid.nf(); ++cx)
    {
      const double x = (cx + 0.5) * h;
      const double y = (cy + 0.5) * h;
      if (x >= box.x0 && x <= box.x1 && y >= box.y0 && y <= box.y1)
        density(cx, cy) = value;
    }
  return density;
}

void ExperimentConfig::validate() const
{
  if (nc < 2 || r < 2)
    throw std::invalid_argument("config: nc and r must be >= 2");
  if (!(contrast >= 1.0))
    throw std::invalid_argument("config: contrast must be >= 1");
  inflow.validate();
  outflow.validate();
  goal.validate();
  if (strategies.empty())
    throw std::invalid_argument("config: no strategy requested");
  marking.validate();
}

void apply_setting(ExperimentConfig& cfg, const std::string& key,
                   const std::string& value)
{
  if (key == "nc") cfg.nc = parse_int(key, value);
  else if (key == "r") cfg.r = parse_int(key, value);
  else if (key == "field") cfg.field = value;
  else if (key == "contrast") cfg.contrast = parse_double(key, value);
  else if (key == "theta") cfg.marking.theta = parse_double(key, value);
  else if (key == "s") cfg.marking.s = parse_int(key, value);
  else if (key == "m-enrich" || key == "m_enrich") cfg.marking.m_enrich = parse_int(key, value);
  else if (key == "max-iters" || key == "max_iters") cfg.marking.max_iterations = parse_int(key, value);
  else if (key == "dof-cap" || key == "dof_cap") cfg.marking.dof_cap = parse_int(key, value);
  else if (key == "goal-rtol" || key == "goal_rtol") cfg.marking.goal_rtol = parse_double(key, value);
  else if (key == "initial-count" || key == "initial_count") cfg.marking.initial_count = parse_int(key, value);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "out") cfg.out_dir = value;
  else if (key == "k1" || key == "inflow") cfg.inflow = parse_box(key, value);
  else if (key == "k2" || key == "outflow") cfg.outflow = parse_box(key, value);
  else if (key == "goal") cfg.goal = parse_box(key, value);
  else if (key == "goal-average" || key == "goal_average") cfg.goal_average = parse_bool(key, value);
  else if (key == "dump-indicators" || key == "dump_indicators") cfg.dump_indicators = parse_bool(key, value);
  else if (key == "dump-eigenvalues" || key == "dump_eigenvalues") cfg.dump_eigenvalues = parse_bool(key, value);
  else if (key == "marking")
  {
    const auto m = parse_marking(value);
    if (!m)
      throw std::invalid_argument("config: unknown marking '" + value + "'");
    cfg.marking.marking = *m;
  }
  else if (key == "norm-mode" || key == "norm_mode")
  {
    const auto m = parse_norm_mode(value);
    if (!m)
      throw std::invalid_argument("config: unknown norm mode '" + value + "'");
    cfg.marking.norm_mode = *m;
  }
  else if (key == "strategy")
  {
    cfg.strategies.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
    {
      const auto s = parse_strategy(trim(item));
      if (!s)
        throw std::invalid_argument("config: unknown strategy '" + trim(item) + "'");
      cfg.strategies.push_back(*s);
    }
  }
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

void apply_config_text(ExperimentConfig& cfg, std::istream& in)
{
  std::string line;
  int line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open config file " + path.string());
  apply_config_text(cfg, in);
}

CoefficientField make_field(const ExperimentConfig& cfg)
{
  const int nf = cfg.nc * cfg.r;
  if (cfg.field.rfind("file:", 0) == 0)
  {
    const CoefficientField field = read_field(cfg.field.substr(5));
    if (field.n() != nf)
      throw std::invalid_argument("config: field file has nf = " +
                                  std::to_string(field.n()) + " but nc * r = " +
                                  std::to_string(nf));
    return field;
  }
  const auto kind = parse_field_kind(cfg.field);
  if (!kind)
    throw std::invalid_argument("config: unknown field '" + cfg.field + "'");
  return generate_field(*kind, cfg.contrast, nf, cfg.seed);
}

CellField source_density(const GridHierarchy& grid, const ExperimentConfig& cfg)
{
  CellField f = box_density(grid, cfg.inflow, 1.0);
  const CellField sink = box_density(grid, cfg.outflow, 1.0);
  for (std::size_t k = 0; k < f.values.size(); ++k)
    f.values[k] -= sink.values[k];
  return f;
}

CellField goal_density(const GridHierarchy& grid, const ExperimentConfig& cfg)
{
  return box_density(grid, cfg.goal, cfg.goal_average ? 1.0 / cfg.goal.area() : 1.0);
}

ExperimentResult run_strategies(const ExperimentConfig& cfg, const AdaptObserver& observer)
{
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const GridHierarchy grid = build_grids(cfg.nc, cfg.r);
  auto data = build_offline(grid, make_field(cfg));
  const AdaptProblem problem =
    make_problem(data, source_density(grid, cfg), goal_density(grid, cfg));

  ExperimentResult result;
  result.offline_seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.chi_min = data->chi_min;
  result.chi_max = data->chi_max;
  for (Strategy strategy : cfg.strategies)
    result.traces.push_back(adapt_loop(problem, strategy, cfg.marking, observer));
  return result;
}

void write_trace_csv(const AdaptTrace& trace, double contrast, std::ostream& out)
{
  out << trace_header << '\n';
  for (const auto& row : trace.rows)
    out << to_string(trace.strategy) << ',' << row.iteration << ',' << row.dofs << ','
        << format_double(row.energy_error) << ',' << format_double(row.goal_error) << ','
        << format_double(row.sum_eta_sq) << ',' << row.marked_count << ','
        << format_double(trace.config.theta) << ',' << trace.config.s << ','
        << trace.config.m_enrich << ',' << format_double(contrast) << '\n';
}

void write_comparison_csv(std::span<const AdaptTrace> traces, std::ostream& out)
{
  out << comparison_header << '\n';
  for (const auto& trace : traces)
    for (const auto& row : trace.rows)
      out << to_string(trace.strategy) << ',' << row.iteration << ',' << row.dofs << ','
          << format_double(row.energy_error) << ',' << format_double(row.goal_error)
          << ',' << format_double(row.sum_eta_sq) << ',' << row.marked_count << '\n';
}

std::optional<double> dofs_to_reach_goal(const AdaptTrace& trace, double target)
{
  const auto& rows = trace.rows;
  if (rows.empty())
    return std::nullopt;
  if (rows.front().goal_error <= target)
    return rows.front().dofs;
  auto lg = [](double v) { return std::log10(std::max(v, 1e-300)); };
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (rows[k].goal_error <= target)
    {
      const double e0 = lg(rows[k - 1].goal_error);
      const double e1 = lg(rows[k].goal_error);
      const double t = (e0 - lg(target)) / (e0 - e1);
      return rows[k - 1].dofs + t * (rows[k].dofs - rows[k - 1].dofs);
    }
  return std::nullopt;
}

double energy_error_at(const AdaptTrace& trace, double dofs)
{
  const auto& rows = trace.rows;
  if (rows.empty() || dofs < rows.front().dofs || dofs > rows.back().dofs)
    throw std::out_of_range("energy_error_at: dofs outside the trace range");
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (dofs <= rows[k].dofs)
    {
      const double d0 = rows[k - 1].dofs;
      const double d1 = rows[k].dofs;
      const double e0 = std::log10(rows[k - 1].energy_error);
      const double e1 = std::log10(rows[k].energy_error);
      const double t = d1 > d0 ? (dofs - d0) / (d1 - d0) : 1.0;
      return std::pow(10.0, e0 + t * (e1 - e0));
    }
  return rows.front().energy_error;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream& log)
{
  std::filesystem::create_directories(cfg.out_dir);

  std::ofstream indicator_csv;
  AdaptObserver observer;
  if (cfg.dump_indicators)
  {
    indicator_csv.open(cfg.out_dir / "indicators.csv");
    indicator_csv << "iteration,vertex_id,strategy,eta_sq,lambda_next,l_i\n";
    observer = [&](const IndicatorReport& report, const std::vector<int>&) {
      for (std::size_t i = 0; i < report.eta_sq.size(); ++i)
        indicator_csv << report.iteration << ',' << i << ',' << to_string(report.strategy)
                      << ',' << format_double(report.eta_sq[i]) << ','
                      << format_double(report.lambda_next[i]) << ',' << report.counts[i]
                      << '\n';
    };
  }

  ExperimentResult result;
  try
  {
    result = run_strategies(cfg, observer);
  }
  catch (const std::exception& e)
  {
    throw std::runtime_error("experiment (field " + cfg.field + ", contrast " +
                             format_double(cfg.contrast) + ", nc " +
                             std::to_string(cfg.nc) + ", r " + std::to_string(cfg.r) +
                             "): " + e.what());
  }

  if (cfg.dump_eigenvalues)
  {
    const GridHierarchy grid = build_grids(cfg.nc, cfg.r);
    const auto data = build_offline(grid, make_field(cfg));
    std::ofstream out(cfg.out_dir / "eigenvalues.csv");
    write_eigenvalues_csv(*data, out);
  }

  for (const auto& trace : result.traces)
  {
    std::ofstream out(cfg.out_dir / ("trace_" + std::string(to_string(trace.strategy)) + ".csv"));
    write_trace_csv(trace, cfg.contrast, out);
  }
  {
    std::ofstream out(cfg.out_dir / "comparison.csv");
    write_comparison_csv(result.traces, out);
  }

  // summary: dofs needed to reach each decade of goal-error reduction
  log << "field " << cfg.field << ", contrast " << cfg.contrast << ", nc " << cfg.nc
      << ", r " << cfg.r << " (offline + reference " << result.offline_seconds << " s)\n";
  if (result.chi_min < -1e-8 || result.chi_max > 1.0 + 1e-8)
    log << "warning: partition of unity leaves [0, 1]: chi in [" << result.chi_min << ", "
        << result.chi_max << "]\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %6s %6s %12s %12s  %s\n", "strategy", "iters",
                "dofs", "energy_err", "goal_err", "dofs to reach goal_err/initial <= 1e-1 .. 1e-4");
  log << line;
  for (const auto& trace : result.traces)
  {
    if (trace.rows.empty())
      continue;
    const auto& last = trace.rows.back();
    std::snprintf(line, sizeof(line), "%-10s %6d %6d %12.4e %12.4e ",
                  std::string(to_string(trace.strategy)).c_str(), last.iteration, last.dofs,
                  last.energy_error, last.goal_error);
    log << line;
    const double initial = trace.rows.front().goal_error;
    for (int decade = 1; decade <= 4; ++decade)
    {
      const auto dofs = dofs_to_reach_goal(trace, initial * std::pow(10.0, -decade));
      if (dofs)
        std::snprintf(line, sizeof(line), " %8.1f", *dofs);
      else
        std::snprintf(line, sizeof(line), " %8s", "-");
      log << line;
    }
    log << "  (" << trace.stop_reason << ")\n";
  }
  return result;
}

} // namespace gmsfem
