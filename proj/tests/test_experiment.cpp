#include "gmsfem/experiment.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>
#include <tuple>

using namespace gmsfem;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name)
{
  const fs::path dir = fs::temp_directory_path() / ("gmsfem_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// breadth-first search over high cells with 4-neighbour moves
bool spans_left_to_right(const CoefficientField& field, double contrast)
{
  const int n = field.n();
  std::vector<char> seen(static_cast<std::size_t>(n) * n, 0);
  std::queue<std::pair<int, int>> open;
  for (int cy = 0; cy < n; ++cy)
    if (field(0, cy) == contrast)
    {
      seen[cy * n] = 1;
      open.emplace(0, cy);
    }
  while (!open.empty())
  {
    const auto [cx, cy] = open.front();
    open.pop();
    if (cx == n - 1)
      return true;
    const int dx[] = {1, -1, 0, 0};
    const int dy[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k)
    {
      const int x = cx + dx[k];
      const int y = cy + dy[k];
      if (x < 0 || y < 0 || x >= n || y >= n || seen[y * n + x] || field(x, y) != contrast)
        continue;
      seen[y * n + x] = 1;
      open.emplace(x, y);
    }
  }
  return false;
}

int count_high(const CoefficientField& field, double contrast)
{
  int count = 0;
  for (double v : field.values())
    count += v == contrast;
  return count;
}

} // namespace

TEST_CASE("field kinds")
{
  CHECK(parse_field_kind("channel") == FieldKind::channel);
  CHECK(parse_field_kind("inclusions") == FieldKind::inclusions);
  CHECK_FALSE(parse_field_kind("file:x").has_value());
}

TEST_CASE("channel connects the left and right edges")
{
  for (std::uint64_t seed : {1u, 2u, 3u, 17u})
    for (int nf : {20, 64, 100})
    {
      const auto field = generate_field(FieldKind::channel, 1e4, nf, seed);
      CHECK(spans_left_to_right(field, 1e4));
      for (double v : field.values())
        CHECK((v == 1.0 || v == 1e4));
      // starts low on the left and ends high on the right
      int left = 0, right = 0;
      for (int cy = 0; cy < nf; ++cy)
      {
        left += field(0, cy) == 1e4 && cy < nf / 2;
        right += field(nf - 1, cy) == 1e4 && cy >= nf / 2;
      }
      CHECK(left > 0);
      CHECK(right > 0);
    }
}

TEST_CASE("inclusions avoid the source boxes")
{
  for (std::uint64_t seed : {1u, 5u, 9u})
  {
    const int nf = 100;
    const auto field = generate_field(FieldKind::inclusions, 1e6, nf, seed);
    CHECK(count_high(field, 1e6) > 0);
    for (int cy = 0; cy < nf; ++cy)
      for (int cx = 0; cx < nf; ++cx)
      {
        const double x = (cx + 0.5) / nf;
        const double y = (cy + 0.5) / nf;
        const bool near_k1 = x > 0.0 && x < 0.3 && y > 0.7 && y < 1.0;
        const bool near_k2 = x > 0.7 && x < 1.0 && y > 0.0 && y < 0.3;
        if (near_k1 || near_k2)
          CHECK(field(cx, cy) == 1.0);
      }
  }
}

TEST_CASE("generator determinism and edge cases")
{
  const auto a = generate_field(FieldKind::channel, 1e4, 64, 42);
  const auto b = generate_field(FieldKind::channel, 1e4, 64, 42);
  const auto c = generate_field(FieldKind::channel, 1e4, 64, 43);
  CHECK(a.values() == b.values());
  CHECK(a.values() != c.values());

  // same geometry at a different contrast
  const auto d = generate_field(FieldKind::channel, 1e6, 64, 42);
  for (std::size_t k = 0; k < a.values().size(); ++k)
    CHECK((a.values()[k] == 1e4) == (d.values()[k] == 1e6));

  const auto ones = generate_field(FieldKind::inclusions, 1.0, 30, 7);
  for (double v : ones.values())
    CHECK(v == 1.0);

  CHECK_THROWS_AS(generate_field(FieldKind::channel, 1e4, 19, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_field(FieldKind::channel, 0.5, 40, 1), std::invalid_argument);
}

TEST_CASE("field text round trip")
{
  const auto field = generate_field(FieldKind::inclusions, 12345.678, 20, 3);
  std::stringstream ss;
  write_field(field, ss);
  const auto back = parse_field(ss);
  CHECK(back.n() == 20);
  CHECK(back.values() == field.values());

  const fs::path dir = scratch_dir("field");
  write_field(field, dir / "k.txt");
  CHECK(read_field(dir / "k.txt").values() == field.values());
  CHECK_THROWS_AS(read_field(dir / "missing.txt"), std::runtime_error);

  // row 0 sits at y = 0
  std::istringstream small("2\n1 2\n3 4\n");
  const auto s = parse_field(small);
  CHECK(s(0, 0) == 1.0);
  CHECK(s(1, 0) == 2.0);
  CHECK(s(0, 1) == 3.0);
}

TEST_CASE("malformed field files name the offending entry")
{
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try
    {
      parse_field(in);
    }
    catch (const std::invalid_argument& e)
    {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("2\n1 2\n3 x\n").find("row 1, col 1") != std::string::npos);
  CHECK(message("2\n1 2\n-3 4\n").find("row 1, col 0") != std::string::npos);
  CHECK(message("2\n1 0\n3 4\n").find("row 0, col 1") != std::string::npos);
  CHECK(message("2\n1 2\n3\n").find("row 1, col 1") != std::string::npos);
  CHECK(message("2\n1 2\n3 4 5\n").find("trailing") != std::string::npos);
  CHECK(message("zero\n").find("nf") != std::string::npos);
  CHECK(message("2\n1 2\n3 inf\n").find("row 1, col 1") != std::string::npos);
}

TEST_CASE("field file must match the grid")
{
  const fs::path dir = scratch_dir("mismatch");
  write_field(CoefficientField(30, 2.0), dir / "k.txt");
  ExperimentConfig cfg;
  cfg.nc = 4;
  cfg.r = 5;
  cfg.field = "file:" + (dir / "k.txt").string();
  CHECK_THROWS_WITH_AS(make_field(cfg), doctest::Contains("nf = 30"), std::invalid_argument);
  cfg.r = 10;
  cfg.nc = 3;
  CHECK(make_field(cfg).values() == std::vector<double>(900, 2.0));
  cfg.field = "stripes";
  CHECK_THROWS_AS(make_field(cfg), std::invalid_argument);
}

TEST_CASE("boxes and densities")
{
  CHECK_THROWS_AS((Box{0.2, 0.1, 0.0, 1.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((Box{0.0, 1.1, 0.0, 1.0}.validate()), std::invalid_argument);
  CHECK_NOTHROW((Box{0.0, 1.0, 0.0, 1.0}.validate()));

  const auto grid = build_grids(10, 10);
  ExperimentConfig cfg;
  const CellField f = source_density(grid, cfg);
  double plus = 0.0, minus = 0.0;
  for (double v : f.values)
  {
    plus += v > 0.0 ? v : 0.0;
    minus += v < 0.0 ? v : 0.0;
  }
  // 10 x 10 fine cells in each source box
  CHECK(plus == 100.0);
  CHECK(minus == -100.0);

  const CellField g = goal_density(grid, cfg);
  cfg.goal_average = true;
  const CellField ga = goal_density(grid, cfg);
  for (std::size_t k = 0; k < g.values.size(); ++k)
    CHECK(ga.values[k] == doctest::Approx(g.values[k] * 100.0).epsilon(1e-12));
}

TEST_CASE("config text and settings")
{
  ExperimentConfig cfg;
  std::istringstream text(
    "# sample\n"
    "nc = 6\n"
    "r=4   # fine cells\n"
    "\n"
    "field = inclusions\n"
    "contrast = 1e6\n"
    "theta = 0.3\n"
    "marking = binning\n"
    "strategy = goal_dwr, standard\n"
    "m-enrich = 3\n"
    "max_iters = 12\n"
    "goal = 0.5,0.6,0.5,0.6\n"
    "goal-average = true\n"
    "norm-mode = snapshot\n"
    "seed = 9\n");
  apply_config_text(cfg, text);
  CHECK(cfg.nc == 6);
  CHECK(cfg.r == 4);
  CHECK(cfg.field == "inclusions");
  CHECK(cfg.contrast == 1e6);
  CHECK(cfg.marking.theta == 0.3);
  CHECK(cfg.marking.marking == Marking::binning);
  CHECK(cfg.strategies == std::vector<Strategy>{Strategy::goal_dwr, Strategy::standard});
  CHECK(cfg.marking.m_enrich == 3);
  CHECK(cfg.marking.max_iterations == 12);
  CHECK(cfg.goal.x0 == 0.5);
  CHECK(cfg.goal.y1 == 0.6);
  CHECK(cfg.goal_average);
  CHECK(cfg.marking.norm_mode == NormMode::snapshot);
  CHECK(cfg.seed == 9u);
  CHECK_NOTHROW(cfg.validate());

  CHECK_THROWS_WITH_AS(apply_setting(cfg, "colour", "red"), doctest::Contains("colour"),
                       std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(cfg, "nc", "ten"), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(cfg, "nc", "2.5"), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(cfg, "strategy", "standard,dwr"), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(cfg, "k1", "0.1,0.2,0.3"), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(cfg, "goal-average", "maybe"), std::invalid_argument);
  std::istringstream bad("nc 4\n");
  CHECK_THROWS_WITH_AS(apply_config_text(cfg, bad), doctest::Contains("line 1"),
                       std::invalid_argument);

  ExperimentConfig invalid;
  invalid.marking.theta = 1.0;
  CHECK_THROWS_AS(invalid.validate(), std::invalid_argument);
  invalid = ExperimentConfig{};
  invalid.strategies.clear();
  CHECK_THROWS_AS(invalid.validate(), std::invalid_argument);
}

TEST_CASE("goal interpolation helpers")
{
  AdaptTrace trace;
  for (auto [dofs, energy, goal] : {std::tuple{100, 1e-1, 1e-2}, std::tuple{200, 1e-2, 1e-4},
                                    std::tuple{300, 1e-3, 1e-5}})
  {
    TraceRow row;
    row.dofs = dofs;
    row.energy_error = energy;
    row.goal_error = goal;
    trace.rows.push_back(row);
  }
  CHECK(*dofs_to_reach_goal(trace, 1e-3) == doctest::Approx(150.0));
  CHECK(*dofs_to_reach_goal(trace, 1e-2) == 100.0);
  CHECK(*dofs_to_reach_goal(trace, 1e-5) == doctest::Approx(300.0));
  CHECK_FALSE(dofs_to_reach_goal(trace, 1e-6).has_value());
  CHECK(energy_error_at(trace, 150.0) == doctest::Approx(std::pow(10.0, -1.5)));
  CHECK(energy_error_at(trace, 300.0) == doctest::Approx(1e-3));
  CHECK_THROWS_AS(energy_error_at(trace, 50.0), std::out_of_range);
  CHECK_THROWS_AS(energy_error_at(trace, 301.0), std::out_of_range);
}

TEST_CASE("repeated experiments write identical files")
{
  ExperimentConfig cfg;
  cfg.nc = 5;
  cfg.r = 6;
  cfg.marking.max_iterations = 4;
  cfg.dump_indicators = true;
  cfg.dump_eigenvalues = true;
  std::ostringstream log;

  const fs::path first = scratch_dir("run_a");
  cfg.out_dir = first;
  run_experiment(cfg, log);
  cfg.out_dir = scratch_dir("run_b");
  const auto result = run_experiment(cfg, log);
  REQUIRE(result.traces.size() == 3u);

  for (const char* name : {"trace_standard.csv", "trace_goal_h1.csv", "trace_goal_dwr.csv",
                           "comparison.csv", "indicators.csv", "eigenvalues.csv"})
  {
    const std::string a = slurp(first / name);
    const std::string b = slurp(cfg.out_dir / name);
    CHECK_MESSAGE(!a.empty(), name);
    CHECK_MESSAGE(a == b, name);
  }

  const std::string trace = slurp(cfg.out_dir / "trace_goal_h1.csv");
  std::istringstream lines(trace);
  std::string line;
  std::getline(lines, line);
  CHECK(line == trace_header);
  int rows = 0;
  while (std::getline(lines, line))
  {
    ++rows;
    CHECK(line.rfind("goal_h1,", 0) == 0);
    CHECK(std::count(line.begin(), line.end(), ',') == 10);
  }
  CHECK(rows == 4);
  CHECK(log.str().find("goal_dwr") != std::string::npos);
}
