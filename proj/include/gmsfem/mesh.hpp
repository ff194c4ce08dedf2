#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace gmsfem {

/// Half-open rectangle of fine cells [x0, x1) x [y0, y1).
struct CellRange
{
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  /// Vertices of the range, counted per side.
  int vertices_x() const { return width() + 1; }
  int vertices_y() const { return height() + 1; }
  std::size_t num_vertices() const
  {
    return static_cast<std::size_t>(vertices_x()) * vertices_y();
  }
};

/// Nested uniform coarse/fine grids on the unit square.
///
/// Fine vertices are numbered row-major, x fastest: v = iy * (nf + 1) + ix.
/// Fine cells likewise: c = cy * nf + cx. Interior coarse vertices (I, J),
/// 1 <= I, J <= nc - 1, carry the id (J - 1) * (nc - 1) + (I - 1).
class GridHierarchy
{
public:
  GridHierarchy(int nc, int r);

  int nc() const { return nc_; }
  int r() const { return r_; }
  int nf() const { return nc_ * r_; }
  double H() const { return 1.0 / nc_; }
  double h() const { return 1.0 / nf(); }

  int vertices_per_side() const { return nf() + 1; }
  std::size_t num_fine_vertices() const
  {
    return static_cast<std::size_t>(vertices_per_side()) * vertices_per_side();
  }
  std::size_t num_fine_cells() const
  {
    return static_cast<std::size_t>(nf()) * nf();
  }
  int num_interior_coarse_vertices() const { return (nc_ - 1) * (nc_ - 1); }

  int fine_vertex(int ix, int iy) const { return iy * vertices_per_side() + ix; }
  std::array<int, 2> fine_vertex_coords(int v) const
  {
    return {v % vertices_per_side(), v / vertices_per_side()};
  }
  int fine_cell(int cx, int cy) const { return cy * nf() + cx; }

  bool on_boundary(int v) const;
  /// Fine vertices on the boundary of the unit square, ascending.
  std::vector<int> boundary_vertices() const;

  int interior_vertex_id(int I, int J) const;
  std::array<int, 2> interior_vertex_coords(int vertex_id) const;

  /// Fine cells of coarse element (ex, ey).
  CellRange coarse_element_cells(int ex, int ey) const;
  CellRange all_cells() const { return {0, 0, nf(), nf()}; }

  /// Global fine vertex of local vertex (lx, ly) inside `range`.
  int range_vertex(const CellRange& range, int lx, int ly) const
  {
    return fine_vertex(range.x0 + lx, range.y0 + ly);
  }

private:
  int nc_;
  int r_;
};

GridHierarchy build_grids(int nc, int r);

struct CoarseNeighborhood
{
  int vertex_id = -1;
  /// Coarse vertex coordinates (I, J).
  std::array<int, 2> vertex{};
  /// Coarse elements (ex, ey) sharing the vertex.
  std::vector<std::array<int, 2>> coarse_elements;
  /// Fine cells covering the neighborhood.
  CellRange cells;
  /// Sorted global fine vertex ids; the sorted order coincides with the
  /// row-major order of the patch, so position in `fine_vertices_all` is the
  /// local index used by patch-local matrices.
  std::vector<int> fine_vertices_all;
  std::vector<int> fine_vertices_boundary;
  std::vector<int> fine_vertices_interior;
  /// Positions of the boundary / interior vertices within fine_vertices_all.
  std::vector<int> local_boundary;
  std::vector<int> local_interior;
};

/// Neighborhood of the interior coarse vertex with the given id.
CoarseNeighborhood neighborhood(const GridHierarchy& grid, int vertex_id);

/// Neighborhood of the coarse vertex (I, J); throws for boundary vertices.
CoarseNeighborhood neighborhood_at(const GridHierarchy& grid, int I, int J);

std::vector<CoarseNeighborhood> all_neighborhoods(const GridHierarchy& grid);

} // namespace gmsfem
