#include "gmsfem/mesh.hpp"

#include <stdexcept>
#include <string>

namespace gmsfem {

GridHierarchy::GridHierarchy(int nc, int r)
  : nc_(nc)
  , r_(r)
{
  if (nc < 2)
    throw std::invalid_argument("GridHierarchy: nc must be >= 2, got " +
                                std::to_string(nc));
  if (r < 2)
    throw std::invalid_argument("GridHierarchy: r must be >= 2, got " +
                                std::to_string(r));
}

bool GridHierarchy::on_boundary(int v) const
{
  const auto [ix, iy] = fine_vertex_coords(v);
  return ix == 0 || iy == 0 || ix == nf() || iy == nf();
}

std::vector<int> GridHierarchy::boundary_vertices() const
{
  std::vector<int> result;
  result.reserve(4 * static_cast<std::size_t>(nf()));
  for (int v = 0; v < static_cast<int>(num_fine_vertices()); ++v)
    if (on_boundary(v))
      result.push_back(v);
  return result;
}

int GridHierarchy::interior_vertex_id(int I, int J) const
{
  if (I < 1 || J < 1 || I > nc_ - 1 || J > nc_ - 1)
    throw std::invalid_argument("coarse vertex (" + std::to_string(I) + ", " +
                                std::to_string(J) +
                                ") is not an interior coarse vertex");
  return (J - 1) * (nc_ - 1) + (I - 1);
}

std::array<int, 2> GridHierarchy::interior_vertex_coords(int vertex_id) const
{
  if (vertex_id < 0 || vertex_id >= num_interior_coarse_vertices())
    throw std::out_of_range("interior coarse vertex id " +
                            std::to_string(vertex_id) + " out of range");
  return {vertex_id % (nc_ - 1) + 1, vertex_id / (nc_ - 1) + 1};
}

CellRange GridHierarchy::coarse_element_cells(int ex, int ey) const
{
  return {ex * r_, ey * r_, (ex + 1) * r_, (ey + 1) * r_};
}

GridHierarchy build_grids(int nc, int r) { return GridHierarchy(nc, r); }

CoarseNeighborhood neighborhood(const GridHierarchy& grid, int vertex_id)
{
  const auto [I, J] = grid.interior_vertex_coords(vertex_id);

  CoarseNeighborhood n;
  n.vertex_id = vertex_id;
  n.vertex = {I, J};
  for (int ey = J - 1; ey <= J; ++ey)
    for (int ex = I - 1; ex <= I; ++ex)
      n.coarse_elements.push_back({ex, ey});

  const int r = grid.r();
  n.cells = {(I - 1) * r, (J - 1) * r, (I + 1) * r, (J + 1) * r};

  const int side = n.cells.vertices_x();
  n.fine_vertices_all.reserve(n.cells.num_vertices());
  for (int ly = 0; ly < side; ++ly)
    for (int lx = 0; lx < side; ++lx)
    {
      const int local = ly * side + lx;
      const int global = grid.range_vertex(n.cells, lx, ly);
      n.fine_vertices_all.push_back(global);
      if (lx == 0 || ly == 0 || lx == side - 1 || ly == side - 1)
      {
        n.fine_vertices_boundary.push_back(global);
        n.local_boundary.push_back(local);
      }
      else
      {
        n.fine_vertices_interior.push_back(global);
        n.local_interior.push_back(local);
      }
    }
  return n;
}

CoarseNeighborhood neighborhood_at(const GridHierarchy& grid, int I, int J)
{
  return neighborhood(grid, grid.interior_vertex_id(I, J));
}

std::vector<CoarseNeighborhood> all_neighborhoods(const GridHierarchy& grid)
{
  std::vector<CoarseNeighborhood> result;
  result.reserve(grid.num_interior_coarse_vertices());
  for (int i = 0; i < grid.num_interior_coarse_vertices(); ++i)
    result.push_back(neighborhood(grid, i));
  return result;
}

} // namespace gmsfem
