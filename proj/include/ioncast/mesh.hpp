#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ioncast/tensor.hpp"

namespace ioncast {

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b);
Vec3 normalized(const Vec3& v);
// Great-circle angle between two unit vectors (radians), stable near 0 and pi.
double arc_distance(const Vec3& a, const Vec3& b);
Vec3 unit_from_latlon(double lat_deg, double lon_deg);
double lat_of(const Vec3& p);  // degrees
double lon_of(const Vec3& p);  // degrees in (-180, 180]

// Cell-centered latitude-longitude grid. Rows run north to south, columns west
// to east starting at -180 degrees; node index = row * n_lon + col.
struct LatLonGrid {
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<Vec3> positions;

  LatLonGrid() = default;
  LatLonGrid(std::size_t n_lat, std::size_t n_lon, double lon_offset_cells = 0.0);

  std::size_t size() const { return n_lat * n_lon; }
  double lat_deg(std::size_t row) const;
  double lon_deg(std::size_t col) const;
  double lat_step() const { return 180.0 / static_cast<double>(n_lat); }
  double lon_step() const { return 360.0 / static_cast<double>(n_lon); }

 private:
  double lon_offset_ = 0.0;
};

using Face = std::array<std::int32_t, 3>;

// Refined icosahedron. Vertex ids of level k are a prefix of level k+1 and the
// children of face f at level k are faces 4f..4f+3 at level k+1.
struct MultiMesh {
  std::vector<Vec3> vertices;
  std::vector<std::vector<Face>> faces_per_level;
  // Directed edges; each undirected edge appears once in each direction.
  std::vector<std::int32_t> senders;
  std::vector<std::int32_t> receivers;

  int max_level() const { return static_cast<int>(faces_per_level.size()) - 1; }
  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_undirected_edges() const { return senders.size() / 2; }
  const std::vector<Face>& finest_faces() const { return faces_per_level.back(); }
  // Undirected edges of one refinement level, as sorted (lo, hi) pairs.
  std::vector<std::array<std::int32_t, 2>> level_edges(int level) const;
  // Longest finest-level edge, as a great-circle angle.
  double max_edge_length() const;
};

std::size_t icosphere_vertex_count(int level);

// Single refinement level: the edges are those of `level` only.
MultiMesh build_icosphere(int level);
// Finest vertex set with the union of every level's edges.
MultiMesh build_multimesh(int max_level);
// Adds edges between finest-level vertices at most `hops` apart. Optional
// experiment, off in the default models.
MultiMesh augment_khop(const MultiMesh& mesh, int hops);

struct BipartiteGraph {
  std::vector<std::int32_t> senders;    // into the source node set
  std::vector<std::int32_t> receivers;  // into the destination node set
  Tensor<double> features;              // [E x 4]
  std::size_t n_senders = 0;
  std::size_t n_receivers = 0;
  // Grid nodes that fell back to nearest vertices (mesh->grid only).
  std::size_t fallback_count = 0;

  std::size_t size() const { return senders.size(); }
  std::vector<std::size_t> receiver_degree() const;
  std::vector<std::size_t> sender_degree() const;
};

// Grid -> mesh: edge iff arc(g, m) <= radius_scale * mesh.max_edge_length().
// With `cover_mesh`, any mesh vertex left without an edge additionally receives
// one from its nearest grid node, or from each of several equidistant ones
// (appended after the radius edges).
BipartiteGraph build_grid2mesh(const LatLonGrid& grid, const MultiMesh& mesh, double radius_scale = 0.6,
                               bool cover_mesh = true);

// Mesh -> grid: each grid node receives from the 3 vertices of the finest
// triangle containing it (lowest face index on ties).
BipartiteGraph build_mesh2grid(const MultiMesh& mesh, const LatLonGrid& grid);

// Per edge: sender minus receiver in the receiver's east-north-up frame, then
// the great-circle length; all divided by `length_scale`.
Tensor<double> edge_features(std::span<const std::int32_t> senders, std::span<const std::int32_t> receivers,
                             const std::vector<Vec3>& sender_pos, const std::vector<Vec3>& receiver_pos,
                             double length_scale);

// Locates the finest face containing p and its barycentric weights; returns
// false when no face passes the containment test.
bool locate_face(const MultiMesh& mesh, const Vec3& p, std::int32_t& face, std::array<double, 3>& weights);

struct LevelStats {
  int level = 0;
  std::size_t vertices = 0, edges = 0, faces = 0;
  double min_edge_deg = 0, mean_edge_deg = 0, max_edge_deg = 0;
};
std::vector<LevelStats> level_stats(const MultiMesh& mesh);

}  // namespace ioncast
