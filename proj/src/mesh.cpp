#include "ioncast/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <queue>
#include <set>

namespace ioncast {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double triple(const Vec3& a, const Vec3& b, const Vec3& c) { return dot(cross(a, b), c); }

using EdgeKey = std::array<std::int32_t, 2>;

EdgeKey edge_key(std::int32_t a, std::int32_t b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

std::vector<EdgeKey> edges_of(const std::vector<Face>& faces) {
  std::set<EdgeKey> set;
  for (const auto& f : faces) {
    set.insert(edge_key(f[0], f[1]));
    set.insert(edge_key(f[1], f[2]));
    set.insert(edge_key(f[2], f[0]));
  }
  return {set.begin(), set.end()};
}

void set_directed_edges(MultiMesh& mesh, const std::vector<EdgeKey>& undirected) {
  mesh.senders.clear();
  mesh.receivers.clear();
  for (const auto& e : undirected) {
    mesh.senders.push_back(e[0]);
    mesh.receivers.push_back(e[1]);
    mesh.senders.push_back(e[1]);
    mesh.receivers.push_back(e[0]);
  }
}

MultiMesh refine_all(int level) {
  if (level < 0 || level > 8) {
    throw ArgumentError("icosphere level " + std::to_string(level) + " outside [0, 8]");
  }
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  MultiMesh mesh;
  const std::vector<Vec3> base{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                               {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& v : base) mesh.vertices.push_back(normalized(v));
  std::vector<Face> faces{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                          {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                          {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  // Orient every face counter-clockwise seen from outside.
  for (auto& f : faces) {
    if (triple(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]) < 0) std::swap(f[1], f[2]);
  }
  mesh.faces_per_level.push_back(faces);
  for (int k = 0; k < level; ++k) {
    std::map<EdgeKey, std::int32_t> midpoint;
    auto mid = [&](std::int32_t a, std::int32_t b) {
      auto key = edge_key(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const auto& pa = mesh.vertices[a];
      const auto& pb = mesh.vertices[b];
      mesh.vertices.push_back(normalized({pa[0] + pb[0], pa[1] + pb[1], pa[2] + pb[2]}));
      const auto id = static_cast<std::int32_t>(mesh.vertices.size() - 1);
      midpoint.emplace(key, id);
      return id;
    };
    const auto& coarse = mesh.faces_per_level.back();
    std::vector<Face> fine;
    fine.reserve(coarse.size() * 4);
    for (const auto& f : coarse) {
      const auto a = mid(f[0], f[1]);
      const auto b = mid(f[1], f[2]);
      const auto c = mid(f[2], f[0]);
      fine.push_back({f[0], a, c});
      fine.push_back({f[1], b, a});
      fine.push_back({f[2], c, b});
      fine.push_back({a, b, c});
    }
    mesh.faces_per_level.push_back(std::move(fine));
  }
  return mesh;
}

// Barycentric weights of p w.r.t. the planar triangle spanned by a, b, c along
// the ray through p; all nonnegative iff p lies in the spherical triangle.
std::array<double, 3> barycentric(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& p) {
  const double wa = triple(b, c, p);
  const double wb = triple(c, a, p);
  const double wc = triple(a, b, p);
  const double s = wa + wb + wc;
  return {wa / s, wb / s, wc / s};
}

bool contains(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& p) {
  constexpr double tol = 1e-12;
  return triple(a, b, p) >= -tol && triple(b, c, p) >= -tol && triple(c, a, p) >= -tol && dot(p, a) > 0.0;
}

}  // namespace

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

double arc_distance(const Vec3& a, const Vec3& b) {
  // FMA contraction can leave a tiny residual in cross(a, a).
  if (a == b) return 0.0;
  const auto c = cross(a, b);
  return std::atan2(std::sqrt(dot(c, c)), dot(a, b));
}

Vec3 unit_from_latlon(double lat_deg, double lon_deg) {
  const double phi = lat_deg * kDeg, lam = lon_deg * kDeg;
  return {std::cos(phi) * std::cos(lam), std::cos(phi) * std::sin(lam), std::sin(phi)};
}

double lat_of(const Vec3& p) { return std::atan2(p[2], std::hypot(p[0], p[1])) / kDeg; }
double lon_of(const Vec3& p) { return std::atan2(p[1], p[0]) / kDeg; }

LatLonGrid::LatLonGrid(std::size_t n_lat_, std::size_t n_lon_, double lon_offset_cells)
    : n_lat(n_lat_), n_lon(n_lon_), lon_offset_(lon_offset_cells) {
  if (n_lat == 0 || n_lon == 0) throw ArgumentError("grid extents must be positive");
  positions.reserve(size());
  for (std::size_t r = 0; r < n_lat; ++r)
    for (std::size_t c = 0; c < n_lon; ++c) positions.push_back(unit_from_latlon(lat_deg(r), lon_deg(c)));
}

double LatLonGrid::lat_deg(std::size_t row) const { return 90.0 - (static_cast<double>(row) + 0.5) * lat_step(); }
double LatLonGrid::lon_deg(std::size_t col) const {
  return -180.0 + (static_cast<double>(col) + 0.5 + lon_offset_) * lon_step();
}

std::vector<std::array<std::int32_t, 2>> MultiMesh::level_edges(int level) const {
  return edges_of(faces_per_level.at(static_cast<std::size_t>(level)));
}

double MultiMesh::max_edge_length() const {
  double best = 0.0;
  for (const auto& e : level_edges(max_level())) best = std::max(best, arc_distance(vertices[e[0]], vertices[e[1]]));
  return best;
}

std::size_t icosphere_vertex_count(int level) { return 10 * (std::size_t{1} << (2 * level)) + 2; }

MultiMesh build_icosphere(int level) {
  auto mesh = refine_all(level);
  set_directed_edges(mesh, mesh.level_edges(level));
  return mesh;
}

MultiMesh build_multimesh(int max_level) {
  if (max_level < 0) throw ArgumentError("multimesh level must be >= 0");
  auto mesh = refine_all(max_level);
  std::set<EdgeKey> all;
  for (int k = 0; k <= max_level; ++k)
    for (const auto& e : mesh.level_edges(k)) all.insert(e);
  set_directed_edges(mesh, {all.begin(), all.end()});
  return mesh;
}

MultiMesh augment_khop(const MultiMesh& mesh, int hops) {
  if (hops < 1) return mesh;
  std::vector<std::vector<std::int32_t>> adj(mesh.num_vertices());
  for (const auto& e : mesh.level_edges(mesh.max_level())) {
    adj[e[0]].push_back(e[1]);
    adj[e[1]].push_back(e[0]);
  }
  std::set<EdgeKey> all;
  for (std::size_t i = 0; i < mesh.senders.size(); ++i) all.insert(edge_key(mesh.senders[i], mesh.receivers[i]));
  std::vector<int> depth(mesh.num_vertices(), -1);
  for (std::int32_t src = 0; src < static_cast<std::int32_t>(mesh.num_vertices()); ++src) {
    std::vector<std::int32_t> seen{src};
    std::queue<std::int32_t> q;
    depth[src] = 0;
    q.push(src);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      if (depth[u] == hops) continue;
      for (auto v : adj[u]) {
        if (depth[v] >= 0) continue;
        depth[v] = depth[u] + 1;
        seen.push_back(v);
        q.push(v);
        if (v > src) all.insert(edge_key(src, v));
      }
    }
    for (auto v : seen) depth[v] = -1;
  }
  MultiMesh out = mesh;
  set_directed_edges(out, {all.begin(), all.end()});
  return out;
}

std::vector<std::size_t> BipartiteGraph::receiver_degree() const {
  std::vector<std::size_t> deg(n_receivers, 0);
  for (auto r : receivers) ++deg[r];
  return deg;
}

std::vector<std::size_t> BipartiteGraph::sender_degree() const {
  std::vector<std::size_t> deg(n_senders, 0);
  for (auto s : senders) ++deg[s];
  return deg;
}

BipartiteGraph build_grid2mesh(const LatLonGrid& grid, const MultiMesh& mesh, double radius_scale, bool cover_mesh) {
  if (!(radius_scale > 0.0)) throw ArgumentError("radius_scale must be > 0");
  const double max_len = mesh.max_edge_length();
  const double radius = radius_scale * max_len;
  const double radius_deg = radius / kDeg;

  // Latitude bands of the mesh vertices narrow the candidate set per grid node.
  const double band = std::max(radius_deg, 1.0);
  const auto n_bands = static_cast<std::size_t>(std::ceil(180.0 / band));
  std::vector<std::vector<std::int32_t>> bands(n_bands);
  auto band_of = [&](double lat) {
    auto b = static_cast<long>(std::floor((lat + 90.0) / band));
    return static_cast<std::size_t>(std::clamp(b, 0L, static_cast<long>(n_bands) - 1));
  };
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v)
    bands[band_of(lat_of(mesh.vertices[v]))].push_back(static_cast<std::int32_t>(v));

  BipartiteGraph g;
  g.n_senders = grid.size();
  g.n_receivers = mesh.num_vertices();
  std::vector<char> covered(mesh.num_vertices(), 0);
  std::vector<std::int32_t> hits;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const auto& p = grid.positions[n];
    const double lat = lat_of(p);
    hits.clear();
    const auto lo = band_of(std::max(-90.0, lat - radius_deg));
    const auto hi = band_of(std::min(90.0, lat + radius_deg));
    for (auto b = lo; b <= hi; ++b)
      for (auto v : bands[b])
        if (arc_distance(p, mesh.vertices[v]) <= radius) hits.push_back(v);
    if (hits.empty()) {
      throw ConstructionError("grid node " + std::to_string(n) + " has no mesh vertex within radius_scale " +
                              std::to_string(radius_scale) + "; use a larger radius_scale");
    }
    std::sort(hits.begin(), hits.end());
    for (auto v : hits) {
      g.senders.push_back(static_cast<std::int32_t>(n));
      g.receivers.push_back(v);
      covered[v] = 1;
    }
  }
  if (cover_mesh) {
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
      if (covered[v]) continue;
      double best_d = 1e300;
      for (std::size_t n = 0; n < grid.size(); ++n)
        best_d = std::min(best_d, arc_distance(grid.positions[n], mesh.vertices[v]));
      // Equidistant grid nodes all connect, so the choice has no orientation bias.
      for (std::size_t n = 0; n < grid.size(); ++n) {
        if (arc_distance(grid.positions[n], mesh.vertices[v]) <= best_d * (1.0 + 1e-9) + 1e-12) {
          g.senders.push_back(static_cast<std::int32_t>(n));
          g.receivers.push_back(static_cast<std::int32_t>(v));
        }
      }
    }
  }
  g.features = edge_features(g.senders, g.receivers, grid.positions, mesh.vertices, max_len);
  return g;
}

bool locate_face(const MultiMesh& mesh, const Vec3& p, std::int32_t& face, std::array<double, 3>& weights) {
  std::vector<std::int32_t> candidates;
  for (std::int32_t f = 0; f < static_cast<std::int32_t>(mesh.faces_per_level[0].size()); ++f) candidates.push_back(f);
  for (std::size_t level = 0; level < mesh.faces_per_level.size(); ++level) {
    const auto& faces = mesh.faces_per_level[level];
    std::vector<std::int32_t> inside;
    for (auto f : candidates) {
      const auto& tri = faces[f];
      if (contains(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]], p)) inside.push_back(f);
    }
    if (inside.empty()) return false;
    if (level + 1 == mesh.faces_per_level.size()) {
      face = *std::min_element(inside.begin(), inside.end());
      const auto& tri = faces[face];
      weights = barycentric(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]], p);
      return true;
    }
    candidates.clear();
    for (auto f : inside)
      for (std::int32_t c = 0; c < 4; ++c) candidates.push_back(4 * f + c);
  }
  return false;
}

BipartiteGraph build_mesh2grid(const MultiMesh& mesh, const LatLonGrid& grid) {
  BipartiteGraph g;
  g.n_senders = mesh.num_vertices();
  g.n_receivers = grid.size();
  const auto& faces = mesh.finest_faces();
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const auto& p = grid.positions[n];
    std::int32_t face = -1;
    std::array<double, 3> w{};
    std::array<std::int32_t, 3> senders{};
    if (locate_face(mesh, p, face, w)) {
      senders = faces[face];
    } else {
      ++g.fallback_count;
      std::vector<std::pair<double, std::int32_t>> dist;
      for (std::size_t v = 0; v < mesh.num_vertices(); ++v)
        dist.emplace_back(arc_distance(p, mesh.vertices[v]), static_cast<std::int32_t>(v));
      std::partial_sort(dist.begin(), dist.begin() + 3, dist.end());
      for (int k = 0; k < 3; ++k) senders[k] = dist[k].second;
    }
    for (auto s : senders) {
      g.senders.push_back(s);
      g.receivers.push_back(static_cast<std::int32_t>(n));
    }
  }
  g.features = edge_features(g.senders, g.receivers, mesh.vertices, grid.positions, mesh.max_edge_length());
  return g;
}

Tensor<double> edge_features(std::span<const std::int32_t> senders, std::span<const std::int32_t> receivers,
                             const std::vector<Vec3>& sender_pos, const std::vector<Vec3>& receiver_pos,
                             double length_scale) {
  const std::size_t E = senders.size();
  Tensor<double> f({E, 4});
  for (std::size_t e = 0; e < E; ++e) {
    const auto& s = sender_pos[senders[e]];
    const auto& r = receiver_pos[receivers[e]];
    const Vec3 d{s[0] - r[0], s[1] - r[1], s[2] - r[2]};
    const double rho = std::hypot(r[0], r[1]);
    if (rho > 1e-12) {
      const Vec3 east{-r[1] / rho, r[0] / rho, 0.0};
      const Vec3 north = cross(r, east);
      f.at(e, 0) = dot(d, east) / length_scale;
      f.at(e, 1) = dot(d, north) / length_scale;
    } else {
      // At a pole every direction is south (north pole) or north (south pole);
      // a fixed tangent frame would break symmetry under rotation about the axis.
      const double up = dot(d, r);
      const double horizontal = std::sqrt(std::max(0.0, dot(d, d) - up * up));
      f.at(e, 0) = 0.0;
      f.at(e, 1) = (r[2] > 0 ? -horizontal : horizontal) / length_scale;
    }
    f.at(e, 2) = dot(d, r) / length_scale;
    f.at(e, 3) = arc_distance(s, r) / length_scale;
  }
  return f;
}

std::vector<LevelStats> level_stats(const MultiMesh& mesh) {
  std::vector<LevelStats> out;
  for (int k = 0; k <= mesh.max_level(); ++k) {
    LevelStats s;
    s.level = k;
    s.vertices = icosphere_vertex_count(k);
    s.faces = mesh.faces_per_level[k].size();
    const auto edges = mesh.level_edges(k);
    s.edges = edges.size();
    s.min_edge_deg = 1e300;
    double total = 0.0;
    for (const auto& e : edges) {
      const double len = arc_distance(mesh.vertices[e[0]], mesh.vertices[e[1]]) / kDeg;
      s.min_edge_deg = std::min(s.min_edge_deg, len);
      s.max_edge_deg = std::max(s.max_edge_deg, len);
      total += len;
    }
    s.mean_edge_deg = total / static_cast<double>(edges.size());
    out.push_back(s);
  }
  return out;
}

}  // namespace ioncast
