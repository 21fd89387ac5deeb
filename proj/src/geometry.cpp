#include "fbopt/geometry.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

#include "fbopt/detail/wls.hpp"
#include "fbopt/errors.hpp"

namespace fbopt {

TimeGrid make_time_grid(double t_final, double tau) {
  if (!(t_final > 0.0) || !(tau > 0.0)) {
    throw ConfigError("time grid needs t_final > 0 and tau > 0");
  }
  const double ratio = t_final / tau;
  const double steps = std::round(ratio);
  if (std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio) || steps < 1.0) {
    throw ConfigError("t_final / tau = " + std::to_string(ratio) + " is not an integer");
  }
  return TimeGrid{t_final, tau, static_cast<int>(steps)};
}

int PointCloud::segment_id(std::string_view name) const {
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (segments[s] == name) return static_cast<int>(s);
  }
  throw LookupError("unknown boundary segment '" + std::string(name) + "'");
}

std::string_view PointCloud::kind_name(std::size_t i) const {
  if (kind[i] < 0) return "interior";
  return segments.at(static_cast<std::size_t>(kind[i]));
}

std::vector<std::pair<int, int>> PointCloud::ring_neighbours() const {
  std::vector<std::pair<int, int>> out(size(), {-1, -1});
  const std::size_t m = ring.size();
  for (std::size_t k = 0; k < m; ++k) {
    out[ring[k]] = {ring[(k + m - 1) % m], ring[(k + 1) % m]};
  }
  return out;
}

// ---------------------------------------------------------------------------
// NeighbourGrid

NeighbourGrid::NeighbourGrid(std::span<const Vec2> points, double cell) : points_(points), cell_(cell) {
  if (points.empty()) {
    start_.assign(2, 0);
    return;
  }
  double x1 = points[0].x, y1 = points[0].y;
  x0_ = x1;
  y0_ = y1;
  for (const Vec2& p : points) {
    x0_ = std::min(x0_, p.x);
    y0_ = std::min(y0_, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  nx_ = static_cast<int>((x1 - x0_) / cell_) + 1;
  ny_ = static_cast<int>((y1 - y0_) / cell_) + 1;
  std::vector<int> cell_of(points.size());
  start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int cx = std::min(nx_ - 1, static_cast<int>((points[i].x - x0_) / cell_));
    const int cy = std::min(ny_ - 1, static_cast<int>((points[i].y - y0_) / cell_));
    cell_of[i] = cy * nx_ + cx;
    ++start_[cell_of[i] + 1];
  }
  for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
  items_.resize(points.size());
  std::vector<int> fill(start_.begin(), start_.end() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) items_[fill[cell_of[i]]++] = static_cast<int>(i);
}

void NeighbourGrid::within(Vec2 centre, double radius, std::vector<int>& out) const {
  out.clear();
  if (items_.empty()) return;
  const int cx0 = std::max(0, static_cast<int>(std::floor((centre.x - radius - x0_) / cell_)));
  const int cx1 = std::min(nx_ - 1, static_cast<int>(std::floor((centre.x + radius - x0_) / cell_)));
  const int cy0 = std::max(0, static_cast<int>(std::floor((centre.y - radius - y0_) / cell_)));
  const int cy1 = std::min(ny_ - 1, static_cast<int>(std::floor((centre.y + radius - y0_) / cell_)));
  const double r2 = radius * radius;
  for (int cy = cy0; cy <= cy1; ++cy) {
    for (int cx = cx0; cx <= cx1; ++cx) {
      const int c = cy * nx_ + cx;
      for (int k = start_[c]; k < start_[c + 1]; ++k) {
        const int i = items_[k];
        if (norm2(points_[i] - centre) <= r2) out.push_back(i);
      }
    }
  }
  std::sort(out.begin(), out.end());
}

std::vector<int> NeighbourGrid::within(Vec2 centre, double radius) const {
  std::vector<int> out;
  within(centre, radius, out);
  return out;
}

int NeighbourGrid::nearest(Vec2 centre) const {
  if (items_.empty()) return -1;
  double radius = cell_;
  std::vector<int> found;
  for (;;) {
    within(centre, radius, found);
    if (!found.empty()) break;
    radius *= 2.0;
  }
  int best = found.front();
  double best_d = norm2(points_[best] - centre);
  for (int i : found) {
    const double d = norm2(points_[i] - centre);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Ring helpers

double ring_area(const PointCloud& cloud) {
  double twice = 0.0;
  const std::size_t m = cloud.ring.size();
  for (std::size_t k = 0; k < m; ++k) {
    twice += cross(cloud.positions[cloud.ring[k]], cloud.positions[cloud.ring[(k + 1) % m]]);
  }
  return 0.5 * twice;
}

bool inside_ring(const PointCloud& cloud, Vec2 p) {
  bool inside = false;
  const std::size_t m = cloud.ring.size();
  for (std::size_t k = 0, l = m - 1; k < m; l = k++) {
    const Vec2 a = cloud.positions[cloud.ring[k]];
    const Vec2 b = cloud.positions[cloud.ring[l]];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

namespace {

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = norm2(ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

}  // namespace

double distance_to_ring(const PointCloud& cloud, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t m = cloud.ring.size();
  for (std::size_t k = 0; k < m; ++k) {
    best = std::min(best, segment_distance(p, cloud.positions[cloud.ring[k]],
                                           cloud.positions[cloud.ring[(k + 1) % m]]));
  }
  return best;
}

double min_pairwise_distance(const PointCloud& cloud) {
  if (cloud.size() < 2) return std::numeric_limits<double>::infinity();
  NeighbourGrid grid(cloud.positions, cloud.spacing);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> nbrs;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    grid.within(cloud.positions[i], 2.0 * cloud.spacing, nbrs);
    for (int j : nbrs) {
      if (static_cast<std::size_t>(j) != i) best = std::min(best, norm(cloud.positions[j] - cloud.positions[i]));
    }
  }
  if (!std::isfinite(best)) {
    for (std::size_t i = 0; i < cloud.size(); ++i)
      for (std::size_t j = i + 1; j < cloud.size(); ++j)
        best = std::min(best, norm(cloud.positions[j] - cloud.positions[i]));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Normals and quadrature

PointCloud outward_normals(PointCloud cloud) {
  const std::size_t m = cloud.ring.size();
  if (m < 3) throw DegenerateBoundaryError("boundary ring needs at least 3 points, has " + std::to_string(m));
  const double orientation = ring_area(cloud) >= 0.0 ? 1.0 : -1.0;
  cloud.normals.assign(cloud.size(), Vec2{});
  for (std::size_t k = 0; k < m; ++k) {
    const int i = cloud.ring[k];
    const Vec2 t = cloud.positions[cloud.ring[(k + 1) % m]] - cloud.positions[cloud.ring[(k + m - 1) % m]];
    const double len = norm(t);
    if (!(len > 0.0)) {
      throw DegenerateBoundaryError("boundary point " + std::to_string(i) + " has coincident ring neighbours");
    }
    cloud.normals[i] = (orientation / len) * Vec2{t.y, -t.x};
  }
  return cloud;
}

PointCloud with_quadrature(PointCloud cloud) {
  const std::size_t n = cloud.size();
  cloud.weights.assign(n, 0.0);
  cloud.strip.assign(n, 0.0);
  if (n == 0) return cloud;
  NeighbourGrid grid(cloud.positions, cloud.spacing);
  std::vector<int> nbrs;
  std::vector<double> dist;
  const auto neighbours = cloud.ring_neighbours();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t want = cloud.is_boundary(i) ? 3 : 4;
    double radius = 1.5 * cloud.spacing;
    for (;;) {
      grid.within(cloud.positions[i], radius, nbrs);
      if (nbrs.size() > want || nbrs.size() == n) break;
      radius *= 1.5;
    }
    dist.clear();
    for (int j : nbrs) {
      if (static_cast<std::size_t>(j) != i) dist.push_back(norm(cloud.positions[j] - cloud.positions[i]));
    }
    std::sort(dist.begin(), dist.end());
    const std::size_t used = std::min(want, dist.size());
    double local = 0.0;
    for (std::size_t k = 0; k < used; ++k) local += dist[k];
    local = used > 0 ? local / static_cast<double>(used) : cloud.spacing;
    if (cloud.is_boundary(i)) {
      const auto [prev, next] = neighbours[i];
      const double arc = 0.5 * (norm(cloud.positions[i] - cloud.positions[prev]) +
                                norm(cloud.positions[next] - cloud.positions[i]));
      cloud.weights[i] = arc;
      cloud.strip[i] = 0.5 * arc * local;
    } else {
      cloud.weights[i] = local * local;
    }
  }
  return cloud;
}

double volume_integral(const PointCloud& cloud, std::span<const double> f) {
  double sum = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    sum += (cloud.is_boundary(i) ? cloud.strip[i] : cloud.weights[i]) * f[i];
  }
  return sum;
}

double boundary_integral(const PointCloud& cloud, int segment, std::span<const double> f) {
  if (segment < 0 || static_cast<std::size_t>(segment) >= cloud.segments.size()) {
    throw LookupError("unknown boundary segment id " + std::to_string(segment));
  }
  double sum = 0.0;
  for (int i : cloud.ring) {
    if (cloud.kind[i] == segment) sum += cloud.weights[i] * f[i];
  }
  return sum;
}

double boundary_integral(const PointCloud& cloud, std::string_view segment, std::span<const double> f) {
  return boundary_integral(cloud, cloud.segment_id(segment), f);
}

double boundary_integral(const PointCloud& cloud, std::span<const double> f) {
  double sum = 0.0;
  for (int i : cloud.ring) sum += cloud.weights[i] * f[i];
  return sum;
}

// ---------------------------------------------------------------------------
// Seeding

namespace {

struct Piece {
  Vec2 a;
  Vec2 b;
  int segment;
  bool include_end = false;
};

void seed_ring(PointCloud& cloud, const std::vector<Piece>& pieces, double h) {
  bool skip_start = false;
  for (const Piece& piece : pieces) {
    const double len = norm(piece.b - piece.a);
    const int m = std::max(1, static_cast<int>(std::lround(len / h)));
    const int last = piece.include_end ? m : m - 1;
    for (int k = skip_start ? 1 : 0; k <= last; ++k) {
      const double t = static_cast<double>(k) / m;
      cloud.ring.push_back(static_cast<int>(cloud.positions.size()));
      cloud.positions.push_back(piece.a + t * (piece.b - piece.a));
      cloud.kind.push_back(piece.segment);
    }
    skip_start = piece.include_end;
  }
  if (skip_start && !cloud.ring.empty()) {
    // The last piece closed onto the first point.
    cloud.ring.pop_back();
    cloud.positions.pop_back();
    cloud.kind.pop_back();
  }
}

void seed_interior(PointCloud& cloud, Vec2 anchor, double hx, double hy, Vec2 lo, Vec2 hi, double clearance) {
  const int i0 = static_cast<int>(std::floor((lo.x - anchor.x) / hx)) - 1;
  const int i1 = static_cast<int>(std::ceil((hi.x - anchor.x) / hx)) + 1;
  const int j0 = static_cast<int>(std::floor((lo.y - anchor.y) / hy)) - 1;
  const int j1 = static_cast<int>(std::ceil((hi.y - anchor.y) / hy)) + 1;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const Vec2 p{anchor.x + i * hx, anchor.y + j * hy};
      if (!inside_ring(cloud, p)) continue;
      if (distance_to_ring(cloud, p) < clearance * (1.0 - 1e-9)) continue;
      cloud.positions.push_back(p);
      cloud.kind.push_back(interior_kind);
    }
  }
}

PointCloud finish(PointCloud cloud) {
  if (std::none_of(cloud.kind.begin(), cloud.kind.end(), [](int k) { return k < 0; })) {
    throw SeedingError("spacing too coarse: no interior points fit inside the shape");
  }
  cloud.mobility.assign(cloud.size(), Mobility::free);
  cloud.slide_dir.assign(cloud.size(), Vec2{});
  cloud = outward_normals(std::move(cloud));
  return with_quadrature(std::move(cloud));
}

PointCloud seed_rectangle(Vec2 lo, Vec2 hi, double h, std::array<int, 4> ids, std::vector<std::string> names) {
  const double w = hi.x - lo.x;
  const double ht = hi.y - lo.y;
  if (!(w > 0.0) || !(ht > 0.0)) throw SeedingError("rectangle has non-positive extent");
  if (h >= std::min(w, ht)) throw SeedingError("spacing larger than the shape");
  const int nx = std::max(2, static_cast<int>(std::lround(w / h)));
  const int ny = std::max(2, static_cast<int>(std::lround(ht / h)));
  const double hx = w / nx;
  const double hy = ht / ny;
  PointCloud cloud;
  cloud.spacing = h;
  cloud.segments = std::move(names);
  const Vec2 c1{hi.x, lo.y}, c3{lo.x, hi.y};
  seed_ring(cloud, {{lo, c1, ids[0]}, {c1, hi, ids[1]}, {hi, c3, ids[2]}, {c3, lo, ids[3]}}, h);
  seed_interior(cloud, lo, hx, hy, lo, hi, 0.5 * std::min(hx, hy));
  return finish(std::move(cloud));
}

}  // namespace

PointCloud seed_cloud(const ShapeSpec& shape, double h) {
  if (!(h > 0.0)) throw SeedingError("spacing must be positive");
  return std::visit(
      [h](const auto& s) -> PointCloud {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Rectangle>) {
          return seed_rectangle(s.lo, s.hi, h, {0, 1, 2, 3}, {"bottom", "right", "top", "left"});
        } else if constexpr (std::is_same_v<T, Square>) {
          const Vec2 half{0.5 * s.edge, 0.5 * s.edge};
          return seed_rectangle(s.center - half, s.center + half, h, {0, 0, 0, 0}, {"boundary"});
        } else if constexpr (std::is_same_v<T, Circle>) {
          if (h >= s.radius) throw SeedingError("spacing larger than the shape");
          PointCloud cloud;
          cloud.spacing = h;
          cloud.segments = {"boundary"};
          const int m = std::max(8, static_cast<int>(std::lround(2.0 * std::numbers::pi * s.radius / h)));
          for (int k = 0; k < m; ++k) {
            const double a = 2.0 * std::numbers::pi * k / m;
            cloud.ring.push_back(k);
            cloud.positions.push_back(s.center + s.radius * Vec2{std::cos(a), std::sin(a)});
            cloud.kind.push_back(0);
          }
          const Vec2 r{s.radius, s.radius};
          seed_interior(cloud, s.center, h, h, s.center - r, s.center + r, 0.5 * h);
          return finish(std::move(cloud));
        } else {
          const double w = s.width, ht = s.height;
          if (!(w > 0.0) || !(ht > 0.0)) throw SeedingError("tank has non-positive extent");
          if (h >= std::min(w, ht)) throw SeedingError("spacing larger than the shape");
          if (!(0.0 < s.inflow_lo && s.inflow_lo < s.inflow_hi && s.inflow_hi < ht) ||
              !(0.0 < s.outflow_lo && s.outflow_lo < s.outflow_hi && s.outflow_hi < ht)) {
            throw SeedingError("inflow/outflow ranges must lie strictly inside the side walls");
          }
          using namespace tank_segment;
          std::vector<Piece> pieces;
          std::vector<Obstacle> obstacles = s.obstacles;
          std::sort(obstacles.begin(), obstacles.end(), [](const Obstacle& a, const Obstacle& b) { return a.x < b.x; });
          double x = 0.0;
          for (const Obstacle& o : obstacles) {
            if (!(o.x > x) || !(o.x + o.width < w) || !(o.height < ht)) {
              throw SeedingError("obstacles must be disjoint and inside the tank floor");
            }
            pieces.push_back({{x, 0.0}, {o.x, 0.0}, wall});
            pieces.push_back({{o.x, 0.0}, {o.x, o.height}, wall});
            pieces.push_back({{o.x, o.height}, {o.x + o.width, o.height}, wall});
            pieces.push_back({{o.x + o.width, o.height}, {o.x + o.width, 0.0}, wall});
            x = o.x + o.width;
          }
          pieces.push_back({{x, 0.0}, {w, 0.0}, wall});
          pieces.push_back({{w, 0.0}, {w, s.outflow_lo}, wall, true});
          pieces.push_back({{w, s.outflow_lo}, {w, s.outflow_hi}, outflow});
          pieces.push_back({{w, s.outflow_hi}, {w, ht}, wall});
          pieces.push_back({{w, ht}, {0.0, ht}, free, true});
          pieces.push_back({{0.0, ht}, {0.0, s.inflow_hi}, wall, true});
          pieces.push_back({{0.0, s.inflow_hi}, {0.0, s.inflow_lo}, inflow});
          pieces.push_back({{0.0, s.inflow_lo}, {0.0, 0.0}, wall});
          PointCloud cloud;
          cloud.spacing = h;
          cloud.segments = {"inflow", "wall", "free", "outflow"};
          seed_ring(cloud, pieces, h);
          seed_interior(cloud, {0.0, 0.0}, h, h, {0.0, 0.0}, {w, ht}, 0.5 * h);
          return finish(std::move(cloud));
        }
      },
      shape);
}

// ---------------------------------------------------------------------------
// Transformation

PointCloud apply_transform(const PointCloud& cloud, std::span<const Vec2> displacement) {
  if (displacement.size() != cloud.size()) {
    throw ShapeMismatchError("displacement has " + std::to_string(displacement.size()) + " entries for " +
                             std::to_string(cloud.size()) + " points");
  }
  if (std::all_of(displacement.begin(), displacement.end(), [](Vec2 d) { return d == Vec2{}; })) {
    return cloud;
  }
  const double h = cloud.spacing;
  const double rf = 2.5;
  NeighbourGrid grid(cloud.positions, h);
  std::vector<int> nbrs;
  std::vector<double> dx_vals, dy_vals;
  detail::LocalFit<3> fit;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    grid.within(cloud.positions[i], rf * h, nbrs);
    if (!fit.build(cloud.positions[i], cloud.positions, nbrs, h, rf)) continue;
    dx_vals.resize(nbrs.size());
    dy_vals.resize(nbrs.size());
    for (std::size_t j = 0; j < nbrs.size(); ++j) {
      dx_vals[j] = displacement[nbrs[j]].x;
      dy_vals[j] = displacement[nbrs[j]].y;
    }
    const auto ex = detail::functional_dx<3>(h);
    const auto ey = detail::functional_dy<3>(h);
    const double a = 1.0 + fit.apply(ex, dx_vals);
    const double b = fit.apply(ey, dx_vals);
    const double c = fit.apply(ex, dy_vals);
    const double d = 1.0 + fit.apply(ey, dy_vals);
    if (a * d - b * c <= 0.0) {
      throw FoldOverError("step transformation folds over at point " + std::to_string(i) +
                          " (det " + std::to_string(a * d - b * c) + "); reduce the time step");
    }
  }
  PointCloud moved = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i) moved.positions[i] += displacement[i];
  if (!cloud.ring.empty() && (ring_area(moved) > 0.0) != (ring_area(cloud) > 0.0)) {
    throw FoldOverError("boundary ring flipped orientation; reduce the time step");
  }
  moved = outward_normals(std::move(moved));
  return with_quadrature(std::move(moved));
}

// ---------------------------------------------------------------------------
// Snapshots

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_snapshot(std::ostream& out, const PointCloud& cloud, int n, double t,
                    std::span<const SnapshotColumn> columns) {
  out << "n,t,x,y,kind,nx,ny";
  for (const auto& c : columns) out << ',' << c.name;
  out << '\n';
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << n << ',' << format_number(t) << ',' << format_number(cloud.positions[i].x) << ','
        << format_number(cloud.positions[i].y) << ',' << cloud.kind_name(i) << ','
        << format_number(cloud.normals[i].x) << ',' << format_number(cloud.normals[i].y);
    for (const auto& c : columns) out << ',' << format_number(c.values[i]);
    out << '\n';
  }
}

}  // namespace fbopt
