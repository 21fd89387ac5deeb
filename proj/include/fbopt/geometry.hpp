#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fbopt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
constexpr double norm2(Vec2 a) { return a.x * a.x + a.y * a.y; }

using Field = std::vector<double>;
using VectorField = std::vector<Vec2>;

/// Uniform time stepping 0 = t_0 < ... < t_N = t_final.
struct TimeGrid {
  double t_final = 0.0;
  double tau = 0.0;
  int n_steps = 0;

  double time(int n) const { return n * tau; }
};

TimeGrid make_time_grid(double t_final, double tau);

enum class Mobility : std::uint8_t { free, fixed, slide };

inline constexpr int interior_kind = -1;

/// Scattered points carrying one domain: interior points plus an ordered boundary ring.
///
/// `kind[i]` is `interior_kind` or the id of the boundary segment the point belongs to;
/// `ring` lists the boundary points counterclockwise. Normals are zero for interior points.
/// `weights` holds areas for interior points and arclengths for boundary points; `strip` is the
/// area of the half cell a boundary point contributes to volume integrals.
struct PointCloud {
  std::vector<Vec2> positions;
  std::vector<int> kind;
  std::vector<Vec2> normals;
  std::vector<double> weights;
  std::vector<double> strip;
  std::vector<Mobility> mobility;
  std::vector<Vec2> slide_dir;
  std::vector<int> ring;
  std::vector<std::string> segments;
  double spacing = 0.0;

  std::size_t size() const { return positions.size(); }
  bool is_boundary(std::size_t i) const { return kind[i] >= 0; }
  int segment_id(std::string_view name) const;
  std::string_view kind_name(std::size_t i) const;
  /// Ring neighbours (previous, next) for every boundary point, -1 for interior points.
  std::vector<std::pair<int, int>> ring_neighbours() const;
};

// ---------------------------------------------------------------------------
// Shapes

/// Axis-aligned rectangle whose edges get their own segment ids (bottom, right, top, left).
struct Rectangle {
  Vec2 lo{0.0, 0.0};
  Vec2 hi{1.0, 1.0};
};

/// Square with a single boundary segment.
struct Square {
  double edge = 1.0;
  Vec2 center{0.0, 0.0};
};

struct Circle {
  double radius = 1.0;
  Vec2 center{0.0, 0.0};
};

/// Rectangular obstacle attached to the tank floor.
struct Obstacle {
  double x = 0.0;
  double width = 0.5;
  double height = 0.5;
};

/// Open tank: inflow on the left wall, outflow on the right wall, free surface on top.
/// Segment ids: 0 inflow, 1 wall, 2 free, 3 outflow.
struct Tank {
  double width = 5.0;
  double height = 5.0;
  double inflow_lo = 1.0;
  double inflow_hi = 2.0;
  double outflow_lo = 1.0;
  double outflow_hi = 2.0;
  std::vector<Obstacle> obstacles{{1.5, 0.5, 0.5}, {3.0, 0.5, 0.5}};
};

namespace tank_segment {
inline constexpr int inflow = 0;
inline constexpr int wall = 1;
inline constexpr int free = 2;
inline constexpr int outflow = 3;
}  // namespace tank_segment

using ShapeSpec = std::variant<Rectangle, Square, Circle, Tank>;

/// Fills `shape` with points at nominal spacing `h`. Boundary points lie on the outline,
/// normals and quadrature weights are set.
PointCloud seed_cloud(const ShapeSpec& shape, double h);

/// Recomputes outward unit normals from the boundary ring.
PointCloud outward_normals(PointCloud cloud);

/// Recomputes per-point quadrature weights.
PointCloud with_quadrature(PointCloud cloud);

/// Moves every point by its displacement. Throws FoldOverError when the displacement's local
/// Jacobian estimate gives det(I + grad d) <= 0 or the boundary ring flips orientation.
PointCloud apply_transform(const PointCloud& cloud, std::span<const Vec2> displacement);

double volume_integral(const PointCloud& cloud, std::span<const double> f);
double boundary_integral(const PointCloud& cloud, int segment, std::span<const double> f);
double boundary_integral(const PointCloud& cloud, std::string_view segment, std::span<const double> f);
/// Boundary integral over every segment.
double boundary_integral(const PointCloud& cloud, std::span<const double> f);

/// Signed area enclosed by the boundary ring (positive for counterclockwise rings).
double ring_area(const PointCloud& cloud);
bool inside_ring(const PointCloud& cloud, Vec2 p);
double distance_to_ring(const PointCloud& cloud, Vec2 p);
double min_pairwise_distance(const PointCloud& cloud);

/// Bucket grid for radius queries. Results are returned in ascending index order.
class NeighbourGrid {
 public:
  NeighbourGrid(std::span<const Vec2> points, double cell);

  std::vector<int> within(Vec2 centre, double radius) const;
  void within(Vec2 centre, double radius, std::vector<int>& out) const;
  /// Index of the closest point, -1 if the grid is empty.
  int nearest(Vec2 centre) const;

 private:
  std::span<const Vec2> points_;
  double cell_;
  double x0_ = 0.0;
  double y0_ = 0.0;
  int nx_ = 1;
  int ny_ = 1;
  std::vector<int> start_;
  std::vector<int> items_;
};

struct SnapshotColumn {
  std::string name;
  std::span<const double> values;
};

/// Writes `n,t,x,y,kind,nx,ny,<columns>` rows, one per point.
void write_snapshot(std::ostream& out, const PointCloud& cloud, int n, double t,
                    std::span<const SnapshotColumn> columns);

/// Fixed-format double used by every CSV writer.
std::string format_number(double v);

}  // namespace fbopt
