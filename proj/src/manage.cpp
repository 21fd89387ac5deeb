#include "fbopt/manage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fbopt/detail/wls.hpp"
#include "fbopt/errors.hpp"

namespace fbopt {

namespace {

using Terms = std::vector<std::pair<int, double>>;

Terms blend(const Terms& a, const Terms& b, double wa, double wb) {
  Terms out;
  for (auto [i, c] : a) out.emplace_back(i, wa * c);
  for (auto [i, c] : b) out.emplace_back(i, wb * c);
  return out;
}

int priority(Mobility m) {
  switch (m) {
    case Mobility::slide: return 2;
    case Mobility::fixed: return 1;
    case Mobility::free: return 0;
  }
  return 0;
}

struct Item {
  Vec2 position;
  Terms terms;
  int kind;
  Mobility mobility;
  Vec2 slide_dir;
  int order;  // smallest input index, or a large key for inserts
  bool interpolated = false;
};

Item from_input(const PointCloud& c, int i) {
  return {c.positions[i], {{i, 1.0}}, c.kind[i], c.mobility[i], c.slide_dir[i], i};
}

Item merge(const Item& a, const Item& b) {
  const int pa = priority(a.mobility), pb = priority(b.mobility);
  Item out = pa >= pb ? a : b;
  if (pa == pb && a.mobility == Mobility::free) {
    out.position = 0.5 * (a.position + b.position);
    out.terms = blend(a.terms, b.terms, 0.5, 0.5);
  }
  out.order = std::min(a.order, b.order);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ResampleMap

Field ResampleMap::apply(std::span<const double> in) const {
  if (in.size() != n_in) throw ShapeMismatchError("resample input has wrong length");
  if (identity()) return Field(in.begin(), in.end());
  Field out(entries.size(), 0.0);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    for (auto [i, c] : entries[k].terms) out[k] += c * in[i];
  }
  return out;
}

VectorField ResampleMap::apply(std::span<const Vec2> in) const {
  if (in.size() != n_in) throw ShapeMismatchError("resample input has wrong length");
  if (identity()) return VectorField(in.begin(), in.end());
  VectorField out(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    for (auto [i, c] : entries[k].terms) out[k] += c * in[i];
  }
  return out;
}

Field ResampleMap::apply_transpose(std::span<const double> out_bar) const {
  if (identity()) return Field(out_bar.begin(), out_bar.end());
  Field in(n_in, 0.0);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    for (auto [i, c] : entries[k].terms) in[i] += c * out_bar[k];
  }
  return in;
}

VectorField ResampleMap::apply_transpose(std::span<const Vec2> out_bar) const {
  if (identity()) return VectorField(out_bar.begin(), out_bar.end());
  VectorField in(n_in);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    for (auto [i, c] : entries[k].terms) in[i] += c * out_bar[k];
  }
  return in;
}

void ResampleMap::position_vjp(const PointCloud& input, std::span<const Vec2> out_positions_bar,
                               std::span<const double> values, std::span<const double> values_bar,
                               std::span<Vec2> positions_bar) const {
  if (identity()) {
    for (std::size_t i = 0; i < n_in; ++i) positions_bar[i] += out_positions_bar[i];
    return;
  }
  std::vector<int> nbrs;
  std::vector<double> f;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const ResampleEntry& e = entries[k];
    if (!e.interpolated) {
      for (auto [i, c] : e.terms) positions_bar[i] += c * out_positions_bar[k];
      continue;
    }
    if (values_bar.empty() || values_bar[k] == 0.0 || e.terms.size() == 1) continue;
    nbrs.clear();
    f.clear();
    for (auto [i, c] : e.terms) {
      nbrs.push_back(i);
      f.push_back(values[i]);
    }
    detail::mls_vjp(input.positions, nbrs, e.target, h, radius_factor, f, values_bar[k], positions_bar);
  }
}

void ResampleMap::position_vjp(const PointCloud& input, std::span<const Vec2> out_positions_bar,
                               std::span<const Vec2> values, std::span<const Vec2> values_bar,
                               std::span<Vec2> positions_bar) const {
  Field vx(values.size()), vy(values.size()), bx(values_bar.size()), by(values_bar.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    vx[i] = values[i].x;
    vy[i] = values[i].y;
  }
  for (std::size_t k = 0; k < values_bar.size(); ++k) {
    bx[k] = values_bar[k].x;
    by[k] = values_bar[k].y;
  }
  position_vjp(input, out_positions_bar, vx, bx, positions_bar);
  const std::vector<Vec2> none(out_positions_bar.size());
  position_vjp(input, none, vy, by, positions_bar);
}

// ---------------------------------------------------------------------------
// manage_points

Managed manage_points(const PointCloud& cloud) {
  return manage_points(cloud, default_h_min * cloud.spacing, default_h_max * cloud.spacing);
}

Managed manage_points(const PointCloud& cloud, double h_min, double h_max) {
  const double h = cloud.spacing;
  const double rf = 2.5;
  bool changed = false;
  const int big = std::numeric_limits<int>::max() / 2;

  // Boundary ring: merges between neighbours, then inserts on long chords.
  std::vector<Item> ring;
  ring.reserve(cloud.ring.size());
  for (int i : cloud.ring) ring.push_back(from_input(cloud, i));
  for (bool merged = true; merged && ring.size() > 4;) {
    merged = false;
    for (std::size_t k = 0; k < ring.size() && ring.size() > 4; ++k) {
      const std::size_t l = (k + 1) % ring.size();
      if (norm(ring[l].position - ring[k].position) < h_min) {
        ring[k] = merge(ring[k], ring[l]);
        ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(l));
        merged = changed = true;
        if (l == 0) break;
      }
    }
  }
  std::vector<Item> grown;
  int inserted = 0;
  for (std::size_t k = 0; k < ring.size(); ++k) {
    const Item& a = ring[k];
    const Item& b = ring[(k + 1) % ring.size()];
    grown.push_back(a);
    const double d = norm(b.position - a.position);
    if (d <= h_max) continue;
    changed = true;
    const int count = std::max(1, static_cast<int>(std::lround(d / h)) - 1);
    const Item* donor = &a;
    if (b.mobility == Mobility::fixed && a.mobility != Mobility::fixed) donor = &b;
    else if (a.mobility != Mobility::fixed && b.mobility != Mobility::fixed && a.mobility != Mobility::free &&
             b.mobility == Mobility::free) donor = &b;
    for (int m = 1; m <= count; ++m) {
      const double t = static_cast<double>(m) / (count + 1);
      Item p = *donor;
      p.position = (1.0 - t) * a.position + t * b.position;
      p.terms = blend(a.terms, b.terms, 1.0 - t, t);
      p.order = big + inserted++;
      grown.push_back(std::move(p));
    }
  }
  ring = std::move(grown);

  PointCloud outline;
  outline.spacing = h;
  for (std::size_t k = 0; k < ring.size(); ++k) {
    outline.positions.push_back(ring[k].position);
    outline.ring.push_back(static_cast<int>(k));
  }

  // Interior: drop points leaving the domain or crowding the boundary, then merge pairs.
  std::vector<int> interior;
  NeighbourGrid ring_grid(outline.positions, h);
  std::vector<int> nbrs;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.is_boundary(i)) continue;
    const Vec2 p = cloud.positions[i];
    ring_grid.within(p, h_min, nbrs);
    if (!nbrs.empty() || !inside_ring(outline, p) || distance_to_ring(outline, p) < 0.5 * h_min) {
      changed = true;
      continue;
    }
    interior.push_back(static_cast<int>(i));
  }
  std::vector<Item> inner;
  {
    std::vector<Vec2> pts;
    for (int i : interior) pts.push_back(cloud.positions[i]);
    NeighbourGrid grid(pts, h);
    std::vector<char> used(interior.size(), 0);
    for (std::size_t a = 0; a < interior.size(); ++a) {
      if (used[a]) continue;
      used[a] = 1;
      Item item = from_input(cloud, interior[a]);
      grid.within(pts[a], h_min, nbrs);
      int partner = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int b : nbrs) {
        if (used[b]) continue;
        const double d = norm(pts[b] - pts[a]);
        if (d < h_min && d < best) {
          best = d;
          partner = b;
        }
      }
      if (partner >= 0) {
        used[partner] = 1;
        item = merge(item, from_input(cloud, interior[partner]));
        changed = true;
      }
      inner.push_back(std::move(item));
    }
  }

  // Holes: grid candidates far from every point.
  std::vector<Item> fills;
  {
    std::vector<Vec2> pts = outline.positions;
    for (const Item& it : inner) pts.push_back(it.position);
    NeighbourGrid grid(pts, h);
    NeighbourGrid source(cloud.positions, h);
    Vec2 lo = outline.positions.front(), hi = lo;
    for (Vec2 p : outline.positions) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    const double step = 0.5 * h;
    const double r_ins = h_max / std::sqrt(2.0);
    std::vector<Vec2> accepted;
    std::vector<double> coeffs;
    for (long j = static_cast<long>(std::ceil(lo.y / step)); j * step <= hi.y; ++j) {
      for (long i = static_cast<long>(std::ceil(lo.x / step)); i * step <= hi.x; ++i) {
        const Vec2 p{i * step, j * step};
        if (!inside_ring(outline, p) || distance_to_ring(outline, p) < 0.5 * h) continue;
        grid.within(p, r_ins, nbrs);
        if (!nbrs.empty()) continue;
        if (std::any_of(accepted.begin(), accepted.end(), [&](Vec2 q) { return norm(q - p) <= r_ins; })) continue;
        accepted.push_back(p);
        source.within(p, rf * h, nbrs);
        Item item{p, {}, interior_kind, Mobility::free, Vec2{}, big + inserted++, true};
        if (detail::mls_weights(cloud.positions, nbrs, p, h, rf, coeffs)) {
          for (std::size_t k = 0; k < nbrs.size(); ++k) item.terms.emplace_back(nbrs[k], coeffs[k]);
        } else {
          item.terms.emplace_back(source.nearest(p), 1.0);
        }
        fills.push_back(std::move(item));
        changed = true;
      }
    }
  }

  if (!changed) {
    Managed same{cloud, {}};
    same.map.n_in = cloud.size();
    same.map.h = h;
    return same;
  }

  // Output order: retained points by input index, then boundary inserts, then interior fills.
  std::vector<Item> all;
  for (Item& it : ring) all.push_back(std::move(it));
  const std::size_t n_ring = all.size();
  for (Item& it : inner) all.push_back(std::move(it));
  for (Item& it : fills) all.push_back(std::move(it));
  std::vector<int> perm(all.size());
  for (std::size_t k = 0; k < all.size(); ++k) perm[k] = static_cast<int>(k);
  auto category = [&](int a) {
    if (all[a].order < big) return 0;
    return static_cast<std::size_t>(a) < n_ring ? 1 : 2;
  };
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    if (category(a) != category(b)) return category(a) < category(b);
    return all[a].order < all[b].order;
  });
  std::vector<int> slot(all.size());
  for (std::size_t k = 0; k < perm.size(); ++k) slot[perm[k]] = static_cast<int>(k);

  Managed out;
  PointCloud& c = out.cloud;
  c.spacing = h;
  c.segments = cloud.segments;
  const std::size_t n = all.size();
  c.positions.resize(n);
  c.kind.resize(n);
  c.mobility.resize(n);
  c.slide_dir.resize(n);
  out.map.n_in = cloud.size();
  out.map.h = h;
  out.map.radius_factor = rf;
  out.map.entries.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Item& it = all[perm[k]];
    c.positions[k] = it.position;
    c.kind[k] = it.kind;
    c.mobility[k] = it.mobility;
    c.slide_dir[k] = it.slide_dir;
    out.map.entries[k] = {it.terms, it.interpolated, it.position};
  }
  for (std::size_t k = 0; k < n_ring; ++k) c.ring.push_back(slot[k]);
  c = outward_normals(std::move(c));
  c = with_quadrature(std::move(c));
  return out;
}

}  // namespace fbopt
