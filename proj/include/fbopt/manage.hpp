#pragma once

#include <span>
#include <utility>
#include <vector>

#include "fbopt/geometry.hpp"

namespace fbopt {

/// One output point of a resampling: a linear combination of input points. When
/// `interpolated` is set the output sits at the fixed `target` and the coefficients are
/// moving-least-squares weights of the input cloud evaluated there.
struct ResampleEntry {
  std::vector<std::pair<int, double>> terms;
  bool interpolated = false;
  Vec2 target{};
};

/// Linear map from values on the input cloud to values on the managed cloud.
struct ResampleMap {
  std::size_t n_in = 0;
  std::vector<ResampleEntry> entries;
  double h = 0.0;
  double radius_factor = 2.5;

  /// True when the output cloud is the input cloud.
  bool identity() const { return entries.empty(); }
  std::size_t n_out() const { return identity() ? n_in : entries.size(); }

  Field apply(std::span<const double> in) const;
  VectorField apply(std::span<const Vec2> in) const;
  Field apply_transpose(std::span<const double> out_bar) const;
  VectorField apply_transpose(std::span<const Vec2> out_bar) const;

  /// Adds the sensitivities of the output positions and of `apply(values)` (paired with
  /// `values_bar`) to `positions_bar` on the input cloud.
  void position_vjp(const PointCloud& input, std::span<const Vec2> out_positions_bar,
                    std::span<const double> values, std::span<const double> values_bar,
                    std::span<Vec2> positions_bar) const;
  void position_vjp(const PointCloud& input, std::span<const Vec2> out_positions_bar,
                    std::span<const Vec2> values, std::span<const Vec2> values_bar,
                    std::span<Vec2> positions_bar) const;
};

struct Managed {
  PointCloud cloud;
  ResampleMap map;
};

/// Merges points closer than `h_min` and fills holes wider than `h_max`. Boundary points are
/// merged only with their ring neighbours; long boundary chords get evenly spaced inserts.
/// Returns the input unchanged (identity map) when no threshold is triggered.
Managed manage_points(const PointCloud& cloud, double h_min, double h_max);

/// Default thresholds relative to the nominal spacing.
inline constexpr double default_h_min = 0.4;
inline constexpr double default_h_max = 1.4;

Managed manage_points(const PointCloud& cloud);

}  // namespace fbopt
