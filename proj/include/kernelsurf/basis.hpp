#pragma once

#include <cmath>

#include "kernelsurf/geometry.hpp"

namespace kernelsurf {

/// Squared-argument quadratic B-spline, supported on (-3/2, 3/2) with peak
/// value 3/2 at the origin.
constexpr double bspline(double s) {
  if (s < -1.5 || s > 1.5) return 0.0;
  if (s <= -0.5) return (s + 1.5) * (s + 1.5);
  if (s <= 0.5) return -2.0 * s * s + 1.5;
  return (s - 1.5) * (s - 1.5);
}

constexpr double bspline_deriv(double s) {
  if (s < -1.5 || s > 1.5) return 0.0;
  if (s <= -0.5) return 2.0 * (s + 1.5);
  if (s <= 0.5) return -4.0 * s;
  return 2.0 * (s - 1.5);
}

/// Separable Bezier kernel at the given level width.
inline double bezier_kernel(const Vec3& x, const Vec3& y, double width) {
  return bspline((x.x() - y.x()) / width) * bspline((x.y() - y.y()) / width) *
         bspline((x.z() - y.z()) / width);
}

/// Gradient of bezier_kernel with respect to its first argument.
inline Vec3 bezier_kernel_grad(const Vec3& x, const Vec3& y, double width) {
  const double sx = (x.x() - y.x()) / width;
  const double sy = (x.y() - y.y()) / width;
  const double sz = (x.z() - y.z()) / width;
  const double bx = bspline(sx), by = bspline(sy), bz = bspline(sz);
  return Vec3(bspline_deriv(sx) * by * bz, bx * bspline_deriv(sy) * bz,
              bx * by * bspline_deriv(sz)) /
         width;
}

}  // namespace kernelsurf
