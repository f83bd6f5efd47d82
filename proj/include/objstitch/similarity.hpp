#pragma once

#include "objstitch/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <span>

namespace objstitch {

/// The fixed quarter turn [[0,1],[-1,0]] used by the fan frames. In image
/// coordinates (y down) it turns a vector counterclockwise on screen.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 2, 1> rotate90(
    const Eigen::MatrixBase<Derived>& v) {
  return {v.y(), -v.x()};
}

/// Coordinates (x, y) of `next` in the frame anchored at `center` spanned by
/// d = from - center and rotate90(d):
///   next = center + x * d + y * rotate90(d)
/// Both quantities are invariant under any similarity applied to all three
/// points.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> local_coordinates(
    const Eigen::Matrix<Scalar, 2, 1>& center,
    const Eigen::Matrix<Scalar, 2, 1>& from,
    const Eigen::Matrix<Scalar, 2, 1>& next) {
  const Eigen::Matrix<Scalar, 2, 1> d = from - center;
  const Eigen::Matrix<Scalar, 2, 1> e = next - center;
  const Scalar norm2 = d.squaredNorm();
  if (!(norm2 > Scalar(0))) {
    throw Error(ErrorKind::degenerate, "masks",
                "fan frame has coincident center and sample");
  }
  return {e.dot(d) / norm2, e.dot(rotate90(d)) / norm2};
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> from_local_coordinates(
    const Eigen::Matrix<Scalar, 2, 1>& center,
    const Eigen::Matrix<Scalar, 2, 1>& from,
    const Eigen::Matrix<Scalar, 2, 1>& xy) {
  const Eigen::Matrix<Scalar, 2, 1> d = from - center;
  return center + xy.x() * d + xy.y() * rotate90(d);
}

/// p -> [[a,-b],[b,a]] p + t, i.e. uniform scale sqrt(a^2+b^2) and rotation
/// atan2(b, a) in image coordinates.
template <typename Scalar>
struct Similarity {
  Scalar a = Scalar(1);
  Scalar b = Scalar(0);
  Eigen::Matrix<Scalar, 2, 1> t = Eigen::Matrix<Scalar, 2, 1>::Zero();

  static Similarity from_scale_angle(Scalar scale, Scalar angle,
                                     const Eigen::Matrix<Scalar, 2, 1>& shift =
                                         Eigen::Matrix<Scalar, 2, 1>::Zero()) {
    return {scale * std::cos(angle), scale * std::sin(angle), shift};
  }

  Eigen::Matrix<Scalar, 2, 2> linear() const {
    Eigen::Matrix<Scalar, 2, 2> m;
    m << a, -b, b, a;
    return m;
  }

  Eigen::Matrix<Scalar, 2, 1> operator()(
      const Eigen::Matrix<Scalar, 2, 1>& p) const {
    return linear() * p + t;
  }

  Scalar scale() const { return std::hypot(a, b); }
  Scalar angle() const { return std::atan2(b, a); }
};

/// Weighted least-squares similarity mapping src[i] onto dst[i]. An empty
/// weight span means unit weights. Throws when the weighted source points
/// are all coincident.
template <typename Scalar>
Similarity<Scalar> fit_similarity(
    std::span<const Eigen::Matrix<Scalar, 2, 1>> src,
    std::span<const Eigen::Matrix<Scalar, 2, 1>> dst,
    std::span<const Scalar> weights = {}) {
  using Vec = Eigen::Matrix<Scalar, 2, 1>;
  auto weight = [&](std::size_t i) {
    return weights.empty() ? Scalar(1) : weights[i];
  };
  Scalar total = 0;
  Vec src_mean = Vec::Zero();
  Vec dst_mean = Vec::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    total += weight(i);
    src_mean += weight(i) * src[i];
    dst_mean += weight(i) * dst[i];
  }
  if (!(total > Scalar(0))) {
    throw Error(ErrorKind::degenerate, "meshwarp",
                "similarity fit has no weighted points");
  }
  src_mean /= total;
  dst_mean /= total;
  Scalar spread = 0, dot = 0, cross = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec u = src[i] - src_mean;
    const Vec w = dst[i] - dst_mean;
    spread += weight(i) * u.squaredNorm();
    dot += weight(i) * u.dot(w);
    cross += weight(i) * (u.x() * w.y() - u.y() * w.x());
  }
  if (!(spread > Scalar(0))) {
    throw Error(ErrorKind::degenerate, "meshwarp",
                "similarity fit over coincident points");
  }
  Similarity<Scalar> s;
  s.a = dot / spread;
  s.b = cross / spread;
  s.t = dst_mean - s.linear() * src_mean;
  return s;
}

using Similarityd = Similarity<double>;

}  // namespace objstitch
