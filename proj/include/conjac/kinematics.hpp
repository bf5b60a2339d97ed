#pragma once

#include <cmath>

#include "common.hpp"

namespace conjac {

// Below this, the closed-form rotation gradient eigenvalues 2/(sigma_i+sigma_j)
// blow up and we fall back to finite differences of the polar decomposition.
constexpr double kMinSigmaPairSum = 1e-8;
constexpr double kPolarFdEps = 1e-6;

struct SvdRV {
  Mat3 U;
  Vec3 sigma;
  Mat3 V;
};

// Rotation-variant SVD: U and V are proper rotations; if det F < 0 the
// smallest (last) singular value carries the sign.
inline SvdRV svd_rv(const Mat3& F) {
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SvdRV out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  if (out.U.determinant() < 0.0) {
    out.U.col(2) = -out.U.col(2);
    out.sigma(2) = -out.sigma(2);
  }
  if (out.V.determinant() < 0.0) {
    out.V.col(2) = -out.V.col(2);
    out.sigma(2) = -out.sigma(2);
  }
  return out;
}

struct PolarDecomposition {
  Mat3 R;  // proper rotation, det = +1
  Mat3 S;  // symmetric stretch, F = R S
};

inline PolarDecomposition polar(const SvdRV& svd) {
  return {svd.U * svd.V.transpose(),
          svd.V * svd.sigma.asDiagonal() * svd.V.transpose()};
}

inline PolarDecomposition polar(const Mat3& F) { return polar(svd_rv(F)); }

namespace detail {

// The three twist modes spanning the rotation gradient: each is a rotated
// skew basis matrix with eigenvalue 2 over the matching singular value pair.
inline void rotation_modes(const SvdRV& svd, Vec9 q[3], double lambda[3]) {
  static const double kInvSqrt2 = 1.0 / std::sqrt(2.0);
  Mat3 t;
  t << 0, -1, 0, 1, 0, 0, 0, 0, 0;  // z twist
  q[0] = vec(kInvSqrt2 * svd.U * t * svd.V.transpose());
  lambda[0] = 2.0 / (svd.sigma(0) + svd.sigma(1));
  t << 0, 0, 0, 0, 0, 1, 0, -1, 0;  // x twist
  q[1] = vec(kInvSqrt2 * svd.U * t * svd.V.transpose());
  lambda[1] = 2.0 / (svd.sigma(1) + svd.sigma(2));
  t << 0, 0, 1, 0, 0, 0, -1, 0, 0;  // y twist
  q[2] = vec(kInvSqrt2 * svd.U * t * svd.V.transpose());
  lambda[2] = 2.0 / (svd.sigma(0) + svd.sigma(2));
}

inline bool rotation_gradient_degenerate(const SvdRV& svd) {
  const Vec3& s = svd.sigma;
  return std::abs(s(0) + s(1)) < kMinSigmaPairSum || std::abs(s(1) + s(2)) < kMinSigmaPairSum ||
         std::abs(s(0) + s(2)) < kMinSigmaPairSum;
}

}  // namespace detail

// dR/dF as a 9x9 on vec(dF). Only valid away from the degenerate pair sums;
// rotation_rate() handles the fallback.
inline Mat9 rotation_gradient(const SvdRV& svd) {
  Vec9 q[3];
  double lambda[3];
  detail::rotation_modes(svd, q, lambda);
  Mat9 g = Mat9::Zero();
  for (int i = 0; i < 3; ++i) g += lambda[i] * q[i] * q[i].transpose();
  return g;
}

inline Mat9 rotation_gradient(const Mat3& F) { return rotation_gradient(svd_rv(F)); }

// Rdot = (dR/dF) : Fdot, evaluated without forming the 9x9. Near-degenerate
// singular value pairs break the closed form; there the polar rotation may be
// discontinuous along Fdot, so we return a regularized rate: a central
// difference probed at a fixed arc length along the unit direction, scaled by
// |Fdot|. Finite by construction and exactly homogeneous in Fdot.
inline Mat3 rotation_rate(const SvdRV& svd, const Mat3& F, const Mat3& Fdot) {
  if (detail::rotation_gradient_degenerate(svd)) {
    const double scale = Fdot.norm();
    if (scale == 0.0) return Mat3::Zero();
    const Mat3 dir = Fdot / scale;
    const Mat3 r_plus = polar(Mat3(F + kPolarFdEps * dir)).R;
    const Mat3 r_minus = polar(Mat3(F - kPolarFdEps * dir)).R;
    return scale * (r_plus - r_minus) / (2.0 * kPolarFdEps);
  }
  Vec9 q[3];
  double lambda[3];
  detail::rotation_modes(svd, q, lambda);
  const Vec9 fdot = vec(Fdot);
  Vec9 rdot = Vec9::Zero();
  for (int i = 0; i < 3; ++i) rdot += lambda[i] * q[i].dot(fdot) * q[i];
  return unvec(rdot);
}

inline Mat3 rotation_rate(const Mat3& F, const Mat3& Fdot) {
  return rotation_rate(svd_rv(F), F, Fdot);
}

// Sdot = R^T (Fdot - Rdot S). Symmetric up to roundoff; returned unsymmetrized
// so the property is testable.
inline Mat3 stretch_rate(const Mat3& F, const Mat3& Fdot) {
  const SvdRV svd = svd_rv(F);
  const PolarDecomposition rs = polar(svd);
  const Mat3 rdot = rotation_rate(svd, F, Fdot);
  return rs.R.transpose() * (Fdot - rdot * rs.S);
}

// Fdot from nodal velocities: columns of Vs are v1-v0, v2-v0, v3-v0.
inline Mat3 velocity_gradient(const Mat3& Vs, const Mat3& inv_material_matrix) {
  return Vs * inv_material_matrix;
}

}  // namespace conjac
