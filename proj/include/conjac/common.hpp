#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>
#include <string>

namespace conjac {

using Vec3 = Eigen::Vector3d;
using Vec4i = Eigen::Vector4i;
using Mat3 = Eigen::Matrix3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;  // column-major CSC

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct GeometryError : std::runtime_error {
  explicit GeometryError(const std::string& msg) : std::runtime_error("geometry error: " + msg) {}
};

struct ConditioningError : std::runtime_error {
  explicit ConditioningError(const std::string& msg) : std::runtime_error("conditioning error: " + msg) {}
};

struct StabilityError : std::runtime_error {
  explicit StabilityError(const std::string& msg) : std::runtime_error("stability error: " + msg) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error("divergence error: " + msg) {}
};

// Column-major flattening, consistent with Eigen's default storage. All 9x9
// operator blocks in this library act on vec(F) in this ordering.
inline Vec9 vec(const Mat3& m) {
  return Eigen::Map<const Vec9>(m.data());
}

inline Mat3 unvec(const Vec9& v) {
  return Eigen::Map<const Mat3>(v.data());
}

// Cross-product matrix: hat(a) * b == a.cross(b).
inline Mat3 hat(const Vec3& a) {
  Mat3 m;
  m << 0, -a.z(), a.y(),
       a.z(), 0, -a.x(),
       -a.y(), a.x(), 0;
  return m;
}

inline bool all_finite(const VecX& v) {
  return v.allFinite();
}

}  // namespace conjac
