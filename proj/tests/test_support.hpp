#pragma once

#include <random>

#include <conjac/boxgrid.hpp>
#include <conjac/materials.hpp>

namespace conjac::testing {

// Deterministic random deformation gradients near identity, optionally pushed
// toward large strain or inversion.
inline Mat3 random_gradient(std::mt19937& rng, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Mat3 f;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) f(r, c) = (r == c ? 1.0 : 0.0) + u(rng);
  return f;
}

inline Mat3 random_matrix(std::mt19937& rng, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = u(rng);
  return m;
}

// Small box mesh with jittered interior nodes so stiffness matrices carry no
// accidental structure. Jitter keeps elements well shaped.
inline TetMesh jittered_box_mesh(int nx, int ny, int nz, const Vec3& size, unsigned seed,
                                 double jitter = 0.15) {
  TetMesh mesh;
  build_box_grid(nx, ny, nz, size, Vec3::Zero(), mesh.rest_positions, mesh.tets);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-jitter, jitter);
  const Vec3 cell(size.x() / nx, size.y() / ny, size.z() / nz);
  const double tol = 1e-12;
  for (int i = 0; i < mesh.rest_positions.cols(); ++i) {
    Vec3 p = mesh.rest_positions.col(i);
    for (int a = 0; a < 3; ++a) {
      const bool boundary = p(a) < tol || p(a) > size(a) - tol;
      if (!boundary) p(a) += u(rng) * cell(a);
    }
    mesh.rest_positions.col(i) = p;
  }
  compute_rest_data(mesh);
  return mesh;
}

// Central finite difference of the elastic force with respect to one DOF.
template <typename ForceFn>
VecX fd_force_gradient_column(ForceFn&& force, VecX x, int dof, double eps) {
  const double x0 = x(dof);
  x(dof) = x0 + eps;
  const VecX fp = force(x);
  x(dof) = x0 - eps;
  const VecX fm = force(x);
  x(dof) = x0;
  return (fp - fm) / (2.0 * eps);
}

inline std::vector<std::shared_ptr<const MaterialModel>> uniform_materials(
    const TetMesh& mesh, const std::shared_ptr<const MaterialModel>& model) {
  return std::vector<std::shared_ptr<const MaterialModel>>(mesh.num_elements(), model);
}

}  // namespace conjac::testing
