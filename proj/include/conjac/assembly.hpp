#pragma once

#include <array>
#include <memory>
#include <vector>

#include "materials.hpp"
#include "mesh.hpp"

namespace conjac {

struct GlobalSystem {
  VecX forces;     // 3n elastic forces
  SpMat stiffness; // 3n x 3n, K = df/dx (negative semidefinite at stable states)
};

// Looks up the value-array offset of (row, col) in a compressed column-major
// sparse matrix. Returns -1 if the coordinate is not in the pattern.
inline int value_offset(const SpMat& m, int row, int col) {
  const int* outer = m.outerIndexPtr();
  const int* inner = m.innerIndexPtr();
  const int* lo = inner + outer[col];
  const int* hi = inner + outer[col + 1];
  const int* it = std::lower_bound(lo, hi, row);
  if (it == hi || *it != row) return -1;
  return static_cast<int>(it - inner);
}

// Assembles nodal elastic forces and the global tangent stiffness. The
// sparsity pattern covers every element once and for all; deactivating
// elements only changes values, so downstream factorizations keep their
// symbolic analysis. Element loops run in a fixed order, bitwise reproducible
// across runs.
class Assembler {
 public:
  Assembler(const TetMesh& mesh, std::vector<std::shared_ptr<const MaterialModel>> materials)
      : mesh_(&mesh), materials_(std::move(materials)) {
    const int m = mesh.num_elements();
    const int n = mesh.num_nodes();
    if (static_cast<int>(materials_.size()) != m)
      throw ConfigError("need one material per element");
    active_.assign(m, 1);

    // Per-node shape gradients: row j of W is the gradient of node j's weight.
    shape_grad_.resize(m);
    for (int e = 0; e < m; ++e) {
      const Mat3& bm = mesh.inv_material_matrix[e];
      Eigen::Matrix<double, 4, 3> w;
      w.row(1) = bm.row(0);
      w.row(2) = bm.row(1);
      w.row(3) = bm.row(2);
      w.row(0) = -(w.row(1) + w.row(2) + w.row(3));
      shape_grad_[e] = w;
    }

    // Pattern: 12x12 block per element plus a 3x3 diagonal block per node so
    // contact stiffness and mass always have slots.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(m) * 144 + static_cast<size_t>(n) * 9);
    for (int e = 0; e < m; ++e)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k)
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              trips.emplace_back(3 * mesh.tets(j, e) + a, 3 * mesh.tets(k, e) + b, 0.0);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) trips.emplace_back(3 * i + a, 3 * i + b, 0.0);
    pattern_.resize(3 * n, 3 * n);
    pattern_.setFromTriplets(trips.begin(), trips.end());
    pattern_.makeCompressed();

    scatter_.resize(m);
    for (int e = 0; e < m; ++e) {
      auto& offs = scatter_[e];
      int idx = 0;
      for (int k = 0; k < 4; ++k)
        for (int b = 0; b < 3; ++b)
          for (int j = 0; j < 4; ++j)
            for (int a = 0; a < 3; ++a)
              offs[idx++] = value_offset(pattern_, 3 * mesh.tets(j, e) + a, 3 * mesh.tets(k, e) + b);
    }
    refresh_node_state();
  }

  const TetMesh& mesh() const { return *mesh_; }
  const SpMat& pattern() const { return pattern_; }
  const std::vector<char>& active_elements() const { return active_; }
  const std::vector<char>& orphaned_nodes() const { return orphaned_; }
  const VecX& mass() const { return mass_; }
  const MaterialModel& material(int e) const { return *materials_[e]; }

  bool is_active(int e) const { return active_[e] != 0; }

  // Value-level removal: the elements stop contributing forces, stiffness and
  // mass. Already-inactive entries are ignored.
  void remove_elements(const std::vector<int>& elements) {
    for (int e : elements) {
      if (e < 0 || e >= mesh_->num_elements())
        throw ConfigError("remove_elements: element " + std::to_string(e) + " out of range");
      active_[e] = 0;
    }
    refresh_node_state();
  }

  GlobalSystem make_system() const {
    GlobalSystem sys;
    sys.forces = VecX::Zero(3 * mesh_->num_nodes());
    sys.stiffness = pattern_;
    return sys;
  }

  Mat3 deformation_gradient(const VecX& positions, int e) const {
    Mat3 ds;
    const auto& t = mesh_->tets;
    for (int k = 0; k < 3; ++k)
      ds.col(k) = positions.segment<3>(3 * t(k + 1, e)) - positions.segment<3>(3 * t(0, e));
    return ds * mesh_->inv_material_matrix[e];
  }

  Mat3 velocity_gradient(const VecX& velocities, int e) const {
    return deformation_gradient(velocities, e);  // same linear map applied to v
  }

  // Refreshes forces and stiffness values in a system created by
  // make_system(). No allocation happens here.
  void assemble(const VecX& positions, GlobalSystem& sys) const {
    sys.forces.setZero();
    std::fill(sys.stiffness.valuePtr(), sys.stiffness.valuePtr() + sys.stiffness.nonZeros(), 0.0);
    double* vals = sys.stiffness.valuePtr();

    Eigen::Matrix<double, 9, 12> g;
    for (int e = 0; e < mesh_->num_elements(); ++e) {
      if (!active_[e]) continue;
      const Mat3 F = deformation_gradient(positions, e);
      const Mat3 P = materials_[e]->pk1_stress(F);
      const Mat9 H = materials_[e]->pk1_gradient(F);
      const double vol = mesh_->rest_volume[e];
      const auto& w = shape_grad_[e];

      g.setZero();
      for (int j = 0; j < 4; ++j)
        for (int b = 0; b < 3; ++b)
          for (int a = 0; a < 3; ++a) g(a + 3 * b, 3 * j + a) = w(j, b);

      const Eigen::Matrix<double, 12, 1> fe = -vol * g.transpose() * vec(P);
      const Eigen::Matrix<double, 12, 12> ke = -vol * g.transpose() * H * g;

      for (int j = 0; j < 4; ++j)
        sys.forces.segment<3>(3 * mesh_->tets(j, e)) += fe.segment<3>(3 * j);
      const auto& offs = scatter_[e];
      int idx = 0;
      for (int kc = 0; kc < 12; ++kc)
        for (int jr = 0; jr < 12; ++jr) vals[offs[idx++]] += ke(jr, kc);
    }
  }

  double elastic_energy(const VecX& positions) const {
    double sum = 0.0;
    for (int e = 0; e < mesh_->num_elements(); ++e) {
      if (!active_[e]) continue;
      sum += mesh_->rest_volume[e] * materials_[e]->energy_density(deformation_gradient(positions, e));
    }
    return sum;
  }

 private:
  void refresh_node_state() {
    const int n = mesh_->num_nodes();
    std::vector<int> incident(n, 0);
    for (int e = 0; e < mesh_->num_elements(); ++e) {
      if (!active_[e]) continue;
      for (int k = 0; k < 4; ++k) ++incident[mesh_->tets(k, e)];
    }
    orphaned_.assign(n, 0);
    for (int i = 0; i < n; ++i) orphaned_[i] = incident[i] == 0 ? 1 : 0;
    mass_ = lumped_mass(*mesh_, active_);
  }

  const TetMesh* mesh_;
  std::vector<std::shared_ptr<const MaterialModel>> materials_;
  std::vector<char> active_;
  std::vector<char> orphaned_;
  VecX mass_;
  SpMat pattern_;
  std::vector<Eigen::Matrix<double, 4, 3>> shape_grad_;
  std::vector<std::array<int, 144>> scatter_;
};

}  // namespace conjac
