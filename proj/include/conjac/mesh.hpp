#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace conjac {

constexpr double kMinTetVolume = 1e-12;  // m^3, degeneracy threshold for rest elements

struct TetMesh {
  MatX rest_positions;               // 3 x n
  Eigen::Matrix<int, 4, Eigen::Dynamic> tets;  // 4 x m
  std::vector<Mat3> inv_material_matrix;       // Dm^-1 per element
  std::vector<double> rest_volume;             // per element, > kMinTetVolume
  double density = 1000.0;                     // kg/m^3

  int num_nodes() const { return static_cast<int>(rest_positions.cols()); }
  int num_elements() const { return static_cast<int>(tets.cols()); }
};

namespace detail {

// Strips comments and blank lines; returns false at EOF.
inline bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto pos = line.find('#');
    if (pos != std::string::npos) line.erase(pos);
    std::istringstream probe(line);
    std::string tok;
    if (probe >> tok) return true;
  }
  return false;
}

}  // namespace detail

// TetGen-style .node file: "<n> 3 0 0" header, then "<index> <x> <y> <z>".
// Indices may start at 0 or 1; the base is taken from the first record.
inline MatX load_node_file(const std::string& path, int* index_base = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open node file: " + path);
  std::string line;
  if (!detail::next_data_line(in, line)) throw ParseError(path + ": missing header");
  std::istringstream header(line);
  long n = 0;
  int dim = 0;
  if (!(header >> n >> dim)) throw ParseError(path + ": bad header: " + line);
  if (n <= 0 || dim != 3) throw ParseError(path + ": expected \"<n> 3 0 0\" header");

  MatX pos(3, n);
  int base = 0;
  for (long i = 0; i < n; ++i) {
    if (!detail::next_data_line(in, line)) {
      throw ParseError(path + ": expected " + std::to_string(n) + " nodes, got " + std::to_string(i));
    }
    std::istringstream row(line);
    long idx = 0;
    double x, y, z;
    if (!(row >> idx >> x >> y >> z)) throw ParseError(path + ": bad node record: " + line);
    if (i == 0) base = (idx == 1) ? 1 : 0;
    if (idx - base != i) {
      throw ParseError(path + ": node indices must be consecutive, got " + std::to_string(idx));
    }
    pos.col(i) = Vec3(x, y, z);
  }
  if (index_base) *index_base = base;
  return pos;
}

// TetGen-style .ele file: "<m> 4 0" header, then "<index> <i0> <i1> <i2> <i3>".
// Node indices are shifted by the node file's base.
inline Eigen::Matrix<int, 4, Eigen::Dynamic> load_ele_file(const std::string& path, int num_nodes,
                                                           int index_base) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open ele file: " + path);
  std::string line;
  if (!detail::next_data_line(in, line)) throw ParseError(path + ": missing header");
  std::istringstream header(line);
  long m = 0;
  int nodes_per_ele = 0;
  if (!(header >> m >> nodes_per_ele)) throw ParseError(path + ": bad header: " + line);
  if (m <= 0 || nodes_per_ele != 4) throw ParseError(path + ": expected \"<m> 4 0\" header");

  Eigen::Matrix<int, 4, Eigen::Dynamic> tets(4, m);
  for (long e = 0; e < m; ++e) {
    if (!detail::next_data_line(in, line)) {
      throw ParseError(path + ": expected " + std::to_string(m) + " elements, got " + std::to_string(e));
    }
    std::istringstream row(line);
    long idx = 0;
    long v[4];
    if (!(row >> idx >> v[0] >> v[1] >> v[2] >> v[3])) {
      throw ParseError(path + ": bad element record: " + line);
    }
    for (int k = 0; k < 4; ++k) {
      const long vk = v[k] - index_base;
      if (vk < 0 || vk >= num_nodes) {
        throw ParseError(path + ": element " + std::to_string(idx) + " references node " +
                         std::to_string(v[k]) + " outside the node file");
      }
      tets(k, e) = static_cast<int>(vk);
    }
  }
  return tets;
}

inline Mat3 material_matrix(const MatX& pos, const Eigen::Matrix<int, 4, Eigen::Dynamic>& tets, int e) {
  Mat3 dm;
  for (int k = 0; k < 3; ++k) dm.col(k) = pos.col(tets(k + 1, e)) - pos.col(tets(0, e));
  return dm;
}

// Fills inv_material_matrix and rest_volume from rest_positions/tets.
// Negatively oriented rest elements are repaired by a vertex swap.
inline void compute_rest_data(TetMesh& mesh) {
  const int m = mesh.num_elements();
  mesh.inv_material_matrix.resize(m);
  mesh.rest_volume.resize(m);
  for (int e = 0; e < m; ++e) {
    Mat3 dm = material_matrix(mesh.rest_positions, mesh.tets, e);
    double det = dm.determinant();
    if (det < 0.0) {
      std::swap(mesh.tets(2, e), mesh.tets(3, e));
      dm = material_matrix(mesh.rest_positions, mesh.tets, e);
      det = dm.determinant();
    }
    const double vol = det / 6.0;
    if (vol <= kMinTetVolume) {
      throw GeometryError("element " + std::to_string(e) + " is degenerate (volume " +
                          std::to_string(vol) + " m^3)");
    }
    mesh.inv_material_matrix[e] = dm.inverse();
    mesh.rest_volume[e] = vol;
  }
}

inline TetMesh load_mesh(const std::string& node_path, const std::string& ele_path,
                         double density = 1000.0) {
  if (density <= 0.0) throw ConfigError("density must be positive");
  TetMesh mesh;
  int base = 0;
  mesh.rest_positions = load_node_file(node_path, &base);
  mesh.tets = load_ele_file(ele_path, mesh.num_nodes(), base);
  mesh.density = density;
  compute_rest_data(mesh);
  return mesh;
}

// Quarter-split lumped mass over the active elements, one scalar per node
// repeated across its three coordinates. Orphaned nodes end up with zero mass;
// the integrators mask them rather than divide by it.
inline VecX lumped_mass(const TetMesh& mesh, const std::vector<char>& active_elements) {
  VecX mass = VecX::Zero(3 * mesh.num_nodes());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!active_elements.empty() && !active_elements[e]) continue;
    const double share = mesh.density * mesh.rest_volume[e] / 4.0;
    for (int k = 0; k < 4; ++k) {
      const int node = mesh.tets(k, e);
      mass.segment<3>(3 * node).array() += share;
    }
  }
  return mass;
}

inline VecX lumped_mass(const TetMesh& mesh) {
  return lumped_mass(mesh, std::vector<char>());
}

}  // namespace conjac
