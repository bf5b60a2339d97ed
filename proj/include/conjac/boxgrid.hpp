#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "mesh.hpp"

namespace conjac {

// Structured box discretization: (nx*ny*nz) cells, 5 tets per cell with the
// split mirrored on odd-parity cells so shared faces conform. Good enough for
// bars, slabs and blocks; anything fancier should come from a real mesher.
inline void build_box_grid(int nx, int ny, int nz, const Vec3& size, const Vec3& origin,
                           MatX& positions, Eigen::Matrix<int, 4, Eigen::Dynamic>& tets) {
  if (nx < 1 || ny < 1 || nz < 1) throw ConfigError("box grid needs at least one cell per axis");
  if ((size.array() <= 0.0).any()) throw ConfigError("box grid size must be positive");

  const int px = nx + 1, py = ny + 1, pz = nz + 1;
  positions.resize(3, px * py * pz);
  auto vid = [&](int i, int j, int k) { return (k * py + j) * px + i; };
  for (int k = 0; k < pz; ++k)
    for (int j = 0; j < py; ++j)
      for (int i = 0; i < px; ++i)
        positions.col(vid(i, j, k)) =
            origin + Vec3(size.x() * i / nx, size.y() * j / ny, size.z() * k / nz);

  // Corner tets around one diagonal plus the central tet; XOR the x bit on
  // odd cells to mirror the split.
  static const int kSplit[5][4] = {
      {1, 0, 3, 5}, {2, 3, 0, 6}, {4, 5, 6, 0}, {7, 6, 5, 3}, {0, 3, 5, 6}};

  tets.resize(4, 5 * nx * ny * nz);
  int e = 0;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        int corner[8];
        for (int c = 0; c < 8; ++c)
          corner[c] = vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
        const bool mirror = ((i + j + k) & 1) != 0;
        for (const auto& t : kSplit) {
          for (int v = 0; v < 4; ++v) {
            const int local = mirror ? (t[v] ^ 1) : t[v];
            tets(v, e) = corner[local];
          }
          ++e;
        }
      }
}

inline TetMesh build_box_mesh(int nx, int ny, int nz, const Vec3& size,
                              const Vec3& origin = Vec3::Zero(), double density = 1000.0) {
  TetMesh mesh;
  mesh.density = density;
  build_box_grid(nx, ny, nz, size, origin, mesh.rest_positions, mesh.tets);
  compute_rest_data(mesh);
  return mesh;
}

inline void write_node_file(const std::string& path, const MatX& positions) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write node file: " + path);
  out << positions.cols() << " 3 0 0\n";
  char buf[128];
  for (int i = 0; i < positions.cols(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %.17g\n", i, positions(0, i), positions(1, i),
                  positions(2, i));
    out << buf;
  }
}

inline void write_ele_file(const std::string& path,
                           const Eigen::Matrix<int, 4, Eigen::Dynamic>& tets) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write ele file: " + path);
  out << tets.cols() << " 4 0\n";
  for (int e = 0; e < tets.cols(); ++e)
    out << e << ' ' << tets(0, e) << ' ' << tets(1, e) << ' ' << tets(2, e) << ' ' << tets(3, e)
        << '\n';
}

}  // namespace conjac
