#pragma once

#include <algorithm>
#include <vector>

#include "common.hpp"

namespace conjac {

// Relative pivot floor for the sparse LDLT factorizations.
constexpr double kPivotRatioFloor = 1e-12;

struct NodePartition {
  std::vector<int> fixed;           // homogeneous Dirichlet
  std::vector<int> scripted;        // kinematically driven Dirichlet
  std::vector<int> dynamic;         // inertial nodes
  std::vector<int> representative;  // adaptivity candidates, superset of dynamic
  // every remaining node is quasistatic
};

namespace detail {

inline void check_disjoint_sorted(std::vector<int> a, std::vector<int> b, const char* what) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<int> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  if (!both.empty())
    throw ConfigError(std::string(what) + " sets overlap at node " + std::to_string(both[0]));
}

}  // namespace detail

inline void validate_partition(const NodePartition& p, int n_nodes) {
  auto check_range = [&](const std::vector<int>& ids, const char* what) {
    for (int i : ids)
      if (i < 0 || i >= n_nodes)
        throw ConfigError(std::string(what) + " node " + std::to_string(i) + " out of range");
  };
  check_range(p.fixed, "fixed");
  check_range(p.scripted, "scripted");
  check_range(p.dynamic, "dynamic");
  check_range(p.representative, "representative");
  detail::check_disjoint_sorted(p.fixed, p.scripted, "fixed/scripted");
  detail::check_disjoint_sorted(p.fixed, p.dynamic, "fixed/dynamic");
  detail::check_disjoint_sorted(p.scripted, p.dynamic, "scripted/dynamic");
  std::vector<int> reps = p.representative;
  std::sort(reps.begin(), reps.end());
  for (int d : p.dynamic)
    if (!std::binary_search(reps.begin(), reps.end(), d))
      throw ConfigError("dynamic node " + std::to_string(d) + " is not a representative");
}

// Restriction of the full 3n-DOF system to the non-Dirichlet DOFs. The free
// stiffness shares no storage with the full matrix; gather_values() copies the
// current full values through a precomputed offset table, so the sparsity
// pattern (and the factorization's symbolic analysis) survives any value-level
// change upstream.
struct FreeSystem {
  int n_nodes = 0;
  std::vector<int> free_nodes;    // ascending node ids
  std::vector<int> node_to_free;  // -1 for Dirichlet nodes
  SpMat K_free;                   // values refreshed per step
  std::vector<int> gather;        // full-matrix value offset per free nonzero
  std::vector<int> diag_offset;   // free-matrix value offset of each diagonal entry

  int num_free_dofs() const { return static_cast<int>(3 * free_nodes.size()); }

  int free_dof(int node, int axis) const {
    const int f = node_to_free[node];
    return f < 0 ? -1 : 3 * f + axis;
  }

  void gather_values(const SpMat& K_full) {
    double* dst = K_free.valuePtr();
    const double* src = K_full.valuePtr();
    for (size_t i = 0; i < gather.size(); ++i) dst[i] = src[gather[i]];
  }

  VecX gather_vector(const VecX& full) const {
    VecX out(num_free_dofs());
    for (size_t i = 0; i < free_nodes.size(); ++i)
      out.segment<3>(3 * i) = full.segment<3>(3 * free_nodes[i]);
    return out;
  }

  void scatter_vector(const VecX& free_vec, VecX& full) const {
    for (size_t i = 0; i < free_nodes.size(); ++i)
      full.segment<3>(3 * free_nodes[i]) = free_vec.segment<3>(3 * i);
  }
};

inline FreeSystem build_free_system(const SpMat& full_pattern, int n_nodes,
                                    const std::vector<int>& dirichlet_nodes) {
  FreeSystem fs;
  fs.n_nodes = n_nodes;
  fs.node_to_free.assign(n_nodes, 0);
  for (int i : dirichlet_nodes) {
    if (i < 0 || i >= n_nodes) throw ConfigError("Dirichlet node out of range");
    fs.node_to_free[i] = -1;
  }
  for (int i = 0; i < n_nodes; ++i) {
    if (fs.node_to_free[i] == 0) {
      fs.node_to_free[i] = static_cast<int>(fs.free_nodes.size());
      fs.free_nodes.push_back(i);
    }
  }

  // Encode each kept nonzero's offset in the full value array as its value,
  // then read the offsets back after compression. setFromTriplets keeps one
  // entry per coordinate here, so no summing can corrupt the encoding.
  std::vector<Eigen::Triplet<double>> trips;
  const int* outer = full_pattern.outerIndexPtr();
  const int* inner = full_pattern.innerIndexPtr();
  for (int c = 0; c < full_pattern.outerSize(); ++c) {
    const int node_c = c / 3;
    const int fc = fs.node_to_free[node_c];
    if (fc < 0) continue;
    for (int k = outer[c]; k < outer[c + 1]; ++k) {
      const int r = inner[k];
      const int fr = fs.node_to_free[r / 3];
      if (fr < 0) continue;
      trips.emplace_back(3 * fr + r % 3, 3 * fc + c % 3, static_cast<double>(k));
    }
  }
  const int nf = fs.num_free_dofs();
  fs.K_free.resize(nf, nf);
  fs.K_free.setFromTriplets(trips.begin(), trips.end());
  fs.K_free.makeCompressed();

  fs.gather.resize(fs.K_free.nonZeros());
  for (Eigen::Index i = 0; i < fs.K_free.nonZeros(); ++i)
    fs.gather[i] = static_cast<int>(fs.K_free.valuePtr()[i]);
  std::fill(fs.K_free.valuePtr(), fs.K_free.valuePtr() + fs.K_free.nonZeros(), 0.0);

  fs.diag_offset.assign(nf, -1);
  const int* fouter = fs.K_free.outerIndexPtr();
  const int* finner = fs.K_free.innerIndexPtr();
  for (int c = 0; c < nf; ++c)
    for (int k = fouter[c]; k < fouter[c + 1]; ++k)
      if (finner[k] == c) fs.diag_offset[c] = k;
  for (int c = 0; c < nf; ++c)
    if (fs.diag_offset[c] < 0)
      throw GeometryError("free system misses a diagonal entry at DOF " + std::to_string(c));
  return fs;
}

// DOF-level view of the partition inside one free system. Masked DOFs belong
// to orphaned nodes (no active incident element); they are decoupled at value
// level and solve to exactly zero velocity.
struct DofPartition {
  std::vector<int> dynamic;      // free-DOF indices, ascending
  std::vector<int> quasistatic;  // free-DOF indices, ascending
  std::vector<int> masked;       // free-DOF indices, ascending
  std::vector<char> is_dynamic;  // per free DOF
  std::vector<char> is_masked;

  int num_dynamic_dofs() const { return static_cast<int>(dynamic.size()); }
};

inline DofPartition make_dof_partition(const FreeSystem& fs, const std::vector<int>& dynamic_nodes,
                                       const std::vector<char>& orphaned_nodes) {
  DofPartition p;
  const int nf = fs.num_free_dofs();
  p.is_dynamic.assign(nf, 0);
  p.is_masked.assign(nf, 0);
  for (int node : dynamic_nodes) {
    const int f = fs.node_to_free[node];
    if (f < 0) throw ConfigError("dynamic node " + std::to_string(node) + " is not free");
    if (!orphaned_nodes.empty() && orphaned_nodes[node]) continue;  // orphans cannot be dynamic
    for (int a = 0; a < 3; ++a) p.is_dynamic[3 * f + a] = 1;
  }
  if (!orphaned_nodes.empty()) {
    for (size_t i = 0; i < fs.free_nodes.size(); ++i) {
      if (orphaned_nodes[fs.free_nodes[i]])
        for (int a = 0; a < 3; ++a) p.is_masked[3 * i + a] = 1;
    }
  }
  for (int d = 0; d < nf; ++d) {
    if (p.is_dynamic[d])
      p.dynamic.push_back(d);
    else if (p.is_masked[d])
      p.masked.push_back(d);
    else
      p.quasistatic.push_back(d);
  }
  return p;
}

// Sparse LDLT wrapper that counts symbolic analyses, numeric factorizations
// and right-hand-side columns, and turns tiny pivots into hard errors.
class CondensationSolver {
 public:
  struct Counters {
    long symbolic = 0;
    long factorizations = 0;
    long rhs_columns = 0;
  };

  void analyze(const SpMat& a) {
    ldlt_.analyzePattern(a);
    ++counters.symbolic;
    analyzed_ = true;
  }

  void factorize(const SpMat& a) {
    if (!analyzed_) analyze(a);
    ldlt_.factorize(a);
    ++counters.factorizations;
    if (ldlt_.info() != Eigen::Success)
      throw ConditioningError("sparse LDLT factorization failed");
    const VecX d = ldlt_.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    Eigen::Index worst = 0;
    const double dmin = d.cwiseAbs().minCoeff(&worst);
    if (!(dmax > 0.0) || dmin < kPivotRatioFloor * dmax)
      throw ConditioningError("near-singular system: pivot " + std::to_string(worst) +
                              " has |d| = " + std::to_string(dmin));
  }

  VecX solve(const VecX& rhs) {
    ++counters.rhs_columns;
    return ldlt_.solve(rhs);
  }

  MatX solve_multi(const MatX& rhs) {
    counters.rhs_columns += rhs.cols();
    return ldlt_.solve(rhs);
  }

  const VecX pivots() const { return ldlt_.vectorD(); }

  Counters counters;
  void reset_counters() { counters = Counters{}; }

 private:
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  bool analyzed_ = false;
};

struct CondensationResult {
  MatX jacobian;  // 3n_f x n_dd expanded map: identity rows on dynamic DOFs
  VecX stab;      // 3n_f stabilization velocity, zero on dynamic/masked DOFs
};

// Reference condensation by explicit block extraction; rebuilds sparse blocks
// on every call. Used as the oracle for the adjusted path.
inline CondensationResult condense_blocks(const SpMat& K_free, const DofPartition& p,
                                          const VecX& f_free, double h) {
  const int nf = static_cast<int>(K_free.rows());
  const int nq = static_cast<int>(p.quasistatic.size());
  const int nd = p.num_dynamic_dofs();
  std::vector<int> to_q(nf, -1);
  for (int i = 0; i < nq; ++i) to_q[p.quasistatic[i]] = i;
  std::vector<int> to_d(nf, -1);
  for (int i = 0; i < nd; ++i) to_d[p.dynamic[i]] = i;

  std::vector<Eigen::Triplet<double>> qq, qd;
  const int* outer = K_free.outerIndexPtr();
  const int* inner = K_free.innerIndexPtr();
  const double* vals = K_free.valuePtr();
  for (int c = 0; c < nf; ++c) {
    for (int k = outer[c]; k < outer[c + 1]; ++k) {
      const int r = inner[k];
      if (to_q[r] < 0) continue;
      if (to_q[c] >= 0)
        qq.emplace_back(to_q[r], to_q[c], vals[k]);
      else if (to_d[c] >= 0)
        qd.emplace_back(to_q[r], to_d[c], vals[k]);
    }
  }
  SpMat K_qq(nq, nq), K_qd(nq, nd);
  K_qq.setFromTriplets(qq.begin(), qq.end());
  K_qd.setFromTriplets(qd.begin(), qd.end());

  CondensationSolver solver;
  solver.factorize(K_qq);
  const MatX j_qd = solver.solve_multi(MatX(-K_qd));
  VecX f_q(nq);
  for (int i = 0; i < nq; ++i) f_q(i) = f_free(p.quasistatic[i]);
  const VecX b_q = -(1.0 / h) * solver.solve(f_q);

  CondensationResult out;
  out.jacobian = MatX::Zero(nf, nd);
  out.stab = VecX::Zero(nf);
  for (int i = 0; i < nd; ++i) out.jacobian(p.dynamic[i], i) = 1.0;
  for (int i = 0; i < nq; ++i) {
    out.jacobian.row(p.quasistatic[i]) = j_qd.row(i);
    out.stab(p.quasistatic[i]) = b_q(i);
  }
  return out;
}

// Production condensation path. The adjusted matrix K_A reuses the free
// stiffness pattern: dynamic and masked rows/columns are zeroed at value
// level and their diagonals set to -1, so repartitioning never triggers a new
// symbolic analysis. Solving K_A X = -K_qdA (dynamic rows of the RHS carry
// -identity) yields the expanded Jacobian directly, identity rows included.
class AdjustedCondenser {
 public:
  void init(const FreeSystem& fs) {
    k_adj_ = fs.K_free;  // pattern copy; values rewritten each refresh
    diag_offset_ = fs.diag_offset;
    solver_.analyze(k_adj_);
    initialized_ = true;
  }

  bool initialized() const { return initialized_; }

  // Rewrites the adjusted values from the current free stiffness and
  // partition, then refactorizes numerically.
  void refresh(const SpMat& K_free, const DofPartition& p) {
    if (!initialized_) throw ConfigError("AdjustedCondenser used before init");
    const int nf = static_cast<int>(K_free.rows());
    const int* outer = k_adj_.outerIndexPtr();
    const int* inner = k_adj_.innerIndexPtr();
    double* dst = k_adj_.valuePtr();
    const double* src = K_free.valuePtr();
    auto cut = [&](int dof) { return p.is_dynamic[dof] || p.is_masked[dof]; };
    for (int c = 0; c < nf; ++c) {
      const bool col_cut = cut(c);
      for (int k = outer[c]; k < outer[c + 1]; ++k)
        dst[k] = (col_cut || cut(inner[k])) ? 0.0 : src[k];
    }
    for (int d : p.dynamic) dst[diag_offset_[d]] = -1.0;
    for (int d : p.masked) dst[diag_offset_[d]] = -1.0;
    solver_.factorize(k_adj_);
  }

  // Expanded Jacobian (3n_f x n_dd): quasistatic rows hold -K_qq^-1 K_qd,
  // dynamic rows the identity, masked rows zero. Costs 3 RHS per dynamic node.
  MatX jacobian(const SpMat& K_free, const DofPartition& p) const {
    const int nf = static_cast<int>(K_free.rows());
    const int nd = p.num_dynamic_dofs();
    MatX rhs = MatX::Zero(nf, nd);
    const int* outer = K_free.outerIndexPtr();
    const int* inner = K_free.innerIndexPtr();
    const double* vals = K_free.valuePtr();
    for (int j = 0; j < nd; ++j) {
      const int c = p.dynamic[j];
      for (int k = outer[c]; k < outer[c + 1]; ++k) {
        const int r = inner[k];
        if (!p.is_dynamic[r] && !p.is_masked[r]) rhs(r, j) = -vals[k];
      }
      rhs(c, j) = -1.0;
    }
    return solver_.solve_multi(rhs);
  }

  // b = -(1/h) K_qq^-1 f_q, expanded with zeros on dynamic and masked DOFs.
  VecX stabilization(const VecX& f_free, const DofPartition& p, double h) const {
    VecX rhs = f_free;
    for (int d : p.dynamic) rhs(d) = 0.0;
    for (int d : p.masked) rhs(d) = 0.0;
    return -(1.0 / h) * solver_.solve(rhs);
  }

  // c = -K_qq^-1 r, the quasistatic response to a right-hand side r restricted
  // to quasistatic rows (scripted boundary coupling).
  VecX coupling_response(const VecX& r_free, const DofPartition& p) const {
    VecX rhs = r_free;
    for (int d : p.dynamic) rhs(d) = 0.0;
    for (int d : p.masked) rhs(d) = 0.0;
    return -solver_.solve(rhs);
  }

  CondensationSolver& solver() { return solver_; }
  const CondensationSolver& solver() const { return solver_; }
  const SpMat& adjusted_matrix() const { return k_adj_; }

 private:
  SpMat k_adj_;
  std::vector<int> diag_offset_;
  mutable CondensationSolver solver_;
  bool initialized_ = false;
};

}  // namespace conjac
