#pragma once

#include "assembly.hpp"
#include "condensation.hpp"

namespace conjac {

struct SolverConfig {
  double h = 5e-3;      // s
  double beta = 0.5;    // implicit stiffness scale
  double gamma = 1.0 / 3.0;  // stabilization scale on the quasistatic update
  double newton_tol = 1e-8;      // N, residual infinity norm for static solves
  int newton_max_iters = 50;
  double velocity_bound = 1e8;   // m/s, divergence tripwire

  void validate() const {
    if (h <= 0.0) throw ConfigError("time step must be positive");
    if (beta < 0.0) throw ConfigError("beta must be non-negative");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0, 1]");
  }
};

// Inputs shared by both integrators for one velocity solve, all in free-DOF
// numbering. ks_vs is K[:, scripted] * v_scripted gathered to free rows, null
// when no scripted node is moving.
struct StepInputs {
  const SpMat* K_free = nullptr;
  const VecX* f_free = nullptr;     // total forces (elastic + external)
  const VecX* mass_free = nullptr;
  const VecX* v0_free = nullptr;
  const VecX* ks_vs = nullptr;
  double h = 0.0, beta = 0.0, gamma = 0.0;
};

// Linearly implicit full-inertia step: (M - beta h^2 K) v = M v0 + h f.
// Masked (orphaned) DOFs are pinned to zero velocity at value level. The
// system matrix must be positive definite; anything else is a hard error.
class VanillaSolver {
 public:
  void init(const FreeSystem& fs) {
    matrix_ = fs.K_free;
    diag_offset_ = fs.diag_offset;
    solver_.analyze(matrix_);
  }

  VecX solve(const StepInputs& in, const DofPartition& p) {
    const SpMat& k = *in.K_free;
    const int nf = static_cast<int>(k.rows());
    const int* outer = matrix_.outerIndexPtr();
    const int* inner = matrix_.innerIndexPtr();
    double* dst = matrix_.valuePtr();
    const double* src = k.valuePtr();
    const double scale = -in.beta * in.h * in.h;
    for (int c = 0; c < nf; ++c) {
      const bool col_masked = p.is_masked[c] != 0;
      for (int i = outer[c]; i < outer[c + 1]; ++i)
        dst[i] = (col_masked || p.is_masked[inner[i]]) ? 0.0 : scale * src[i];
    }
    for (int d = 0; d < nf; ++d)
      dst[diag_offset_[d]] += p.is_masked[d] ? 1.0 : (*in.mass_free)(d);

    solver_.factorize(matrix_);
    if ((solver_.pivots().array() <= 0.0).any())
      throw StabilityError("full-inertia system matrix is not positive definite; "
                           "reduce the time step or beta");

    VecX rhs = in.mass_free->cwiseProduct(*in.v0_free) + in.h * (*in.f_free);
    if (in.ks_vs) rhs += in.beta * in.h * in.h * (*in.ks_vs);
    for (int d : p.masked) rhs(d) = 0.0;
    return solver_.solve(rhs);
  }

  CondensationSolver& solver() { return solver_; }

 private:
  SpMat matrix_;
  std::vector<int> diag_offset_;
  CondensationSolver solver_;
};

struct CondensedStep {
  MatX jacobian;   // expanded, 3n_f x n_dd
  VecX stab;       // stabilization velocities, zero on dynamic rows
  VecX coupling;   // scripted response, zero-size when unused
  VecX v_dynamic;  // n_dd
  VecX v_free;     // 3n_f
  MatX mtilde_j;   // (M - beta h^2 K) J, reused by the contact projection
  Eigen::LDLT<MatX> reduced;  // factorization of J^T (M - beta h^2 K) J
};

// One condensed velocity solve. Costs one sparse factorization and
// 3 n_d + 1 right-hand sides through it (3 n_d + 2 while scripted nodes move),
// plus a dense solve of dynamic size.
inline CondensedStep condensed_solve(AdjustedCondenser& cond, const StepInputs& in,
                                     const DofPartition& p) {
  cond.refresh(*in.K_free, p);

  CondensedStep out;
  out.jacobian = cond.jacobian(*in.K_free, p);
  out.stab = cond.stabilization(*in.f_free, p, in.h);
  if (in.ks_vs) out.coupling = cond.coupling_response(*in.ks_vs, p);

  const double bh2 = in.beta * in.h * in.h;
  out.mtilde_j = in.mass_free->asDiagonal() * out.jacobian - bh2 * (*in.K_free * out.jacobian);
  MatX a_r = out.jacobian.transpose() * out.mtilde_j;
  a_r = 0.5 * (a_r + a_r.transpose()).eval();

  VecX rhs_full = in.mass_free->cwiseProduct(*in.v0_free) + in.h * (*in.f_free);
  if (in.ks_vs) rhs_full += bh2 * (*in.ks_vs);
  VecX rhs = out.jacobian.transpose() * rhs_full;
  if (out.coupling.size() > 0) rhs -= out.mtilde_j.transpose() * out.coupling;

  out.reduced.compute(a_r);
  if (out.reduced.info() != Eigen::Success)
    throw ConditioningError("reduced dynamic system could not be factorized");
  if (a_r.size() > 0) {
    const VecX d = out.reduced.vectorD();
    if ((d.array() <= 0.0).any())
      throw StabilityError("reduced dynamic system is not positive definite");
  }
  out.v_dynamic = out.reduced.solve(rhs);

  out.v_free = out.jacobian * out.v_dynamic + in.gamma * out.stab;
  if (out.coupling.size() > 0) out.v_free += out.coupling;
  return out;
}

// Weighted least-squares projection onto the column space of the condensation
// map: v_d* = argmin over v_d of || v_f - J v_d || in the M - beta h^2 K
// metric, i.e. v_d* solves J^T M~ J v_d = J^T M~ v_f. Reuses the step's
// reduced factorization, so this costs one dense back-substitution. Affine
// offsets (stabilization, scripted coupling) are the caller's business: pass
// v_f with them subtracted and add them back onto J v_d*.
inline VecX project_to_subspace(const CondensedStep& step, const VecX& v_f) {
  return step.reduced.solve(step.mtilde_j.transpose() * v_f);
}

// Static equilibrium of all free DOFs by Newton iteration with backtracking
// on total potential energy. external is the constant per-DOF force vector
// (gravity and applied loads) over the full system.
inline void quasistatic_init(const Assembler& assembler, FreeSystem& fs, const VecX& external,
                             const SolverConfig& cfg, VecX& positions, GlobalSystem& scratch) {
  const int nf = fs.num_free_dofs();
  if (nf == 0) return;

  SpMat k_adj = fs.K_free;  // pattern copy for masked-DOF handling
  CondensationSolver solver;
  solver.analyze(k_adj);

  std::vector<char> masked(nf, 0);
  for (size_t i = 0; i < fs.free_nodes.size(); ++i)
    if (assembler.orphaned_nodes()[fs.free_nodes[i]])
      for (int a = 0; a < 3; ++a) masked[3 * i + a] = 1;

  auto total_energy = [&](const VecX& x) {
    double e = assembler.elastic_energy(x);
    for (size_t i = 0; i < fs.free_nodes.size(); ++i)
      e -= external.segment<3>(3 * fs.free_nodes[i]).dot(x.segment<3>(3 * fs.free_nodes[i]));
    return e;
  };

  for (int iter = 0; iter < cfg.newton_max_iters; ++iter) {
    assembler.assemble(positions, scratch);
    VecX f_free = fs.gather_vector(scratch.forces + external);
    for (int d = 0; d < nf; ++d)
      if (masked[d]) f_free(d) = 0.0;
    if (f_free.lpNorm<Eigen::Infinity>() < cfg.newton_tol) return;

    fs.gather_values(scratch.stiffness);
    const int* outer = k_adj.outerIndexPtr();
    const int* inner = k_adj.innerIndexPtr();
    double* dst = k_adj.valuePtr();
    const double* src = fs.K_free.valuePtr();
    for (int c = 0; c < nf; ++c)
      for (int i = outer[c]; i < outer[c + 1]; ++i)
        dst[i] = (masked[c] || masked[inner[i]]) ? 0.0 : src[i];
    for (int d = 0; d < nf; ++d)
      if (masked[d]) dst[fs.diag_offset[d]] = -1.0;
    solver.factorize(k_adj);

    // Newton direction: K dx = -f, with K negative definite around stable
    // states, so dx is an energy descent direction.
    VecX dx = solver.solve(-f_free);
    const double e0 = total_energy(positions);
    const double slope = -f_free.dot(dx);
    double t = 1.0;
    VecX trial = positions;
    for (int ls = 0; ls < 24; ++ls) {
      trial = positions;
      for (size_t i = 0; i < fs.free_nodes.size(); ++i)
        trial.segment<3>(3 * fs.free_nodes[i]) += t * dx.segment<3>(3 * i);
      if (total_energy(trial) <= e0 + 1e-4 * t * slope) break;
      t *= 0.5;
    }
    positions = trial;
  }

  assembler.assemble(positions, scratch);
  VecX f_free = fs.gather_vector(scratch.forces + external);
  for (int d = 0; d < nf; ++d)
    if (masked[d]) f_free(d) = 0.0;
  if (f_free.lpNorm<Eigen::Infinity>() >= cfg.newton_tol)
    throw DivergenceError("static solve did not converge: residual " +
                          std::to_string(f_free.lpNorm<Eigen::Infinity>()) + " N after " +
                          std::to_string(cfg.newton_max_iters) + " iterations");
}

}  // namespace conjac
