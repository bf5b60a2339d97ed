#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>

#include "adaptivity.hpp"
#include "assembly.hpp"
#include "boxgrid.hpp"
#include "condensation.hpp"
#include "contact.hpp"
#include "integrators.hpp"
#include "scene.hpp"

namespace conjac {

struct DiagRow {
  int step = 0;
  double time = 0.0;
  int n_dynamic = 0;
  long solves = 0;          // right-hand sides through the condensation factorization
  long factorizations = 0;
  double assemble_s = 0.0;
  double solve_s = 0.0;
  double step_s = 0.0;
  double fq_inf = 0.0;      // quasistatic force residual at step start, N
  double kinetic_energy = 0.0;
  VecX region_metrics;      // empty unless adaptivity is on
};

class Simulator {
 public:
  explicit Simulator(const Scene& scene) : scene_(scene) {
    mesh_ = load_mesh(scene.node_path, scene.ele_path, scene.density);
    const int n = mesh_.num_nodes();
    const int m = mesh_.num_elements();

    // Materials: one shared model per distinct definition, first matching
    // override box (by rest centroid) wins.
    std::vector<std::shared_ptr<const MaterialModel>> elem_mat(m);
    const auto base = make_material(scene.material_name, scene.material);
    std::vector<std::shared_ptr<const MaterialModel>> override_models;
    for (const auto& ov : scene.material_overrides)
      override_models.push_back(make_material(ov.name, ov.params));
    for (int e = 0; e < m; ++e) {
      elem_mat[e] = base;
      const Vec3 c = element_centroid(e);
      for (size_t k = 0; k < scene.material_overrides.size(); ++k) {
        if (scene.material_overrides[k].box.contains(c)) {
          elem_mat[e] = override_models[k];
          break;
        }
      }
    }
    assembler_ = std::make_unique<Assembler>(mesh_, std::move(elem_mat));
    sys_ = assembler_->make_system();

    resolve_node_sets();
    resolve_regions();

    x_ = VecX(3 * n);
    for (int i = 0; i < n; ++i) x_.segment<3>(3 * i) = mesh_.rest_positions.col(i);
    v_ = VecX::Zero(3 * n);

    if (scene_.contact.enabled) {
      contact_ = std::make_unique<HalfSpaceContact>(scene_.contact, n);
      contact_diag_offsets_.resize(n);
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            contact_diag_offsets_[i][3 * b + a] =
                value_offset(assembler_->pattern(), 3 * i + a, 3 * i + b);
    }

    if (scene_.adaptivity.enabled)
      adapt_ = AdaptivityState(scene_.adaptivity, regions_.num_regions);

    cuts_applied_.assign(scene_.cuts.size(), 0);
    rebuild_free_system();

    if (scene_.quasistatic_start) {
      const VecX f_ext = constant_external_forces();
      quasistatic_init(*assembler_, fs_, f_ext, scene_.solver, x_, sys_);
      solvers_ready_ = false;  // init used the free stiffness values as scratch
    }
  }

  // Bench and comparison hooks; call before the first step.
  void override_dynamic_nodes(std::vector<int> nodes) {
    pinned_dynamic_ = std::move(nodes);
    scene_.adaptivity.enabled = false;
    validate_dynamic_set();
  }
  void force_integrator(const std::string& name) {
    if (name != "conjac" && name != "vanilla") throw ConfigError("unknown integrator: " + name);
    scene_.integrator = name;
  }

  const Scene& scene() const { return scene_; }
  const TetMesh& mesh() const { return mesh_; }
  const Assembler& assembler() const { return *assembler_; }
  const FreeSystem& free_system() const { return fs_; }
  const AdjustedCondenser& condenser() const { return condenser_; }
  const std::vector<int>& dynamic_nodes() const { return dynamic_now_; }
  const std::vector<int>& scripted_nodes() const { return scripted_active_; }
  const std::vector<int>& fixed_nodes() const { return fixed_nodes_; }
  const RegionMap& regions() const { return regions_; }
  double time() const { return t_; }
  int step_count() const { return step_count_; }
  const VecX& positions() const { return x_; }
  const VecX& velocities() const { return v_; }
  const std::vector<DiagRow>& diagnostics() const { return diag_; }

  double kinetic_energy() const {
    return 0.5 * assembler_->mass().cwiseProduct(v_).dot(v_);
  }

  // Total force (elastic + external) currently acting on each DOF.
  VecX total_forces() {
    assembler_->assemble(x_, sys_);
    VecX f = sys_.forces + constant_external_forces() + pull_forces(t_);
    if (contact_) {
      // Read-only evaluation: forces for currently anchored nodes.
      for (int i = 0; i < mesh_.num_nodes(); ++i)
        if (contact_->anchored(i)) f.segment<3>(3 * i) += contact_->force(i, x_);
    }
    return f;
  }

  // Infinity norm of the total force over quasistatic free DOFs at the
  // current state.
  double quasistatic_residual() {
    const VecX f = total_forces();
    const DofPartition part = make_dof_partition(fs_, dynamic_now_, assembler_->orphaned_nodes());
    const VecX f_free = fs_.gather_vector(f);
    double worst = 0.0;
    for (int d : part.quasistatic) worst = std::max(worst, std::abs(f_free(d)));
    return worst;
  }

  void step() {
    using clock = std::chrono::steady_clock;
    const auto t_begin = clock::now();
    const double h = scene_.solver.h;

    apply_due_cuts();
    apply_release();
    if (!solvers_ready_) prepare_solvers();

    DiagRow row;
    row.step = step_count_;
    row.time = t_;

    // Scripted boundary velocities for this step.
    bool scripted_moving = false;
    if (!scripted_active_.empty() && scene_.motion.kind != ScriptedMotion::Kind::None) {
      for (int node : scripted_active_) {
        const Vec3 rest = mesh_.rest_positions.col(node);
        const Vec3 now = scene_.motion.at(rest, t_);
        const Vec3 next = scene_.motion.at(rest, t_ + h);
        const Vec3 vs = (next - now) / h;
        v_.segment<3>(3 * node) = vs;
        if (vs.squaredNorm() > 0.0) scripted_moving = true;
      }
    }

    const auto t_assemble = clock::now();
    assembler_->assemble(x_, sys_);
    VecX f_full = sys_.forces + constant_external_forces() + pull_forces(t_);
    std::vector<int> contact_nodes;
    if (contact_) {
      contact_nodes = contact_->update(x_, contact_eligible_);
      const Mat3 dfdx = contact_->force_gradient();
      double* vals = sys_.stiffness.valuePtr();
      for (int node : contact_nodes) {
        f_full.segment<3>(3 * node) += contact_->force(node, x_);
        const auto& offs = contact_diag_offsets_[node];
        for (int b = 0; b < 3; ++b)
          for (int a = 0; a < 3; ++a) vals[offs[3 * b + a]] += dfdx(a, b);
      }
    }
    row.assemble_s = std::chrono::duration<double>(clock::now() - t_assemble).count();

    // Liveliness-driven partition update, from the state entering this step.
    if (scene_.adaptivity.enabled) {
      row.region_metrics =
          liveliness_metric(*assembler_, x_, v_, regions_, scene_.adaptivity.volume_weighted);
      adapt_.push(row.region_metrics);
      const auto lively = adapt_.lively_regions(*assembler_, regions_);
      dynamic_now_ = select_dynamic_nodes(pinned_dynamic_, regions_, lively);
    } else {
      dynamic_now_ = pinned_dynamic_;
    }

    fs_.gather_values(sys_.stiffness);
    const DofPartition part = make_dof_partition(fs_, dynamic_now_, assembler_->orphaned_nodes());
    const VecX mass_free = fs_.gather_vector(assembler_->mass());
    const VecX f_free = fs_.gather_vector(f_full);
    const VecX v0_free = fs_.gather_vector(v_);

    row.n_dynamic = static_cast<int>(part.dynamic.size()) / 3;
    double worst = 0.0;
    for (int d : part.quasistatic) worst = std::max(worst, std::abs(f_free(d)));
    row.fq_inf = worst;

    VecX ks_vs;
    if (scripted_moving) ks_vs = scripted_coupling_rhs();

    StepInputs in;
    in.K_free = &fs_.K_free;
    in.f_free = &f_free;
    in.mass_free = &mass_free;
    in.v0_free = &v0_free;
    in.ks_vs = scripted_moving ? &ks_vs : nullptr;
    in.h = h;
    in.beta = scene_.solver.beta;
    in.gamma = scene_.solver.gamma;

    const auto t_solve = clock::now();
    VecX v_free;
    std::optional<CondensedStep> cstep;
    if (scene_.integrator == "conjac") {
      const auto before = condenser_.solver().counters;
      cstep = condensed_solve(condenser_, in, part);
      v_free = cstep->v_free;
      const auto after = condenser_.solver().counters;
      row.solves = after.rhs_columns - before.rhs_columns;
      row.factorizations = after.factorizations - before.factorizations;
    } else {
      v_free = vanilla_.solve(in, part);
      row.solves = 1;
      row.factorizations = 1;
    }

    // Friction filter in node space, then return to the condensed manifold.
    if (contact_ && !contact_nodes.empty()) {
      VecX v_full_new = v_;
      fs_.scatter_vector(v_free, v_full_new);
      const VecX v_filtered_before = v_full_new;
      contact_->friction_filter(contact_nodes, v_, v_full_new);
      if ((v_full_new - v_filtered_before).squaredNorm() > 0.0) {
        VecX v_filt_free = fs_.gather_vector(v_full_new);
        if (cstep) {
          VecX target = v_filt_free - scene_.solver.gamma * cstep->stab;
          if (cstep->coupling.size() > 0) target -= cstep->coupling;
          const VecX v_d = project_to_subspace(*cstep, target);
          v_free = cstep->jacobian * v_d + scene_.solver.gamma * cstep->stab;
          if (cstep->coupling.size() > 0) v_free += cstep->coupling;
        } else {
          v_free = v_filt_free;
        }
      }
    }
    row.solve_s = std::chrono::duration<double>(clock::now() - t_solve).count();

    if (!v_free.allFinite())
      throw DivergenceError("non-finite velocity at step " + std::to_string(step_count_));
    if (v_free.size() > 0 && v_free.lpNorm<Eigen::Infinity>() > scene_.solver.velocity_bound)
      throw DivergenceError("velocity " + std::to_string(v_free.lpNorm<Eigen::Infinity>()) +
                            " m/s exceeds the divergence bound at step " +
                            std::to_string(step_count_));

    // Position update: dynamic rows advance with their inertial velocity,
    // quasistatic rows follow the condensation map plus stabilization.
    for (size_t i = 0; i < fs_.free_nodes.size(); ++i) {
      const int node = fs_.free_nodes[i];
      x_.segment<3>(3 * node) += h * v_free.segment<3>(3 * i);
      v_.segment<3>(3 * node) = v_free.segment<3>(3 * i);
    }
    for (int node : scripted_active_)
      x_.segment<3>(3 * node) = scene_.motion.at(mesh_.rest_positions.col(node), t_ + h);

    t_ += h;
    ++step_count_;
    row.kinetic_energy = kinetic_energy();
    row.step_s = std::chrono::duration<double>(clock::now() - t_begin).count();
    diag_.push_back(row);
  }

  void run() {
    for (int i = 0; i < scene_.steps; ++i) step();
  }

  void export_frame(const std::string& dir, int index) const {
    char name[64];
    std::snprintf(name, sizeof(name), "frame_%06d.node", index);
    const MatX pos = Eigen::Map<const MatX>(x_.data(), 3, mesh_.num_nodes());
    write_node_file((std::filesystem::path(dir) / name).string(), pos);
  }

  void write_diagnostics(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write diagnostics: " + path);
    out << "step,time,n_dynamic,solves,factorizations,assemble_s,solve_s,step_s,fq_inf,kinetic_energy";
    const int nr = scene_.adaptivity.enabled ? regions_.num_regions : 0;
    for (int r = 0; r < nr; ++r) out << ",metric_" << r;
    out << '\n';
    char buf[512];
    for (const auto& d : diag_) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%d,%ld,%ld,%.6g,%.6g,%.6g,%.12g,%.12g", d.step,
                    d.time, d.n_dynamic, d.solves, d.factorizations, d.assemble_s, d.solve_s,
                    d.step_s, d.fq_inf, d.kinetic_energy);
      out << buf;
      for (int r = 0; r < nr; ++r) {
        std::snprintf(buf, sizeof(buf), ",%.9g",
                      static_cast<int>(d.region_metrics.size()) > r ? d.region_metrics(r) : 0.0);
        out << buf;
      }
      out << '\n';
    }
  }

 private:
  Vec3 element_centroid(int e) const {
    Vec3 c = Vec3::Zero();
    for (int k = 0; k < 4; ++k) c += mesh_.rest_positions.col(mesh_.tets(k, e));
    return c / 4.0;
  }

  void resolve_node_sets() {
    const int n = mesh_.num_nodes();
    auto collect = [&](const std::vector<AxisBox>& boxes, const std::vector<int>& ids) {
      std::vector<char> in(n, 0);
      for (const auto& box : boxes)
        for (int i = 0; i < n; ++i)
          if (box.contains(mesh_.rest_positions.col(i))) in[i] = 1;
      for (int i : ids) {
        if (i < 0 || i >= n) throw ConfigError("node id " + std::to_string(i) + " out of range");
        in[i] = 1;
      }
      return in;
    };
    const auto fixed = collect(scene_.fix_boxes, scene_.fix_nodes);
    const auto scripted = collect(scene_.script_boxes, scene_.script_nodes);
    const auto dynamic = collect(scene_.dynamic_boxes, scene_.dynamic_nodes);
    node_fixed_.assign(n, 0);
    node_scripted_.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      if (fixed[i]) {
        node_fixed_[i] = 1;
        fixed_nodes_.push_back(i);
      } else if (scripted[i]) {
        node_scripted_[i] = 1;
        scripted_active_.push_back(i);
      } else if (dynamic[i]) {
        pinned_dynamic_.push_back(i);
      }
    }
    if (!scripted_active_.empty() && scene_.motion.kind == ScriptedMotion::Kind::None)
      throw ConfigError("scripted nodes declared without a script.motion");
  }

  void validate_dynamic_set() {
    for (int i : pinned_dynamic_) {
      if (i < 0 || i >= mesh_.num_nodes())
        throw ConfigError("dynamic node " + std::to_string(i) + " out of range");
      if (node_fixed_[i] || node_scripted_[i])
        throw ConfigError("dynamic node " + std::to_string(i) + " is fixed or scripted");
    }
  }

  void resolve_regions() {
    if (!scene_.adaptivity.enabled) return;
    if (scene_.regions.empty())
      throw ConfigError("adaptivity needs at least one region.box");
    const int m = mesh_.num_elements();
    regions_.num_regions = static_cast<int>(scene_.regions.size());
    regions_.element_region.assign(m, -1);
    for (int e = 0; e < m; ++e) {
      const Vec3 c = element_centroid(e);
      for (int r = 0; r < regions_.num_regions; ++r) {
        if (scene_.regions[r].box.contains(c)) {
          regions_.element_region[e] = r;
          break;
        }
      }
      if (regions_.element_region[e] < 0)
        throw ConfigError("element " + std::to_string(e) + " is not covered by any region.box");
    }
    regions_.representative.resize(regions_.num_regions);
    for (int r = 0; r < regions_.num_regions; ++r) {
      int rep = scene_.regions[r].representative;
      if (rep >= 0) {
        if (rep >= mesh_.num_nodes() || node_fixed_[rep] || node_scripted_[rep])
          throw ConfigError("region " + std::to_string(r) + " representative is invalid");
      } else {
        // Nearest free node to the box center, among nodes of the region.
        const Vec3 c = scene_.regions[r].box.center();
        double best = std::numeric_limits<double>::max();
        for (int e = 0; e < m; ++e) {
          if (regions_.element_region[e] != r) continue;
          for (int k = 0; k < 4; ++k) {
            const int node = mesh_.tets(k, e);
            if (node_fixed_[node] || node_scripted_[node]) continue;
            const double d = (mesh_.rest_positions.col(node) - c).squaredNorm();
            if (d < best || (d == best && node < rep)) {
              best = d;
              rep = node;
            }
          }
        }
        if (rep < 0)
          throw ConfigError("region " + std::to_string(r) + " has no free node to represent it");
      }
      regions_.representative[r] = rep;
    }
    regions_.validate(m, mesh_.num_nodes());
  }

  void rebuild_free_system() {
    std::vector<int> dirichlet = fixed_nodes_;
    dirichlet.insert(dirichlet.end(), scripted_active_.begin(), scripted_active_.end());
    fs_ = build_free_system(assembler_->pattern(), mesh_.num_nodes(), dirichlet);
    if (contact_) {
      contact_eligible_.assign(mesh_.num_nodes(), 0);
      for (int node : fs_.free_nodes)
        if (!assembler_->orphaned_nodes()[node]) contact_eligible_[node] = 1;
    }
    solvers_ready_ = false;
  }

  void prepare_solvers() {
    if (scene_.integrator == "conjac")
      condenser_.init(fs_);
    else
      vanilla_.init(fs_);
    solvers_ready_ = true;
  }

  void apply_due_cuts() {
    bool any = false;
    for (size_t i = 0; i < scene_.cuts.size(); ++i) {
      if (cuts_applied_[i] || t_ + 1e-12 < scene_.cuts[i].time) continue;
      std::vector<int> doomed;
      for (int e = 0; e < mesh_.num_elements(); ++e)
        if (assembler_->is_active(e) && scene_.cuts[i].box.contains(element_centroid(e)))
          doomed.push_back(e);
      assembler_->remove_elements(doomed);
      cuts_applied_[i] = 1;
      any = true;
    }
    if (any) {
      // Orphaned nodes freeze: zero velocity, no longer eligible for contact.
      for (int i = 0; i < mesh_.num_nodes(); ++i) {
        if (assembler_->orphaned_nodes()[i] && fs_.node_to_free[i] >= 0) {
          v_.segment<3>(3 * i).setZero();
          if (!contact_eligible_.empty()) contact_eligible_[i] = 0;
        }
      }
    }
  }

  void apply_release() {
    if (released_ || scripted_active_.empty()) return;
    const double tr = scene_.motion.release_time;
    if (tr < 0.0 || t_ + 1e-12 < tr) return;
    released_ = true;
    for (int node : scripted_active_) node_scripted_[node] = 0;
    scripted_active_.clear();
    rebuild_free_system();
  }

  // Gravity through the current lumped mass. Recomputed on demand so cuts are
  // reflected immediately.
  VecX constant_external_forces() const {
    VecX f = VecX::Zero(3 * mesh_.num_nodes());
    const VecX& mass = assembler_->mass();
    for (int i = 0; i < mesh_.num_nodes(); ++i)
      f.segment<3>(3 * i) = mass(3 * i) * scene_.gravity;
    return f;
  }

  VecX pull_forces(double t) const {
    VecX f = VecX::Zero(3 * mesh_.num_nodes());
    for (const auto& pull : scene_.pulls) {
      if (t < pull.t0 || t >= pull.t1) continue;
      for (int i = 0; i < mesh_.num_nodes(); ++i)
        if (pull.box.contains(mesh_.rest_positions.col(i))) f.segment<3>(3 * i) += pull.force;
    }
    return f;
  }

  // K[:, scripted] * v_s gathered to free rows; the quasistatic balance and
  // the full-inertia right-hand side both need it while the boundary moves.
  VecX scripted_coupling_rhs() const {
    VecX r = VecX::Zero(3 * mesh_.num_nodes());
    const SpMat& k = sys_.stiffness;
    const int* outer = k.outerIndexPtr();
    const int* inner = k.innerIndexPtr();
    const double* vals = k.valuePtr();
    for (int node : scripted_active_) {
      for (int a = 0; a < 3; ++a) {
        const int c = 3 * node + a;
        const double vs = v_(c);
        if (vs == 0.0) continue;
        for (int i = outer[c]; i < outer[c + 1]; ++i) r(inner[i]) += vals[i] * vs;
      }
    }
    return fs_.gather_vector(r);
  }

  Scene scene_;
  TetMesh mesh_;
  std::unique_ptr<Assembler> assembler_;
  GlobalSystem sys_;

  std::vector<int> fixed_nodes_;
  std::vector<int> scripted_active_;
  std::vector<int> pinned_dynamic_;
  std::vector<int> dynamic_now_;
  std::vector<char> node_fixed_, node_scripted_;

  RegionMap regions_;
  AdaptivityState adapt_;
  std::unique_ptr<HalfSpaceContact> contact_;
  std::vector<char> contact_eligible_;
  std::vector<std::array<int, 9>> contact_diag_offsets_;

  FreeSystem fs_;
  AdjustedCondenser condenser_;
  VanillaSolver vanilla_;
  bool solvers_ready_ = false;
  bool released_ = false;
  std::vector<char> cuts_applied_;

  VecX x_, v_;
  double t_ = 0.0;
  int step_count_ = 0;
  std::vector<DiagRow> diag_;
};

}  // namespace conjac
