#include <catch2/catch_amalgamated.hpp>

#include <conjac/assembly.hpp>
#include <conjac/condensation.hpp>

#include "test_support.hpp"

using namespace conjac;
using conjac::testing::jittered_box_mesh;
using conjac::testing::uniform_materials;

namespace {

VecX flatten(const MatX& pos) { return Eigen::Map<const VecX>(pos.data(), pos.size()); }

struct SmallProblem {
  TetMesh mesh;
  std::unique_ptr<Assembler> assembler;
  GlobalSystem sys;
  FreeSystem fs;
  DofPartition part;

  SmallProblem(unsigned seed, int n_dynamic, const char* material = "snh") {
    mesh = jittered_box_mesh(2, 1, 2, Vec3(0.1, 0.05, 0.1), seed);  // 27 nodes
    MaterialParams p;
    p.young = 1e4;
    p.poisson = 0.35;
    assembler = std::make_unique<Assembler>(mesh, uniform_materials(mesh, make_material(material, p)));
    sys = assembler->make_system();

    // Fix the x = 0 face, deform the rest a little.
    std::vector<int> fixed;
    for (int i = 0; i < mesh.num_nodes(); ++i)
      if (mesh.rest_positions(0, i) < 1e-9) fixed.push_back(i);
    fs = build_free_system(assembler->pattern(), mesh.num_nodes(), fixed);

    VecX x = flatten(mesh.rest_positions);
    std::mt19937 rng(seed + 1);
    std::uniform_real_distribution<double> u(-0.004, 0.004);
    for (int node : fs.free_nodes)
      for (int a = 0; a < 3; ++a) x(3 * node + a) += u(rng);
    assembler->assemble(x, sys);
    fs.gather_values(sys.stiffness);

    std::vector<int> dynamic;
    for (int k = 0; k < n_dynamic; ++k)
      dynamic.push_back(fs.free_nodes[(k * 5 + 3) % fs.free_nodes.size()]);
    part = make_dof_partition(fs, dynamic, assembler->orphaned_nodes());
  }
};

}  // namespace

TEST_CASE("free system gathers exactly the non-Dirichlet block of the full matrix") {
  SmallProblem prob(211, 0);
  const MatX full(prob.sys.stiffness);
  const MatX freed(prob.fs.K_free);
  for (size_t i = 0; i < prob.fs.free_nodes.size(); ++i)
    for (size_t j = 0; j < prob.fs.free_nodes.size(); ++j)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          REQUIRE(freed(3 * i + a, 3 * j + b) ==
                  full(3 * prob.fs.free_nodes[i] + a, 3 * prob.fs.free_nodes[j] + b));
}

TEST_CASE("hand-computed spring chain condensation") {
  // Three collinear unit-stiffness x springs: node 0 fixed, node 1 quasistatic,
  // node 2 dynamic. Off-axis DOFs get decoupled ground springs so the free
  // matrix stays invertible. The condensation map halves the dynamic motion:
  // J_qd,x = 1/2, and the stabilization is b = f_q / (2 k h) on x.
  const double k = 50.0;
  const int n = 3;
  std::vector<Eigen::Triplet<double>> trips;
  auto add = [&](int r, int c, double v) { trips.emplace_back(r, c, v); };
  // x components: K = [[-2k, k], [k, -k]] on nodes 1, 2 (full indices 3, 6).
  add(3, 3, -2.0 * k);
  add(3, 6, k);
  add(6, 3, k);
  add(6, 6, -k);
  for (int dof : {4, 5, 7, 8}) add(dof, dof, -k);
  for (int dof : {0, 1, 2}) add(dof, dof, -k);  // fixed node block, never used
  SpMat K_full(3 * n, 3 * n);
  K_full.setFromTriplets(trips.begin(), trips.end());
  K_full.makeCompressed();

  FreeSystem fs = build_free_system(K_full, n, {0});
  fs.gather_values(K_full);
  const DofPartition part = make_dof_partition(fs, {2}, {});

  const double h = 0.01;
  VecX f_free(6);
  f_free << 3.0, -1.0, 2.0, 9.0, 9.0, 9.0;  // forces on node 1; node 2 values ignored by b

  // Reference route.
  const CondensationResult ref = condense_blocks(fs.K_free, part, f_free, h);
  REQUIRE_THAT(ref.jacobian(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-14));   // x follows half
  REQUIRE_THAT(ref.jacobian(1, 1), Catch::Matchers::WithinAbs(0.0, 1e-14));   // y decoupled
  REQUIRE_THAT(ref.jacobian(2, 2), Catch::Matchers::WithinAbs(0.0, 1e-14));
  REQUIRE_THAT(ref.jacobian(3, 0), Catch::Matchers::WithinAbs(1.0, 1e-14));   // identity rows
  REQUIRE_THAT(ref.stab(0), Catch::Matchers::WithinAbs(3.0 / (2.0 * k * h), 1e-12));
  REQUIRE_THAT(ref.stab(1), Catch::Matchers::WithinAbs(-1.0 / (k * h), 1e-12));
  REQUIRE_THAT(ref.stab(2), Catch::Matchers::WithinAbs(2.0 / (k * h), 1e-12));
  REQUIRE(ref.stab.tail(3).lpNorm<Eigen::Infinity>() == 0.0);

  // Adjusted route agrees.
  AdjustedCondenser cond;
  cond.init(fs);
  cond.refresh(fs.K_free, part);
  const MatX J = cond.jacobian(fs.K_free, part);
  const VecX b = cond.stabilization(f_free, part, h);
  REQUIRE((J - ref.jacobian).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE((b - ref.stab).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adjusted condensation matches the dense-inverse oracle") {
  for (unsigned seed : {301u, 302u, 303u, 304u, 305u}) {
    for (int nd : {1, 3}) {
      SmallProblem prob(seed, nd);
      AdjustedCondenser cond;
      cond.init(prob.fs);
      cond.refresh(prob.fs.K_free, prob.part);
      const MatX J = cond.jacobian(prob.fs.K_free, prob.part);

      const MatX K(prob.fs.K_free);
      const int nq = static_cast<int>(prob.part.quasistatic.size());
      const int ndd = prob.part.num_dynamic_dofs();
      MatX Kqq(nq, nq), Kqd(nq, ndd);
      for (int i = 0; i < nq; ++i) {
        for (int j = 0; j < nq; ++j) Kqq(i, j) = K(prob.part.quasistatic[i], prob.part.quasistatic[j]);
        for (int j = 0; j < ndd; ++j) Kqd(i, j) = K(prob.part.quasistatic[i], prob.part.dynamic[j]);
      }
      const MatX J_qd_dense = -Kqq.inverse() * Kqd;

      // Residual bound and entrywise agreement with the dense oracle.
      MatX J_qd(nq, ndd);
      for (int i = 0; i < nq; ++i) J_qd.row(i) = J.row(prob.part.quasistatic[i]);
      const double resid = (Kqq * J_qd + Kqd).cwiseAbs().maxCoeff();
      REQUIRE(resid <= 1e-8 * Kqd.cwiseAbs().maxCoeff());
      REQUIRE((J_qd - J_qd_dense).cwiseAbs().maxCoeff() < 1e-10);

      // Identity rows on dynamic DOFs are exact.
      for (int j = 0; j < ndd; ++j)
        for (int i = 0; i < ndd; ++i)
          REQUIRE(J(prob.part.dynamic[i], j) == (i == j ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("reference and adjusted routes agree on a larger mesh") {
  SmallProblem prob(401, 4);
  VecX f_free = VecX::Random(prob.fs.num_free_dofs());
  const double h = 5e-3;

  const CondensationResult ref = condense_blocks(prob.fs.K_free, prob.part, f_free, h);
  AdjustedCondenser cond;
  cond.init(prob.fs);
  cond.refresh(prob.fs.K_free, prob.part);
  const MatX J = cond.jacobian(prob.fs.K_free, prob.part);
  const VecX b = cond.stabilization(f_free, prob.part, h);

  REQUIRE((J - ref.jacobian).cwiseAbs().maxCoeff() < 1e-9);
  REQUIRE((b - ref.stab).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, ref.stab.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("solve counters follow the three-per-dynamic-node law") {
  SmallProblem prob(402, 0);
  AdjustedCondenser cond;
  cond.init(prob.fs);
  REQUIRE(cond.solver().counters.symbolic == 1);

  for (int nd : {0, 1, 4}) {
    std::vector<int> dynamic;
    for (int k = 0; k < nd; ++k)
      dynamic.push_back(prob.fs.free_nodes[(k * 7 + 1) % prob.fs.free_nodes.size()]);
    const DofPartition part = make_dof_partition(prob.fs, dynamic, prob.assembler->orphaned_nodes());

    cond.solver().reset_counters();
    cond.refresh(prob.fs.K_free, part);
    const MatX J = cond.jacobian(prob.fs.K_free, part);
    VecX f = VecX::Ones(prob.fs.num_free_dofs());
    cond.stabilization(f, part, 5e-3);
    REQUIRE(cond.solver().counters.rhs_columns == 3 * nd + 1);
    REQUIRE(cond.solver().counters.factorizations == 1);
    REQUIRE(cond.solver().counters.symbolic == 0);  // partition flips reuse the analysis
    REQUIRE(J.cols() == 3 * nd);
  }
}

TEST_CASE("masked orphan DOFs decouple instead of breaking the factorization") {
  SmallProblem prob(403, 2);

  // Orphan the far corner node (it touches a single element) by removing its
  // incident elements; the rest of the mesh stays connected to the fixed face.
  int victim = prob.fs.free_nodes[0];
  double best = -1.0;
  for (int node : prob.fs.free_nodes) {
    const double score = prob.mesh.rest_positions.col(node).sum();
    if (score > best) {
      best = score;
      victim = node;
    }
  }
  std::vector<int> incident;
  for (int e = 0; e < prob.mesh.num_elements(); ++e)
    for (int k = 0; k < 4; ++k)
      if (prob.mesh.tets(k, e) == victim) {
        incident.push_back(e);
        break;
      }
  prob.assembler->remove_elements(incident);
  prob.assembler->assemble(flatten(prob.mesh.rest_positions), prob.sys);
  prob.fs.gather_values(prob.sys.stiffness);

  REQUIRE(prob.assembler->orphaned_nodes()[victim]);
  int survivor = prob.fs.free_nodes[0];
  for (int node : prob.fs.free_nodes)
    if (!prob.assembler->orphaned_nodes()[node]) survivor = node;

  // Without masking the zero rows make the matrix singular.
  const DofPartition unmasked = make_dof_partition(prob.fs, {survivor}, {});
  AdjustedCondenser broken;
  broken.init(prob.fs);
  REQUIRE_THROWS_AS(broken.refresh(prob.fs.K_free, unmasked), ConditioningError);

  // With orphan flags the refresh succeeds and the orphan solves to zero.
  const DofPartition part =
      make_dof_partition(prob.fs, {survivor}, prob.assembler->orphaned_nodes());
  REQUIRE(part.num_dynamic_dofs() == 3);
  REQUIRE(part.masked.size() >= 3);
  AdjustedCondenser cond;
  cond.init(prob.fs);
  cond.refresh(prob.fs.K_free, part);
  const MatX J = cond.jacobian(prob.fs.K_free, part);
  const VecX b = cond.stabilization(VecX::Ones(prob.fs.num_free_dofs()), part, 5e-3);
  for (int d : part.masked) {
    REQUIRE(J.row(d).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(b(d) == 0.0);
  }

  // Orphaned nodes may not be requested as dynamic; they are dropped.
  const DofPartition dropped = make_dof_partition(prob.fs, {victim}, prob.assembler->orphaned_nodes());
  REQUIRE(dropped.num_dynamic_dofs() == 0);
}

TEST_CASE("partition validation catches overlaps and non-representative dynamics") {
  NodePartition p;
  p.fixed = {0, 1};
  p.dynamic = {2};
  p.representative = {2, 3};
  REQUIRE_NOTHROW(validate_partition(p, 10));

  p.scripted = {1};
  REQUIRE_THROWS_AS(validate_partition(p, 10), ConfigError);
  p.scripted = {4};
  REQUIRE_NOTHROW(validate_partition(p, 10));

  p.dynamic = {5};
  REQUIRE_THROWS_AS(validate_partition(p, 10), ConfigError);  // not representative
  p.representative = {5};
  REQUIRE_NOTHROW(validate_partition(p, 10));
  p.dynamic = {42};
  REQUIRE_THROWS_AS(validate_partition(p, 10), ConfigError);  // out of range
}
