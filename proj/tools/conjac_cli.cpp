#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include <CLI11.hpp>

#include <conjac/conjac.hpp>

namespace {

using namespace conjac;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

int run_command(const std::string& scene_path, const std::string& out_dir, int steps_override,
                int export_every_override, const std::string& integrator_override) {
  Scene scene = load_scene(scene_path);
  if (steps_override > 0) scene.steps = steps_override;
  if (export_every_override >= 0) scene.export_every = export_every_override;

  Simulator sim(scene);
  if (!integrator_override.empty()) sim.force_integrator(integrator_override);
  ensure_dir(out_dir);

  const int every = scene.export_every;
  sim.export_frame(out_dir, 0);
  for (int i = 0; i < scene.steps; ++i) {
    sim.step();
    if (every > 0 && (i + 1) % every == 0) sim.export_frame(out_dir, i + 1);
  }
  if (every <= 0 || scene.steps % std::max(every, 1) != 0) sim.export_frame(out_dir, scene.steps);
  sim.write_diagnostics((std::filesystem::path(out_dir) / "diag.csv").string());

  const auto& diag = sim.diagnostics();
  double total = 0.0;
  for (const auto& d : diag) total += d.step_s;
  std::printf("%s: %d steps, t = %.4g s, kinetic energy %.6g J, wall %.3f s\n",
              sim.scene().integrator.c_str(), sim.step_count(), sim.time(), sim.kinetic_energy(),
              total);
  std::printf("diagnostics: %s\n", (std::filesystem::path(out_dir) / "diag.csv").string().c_str());
  return 0;
}

int bench_command(const std::string& scene_path, const std::string& out_dir,
                  const std::string& nd_list, int reps, int steps) {
  Scene scene = load_scene(scene_path);
  scene.adaptivity.enabled = false;
  if (steps > 0) scene.steps = steps;

  std::vector<int> nds;
  {
    std::istringstream in(nd_list);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (tok.empty()) continue;
      nds.push_back(std::stoi(tok));
    }
  }
  if (nds.empty()) throw ConfigError("--nd needs a comma-separated list of dynamic node counts");

  // Candidate pool: scene dynamic nodes first, then free nodes evenly spaced
  // by index until the largest request is covered.
  Simulator probe(scene);
  std::vector<int> pool = scene.dynamic_nodes;
  {
    const auto& fs = probe.free_system();
    const int want = *std::max_element(nds.begin(), nds.end());
    const int nf = static_cast<int>(fs.free_nodes.size());
    for (int k = 0; static_cast<int>(pool.size()) < want && k < nf; ++k) {
      const int node = fs.free_nodes[(static_cast<long>(k) * 7919) % nf];
      if (std::find(pool.begin(), pool.end(), node) == pool.end()) pool.push_back(node);
    }
    if (static_cast<int>(pool.size()) < want)
      throw ConfigError("not enough free nodes for the requested dynamic counts");
  }

  ensure_dir(out_dir);
  std::ofstream csv(std::filesystem::path(out_dir) / "bench.csv");
  csv << "nd,reps,steps,solves_per_step,mean_step_s,stddev_step_s\n";

  std::vector<double> mean_solves(nds.size(), 0.0);
  for (size_t i = 0; i < nds.size(); ++i) {
    const int nd = nds[i];
    std::vector<double> per_rep;
    long solves_per_step = -1;
    for (int rep = 0; rep < reps; ++rep) {
      Simulator sim(scene);
      sim.force_integrator("conjac");
      sim.override_dynamic_nodes(std::vector<int>(pool.begin(), pool.begin() + nd));
      sim.run();
      double wall = 0.0;
      for (const auto& d : sim.diagnostics()) {
        wall += d.step_s;
        if (solves_per_step < 0)
          solves_per_step = d.solves;
        else if (solves_per_step != d.solves)
          throw StabilityError("solve count changed between steps in a fixed-partition bench");
      }
      per_rep.push_back(wall / sim.step_count());
    }
    const double mean = std::accumulate(per_rep.begin(), per_rep.end(), 0.0) / per_rep.size();
    double var = 0.0;
    for (double v : per_rep) var += (v - mean) * (v - mean);
    const double sd = per_rep.size() > 1 ? std::sqrt(var / (per_rep.size() - 1)) : 0.0;
    mean_solves[i] = static_cast<double>(solves_per_step);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%ld,%.9g,%.9g\n", nd, reps, scene.steps,
                  solves_per_step, mean, sd);
    csv << buf;
    std::printf("nd = %3d: %ld solves/step, %.4g s/step\n", nd, solves_per_step, mean);
  }

  // Least-squares slope of solves-per-step against the dynamic node count.
  if (nds.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(nds.size());
    for (size_t i = 0; i < nds.size(); ++i) {
      sx += nds[i];
      sy += mean_solves[i];
      sxx += static_cast<double>(nds[i]) * nds[i];
      sxy += nds[i] * mean_solves[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    std::printf("solve-count slope: %.3f per dynamic node\n", slope);
  }
  std::printf("results: %s\n", (std::filesystem::path(out_dir) / "bench.csv").string().c_str());
  return 0;
}

int compare_command(const std::string& scene_path, const std::string& out_dir) {
  Scene scene = load_scene(scene_path);
  Simulator a(scene), b(scene);
  a.force_integrator("conjac");
  b.force_integrator("vanilla");

  ensure_dir(out_dir);
  std::ofstream csv(std::filesystem::path(out_dir) / "compare.csv");
  csv << "step,time,ke_condensed,ke_full,fq_condensed\n";

  double peak_a = 0.0, peak_b = 0.0;
  char buf[256];
  for (int i = 0; i < scene.steps; ++i) {
    a.step();
    b.step();
    const auto& da = a.diagnostics().back();
    const auto& db = b.diagnostics().back();
    peak_a = std::max(peak_a, da.kinetic_energy);
    peak_b = std::max(peak_b, db.kinetic_energy);
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.12g,%.12g,%.12g\n", da.step, da.time,
                  da.kinetic_energy, db.kinetic_energy, da.fq_inf);
    csv << buf;
  }

  const double scale = std::max(1e-300, (a.mesh().rest_positions.colwise().maxCoeff() -
                                         a.mesh().rest_positions.colwise().minCoeff())
                                            .norm());
  const double diff = (a.positions() - b.positions()).lpNorm<Eigen::Infinity>() / scale;
  std::printf("condensed  : peak kinetic energy %.6g J, final KE %.6g J\n", peak_a,
              a.kinetic_energy());
  std::printf("full       : peak kinetic energy %.6g J, final KE %.6g J\n", peak_b,
              b.kinetic_energy());
  std::printf("final position difference: %.3g (relative to mesh extent)\n", diff);
  std::printf("results: %s\n", (std::filesystem::path(out_dir) / "compare.csv").string().c_str());
  return 0;
}

int meshgen_command(int nx, int ny, int nz, double sx, double sy, double sz,
                    const std::string& out_base) {
  MatX pos;
  Eigen::Matrix<int, 4, Eigen::Dynamic> tets;
  build_box_grid(nx, ny, nz, Vec3(sx, sy, sz), Vec3::Zero(), pos, tets);
  write_node_file(out_base + ".node", pos);
  write_ele_file(out_base + ".ele", tets);
  std::printf("%s.node / %s.ele: %ld nodes, %ld tets\n", out_base.c_str(), out_base.c_str(),
              static_cast<long>(pos.cols()), static_cast<long>(tets.cols()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"condensation-based deformable body simulator"};
  app.require_subcommand(1);

  std::string scene_path, out_dir = "out", integrator_override, nd_list = "0,2,4,8";
  int steps = -1, export_every = -1, reps = 3, bench_steps = 50;
  long seed = 0;

  auto* run = app.add_subcommand("run", "simulate a scene and export frames + diagnostics");
  run->add_option("scene", scene_path, "scene file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--steps", steps, "override the scene's step count");
  run->add_option("--export-every", export_every, "frame export interval (0 = endpoints only)");
  run->add_option("--integrator", integrator_override, "force conjac or vanilla");
  run->add_option("--seed", seed, "accepted for compatibility; the engine is deterministic");

  auto* bench = app.add_subcommand("bench", "time steps across dynamic node counts");
  bench->add_option("scene", scene_path, "scene file")->required();
  bench->add_option("--out", out_dir, "output directory");
  bench->add_option("--nd", nd_list, "comma-separated dynamic node counts");
  bench->add_option("--reps", reps, "repetitions per count");
  bench->add_option("--steps", bench_steps, "steps per repetition");

  auto* compare = app.add_subcommand("compare", "run condensed and full integrators side by side");
  compare->add_option("scene", scene_path, "scene file")->required();
  compare->add_option("--out", out_dir, "output directory");

  int nx = 10, ny = 6, nz = 6;
  double sx = 0.15, sy = 0.05, sz = 0.05;
  std::string mesh_base = "box";
  auto* meshgen = app.add_subcommand("meshgen", "write a structured box tet mesh");
  meshgen->add_option("--nx", nx, "cells along x");
  meshgen->add_option("--ny", ny, "cells along y");
  meshgen->add_option("--nz", nz, "cells along z");
  meshgen->add_option("--sx", sx, "size along x, m");
  meshgen->add_option("--sy", sy, "size along y, m");
  meshgen->add_option("--sz", sz, "size along z, m");
  meshgen->add_option("--out", mesh_base, "output path base (writes .node and .ele)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(scene_path, out_dir, steps, export_every, integrator_override);
    if (bench->parsed()) return bench_command(scene_path, out_dir, nd_list, reps, bench_steps);
    if (compare->parsed()) return compare_command(scene_path, out_dir);
    if (meshgen->parsed()) return meshgen_command(nx, ny, nz, sx, sy, sz, mesh_base);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
