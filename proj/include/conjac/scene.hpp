#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adaptivity.hpp"
#include "contact.hpp"
#include "integrators.hpp"
#include "materials.hpp"

namespace conjac {

struct AxisBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p, double tol = 1e-9) const {
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

struct ScriptedMotion {
  enum class Kind { None, Twist, Translate };
  Kind kind = Kind::None;
  Vec3 axis = Vec3::UnitX();   // twist axis direction
  Vec3 point = Vec3::Zero();   // point on the axis
  double rate = 0.0;           // rad/s
  Vec3 velocity = Vec3::Zero();  // translate
  double release_time = -1.0;    // s, < 0 keeps nodes scripted forever

  // Position of a rest point under the script at time t.
  Vec3 at(const Vec3& rest, double t) const {
    switch (kind) {
      case Kind::Twist:
        return point + Eigen::AngleAxisd(rate * t, axis.normalized()) * (rest - point);
      case Kind::Translate:
        return rest + t * velocity;
      case Kind::None:
        return rest;
    }
    return rest;
  }
};

struct PullLoad {
  AxisBox box;
  Vec3 force = Vec3::Zero();  // N per selected node
  double t0 = 0.0, t1 = 0.0;
};

struct CutEvent {
  double time = 0.0;
  AxisBox box;  // rest centroids inside get removed
};

struct MaterialOverride {
  AxisBox box;
  std::string name;
  MaterialParams params;
};

struct RegionSpec {
  AxisBox box;
  int representative = -1;  // -1 picks the node nearest the box center
};

struct Scene {
  std::string node_path;
  std::string ele_path;
  double density = 1000.0;

  std::string material_name = "snh";
  MaterialParams material;
  std::vector<MaterialOverride> material_overrides;

  std::string integrator = "conjac";
  SolverConfig solver;
  int steps = 400;
  bool quasistatic_start = false;
  Vec3 gravity = Vec3(0, 0, -9.81);
  int export_every = 0;

  std::vector<AxisBox> fix_boxes;
  std::vector<int> fix_nodes;
  std::vector<AxisBox> dynamic_boxes;
  std::vector<int> dynamic_nodes;
  std::vector<AxisBox> script_boxes;
  std::vector<int> script_nodes;
  ScriptedMotion motion;

  std::vector<PullLoad> pulls;
  std::vector<CutEvent> cuts;

  ContactConfig contact;
  AdaptivityConfig adaptivity;
  std::vector<RegionSpec> regions;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct ValueParser {
  std::istringstream in;
  std::string key;
  int line_no;

  ValueParser(const std::string& value, const std::string& k, int line) : in(value), key(k), line_no(line) {}

  double number() {
    double v;
    if (!(in >> v))
      throw ParseError("line " + std::to_string(line_no) + ": key '" + key + "' needs a number");
    return v;
  }
  int integer() { return static_cast<int>(number()); }
  Vec3 vec3() {
    Vec3 v;
    v.x() = number();
    v.y() = number();
    v.z() = number();
    return v;
  }
  AxisBox box() {
    AxisBox b;
    b.lo = vec3();
    b.hi = vec3();
    for (int a = 0; a < 3; ++a)
      if (b.lo(a) > b.hi(a)) std::swap(b.lo(a), b.hi(a));
    return b;
  }
  std::string word() {
    std::string w;
    if (!(in >> w))
      throw ParseError("line " + std::to_string(line_no) + ": key '" + key + "' needs a word");
    return w;
  }
  std::vector<int> int_list() {
    std::vector<int> out;
    int v;
    while (in >> v) out.push_back(v);
    return out;
  }
  void done() {
    std::string extra;
    if (in >> extra)
      throw ParseError("line " + std::to_string(line_no) + ": key '" + key +
                       "' has trailing content '" + extra + "'");
  }
};

}  // namespace detail

// Plain "key = value" scene format; '#' starts a comment, list-valued keys
// are whitespace separated and box keys repeat. Unknown keys are errors.
inline Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scene file: " + path);
  const auto dir = std::filesystem::path(path).parent_path();

  Scene s;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    detail::ValueParser p(value, key, line_no);

    if (key == "mesh.node") {
      s.node_path = (dir / p.word()).string();
    } else if (key == "mesh.ele") {
      s.ele_path = (dir / p.word()).string();
    } else if (key == "density") {
      s.density = p.number();
      p.done();
    } else if (key == "material") {
      s.material_name = p.word();
      p.done();
    } else if (key == "young") {
      s.material.young = p.number();
      p.done();
    } else if (key == "poisson") {
      s.material.poisson = p.number();
      p.done();
    } else if (key == "fiber.k") {
      s.material.fiber_stiffness = p.number();
      p.done();
    } else if (key == "fiber.dir") {
      s.material.fiber_dir = p.vec3();
      p.done();
    } else if (key == "material.box") {
      MaterialOverride ov;
      ov.box = p.box();
      ov.name = p.word();
      ov.params = s.material;
      ov.params.young = p.number();
      ov.params.poisson = p.number();
      s.material_overrides.push_back(ov);
      p.done();
    } else if (key == "integrator") {
      s.integrator = p.word();
      p.done();
      if (s.integrator != "conjac" && s.integrator != "vanilla")
        throw ConfigError("line " + std::to_string(line_no) + ": unknown integrator '" +
                          s.integrator + "'");
    } else if (key == "dt") {
      s.solver.h = p.number();
      p.done();
    } else if (key == "beta") {
      s.solver.beta = p.number();
      p.done();
    } else if (key == "gamma") {
      s.solver.gamma = p.number();
      p.done();
    } else if (key == "steps") {
      s.steps = p.integer();
      p.done();
    } else if (key == "init.quasistatic") {
      s.quasistatic_start = p.integer() != 0;
      p.done();
    } else if (key == "newton.tol") {
      s.solver.newton_tol = p.number();
      p.done();
    } else if (key == "newton.max_iters") {
      s.solver.newton_max_iters = p.integer();
      p.done();
    } else if (key == "gravity") {
      s.gravity = p.vec3();
      p.done();
    } else if (key == "export.every") {
      s.export_every = p.integer();
      p.done();
    } else if (key == "fix.box") {
      s.fix_boxes.push_back(p.box());
      p.done();
    } else if (key == "fix.nodes") {
      const auto ids = p.int_list();
      s.fix_nodes.insert(s.fix_nodes.end(), ids.begin(), ids.end());
    } else if (key == "dynamic.box") {
      s.dynamic_boxes.push_back(p.box());
      p.done();
    } else if (key == "dynamic.nodes") {
      const auto ids = p.int_list();
      s.dynamic_nodes.insert(s.dynamic_nodes.end(), ids.begin(), ids.end());
    } else if (key == "script.box") {
      s.script_boxes.push_back(p.box());
      p.done();
    } else if (key == "script.nodes") {
      const auto ids = p.int_list();
      s.script_nodes.insert(s.script_nodes.end(), ids.begin(), ids.end());
    } else if (key == "script.motion") {
      const std::string kind = p.word();
      if (kind == "twist") {
        s.motion.kind = ScriptedMotion::Kind::Twist;
        s.motion.axis = p.vec3();
        s.motion.point = p.vec3();
        s.motion.rate = p.number();
      } else if (kind == "translate") {
        s.motion.kind = ScriptedMotion::Kind::Translate;
        s.motion.velocity = p.vec3();
      } else {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown script motion '" + kind + "'");
      }
      p.done();
    } else if (key == "script.release") {
      s.motion.release_time = p.number();
      p.done();
    } else if (key == "pull") {
      PullLoad pull;
      pull.box = p.box();
      pull.force = p.vec3();
      pull.t0 = p.number();
      pull.t1 = p.number();
      s.pulls.push_back(pull);
      p.done();
    } else if (key == "cut") {
      CutEvent cut;
      cut.time = p.number();
      cut.box = p.box();
      s.cuts.push_back(cut);
      p.done();
    } else if (key == "contact.plane") {
      s.contact.enabled = true;
      s.contact.normal = p.vec3();
      s.contact.offset = p.number();
      p.done();
    } else if (key == "contact.stiffness") {
      s.contact.stiffness = p.number();
      p.done();
    } else if (key == "contact.alpha") {
      s.contact.alpha = p.number();
      p.done();
    } else if (key == "contact.mu") {
      s.contact.mu = p.number();
      p.done();
    } else if (key == "adaptivity") {
      s.adaptivity.enabled = p.integer() != 0;
      p.done();
    } else if (key == "adaptivity.threshold") {
      s.adaptivity.threshold = p.number();
      p.done();
    } else if (key == "adaptivity.window") {
      s.adaptivity.window = p.integer();
      p.done();
    } else if (key == "adaptivity.weighted") {
      s.adaptivity.volume_weighted = p.integer() != 0;
      p.done();
    } else if (key == "region.box") {
      RegionSpec r;
      r.box = p.box();
      s.regions.push_back(r);
      p.done();
    } else if (key == "region.rep") {
      if (s.regions.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": region.rep before any region.box");
      s.regions.back().representative = p.integer();
      p.done();
    } else {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }

  if (s.node_path.empty() || s.ele_path.empty())
    throw ConfigError(path + ": scene needs mesh.node and mesh.ele");
  s.solver.validate();
  return s;
}

}  // namespace conjac
