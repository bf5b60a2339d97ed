#pragma once

#include <vector>

#include "common.hpp"

namespace conjac {

struct ContactConfig {
  bool enabled = false;
  Vec3 normal = Vec3::UnitZ();  // outward, unit length after validate()
  double offset = 0.0;          // plane is n . x = offset, outside is n . x > offset
  double stiffness = 1e5;       // N/m
  double alpha = 0.1;           // tangential blend in [0, 1]
  double mu = 0.3;              // friction coefficient for the velocity filter

  void validate() {
    if (normal.norm() < 1e-12) throw ConfigError("contact plane normal must be nonzero");
    normal.normalize();
    if (stiffness <= 0.0) throw ConfigError("contact stiffness must be positive");
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("contact alpha must lie in [0, 1]");
    if (mu < 0.0) throw ConfigError("contact friction coefficient must be non-negative");
  }
};

// Half-space penalty with per-node anchors. On first penetration a node
// anchors to its surface projection; while it stays inside, the spring pulls
// toward that anchor through B = (1 - alpha) n n^T + alpha I, which blends a
// normal response with a tangential one that resists sliding. At entry the
// tangential offset is zero, so the initial force is exactly
// stiffness * depth * n.
class HalfSpaceContact {
 public:
  explicit HalfSpaceContact(const ContactConfig& cfg, int num_nodes) : cfg_(cfg) {
    cfg_.validate();
    anchored_.assign(num_nodes, 0);
    anchor_.assign(num_nodes, Vec3::Zero());
    blend_ = (1.0 - cfg_.alpha) * cfg_.normal * cfg_.normal.transpose() +
             cfg_.alpha * Mat3::Identity();
  }

  const ContactConfig& config() const { return cfg_; }
  const Mat3& blend() const { return blend_; }
  bool anchored(int node) const { return anchored_[node] != 0; }

  double depth(const Vec3& x) const { return cfg_.offset - cfg_.normal.dot(x); }

  // Refreshes anchors from current positions; eligible lists which nodes may
  // collide (free nodes). Returns the nodes in contact this step.
  std::vector<int> update(const VecX& positions, const std::vector<char>& eligible) {
    std::vector<int> active;
    const int n = static_cast<int>(anchored_.size());
    for (int i = 0; i < n; ++i) {
      const Vec3 x = positions.segment<3>(3 * i);
      const double d = depth(x);
      if (d > 0.0 && (eligible.empty() || eligible[i])) {
        if (!anchored_[i]) {
          anchor_[i] = x + d * cfg_.normal;  // surface projection at entry
          anchored_[i] = 1;
        }
        active.push_back(i);
      } else {
        anchored_[i] = 0;
      }
    }
    return active;
  }

  Vec3 force(int node, const VecX& positions) const {
    const Vec3 x = positions.segment<3>(3 * node);
    return cfg_.stiffness * blend_ * (anchor_[node] - x);
  }

  // d force / d x, constant while the anchor holds.
  Mat3 force_gradient() const { return -cfg_.stiffness * blend_; }

  // Coulomb-style velocity filter: the tangential velocity of a contacted
  // node shrinks by the friction budget mu * |normal velocity change the
  // solver just applied|. Never increases any node's speed.
  void friction_filter(const std::vector<int>& active, const VecX& v_before, VecX& v_after) const {
    if (cfg_.mu <= 0.0) return;
    for (int node : active) {
      const Vec3 v_old = v_before.segment<3>(3 * node);
      Vec3 v_new = v_after.segment<3>(3 * node);
      const double dvn = cfg_.normal.dot(v_new - v_old);
      const Vec3 v_t = v_new - cfg_.normal.dot(v_new) * cfg_.normal;
      const double vt_norm = v_t.norm();
      if (vt_norm < 1e-14) continue;
      const double scale = std::max(0.0, 1.0 - cfg_.mu * std::abs(dvn) / vt_norm);
      v_after.segment<3>(3 * node) = cfg_.normal.dot(v_new) * cfg_.normal + scale * v_t;
    }
  }

 private:
  ContactConfig cfg_;
  Mat3 blend_;
  std::vector<char> anchored_;
  std::vector<Vec3> anchor_;
};

}  // namespace conjac
