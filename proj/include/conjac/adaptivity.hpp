#pragma once

#include <deque>
#include <vector>

#include "assembly.hpp"
#include "kinematics.hpp"

namespace conjac {

// Disjoint element regions, each watched through one representative node that
// gets promoted to dynamic while the region moves.
struct RegionMap {
  std::vector<int> element_region;  // one region id per element
  std::vector<int> representative;  // one node id per region
  int num_regions = 0;

  void validate(int num_elements, int num_nodes) const {
    if (static_cast<int>(element_region.size()) != num_elements)
      throw ConfigError("region map must cover every element");
    if (static_cast<int>(representative.size()) != num_regions)
      throw ConfigError("region map needs one representative per region");
    for (int r : element_region)
      if (r < 0 || r >= num_regions) throw ConfigError("element assigned to unknown region");
    for (int n : representative)
      if (n < 0 || n >= num_nodes) throw ConfigError("region representative out of range");
  }
};

struct AdaptivityConfig {
  bool enabled = false;
  double threshold = 1.0;   // 1/s, on the windowed stretch-rate average
  int window = 10;          // steps
  bool volume_weighted = true;
};

// Mean absolute stretch rate per region. Each element contributes the mean of
// the nine |Sdot| entries; regions average either volume-weighted or plain.
// Regions with no active element report zero.
inline VecX liveliness_metric(const Assembler& assembler, const VecX& positions,
                              const VecX& velocities, const RegionMap& regions,
                              bool volume_weighted = true) {
  const TetMesh& mesh = assembler.mesh();
  VecX accum = VecX::Zero(regions.num_regions);
  VecX weight = VecX::Zero(regions.num_regions);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!assembler.is_active(e)) continue;
    const Mat3 F = assembler.deformation_gradient(positions, e);
    const Mat3 Fdot = assembler.velocity_gradient(velocities, e);
    const double rate = stretch_rate(F, Fdot).cwiseAbs().sum() / 9.0;
    const double w = volume_weighted ? mesh.rest_volume[e] : 1.0;
    const int r = regions.element_region[e];
    accum(r) += w * rate;
    weight(r) += w;
  }
  for (int r = 0; r < regions.num_regions; ++r)
    accum(r) = weight(r) > 0.0 ? accum(r) / weight(r) : 0.0;
  return accum;
}

// Sliding-window average of the region metrics; a region is lively while the
// average exceeds the threshold. Emptied regions (all elements removed) and
// orphaned representatives are forced quiet immediately.
class AdaptivityState {
 public:
  AdaptivityState() = default;
  AdaptivityState(const AdaptivityConfig& cfg, int num_regions)
      : cfg_(cfg), num_regions_(num_regions) {
    if (cfg.window < 1) throw ConfigError("adaptivity window must be at least one step");
    if (cfg.threshold < 0.0) throw ConfigError("adaptivity threshold must be non-negative");
  }

  void push(const VecX& metrics) {
    if (metrics.size() != num_regions_) throw ConfigError("metric vector size mismatch");
    history_.push_back(metrics);
    while (static_cast<int>(history_.size()) > cfg_.window) history_.pop_front();
  }

  VecX windowed_average() const {
    VecX avg = VecX::Zero(num_regions_);
    if (history_.empty()) return avg;
    for (const VecX& m : history_) avg += m;
    return avg / static_cast<double>(history_.size());
  }

  std::vector<char> lively_regions(const Assembler& assembler, const RegionMap& regions) const {
    const VecX avg = windowed_average();
    std::vector<char> lively(num_regions_, 0);
    std::vector<char> has_elements(num_regions_, 0);
    for (int e = 0; e < assembler.mesh().num_elements(); ++e)
      if (assembler.is_active(e)) has_elements[regions.element_region[e]] = 1;
    for (int r = 0; r < num_regions_; ++r) {
      if (!has_elements[r]) continue;
      if (assembler.orphaned_nodes()[regions.representative[r]]) continue;
      lively[r] = avg(r) > cfg_.threshold ? 1 : 0;
    }
    return lively;
  }

  const AdaptivityConfig& config() const { return cfg_; }

 private:
  AdaptivityConfig cfg_;
  int num_regions_ = 0;
  std::deque<VecX> history_;
};

// The dynamic node set for the next solve: always-dynamic nodes plus the
// representatives of lively regions.
inline std::vector<int> select_dynamic_nodes(const std::vector<int>& pinned_dynamic,
                                             const RegionMap& regions,
                                             const std::vector<char>& lively) {
  std::vector<int> out = pinned_dynamic;
  for (int r = 0; r < regions.num_regions; ++r) {
    if (!lively[r]) continue;
    const int node = regions.representative[r];
    if (std::find(out.begin(), out.end(), node) == out.end()) out.push_back(node);
  }
  return out;
}

}  // namespace conjac
