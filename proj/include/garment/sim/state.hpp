#pragma once

#include <memory>
#include <vector>

#include "garment/error.hpp"
#include "garment/sim/garment_template.hpp"
#include "garment/vec3.hpp"

namespace garment::sim {

enum class NodeType : int {
  MainBody = 0,
  LeftGrasped = 1,
  RightGrasped = 2,
};

/// Commanded 3-D displacement for each gripper attachment, in cm.
struct Action {
  Vec3 delta_left;
  Vec3 delta_right;

  void validate(double max_action) const {
    for (const Vec3* d : {&delta_left, &delta_right})
      for (int c = 0; c < 3; ++c)
        if (std::abs((*d)[c]) > max_action)
          throw Error("out-of-range",
                      "action component exceeds max_action");
  }
};

inline Action zero_action() { return {}; }

/// Snapshot of the garment: particle positions plus grasp bookkeeping.
/// Treated as immutable once returned by an operation.
struct GarmentState {
  std::shared_ptr<const GarmentRig> rig;
  PointSet positions;
  std::vector<NodeType> node_type;
  std::vector<int> left_region;
  std::vector<int> right_region;
  Vec3 gripper_left;
  Vec3 gripper_right;
  int attach_left = -1;
  int attach_right = -1;

  bool grasped() const { return attach_left >= 0 && attach_right >= 0; }

  int particle_count() const { return static_cast<int>(positions.size()); }

  Vec3 gripper_mid() const { return 0.5 * (gripper_left + gripper_right); }

  PointSet region_points() const {
    PointSet pts;
    pts.reserve(left_region.size() + right_region.size());
    for (int i : left_region) pts.push_back(positions[i]);
    for (int i : right_region) pts.push_back(positions[i]);
    return pts;
  }
};

inline GarmentState instantiate_garment(const GarmentTemplate& tmpl) {
  GarmentState s;
  s.rig = build_rig(tmpl);
  s.positions = s.rig->rest_positions;
  s.node_type.assign(s.positions.size(), NodeType::MainBody);
  s.gripper_left = s.positions[s.rig->collar_left];
  s.gripper_right = s.positions[s.rig->collar_right];
  return s;
}

}  // namespace garment::sim
