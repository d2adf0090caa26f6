#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "garment/error.hpp"
#include "garment/sim/state.hpp"
#include "garment/vec3.hpp"

namespace garment::sim {

struct SimConfig {
  // Relaxation
  int relax_iterations = 8000;
  double force_tolerance = 2e-4;  // residual expressed as cm (|F| / k_struct)
  double gravity = 981.0;         // cm/s^2
  double damping = 0.92;
  double dt = 2e-3;
  double floor_z = 0.0;

  // Real-world surrogate knobs
  bool perturbed = false;
  double perturb_scale = 1.15;
  double perturb_stiffness = 0.6;
  double observation_noise_sigma = 0.05;
  double dropout_fraction = 0.2;

  // Grasp / episode sampling
  int region_size = 250;
  double max_action = 5.0;
  double action_sigma = 1.5;
  int episode_length = 10;
  double prehang_noise_sigma = 0.5;
  double anchor_height = 52.0;
  double anchor_y = 0.0;

  void validate() const {
    if (relax_iterations < 1)
      throw Error("bad-config", "relax_iterations must be >= 1");
    if (!(force_tolerance > 0.0))
      throw Error("bad-config", "force_tolerance must be positive");
    if (!(damping > 0.0 && damping < 1.0))
      throw Error("bad-config", "damping must lie in (0, 1)");
    if (!(dropout_fraction >= 0.0 && dropout_fraction < 0.5))
      throw Error("bad-config", "dropout_fraction must lie in [0, 0.5)");
    if (region_size < 1) throw Error("bad-config", "region_size must be >= 1");
  }

  double stiffness_factor() const { return perturbed ? perturb_stiffness : 1.0; }
  double rest_factor() const { return perturbed ? perturb_scale : 1.0; }
};

/// Horizontal cylindrical bar standing in for the hanger.
struct Hanger {
  Vec3 bar_start;
  Vec3 bar_end;
  double bar_radius = 1.5;

  void validate() const {
    if (norm(bar_end - bar_start) <= 0.0)
      throw Error("bad-config", "hanger bar has zero length");
    if (std::abs(bar_end.z - bar_start.z) > 1e-6)
      throw Error("bad-config", "hanger bar must be horizontal");
    if (!(bar_radius > 0.0))
      throw Error("bad-config", "hanger bar_radius must be positive");
  }

  /// Parameter of the orthogonal projection of p onto the (unclamped) axis.
  double axis_param(const Vec3& p) const {
    Vec3 u = bar_end - bar_start;
    return dot(p - bar_start, u) / norm2(u);
  }

  double distance_to_segment(const Vec3& p) const {
    double t = std::clamp(axis_param(p), 0.0, 1.0);
    return distance(p, bar_start + t * (bar_end - bar_start));
  }
};

struct SettleReport {
  int iterations = 0;
  double residual = 0.0;
  double energy = 0.0;
};

namespace detail {

struct ForcePass {
  double energy = 0.0;
  double residual = 0.0;  // max |F| / k_struct over unconstrained particles
};

inline ForcePass forces(const GarmentState& s, const SimConfig& cfg,
                        std::vector<Vec3>& f,
                        const std::vector<char>* in_contact) {
  const GarmentRig& rig = *s.rig;
  const double kf = cfg.stiffness_factor();
  const double rf = cfg.rest_factor();
  f.assign(s.positions.size(), Vec3{});
  double energy = 0.0;
  for (const Spring& sp : rig.springs) {
    Vec3 d = s.positions[sp.b] - s.positions[sp.a];
    double len = norm(d);
    double rest = sp.rest * rf;
    double k = sp.k * kf;
    double ext = len - rest;
    energy += 0.5 * k * ext * ext;
    if (len > 1e-12) {
      Vec3 fs = (k * ext / len) * d;
      f[sp.a] += fs;
      f[sp.b] -= fs;
    }
  }
  double residual = 0.0;
  const double k_ref = rig.tmpl.stiffness_structural * kf;
  for (int i = 0; i < s.particle_count(); ++i) {
    f[i].z -= rig.mass[i] * cfg.gravity;
    energy += rig.mass[i] * cfg.gravity * s.positions[i].z;
    bool constrained = i == s.attach_left || i == s.attach_right ||
                       (in_contact && (*in_contact)[i]);
    if (!constrained) residual = std::max(residual, norm(f[i]) / k_ref);
  }
  return {energy, residual};
}

inline double energy_only(const PointSet& x, const GarmentState& s,
                          const SimConfig& cfg) {
  const GarmentRig& rig = *s.rig;
  const double kf = cfg.stiffness_factor();
  const double rf = cfg.rest_factor();
  double energy = 0.0;
  for (const Spring& sp : rig.springs) {
    double ext = distance(x[sp.a], x[sp.b]) - sp.rest * rf;
    double k = sp.k * kf;
    energy += 0.5 * k * ext * ext;
  }
  for (std::size_t i = 0; i < x.size(); ++i)
    energy += rig.mass[i] * cfg.gravity * x[i].z;
  return energy;
}

}  // namespace detail

/// Total spring potential plus gravitational energy of a state.
inline double total_energy(const GarmentState& s, const SimConfig& cfg) {
  return detail::energy_only(s.positions, s, cfg);
}

/// Max per-particle residual force norm over unconstrained particles,
/// expressed on the cm scale (|F| / stiffness_structural).
inline double measured_residual(const GarmentState& s, const SimConfig& cfg) {
  std::vector<Vec3> f;
  return detail::forces(s, cfg, f, nullptr).residual;
}

/// Damped quasi-static relaxation. Without a collider every accepted
/// iteration strictly lowers the total energy (rejected moves leave the
/// state untouched and restart the momentum with a smaller step). With a
/// collider, bar/floor projection runs after each position update and
/// projected particles lose their velocity, which makes contact sticky.
inline SettleReport settle(GarmentState& s, const SimConfig& cfg,
                           const Hanger* bar = nullptr) {
  cfg.validate();
  const GarmentRig& rig = *s.rig;
  const int n = s.particle_count();
  if (s.attach_left >= 0) s.positions[s.attach_left] = s.gripper_left;
  if (s.attach_right >= 0) s.positions[s.attach_right] = s.gripper_right;

  std::vector<Vec3> v(n), f;
  std::vector<char> contact(n, 0);
  PointSet cand(n);
  double dt = cfg.dt;
  const double dt_min = cfg.dt / 64.0, dt_max = 4.0 * cfg.dt;
  double e_prev = detail::energy_only(s.positions, s, cfg);

  SettleReport report;
  report.energy = e_prev;
  for (int iter = 0; iter < cfg.relax_iterations; ++iter) {
    detail::ForcePass fp =
        detail::forces(s, cfg, f, bar ? &contact : nullptr);
    report.residual = fp.residual;
    report.iterations = iter;
    if (fp.residual < cfg.force_tolerance) break;

    for (int i = 0; i < n; ++i) {
      if (i == s.attach_left || i == s.attach_right) {
        v[i] = Vec3{};
        cand[i] = s.positions[i];
        continue;
      }
      v[i] = cfg.damping * v[i] + (dt / rig.mass[i]) * f[i];
      cand[i] = s.positions[i] + dt * v[i];
      if (!finite(cand[i]))
        throw Error("divergence",
                    "settle diverged at iteration " + std::to_string(iter));
    }

    if (bar) {
      // Project out of the bar cylinder and off the floor; freeze projected
      // particles for this iteration.
      Vec3 u = bar->bar_end - bar->bar_start;
      double uu = norm2(u);
      for (int i = 0; i < n; ++i) {
        if (i == s.attach_left || i == s.attach_right) continue;
        bool hit = false;
        double t = std::clamp(dot(cand[i] - bar->bar_start, u) / uu, 0.0, 1.0);
        Vec3 axis_pt = bar->bar_start + t * u;
        Vec3 radial = cand[i] - axis_pt;
        double r = norm(radial);
        if (r < bar->bar_radius) {
          if (r < 1e-9) radial = Vec3{0, 0, 1}, r = 1.0;
          cand[i] = axis_pt + (bar->bar_radius / r) * radial;
          hit = true;
        }
        if (cand[i].z < cfg.floor_z) {
          cand[i].z = cfg.floor_z;
          hit = true;
        }
        contact[i] = hit;
        if (hit) v[i] = Vec3{};
      }
      s.positions = cand;
    } else {
      double e_cand = detail::energy_only(cand, s, cfg);
      if (e_cand <= e_prev) {
        s.positions = cand;
        e_prev = e_cand;
        dt = std::min(dt * 1.1, dt_max);
      } else {
        std::fill(v.begin(), v.end(), Vec3{});
        dt = std::max(dt * 0.5, dt_min);
      }
    }
    report.energy = bar ? detail::energy_only(s.positions, s, cfg) : e_prev;
  }
  return report;
}

namespace detail {

/// Resolve the two grasped regions: region_size nearest particles to each
/// gripper, contested particles going to the nearer gripper (ties to the
/// left), refilled from each side's candidate list.
inline void assign_regions(GarmentState& s, int region_size) {
  const int n = s.particle_count();
  if (2 * region_size > n)
    throw Error("region-conflict",
                "regions need " + std::to_string(2 * region_size) +
                    " particles but the garment has " + std::to_string(n));
  std::vector<double> dl(n), dr(n);
  for (int i = 0; i < n; ++i) {
    dl[i] = distance(s.positions[i], s.gripper_left);
    dr[i] = distance(s.positions[i], s.gripper_right);
  }
  auto sorted_by = [&](const std::vector<double>& d) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return d[a] < d[b]; });
    return order;
  };
  std::vector<int> order_l = sorted_by(dl), order_r = sorted_by(dr);

  std::vector<char> in_l(n, 0), in_r(n, 0);
  for (int k = 0; k < region_size; ++k) in_l[order_l[k]] = 1;
  for (int k = 0; k < region_size; ++k) in_r[order_r[k]] = 1;
  for (int i = 0; i < n; ++i) {
    if (in_l[i] && in_r[i]) {
      if (dl[i] <= dr[i])
        in_r[i] = 0;
      else
        in_l[i] = 0;
    }
  }
  auto refill = [&](std::vector<char>& mine, const std::vector<char>& theirs,
                    const std::vector<int>& order) {
    int have = std::count(mine.begin(), mine.end(), char(1));
    for (int k = 0; k < n && have < region_size; ++k) {
      int i = order[k];
      if (!mine[i] && !theirs[i]) {
        mine[i] = 1;
        ++have;
      }
    }
    return have;
  };
  int nl = refill(in_l, in_r, order_l);
  int nr = refill(in_r, in_l, order_r);
  if (nl != region_size || nr != region_size)
    throw Error("region-conflict", "could not build disjoint grasp regions");

  s.left_region.clear();
  s.right_region.clear();
  for (int i = 0; i < n; ++i) {
    s.node_type[i] = NodeType::MainBody;
    if (in_l[i]) {
      s.left_region.push_back(i);
      s.node_type[i] = NodeType::LeftGrasped;
    } else if (in_r[i]) {
      s.right_region.push_back(i);
      s.node_type[i] = NodeType::RightGrasped;
    }
  }
}

}  // namespace detail

/// Pin the two collar-corner particles to the pre-hang anchors (offset by
/// collar_offset), relax, and populate the grasp regions. Optional grasp
/// jitter displaces the per-side grasp target before the nearest particle
/// is chosen; zero jitter grasps the collar corners themselves.
inline GarmentState grasp_and_lift(const GarmentState& state,
                                   const Vec3& collar_offset,
                                   const SimConfig& cfg,
                                   const Vec3& grasp_jitter_left = Vec3{},
                                   const Vec3& grasp_jitter_right = Vec3{}) {
  cfg.validate();
  GarmentState s = state;
  const GarmentRig& rig = *s.rig;

  auto nearest_particle = [&](const Vec3& target) {
    int best = 0;
    double best_d = distance(s.positions[0], target);
    for (int i = 1; i < s.particle_count(); ++i) {
      double d = distance(s.positions[i], target);
      if (d < best_d) {
        best = i;
        best_d = d;
      }
    }
    return best;
  };
  Vec3 corner_l = s.positions[rig.collar_left] + grasp_jitter_left;
  Vec3 corner_r = s.positions[rig.collar_right] + grasp_jitter_right;
  s.attach_left = nearest_particle(corner_l);
  s.attach_right = nearest_particle(corner_r);
  if (s.attach_left == s.attach_right)
    throw Error("region-conflict", "both grippers grasped the same particle");

  // Anchor separation keeps the collar unstretched for the nominal grasp.
  double sep = distance(rig.rest_positions[rig.collar_left],
                        rig.rest_positions[rig.collar_right]) *
               cfg.rest_factor();
  double cx = rig.center_x();
  Vec3 anchor_l{cx - 0.5 * sep, cfg.anchor_y, cfg.anchor_height};
  Vec3 anchor_r{cx + 0.5 * sep, cfg.anchor_y, cfg.anchor_height};
  s.gripper_left = anchor_l + collar_offset;
  s.gripper_right = anchor_r + collar_offset;

  // Drop the garment near its hanging pose before relaxing so the solver
  // starts close to equilibrium: translate so the grasped pair sits between
  // the grippers.
  Vec3 grasp_mid = 0.5 * (s.positions[s.attach_left] + s.positions[s.attach_right]);
  Vec3 shift = 0.5 * (s.gripper_left + s.gripper_right) - grasp_mid;
  for (Vec3& p : s.positions) p += shift;

  settle(s, cfg);
  detail::assign_regions(s, cfg.region_size);
  return s;
}

/// Translate the grippers by the commanded deltas and relax. Regions and
/// labels carry over untouched.
inline GarmentState step(const GarmentState& state, const Action& action,
                         const SimConfig& cfg, const Hanger* bar = nullptr) {
  action.validate(cfg.max_action);
  if (!state.grasped())
    throw Error("precondition", "step requires a grasped state");
  GarmentState s = state;
  s.gripper_left += action.delta_left;
  s.gripper_right += action.delta_right;
  settle(s, cfg, bar);
  return s;
}

/// Move the grippers to absolute targets (used when replaying trajectories).
inline GarmentState move_grippers(const GarmentState& state, const Vec3& left,
                                  const Vec3& right, const SimConfig& cfg,
                                  const Hanger* bar = nullptr) {
  if (!state.grasped())
    throw Error("precondition", "move_grippers requires a grasped state");
  GarmentState s = state;
  s.gripper_left = left;
  s.gripper_right = right;
  settle(s, cfg, bar);
  return s;
}

/// Unpin both grippers and let the garment drape onto the bar/floor.
inline GarmentState release_and_drape(const GarmentState& state,
                                      const Hanger& bar, const SimConfig& cfg) {
  bar.validate();
  GarmentState s = state;
  s.attach_left = -1;
  s.attach_right = -1;
  settle(s, cfg, &bar);
  return s;
}

/// Geometric hanging-success predicate:
///  (a) each sleeve's shoulder-row centroid lies within
///      bar_radius + particle_spacing of the bar axis,
///  (b) the left sleeve centroid projects onto the left half of the bar
///      segment and the right one onto the right half,
///  (c) the garment's centre of mass sits below the bar axis.
inline bool hang_success(const GarmentState& s, const Hanger& bar) {
  bar.validate();
  const GarmentRig& rig = *s.rig;
  auto shoulder_centroid = [&](const std::vector<int>& idx) {
    Vec3 c;
    for (int i : idx) c += s.positions[i];
    return c / static_cast<double>(idx.size());
  };
  Vec3 cl = shoulder_centroid(rig.left_shoulder);
  Vec3 cr = shoulder_centroid(rig.right_shoulder);
  double reach = bar.bar_radius + rig.tmpl.particle_spacing;
  if (bar.distance_to_segment(cl) > reach) return false;
  if (bar.distance_to_segment(cr) > reach) return false;
  double tl = bar.axis_param(cl);
  double tr = bar.axis_param(cr);
  if (!(tl >= 0.0 && tl < 0.5)) return false;
  if (!(tr > 0.5 && tr <= 1.0)) return false;
  Vec3 com = centroid(s.positions);
  return com.z < bar.bar_start.z;
}

}  // namespace garment::sim
