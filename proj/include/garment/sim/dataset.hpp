#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "garment/error.hpp"
#include "garment/rng.hpp"
#include "garment/sim/engine.hpp"
#include "garment/sim/state.hpp"

namespace garment::sim {

/// Recorded one-step transition: everything the learner sees. Positions may
/// be a subset of the simulator's particles when observation dropout is on;
/// region indices refer to this record's own positions array.
struct Transition {
  PointSet positions;
  std::vector<int> node_type;
  std::vector<int> left_region;
  std::vector<int> right_region;
  Vec3 gripper_left;
  Vec3 gripper_right;
  Action action;
  PointSet next_positions;

  PointSet region_points(const PointSet& from) const {
    PointSet pts;
    pts.reserve(left_region.size() + right_region.size());
    for (int i : left_region) pts.push_back(from[i]);
    for (int i : right_region) pts.push_back(from[i]);
    return pts;
  }
  PointSet current_regions() const { return region_points(positions); }
  PointSet next_regions() const { return region_points(next_positions); }
  Vec3 gripper_mid() const { return 0.5 * (gripper_left + gripper_right); }
};

namespace detail {

inline void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  out += buf;
}

inline void append_vec3(std::string& out, const Vec3& v) {
  out += '[';
  append_number(out, v.x);
  out += ',';
  append_number(out, v.y);
  out += ',';
  append_number(out, v.z);
  out += ']';
}

inline void append_points(std::string& out, const PointSet& pts) {
  out += '[';
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) out += ',';
    append_vec3(out, pts[i]);
  }
  out += ']';
}

inline void append_ints(std::string& out, const std::vector<int>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  out += ']';
}

}  // namespace detail

/// One JSON object per line; coordinates in cm with 6 significant digits.
inline std::string to_jsonl(const Transition& t) {
  std::string s;
  s.reserve(64 * t.positions.size());
  s += "{\"positions\":";
  detail::append_points(s, t.positions);
  s += ",\"node_type\":";
  detail::append_ints(s, t.node_type);
  s += ",\"left_region\":";
  detail::append_ints(s, t.left_region);
  s += ",\"right_region\":";
  detail::append_ints(s, t.right_region);
  s += ",\"gripper_left\":";
  detail::append_vec3(s, t.gripper_left);
  s += ",\"gripper_right\":";
  detail::append_vec3(s, t.gripper_right);
  s += ",\"action\":{\"delta_left\":";
  detail::append_vec3(s, t.action.delta_left);
  s += ",\"delta_right\":";
  detail::append_vec3(s, t.action.delta_right);
  s += "},\"next_positions\":";
  detail::append_points(s, t.next_positions);
  s += "}";
  return s;
}

inline Transition transition_from_json(const nlohmann::json& j) {
  Transition t;
  auto vec3_of = [](const nlohmann::json& a) {
    return Vec3{a.at(0).get<double>(), a.at(1).get<double>(),
                a.at(2).get<double>()};
  };
  for (const auto& p : j.at("positions")) t.positions.push_back(vec3_of(p));
  for (const auto& v : j.at("node_type")) t.node_type.push_back(v.get<int>());
  for (const auto& v : j.at("left_region")) t.left_region.push_back(v.get<int>());
  for (const auto& v : j.at("right_region"))
    t.right_region.push_back(v.get<int>());
  t.gripper_left = vec3_of(j.at("gripper_left"));
  t.gripper_right = vec3_of(j.at("gripper_right"));
  t.action.delta_left = vec3_of(j.at("action").at("delta_left"));
  t.action.delta_right = vec3_of(j.at("action").at("delta_right"));
  for (const auto& p : j.at("next_positions"))
    t.next_positions.push_back(vec3_of(p));
  return t;
}

inline void write_jsonl(const std::string& path,
                        const std::vector<Transition>& transitions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write dataset file: " + path);
  for (const Transition& t : transitions) out << to_jsonl(t) << "\n";
}

inline std::vector<Transition> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open dataset file: " + path);
  std::vector<Transition> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(transition_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

namespace detail {

/// Observation model: identity for the nominal domain; for the perturbed
/// surrogate, Gaussian noise on every recorded coordinate plus per-episode
/// dropout of main-body particles (grasped regions are never dropped).
struct Observer {
  bool perturbed = false;
  double noise_sigma = 0.0;
  std::vector<int> keep;     // old index -> position in the record, or -1
  std::vector<int> kept_ids;

  static Observer for_episode(const GarmentState& s, const SimConfig& cfg,
                              Rng& rng) {
    Observer ob;
    ob.perturbed = cfg.perturbed;
    ob.noise_sigma = cfg.observation_noise_sigma;
    const int n = s.particle_count();
    ob.keep.assign(n, -1);
    for (int i = 0; i < n; ++i) {
      bool droppable = s.node_type[i] == NodeType::MainBody;
      bool drop = cfg.perturbed && droppable &&
                  rng.uniform() < cfg.dropout_fraction;
      if (!drop) {
        ob.keep[i] = static_cast<int>(ob.kept_ids.size());
        ob.kept_ids.push_back(i);
      }
    }
    return ob;
  }

  PointSet observe_positions(const PointSet& x, Rng& rng) const {
    PointSet out;
    out.reserve(kept_ids.size());
    for (int i : kept_ids) {
      Vec3 p = x[i];
      if (perturbed && noise_sigma > 0.0) {
        p.x += rng.normal(0.0, noise_sigma);
        p.y += rng.normal(0.0, noise_sigma);
        p.z += rng.normal(0.0, noise_sigma);
      }
      out.push_back(p);
    }
    return out;
  }

  std::vector<int> remap(const std::vector<int>& region) const {
    std::vector<int> out;
    out.reserve(region.size());
    for (int i : region) out.push_back(keep[i]);
    return out;
  }
};

}  // namespace detail

/// Episodes of grasp-and-lift followed by chained random actions. Actions
/// come from their own seed stream, so nominal and perturbed datasets built
/// from the same seed share episode structure and action sequences.
inline std::vector<Transition> generate_dataset(const GarmentTemplate& tmpl,
                                                int n_transitions,
                                                const SimConfig& cfg,
                                                std::uint64_t seed) {
  if (n_transitions < 1)
    throw Error("bad-config", "n_transitions must be >= 1");
  cfg.validate();
  std::vector<Transition> out;
  out.reserve(n_transitions);
  GarmentState base = instantiate_garment(tmpl);

  int episode = 0;
  while (static_cast<int>(out.size()) < n_transitions) {
    Rng rng_action(derive_seed(seed, "actions", episode));
    Rng rng_init(derive_seed(seed, "prehang", episode));
    Rng rng_obs(derive_seed(seed, "observe", episode));

    Vec3 offset{rng_init.normal(0.0, cfg.prehang_noise_sigma),
                rng_init.normal(0.0, cfg.prehang_noise_sigma),
                rng_init.normal(0.0, cfg.prehang_noise_sigma)};
    GarmentState state = grasp_and_lift(base, offset, cfg);
    detail::Observer observer = detail::Observer::for_episode(state, cfg, rng_obs);

    for (int t = 0;
         t < cfg.episode_length && static_cast<int>(out.size()) < n_transitions;
         ++t) {
      Action a;
      for (Vec3* d : {&a.delta_left, &a.delta_right})
        for (int c = 0; c < 3; ++c)
          (*d)[c] = std::clamp(rng_action.normal(0.0, cfg.action_sigma),
                               -cfg.max_action, cfg.max_action);
      GarmentState next = step(state, a, cfg);

      Transition tr;
      tr.positions = observer.observe_positions(state.positions, rng_obs);
      tr.next_positions = observer.observe_positions(next.positions, rng_obs);
      tr.left_region = observer.remap(state.left_region);
      tr.right_region = observer.remap(state.right_region);
      tr.node_type.reserve(observer.kept_ids.size());
      for (int i : observer.kept_ids)
        tr.node_type.push_back(static_cast<int>(state.node_type[i]));
      tr.gripper_left = state.gripper_left;
      tr.gripper_right = state.gripper_right;
      tr.action = a;
      out.push_back(std::move(tr));
      state = std::move(next);
    }
    ++episode;
  }
  return out;
}

}  // namespace garment::sim
