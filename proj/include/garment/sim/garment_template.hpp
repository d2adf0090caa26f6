#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "garment/error.hpp"
#include "garment/vec3.hpp"

namespace garment::sim {

/// Open-shirt approximation: one body panel plus two sleeve panels stitched
/// at the shoulder rows. Lengths in cm, mass in grams, stiffness in force
/// per cm of extension.
struct GarmentTemplate {
  std::string name;
  double body_width = 0.0;
  double body_height = 0.0;
  double sleeve_length = 0.0;
  double sleeve_width = 0.0;
  double particle_spacing = 0.0;
  double stiffness_structural = 0.0;
  double stiffness_shear = 0.0;
  double stiffness_bend = 0.0;
  double mass_per_particle = 1.0;

  void validate() const {
    auto positive = [&](double v, const char* what) {
      if (!(v > 0.0))
        throw Error("invalid-template",
                    name + ": " + what + " must be positive");
    };
    positive(body_width, "body_width");
    positive(body_height, "body_height");
    positive(sleeve_length, "sleeve_length");
    positive(sleeve_width, "sleeve_width");
    positive(particle_spacing, "particle_spacing");
    positive(stiffness_structural, "stiffness_structural");
    positive(stiffness_shear, "stiffness_shear");
    positive(stiffness_bend, "stiffness_bend");
    positive(mass_per_particle, "mass_per_particle");
    if (particle_spacing >= std::min(body_width, sleeve_width))
      throw Error("invalid-template",
                  name + ": particle_spacing must be smaller than both "
                         "body_width and sleeve_width");
  }
};

enum class SpringKind { Structural, Shear, Bend };

struct Spring {
  int a = 0, b = 0;
  double rest = 0.0;
  double k = 0.0;
  SpringKind kind = SpringKind::Structural;
};

/// Immutable particle/spring layout instantiated from a template. States
/// share it by pointer; the learner never sees it.
struct GarmentRig {
  GarmentTemplate tmpl;
  int body_nx = 0, body_nz = 0;
  int sleeve_nx = 0, sleeve_nz = 0;
  int particle_count = 0;
  PointSet rest_positions;
  std::vector<double> mass;
  std::vector<Spring> springs;
  std::vector<int> left_shoulder;   // stitch column, left sleeve
  std::vector<int> right_shoulder;  // stitch column, right sleeve
  int collar_left = -1, collar_right = -1;

  double center_x() const {
    return 0.5 * (body_nx - 1) * tmpl.particle_spacing;
  }
};

namespace detail {

inline int grid_count(double length, double spacing) {
  return static_cast<int>(std::floor(length / spacing + 1e-9)) + 1;
}

}  // namespace detail

inline std::shared_ptr<const GarmentRig> build_rig(const GarmentTemplate& tmpl) {
  tmpl.validate();
  auto rig = std::make_shared<GarmentRig>();
  rig->tmpl = tmpl;
  const double p = tmpl.particle_spacing;
  const int nx = detail::grid_count(tmpl.body_width, p);
  const int nz = detail::grid_count(tmpl.body_height, p);
  const int sx = detail::grid_count(tmpl.sleeve_length, p);
  const int sz = detail::grid_count(tmpl.sleeve_width, p);
  rig->body_nx = nx;
  rig->body_nz = nz;
  rig->sleeve_nx = sx;
  rig->sleeve_nz = sz;
  if (sz > nz)
    throw Error("invalid-template", tmpl.name + ": sleeves taller than body");

  // Body grid in the x-z plane at y = 0; row-major with z as the row.
  auto body_idx = [nx](int i, int kz) { return kz * nx + i; };
  for (int kz = 0; kz < nz; ++kz)
    for (int i = 0; i < nx; ++i)
      rig->rest_positions.push_back({i * p, 0.0, kz * p});

  // Sleeve grids; column u = 0 shares the body edge column (stitch row).
  // side = -1 for left (grows toward -x), +1 for right.
  auto add_sleeve = [&](int side, std::vector<int>& shoulder) {
    std::vector<std::vector<int>> idx(sx, std::vector<int>(sz));
    for (int w = 0; w < sz; ++w) {
      int kz = nz - sz + w;
      idx[0][w] = body_idx(side < 0 ? 0 : nx - 1, kz);
      shoulder.push_back(idx[0][w]);
    }
    for (int u = 1; u < sx; ++u) {
      for (int w = 0; w < sz; ++w) {
        int kz = nz - sz + w;
        double x = side < 0 ? -u * p : (nx - 1 + u) * p;
        idx[u][w] = static_cast<int>(rig->rest_positions.size());
        rig->rest_positions.push_back({x, 0.0, kz * p});
      }
    }
    return idx;
  };

  std::vector<std::vector<int>> left = add_sleeve(-1, rig->left_shoulder);
  std::vector<std::vector<int>> right = add_sleeve(+1, rig->right_shoulder);

  rig->particle_count = static_cast<int>(rig->rest_positions.size());
  if (rig->particle_count < 200)
    throw Error("invalid-template",
                tmpl.name + ": template produces " +
                    std::to_string(rig->particle_count) +
                    " particles (< 200)");
  rig->mass.assign(rig->particle_count, tmpl.mass_per_particle);

  auto add_spring = [&](int a, int b, double rest, double k, SpringKind kind) {
    rig->springs.push_back({a, b, rest, k, kind});
  };
  const double ks = tmpl.stiffness_structural;
  const double kd = tmpl.stiffness_shear;
  const double kb = tmpl.stiffness_bend;

  // Springs over a logical grid; the filter skips pairs that live entirely
  // inside the body (used to avoid duplicating the stitch column's springs
  // when the sleeve grid is traversed).
  auto mesh_springs = [&](auto at, int cols, int rows, auto keep) {
    for (int u = 0; u < cols; ++u) {
      for (int w = 0; w < rows; ++w) {
        int a = at(u, w);
        if (u + 1 < cols && keep(u, w, u + 1, w))
          add_spring(a, at(u + 1, w), p, ks, SpringKind::Structural);
        if (w + 1 < rows && keep(u, w, u, w + 1))
          add_spring(a, at(u, w + 1), p, ks, SpringKind::Structural);
        if (u + 1 < cols && w + 1 < rows && keep(u, w, u + 1, w + 1)) {
          add_spring(a, at(u + 1, w + 1), p * std::sqrt(2.0), kd,
                     SpringKind::Shear);
          add_spring(at(u + 1, w), at(u, w + 1), p * std::sqrt(2.0), kd,
                     SpringKind::Shear);
        }
        if (u + 2 < cols && keep(u, w, u + 2, w))
          add_spring(a, at(u + 2, w), 2.0 * p, kb, SpringKind::Bend);
        if (w + 2 < rows && keep(u, w, u, w + 2))
          add_spring(a, at(u, w + 2), 2.0 * p, kb, SpringKind::Bend);
      }
    }
  };

  auto always = [](int, int, int, int) { return true; };
  mesh_springs([&](int i, int kz) { return body_idx(i, kz); }, nx, nz, always);
  // Sleeve springs: keep only pairs touching at least one off-body column.
  auto off_body = [](int u0, int, int u1, int) { return u0 >= 1 || u1 >= 1; };
  mesh_springs([&](int u, int w) { return left[u][w]; }, sx, sz, off_body);
  mesh_springs([&](int u, int w) { return right[u][w]; }, sx, sz, off_body);

  // Collar grasp corners sit on the top row between the sleeves.
  int ci_left = static_cast<int>(std::lround(0.30 * (nx - 1)));
  int ci_right = static_cast<int>(std::lround(0.70 * (nx - 1)));
  if (ci_left == ci_right)
    throw Error("invalid-template", tmpl.name + ": collar corners coincide");
  rig->collar_left = body_idx(ci_left, nz - 1);
  rig->collar_right = body_idx(ci_right, nz - 1);
  return rig;
}

}  // namespace garment::sim
