#include "garment/sim/engine.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "garment/sim/dataset.hpp"
#include "garment/sim/state.hpp"

namespace garment::sim {
namespace {

GarmentTemplate spec_example_template() {
  GarmentTemplate t;
  t.name = "example";
  t.body_width = 20.0;
  t.body_height = 30.0;
  t.sleeve_length = 10.0;
  t.sleeve_width = 6.0;
  t.particle_spacing = 2.0;
  t.stiffness_structural = 3.0e4;
  t.stiffness_shear = 1.5e4;
  t.stiffness_bend = 3.0e3;
  t.mass_per_particle = 1.0;
  return t;
}

GarmentTemplate small_template() {
  GarmentTemplate t = spec_example_template();
  t.name = "small";
  t.particle_spacing = 1.5;
  t.body_width = 15.0;
  t.body_height = 21.0;
  t.sleeve_length = 7.5;
  t.sleeve_width = 6.0;
  return t;
}

GarmentTemplate dense_template() {
  GarmentTemplate t = spec_example_template();
  t.name = "dense";
  t.particle_spacing = 1.0;
  return t;
}

SimConfig fast_sim() {
  SimConfig cfg;
  cfg.region_size = 20;
  return cfg;
}

TEST(Instantiate, ParticleCountMatchesGridFormula) {
  // Counted by hand for body 20x30 cm at 2 cm spacing with 10x6 sleeves:
  // body grid 11x16, sleeve grids 6x4, stitch column of 4 shared per sleeve.
  const int nx = 11, nz = 16, sx = 6, sz = 4;
  const int expected = nx * nz + 2 * sx * sz - 2 * sz;
  GarmentState s = instantiate_garment(spec_example_template());
  EXPECT_EQ(s.particle_count(), expected);
  EXPECT_EQ(s.particle_count(), 216);
}

TEST(Instantiate, SpacingExceedingWidthIsInvalid) {
  GarmentTemplate t = spec_example_template();
  t.particle_spacing = 25.0;
  try {
    instantiate_garment(t);
    FAIL() << "expected invalid-template";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-template");
  }
}

TEST(Instantiate, TooFewParticlesIsInvalid) {
  GarmentTemplate t = spec_example_template();
  t.body_width = 8.0;
  t.body_height = 8.0;
  t.sleeve_length = 4.0;
  t.sleeve_width = 4.0;
  try {
    instantiate_garment(t);
    FAIL() << "expected invalid-template";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-template");
  }
}

TEST(Instantiate, Deterministic) {
  GarmentState a = instantiate_garment(spec_example_template());
  GarmentState b = instantiate_garment(spec_example_template());
  ASSERT_EQ(a.particle_count(), b.particle_count());
  for (int i = 0; i < a.particle_count(); ++i)
    EXPECT_EQ(a.positions[i], b.positions[i]);
  ASSERT_EQ(a.rig->springs.size(), b.rig->springs.size());
}

TEST(Instantiate, AllNodesStartAsMainBody) {
  GarmentState s = instantiate_garment(spec_example_template());
  for (NodeType t : s.node_type) EXPECT_EQ(t, NodeType::MainBody);
  EXPECT_TRUE(s.left_region.empty());
  EXPECT_TRUE(s.right_region.empty());
}

// Single free particle hanging from one spring: equilibrium extension is
// m*g/k below the rest length (solved by hand from k*ext = m*g).
TEST(Settle, OneSpringAnalyticEquilibrium) {
  auto rig = std::make_shared<GarmentRig>();
  rig->tmpl = spec_example_template();
  rig->tmpl.stiffness_structural = 2.0e4;
  rig->particle_count = 2;
  rig->rest_positions = {{0, 0, 10}, {0, 0, 5}};
  rig->mass = {1.0, 1.0};
  rig->springs.push_back({0, 1, 5.0, 2.0e4, SpringKind::Structural});

  GarmentState s;
  s.rig = rig;
  s.positions = rig->rest_positions;
  s.node_type.assign(2, NodeType::MainBody);
  s.attach_left = 0;
  s.gripper_left = {0, 0, 10};

  SimConfig cfg;
  settle(s, cfg);
  const double ext = 1.0 * cfg.gravity / 2.0e4;
  EXPECT_NEAR(s.positions[1].z, 10.0 - 5.0 - ext, 2.0 * cfg.force_tolerance);
  EXPECT_NEAR(s.positions[1].x, 0.0, 2.0 * cfg.force_tolerance);
}

TEST(Settle, AlreadyRelaxedStateIsFixedPoint) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  GarmentState again = s;
  SettleReport r = settle(again, cfg);
  EXPECT_EQ(r.iterations, 0);
  for (int i = 0; i < s.particle_count(); ++i)
    EXPECT_LE(distance(s.positions[i], again.positions[i]),
              cfg.force_tolerance);
}

TEST(Settle, SingleIterationReducesResidualOnTautConfiguration) {
  SimConfig cfg = fast_sim();
  cfg.damping = 0.99;
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  // Stretch: yank both grippers apart without relaxing.
  s.gripper_left += Vec3{-2.5, 0, 0};
  s.gripper_right += Vec3{2.5, 0, 0};
  s.positions[s.attach_left] = s.gripper_left;
  s.positions[s.attach_right] = s.gripper_right;
  double before = measured_residual(s, cfg);
  SimConfig one = cfg;
  one.relax_iterations = 1;
  one.force_tolerance = 1e-12;
  settle(s, one);
  double after = measured_residual(s, cfg);
  EXPECT_LT(after, before);
}

TEST(Settle, EnergyNeverIncreasesBetweenIterations) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  // Perturb away from equilibrium, then watch the energy trace.
  s.gripper_left += Vec3{-2, 1, 1.5};
  s.gripper_right += Vec3{2, -1, -1.0};
  s.positions[s.attach_left] = s.gripper_left;
  s.positions[s.attach_right] = s.gripper_right;
  SimConfig one = cfg;
  one.relax_iterations = 1;
  one.force_tolerance = 1e-12;
  double prev = total_energy(s, cfg);
  for (int iter = 0; iter < 300; ++iter) {
    settle(s, one);
    double e = total_energy(s, cfg);
    ASSERT_LE(e, prev + 1e-9) << "energy rose at iteration " << iter;
    prev = e;
  }
}

TEST(Settle, NanPositionsReportDivergence) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s.positions[10].x = std::numeric_limits<double>::quiet_NaN();
  try {
    settle(s, cfg);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "divergence");
  }
}

TEST(GraspAndLift, SymmetricGarmentGivesMirroredGrippers) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  double cx = s.rig->center_x();
  EXPECT_NEAR((s.gripper_left.x - cx) + (s.gripper_right.x - cx), 0.0,
              cfg.force_tolerance);
  EXPECT_NEAR(s.gripper_left.y, s.gripper_right.y, cfg.force_tolerance);
  EXPECT_NEAR(s.gripper_left.z, s.gripper_right.z, cfg.force_tolerance);
}

TEST(GraspAndLift, RegionSizeMatchesConfig250) {
  SimConfig cfg;
  cfg.region_size = 250;
  GarmentState s = instantiate_garment(dense_template());
  ASSERT_GE(s.particle_count(), 500);
  s = grasp_and_lift(s, Vec3{}, cfg);
  EXPECT_EQ(s.left_region.size(), 250u);
  EXPECT_EQ(s.right_region.size(), 250u);
}

TEST(GraspAndLift, RegionsDisjointAndLabelled) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  std::vector<char> seen(s.particle_count(), 0);
  for (int i : s.left_region) {
    EXPECT_EQ(s.node_type[i], NodeType::LeftGrasped);
    EXPECT_FALSE(seen[i]);
    seen[i] = 1;
  }
  for (int i : s.right_region) {
    EXPECT_EQ(s.node_type[i], NodeType::RightGrasped);
    EXPECT_FALSE(seen[i]) << "regions overlap at " << i;
    seen[i] = 1;
  }
}

TEST(GraspAndLift, OffsetShiftsBothGrippersExactly) {
  SimConfig cfg = fast_sim();
  GarmentState base = instantiate_garment(small_template());
  GarmentState zero = grasp_and_lift(base, Vec3{}, cfg);
  GarmentState off = grasp_and_lift(base, Vec3{0, 0, 2}, cfg);
  EXPECT_EQ(off.gripper_left, zero.gripper_left + Vec3(0, 0, 2));
  EXPECT_EQ(off.gripper_right, zero.gripper_right + Vec3(0, 0, 2));
}

TEST(GraspAndLift, RegionConflictWhenTooFewParticles) {
  SimConfig cfg;
  cfg.region_size = 150;  // 300 > 216 particles
  GarmentState s = instantiate_garment(spec_example_template());
  try {
    grasp_and_lift(s, Vec3{}, cfg);
    FAIL() << "expected region-conflict";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "region-conflict");
  }
}

TEST(Step, ZeroActionIsFixedPoint) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  GarmentState next = step(s, zero_action(), cfg);
  for (int i = 0; i < s.particle_count(); ++i)
    EXPECT_LE(distance(s.positions[i], next.positions[i]), cfg.force_tolerance);
}

TEST(Step, EqualDeltasTranslateGraspedRegionsRigidly) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  Action a;
  a.delta_left = a.delta_right = Vec3{1, 0, 0};
  GarmentState next = step(s, a, cfg);
  for (int i : s.left_region) {
    Vec3 moved = next.positions[i] - s.positions[i];
    EXPECT_LE(norm(moved - Vec3{1, 0, 0}), 0.2) << "particle " << i;
  }
  for (int i : s.right_region) {
    Vec3 moved = next.positions[i] - s.positions[i];
    EXPECT_LE(norm(moved - Vec3{1, 0, 0}), 0.2) << "particle " << i;
  }
  EXPECT_EQ(next.left_region, s.left_region);
  EXPECT_EQ(next.right_region, s.right_region);
}

TEST(Step, OppositeDeltasChangeGripperDistanceExactly) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  double before = distance(s.gripper_left, s.gripper_right);
  Action a;
  a.delta_left = Vec3{-2, 0, 0};
  a.delta_right = Vec3{2, 0, 0};
  GarmentState next = step(s, a, cfg);
  double after = distance(next.gripper_left, next.gripper_right);
  EXPECT_NEAR(after, before + 4.0, 1e-12);
}

TEST(Step, OutOfRangeActionRejected) {
  SimConfig cfg = fast_sim();
  GarmentState s = instantiate_garment(small_template());
  s = grasp_and_lift(s, Vec3{}, cfg);
  Action a;
  a.delta_left = Vec3{cfg.max_action + 0.1, 0, 0};
  try {
    step(s, a, cfg);
    FAIL() << "expected out-of-range";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "out-of-range");
  }
}

TEST(HangSuccess, SymmetricDrapeSucceeds) {
  GarmentState s = instantiate_garment(small_template());
  Hanger bar;
  bar.bar_start = {-20, 6, 38};
  bar.bar_end = {28, 6, 38};
  bar.bar_radius = 1.5;
  // Construct success by hand: shoulder rows on the bar at the quarter
  // points, everything else well below.
  for (Vec3& p : s.positions) p = Vec3{4, 6, 20};
  Vec3 axis = bar.bar_end - bar.bar_start;
  for (int i : s.rig->left_shoulder)
    s.positions[i] = bar.bar_start + 0.25 * axis + Vec3{0, 0, bar.bar_radius};
  for (int i : s.rig->right_shoulder)
    s.positions[i] = bar.bar_start + 0.75 * axis + Vec3{0, 0, bar.bar_radius};
  EXPECT_TRUE(hang_success(s, bar));
}

TEST(HangSuccess, GarmentOnFloorFails) {
  GarmentState s = instantiate_garment(small_template());
  Hanger bar;
  bar.bar_start = {-20, 6, 38};
  bar.bar_end = {28, 6, 38};
  // Flat on the floor far below the bar.
  for (Vec3& p : s.positions) p.z = 0.0;
  EXPECT_FALSE(hang_success(s, bar));
}

TEST(HangSuccess, BothSleevesOnLeftHalfFails) {
  GarmentState s = instantiate_garment(small_template());
  Hanger bar;
  bar.bar_start = {-20, 6, 38};
  bar.bar_end = {28, 6, 38};
  Vec3 axis = bar.bar_end - bar.bar_start;
  for (Vec3& p : s.positions) p = Vec3{-10, 6, 20};
  for (int i : s.rig->left_shoulder)
    s.positions[i] = bar.bar_start + 0.20 * axis + Vec3{0, 0, 1};
  for (int i : s.rig->right_shoulder)
    s.positions[i] = bar.bar_start + 0.30 * axis + Vec3{0, 0, 1};
  EXPECT_FALSE(hang_success(s, bar));
}

TEST(Dataset, CountAndDeterminism) {
  SimConfig cfg = fast_sim();
  cfg.episode_length = 4;
  GarmentTemplate t = small_template();
  std::vector<Transition> d1 = generate_dataset(t, 10, cfg, 99);
  EXPECT_EQ(d1.size(), 10u);

  std::string p1 = testing::TempDir() + "ds1.jsonl";
  std::string p2 = testing::TempDir() + "ds2.jsonl";
  write_jsonl(p1, d1);
  write_jsonl(p2, generate_dataset(t, 10, cfg, 99));
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_FALSE(s1.empty());
  EXPECT_EQ(s1, s2);
}

TEST(Dataset, PerturbedSharesActionSequences) {
  SimConfig cfg = fast_sim();
  cfg.episode_length = 5;
  GarmentTemplate t = small_template();
  std::vector<Transition> nominal = generate_dataset(t, 10, cfg, 7);
  SimConfig pcfg = cfg;
  pcfg.perturbed = true;
  std::vector<Transition> perturbed = generate_dataset(t, 10, pcfg, 7);
  ASSERT_EQ(nominal.size(), perturbed.size());
  bool any_position_differs = false;
  for (std::size_t i = 0; i < nominal.size(); ++i) {
    EXPECT_EQ(nominal[i].action.delta_left, perturbed[i].action.delta_left);
    EXPECT_EQ(nominal[i].action.delta_right, perturbed[i].action.delta_right);
    if (nominal[i].positions.size() != perturbed[i].positions.size() ||
        !(nominal[i].positions[0] == perturbed[i].positions[0]))
      any_position_differs = true;
  }
  EXPECT_TRUE(any_position_differs);
}

TEST(Dataset, PerturbedDropoutNeverTouchesRegions) {
  SimConfig cfg = fast_sim();
  cfg.perturbed = true;
  cfg.episode_length = 3;
  GarmentTemplate t = small_template();
  std::vector<Transition> d = generate_dataset(t, 6, cfg, 5);
  for (const Transition& tr : d) {
    EXPECT_EQ(tr.left_region.size(), 20u);
    EXPECT_EQ(tr.right_region.size(), 20u);
    EXPECT_EQ(tr.positions.size(), tr.next_positions.size());
    EXPECT_EQ(tr.positions.size(), tr.node_type.size());
    for (int i : tr.left_region) {
      ASSERT_GE(i, 0);
      ASSERT_LT(i, static_cast<int>(tr.positions.size()));
      EXPECT_EQ(tr.node_type[i], 1);
    }
    for (int i : tr.right_region) EXPECT_EQ(tr.node_type[i], 2);
  }
}

TEST(Dataset, RegionIndexSetsConstantAcrossEpisode) {
  SimConfig cfg = fast_sim();
  cfg.episode_length = 6;
  GarmentTemplate t = small_template();
  std::vector<Transition> d = generate_dataset(t, 6, cfg, 21);
  for (std::size_t i = 1; i < d.size(); ++i) {
    EXPECT_EQ(d[i].left_region, d[0].left_region);
    EXPECT_EQ(d[i].right_region, d[0].right_region);
  }
}

}  // namespace
}  // namespace garment::sim
