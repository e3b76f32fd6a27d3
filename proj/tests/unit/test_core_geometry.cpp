#include "rescan/core/ground_pose.hpp"
#include "rescan/core/icp.hpp"
#include "rescan/core/normals.hpp"
#include "rescan/core/plane_detection.hpp"
#include "rescan/core/sampling.hpp"
#include "rescan/core/spatial_index.hpp"
#include "support/test_clouds.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace rescan;
using rescan::testing::grid_plane;
using rescan::testing::random_cloud;

// ---------------------------------------------------------------- GroundPose

TEST(GroundPose, MatrixRoundTrip) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const GroundPose p(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-1, 1),
                       rng.uniform(-10, 10));
    const GroundPose q = GroundPose::from_matrix(p.matrix());
    EXPECT_NEAR(p.tx, q.tx, 1e-9);
    EXPECT_NEAR(p.ty, q.ty, 1e-9);
    EXPECT_NEAR(p.tz, q.tz, 1e-9);
    EXPECT_NEAR(angle_distance(p.yaw, q.yaw), 0.0, 1e-9);
    EXPECT_GE(q.yaw, -std::numbers::pi);
    EXPECT_LT(q.yaw, std::numbers::pi);
  }
}

TEST(GroundPose, YawIsWrapped) {
  EXPECT_DOUBLE_EQ(GroundPose(0, 0, 0, std::numbers::pi).yaw, -std::numbers::pi);
  EXPECT_NEAR(GroundPose(0, 0, 0, 3 * std::numbers::pi + 0.25).yaw, -std::numbers::pi + 0.25,
              1e-12);
}

TEST(GroundPose, InverseAndCompose) {
  const GroundPose a(1.0, -2.0, 0.5, 0.7);
  const GroundPose b(-0.3, 0.4, 0.0, -1.9);
  const Vec3 p(0.2, 0.9, -0.4);
  EXPECT_LT((a.inverse().apply(a.apply(p)) - p).norm(), 1e-12);
  EXPECT_LT((a.compose(b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
}

TEST(GroundPose, RejectsTiltedMatrix) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(0.3, Vec3::UnitX()).toRotationMatrix();
  EXPECT_THROW(GroundPose::from_matrix(m), Error);
}

// -------------------------------------------------------------- SpatialIndex

namespace {

Neighbor brute_nearest(const std::vector<Vec3>& pts, const Vec3& q) {
  Neighbor best{0, squared_distance(q, pts[0])};
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Neighbor c{i, squared_distance(q, pts[i])};
    if (c < best) best = c;
  }
  return best;
}

std::vector<Neighbor> brute_all(const std::vector<Vec3>& pts, const Vec3& q) {
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < pts.size(); ++i) all.push_back({i, squared_distance(q, pts[i])});
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TEST(SpatialIndex, MatchesBruteForceExactly) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(500);
    PointCloud cloud = random_cloud(rng, n, 1.0);
    // Snap some clouds to a coarse lattice so exact distance ties occur.
    if (trial % 4 == 0) {
      for (Vec3& p : cloud.points) p = (p * 4.0).array().round() / 4.0;
    }
    const SpatialIndex index(cloud.points);
    for (int q = 0; q < 5; ++q) {
      const Vec3 query(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
      const auto all = brute_all(cloud.points, query);

      const auto nn = index.nearest(query);
      ASSERT_TRUE(nn.has_value());
      ASSERT_EQ(*nn, brute_nearest(cloud.points, query));

      const std::size_t k = 1 + rng.index(12);
      const auto knn = index.knn(query, k);
      ASSERT_EQ(knn.size(), std::min(k, n));
      for (std::size_t i = 0; i < knn.size(); ++i) ASSERT_EQ(knn[i], all[i]);

      const double r = rng.uniform(0.0, 0.8);
      const auto in_radius = index.radius(query, r);
      std::vector<Neighbor> expected;
      for (const Neighbor& nb : all) {
        if (nb.dist2 <= r * r) expected.push_back(nb);
      }
      ASSERT_EQ(in_radius, expected);

      const auto bounded = index.nearest(query, r);
      if (expected.empty()) {
        ASSERT_FALSE(bounded.has_value());
      } else {
        ASSERT_EQ(*bounded, expected.front());
      }
    }
  }
}

TEST(SpatialIndex, CoincidentPoints) {
  std::vector<Vec3> pts(50, Vec3(1, 1, 1));
  const SpatialIndex index(pts);
  const auto nn = index.nearest(Vec3::Zero());
  ASSERT_TRUE(nn);
  EXPECT_EQ(nn->index, 0u);
  EXPECT_EQ(index.radius(Vec3(1, 1, 1), 0.0).size(), 50u);
}

// ------------------------------------------------------------------- Normals

TEST(Normals, PlaneGivesVerticalNormals) {
  PointCloud c = grid_plane(20, 20, 0.01);
  c.normals.clear();
  const auto est = estimate_normals(c, 8);
  ASSERT_TRUE(est.cloud.has_normals());
  for (const Vec3& n : est.cloud.normals) EXPECT_LT((n - Vec3::UnitZ()).norm(), 1e-9);
  EXPECT_TRUE(est.degenerate.empty());
}

TEST(Normals, SphereNormalsAreRadial) {
  // Fibonacci sphere as the analytic reference.
  PointCloud c;
  const int n = 2000;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - z * z);
    c.points.emplace_back(r * std::cos(golden * i), r * std::sin(golden * i), z);
  }
  const auto est = estimate_normals(c, 12);
  const double cos5 = std::cos(deg2rad(5.0));
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_GE(std::abs(est.cloud.normals[i].dot(c.points[i])), cos5) << "point " << i;
    EXPECT_NEAR(est.cloud.normals[i].norm(), 1.0, 1e-9);
  }
}

TEST(Normals, OrientationRule) {
  EXPECT_EQ(orient_normal(Vec3(0, 0, -1)), Vec3(0, 0, 1));
  EXPECT_EQ(orient_normal(Vec3(-1, 0, 0)), Vec3(1, 0, 0));
  EXPECT_EQ(orient_normal(Vec3(0, -1, 0)), Vec3(0, 1, 0));
  EXPECT_EQ(orient_normal(Vec3(0.6, 0, 0.8)), Vec3(0.6, 0, 0.8));
}

TEST(Normals, InsufficientPoints) {
  PointCloud c;
  c.points = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  try {
    (void)estimate_normals(c, 8);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "insufficient points");
  }
}

TEST(Normals, CoincidentNeighborhoodFallsBackToGravity) {
  PointCloud c;
  for (int i = 0; i < 10; ++i) c.points.emplace_back(0.5, 0.5, 0.5);
  const auto est = estimate_normals(c, 4);
  EXPECT_EQ(est.degenerate.size(), 10u);
  for (const Vec3& n : est.cloud.normals) EXPECT_EQ(n, Vec3::UnitZ());
}

// ------------------------------------------------------------------ Sampling

TEST(PoissonDisk, SingletonAndEmpty) {
  PointCloud one;
  one.points = {Vec3(1, 2, 3)};
  one.normals = {Vec3::UnitZ()};
  const PointCloud out = poisson_disk_subsample(one, 0.5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.points[0], Vec3(1, 2, 3));
  EXPECT_TRUE(poisson_disk_subsample(PointCloud{}, 0.1).empty());
  EXPECT_THROW(poisson_disk_subsample(one, 0.0), Error);
}

TEST(PoissonDisk, GridSpacingAndMaximality) {
  const PointCloud grid = grid_plane(100, 100, 0.01);
  const auto kept = poisson_disk_indices(grid.points, 0.08);
  const PointCloud out = grid.select(kept);
  ASSERT_FALSE(out.empty());
  // O(n^2) spacing check
  EXPECT_GE(rescan::testing::min_pairwise_distance(out), 0.08);
  // maximality: every input point is covered
  for (const Vec3& p : grid.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : out.points) best = std::min(best, (p - q).norm());
    ASSERT_LT(best, 0.08);
  }
  // subset with attributes carried along
  for (std::size_t i = 0; i < kept.size(); ++i) {
    EXPECT_EQ(out.points[i], grid.points[kept[i]]);
    EXPECT_EQ(out.normals[i], grid.normals[kept[i]]);
  }
  EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
}

TEST(PoissonDisk, Deterministic) {
  Rng rng(5);
  const PointCloud c = random_cloud(rng, 3000, 0.5);
  EXPECT_EQ(poisson_disk_indices(c.points, 0.05), poisson_disk_indices(c.points, 0.05));
}

TEST(PoissonDisk, InputOrderIsSpacedAndMaximal) {
  Rng rng(6);
  const PointCloud c = random_cloud(rng, 2000, 0.2);
  const auto idx = poisson_disk_indices(c.points, 0.05, kPoissonSeed, PoissonOrder::Input);
  ASSERT_FALSE(idx.empty());
  EXPECT_EQ(idx.front(), 0u);  // the first candidate is always kept
  const PointCloud kept = c.select(idx);
  EXPECT_GE(rescan::testing::min_pairwise_distance(kept), 0.05);
  for (const Vec3& p : c.points) {
    double best = 1e9;
    for (const Vec3& q : kept.points) best = std::min(best, (p - q).norm());
    ASSERT_LT(best, 0.05);
  }
}

TEST(Hierarchy, LevelsShrinkAndRespectSpacing) {
  const PointCloud chair = rescan::testing::sample(rescan::testing::chair_prototype(), 40000);
  ASSERT_GT(chair.size(), 40000u);
  const SamplingHierarchy h = build_hierarchy(chair);
  for (std::size_t l = 1; l < SamplingHierarchy::kLevels; ++l) {
    EXPECT_LT(h.level(l).size(), h.level(l - 1).size());
  }
  EXPECT_GE(rescan::testing::min_pairwise_distance(h.level(3)), 0.08);
  EXPECT_GE(rescan::testing::min_pairwise_distance(h.level(2)), 0.04);
  for (std::size_t l = 0; l < SamplingHierarchy::kLevels; ++l) {
    EXPECT_TRUE(h.level(l).has_normals());
  }
}

TEST(Hierarchy, SinglePointAndMissingNormals) {
  PointCloud one;
  one.points = {Vec3(0, 0, 0)};
  one.normals = {Vec3::UnitZ()};
  const SamplingHierarchy h = build_hierarchy(one);
  for (const PointCloud& l : h.levels) EXPECT_EQ(l.size(), 1u);

  one.normals.clear();
  try {
    (void)build_hierarchy(one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "normals required");
  }
}

// ------------------------------------------------------------ Static planes

TEST(DetectStatic, FloorIsStaticBoxIsNot) {
  PointCloud scene = grid_plane(150, 150, 0.02);
  for (Vec3& p : scene.points) p += Vec3(-1.5, -1.5, 0.0);
  const std::size_t floor_count = scene.size();
  PointCloud box = rescan::testing::sample(rescan::testing::box_prototype(), 3000);
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (box.normals[i].z() < -0.5) continue;  // resting face is never observed
    scene.points.push_back(box.points[i]);
    scene.normals.push_back(box.normals[i]);
  }
  const StaticDetection det = detect_static(scene, 0.015, 0.05);
  ASSERT_FALSE(det.planes.empty());
  ASSERT_NE(det.floor(), nullptr);
  EXPECT_NEAR(det.floor()->height_at(0, 0), 0.0, 1e-3);
  for (std::size_t i = 0; i < floor_count; ++i) EXPECT_EQ(det.mask[i], 1) << i;
  for (std::size_t i = floor_count; i < scene.size(); ++i) {
    if (scene.points[i].z() > 0.015) EXPECT_EQ(det.mask[i], 0) << i;
  }
  for (const PlaneModel& p : det.planes) {
    EXPECT_NEAR(p.normal.norm(), 1.0, 1e-6);
    for (std::size_t i : p.inliers) EXPECT_LE(p.distance(scene.points[i]), 0.015);
  }
}

TEST(DetectStatic, NoPlanarStructure) {
  Rng rng(9);
  const PointCloud blob = random_cloud(rng, 5000, 1.0);
  const StaticDetection det = detect_static(blob, 0.01, 0.2);
  EXPECT_TRUE(det.planes.empty());
  EXPECT_EQ(det.static_count(), 0u);
}

TEST(DetectStatic, TiltedPlaneIsRejected) {
  PointCloud c = grid_plane(80, 80, 0.02);
  const double s = std::sqrt(0.5);
  for (Vec3& p : c.points) p = Vec3(p.x() * s, p.y(), p.x() * s);  // 45 degree ramp
  const StaticDetection det = detect_static(c, 0.01, 0.1);
  EXPECT_TRUE(det.planes.empty());
  EXPECT_EQ(det.static_count(), 0u);
}

TEST(DetectStatic, RoomWithTableTop) {
  // A floor, two walls, and a table-height slab: the slab is horizontal but
  // does not bound the scene, so it stays dynamic.
  PointCloud scene = grid_plane(100, 100, 0.02);
  const std::size_t floor_end = scene.size();
  for (int i = 0; i < 100; ++i) {
    for (int k = 0; k < 50; ++k) {
      scene.points.emplace_back(i * 0.02, -0.0, k * 0.02);
      scene.points.emplace_back(-0.0, i * 0.02, k * 0.02);
    }
  }
  const std::size_t walls_end = scene.size();
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 40; ++j) scene.points.emplace_back(0.6 + i * 0.02, 0.6 + j * 0.02, 0.7);
  }
  const StaticDetection det = detect_static(scene, 0.01, 0.05);
  for (std::size_t i = 0; i < walls_end; ++i) EXPECT_EQ(det.mask[i], 1) << i;
  for (std::size_t i = walls_end; i < scene.size(); ++i) EXPECT_EQ(det.mask[i], 0) << i;
  (void)floor_end;
}

// ----------------------------------------------------------------------- ICP

namespace {

IndexedCloud indexed(const PointCloud& c) { return IndexedCloud(c); }

}  // namespace

TEST(Icp, IdentityOnSelf) {
  const PointCloud chair = rescan::testing::sample(rescan::testing::chair_prototype(), 3000);
  const IndexedCloud target = indexed(chair);
  IcpOptions opt;
  opt.correspondence_distance = 0.05;
  const IcpResult r = icp_point_to_plane(chair.points, target, GroundPose::identity(), opt);
  EXPECT_LT(r.rmse, 1e-9);
  EXPECT_LT(std::abs(r.pose.tx) + std::abs(r.pose.ty) + std::abs(r.pose.yaw), 1e-9);
}

TEST(Icp, RecoversKnownMotion) {
  const PointCloud chair = rescan::testing::sample(rescan::testing::chair_prototype(), 3000);
  const GroundPose truth(0.05, 0.0, 0.0, deg2rad(5.0));
  const IndexedCloud target = indexed(truth.transform(chair));
  IcpOptions opt;
  opt.correspondence_distance = 0.15;
  opt.record_trace = true;
  const IcpResult r = icp_point_to_plane(chair.points, target, GroundPose::identity(), opt);
  EXPECT_LT(std::hypot(r.pose.tx - truth.tx, r.pose.ty - truth.ty), 0.005);
  EXPECT_LT(rad2deg(angle_distance(r.pose.yaw, truth.yaw)), 0.5);
  EXPECT_EQ(r.pose.tz, 0.0);
  ASSERT_FALSE(r.trace.empty());
  for (const IcpStep& s : r.trace) EXPECT_LE(s.error_after, s.error_before);
}

TEST(Icp, NoOverlap) {
  const PointCloud chair = rescan::testing::sample(rescan::testing::chair_prototype(), 1000);
  const IndexedCloud target = indexed(chair);
  IcpOptions opt;
  opt.correspondence_distance = 0.1;
  try {
    (void)icp_point_to_plane(chair.points, target, GroundPose(10, 0, 0, 0), opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no overlap");
  }
}

TEST(Icp, SinglePlaneIsUnderconstrained) {
  const PointCloud floor = grid_plane(30, 30, 0.02);
  const IndexedCloud target = indexed(floor);
  IcpOptions opt;
  opt.correspondence_distance = 0.1;
  const IcpResult r =
      icp_point_to_plane(floor.points, target, GroundPose(0.01, 0.02, 0, 0.05), opt);
  EXPECT_TRUE(r.underconstrained);
  EXPECT_TRUE(std::isfinite(r.pose.tx));
  EXPECT_LT(r.rmse, 1e-9);
}

TEST(Icp, TzStaysFixed) {
  const PointCloud chair = rescan::testing::sample(rescan::testing::chair_prototype(), 2000);
  const IndexedCloud target = indexed(chair);
  IcpOptions opt;
  opt.correspondence_distance = 0.1;
  const IcpResult r = icp_point_to_plane(chair.points, target, GroundPose(0.02, 0, 0.01, 0), opt);
  EXPECT_EQ(r.pose.tz, 0.01);
}
