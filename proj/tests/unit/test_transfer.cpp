#include "rescan/transfer/label_transfer.hpp"
#include "support/test_clouds.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace rescan;
namespace tc = rescan::testing;

namespace {

PointCloud single_point(const Vec3& p) {
  PointCloud c;
  c.points.push_back(p);
  c.normals.emplace_back(0, 0, 1);
  return c;
}

TemporalModel two_point_model() {
  TemporalModel m;
  m.insert_object(ObjectInstance(3, 4, single_point(Vec3::Zero())));
  m.insert_object(ObjectInstance(5, 2, single_point(Vec3::Zero())));
  return m;
}

Arrangement placed(std::initializer_list<std::pair<int, Vec3>> at) {
  Arrangement a;
  for (const auto& [id, p] : at) a.placements.push_back({id, GroundPose(p.x(), p.y(), p.z(), 0), 1});
  return a;
}

std::vector<std::uint8_t> none_static(const PointCloud& c) {
  return std::vector<std::uint8_t>(c.size(), 0);
}

/// Grid cloud labeled (class, instance) everywhere.
PointCloud labeled_grid(int n, double step, int cls, int inst, const Vec3& offset = Vec3::Zero()) {
  PointCloud c = tc::grid_plane(n, n, step);
  for (Vec3& p : c.points) p += offset;
  c.semantic.assign(c.size(), cls);
  c.instance.assign(c.size(), inst);
  return c;
}

}  // namespace

TEST(TransferLabels, CoincidentPointTakesObjectLabels) {
  const TemporalModel m = two_point_model();
  const PointCloud scene = single_point(Vec3(1, 1, 0));
  const PointCloud out =
      transfer_labels(scene, none_static(scene), placed({{3, Vec3(1, 1, 0)}}), m);
  EXPECT_EQ(out.semantic[0], 4);
  EXPECT_EQ(out.instance[0], 3);
}

TEST(TransferLabels, DistanceThreshold) {
  const TemporalModel m = two_point_model();
  PointCloud scene = single_point(Vec3(0.06, 0, 0));
  scene.append(single_point(Vec3(0.04, 0, 0)));
  const PointCloud out = transfer_labels(scene, none_static(scene), placed({{3, Vec3::Zero()}}), m);
  EXPECT_EQ(out.instance[0], kUnassignedInstance);
  EXPECT_EQ(out.semantic[0], kUnlabeledClass);
  EXPECT_EQ(out.instance[1], 3);
}

TEST(TransferLabels, EquidistantGoesToLowerId) {
  const TemporalModel m = two_point_model();
  const PointCloud scene = single_point(Vec3::Zero());
  const auto a = placed({{5, Vec3(-0.02, 0, 0)}, {3, Vec3(0.02, 0, 0)}});
  const PointCloud out = transfer_labels(scene, none_static(scene), a, m);
  EXPECT_EQ(out.instance[0], 3);
  EXPECT_EQ(out.semantic[0], 4);
}

TEST(TransferLabels, StaticPointsGetStaticClass) {
  const TemporalModel m = two_point_model();
  const PointCloud scene = single_point(Vec3::Zero());
  const PointCloud out = transfer_labels(scene, std::vector<std::uint8_t>{1},
                                         placed({{3, Vec3::Zero()}}), m);
  EXPECT_EQ(out.semantic[0], kStaticClass);
  EXPECT_EQ(out.instance[0], kUnassignedInstance);
}

TEST(TransferLabels, EmptyArrangementLeavesAllUnassigned) {
  const TemporalModel m = two_point_model();
  const PointCloud scene = tc::grid_plane(4, 4, 0.1);
  const PointCloud out = transfer_labels(scene, none_static(scene), Arrangement{}, m);
  for (int id : out.instance) EXPECT_EQ(id, kUnassignedInstance);
}

TEST(TransferLabels, RejectsMaskMismatch) {
  const PointCloud scene = tc::grid_plane(2, 2, 0.1);
  EXPECT_THROW(transfer_labels(scene, std::vector<std::uint8_t>(3, 0), Arrangement{}, TemporalModel{}),
               Error);
}

TEST(TransferLabels, Idempotent) {
  Rng rng(4);
  TemporalModel m;
  m.insert_object(ObjectInstance(1, 1, tc::random_cloud(rng, 300, 0.2)));
  m.insert_object(ObjectInstance(2, 3, tc::random_cloud(rng, 300, 0.2)));
  const auto a = placed({{1, Vec3(0, 0, 0)}, {2, Vec3(0.25, 0, 0)}});
  PointCloud scene = tc::random_cloud(rng, 2000, 0.5);
  std::vector<std::uint8_t> mask(scene.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = scene.points[i].z() < -0.45;
  const PointCloud once = transfer_labels(scene, mask, a, m);
  const PointCloud twice = transfer_labels(once, mask, a, m);
  EXPECT_EQ(once.semantic, twice.semantic);
  EXPECT_EQ(once.instance, twice.instance);
}

TEST(SmoothLabels, ConsistentCloudUnchanged) {
  const PointCloud c = labeled_grid(10, 0.01, 2, 7);
  const SmoothingResult r = smooth_labels(c, none_static(c));
  EXPECT_EQ(r.changed, 0u);
  EXPECT_EQ(r.cloud.instance, c.instance);
  EXPECT_EQ(r.energy.front(), 0.0);
}

TEST(SmoothLabels, UnassignedPointJoinsSurroundingInstance) {
  PointCloud c = labeled_grid(5, 0.01, 2, 7);
  const std::size_t centre = 12;  // (2, 2) of the 5 x 5 grid
  c.semantic[centre] = kUnlabeledClass;
  c.instance[centre] = kUnassignedInstance;
  const SmoothingResult r = smooth_labels(c, none_static(c));
  EXPECT_EQ(r.cloud.instance[centre], 7);
  EXPECT_EQ(r.cloud.semantic[centre], 2);
}

TEST(SmoothLabels, IsolatedUnassignedClusterStaysBackground) {
  PointCloud c = labeled_grid(5, 0.01, 2, 7);
  PointCloud far = labeled_grid(4, 0.01, kUnlabeledClass, kUnassignedInstance, Vec3(3, 3, 0));
  c.append(far);
  const SmoothingResult r = smooth_labels(c, none_static(c));
  for (std::size_t i = 25; i < c.size(); ++i) {
    EXPECT_EQ(r.cloud.instance[i], kUnassignedInstance);
  }
  EXPECT_NEAR(r.background_fraction, 16.0 / 41.0, 1e-12);
}

TEST(SmoothLabels, StaticPointsAreUntouched) {
  PointCloud c = labeled_grid(5, 0.01, 2, 7);
  std::vector<std::uint8_t> mask(c.size(), 0);
  mask[0] = 1;
  c.semantic[0] = kStaticClass;
  c.instance[0] = kUnassignedInstance;
  const SmoothingResult r = smooth_labels(c, mask);
  EXPECT_EQ(r.cloud.semantic[0], kStaticClass);
  EXPECT_EQ(r.cloud.instance[0], kUnassignedInstance);
}

TEST(SmoothLabels, EnergyNeverIncreasesAndPairsStayConsistent) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    PointCloud c = tc::random_cloud(rng, 400, 0.1);
    c.semantic.resize(c.size());
    c.instance.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      const int inst = static_cast<int>(rng.index(4));  // 0 = unassigned
      c.instance[i] = inst;
      c.semantic[i] = inst == 0 ? kUnlabeledClass : 10 + inst;
    }
    const SmoothingResult r = smooth_labels(c, none_static(c));
    for (std::size_t s = 1; s < r.energy.size(); ++s) {
      ASSERT_LE(r.energy[s], r.energy[s - 1] + 1e-12);
    }
    std::map<int, int> class_of;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto [it, fresh] = class_of.emplace(r.cloud.instance[i], r.cloud.semantic[i]);
      ASSERT_EQ(it->second, r.cloud.semantic[i]);
    }
  }
}

TEST(SmoothLabels, Deterministic) {
  Rng rng(2);
  PointCloud c = tc::random_cloud(rng, 500, 0.1);
  c.semantic.resize(c.size());
  c.instance.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c.instance[i] = static_cast<int>(rng.index(3));
    c.semantic[i] = c.instance[i] == 0 ? kUnlabeledClass : 1;
  }
  const auto a = smooth_labels(c, none_static(c));
  const auto b = smooth_labels(c, none_static(c));
  EXPECT_EQ(a.cloud.instance, b.cloud.instance);
  EXPECT_EQ(a.energy, b.energy);
}

TEST(SmoothLabels, RejectsBadOptions) {
  const PointCloud c = labeled_grid(3, 0.01, 1, 1);
  SmoothingOptions o;
  o.k = 0;
  EXPECT_THROW(smooth_labels(c, none_static(c), o), Error);
  EXPECT_THROW(smooth_labels(tc::grid_plane(2, 2, 0.1), std::vector<std::uint8_t>(4, 0)), Error);
}
