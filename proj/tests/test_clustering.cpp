#include <doctest.h>

#include <algorithm>

#include "qens/clustering.hpp"
#include "qens/errors.hpp"
#include "support.hpp"

using namespace qens;

namespace {

// Unit-image cxcywh boxes from xyxy corners on a 16x16 canvas (exact in binary).
Box box16(double x1, double y1, double x2, double y2) {
  return Box::cxcywh((x1 + x2) / 32, (y1 + y2) / 32, (x2 - x1) / 16, (y2 - y1) / 16);
}

Detection det(int label, const Box& b, double c, int group = 1, int query = 0) {
  return Detection{b, label, c, group, query};
}

bool same(const Detection& a, const Detection& b) {
  return a.box == b.box && a.label == b.label && a.confidence == b.confidence &&
         a.group_index == b.group_index && a.query_index == b.query_index;
}

}  // namespace

TEST_CASE("sort_detections examples") {
  CHECK(sort_detections(std::vector<Detection>{}).empty());
  const Box b = box16(0, 0, 2, 2);
  const auto s = sort_detections(std::vector<Detection>{det(1, b, 0.3), det(1, b, 0.9), det(1, b, 0.5)});
  CHECK(s[0].confidence == 0.9);
  CHECK(s[1].confidence == 0.5);
  CHECK(s[2].confidence == 0.3);
  const auto t = sort_detections(std::vector<Detection>{det(1, b, 0.7, 2), det(1, b, 0.7, 1)});
  CHECK(t[0].group_index == 1);
  const auto q = sort_detections(std::vector<Detection>{det(1, b, 0.7, 1, 5), det(1, b, 0.7, 1, 2)});
  CHECK(q[0].query_index == 2);
}

TEST_CASE("bsas examples") {
  const Box b = box16(0, 0, 2, 2);
  ClusteringParams p;
  const auto one = bsas_cluster(std::vector<Detection>{det(1, b, 0.5)}, p);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 1);

  const auto abc = bsas_cluster(std::vector<Detection>{det(1, b, 0.9), det(1, b, 0.8), det(2, b, 0.7)}, p);
  REQUIRE(abc.size() == 2);
  CHECK(abc[0].label == 1);
  CHECK(abc[0].size() == 2);
  CHECK(abc[1].label == 2);
  CHECK(abc[1].size() == 1);

  const auto far = bsas_cluster(std::vector<Detection>{det(1, b, 0.9), det(1, box16(10, 10, 12, 12), 0.8)}, p);
  CHECK(far.size() == 2);
}

TEST_CASE("bsas joins the highest-IoU cluster, ties go to the earliest") {
  // Two seeds A (0..8) and B (4..12); C (2..10) overlaps both equally.
  const Box a = box16(0, 0, 8, 8), b = box16(4, 0, 12, 8), c = box16(2, 0, 10, 8);
  ClusteringParams p;
  p.iou_threshold = 0.5;
  const auto cl = bsas_cluster(std::vector<Detection>{det(1, a, 0.9), det(1, b, 0.8), det(1, c, 0.7)}, p);
  REQUIRE(cl.size() == 2);
  CHECK(cl[0].size() == 2);
  CHECK(cl[0].members[1].confidence == 0.7);

  // D matches both seeds but overlaps B more.
  const Box d = box16(2.5, 0, 10.5, 8);
  const auto cl2 = bsas_cluster(std::vector<Detection>{det(1, a, 0.9), det(1, b, 0.8), det(1, d, 0.7)}, p);
  REQUIRE(cl2.size() == 2);
  CHECK(cl2[1].size() == 2);
}

TEST_CASE("bsas allows clusters larger than G") {
  const Box b = box16(0, 0, 5, 5);
  std::vector<Detection> pool;
  for (int i = 0; i < 8; ++i) pool.push_back(det(1, b, 0.9 - 0.01 * i, 1 + i % 2, i));
  const auto cl = bsas_cluster(pool, {});
  REQUIRE(cl.size() == 1);
  CHECK(cl[0].size() == 8);
}

TEST_CASE("clustering parameter validation") {
  ClusteringParams p;
  p.iou_threshold = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigurationError);
  p.iou_threshold = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigurationError);
  p.iou_threshold = 1.0;
  CHECK_NOTHROW(p.validate());
  CHECK_THROWS_AS(bsas_cluster(std::vector<Detection>{}, ClusteringParams{-1.0}), ConfigurationError);
}

TEST_CASE("bsas invariants on random pools") {
  qtest::Gen gen(31);
  for (int t = 0; t < 400; ++t) {
    const auto pool = gen.pool(30);
    ClusteringParams p;
    p.iou_threshold = std::array<double, 3>{0.5, 0.7, 0.9}[t % 3];
    const auto clusters = bsas_cluster(pool, p);

    std::size_t total = 0;
    for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
      const auto& c = clusters[ci];
      REQUIRE(!c.members.empty());
      total += c.size();
      for (std::size_t m = 0; m < c.size(); ++m) {
        REQUIRE(c.members[m].label == c.label);
        REQUIRE(iou(c.members[m].box, c.seed().box) >= p.iou_threshold);
        REQUIRE(c.seed().confidence >= c.members[m].confidence);
        if (m > 0) REQUIRE(!ranks_before(c.members[m], c.members[m - 1]));
      }
      // A seed was not absorbed by any earlier seed of its class.
      for (std::size_t e = 0; e < ci; ++e) {
        if (clusters[e].label == c.label) REQUIRE(iou(clusters[e].seed().box, c.seed().box) < p.iou_threshold);
      }
    }
    REQUIRE(total == pool.size());

    // Permutation independence.
    auto shuffled = pool;
    std::shuffle(shuffled.begin(), shuffled.end(), gen.engine());
    const auto again = bsas_cluster(shuffled, p);
    REQUIRE(again.size() == clusters.size());
    for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
      REQUIRE(again[ci].size() == clusters[ci].size());
      for (std::size_t m = 0; m < clusters[ci].size(); ++m) REQUIRE(same(again[ci].members[m], clusters[ci].members[m]));
    }
  }
}

TEST_CASE("bsas matches the reference implementation") {
  qtest::Gen gen(32);
  for (int t = 0; t < 300; ++t) {
    const auto pool = gen.pool(30);
    const double theta = std::array<double, 3>{0.5, 0.7, 0.9}[t % 3];
    const auto got = bsas_cluster(pool, ClusteringParams{theta});
    const auto want = qtest::ref_bsas(pool, theta);
    REQUIRE(got.size() == want.size());
    for (std::size_t c = 0; c < got.size(); ++c) {
      REQUIRE(got[c].label == want[c].label);
      REQUIRE(got[c].size() == want[c].members.size());
      for (std::size_t m = 0; m < got[c].size(); ++m) REQUIRE(same(got[c].members[m], want[c].members[m]));
    }
  }
}
