#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "qens/errors.hpp"
#include "qens/io.hpp"
#include "qens/synth.hpp"
#include "support.hpp"

using namespace qens;
using nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("qens_io_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "_" +
            std::to_string(std::rand()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

json coco_one() {
  return json::parse(R"({
    "images": [{"id": 1, "width": 100, "height": 80, "file_name": "a.png"}],
    "annotations": [{"id": 7, "image_id": 1, "category_id": 2, "bbox": [10, 20, 30, 40], "iscrowd": 0}],
    "categories": [{"id": 2, "name": "car"}],
    "info": {"ignored": true}
  })");
}

bool near_rel(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("coco ground truth examples") {
  const auto store = parse_coco_gt(coco_one());
  REQUIRE(store.instance_count() == 1);
  const auto& g = store.instances(1)[0];
  CHECK(g.box.format() == BoxFormat::kXyXy);
  CHECK(g.box[0] == 10);
  CHECK(g.box[1] == 20);
  CHECK(g.box[2] == 40);
  CHECK(g.box[3] == 60);
  CHECK(g.label == 2);
  CHECK(g.instance_id == 7);

  auto empty = coco_one();
  empty["annotations"] = json::array();
  CHECK(parse_coco_gt(empty).instance_count() == 0);
}

TEST_CASE("coco reference and validation errors") {
  auto bad_image = coco_one();
  bad_image["annotations"][0]["image_id"] = 999;
  try {
    parse_coco_gt(bad_image);
    FAIL("expected a reference error");
  } catch (const ReferenceError& e) {
    CHECK(std::string(e.what()).find("999") != std::string::npos);
  }

  auto bad_cat = coco_one();
  bad_cat["annotations"][0]["category_id"] = 55;
  CHECK_THROWS_AS(parse_coco_gt(bad_cat), ReferenceError);

  auto bad_box = coco_one();
  bad_box["annotations"].push_back({{"id", 8}, {"image_id", 1}, {"category_id", 2}, {"bbox", {1, 2, 0, 4}}});
  try {
    parse_coco_gt(bad_box);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("annotation 1") != std::string::npos);
  }

  auto short_box = coco_one();
  short_box["annotations"][0]["bbox"] = {1, 2, 3};
  CHECK_THROWS_AS(parse_coco_gt(short_box), ValidationError);

  CHECK_THROWS_AS(load_coco_gt("/nonexistent/qens/gt.json"), DataError);
}

TEST_CASE("coco parsing is order-insensitive and round trips") {
  SceneParams p;
  p.seed = 3;
  const auto store = generate_dataset(p, 4);
  auto j = coco_gt_json(store);
  auto& anns = j["annotations"];
  std::reverse(anns.begin(), anns.end());
  CHECK(parse_coco_gt(j) == store);

  TempDir dir;
  save_coco_gt(store, dir.file("gt.json"));
  CHECK(load_coco_gt(dir.file("gt.json")) == store);
}

TEST_CASE("probabilistic detections round trip") {
  qtest::Gen gen(61);
  ImageSizes sizes{{1, {640, 480}}, {2, {320, 240}}};
  std::vector<ProbabilisticDetection> dets;
  for (int i = 0; i < 100; ++i) {
    ProbabilisticDetection d;
    d.image_id = gen.integer(1, 2);
    d.box = gen.cxcywh_box();
    d.covariance = BoxCovariance::checked(BoxFormat::kCxCyWh, gen.psd(0.05));
    d.label = gen.integer(1, 5);
    d.confidence = gen.uniform(0, 1);
    d.support = gen.integer(1, 9);
    dets.push_back(d);
  }
  TempDir dir;
  save_prob_detections(dets, sizes, dir.file("dets.json"));
  const auto back = load_prob_detections(dir.file("dets.json"));
  REQUIRE(back.size() == dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& a = dets[i];
    const auto& b = back[i];
    const ImageSize img = sizes.at(a.image_id);
    const Box ax = convert(a.box, BoxFormat::kXyXy, img);
    const auto acov = covariance_convert(a.covariance, a.box, BoxFormat::kXyXy, img).matrix();
    REQUIRE(b.image_id == a.image_id);
    REQUIRE(b.label == a.label);
    REQUIRE(b.support == a.support);
    REQUIRE(near_rel(b.confidence, a.confidence));
    REQUIRE(b.box.format() == BoxFormat::kXyXy);
    for (int k = 0; k < 4; ++k) REQUIRE(near_rel(b.box[k], ax[k]));
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) REQUIRE(near_rel(b.covariance(r, c), acov(r, c)));
    }
  }
}

TEST_CASE("probabilistic detection file edge cases") {
  TempDir dir;
  save_prob_detections(std::vector<ProbabilisticDetection>{}, {}, dir.file("empty.json"));
  CHECK(read_json_file(dir.file("empty.json"))["detections"].empty());
  CHECK(load_prob_detections(dir.file("empty.json")).empty());

  ProbabilisticDetection d;
  d.image_id = 1;
  d.box = Box::cxcywh(0.5, 0.5, 0.2, 0.2);
  d.covariance = BoxCovariance::zero(BoxFormat::kCxCyWh);
  d.confidence = 0.7;
  const auto j = prob_detections_json(std::vector<ProbabilisticDetection>{d}, {{1, {100, 100}}});
  const auto cov = j["detections"][0]["covariance"];
  REQUIRE(cov.size() == 16);
  for (const auto& v : cov) CHECK(v.get<double>() == 0.0);
  const auto bbox = j["detections"][0]["bbox"];
  CHECK(bbox[0].get<double>() == doctest::Approx(40));
  CHECK(bbox[2].get<double>() == doctest::Approx(20));

  CHECK_THROWS_AS(prob_detections_json(std::vector<ProbabilisticDetection>{d}, {}), ReferenceError);

  auto asym = j;
  asym["detections"][0]["covariance"][1] = 0.5;
  CHECK_THROWS_AS(parse_prob_detections(asym), ValidationError);

  auto tiny = j;
  for (int k : {0, 5, 10, 15}) tiny["detections"][0]["covariance"][k] = 1.0;
  tiny["detections"][0]["covariance"][1] = 1e-8;
  CHECK_NOTHROW(parse_prob_detections(tiny));

  auto missing = j;
  missing["detections"][0].erase("covariance");
  CHECK_THROWS_AS(parse_prob_detections(missing), DataError);

  auto bad_score = j;
  bad_score["detections"][0]["score"] = 1.5;
  CHECK_THROWS_AS(parse_prob_detections(bad_score), ValidationError);
}

TEST_CASE("ensemble file round trip") {
  SceneParams p;
  p.seed = 8;
  const auto store = generate_dataset(p, 3);
  EnsembleNoise n;
  n.seed = 8;
  const auto ens = simulate_dataset(store, 4, n, p.num_classes);
  TempDir dir;
  save_ensemble(ens, dir.file("ens.json"));
  const auto back = load_ensemble(dir.file("ens.json"));
  REQUIRE(back.size() == ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    REQUIRE(back[i].image_id == ens[i].image_id);
    REQUIRE(back[i].num_groups() == 4);
    for (int g = 0; g < 4; ++g) {
      REQUIRE(back[i].sets[g].size() == ens[i].sets[g].size());
      for (std::size_t k = 0; k < ens[i].sets[g].size(); ++k) {
        const auto &a = ens[i].sets[g][k], &b = back[i].sets[g][k];
        REQUIRE(b.group_index == a.group_index);
        REQUIRE(b.query_index == a.query_index);
        REQUIRE(b.label == a.label);
        REQUIRE(near_rel(b.confidence, a.confidence));
        for (int c = 0; c < 4; ++c) REQUIRE(std::abs(b.box[c] - a.box[c]) < 1e-9);
      }
    }
  }
}

TEST_CASE("atomic writes leave no temporary files") {
  TempDir dir;
  write_text_atomic("hello\n", dir.file("a.txt"));
  write_text_atomic("again\n", dir.file("a.txt"));
  std::ifstream in(dir.file("a.txt"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "again");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path)) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
  CHECK_THROWS_AS(write_text_atomic("x", dir.file("missing/dir/a.txt")), DataError);
  CHECK_THROWS_AS(read_json_file(dir.file("a.txt")), DataError);
}

TEST_CASE("round_sig12 keeps twelve significant digits") {
  CHECK(round_sig12(0.1234567890123456) == 0.123456789012);
  CHECK(round_sig12(0.0) == 0.0);
  CHECK(round_sig12(123456.7890123456) == 123456.789012);
}
