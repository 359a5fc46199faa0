#include "qens/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qens/errors.hpp"

namespace qens {
namespace {

using nlohmann::json;

std::array<double, 4> read_xywh(const json& rec, const std::string& what, std::size_t index) {
  const auto it = rec.find("bbox");
  if (it == rec.end() || !it->is_array() || it->size() != 4) {
    throw ValidationError(what + " " + std::to_string(index) + ": bbox must be 4 numbers");
  }
  std::array<double, 4> b{};
  for (int k = 0; k < 4; ++k) {
    if (!(*it)[k].is_number()) {
      throw ValidationError(what + " " + std::to_string(index) + ": bbox must be 4 numbers");
    }
    b[k] = (*it)[k].get<double>();
  }
  if (!(b[2] > 0.0) || !(b[3] > 0.0)) {
    throw ValidationError(what + " " + std::to_string(index) + ": bbox width/height must be > 0");
  }
  return b;
}

json xywh_json(const Box& xyxy) {
  const auto& c = xyxy.coords();
  return json::array({round_sig12(c[0]), round_sig12(c[1]), round_sig12(c[2] - c[0]),
                      round_sig12(c[3] - c[1])});
}

// Wraps nlohmann type/key errors as validation failures.
template <typename F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

}  // namespace

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_text_atomic(const std::string& text, const std::string& path) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw DataError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot rename onto " + path + ": " + ec.message());
  }
}

void write_json_atomic(const json& j, const std::string& path) {
  write_text_atomic(j.dump(1) + "\n", path);
}

double round_sig12(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::strtod(buf, nullptr);
}

// --- COCO ground truth ---------------------------------------------------

GroundTruthStore parse_coco_gt(const json& j) {
  GroundTruthStore store;
  const auto images = guarded("images", [&] { return j.value("images", json::array()); });
  for (std::size_t i = 0; i < images.size(); ++i) {
    guarded("image " + std::to_string(i), [&] {
      const auto& im = images[i];
      store.add_image({im.at("id").get<std::int64_t>(),
                       {im.at("width").get<double>(), im.at("height").get<double>()},
                       im.value("file_name", std::string{})});
      return 0;
    });
  }
  const auto cats = guarded("categories", [&] { return j.value("categories", json::array()); });
  for (std::size_t i = 0; i < cats.size(); ++i) {
    guarded("category " + std::to_string(i), [&] {
      store.add_category(cats[i].at("id").get<int>(), cats[i].value("name", std::string{}));
      return 0;
    });
  }
  const auto anns = guarded("annotations", [&] { return j.value("annotations", json::array()); });
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& a = anns[i];
    const auto [id, image_id, category] = guarded("annotation " + std::to_string(i), [&] {
      return std::tuple{a.at("id").get<std::int64_t>(), a.at("image_id").get<std::int64_t>(),
                        a.at("category_id").get<int>()};
    });
    if (!store.has_image(image_id)) {
      throw ReferenceError("annotation " + std::to_string(i) + " references unknown image_id " +
                           std::to_string(image_id));
    }
    if (!store.categories().empty() && store.categories().count(category) == 0) {
      throw ReferenceError("annotation " + std::to_string(i) + " references unknown category_id " +
                           std::to_string(category));
    }
    const auto b = read_xywh(a, "annotation", i);
    try {
      store.add_instance({image_id, category, Box::xyxy(b[0], b[1], b[0] + b[2], b[1] + b[3]), id});
    } catch (const ValidationError& e) {
      throw ValidationError("annotation " + std::to_string(i) + ": " + e.what());
    }
  }
  return store;
}

GroundTruthStore load_coco_gt(const std::string& path) { return parse_coco_gt(read_json_file(path)); }

json coco_gt_json(const GroundTruthStore& store) {
  json images = json::array();
  json anns = json::array();
  for (const auto& [id, im] : store.images()) {
    images.push_back({{"id", id},
                      {"width", im.size.width},
                      {"height", im.size.height},
                      {"file_name", im.file_name}});
    for (const auto& g : store.instances(id)) {
      anns.push_back({{"id", g.instance_id},
                      {"image_id", id},
                      {"category_id", g.label},
                      {"bbox", xywh_json(g.box)},
                      {"area", round_sig12(g.box.area())},
                      {"iscrowd", 0}});
    }
  }
  json cats = json::array();
  for (const auto& [id, name] : store.categories()) cats.push_back({{"id", id}, {"name", name}});
  return {{"images", images}, {"annotations", anns}, {"categories", cats}};
}

void save_coco_gt(const GroundTruthStore& store, const std::string& path) {
  write_json_atomic(coco_gt_json(store), path);
}

// --- Probabilistic detections --------------------------------------------

ImageSizes image_sizes(const GroundTruthStore& store) {
  ImageSizes out;
  for (const auto& [id, im] : store.images()) out[id] = im.size;
  return out;
}

json prob_detections_json(std::span<const ProbabilisticDetection> dets, const ImageSizes& sizes) {
  json arr = json::array();
  for (const auto& d : dets) {
    Box box = d.box;
    BoxCovariance cov = d.covariance;
    if (box.format() != BoxFormat::kXyXy || cov.format() != BoxFormat::kXyXy) {
      const auto it = sizes.find(d.image_id);
      if (it == sizes.end()) {
        throw ReferenceError("no image size for image_id " + std::to_string(d.image_id));
      }
      cov = covariance_convert(d.covariance, d.box, BoxFormat::kXyXy, it->second);
      box = convert(d.box, BoxFormat::kXyXy, it->second);
    }
    json c = json::array();
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) c.push_back(round_sig12(cov(r, k)));
    arr.push_back({{"image_id", d.image_id},
                   {"category_id", d.label},
                   {"bbox", xywh_json(box)},
                   {"score", round_sig12(d.confidence)},
                   {"support", d.support},
                   {"covariance", c}});
  }
  return {{"detections", arr}};
}

std::vector<ProbabilisticDetection> parse_prob_detections(const json& j) {
  const auto arr = guarded("detections", [&] { return j.at("detections"); });
  if (!arr.is_array()) throw ValidationError("detections must be an array");
  std::vector<ProbabilisticDetection> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& rec = arr[i];
    const std::string where = "detection " + std::to_string(i);
    const auto b = read_xywh(rec, "detection", i);
    const auto [image_id, label, score, support, cov] = guarded(where, [&] {
      return std::tuple{rec.at("image_id").get<std::int64_t>(), rec.at("category_id").get<int>(),
                        rec.at("score").get<double>(), rec.value("support", 1),
                        rec.at("covariance").get<std::vector<double>>()};
    });
    if (!(score >= 0.0 && score <= 1.0)) throw ValidationError(where + ": score outside [0,1]");
    if (cov.size() != 16) throw ValidationError(where + ": covariance must have 16 entries");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) m(r, k) = cov[r * 4 + k];
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-6) {
      throw ValidationError(where + ": covariance is not symmetric");
    }
    m = (0.5 * (m + m.transpose())).eval();
    try {
      out.push_back({Box::xyxy(b[0], b[1], b[0] + b[2], b[1] + b[3]),
                     BoxCovariance::checked(BoxFormat::kXyXy, m), label, score, support, image_id});
    } catch (const CovarianceError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

void save_prob_detections(std::span<const ProbabilisticDetection> dets, const ImageSizes& sizes,
                          const std::string& path) {
  write_json_atomic(prob_detections_json(dets, sizes), path);
}

std::vector<ProbabilisticDetection> load_prob_detections(const std::string& path) {
  return parse_prob_detections(read_json_file(path));
}

// --- Raw ensemble detections ---------------------------------------------

json ensemble_json(std::span<const DetectionSetGroup> images) {
  int groups = 0;
  json arr = json::array();
  for (const auto& im : images) {
    groups = std::max(groups, im.num_groups());
    json dets = json::array();
    for (const auto& set : im.sets) {
      for (const auto& d : set) {
        dets.push_back({{"group", d.group_index},
                        {"query", d.query_index},
                        {"category_id", d.label},
                        {"bbox", xywh_json(convert(d.box, BoxFormat::kXyXy, im.image))},
                        {"score", round_sig12(d.confidence)}});
      }
    }
    arr.push_back({{"image_id", im.image_id},
                   {"width", im.image.width},
                   {"height", im.image.height},
                   {"num_groups", im.num_groups()},
                   {"detections", dets}});
  }
  return {{"num_groups", groups}, {"images", arr}};
}

std::vector<DetectionSetGroup> parse_ensemble(const json& j) {
  const int default_groups = guarded("num_groups", [&] { return j.value("num_groups", 1); });
  const auto images = guarded("images", [&] { return j.at("images"); });
  std::vector<DetectionSetGroup> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    DetectionSetGroup g;
    const int groups = guarded("image " + std::to_string(i), [&] {
      g.image_id = im.at("image_id").get<std::int64_t>();
      g.image = {im.at("width").get<double>(), im.at("height").get<double>()};
      return im.value("num_groups", default_groups);
    });
    if (groups < 1) throw ValidationError("image " + std::to_string(i) + ": num_groups must be >= 1");
    if (!(g.image.width > 0.0) || !(g.image.height > 0.0)) {
      throw ValidationError("image " + std::to_string(i) + ": non-positive size");
    }
    g.sets.resize(groups);
    const auto dets = guarded("image " + std::to_string(i), [&] { return im.at("detections"); });
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const auto& rec = dets[k];
      const std::string where = "image " + std::to_string(i) + " detection " + std::to_string(k);
      const auto b = read_xywh(rec, where, k);
      const auto [group, query, label, score] = guarded(where, [&] {
        return std::tuple{rec.at("group").get<int>(), rec.value("query", static_cast<int>(k)),
                          rec.at("category_id").get<int>(), rec.at("score").get<double>()};
      });
      if (group < 1 || group > groups) throw ValidationError(where + ": group out of range");
      if (!(score >= 0.0 && score <= 1.0)) throw ValidationError(where + ": score outside [0,1]");
      try {
        const Box abs = Box::xyxy(b[0], b[1], b[0] + b[2], b[1] + b[3]);
        g.sets[group - 1].push_back(
            {convert(abs, BoxFormat::kCxCyWh, g.image), label, score, group, query});
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

void save_ensemble(std::span<const DetectionSetGroup> images, const std::string& path) {
  write_json_atomic(ensemble_json(images), path);
}

std::vector<DetectionSetGroup> load_ensemble(const std::string& path) {
  return parse_ensemble(read_json_file(path));
}

}  // namespace qens
