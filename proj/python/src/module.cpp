#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "qens/aggregation.hpp"
#include "qens/clustering.hpp"
#include "qens/decoder.hpp"
#include "qens/errors.hpp"
#include "qens/geometry.hpp"
#include "qens/io.hpp"
#include "qens/metrics.hpp"
#include "qens/pipeline.hpp"
#include "qens/synth.hpp"

namespace py = pybind11;
using namespace qens;

// JSON crosses the boundary as text; the Python wrapper parses it.
namespace {

BoxFormat format_of(const std::string& s) {
  if (s == "cxcywh") return BoxFormat::kCxCyWh;
  if (s == "xyxy") return BoxFormat::kXyXy;
  throw ParameterizationError("unknown box format '" + s + "'");
}

AggregationStrategy strategy_of(const std::string& s) {
  const auto v = parse_strategy(s);
  if (!v) throw ConfigurationError("unknown strategy '" + s + "'");
  return *v;
}

Cluster cluster_from(const std::vector<Detection>& members) {
  if (members.empty()) throw ClusterError("empty cluster");
  Cluster c;
  c.label = members.front().label;
  c.members = sort_detections(members);
  return c;
}

std::string synth(std::uint64_t seed, int images, int groups, double box_sigma, double miss_prob,
                  double fp_rate, double conf_base, double conf_jitter) {
  SceneParams scene;
  scene.seed = seed;
  EnsembleNoise noise;
  noise.seed = seed;
  noise.box_sigma = box_sigma;
  noise.miss_prob = miss_prob;
  noise.fp_rate = fp_rate;
  noise.conf_base = conf_base;
  noise.conf_jitter = conf_jitter;
  const auto store = generate_dataset(scene, images);
  const auto ens = simulate_dataset(store, groups, noise, scene.num_classes);
  nlohmann::json out{{"gt", coco_gt_json(store)}, {"ensemble", ensemble_json(ens)}};
  return out.dump();
}

std::string pipeline(const std::string& ensemble, double theta, const std::string& strategy,
                     double conf_threshold) {
  const auto images = parse_ensemble(nlohmann::json::parse(ensemble));
  PipelineOptions o;
  o.clustering.iou_threshold = theta;
  o.strategy = strategy_of(strategy);
  o.conf_threshold = conf_threshold;
  ImageSizes sizes;
  for (const auto& im : images) sizes[im.image_id] = im.image;
  return prob_detections_json(cluster_and_aggregate(images, o), sizes).dump();
}

std::string evaluate_json(const std::string& detections, const std::string& gt, double conf_threshold,
                          int bins, double match_iou, double epsilon) {
  const auto dets = parse_prob_detections(nlohmann::json::parse(detections));
  const auto store = parse_coco_gt(nlohmann::json::parse(gt));
  EvalOptions o;
  o.dece.conf_threshold = conf_threshold;
  o.dece.bins = bins;
  o.dece.match_iou = match_iou;
  o.pdq.conf_threshold = conf_threshold;
  o.pdq.epsilon = epsilon;
  return evaluate(dets, store, o).to_json().dump();
}

DecoderConfig decoder_config(int groups, int queries, int embed_dim, int heads, int layers, int num_classes,
                             int features, double dropout, std::uint64_t seed) {
  DecoderConfig c;
  c.num_groups = groups;
  c.queries_per_group = queries;
  c.embed_dim = embed_dim;
  c.num_heads = heads;
  c.num_layers = layers;
  c.num_classes = num_classes;
  c.feature_tokens = features;
  c.dropout_prob = dropout;
  c.weight_seed = seed;
  c.dropout_seed = seed + 1;
  c.validate();
  return c;
}

std::vector<Matrix> decode_groups(int groups, int queries, int embed_dim, int heads, int layers,
                                  int features, const std::string& layout, std::uint64_t seed) {
  const auto l = parse_layout(layout);
  if (!l) throw ConfigurationError("unknown layout '" + layout + "'");
  const auto c = decoder_config(groups, queries, embed_dim, heads, layers, 8, features, 0.0, seed);
  const auto w = DecoderWeights::random(c);
  return decoder_forward(w, random_features(c, seed + 7919), w.queries, build_group_mask(groups, queries),
                         DropoutMode::off(), *l);
}

std::string decode(const std::string& mode, const std::string& layout, int groups, int queries, int embed_dim,
                   int heads, int layers, int num_classes, int features, double dropout, std::uint64_t seed) {
  const auto m = parse_mode(mode);
  if (!m) throw ConfigurationError("unknown mode '" + mode + "'");
  const auto l = parse_layout(layout);
  if (!l) throw ConfigurationError("unknown layout '" + layout + "'");
  const auto c = decoder_config(groups, queries, embed_dim, heads, layers, num_classes, features, dropout, seed);
  auto sets = run_ensemble_pass(DecoderWeights::random(c), random_features(c, seed + 7919), *m, *l);
  sets.image_id = 1;
  sets.image = {640, 480};
  return ensemble_json(std::vector<DetectionSetGroup>{sets}).dump();
}

}  // namespace

PYBIND11_MODULE(_qens, m) {
  m.doc() = "Query-group ensemble detection: clustering, aggregation and metrics";

  auto base = py::register_exception<Error>(m, "QensError", PyExc_ValueError);
  py::register_exception<ParameterizationError>(m, "ParameterizationError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<CovarianceError>(m, "CovarianceError", base);
  py::register_exception<ConfigurationError>(m, "ConfigurationError", base);
  py::register_exception<ClusterError>(m, "ClusterError", base);
  py::register_exception<CapacityError>(m, "CapacityError", base);
  auto data = py::register_exception<DataError>(m, "DataError", base);
  py::register_exception<ReferenceError>(m, "ReferenceError", data);
  py::register_exception<ValidationError>(m, "ValidationError", data);

  py::class_<Box>(m, "Box")
      .def_static("cxcywh", &Box::cxcywh, py::arg("cx"), py::arg("cy"), py::arg("w"), py::arg("h"))
      .def_static("xyxy", &Box::xyxy, py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"))
      .def_property_readonly("format", [](const Box& b) { return std::string(to_string(b.format())); })
      .def_property_readonly("coords", &Box::coords)
      .def("corners", &Box::corners)
      .def("area", &Box::area)
      .def("__eq__", [](const Box& a, const Box& b) { return a == b; })
      .def("__repr__", [](const Box& b) {
        const auto& c = b.coords();
        return "Box." + std::string(to_string(b.format())) + "(" + std::to_string(c[0]) + ", " +
               std::to_string(c[1]) + ", " + std::to_string(c[2]) + ", " + std::to_string(c[3]) + ")";
      });

  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def(
      "convert",
      [](const Box& b, const std::string& target, double width, double height) {
        return convert(b, format_of(target), {width, height});
      },
      py::arg("box"), py::arg("target"), py::arg("width"), py::arg("height"));

  py::class_<Detection>(m, "Detection")
      .def(py::init([](const Box& box, int label, double confidence, int group_index, int query_index) {
             return Detection{box, label, confidence, group_index, query_index};
           }),
           py::arg("box"), py::arg("label"), py::arg("confidence"), py::arg("group_index") = 1,
           py::arg("query_index") = 0)
      .def_readonly("box", &Detection::box)
      .def_readonly("label", &Detection::label)
      .def_readonly("confidence", &Detection::confidence)
      .def_readonly("group_index", &Detection::group_index)
      .def_readonly("query_index", &Detection::query_index);

  m.def(
      "bsas_cluster",
      [](const std::vector<Detection>& pool, double theta) {
        std::vector<std::vector<Detection>> out;
        for (auto& c : bsas_cluster(pool, ClusteringParams{theta})) out.push_back(std::move(c.members));
        return out;
      },
      py::arg("pool"), py::arg("theta") = 0.7);

  m.def(
      "final_confidence",
      [](const std::vector<Detection>& members, int groups, const std::string& strategy) {
        return final_confidence(cluster_from(members), groups, strategy_of(strategy));
      },
      py::arg("members"), py::arg("groups"), py::arg("strategy") = "max_conf_scaled");
  m.def(
      "aggregate",
      [](const std::vector<Detection>& members) {
        const auto c = cluster_from(members);
        const Box mean = aggregate_box(c);
        return py::make_tuple(mean, Eigen::Matrix4d(aggregate_covariance(c, mean).matrix()));
      },
      py::arg("members"), "Softmax-weighted mean box and covariance, both normalized cxcywh.");
  m.def("softmax_weights", [](const std::vector<double>& c) { return softmax_weights(c); }, py::arg("confidences"));

  m.def(
      "hungarian_assign",
      [](const Eigen::MatrixXd& cost) {
        const auto a = hungarian_assign(cost);
        return py::make_tuple(a.row_to_col, a.total_cost);
      },
      py::arg("cost"), "Minimum-cost assignment; returns (row_to_col, total_cost), -1 for unassigned rows.");
  m.def("bivariate_normal_cdf", &bivariate_normal_cdf, py::arg("a"), py::arg("b"), py::arg("rho"));
  m.def("group_mask", [](int g, int n) { return Eigen::MatrixXi(build_group_mask(g, n).dense()); },
        py::arg("groups"), py::arg("queries_per_group"));

  m.def("_synth", &synth);
  m.def("_pipeline", &pipeline);
  m.def("_evaluate", &evaluate_json);
  m.def("_decode", &decode);
  m.def("decode_groups", &decode_groups, py::arg("groups"), py::arg("queries"), py::arg("embed_dim"),
        py::arg("heads"), py::arg("layers"), py::arg("features"), py::arg("layout"), py::arg("seed") = 0,
        "Per-group decoder outputs (N x d arrays) for random weights, deterministic mode.");
}
