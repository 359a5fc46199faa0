#include <sstream>

#include <nlohmann/json.hpp>

#include "qens/metrics.hpp"

namespace qens {

EvalReport evaluate(std::span<const ProbabilisticDetection> dets, const GroundTruthStore& gts,
                    const EvalOptions& options) {
  EvalReport r;
  r.map = compute_map(dets, gts);
  r.dece = compute_dece(dets, gts, options.dece);
  r.pdq = compute_pdq(dets, gts, options.pdq);
  r.detections = dets.size();
  r.ground_truths = gts.instance_count();
  for (const auto& [id, image] : gts.images()) {
    for (const auto& g : gts.instances(id)) ++r.gt_per_class[g.label];
  }
  return r;
}

nlohmann::json EvalReport::to_json() const {
  using nlohmann::json;
  json per_class_ap = json::object();
  for (const auto& [k, v] : map.per_class) per_class_ap[std::to_string(k)] = v;

  json bins = json::array();
  for (const auto& b : dece.bins) {
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"mean_confidence", b.mean_confidence},
                    {"precision", b.precision},
                    {"count", b.count}});
  }

  json pdq_classes = json::object();
  for (const auto& [k, c] : pdq.per_class) {
    pdq_classes[std::to_string(k)] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  }

  json gt_classes = json::object();
  for (const auto& [k, n] : gt_per_class) gt_classes[std::to_string(k)] = n;

  return {{"detections", detections},
          {"ground_truths", ground_truths},
          {"gt_per_class", gt_classes},
          {"map",
           {{"map", map.map},
            {"ap50", map.ap50},
            {"iou_thresholds", map.iou_thresholds},
            {"per_class", per_class_ap}}},
          {"dece",
           {{"dece", dece.dece},
            {"samples", dece.samples},
            {"no_samples", dece.no_samples()},
            {"bins", bins}}},
          {"pdq",
           {{"pdq", pdq.pdq},
            {"tp", pdq.tp},
            {"fp", pdq.fp},
            {"fn", pdq.fn},
            {"mean_spatial", pdq.mean_spatial},
            {"mean_label", pdq.mean_label},
            {"mean_pairwise", pdq.mean_pairwise},
            {"per_class", pdq_classes}}}};
}

std::string EvalReport::reliability_csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "lo,hi,mean_conf,precision,count\n";
  for (const auto& b : dece.bins) {
    os << b.lo << ',' << b.hi << ',' << b.mean_confidence << ',' << b.precision << ',' << b.count
       << '\n';
  }
  return os.str();
}

}  // namespace qens
