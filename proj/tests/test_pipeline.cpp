#include <doctest.h>

#include <sstream>

#include "qens/errors.hpp"
#include "qens/experiments.hpp"
#include "qens/metrics.hpp"
#include "qens/pipeline.hpp"
#include "qens/synth.hpp"
#include "support.hpp"

using namespace qens;

namespace {

EnsembleNoise clean_noise(std::uint64_t seed) {
  EnsembleNoise n;
  n.box_sigma = 0.0;
  n.miss_prob = 0.0;
  n.fp_rate = 0.0;
  n.conf_base = 0.9;
  n.conf_jitter = 0.0;
  n.seed = seed;
  return n;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_error(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("zero-noise closure") {
  SceneParams p;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    p.seed = seed;
    const auto store = generate_dataset(p, 2);
    const auto ens = simulate_dataset(store, 5, clean_noise(seed), p.num_classes);
    const auto dets = cluster_and_aggregate(ens, PipelineOptions{});
    REQUIRE(dets.size() == store.instance_count());
    for (const auto& d : dets) {
      REQUIRE(d.support == 5);
      REQUIRE(d.confidence == 0.9);
      REQUIRE(d.covariance.matrix().isZero(0.0));
    }
    REQUIRE(compute_map(dets, store).map == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("deterministic input keeps singleton clusters") {
  SceneParams p;
  p.seed = 2;
  const auto store = generate_dataset(p, 1);
  EnsembleNoise n;
  n.seed = 2;
  auto ens = simulate_dataset(store, 5, n, p.num_classes);
  const auto first = first_groups(ens[0], 1);
  REQUIRE(first.num_groups() == 1);
  PipelineOptions o;
  o.conf_threshold = 0.0;
  for (const auto& d : cluster_and_aggregate(first, o)) {
    CHECK(d.support == 1);
    CHECK(d.covariance.matrix().isZero(0.0));
  }
  CHECK_THROWS_AS(first_groups(ens[0], 0), ConfigurationError);
  CHECK(first_groups(ens[0], 99).num_groups() == 5);
}

TEST_CASE("scaled threshold drops every singleton cluster") {
  // With G=5 a singleton keeps at most 0.2 of its confidence, below 0.3.
  DetectionSetGroup sets;
  sets.image = {100, 100};
  sets.sets.resize(5);
  sets.sets[0].push_back({Box::cxcywh(0.2, 0.2, 0.1, 0.1), 1, 1.0, 1, 0});
  for (int g = 0; g < 5; ++g) sets.sets[g].push_back({Box::cxcywh(0.7, 0.7, 0.2, 0.2), 2, 0.8, g + 1, 1});
  const auto out = cluster_and_aggregate(sets, PipelineOptions{});
  REQUIRE(out.size() == 1);
  CHECK(out[0].label == 2);
  CHECK(out[0].support == 5);
}

TEST_CASE("threaded pipeline matches the serial result") {
  SceneParams p;
  p.seed = 12;
  const auto store = generate_dataset(p, 12);
  EnsembleNoise n;
  n.seed = 12;
  const auto ens = simulate_dataset(store, 5, n, p.num_classes);
  const auto a = cluster_and_aggregate(ens, PipelineOptions{}, 1);
  const auto b = cluster_and_aggregate(ens, PipelineOptions{}, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].image_id == b[i].image_id);
    REQUIRE(a[i].box == b[i].box);
    REQUIRE(a[i].confidence == b[i].confidence);
  }
}

TEST_CASE("covariance trace grows with box noise") {
  SceneParams p;
  p.min_objects = p.max_objects = 4;
  std::vector<double> traces;
  for (double sigma : {0.01, 0.05, 0.1}) {
    double total = 0;
    int clusters = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      p.seed = seed;
      const auto store = generate_dataset(p, 1);
      EnsembleNoise n;
      n.box_sigma = sigma;
      n.miss_prob = 0;
      n.fp_rate = 0;
      n.seed = seed;
      const auto ens = simulate_dataset(store, 5, n, p.num_classes);
      PipelineOptions o;
      o.conf_threshold = 0;
      for (const auto& d : cluster_and_aggregate(ens, o)) {
        if (d.support < 2) continue;
        total += d.covariance.matrix().trace();
        ++clusters;
      }
    }
    REQUIRE(clusters > 0);
    traces.push_back(total / clusters);
  }
  CHECK(traces[0] < traces[1]);
  CHECK(traces[1] < traces[2]);
}

TEST_CASE("calibrated synthetic ensemble gives near-zero single-bin gap") {
  // True positives carry confidence b, false positives average
  // (0.05 + 0.5) / 2 = b, and the FP rate is set so precision is b.
  const double b = 0.275;
  const int objects = 5;
  SceneParams p;
  p.min_objects = p.max_objects = objects;
  p.overlap_limit = 0.0;
  std::vector<double> gaps;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    p.seed = seed;
    const auto store = generate_dataset(p, 2);
    EnsembleNoise n;
    n.box_sigma = 0.02;
    n.miss_prob = 0.0;
    n.conf_base = b;
    n.conf_jitter = 0.0;
    n.fp_rate = objects * (1 - b) / b;
    n.seed = seed;
    const auto ens = simulate_dataset(store, 1, n, p.num_classes);
    PipelineOptions o;
    o.conf_threshold = 0.0;
    const auto dets = cluster_and_aggregate(ens, o);
    DeceOptions d;
    d.bins = 1;
    d.conf_threshold = 0.0;
    const auto r = compute_dece(dets, store, d);
    REQUIRE(r.samples > 0);
    gaps.push_back(r.bins[0].precision - r.bins[0].mean_confidence);
  }
  CHECK(std::abs(mean(gaps)) <= 3 * std_error(gaps));
}

TEST_CASE("benchmark runs and summarizes") {
  BenchmarkSpec spec;
  spec.seeds = 4;
  const auto s = run_benchmark(spec, "g5");
  CHECK(s.samples.size() == 4);
  CHECK(s.setting == "g5");
  for (const auto& x : s.samples) {
    CHECK(x.pdq >= 0);
    CHECK(x.pdq <= 1);
    CHECK(x.map >= 0);
    CHECK(x.map <= 1);
  }
  const auto again = run_benchmark(spec, "g5");
  CHECK(again.pdq_mean == s.pdq_mean);

  const auto rows = ablate_groups(spec, {1, 3});
  CHECK(rows.size() == 2);
  const auto csv = summaries_csv(rows, "groups");
  CHECK(csv.rfind("groups,pdq,pdq_se,dece,dece_se,map,map_se\n", 0) == 0);
  const auto strat = ablate_strategies(spec, {AggregationStrategy::kMeanConf, AggregationStrategy::kMaxConf,
                                              AggregationStrategy::kMaxConfScaled});
  CHECK(strat.size() == 3);
}

TEST_CASE("latency helpers") {
  DecoderConfig c;
  c.embed_dim = 16;
  c.num_heads = 2;
  c.num_layers = 1;
  c.queries_per_group = 4;
  c.num_groups = 2;
  c.feature_tokens = 8;
  const auto a = time_layout(c, Layout::kBatchedGroups, 2, 1);
  CHECK(a.repetitions == 2);
  CHECK(a.groups == 2);
  CHECK(a.mean_ms >= 0);
  const auto b = time_sequential_ensemble(c, 2, 0);
  CHECK(b.layout == "sequential_ensemble");
  const auto csv = latency_csv({a, b});
  CHECK(csv.rfind("layout,G,mean_ms,std_ms,reps,threads\n", 0) == 0);
  CHECK_THROWS_AS(time_layout(c, Layout::kBatchedGroups, 0, 0), ConfigurationError);
}
