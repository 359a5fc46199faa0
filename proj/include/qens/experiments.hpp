#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qens/decoder.hpp"
#include "qens/metrics.hpp"
#include "qens/pipeline.hpp"
#include "qens/synth.hpp"

namespace qens {

// Fixed-seed synthetic benchmark: for each seed, generate scenes, simulate a
// G-group ensemble, cluster + aggregate, and score.
struct BenchmarkSpec {
  SceneParams scene;
  EnsembleNoise noise;
  int groups = 5;
  PipelineOptions pipeline;  // conf_threshold is ignored: metrics apply their own
  EvalOptions eval;
  int seeds = 100;
  std::uint64_t base_seed = 0;
  int images_per_seed = 1;
  int threads = 1;
};

struct MetricSample {
  double pdq = 0.0;
  double dece = 0.0;
  double map = 0.0;
};

struct MetricSummary {
  std::string setting;
  double pdq_mean = 0.0, pdq_se = 0.0;
  double dece_mean = 0.0, dece_se = 0.0;
  double map_mean = 0.0, map_se = 0.0;
  std::vector<MetricSample> samples;
};

MetricSample run_benchmark_seed(const BenchmarkSpec& spec, int seed_index);
MetricSummary run_benchmark(const BenchmarkSpec& spec, const std::string& setting);

std::vector<MetricSummary> ablate_groups(BenchmarkSpec spec, const std::vector<int>& groups);
std::vector<MetricSummary> ablate_strategies(BenchmarkSpec spec,
                                             const std::vector<AggregationStrategy>& strategies);

// setting,pdq,pdq_se,dece,dece_se,map,map_se
std::string summaries_csv(const std::vector<MetricSummary>& rows, const std::string& setting_name);

// --- Latency -------------------------------------------------------------

struct LatencyStats {
  std::string layout;
  int groups = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  int repetitions = 0;
  int threads = 1;
};

inline constexpr std::string_view kSequentialEnsemble = "sequential_ensemble";

// One decoder pass over config.num_groups distinct query groups in `layout`
// plus task heads. Warmup iterations are not timed.
LatencyStats time_layout(const DecoderConfig& config, Layout layout, int repetitions, int warmup);

// config.num_groups separately-weighted decoders, each run on one query group
// one after another: the multi-model ensemble shape.
LatencyStats time_sequential_ensemble(const DecoderConfig& config, int repetitions, int warmup);

// Every (config, layout) pair, timed round-robin: each repetition runs all
// pairs once. `layouts` may include kSequentialEnsemble. Throws
// ConfigurationError for an unknown layout name.
std::vector<LatencyStats> time_interleaved(const std::vector<DecoderConfig>& configs,
                                           const std::vector<std::string>& layouts, int repetitions,
                                           int warmup);

// layout,G,mean_ms,std_ms,reps,threads
std::string latency_csv(const std::vector<LatencyStats>& rows);

}  // namespace qens
