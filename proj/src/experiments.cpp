#include "qens/experiments.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <memory>
#include <numeric>
#include <sstream>

#include "qens/errors.hpp"

namespace qens {
namespace {

std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

std::pair<double, double> mean_and_std(const std::vector<double>& v) {
  const auto [mean, se] = mean_and_se(v);
  return {mean, se * std::sqrt(static_cast<double>(v.size()))};
}

template <typename F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

MetricSample run_benchmark_seed(const BenchmarkSpec& spec, int seed_index) {
  SceneParams scene = spec.scene;
  scene.seed = spec.base_seed + static_cast<std::uint64_t>(seed_index);
  EnsembleNoise noise = spec.noise;
  noise.seed = (spec.base_seed + static_cast<std::uint64_t>(seed_index)) ^ 0x5eedf00dULL;

  const auto store = generate_dataset(scene, spec.images_per_seed);
  const auto ensembles = simulate_dataset(store, spec.groups, noise, scene.num_classes);
  PipelineOptions pipeline = spec.pipeline;
  pipeline.conf_threshold = 0.0;
  const auto dets = cluster_and_aggregate(ensembles, pipeline);

  MetricSample s;
  s.map = compute_map(dets, store).map;
  s.dece = compute_dece(dets, store, spec.eval.dece).dece;
  s.pdq = compute_pdq(dets, store, spec.eval.pdq).pdq;
  return s;
}

MetricSummary run_benchmark(const BenchmarkSpec& spec, const std::string& setting) {
  if (spec.seeds < 1) throw ConfigurationError("benchmark needs at least one seed");
  MetricSummary out;
  out.setting = setting;
  out.samples.resize(spec.seeds);
  const int workers = std::clamp(spec.threads, 1, spec.seeds);
  if (workers == 1) {
    for (int s = 0; s < spec.seeds; ++s) out.samples[s] = run_benchmark_seed(spec, s);
  } else {
    std::vector<std::future<void>> jobs;
    for (int w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (int s = w; s < spec.seeds; s += workers) out.samples[s] = run_benchmark_seed(spec, s);
      }));
    }
    for (auto& j : jobs) j.get();
  }
  std::vector<double> pdq, dece, map;
  for (const auto& s : out.samples) {
    pdq.push_back(s.pdq);
    dece.push_back(s.dece);
    map.push_back(s.map);
  }
  std::tie(out.pdq_mean, out.pdq_se) = mean_and_se(pdq);
  std::tie(out.dece_mean, out.dece_se) = mean_and_se(dece);
  std::tie(out.map_mean, out.map_se) = mean_and_se(map);
  return out;
}

std::vector<MetricSummary> ablate_groups(BenchmarkSpec spec, const std::vector<int>& groups) {
  std::vector<MetricSummary> out;
  for (int g : groups) {
    spec.groups = g;
    out.push_back(run_benchmark(spec, std::to_string(g)));
  }
  return out;
}

std::vector<MetricSummary> ablate_strategies(BenchmarkSpec spec,
                                             const std::vector<AggregationStrategy>& strategies) {
  std::vector<MetricSummary> out;
  for (auto s : strategies) {
    spec.pipeline.strategy = s;
    out.push_back(run_benchmark(spec, std::string(to_string(s))));
  }
  return out;
}

std::string summaries_csv(const std::vector<MetricSummary>& rows, const std::string& setting_name) {
  std::ostringstream os;
  os.precision(10);
  os << setting_name << ",pdq,pdq_se,dece,dece_se,map,map_se\n";
  for (const auto& r : rows) {
    os << r.setting << ',' << r.pdq_mean << ',' << r.pdq_se << ',' << r.dece_mean << ','
       << r.dece_se << ',' << r.map_mean << ',' << r.map_se << '\n';
  }
  return os.str();
}

namespace {

// One timed unit of work for the latency benchmark.
struct LatencyCase {
  std::string name;
  int groups;
  std::function<void()> run;
};

LatencyCase layout_case(const DecoderConfig& config, Layout layout) {
  auto weights = std::make_shared<DecoderWeights>(DecoderWeights::random(config));
  auto features = std::make_shared<Matrix>(random_features(config, config.weight_seed + 1));
  const auto mode = config.num_groups == 1 ? EnsembleMode::kDeterministic : EnsembleMode::kGroupEnsemble;
  return {std::string(to_string(layout)), config.num_groups,
          [=] { run_ensemble_pass(*weights, *features, mode, layout); }};
}

LatencyCase ensemble_case(const DecoderConfig& config) {
  auto members = std::make_shared<std::vector<DecoderWeights>>();
  for (int g = 0; g < config.num_groups; ++g) {
    DecoderConfig c = config;
    c.num_groups = 1;
    c.weight_seed = config.weight_seed + 1000 + static_cast<std::uint64_t>(g);
    members->push_back(DecoderWeights::random(c));
  }
  auto features = std::make_shared<Matrix>(random_features(config, config.weight_seed + 1));
  return {std::string(kSequentialEnsemble), config.num_groups, [=] {
            for (const auto& m : *members) run_ensemble_pass(m, *features, EnsembleMode::kDeterministic);
          }};
}

// Round-robin over cases so slow drift on a shared machine hits every case
// alike instead of whichever ran last.
std::vector<LatencyStats> time_cases(const std::vector<LatencyCase>& cases, int repetitions, int warmup) {
  if (repetitions < 1 || warmup < 0) throw ConfigurationError("repetitions must be >= 1");
  for (int i = 0; i < warmup; ++i) {
    for (const auto& c : cases) c.run();
  }
  std::vector<std::vector<double>> ms(cases.size());
  for (int i = 0; i < repetitions; ++i) {
    for (std::size_t k = 0; k < cases.size(); ++k) ms[k].push_back(time_ms(cases[k].run));
  }
  std::vector<LatencyStats> out;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto [mean, sd] = mean_and_std(ms[k]);
    out.push_back({cases[k].name, cases[k].groups, mean, sd, repetitions, 1});
  }
  return out;
}

}  // namespace

LatencyStats time_layout(const DecoderConfig& config, Layout layout, int repetitions, int warmup) {
  return time_cases({layout_case(config, layout)}, repetitions, warmup).front();
}

LatencyStats time_sequential_ensemble(const DecoderConfig& config, int repetitions, int warmup) {
  return time_cases({ensemble_case(config)}, repetitions, warmup).front();
}

std::vector<LatencyStats> time_interleaved(const std::vector<DecoderConfig>& configs,
                                           const std::vector<std::string>& layouts, int repetitions,
                                           int warmup) {
  std::vector<LatencyCase> cases;
  for (const auto& config : configs) {
    config.validate();
    for (const auto& name : layouts) {
      if (name == kSequentialEnsemble) {
        cases.push_back(ensemble_case(config));
      } else if (const auto l = parse_layout(name)) {
        cases.push_back(layout_case(config, *l));
      } else {
        throw ConfigurationError("unknown layout '" + name + "'");
      }
    }
  }
  return time_cases(cases, repetitions, warmup);
}

std::string latency_csv(const std::vector<LatencyStats>& rows) {
  std::ostringstream os;
  os.precision(8);
  os << "layout,G,mean_ms,std_ms,reps,threads\n";
  for (const auto& r : rows) {
    os << r.layout << ',' << r.groups << ',' << r.mean_ms << ',' << r.std_ms << ','
       << r.repetitions << ',' << r.threads << '\n';
  }
  return os.str();
}

}  // namespace qens
