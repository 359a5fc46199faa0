// qens: synthetic generation, ensemble pipeline, evaluation, latency bench
// and ablations from the command line.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 data error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qens/decoder.hpp"
#include "qens/errors.hpp"
#include "qens/experiments.hpp"
#include "qens/io.hpp"
#include "qens/metrics.hpp"
#include "qens/pipeline.hpp"
#include "qens/synth.hpp"

namespace {

using namespace qens;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output;
};

struct SceneFlags {
  int images = 1;
  int objects = -1;
  int min_objects = 3;
  int max_objects = 8;
  int classes = 3;
  double width = 320.0;
  double height = 240.0;
  double min_box = 16.0;
  double max_box = 96.0;
  double overlap = 0.3;
};

struct NoiseFlags {
  double sigma = 0.05;
  double miss = 0.1;
  double fp_rate = 0.5;
  double conf_base = 0.8;
  double conf_jitter = 0.1;
};

struct DecoderFlags {
  int groups = 5;
  int queries = 100;
  int embed_dim = 64;
  int heads = 4;
  int layers = 2;
  int classes = 8;
  int features = 64;
  double dropout = 0.1;
};

void add_scene_flags(CLI::App* cmd, SceneFlags& f) {
  cmd->add_option("--images", f.images, "Number of synthetic images")->check(CLI::PositiveNumber);
  cmd->add_option("--objects", f.objects, "Exact object count per image (overrides the range)");
  cmd->add_option("--min-objects", f.min_objects, "Minimum objects per image");
  cmd->add_option("--max-objects", f.max_objects, "Maximum objects per image");
  cmd->add_option("--classes", f.classes, "Number of classes");
  cmd->add_option("--width", f.width, "Image width in pixels");
  cmd->add_option("--height", f.height, "Image height in pixels");
  cmd->add_option("--min-box", f.min_box, "Minimum box side in pixels");
  cmd->add_option("--max-box", f.max_box, "Maximum box side in pixels");
  cmd->add_option("--overlap", f.overlap, "Maximum pairwise ground-truth IoU");
}

void add_noise_flags(CLI::App* cmd, NoiseFlags& f) {
  cmd->add_option("--sigma", f.sigma, "Box jitter, fraction of box size");
  cmd->add_option("--miss", f.miss, "Per-group miss probability");
  cmd->add_option("--fp-rate", f.fp_rate, "False positives per group (Poisson mean)");
  cmd->add_option("--conf-base", f.conf_base, "True-positive confidence center");
  cmd->add_option("--conf-jitter", f.conf_jitter, "True-positive confidence std");
}

void add_decoder_flags(CLI::App* cmd, DecoderFlags& f) {
  cmd->add_option("--queries", f.queries, "Queries per group");
  cmd->add_option("--embed-dim", f.embed_dim, "Decoder embedding width");
  cmd->add_option("--heads", f.heads, "Attention heads");
  cmd->add_option("--layers", f.layers, "Decoder layers");
  cmd->add_option("--num-classes", f.classes, "Classes predicted by the decoder head");
  cmd->add_option("--features", f.features, "Image feature tokens");
  cmd->add_option("--dropout", f.dropout, "Dropout probability for MC modes");
}

SceneParams scene_params(const SceneFlags& f, std::uint64_t seed) {
  SceneParams p;
  p.image = {f.width, f.height};
  p.min_objects = f.objects >= 0 ? f.objects : f.min_objects;
  p.max_objects = f.objects >= 0 ? f.objects : f.max_objects;
  p.num_classes = f.classes;
  p.min_box = f.min_box;
  p.max_box = f.max_box;
  p.overlap_limit = f.overlap;
  p.seed = seed;
  p.validate();
  return p;
}

EnsembleNoise noise_params(const NoiseFlags& f, std::uint64_t seed) {
  EnsembleNoise n;
  n.box_sigma = f.sigma;
  n.miss_prob = f.miss;
  n.fp_rate = f.fp_rate;
  n.conf_base = f.conf_base;
  n.conf_jitter = f.conf_jitter;
  n.seed = seed ^ 0x5eedf00dULL;
  n.validate();
  return n;
}

DecoderConfig decoder_config(const DecoderFlags& f, int groups, std::uint64_t seed) {
  DecoderConfig c;
  c.embed_dim = f.embed_dim;
  c.num_heads = f.heads;
  c.num_layers = f.layers;
  c.queries_per_group = f.queries;
  c.num_groups = groups;
  c.num_classes = f.classes;
  c.feature_tokens = f.features;
  c.dropout_prob = f.dropout;
  c.weight_seed = seed;
  c.dropout_seed = seed + 1;
  c.validate();
  return c;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string output_or(const GlobalFlags& g, const std::string& fallback) {
  return g.output.empty() ? fallback : g.output;
}

// --- synth -----------------------------------------------------------------

struct SynthCmd {
  SceneFlags scene;
  NoiseFlags noise;
  int groups = 5;
  std::string gt_name = "gt.json";
  std::string dets_name = "ensemble.json";

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("synth", "Generate a synthetic scene set and a simulated ensemble");
    add_scene_flags(cmd, scene);
    add_noise_flags(cmd, noise);
    cmd->add_option("--groups", groups, "Number of simulated detection sets");
    cmd->add_option("--gt-name", gt_name, "Ground-truth file name inside --output");
    cmd->add_option("--dets-name", dets_name, "Ensemble file name inside --output");
  }

  int run(const GlobalFlags& g) const {
    if (groups < 1) throw UsageError("--groups must be >= 1");
    const auto store = generate_dataset(scene_params(scene, g.seed), scene.images);
    const auto ensembles = simulate_dataset(store, groups, noise_params(noise, g.seed), scene.classes);
    const std::filesystem::path dir = output_or(g, ".");
    std::filesystem::create_directories(dir);
    // Serialize both before writing either so a failure leaves no output.
    const auto gt_json = coco_gt_json(store);
    const auto ens_json = ensemble_json(ensembles);
    write_json_atomic(gt_json, (dir / gt_name).string());
    write_json_atomic(ens_json, (dir / dets_name).string());
    std::size_t dets = 0;
    for (const auto& e : ensembles) dets += e.total();
    std::cout << "images=" << store.images().size() << " gt=" << store.instance_count()
              << " groups=" << groups << " detections=" << dets << '\n';
    return 0;
  }
};

// --- pipeline --------------------------------------------------------------

struct PipelineCmd {
  CLI::App* cmd = nullptr;
  std::string input;
  std::string mode = "group_ensemble";
  std::string layout = "batched_groups";
  std::string strategy = "max_conf_scaled";
  double theta = 0.7;
  double conf_threshold = 0.3;
  DecoderFlags decoder;
  int images = 1;
  double width = 640.0;
  double height = 480.0;
  std::string weights_in;
  std::string weights_out;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("pipeline", "Cluster and aggregate an ensemble into probabilistic detections");
    cmd->add_option("--input", input, "Raw ensemble detections file (omit to run the decoder)");
    cmd->add_option("--mode", mode, "deterministic | group_ensemble | mc_dropout | mc_group_ensemble");
    cmd->add_option("--layout", layout, "masked_joint | batched_groups | sequential_groups");
    cmd->add_option("--strategy", strategy, "mean_conf | max_conf | max_conf_scaled");
    cmd->add_option("--theta", theta, "Clustering IoU threshold");
    cmd->add_option("--conf-threshold", conf_threshold, "Drop outputs below this confidence");
    cmd->add_option("--groups", decoder.groups, "Query groups (decoder) or expected sets (input)");
    add_decoder_flags(cmd, decoder);
    cmd->add_option("--images", images, "Images to decode from synthetic features");
    cmd->add_option("--width", width, "Image width for decoder output");
    cmd->add_option("--height", height, "Image height for decoder output");
    cmd->add_option("--weights", weights_in, "Load decoder weights from JSON");
    cmd->add_option("--dump-weights", weights_out, "Write decoder weights to JSON");
  }

  int run(const GlobalFlags& g) const {
    const auto m = parse_mode(mode);
    if (!m) throw UsageError("unknown --mode " + mode);
    const auto s = parse_strategy(strategy);
    if (!s) throw UsageError("unknown --strategy " + strategy);
    const auto l = parse_layout(layout);
    if (!l) throw UsageError("unknown --layout " + layout);

    PipelineOptions opt;
    opt.clustering.iou_threshold = theta;
    opt.strategy = *s;
    opt.conf_threshold = conf_threshold;
    opt.clustering.validate();
    if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
      throw UsageError("--conf-threshold must lie in [0,1]");
    }

    std::vector<DetectionSetGroup> ensembles;
    if (!input.empty()) {
      if (!weights_in.empty() || !weights_out.empty()) {
        throw UsageError("--input conflicts with --weights/--dump-weights");
      }
      ensembles = load_ensemble(input);
      for (auto& e : ensembles) {
        if (cmd->count("--groups") > 0 && e.num_groups() != decoder.groups) {
          throw UsageError("--groups " + std::to_string(decoder.groups) + " conflicts with " +
                           std::to_string(e.num_groups()) + " sets in " + input);
        }
        if (*m == EnsembleMode::kDeterministic) e = first_groups(e, 1);
      }
    } else {
      if (images < 1) throw UsageError("--images must be >= 1");
      const DecoderWeights weights = weights_in.empty()
                                         ? DecoderWeights::random(decoder_config(decoder, decoder.groups, g.seed))
                                         : DecoderWeights::load(weights_in);
      if (!weights_out.empty()) weights.save(weights_out);
      for (int i = 1; i <= images; ++i) {
        const Matrix features = random_features(weights.config, g.seed + 7919ULL * i);
        auto sets = run_ensemble_pass(weights, features, *m, *l);
        sets.image_id = i;
        sets.image = {width, height};
        ensembles.push_back(std::move(sets));
      }
    }

    const auto dets = cluster_and_aggregate(ensembles, opt, g.threads);
    ImageSizes sizes;
    for (const auto& e : ensembles) sizes[e.image_id] = e.image;
    const std::string path = output_or(g, "detections.json");
    save_prob_detections(dets, sizes, path);
    std::cout << "images=" << ensembles.size() << " outputs=" << dets.size() << " -> " << path << '\n';
    return 0;
  }
};

// --- evaluate --------------------------------------------------------------

struct EvaluateCmd {
  std::string detections;
  std::string gt;
  std::string csv;
  EvalOptions opt;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("evaluate", "Score probabilistic detections: mAP, D-ECE, PDQ");
    cmd->add_option("--detections", detections, "Probabilistic detection file")->required();
    cmd->add_option("--gt", gt, "COCO ground-truth file")->required();
    cmd->add_option("--conf-threshold", opt.pdq.conf_threshold, "Threshold for PDQ and D-ECE");
    cmd->add_option("--bins", opt.dece.bins, "D-ECE bins");
    cmd->add_option("--match-iou", opt.dece.match_iou, "D-ECE matching IoU");
    cmd->add_option("--epsilon", opt.pdq.epsilon, "PDQ corner std floor, pixels");
    cmd->add_option("--csv", csv, "Reliability-diagram CSV path");
  }

  int run(const GlobalFlags& g) {
    opt.dece.conf_threshold = opt.pdq.conf_threshold;
    if (opt.dece.bins < 1) throw UsageError("--bins must be >= 1");
    if (!(opt.pdq.epsilon > 0.0)) throw UsageError("--epsilon must be positive");
    const auto store = load_coco_gt(gt);
    const auto dets = load_prob_detections(detections);
    const auto report = evaluate(dets, store, opt);
    const std::string path = output_or(g, "report.json");
    const std::string csv_path = csv.empty() ? path + ".reliability.csv" : csv;
    write_json_atomic(report.to_json(), path);
    write_text_atomic(report.reliability_csv(), csv_path);
    std::cout.precision(4);
    std::cout << "mAP=" << report.map.map << " PDQ=" << report.pdq.pdq
              << " D-ECE=" << report.dece.dece << " (tp=" << report.pdq.tp
              << " fp=" << report.pdq.fp << " fn=" << report.pdq.fn << ")\n";
    return 0;
  }
};

// --- bench -----------------------------------------------------------------

struct BenchCmd {
  std::string groups = "1,5";
  std::string layouts = "masked_joint,batched_groups,sequential_groups,sequential_ensemble";
  int reps = 20;
  int warmup = 3;
  DecoderFlags decoder{5, 100, 128, 8, 2, 8, 950, 0.1};

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("bench", "Decoder latency per layout vs a sequential ensemble");
    cmd->add_option("--groups", groups, "Comma-separated group counts");
    cmd->add_option("--layouts", layouts, "Comma-separated layouts (incl. sequential_ensemble)");
    cmd->add_option("--reps", reps, "Timed repetitions");
    cmd->add_option("--warmup", warmup, "Untimed warmup repetitions");
    add_decoder_flags(cmd, decoder);
  }

  int run(const GlobalFlags& g) const {
    std::vector<DecoderConfig> configs;
    for (const auto& gs : split_list(groups)) {
      int G = 0;
      try {
        G = std::stoi(gs);
      } catch (const std::exception&) {
        throw UsageError("bad group count '" + gs + "'");
      }
      configs.push_back(decoder_config(decoder, G, g.seed));
    }
    const auto names = split_list(layouts);
    for (const auto& name : names) {
      if (name != kSequentialEnsemble && !parse_layout(name)) throw UsageError("unknown layout '" + name + "'");
    }
    const auto rows = time_interleaved(configs, names, reps, warmup);
    const std::string path = output_or(g, "bench.csv");
    write_text_atomic(latency_csv(rows), path);
    std::cout << latency_csv(rows);
    return 0;
  }
};

// --- ablate ----------------------------------------------------------------

struct AblateCmd {
  std::string study;
  SceneFlags scene;
  NoiseFlags noise;
  int seeds = 100;
  int groups = 5;
  std::string group_list = "1,3,5,7,9";
  std::string strategy = "max_conf_scaled";
  double theta = 0.7;
  EvalOptions eval;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("ablate", "Metric vs query-group count or confidence strategy");
    cmd->add_option("--study", study, "groups | strategy")->required();
    add_scene_flags(cmd, scene);
    add_noise_flags(cmd, noise);
    cmd->add_option("--seeds", seeds, "Benchmark seeds");
    cmd->add_option("--groups", groups, "Group count for the strategy study");
    cmd->add_option("--group-list", group_list, "Group counts for the groups study");
    cmd->add_option("--strategy", strategy, "Strategy for the groups study");
    cmd->add_option("--theta", theta, "Clustering IoU threshold");
    cmd->add_option("--conf-threshold", eval.pdq.conf_threshold, "Threshold for PDQ and D-ECE");
    cmd->add_option("--epsilon", eval.pdq.epsilon, "PDQ corner std floor, pixels");
  }

  int run(const GlobalFlags& g) {
    BenchmarkSpec spec;
    spec.scene = scene_params(scene, g.seed);
    spec.noise = noise_params(noise, g.seed);
    spec.seeds = seeds;
    spec.base_seed = g.seed;
    spec.images_per_seed = scene.images;
    spec.threads = g.threads;
    spec.groups = groups;
    spec.pipeline.clustering.iou_threshold = theta;
    spec.pipeline.clustering.validate();
    eval.dece.conf_threshold = eval.pdq.conf_threshold;
    spec.eval = eval;
    if (seeds < 1) throw UsageError("--seeds must be >= 1");

    std::string csv;
    if (study == "groups") {
      const auto s = parse_strategy(strategy);
      if (!s) throw UsageError("unknown --strategy " + strategy);
      spec.pipeline.strategy = *s;
      std::vector<int> gs;
      for (const auto& x : split_list(group_list)) gs.push_back(std::stoi(x));
      csv = summaries_csv(ablate_groups(spec, gs), "groups");
    } else if (study == "strategy") {
      csv = summaries_csv(ablate_strategies(spec, {AggregationStrategy::kMeanConf,
                                                   AggregationStrategy::kMaxConf,
                                                   AggregationStrategy::kMaxConfScaled}),
                          "strategy");
    } else {
      throw UsageError("--study must be 'groups' or 'strategy'");
    }
    const std::string path = output_or(g, "ablate_" + study + ".csv");
    write_text_atomic(csv, path);
    std::cout << csv;
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-group ensemble uncertainty pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags global;
  app.add_option("--seed", global.seed, "Random seed");
  app.add_option("--threads", global.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--output", global.output, "Output file (or directory for synth)");

  SynthCmd synth;
  PipelineCmd pipeline;
  EvaluateCmd evaluate_cmd;
  BenchCmd bench;
  AblateCmd ablate;
  synth.attach(app);
  pipeline.attach(app);
  evaluate_cmd.attach(app);
  bench.attach(app);
  ablate.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("synth")) return synth.run(global);
    if (app.got_subcommand("pipeline")) return pipeline.run(global);
    if (app.got_subcommand("evaluate")) return evaluate_cmd.run(global);
    if (app.got_subcommand("bench")) return bench.run(global);
    if (app.got_subcommand("ablate")) return ablate.run(global);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigurationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
