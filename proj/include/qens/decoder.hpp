#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "qens/detection.hpp"

namespace qens {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

struct DecoderConfig {
  int embed_dim = 64;
  int num_heads = 4;
  int num_layers = 2;
  int queries_per_group = 16;
  int num_groups = 5;
  int num_classes = 8;
  int feature_tokens = 64;
  // Hidden width of the feed-forward block; 0 means 4 * embed_dim.
  int ffn_dim = 0;
  double dropout_prob = 0.1;
  std::uint64_t weight_seed = 0;
  std::uint64_t dropout_seed = 0;

  int ffn_width() const { return ffn_dim > 0 ? ffn_dim : 4 * embed_dim; }
  int total_queries() const { return num_groups * queries_per_group; }
  // Throws ConfigurationError.
  void validate() const;
};

// Blocks attention between queries of different groups. entry(i, j) is true
// when query i may NOT attend to query j.
class AttentionMask {
 public:
  AttentionMask(int num_groups, int queries_per_group);

  int num_groups() const { return groups_; }
  int queries_per_group() const { return per_group_; }
  int size() const { return groups_ * per_group_; }
  bool blocked(int i, int j) const { return i / per_group_ != j / per_group_; }
  // W x W matrix with 1 for blocked pairs.
  Eigen::MatrixXi dense() const;
  // Additive pre-softmax bias: -inf where blocked, 0 elsewhere.
  Matrix additive_bias() const;

 private:
  int groups_;
  int per_group_;
};

AttentionMask build_group_mask(int num_groups, int queries_per_group);

struct Linear {
  Matrix weight;  // in x out
  RowVector bias;

  Matrix apply(const Matrix& x) const;
};

struct LayerNorm {
  RowVector gamma;
  RowVector beta;

  Matrix apply(const Matrix& x) const;
};

struct AttentionWeights {
  Linear q, k, v, out;
};

struct DecoderLayerWeights {
  AttentionWeights self_attn;
  AttentionWeights cross_attn;
  Linear ffn_in, ffn_out;
  LayerNorm norm_self, norm_cross, norm_ffn;
};

struct HeadWeights {
  Linear cls;
  Linear box_hidden1, box_hidden2, box_out;
};

// Learnable-query stand-ins: one N x d matrix per group.
struct QueryGroups {
  std::vector<Matrix> groups;

  int num_groups() const { return static_cast<int>(groups.size()); }
  int queries_per_group() const { return groups.empty() ? 0 : static_cast<int>(groups[0].rows()); }
  // Rows of all groups concatenated in group order.
  Matrix stacked() const;
};

// Untrained decoder: every parameter drawn from weight_seed, uniform in
// [-1/sqrt(d), 1/sqrt(d)]; layer-norm affine starts at identity.
struct DecoderWeights {
  DecoderConfig config;
  std::vector<DecoderLayerWeights> layers;
  HeadWeights heads;
  QueryGroups queries;  // config.num_groups learned query groups

  static DecoderWeights random(const DecoderConfig& config);

  nlohmann::json to_json() const;
  // Validates every matrix shape against the embedded config.
  static DecoderWeights from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static DecoderWeights load(const std::string& path);
};

// Stand-in for encoder output: F x d, uniform in [-1, 1].
Matrix random_features(const DecoderConfig& config, std::uint64_t seed);

enum class Layout { kMaskedJoint, kBatchedGroups, kSequentialGroups };

std::string_view to_string(Layout layout);
std::optional<Layout> parse_layout(std::string_view s);

// Deterministic or dropout with a given seed. Dropout masks are keyed by
// (seed, layer, sub-block, group, row, column) so every layout draws the same
// mask for a given group.
struct DropoutMode {
  bool active = false;
  std::uint64_t seed = 0;

  static DropoutMode off() { return {}; }
  static DropoutMode on(std::uint64_t seed) { return {true, seed}; }
};

// Decodes all query groups. `group_ids` (1-based, one per query group) keys
// the dropout masks; by default group g gets id g. Returns one N x d matrix per
// group.
std::vector<Matrix> decoder_forward(const DecoderWeights& weights, const Matrix& features,
                                    const QueryGroups& queries, const AttentionMask& mask,
                                    DropoutMode dropout, Layout layout,
                                    const std::vector<int>& group_ids = {});

// Classification (sigmoid per class) and box (3-layer MLP, logistic) heads.
std::vector<Detection> task_heads(const HeadWeights& heads, const Matrix& transformed,
                                  int group_index);

enum class EnsembleMode { kDeterministic, kGroupEnsemble, kMcDropout, kMcGroupEnsemble };

std::string_view to_string(EnsembleMode mode);
std::optional<EnsembleMode> parse_mode(std::string_view s);

// One forward pass producing G detection sets (1 for deterministic).
DetectionSetGroup run_ensemble_pass(const DecoderWeights& weights, const Matrix& features,
                                    EnsembleMode mode, Layout layout = Layout::kBatchedGroups);

}  // namespace qens
