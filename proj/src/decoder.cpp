#include "qens/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <span>

#include <nlohmann/json.hpp>

#include "qens/errors.hpp"
#include "qens/io.hpp"

namespace qens {
namespace {

constexpr double kLayerNormEps = 1e-5;

// Dropout sites inside one decoder layer.
enum DropoutSite : int { kSelfAttnOut = 0, kCrossAttnOut = 1, kFfnHidden = 2, kFfnOut = 3 };

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based uniform in [0,1): a pure function of its key.
double keyed_uniform(std::uint64_t seed, int layer, int site, int group, int row, int col) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(layer));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(site) << 32 | static_cast<std::uint32_t>(group)));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(row) << 32 | static_cast<std::uint32_t>(col)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Per-row identity of a stacked query matrix: which group it belongs to
// (dropout key) and its index inside that group.
struct RowKeys {
  std::vector<int> group_id;
  std::vector<int> local_row;
};

struct DropoutState {
  bool active = false;
  double p = 0.0;
  std::uint64_t seed = 0;
};

void apply_dropout(Matrix& x, const DropoutState& st, int layer, DropoutSite site,
                   const RowKeys& keys) {
  if (!st.active || st.p <= 0.0) return;
  const double scale = 1.0 / (1.0 - st.p);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int g = keys.group_id[r];
    const int lr = keys.local_row[r];
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double u = keyed_uniform(st.seed, layer, site, g, lr, static_cast<int>(c));
      x(r, c) = u < st.p ? 0.0 : x(r, c) * scale;
    }
  }
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const double mx = row.maxCoeff();
    double sum = 0.0;
    // exp of huge negatives is slow in the vectorized path; masked entries
    // (-inf) and full underflows are written as exact zeros instead.
    for (Eigen::Index c = 0; c < row.size(); ++c) {
      const double z = row[c] - mx;
      row[c] = z < -745.0 ? 0.0 : std::exp(z);
      sum += row[c];
    }
    row /= sum;
  }
}

// Scaled dot-product attention over already-projected q (R x d), k, v (S x d),
// heads concatenated. `bias`, when given, is R x S and added before softmax.
Matrix attend(const Matrix& q, const Matrix& k, const Matrix& v, int heads, const Matrix* bias) {
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out(q.rows(), d);
  for (int h = 0; h < heads; ++h) {
    Matrix scores = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    if (bias != nullptr) scores += *bias;
    softmax_rows(scores);
    out.middleCols(h * dh, dh).noalias() = scores * v.middleCols(h * dh, dh);
  }
  return out;
}

enum class SelfAttnKind { kFull, kMasked, kBlocked };

// Runs every decoder layer over a stack of query rows.
Matrix decode_rows(const DecoderWeights& w, const Matrix& features, Matrix x, const RowKeys& keys,
                   SelfAttnKind kind, int block_rows, const Matrix* bias, const DropoutState& drop) {
  const int heads = w.config.num_heads;
  for (int l = 0; l < static_cast<int>(w.layers.size()); ++l) {
    const auto& L = w.layers[l];

    // Self-attention among queries.
    const Matrix q = L.self_attn.q.apply(x);
    const Matrix k = L.self_attn.k.apply(x);
    const Matrix v = L.self_attn.v.apply(x);
    Matrix sa;
    switch (kind) {
      case SelfAttnKind::kFull:
        sa = attend(q, k, v, heads, nullptr);
        break;
      case SelfAttnKind::kMasked:
        sa = attend(q, k, v, heads, bias);
        break;
      case SelfAttnKind::kBlocked: {
        sa.resize(x.rows(), x.cols());
        for (Eigen::Index r0 = 0; r0 < x.rows(); r0 += block_rows) {
          sa.middleRows(r0, block_rows) =
              attend(q.middleRows(r0, block_rows), k.middleRows(r0, block_rows),
                     v.middleRows(r0, block_rows), heads, nullptr);
        }
        break;
      }
    }
    sa = L.self_attn.out.apply(sa);
    apply_dropout(sa, drop, l, kSelfAttnOut, keys);
    x = L.norm_self.apply(x + sa);

    // Cross-attention onto image features; each query attends independently.
    const Matrix cq = L.cross_attn.q.apply(x);
    const Matrix ck = L.cross_attn.k.apply(features);
    const Matrix cv = L.cross_attn.v.apply(features);
    // Rows are independent here, so tile by block to keep scores in cache.
    Matrix ctx(x.rows(), x.cols());
    for (Eigen::Index r0 = 0; r0 < x.rows(); r0 += block_rows) {
      const Eigen::Index n = std::min<Eigen::Index>(block_rows, x.rows() - r0);
      ctx.middleRows(r0, n) = attend(cq.middleRows(r0, n), ck, cv, heads, nullptr);
    }
    Matrix ca = L.cross_attn.out.apply(ctx);
    apply_dropout(ca, drop, l, kCrossAttnOut, keys);
    x = L.norm_cross.apply(x + ca);

    Matrix hidden = L.ffn_in.apply(x).cwiseMax(0.0);
    apply_dropout(hidden, drop, l, kFfnHidden, keys);
    Matrix ff = L.ffn_out.apply(hidden);
    apply_dropout(ff, drop, l, kFfnOut, keys);
    x = L.norm_ffn.apply(x + ff);
  }
  return x;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// --- JSON helpers -------------------------------------------------------

nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (r != rows || c != cols || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw DimensionError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(r) + "x" + std::to_string(c));
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

RowVector vector_from(const nlohmann::json& j, Eigen::Index n, const std::string& what) {
  const auto data = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != n) {
    throw DimensionError(what + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(data.size()));
  }
  return Eigen::Map<const RowVector>(data.data(), n);
}

nlohmann::json linear_json(const Linear& l) {
  return {{"weight", matrix_json(l.weight)},
          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}};
}

Linear linear_from(const nlohmann::json& j, Eigen::Index in, Eigen::Index out,
                   const std::string& what) {
  return {matrix_from(j.at("weight"), in, out, what + ".weight"),
          vector_from(j.at("bias"), out, what + ".bias")};
}

nlohmann::json norm_json(const LayerNorm& n) {
  return {{"gamma", std::vector<double>(n.gamma.data(), n.gamma.data() + n.gamma.size())},
          {"beta", std::vector<double>(n.beta.data(), n.beta.data() + n.beta.size())}};
}

LayerNorm norm_from(const nlohmann::json& j, Eigen::Index d, const std::string& what) {
  return {vector_from(j.at("gamma"), d, what + ".gamma"),
          vector_from(j.at("beta"), d, what + ".beta")};
}

nlohmann::json attn_json(const AttentionWeights& a) {
  return {{"q", linear_json(a.q)},
          {"k", linear_json(a.k)},
          {"v", linear_json(a.v)},
          {"out", linear_json(a.out)}};
}

AttentionWeights attn_from(const nlohmann::json& j, Eigen::Index d, const std::string& what) {
  return {linear_from(j.at("q"), d, d, what + ".q"), linear_from(j.at("k"), d, d, what + ".k"),
          linear_from(j.at("v"), d, d, what + ".v"),
          linear_from(j.at("out"), d, d, what + ".out")};
}

nlohmann::json config_json(const DecoderConfig& c) {
  return {{"embed_dim", c.embed_dim},         {"num_heads", c.num_heads},
          {"num_layers", c.num_layers},       {"queries_per_group", c.queries_per_group},
          {"num_groups", c.num_groups},       {"num_classes", c.num_classes},
          {"feature_tokens", c.feature_tokens}, {"ffn_dim", c.ffn_width()},
          {"dropout_prob", c.dropout_prob},   {"weight_seed", c.weight_seed},
          {"dropout_seed", c.dropout_seed}};
}

DecoderConfig config_from(const nlohmann::json& j) {
  DecoderConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.queries_per_group = j.at("queries_per_group").get<int>();
  c.num_groups = j.at("num_groups").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.feature_tokens = j.at("feature_tokens").get<int>();
  c.ffn_dim = j.value("ffn_dim", 0);
  c.dropout_prob = j.at("dropout_prob").get<double>();
  c.weight_seed = j.value("weight_seed", std::uint64_t{0});
  c.dropout_seed = j.value("dropout_seed", std::uint64_t{0});
  c.validate();
  return c;
}

}  // namespace

void DecoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigurationError(msg); };
  if (embed_dim <= 0) fail("embed_dim must be positive");
  if (num_heads <= 0 || embed_dim % num_heads != 0) fail("num_heads must divide embed_dim");
  if (num_layers < 0) fail("num_layers must be >= 0");
  if (queries_per_group < 1) fail("queries_per_group must be >= 1");
  if (num_groups < 1) fail("num_groups must be >= 1");
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (feature_tokens < 1) fail("feature_tokens must be >= 1");
  if (ffn_dim < 0) fail("ffn_dim must be >= 0");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) fail("dropout_prob must lie in [0,1)");
}

AttentionMask::AttentionMask(int num_groups, int queries_per_group)
    : groups_(num_groups), per_group_(queries_per_group) {
  if (num_groups < 1 || queries_per_group < 1) {
    throw ConfigurationError("attention mask needs G >= 1 and N >= 1");
  }
}

Eigen::MatrixXi AttentionMask::dense() const {
  const int w = size();
  Eigen::MatrixXi m(w, w);
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) m(i, j) = blocked(i, j) ? 1 : 0;
  return m;
}

Matrix AttentionMask::additive_bias() const {
  const int w = size();
  Matrix b(w, w);
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j)
      b(i, j) = blocked(i, j) ? -std::numeric_limits<double>::infinity() : 0.0;
  return b;
}

AttentionMask build_group_mask(int num_groups, int queries_per_group) {
  return AttentionMask(num_groups, queries_per_group);
}

Matrix Linear::apply(const Matrix& x) const {
  Matrix y = x * weight;
  y.rowwise() += bias;
  return y;
}

Matrix LayerNorm::apply(const Matrix& x) const {
  Matrix y(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const RowVector centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / n;
    y.row(r) = (centered / std::sqrt(var + kLayerNormEps)).cwiseProduct(gamma) + beta;
  }
  return y;
}

Matrix QueryGroups::stacked() const {
  if (groups.empty()) return Matrix(0, 0);
  Matrix out(groups.size() * groups[0].rows(), groups[0].cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    out.middleRows(g * groups[0].rows(), groups[0].rows()) = groups[g];
  }
  return out;
}

DecoderWeights DecoderWeights::random(const DecoderConfig& config) {
  config.validate();
  const int d = config.embed_dim;
  const int ff = config.ffn_width();
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::mt19937_64 rng(config.weight_seed);
  std::uniform_real_distribution<double> param(-bound, bound);
  std::uniform_real_distribution<double> query(-1.0, 1.0);

  auto linear = [&](int in, int out) {
    Linear l{Matrix(in, out), RowVector(out)};
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = param(rng);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = param(rng);
    return l;
  };
  auto norm = [&] { return LayerNorm{RowVector::Ones(d), RowVector::Zero(d)}; };
  auto attn = [&] { return AttentionWeights{linear(d, d), linear(d, d), linear(d, d), linear(d, d)}; };

  DecoderWeights w;
  w.config = config;
  for (int l = 0; l < config.num_layers; ++l) {
    DecoderLayerWeights layer{attn(), attn(), linear(d, ff), linear(ff, d), norm(), norm(), norm()};
    w.layers.push_back(std::move(layer));
  }
  w.heads = HeadWeights{linear(d, config.num_classes), linear(d, d), linear(d, d), linear(d, 4)};
  for (int g = 0; g < config.num_groups; ++g) {
    Matrix q(config.queries_per_group, d);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = query(rng);
    w.queries.groups.push_back(std::move(q));
  }
  return w;
}

nlohmann::json DecoderWeights::to_json() const {
  nlohmann::json j;
  j["config"] = config_json(config);
  j["layers"] = nlohmann::json::array();
  for (const auto& L : layers) {
    j["layers"].push_back({{"self_attn", attn_json(L.self_attn)},
                           {"cross_attn", attn_json(L.cross_attn)},
                           {"ffn_in", linear_json(L.ffn_in)},
                           {"ffn_out", linear_json(L.ffn_out)},
                           {"norm_self", norm_json(L.norm_self)},
                           {"norm_cross", norm_json(L.norm_cross)},
                           {"norm_ffn", norm_json(L.norm_ffn)}});
  }
  j["heads"] = {{"cls", linear_json(heads.cls)},
                {"box_hidden1", linear_json(heads.box_hidden1)},
                {"box_hidden2", linear_json(heads.box_hidden2)},
                {"box_out", linear_json(heads.box_out)}};
  j["queries"] = nlohmann::json::array();
  for (const auto& q : queries.groups) j["queries"].push_back(matrix_json(q));
  return j;
}

DecoderWeights DecoderWeights::from_json(const nlohmann::json& j) {
  try {
    DecoderWeights w;
    w.config = config_from(j.at("config"));
    const auto& c = w.config;
    const int d = c.embed_dim;
    const int ff = c.ffn_width();
    const auto& layers = j.at("layers");
    if (static_cast<int>(layers.size()) != c.num_layers) {
      throw DimensionError("weights: expected " + std::to_string(c.num_layers) + " layers, got " +
                           std::to_string(layers.size()));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      const std::string p = "layers[" + std::to_string(l) + "]";
      w.layers.push_back({attn_from(L.at("self_attn"), d, p + ".self_attn"),
                          attn_from(L.at("cross_attn"), d, p + ".cross_attn"),
                          linear_from(L.at("ffn_in"), d, ff, p + ".ffn_in"),
                          linear_from(L.at("ffn_out"), ff, d, p + ".ffn_out"),
                          norm_from(L.at("norm_self"), d, p + ".norm_self"),
                          norm_from(L.at("norm_cross"), d, p + ".norm_cross"),
                          norm_from(L.at("norm_ffn"), d, p + ".norm_ffn")});
    }
    const auto& h = j.at("heads");
    w.heads = {linear_from(h.at("cls"), d, c.num_classes, "heads.cls"),
               linear_from(h.at("box_hidden1"), d, d, "heads.box_hidden1"),
               linear_from(h.at("box_hidden2"), d, d, "heads.box_hidden2"),
               linear_from(h.at("box_out"), d, 4, "heads.box_out")};
    const auto& qs = j.at("queries");
    if (static_cast<int>(qs.size()) != c.num_groups) {
      throw DimensionError("weights: expected " + std::to_string(c.num_groups) + " query groups");
    }
    for (std::size_t g = 0; g < qs.size(); ++g) {
      w.queries.groups.push_back(
          matrix_from(qs[g], c.queries_per_group, d, "queries[" + std::to_string(g) + "]"));
    }
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("weights: ") + e.what());
  }
}

void DecoderWeights::save(const std::string& path) const { write_json_atomic(to_json(), path); }

DecoderWeights DecoderWeights::load(const std::string& path) {
  return from_json(read_json_file(path));
}

Matrix random_features(const DecoderConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix f(config.feature_tokens, config.embed_dim);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = u(rng);
  return f;
}

std::string_view to_string(Layout layout) {
  switch (layout) {
    case Layout::kMaskedJoint: return "masked_joint";
    case Layout::kBatchedGroups: return "batched_groups";
    case Layout::kSequentialGroups: return "sequential_groups";
  }
  return "?";
}

std::optional<Layout> parse_layout(std::string_view s) {
  for (Layout l : {Layout::kMaskedJoint, Layout::kBatchedGroups, Layout::kSequentialGroups}) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

std::vector<Matrix> decoder_forward(const DecoderWeights& weights, const Matrix& features,
                                    const QueryGroups& queries, const AttentionMask& mask,
                                    DropoutMode dropout, Layout layout,
                                    const std::vector<int>& group_ids) {
  const auto& cfg = weights.config;
  const int G = queries.num_groups();
  const int N = queries.queries_per_group();
  if (G < 1) throw ConfigurationError("decoder_forward needs at least one query group");
  if (features.cols() != cfg.embed_dim || features.rows() < 1) {
    throw DimensionError("features must be F x " + std::to_string(cfg.embed_dim));
  }
  for (const auto& g : queries.groups) {
    if (g.rows() != N || g.cols() != cfg.embed_dim) {
      throw DimensionError("every query group must be " + std::to_string(N) + " x " +
                           std::to_string(cfg.embed_dim));
    }
  }
  if (mask.num_groups() != G || mask.queries_per_group() != N) {
    throw ConfigurationError("attention mask is for G=" + std::to_string(mask.num_groups()) +
                             ", N=" + std::to_string(mask.queries_per_group()) + " but got G=" +
                             std::to_string(G) + ", N=" + std::to_string(N));
  }
  if (!group_ids.empty() && static_cast<int>(group_ids.size()) != G) {
    throw ConfigurationError("group_ids must have one entry per query group");
  }
  auto gid = [&](int g) { return group_ids.empty() ? g + 1 : group_ids[g]; };
  const DropoutState drop{dropout.active, cfg.dropout_prob, dropout.seed};

  auto keys_for = [&](int first, int count) {
    RowKeys k;
    for (int g = first; g < first + count; ++g) {
      for (int r = 0; r < N; ++r) {
        k.group_id.push_back(gid(g));
        k.local_row.push_back(r);
      }
    }
    return k;
  };

  std::vector<Matrix> out;
  out.reserve(G);
  if (layout == Layout::kSequentialGroups) {
    for (int g = 0; g < G; ++g) {
      out.push_back(decode_rows(weights, features, queries.groups[g], keys_for(g, 1),
                                SelfAttnKind::kFull, N, nullptr, drop));
    }
    return out;
  }

  Matrix joint;
  if (layout == Layout::kMaskedJoint) {
    const Matrix bias = mask.additive_bias();
    joint = decode_rows(weights, features, queries.stacked(), keys_for(0, G),
                        SelfAttnKind::kMasked, N, &bias, drop);
  } else {
    joint = decode_rows(weights, features, queries.stacked(), keys_for(0, G),
                        SelfAttnKind::kBlocked, N, nullptr, drop);
  }
  for (int g = 0; g < G; ++g) out.push_back(joint.middleRows(g * N, N));
  return out;
}

std::vector<Detection> task_heads(const HeadWeights& heads, const Matrix& transformed,
                                  int group_index) {
  const Matrix logits = heads.cls.apply(transformed);
  const Matrix h1 = heads.box_hidden1.apply(transformed).cwiseMax(0.0);
  const Matrix h2 = heads.box_hidden2.apply(h1).cwiseMax(0.0);
  const Matrix box = heads.box_out.apply(h2);

  std::vector<Detection> dets;
  dets.reserve(transformed.rows());
  for (Eigen::Index r = 0; r < transformed.rows(); ++r) {
    int best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k) {
      if (logits(r, k) > logits(r, best)) best = static_cast<int>(k);
    }
    dets.push_back(Detection{Box::cxcywh(logistic(box(r, 0)), logistic(box(r, 1)),
                                         logistic(box(r, 2)), logistic(box(r, 3))),
                             best + 1, logistic(logits(r, best)), group_index,
                             static_cast<int>(r)});
  }
  return dets;
}

std::string_view to_string(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::kDeterministic: return "deterministic";
    case EnsembleMode::kGroupEnsemble: return "group_ensemble";
    case EnsembleMode::kMcDropout: return "mc_dropout";
    case EnsembleMode::kMcGroupEnsemble: return "mc_group_ensemble";
  }
  return "?";
}

std::optional<EnsembleMode> parse_mode(std::string_view s) {
  for (EnsembleMode m : {EnsembleMode::kDeterministic, EnsembleMode::kGroupEnsemble,
                         EnsembleMode::kMcDropout, EnsembleMode::kMcGroupEnsemble}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

DetectionSetGroup run_ensemble_pass(const DecoderWeights& weights, const Matrix& features,
                                    EnsembleMode mode, Layout layout) {
  const auto& cfg = weights.config;
  cfg.validate();
  if (weights.queries.num_groups() < 1) {
    throw ConfigurationError("weights carry no query groups");
  }
  const int G = mode == EnsembleMode::kDeterministic ? 1 : cfg.num_groups;
  const bool distinct = mode == EnsembleMode::kGroupEnsemble || mode == EnsembleMode::kMcGroupEnsemble;
  if (distinct && weights.queries.num_groups() < G) {
    throw ConfigurationError("mode " + std::string(to_string(mode)) + " needs " +
                             std::to_string(G) + " query groups, weights have " +
                             std::to_string(weights.queries.num_groups()));
  }

  QueryGroups queries;
  for (int g = 0; g < G; ++g) {
    queries.groups.push_back(weights.queries.groups[distinct ? g : 0]);
  }
  const bool stochastic = mode == EnsembleMode::kMcDropout || mode == EnsembleMode::kMcGroupEnsemble;
  const DropoutMode dropout = stochastic ? DropoutMode::on(cfg.dropout_seed) : DropoutMode::off();

  const auto mask = build_group_mask(G, cfg.queries_per_group);
  const auto transformed = decoder_forward(weights, features, queries, mask, dropout, layout);

  DetectionSetGroup out;
  for (int g = 0; g < G; ++g) out.sets.push_back(task_heads(weights.heads, transformed[g], g + 1));
  return out;
}

}  // namespace qens
