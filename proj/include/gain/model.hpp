#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gain/graph.hpp"
#include "gain/ops.hpp"
#include "gain/parameters.hpp"
#include "gain/sampler.hpp"

GAIN_NAMESPACE_BEGIN

enum class Aggregator : std::uint8_t { mean_pool, max_pool, importance_pool };
enum class TaskMode : std::uint8_t { multilabel, multiclass, edge_binary };

const char* to_string(Aggregator a) noexcept;
std::optional<Aggregator> parse_aggregator(std::string_view s) noexcept;
const char* to_string(TaskMode m) noexcept;
std::optional<TaskMode> parse_task_mode(std::string_view s) noexcept;

/// Architecture of a K-layer model. Layer k maps width in_k to 2*d_k, with
/// in_1 = input_dim and in_k = 2*d_(k-1).
struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> layer_dims{64, 32};
  /// Per-hop neighbor caps; fixes the importance-gate length per layer.
  std::vector<std::size_t> sample_sizes{25, 10};
  std::vector<Aggregator> aggregators{Aggregator::mean_pool, Aggregator::max_pool,
                                      Aggregator::importance_pool};
  bool use_cross = true;        // off: the explicit-cross ablation
  bool use_autoencoder = true;  // off: the no-autoencoder ablation
  TaskMode task = TaskMode::multiclass;
  std::size_t num_classes = 2;
  std::size_t edge_hidden = 64;

  std::size_t depth() const noexcept { return layer_dims.size(); }
  std::size_t layer_input_dim(std::size_t k) const;  // k is 1-based
  std::size_t embedding_dim() const { return 2 * layer_dims.back(); }
  bool has(Aggregator a) const;
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Tape handles of one GRU direction's six matrices.
struct GruWeights {
  Var w_z, u_z, w_r, u_r, w, u;
};

/// Per-layer intermediates kept for the loss and for inspection.
struct LayerAux {
  Var h_v;      // center vectors entering the layer (n x in)
  Var h_n;      // attention-fused neighborhood vectors (n x in)
  Var enc_v;    // encoder(h_v); h_v itself without the autoencoder
  Var enc_n;
  Var dec_v;    // decoder(enc_v); invalid without the autoencoder
  Var dec_n;
  Tensor attention;  // n x |aggregators|, rows sum to 1
  std::vector<NodeId> nodes;
};

struct ForwardResult {
  Var embeddings;  // |B^K| x 2 d_K, unit rows
  std::vector<LayerAux> layers;
};

// Building blocks, exposed for testing and ablations.

/// Pools each segment of `rows` (valid slots of one node) into one vector.
Var aggregate(Aggregator agg, Var rows, std::span<const std::size_t> offsets, Var gates);

/// Aggregator-level attention. theta: FC shared by h_v and every
/// aggregator output; alpha: FC on their concatenation giving one score.
/// Returns the fused vector and the n x A attention matrix.
std::pair<Var, Var> attention_fuse(Var h_v, std::span<const Var> aggregated, Var theta_w,
                                   Var theta_b, Var alpha_w, Var alpha_b);

/// relu(x W + b).
Var dense_relu(Var x, Var w, Var b);

/// Rank-1 cross in associative form: h_v * (h_n . w1) and h_n * (h_v . w2).
std::pair<Var, Var> cross(Var enc_v, Var enc_n, Var w1, Var w2);

/// Two-step GRU over (a, b): z, r gates from a and b; output
/// (1 - z) o b + z o tanh(a W + (r o b) U).
Var gru_fuse(Var a, Var b, const GruWeights& w);

class GainModel {
 public:
  /// Glorot-uniform matrices, zero biases and gates.
  GainModel(ModelConfig config, std::uint64_t seed);
  /// Adopts existing parameters; throws ConfigError on missing names or
  /// shape mismatches.
  GainModel(ModelConfig config, ParameterStore params);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  /// Runs layer k (1-based) for the first `hop.offsets.size()-1` rows of
  /// h_prev. Nodes without sampled neighbors use their own row.
  Var layer_forward(std::size_t k, Var h_prev, const HopSamples& hop, LayerAux* aux) const;

  /// All K layers followed by row L2-normalization.
  ForwardResult forward(Tape& tape, const Graph& g, const MiniBatch& mb) const;

  /// Class probabilities (sigmoid or softmax) for node tasks.
  Var node_probabilities(Var embeddings) const;
  /// Edge probability from the two endpoint embeddings (n x 1).
  Var edge_probabilities(Var src, Var dst) const;

  /// Parameter name prefix of layer k, e.g. "layer1.".
  static std::string layer_prefix(std::size_t k);

 private:
  void init_parameters(std::uint64_t seed);
  Var param(Tape& t, const std::string& name) const { return t.parameter(params_.get(name)); }

  ModelConfig config_;
  ParameterStore params_;
};

GAIN_NAMESPACE_END
