#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gain/adam.hpp"
#include "gain/graph.hpp"
#include "gain/model.hpp"
#include "gain/objective.hpp"
#include "gain/sampler.hpp"

GAIN_NAMESPACE_BEGIN

struct TrainConfig {
  std::size_t epochs = 100;
  /// 0 picks 512 for node tasks and 1024 for edge tasks.
  std::size_t batch_size = 0;
  double learning_rate = 2e-3;
  double lr_floor = 5e-5;
  double lr_decay = 0.5;
  double lambda1 = 0.008;
  double lambda2 = 0.4;
  bool loss_all_layers = false;
  std::vector<std::size_t> sample_sizes{25, 10};
  std::vector<std::size_t> layer_dims{64, 32};
  std::vector<Aggregator> aggregators{Aggregator::mean_pool, Aggregator::max_pool,
                                      Aggregator::importance_pool};
  bool use_cross = true;
  bool use_autoencoder = true;
  std::size_t edge_hidden = 64;
  Heuristic heuristic = Heuristic::jaccard;
  double epsilon = 1e-6;
  std::uint64_t seed = 0;
  std::size_t patience = 10;
  /// Unset: inferred from the graph (edges, then multi or single labels).
  std::optional<TaskMode> task;
  std::size_t workers = 1;
  /// Redraw neighbor samples on every evaluation instead of a fixed stream.
  bool redraw_eval = false;

  void validate() const;
  std::size_t effective_batch_size(TaskMode mode) const;
  SamplerConfig sampler_config() const;
  ModelConfig model_config(const Graph& g) const;
};

TaskMode infer_task(const Graph& g, const std::optional<TaskMode>& requested);

/// Multiplies the rate by `decay` after every epoch whose monitored metric
/// did not improve, never going below `floor`.
class LrSchedule {
 public:
  LrSchedule(double initial, double decay, double floor);
  double rate() const noexcept { return rate_; }
  double step(bool improved);

 private:
  double rate_, decay_, floor_;
};

struct EvalOptions {
  SamplerConfig sampler;
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
  /// Sampling stream index; a fixed value makes repeated evaluations equal.
  std::uint64_t draw = 0;
  /// Keep per-layer attention matrices (rows follow the evaluated items).
  bool keep_attention = false;
};

struct EvalResult {
  Metrics metrics;
  Tensor probs;
  Tensor targets;
  std::vector<Tensor> attention;  // per layer, filled when requested
};

/// Labeled items of a split as prediction targets.
struct SplitItems {
  std::vector<NodeId> nodes;       // node tasks
  std::vector<LabeledEdge> edges;  // edge task
  std::size_t size() const noexcept { return nodes.size() + edges.size(); }
};

SplitItems split_items(const Graph& g, Split split, TaskMode mode);

/// Targets for a node batch (n x C) or an edge batch (n x 1).
Tensor node_targets(const Graph& g, std::span<const NodeId> nodes, TaskMode mode);
Tensor edge_targets(std::span<const LabeledEdge> edges);

/// Inference pass (no gradient closures). Throws ConfigError on an empty
/// split.
EvalResult evaluate(const Graph& g, const GainModel& model, Split split, const EvalOptions& options);
EvalResult evaluate_items(const Graph& g, const GainModel& model, const SplitItems& items,
                          const EvalOptions& options);

/// L2-normalized embeddings of `nodes`, one row per entry in order.
Tensor embed(const Graph& g, const GainModel& model, std::span<const NodeId> nodes,
             const EvalOptions& options);

struct TrainOutputs {
  /// JSON lines history, one object per epoch.
  std::optional<std::filesystem::path> history;
  /// Best-validation checkpoint.
  std::optional<std::filesystem::path> checkpoint;
};

struct TrainResult {
  GainModel model;  // parameters of the best validation epoch
  std::vector<nlohmann::json> history;
  std::size_t best_epoch = 0;
  double best_metric = 0;
  std::size_t epochs_run = 0;
  AdamState adam;
};

/// Monitored validation value: micro-F1 for node tasks, AUC for edges
/// (0.5 when undefined).
double monitored_metric(const Metrics& m, TaskMode mode);

TrainResult train(const Graph& g, const TrainConfig& cfg, const TrainOutputs& outputs = {});

/// Checkpoint metadata describing the model and run.
nlohmann::json checkpoint_metadata(const ModelConfig& model, const TrainConfig& cfg,
                                   const nlohmann::json& extra);

struct MeanStd {
  double mean = 0;
  double std = 0;  // population standard deviation
};
MeanStd mean_std(std::span<const double> values);

struct SeedRun {
  std::uint64_t seed = 0;
  double val_metric = 0;
  Metrics test;
};

struct MultiSeedResult {
  std::vector<SeedRun> runs;
  MeanStd test_metric;
  nlohmann::json to_json() const;
};

/// Trains one model per seed and scores each on the test split.
MultiSeedResult train_seeds(const Graph& g, const TrainConfig& cfg, std::span<const std::uint64_t> seeds);

GAIN_NAMESPACE_END
