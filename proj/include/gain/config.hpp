#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "gain/trainer.hpp"

GAIN_NAMESPACE_BEGIN

// JSON run configuration. Every key is optional; unknown keys are rejected
// so typos surface as usage errors.
//
// {
//   "epochs": 100, "batch_size": 0, "learning_rate": 0.002, "lr_floor": 5e-5,
//   "lr_decay": 0.5, "lambda1": 0.008, "lambda2": 0.4, "loss_all_layers": false,
//   "sample_sizes": [25, 10], "layer_dims": [64, 32],
//   "aggregators": ["mean", "max", "importance"], "use_cross": true,
//   "use_autoencoder": true, "edge_hidden": 64, "heuristic": "jaccard",
//   "epsilon": 1e-6, "seed": 0, "patience": 10, "task": "multiclass",
//   "workers": 1, "redraw_eval": false
// }

nlohmann::json to_json(const TrainConfig& cfg);

/// Applies the keys of `j` on top of `base`. Throws ConfigError on unknown
/// keys, wrong types or invalid values.
TrainConfig apply_config(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json read_json_file(const std::filesystem::path& path);

std::vector<Aggregator> parse_aggregator_list(std::string_view csv);
std::vector<std::size_t> parse_size_list(std::string_view csv);

GAIN_NAMESPACE_END
