#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "gain/adam.hpp"
#include "gain/parameters.hpp"

GAIN_NAMESPACE_BEGIN

// Checkpoint layout:
//   "GAINCKPT"                 8-byte magic
//   u64 (LE)                   manifest length in bytes
//   manifest                   UTF-8 JSON
//   payload                    float32 LE values of every parameter, in
//                              manifest order
//
// Manifest keys: "format_version", "parameters" ([{name, shape}]), "adam"
// (step, learning_rate, beta1, beta2, delta) and a free-form "metadata"
// object (architecture, config, metrics).

struct Checkpoint {
  ParameterStore params;
  nlohmann::json adam;
  nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const AdamState* adam, const nlohmann::json& metadata);

Checkpoint load_checkpoint(const std::filesystem::path& path);

GAIN_NAMESPACE_END
