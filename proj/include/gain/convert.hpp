#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "gain/graph.hpp"

GAIN_NAMESPACE_BEGIN

// Converters from public raw dataset layouts to the canonical files written
// by write_dataset().

struct ConvertReport {
  std::string format;
  std::size_t nodes = 0;
  std::size_t edges = 0;  // undirected pairs, self-loops included once
  std::size_t classes = 0;
  std::size_t graphs = 1;
  std::size_t features = 0;
  std::size_t train = 0, val = 0, test = 0;

  nlohmann::json to_json() const;
};

struct PubmedOptions {
  std::size_t val = 500;
  std::size_t test = 1000;
  std::uint64_t seed = 0;
};

/// Reads Pubmed-Diabetes.NODE.paper.tab and Pubmed-Diabetes.DIRECTED.cites.tab
/// from `raw_dir` (searching one `data/` level down as well). Class labels
/// 1..3 become 0..2. Nodes are split at random: `val` and `test` nodes, the
/// rest train.
Graph read_pubmed_diabetes(const std::filesystem::path& raw_dir, const PubmedOptions& options,
                           ConvertReport* report = nullptr);

/// Reads the node-link PPI layout ({train,valid,test}_graph.json plus
/// _feats.npy, _labels.npy, _graph_id.npy). The three files become one
/// disjoint union with the split taken from the file prefix.
Graph read_ppi(const std::filesystem::path& raw_dir, ConvertReport* report = nullptr);

/// Dispatches on `format` ("pubmed-diabetes" or "ppi"), writes the canonical
/// files to `out_dir` and returns the counts. Throws ConfigError for an
/// unknown format and DataError for malformed input.
ConvertReport convert_dataset(const std::filesystem::path& raw_dir, const std::string& format,
                              const std::filesystem::path& out_dir, std::uint64_t seed = 0);

GAIN_NAMESPACE_END
