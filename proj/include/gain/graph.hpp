#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gain/tensor.hpp"

GAIN_NAMESPACE_BEGIN

enum class Split : std::uint8_t { none, train, val, test };

const char* to_string(Split s) noexcept;
std::optional<Split> parse_split(std::string_view s) noexcept;

enum class LabelKind : std::uint8_t { none, single, multi };

/// Node labels: a class index per node (single) or a 0/1 row per node
/// (multi). Nodes without a label are marked absent.
struct Labels {
  LabelKind kind = LabelKind::none;
  std::size_t num_classes = 0;
  std::vector<std::int32_t> single;  // -1 when absent
  std::vector<std::uint8_t> multi;   // num_nodes x num_classes
  std::vector<std::uint8_t> present;

  bool has(NodeId v) const { return v < present.size() && present[v] != 0; }
  std::span<const std::uint8_t> multi_row(NodeId v) const {
    return {multi.data() + static_cast<std::size_t>(v) * num_classes, num_classes};
  }
};

struct LabeledEdge {
  NodeId src = 0;
  NodeId dst = 0;
  int label = 0;
  Split split = Split::none;

  friend bool operator==(const LabeledEdge&, const LabeledEdge&) = default;
};

struct WeightedEdge {
  NodeId src = 0;
  NodeId dst = 0;
  double weight = 1.0;
};

struct Neighborhood {
  std::span<const NodeId> nodes;
  std::span<const double> weights;
  std::size_t size() const noexcept { return nodes.size(); }
  bool empty() const noexcept { return nodes.empty(); }
};

/// Immutable CSR graph plus its node payload. Neighbor lists are sorted by
/// node index. Safe for concurrent reads.
class Graph {
 public:
  Graph() = default;

  /// Builds the CSR. Undirected edges become two arcs (a self-loop stays a
  /// single arc); repeated arcs merge by summing their weights.
  static Graph from_edges(std::size_t num_nodes, std::span<const WeightedEdge> edges,
                          bool undirected = true);

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_arcs() const noexcept { return neighbors_.size(); }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  Neighborhood neighbors(NodeId v) const;
  bool has_arc(NodeId u, NodeId v) const;
  bool weighted() const noexcept { return weighted_; }

  std::span<const std::size_t> csr_offsets() const noexcept { return offsets_; }
  std::span<const NodeId> csr_neighbors() const noexcept { return neighbors_; }
  std::span<const double> csr_weights() const noexcept { return weights_; }

  /// Checks every structural and payload invariant; throws DataError.
  void validate() const;

  Tensor features;                      // num_nodes x f
  Labels labels;
  std::vector<Split> node_split;        // empty or num_nodes entries
  std::vector<LabeledEdge> labeled_edges;
  std::vector<std::uint8_t> node_kind;  // empty unless bipartite
  bool homogeneous = true;

  std::size_t feature_width() const noexcept { return features.cols(); }
  std::vector<NodeId> nodes_in(Split s) const;
  std::vector<LabeledEdge> edges_in(Split s) const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> neighbors_;
  std::vector<double> weights_;
  bool weighted_ = false;
};

inline Neighborhood neighbors(const Graph& g, NodeId v) { return g.neighbors(v); }

struct GraphFiles {
  std::filesystem::path topology;
  std::filesystem::path features;
  std::filesystem::path labels;
  std::filesystem::path splits;
  std::filesystem::path node_kinds;  // optional: node<TAB>kind-name
};

struct LoadOptions {
  /// Forces the label reading; `none` auto-detects (multilabel when every
  /// label is a 0/1 string of one common length >= 2).
  LabelKind label_kind = LabelKind::none;
  bool undirected = true;
  /// Allows same-kind edges when node kinds are given.
  bool homogeneous = false;
};

/// Loads and validates a graph. Errors name the file and line.
Graph load_graph(const GraphFiles& files, const LoadOptions& options = {});

/// Canonical file names inside a dataset directory.
GraphFiles dataset_files(const std::filesystem::path& dir);

std::vector<WeightedEdge> read_topology(const std::filesystem::path& path, std::size_t num_nodes);
void write_topology(const std::filesystem::path& path, const Graph& g);
void write_labels(const std::filesystem::path& path, const Graph& g);
void write_splits(const std::filesystem::path& path, const Graph& g);
/// Writes topology, features, labels and splits under `dir` with the
/// canonical names of dataset_files().
void write_dataset(const std::filesystem::path& dir, const Graph& g);

/// Stochastic block model with class-informative Gaussian features.
struct SyntheticSpec {
  std::vector<std::size_t> block_sizes{50, 50};
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  /// Norm of each class mean vector.
  double class_separation = 1.0;
  double noise_std = 1.0;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  /// When > 0, also emits this many labeled node pairs for the edge task:
  /// label 1 for same-block pairs, 0 otherwise.
  std::size_t labeled_edges = 0;
};

Graph generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

GAIN_NAMESPACE_END
