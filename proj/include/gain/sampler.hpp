#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gain/graph.hpp"

GAIN_NAMESPACE_BEGIN

using Rng = std::mt19937_64;

enum class Heuristic : std::uint8_t { jaccard, common_neighbors, degree, uniform };

const char* to_string(Heuristic h) noexcept;
/// Accepts "jaccard", "cn"/"common_neighbors", "degree", "uniform".
std::optional<Heuristic> parse_heuristic(std::string_view s) noexcept;

struct SamplerConfig {
  Heuristic heuristic = Heuristic::jaccard;
  double epsilon = 1e-6;
  /// Per-hop caps S_1..S_K; sizes[k-1] bounds the neighbors sampled for
  /// nodes of frontier k.
  std::vector<std::size_t> sizes{25, 10};
  std::uint64_t seed = 0;

  std::size_t hops() const noexcept { return sizes.size(); }
  /// Throws ConfigError on S_k == 0, epsilon < 0, or epsilon == 0 with a
  /// heuristic whose scores can all be zero.
  void validate() const;
};

/// |N(v) n N(i)| / |N(v) u N(i)|, 0 when the union is empty.
double jaccard(const Graph& g, NodeId v, NodeId i);
std::size_t common_neighbors(const Graph& g, NodeId v, NodeId i);

/// (score_j * w_j + eps) / sum over j. Throws std::domain_error when the
/// denominator is zero.
std::vector<double> normalize_scores(std::span<const double> scores,
                                     std::span<const double> weights, double epsilon);

/// Sampling distribution over N(v) in CSR order; nullopt when v is isolated.
std::optional<std::vector<double>> sampling_probabilities(const Graph& g, NodeId v,
                                                          const SamplerConfig& cfg);

/// Indices of `count` items drawn without replacement with the exponential
/// key method (key = log(u) / p, keep the largest). Returns every index when
/// count >= probs.size(). Order of the result is unspecified.
std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> probs,
                                                             std::size_t count, Rng& rng);

/// Neighbor lists of one hop: for node i of frontier k, its sampled
/// neighbors are slots[offsets[i] .. offsets[i+1]), each a row position in
/// frontier k-1, ordered by descending sampling probability.
struct HopSamples {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> slots;

  std::size_t count(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  std::span<const std::size_t> of(std::size_t i) const {
    return std::span<const std::size_t>(slots).subspan(offsets[i], count(i));
  }
};

/// Nested frontiers B^0 ⊇ ... ⊇ B^K. Each frontier lists the previous one's
/// nodes first, in the same order, so node i of B^k is row i of B^(k-1).
struct MiniBatch {
  std::vector<std::vector<NodeId>> frontiers;  // index k = 0..K
  std::vector<HopSamples> hops;                // index k-1 for hop k

  std::size_t depth() const noexcept { return hops.size(); }
  const std::vector<NodeId>& batch() const { return frontiers.back(); }

  friend bool operator==(const MiniBatch& a, const MiniBatch& b) {
    if (a.frontiers != b.frontiers || a.hops.size() != b.hops.size()) return false;
    for (std::size_t k = 0; k < a.hops.size(); ++k) {
      if (a.hops[k].offsets != b.hops[k].offsets || a.hops[k].slots != b.hops[k].slots) return false;
    }
    return true;
  }
};

struct SamplerCounters {
  std::uint64_t score_evaluations = 0;  // heuristic scores computed
  std::uint64_t merge_steps = 0;        // element comparisons in set intersections
  std::uint64_t cache_hits = 0;
};

/// Stateful sampler with per-node memoized probabilities. Not thread-safe;
/// use one instance per worker. Call new_epoch() to drop the memo.
class Sampler {
 public:
  Sampler(const Graph& g, SamplerConfig cfg);

  const SamplerConfig& config() const noexcept { return cfg_; }
  /// Probabilities over N(v) in CSR order; empty for isolated nodes.
  const std::vector<double>& probabilities(NodeId v);
  /// Sampled neighbors of v for hop k (1-based), by descending probability.
  std::vector<NodeId> sample(NodeId v, std::size_t hop, Rng& rng);
  MiniBatch build(std::span<const NodeId> batch, Rng& rng);

  void new_epoch();
  const SamplerCounters& counters() const noexcept { return counters_; }

 private:
  double score(NodeId v, NodeId i);

  const Graph* g_;
  SamplerConfig cfg_;
  std::vector<std::vector<double>> memo_;
  std::vector<std::uint8_t> memo_ready_;
  SamplerCounters counters_;
};

std::vector<NodeId> sample_neighbors(const Graph& g, NodeId v, std::size_t hop,
                                     const SamplerConfig& cfg, Rng& rng);

MiniBatch build_minibatch(const Graph& g, std::span<const NodeId> batch, const SamplerConfig& cfg,
                          Rng& rng);

/// {"frontiers": [[...], ...], "hops": [{"hop": k, "nodes": [{"node", "neighbors"}]}]}
nlohmann::json minibatch_to_json(const MiniBatch& mb);

GAIN_NAMESPACE_END
