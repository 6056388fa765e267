#include "gain/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

GAIN_NAMESPACE_BEGIN

const char* to_string(Heuristic h) noexcept {
  switch (h) {
    case Heuristic::jaccard:
      return "jaccard";
    case Heuristic::common_neighbors:
      return "cn";
    case Heuristic::degree:
      return "degree";
    case Heuristic::uniform:
      return "uniform";
  }
  return "?";
}

std::optional<Heuristic> parse_heuristic(std::string_view s) noexcept {
  if (s == "jaccard" || s == "jc") return Heuristic::jaccard;
  if (s == "cn" || s == "common_neighbors") return Heuristic::common_neighbors;
  if (s == "degree") return Heuristic::degree;
  if (s == "uniform") return Heuristic::uniform;
  return std::nullopt;
}

void SamplerConfig::validate() const {
  if (sizes.empty()) throw ConfigError("sampler needs at least one hop");
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == 0) throw ConfigError("sample size S_" + std::to_string(k + 1) + " must be >= 1");
  }
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be >= 0");
  if (epsilon == 0 && (heuristic == Heuristic::jaccard || heuristic == Heuristic::common_neighbors)) {
    throw ConfigError(std::string("epsilon must be > 0 for the ") + to_string(heuristic) +
                      " heuristic (scores can all be zero)");
  }
}

namespace {

std::size_t intersection_size(std::span<const NodeId> a, std::span<const NodeId> b,
                              std::uint64_t* steps) {
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (steps) ++*steps;
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return common;
}

bool by_probability(const std::vector<double>& p, std::span<const NodeId> nodes, std::size_t a,
                    std::size_t b) {
  if (p[a] != p[b]) return p[a] > p[b];
  return nodes[a] < nodes[b];
}

}  // namespace

double jaccard(const Graph& g, NodeId v, NodeId i) {
  auto a = g.neighbors(v).nodes;
  auto b = g.neighbors(i).nodes;
  const std::size_t inter = intersection_size(a, b, nullptr);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::size_t common_neighbors(const Graph& g, NodeId v, NodeId i) {
  return intersection_size(g.neighbors(v).nodes, g.neighbors(i).nodes, nullptr);
}

std::vector<double> normalize_scores(std::span<const double> scores,
                                     std::span<const double> weights, double epsilon) {
  if (scores.size() != weights.size()) throw ConfigError("normalize_scores: size mismatch");
  std::vector<double> p(scores.size());
  double total = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    p[j] = scores[j] * weights[j] + epsilon;
    total += p[j];
  }
  if (!(total > 0)) throw std::domain_error("sampling scores sum to zero; use epsilon > 0");
  for (auto& x : p) x /= total;
  return p;
}

Sampler::Sampler(const Graph& g, SamplerConfig cfg)
    : g_(&g), cfg_(std::move(cfg)), memo_(g.num_nodes()), memo_ready_(g.num_nodes(), 0) {}

void Sampler::new_epoch() {
  std::fill(memo_ready_.begin(), memo_ready_.end(), 0);
  for (auto& m : memo_) std::vector<double>().swap(m);
}

double Sampler::score(NodeId v, NodeId i) {
  ++counters_.score_evaluations;
  switch (cfg_.heuristic) {
    case Heuristic::jaccard: {
      auto a = g_->neighbors(v).nodes;
      auto b = g_->neighbors(i).nodes;
      const std::size_t inter = intersection_size(a, b, &counters_.merge_steps);
      const std::size_t uni = a.size() + b.size() - inter;
      return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    case Heuristic::common_neighbors:
      return static_cast<double>(
          intersection_size(g_->neighbors(v).nodes, g_->neighbors(i).nodes, &counters_.merge_steps));
    case Heuristic::degree:
      return static_cast<double>(g_->degree(i));
    case Heuristic::uniform:
      return 0.0;
  }
  return 0.0;
}

const std::vector<double>& Sampler::probabilities(NodeId v) {
  if (v >= g_->num_nodes()) throw DataError("node " + std::to_string(v) + " out of range");
  if (memo_ready_[v]) {
    ++counters_.cache_hits;
    return memo_[v];
  }
  auto nb = g_->neighbors(v);
  std::vector<double> p;
  if (!nb.empty()) {
    if (cfg_.heuristic == Heuristic::uniform) {
      p.assign(nb.size(), 1.0 / static_cast<double>(nb.size()));
    } else {
      std::vector<double> scores(nb.size());
      for (std::size_t j = 0; j < nb.size(); ++j) scores[j] = score(v, nb.nodes[j]);
      p = normalize_scores(scores, nb.weights, cfg_.epsilon);
    }
  }
  memo_[v] = std::move(p);
  memo_ready_[v] = 1;
  return memo_[v];
}

std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> probs,
                                                             std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count >= probs.size()) return idx;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> key(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) {
    double u = unif(rng);
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    key[j] = probs[j] > 0 ? std::log(u) / probs[j] : -std::numeric_limits<double>::infinity();
  }
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return key[a] != key[b] ? key[a] > key[b] : a < b;
                    });
  idx.resize(count);
  return idx;
}

std::vector<NodeId> Sampler::sample(NodeId v, std::size_t hop, Rng& rng) {
  if (hop == 0 || hop > cfg_.sizes.size()) throw ConfigError("hop index out of range");
  const auto& p = probabilities(v);
  auto nb = g_->neighbors(v).nodes;
  if (nb.empty()) return {};
  auto chosen = weighted_sample_without_replacement(p, cfg_.sizes[hop - 1], rng);
  std::sort(chosen.begin(), chosen.end(),
            [&](std::size_t a, std::size_t b) { return by_probability(p, nb, a, b); });
  std::vector<NodeId> out;
  out.reserve(chosen.size());
  for (auto j : chosen) out.push_back(nb[j]);
  return out;
}

MiniBatch Sampler::build(std::span<const NodeId> batch, Rng& rng) {
  if (batch.empty()) throw ConfigError("minibatch needs at least one node");
  const std::size_t K = cfg_.sizes.size();
  MiniBatch mb;
  mb.frontiers.resize(K + 1);
  mb.hops.resize(K);

  std::vector<NodeId>& top = mb.frontiers[K];
  {
    std::unordered_map<NodeId, std::size_t> seen;
    for (NodeId v : batch) {
      if (v >= g_->num_nodes()) throw DataError("batch node " + std::to_string(v) + " out of range");
      if (seen.emplace(v, top.size()).second) top.push_back(v);
    }
  }
  for (std::size_t k = K; k >= 1; --k) {
    const auto& upper = mb.frontiers[k];
    std::vector<NodeId> lower = upper;
    std::unordered_map<NodeId, std::size_t> pos;
    pos.reserve(upper.size() * 4);
    for (std::size_t i = 0; i < lower.size(); ++i) pos.emplace(lower[i], i);
    HopSamples& hs = mb.hops[k - 1];
    hs.offsets.assign(1, 0);
    for (NodeId v : upper) {
      for (NodeId u : sample(v, k, rng)) {
        auto [it, inserted] = pos.emplace(u, lower.size());
        if (inserted) lower.push_back(u);
        hs.slots.push_back(it->second);
      }
      hs.offsets.push_back(hs.slots.size());
    }
    mb.frontiers[k - 1] = std::move(lower);
  }
  return mb;
}

std::optional<std::vector<double>> sampling_probabilities(const Graph& g, NodeId v,
                                                          const SamplerConfig& cfg) {
  Sampler s(g, cfg);
  const auto& p = s.probabilities(v);
  if (p.empty()) return std::nullopt;
  return p;
}

std::vector<NodeId> sample_neighbors(const Graph& g, NodeId v, std::size_t hop,
                                     const SamplerConfig& cfg, Rng& rng) {
  Sampler s(g, cfg);
  return s.sample(v, hop, rng);
}

MiniBatch build_minibatch(const Graph& g, std::span<const NodeId> batch, const SamplerConfig& cfg,
                          Rng& rng) {
  Sampler s(g, cfg);
  return s.build(batch, rng);
}

nlohmann::json minibatch_to_json(const MiniBatch& mb) {
  nlohmann::json j;
  j["frontiers"] = mb.frontiers;
  auto& hops = j["hops"] = nlohmann::json::array();
  for (std::size_t k = 1; k <= mb.depth(); ++k) {
    const auto& hs = mb.hops[k - 1];
    const auto& upper = mb.frontiers[k];
    const auto& lower = mb.frontiers[k - 1];
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < upper.size(); ++i) {
      std::vector<NodeId> nb;
      for (auto s : hs.of(i)) nb.push_back(lower[s]);
      nodes.push_back({{"node", upper[i]}, {"neighbors", nb}});
    }
    hops.push_back({{"hop", k}, {"nodes", std::move(nodes)}});
  }
  return j;
}

GAIN_NAMESPACE_END
