#include "gain/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "gain/io.hpp"

GAIN_NAMESPACE_BEGIN

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
    default:
      return "none";
  }
}

std::optional<Split> parse_split(std::string_view s) noexcept {
  if (s == "train") return Split::train;
  if (s == "val" || s == "valid" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

Graph Graph::from_edges(std::size_t num_nodes, std::span<const WeightedEdge> edges,
                        bool undirected) {
  std::vector<WeightedEdge> arcs;
  arcs.reserve(edges.size() * (undirected ? 2 : 1));
  bool weighted = false;
  for (const auto& e : edges) {
    if (e.src >= num_nodes || e.dst >= num_nodes) {
      throw DataError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                      ") out of range for " + std::to_string(num_nodes) + " nodes");
    }
    if (!(e.weight >= 0) || !std::isfinite(e.weight)) {
      throw DataError("negative or non-finite edge weight");
    }
    if (e.weight != 1.0) weighted = true;
    arcs.push_back(e);
    if (undirected && e.src != e.dst) arcs.push_back({e.dst, e.src, e.weight});
  }
  std::sort(arcs.begin(), arcs.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
  });

  Graph g;
  g.num_nodes_ = num_nodes;
  g.offsets_.assign(num_nodes + 1, 0);
  for (std::size_t i = 0; i < arcs.size(); ++i) {
    if (i > 0 && arcs[i].src == arcs[i - 1].src && arcs[i].dst == arcs[i - 1].dst) {
      g.weights_.back() += arcs[i].weight;
      weighted = true;
      continue;
    }
    g.neighbors_.push_back(arcs[i].dst);
    g.weights_.push_back(arcs[i].weight);
    ++g.offsets_[arcs[i].src + 1];
  }
  std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
  g.weighted_ = weighted;
  return g;
}

Neighborhood Graph::neighbors(NodeId v) const {
  if (v >= num_nodes_) throw DataError("node " + std::to_string(v) + " out of range");
  const std::size_t b = offsets_[v], e = offsets_[v + 1];
  return {std::span<const NodeId>(neighbors_).subspan(b, e - b),
          std::span<const double>(weights_).subspan(b, e - b)};
}

bool Graph::has_arc(NodeId u, NodeId v) const {
  auto nb = neighbors(u).nodes;
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::vector<NodeId> Graph::nodes_in(Split s) const {
  std::vector<NodeId> out;
  for (std::size_t v = 0; v < node_split.size(); ++v) {
    if (node_split[v] == s) out.push_back(static_cast<NodeId>(v));
  }
  return out;
}

std::vector<LabeledEdge> Graph::edges_in(Split s) const {
  std::vector<LabeledEdge> out;
  for (const auto& e : labeled_edges) {
    if (e.split == s) out.push_back(e);
  }
  return out;
}

void Graph::validate() const {
  if (offsets_.size() != num_nodes_ + 1 || offsets_.front() != 0 ||
      offsets_.back() != neighbors_.size()) {
    throw DataError("CSR offsets inconsistent with neighbor array");
  }
  if (weights_.size() != neighbors_.size()) throw DataError("CSR weights misaligned");
  for (std::size_t v = 0; v < num_nodes_; ++v) {
    if (offsets_[v + 1] < offsets_[v]) throw DataError("CSR offsets decrease at node " + std::to_string(v));
  }
  for (std::size_t i = 0; i < neighbors_.size(); ++i) {
    if (neighbors_[i] >= num_nodes_) throw DataError("neighbor index out of range");
    if (!(weights_[i] >= 0)) throw DataError("negative edge weight");
  }
  if (features.rows() != num_nodes_ && !(num_nodes_ == 0 && features.empty())) {
    throw DataError("feature rows (" + std::to_string(features.rows()) + ") != num_nodes (" +
                    std::to_string(num_nodes_) + ")");
  }
  if (!features.all_finite()) throw DataError("non-finite feature value");
  if (labels.kind != LabelKind::none && labels.present.size() != num_nodes_) {
    throw DataError("label table size != num_nodes");
  }
  if (!node_split.empty()) {
    if (node_split.size() != num_nodes_) throw DataError("node split size != num_nodes");
    for (std::size_t v = 0; v < num_nodes_; ++v) {
      if (node_split[v] != Split::none && !labels.has(static_cast<NodeId>(v))) {
        throw DataError("node " + std::to_string(v) + " is in a split but has no label");
      }
    }
  }
  for (const auto& e : labeled_edges) {
    if (e.src >= num_nodes_ || e.dst >= num_nodes_) throw DataError("labeled edge out of range");
    if (e.label != 0 && e.label != 1) throw DataError("edge label must be 0 or 1");
  }
  if (!node_kind.empty()) {
    if (node_kind.size() != num_nodes_) throw DataError("node kind table size != num_nodes");
    if (!homogeneous) {
      for (std::size_t v = 0; v < num_nodes_; ++v) {
        for (std::size_t i = offsets_[v]; i < offsets_[v + 1]; ++i) {
          if (node_kind[v] == node_kind[neighbors_[i]]) {
            throw DataError("bipartite graph has a same-kind edge (" + std::to_string(v) + ", " +
                            std::to_string(neighbors_[i]) + ")");
          }
        }
      }
      for (const auto& e : labeled_edges) {
        if (node_kind[e.src] == node_kind[e.dst]) {
          throw DataError("bipartite labeled edge connects nodes of the same kind");
        }
      }
    }
  }
}

namespace {

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == '\t' || line[i] == ' ' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != '\t' && line[j] != ' ' && line[j] != '\r') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

struct LineReader {
  explicit LineReader(const std::filesystem::path& p) : path(p), in(p) {
    if (!in) throw DataError("cannot open " + p.string());
  }
  // Next non-blank, non-comment line split into fields.
  bool next(std::vector<std::string_view>& out) {
    while (std::getline(in, line)) {
      ++line_no;
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos || line[b] == '#') continue;
      out = fields(line);
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  }
  std::uint64_t index(std::string_view s, std::size_t limit) const {
    std::uint64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      fail("malformed node index '" + std::string(s) + "'");
    }
    if (v >= limit) {
      fail("node index " + std::to_string(v) + " out of range (" + std::to_string(limit) +
           " nodes)");
    }
    return v;
  }
  double number(std::string_view s) const {
    double v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      fail("malformed number '" + std::string(s) + "'");
    }
    return v;
  }

  std::filesystem::path path;
  std::ifstream in;
  std::string line;
  std::size_t line_no = 0;
};

bool is_bitstring(std::string_view s) {
  return s.size() >= 2 && std::all_of(s.begin(), s.end(), [](char c) { return c == '0' || c == '1'; });
}

Labels read_labels(const std::filesystem::path& path, std::size_t n, LabelKind forced) {
  LineReader r(path);
  std::vector<std::pair<NodeId, std::string>> rows;
  std::vector<std::size_t> lines;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    if (f.size() != 2) r.fail("expected 'node<TAB>label', got " + std::to_string(f.size()) + " fields");
    rows.emplace_back(static_cast<NodeId>(r.index(f[0], n)), std::string(f[1]));
    lines.push_back(r.line_no);
  }
  LabelKind kind = forced;
  if (kind == LabelKind::none) {
    const bool multi = !rows.empty() && std::all_of(rows.begin(), rows.end(), [&](const auto& x) {
      return is_bitstring(x.second) && x.second.size() == rows.front().second.size();
    });
    kind = multi ? LabelKind::multi : LabelKind::single;
  }
  Labels labels;
  labels.kind = kind;
  labels.present.assign(n, 0);
  auto fail_at = [&](std::size_t i, const std::string& what) {
    throw DataError(path.string() + ":" + std::to_string(lines[i]) + ": " + what);
  };
  if (kind == LabelKind::multi) {
    labels.num_classes = rows.empty() ? 0 : rows.front().second.size();
    labels.multi.assign(n * labels.num_classes, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& [v, s] = rows[i];
      if (s.size() != labels.num_classes || !std::all_of(s.begin(), s.end(), [](char c) {
            return c == '0' || c == '1';
          })) {
        fail_at(i, "multilabel bitstring of length " + std::to_string(labels.num_classes) +
                       " expected, got '" + s + "'");
      }
      if (labels.present[v]) fail_at(i, "duplicate label for node " + std::to_string(v));
      labels.present[v] = 1;
      for (std::size_t c = 0; c < s.size(); ++c) labels.multi[v * labels.num_classes + c] = s[c] == '1';
    }
  } else {
    labels.single.assign(n, -1);
    std::int32_t max_label = -1;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& [v, s] = rows[i];
      std::int32_t c = 0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), c);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size() || c < 0) {
        fail_at(i, "malformed class label '" + s + "'");
      }
      if (labels.present[v]) fail_at(i, "duplicate label for node " + std::to_string(v));
      labels.present[v] = 1;
      labels.single[v] = c;
      max_label = std::max(max_label, c);
    }
    labels.num_classes = static_cast<std::size_t>(max_label + 1);
  }
  return labels;
}

void read_splits(const std::filesystem::path& path, Graph& g) {
  LineReader r(path);
  std::vector<std::string_view> f;
  const std::size_t n = g.num_nodes();
  while (r.next(f)) {
    if (f.size() == 2) {
      if (g.node_split.empty()) g.node_split.assign(n, Split::none);
      const auto v = r.index(f[0], n);
      auto s = parse_split(f[1]);
      if (!s) r.fail("unknown split '" + std::string(f[1]) + "'");
      g.node_split[v] = *s;
    } else if (f.size() == 4) {
      LabeledEdge e;
      e.src = static_cast<NodeId>(r.index(f[0], n));
      e.dst = static_cast<NodeId>(r.index(f[1], n));
      if (f[2] != "0" && f[2] != "1") r.fail("edge label must be 0 or 1");
      e.label = f[2] == "1";
      auto s = parse_split(f[3]);
      if (!s) r.fail("unknown split '" + std::string(f[3]) + "'");
      e.split = *s;
      g.labeled_edges.push_back(e);
    } else {
      r.fail("expected 2 (node split) or 4 (edge split) fields, got " + std::to_string(f.size()));
    }
  }
}

void read_node_kinds(const std::filesystem::path& path, Graph& g) {
  LineReader r(path);
  std::vector<std::string_view> f;
  std::map<std::string, std::uint8_t, std::less<>> ids;
  g.node_kind.assign(g.num_nodes(), 0);
  std::vector<std::uint8_t> seen(g.num_nodes(), 0);
  while (r.next(f)) {
    if (f.size() != 2) r.fail("expected 'node<TAB>kind'");
    const auto v = r.index(f[0], g.num_nodes());
    auto it = ids.find(f[1]);
    if (it == ids.end()) it = ids.emplace(std::string(f[1]), static_cast<std::uint8_t>(ids.size())).first;
    g.node_kind[v] = it->second;
    seen[v] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw DataError(path.string() + ": every node needs a kind");
  }
}

}  // namespace

std::vector<WeightedEdge> read_topology(const std::filesystem::path& path, std::size_t num_nodes) {
  LineReader r(path);
  std::vector<WeightedEdge> edges;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    if (f.size() != 2 && f.size() != 3) {
      r.fail("expected 'src<TAB>dst[<TAB>weight]', got " + std::to_string(f.size()) + " fields");
    }
    WeightedEdge e;
    e.src = static_cast<NodeId>(r.index(f[0], num_nodes));
    e.dst = static_cast<NodeId>(r.index(f[1], num_nodes));
    if (f.size() == 3) {
      e.weight = r.number(f[2]);
      if (!(e.weight >= 0) || !std::isfinite(e.weight)) r.fail("edge weight must be finite and >= 0");
    }
    edges.push_back(e);
  }
  return edges;
}

Graph load_graph(const GraphFiles& files, const LoadOptions& options) {
  Tensor features = read_features(files.features);
  const std::size_t n = features.rows();
  auto edges = read_topology(files.topology, n);
  Graph g = Graph::from_edges(n, edges, options.undirected);
  g.features = std::move(features);
  if (!files.labels.empty()) g.labels = read_labels(files.labels, n, options.label_kind);
  if (!files.splits.empty()) read_splits(files.splits, g);
  if (!files.node_kinds.empty()) read_node_kinds(files.node_kinds, g);
  g.homogeneous = files.node_kinds.empty() || options.homogeneous;
  g.validate();
  return g;
}

GraphFiles dataset_files(const std::filesystem::path& dir) {
  GraphFiles f;
  f.topology = dir / "topology.tsv";
  f.features = dir / "features.bin";
  f.labels = dir / "labels.tsv";
  f.splits = dir / "splits.tsv";
  if (std::filesystem::exists(dir / "node_kinds.tsv")) f.node_kinds = dir / "node_kinds.tsv";
  return f;
}

void write_topology(const std::filesystem::path& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "# src\tdst\tweight (undirected)\n";
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    auto nb = g.neighbors(static_cast<NodeId>(v));
    for (std::size_t i = 0; i < nb.size(); ++i) {
      if (nb.nodes[i] < v) continue;  // each undirected edge once
      out << v << '\t' << nb.nodes[i];
      if (g.weighted()) out << '\t' << nb.weights[i];
      out << '\n';
    }
  }
}

void write_labels(const std::filesystem::path& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const auto& L = g.labels;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    if (!L.has(static_cast<NodeId>(v))) continue;
    out << v << '\t';
    if (L.kind == LabelKind::multi) {
      for (auto bit : L.multi_row(static_cast<NodeId>(v))) out << (bit ? '1' : '0');
    } else {
      out << L.single[v];
    }
    out << '\n';
  }
}

void write_splits(const std::filesystem::path& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (std::size_t v = 0; v < g.node_split.size(); ++v) {
    if (g.node_split[v] != Split::none) out << v << '\t' << to_string(g.node_split[v]) << '\n';
  }
  for (const auto& e : g.labeled_edges) {
    out << e.src << '\t' << e.dst << '\t' << e.label << '\t' << to_string(e.split) << '\n';
  }
}

void write_dataset(const std::filesystem::path& dir, const Graph& g) {
  std::filesystem::create_directories(dir);
  const auto files = dataset_files(dir);
  write_topology(files.topology, g);
  write_features(files.features, g.features);
  write_labels(files.labels, g);
  write_splits(files.splits, g);
}

Graph generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  auto check_prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
  };
  check_prob(spec.p_in, "p_in");
  check_prob(spec.p_out, "p_out");
  check_prob(spec.train_fraction, "train_fraction");
  check_prob(spec.val_fraction, "val_fraction");
  if (spec.train_fraction + spec.val_fraction > 1.0) {
    throw ConfigError("train_fraction + val_fraction exceeds 1");
  }
  if (spec.block_sizes.empty()) throw ConfigError("at least one block is required");

  std::vector<std::int32_t> block;
  for (std::size_t b = 0; b < spec.block_sizes.size(); ++b) {
    block.insert(block.end(), spec.block_sizes[b], static_cast<std::int32_t>(b));
  }
  const std::size_t n = block.size();

  std::mt19937_64 topo_rng(derive_seed(seed, "synthetic/topology"));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<WeightedEdge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = block[u] == block[v] ? spec.p_in : spec.p_out;
      if (unif(topo_rng) < p) edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v), 1.0});
    }
  }
  Graph g = Graph::from_edges(n, edges, true);

  std::mt19937_64 feat_rng(derive_seed(seed, "synthetic/features"));
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t f = spec.feature_dim;
  std::vector<std::vector<double>> means(spec.block_sizes.size(), std::vector<double>(f));
  for (auto& m : means) {
    double norm = 0;
    for (auto& x : m) {
      x = normal(feat_rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : m) x = norm > 0 ? x / norm * spec.class_separation : 0.0;
  }
  g.features = Tensor::matrix(n, f);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < f; ++c) {
      g.features(v, c) = static_cast<Real>(means[block[v]][c] + spec.noise_std * normal(feat_rng));
    }
  }

  g.labels.kind = LabelKind::single;
  g.labels.num_classes = spec.block_sizes.size();
  g.labels.single = block;
  g.labels.present.assign(n, 1);

  std::mt19937_64 split_rng(derive_seed(seed, "synthetic/splits"));
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * n));
  g.node_split.assign(n, Split::test);
  for (std::size_t i = 0; i < n; ++i) {
    g.node_split[order[i]] = i < n_train ? Split::train : i < n_train + n_val ? Split::val : Split::test;
  }

  if (spec.labeled_edges > 0 && n >= 2) {
    std::mt19937_64 edge_rng(derive_seed(seed, "synthetic/labeled_edges"));
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
    for (std::size_t i = 0; i < spec.labeled_edges; ++i) {
      LabeledEdge e;
      e.src = pick(edge_rng);
      do {
        e.dst = pick(edge_rng);
      } while (e.dst == e.src);
      e.label = block[e.src] == block[e.dst] ? 1 : 0;
      const double u = unif(edge_rng);
      e.split = u < spec.train_fraction ? Split::train
                : u < spec.train_fraction + spec.val_fraction ? Split::val
                                                              : Split::test;
      g.labeled_edges.push_back(e);
    }
  }
  g.validate();
  return g;
}

GAIN_NAMESPACE_END
